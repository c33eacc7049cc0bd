//! The closed-loop protocol, Monte-Carlo trials, and metric aggregation.
//!
//! One trial runs every policy over the same ground-truth trajectories
//! (paired comparison); observation noise comes from per-policy RNG streams
//! because different selections see different channels. Per step the loop is:
//! select a super arm (policy rule), record expected reward and regret
//! against the exhaustive optimum, observe the selected channels, run one
//! IMM-UKF step per selected channel and fuse, predict the next state, and
//! update the bandit state. The warm start — every channel observed once per
//! group — happens before `t = 1` and is excluded from regret accounting.
//!
//! Trials are independent work units spread over a worker pool; aggregation
//! is a deterministic reduction in trial order, so results are identical for
//! any worker count.

use std::io::Write as IoWrite;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use nalgebra::{DMatrix, Matrix2, Vector2, Vector4};
use serde::Serialize;

use crate::bandit::{
    arm_value, baseline_update, feasible_arms, fuse_indices, predict_all, select, ucb_index,
    update_group, GroupState, PolicyKind, PolicyParams, SelectionContext, SuperArm,
};
use crate::bpso::SwarmParams;
use crate::dynamics::{self, TargetPlan, TargetState};
use crate::error::{Error, Result};
use crate::geometry::{self, RadarLayout, ScatterModel};
use crate::rng::{name_tag, stream, StreamKind};
use crate::sensing::{self, MeasurementBatch};
use crate::tracking::{self, ChannelFilter, FusedEstimate, ModelBank};

/// A selected channel whose per-model position variance exceeds this factor
/// times the initial variance is re-seeded like a freshly selected one.
const STALE_COV_FACTOR: f64 = 4.0;

/// One policy to run: a stable name, its selection rule, its parameters.
#[derive(Clone, Debug)]
pub struct PolicySpec {
    pub name: String,
    pub kind: PolicyKind,
    pub params: PolicyParams,
}

/// A fully validated, runnable scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub layout: RadarLayout,
    pub scatter: ScatterModel,
    pub plans: Vec<TargetPlan>,
    /// Target weights Ω (simplex).
    pub weights: Vec<f64>,
    pub horizon: usize,
    pub sample_interval: f64,
    pub m_s: usize,
    pub n_s: usize,
    /// One filter bank per target (process noise may differ).
    pub banks: Vec<ModelBank>,
    pub swarm: SwarmParams,
    /// Base measurement covariance σ₀ = diag(σ²_r(0), σ²_φ(0)).
    pub sigma0: Matrix2<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicySpec>,
}

impl Scenario {
    pub fn n_targets(&self) -> usize {
        self.plans.len()
    }
}

/// Per-step outcome of one policy in one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub arm: SuperArm,
    /// μ_t^π — expected reward of the chosen arm under the true SINR.
    pub reward: f64,
    /// μ*_t — expected reward of the optimal arm.
    pub optimal: f64,
    pub cum_regret: f64,
    /// Squared position error per target, fused estimate vs truth.
    pub sq_err: Vec<f64>,
    /// Whether the whole super arm equals the oracle's selection.
    pub matched_best: bool,
    /// Channels dropped from fusion this step.
    pub diverged: u32,
}

/// One policy's record over a full trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub policy: String,
    pub trial: u64,
    pub steps: Vec<StepRecord>,
    /// Raw measurement rows, retained only when debug output is requested.
    pub measurements: Option<Vec<MeasRow>>,
}

/// Flattened measurement entry for the debug CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasRow {
    pub t: usize,
    pub target: usize,
    pub channel: (usize, usize),
    pub range_sum: f64,
    pub azimuth: f64,
    pub gamma: f64,
    pub noise_cov: [f64; 2],
}

/// Trial-scoped shared context: truth, true SINR, bounds, oracle selections.
pub struct TrialContext {
    /// `truths[k][t-1]`.
    pub truths: Vec<Vec<TargetState>>,
    /// `sinr[t-1][k]` — M×N true SINR matrix.
    pub sinr: Vec<Vec<DMatrix<f64>>>,
    /// Per-target `(s_min, s_max)`.
    pub bounds: Vec<(f64, f64)>,
    /// Oracle argmax arm per step.
    pub oracle_arms: Vec<SuperArm>,
    /// μ*_t per step.
    pub optimal_reward: Vec<f64>,
}

impl TrialContext {
    pub fn build(scenario: &Scenario, master_seed: u64, trial: u64) -> Result<Self> {
        let k_count = scenario.n_targets();
        let (m, n) = (scenario.layout.n_tx(), scenario.layout.n_rx());
        let mut truths = Vec::with_capacity(k_count);
        for (k, plan) in scenario.plans.iter().enumerate() {
            let mut rng = stream(master_seed, trial, StreamKind::Truth, k as u64);
            truths.push(dynamics::generate_truth(plan, scenario.sample_interval, scenario.horizon, &mut rng)?);
        }
        let mut bounds = Vec::with_capacity(k_count);
        for k in 0..k_count {
            bounds.push(geometry::sinr_bounds(&scenario.layout, &scenario.scatter, &truths[k], k)?);
        }
        let mut sinr = Vec::with_capacity(scenario.horizon);
        let mut oracle_arms = Vec::with_capacity(scenario.horizon);
        let mut optimal_reward = Vec::with_capacity(scenario.horizon);
        // The optimum is evaluated through expected_reward — the same
        // summation every policy's reward goes through — so the oracle's
        // per-step regret is exactly zero and no regret increment can go
        // negative by a rounding disagreement between two formulas.
        let arms = feasible_arms(m, n, scenario.m_s, scenario.n_s);
        for ti in 0..scenario.horizon {
            let mut per_k = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let pos = truths[k][ti].position();
                let mut mat = DMatrix::zeros(m, n);
                for mi in 0..m {
                    for ni in 0..n {
                        mat[(mi, ni)] =
                            geometry::true_sinr(&scenario.layout, &scenario.scatter, pos, mi, ni, k)?;
                    }
                }
                per_k.push(mat);
            }
            let mut best: Option<(&SuperArm, f64)> = None;
            for arm in &arms {
                let v = expected_reward(arm, &per_k, &scenario.weights);
                match &best {
                    Some((_, bv)) if v <= *bv => {}
                    _ => best = Some((arm, v)),
                }
            }
            let (arm, value) = best.expect("feasible arms non-empty");
            optimal_reward.push(value);
            oracle_arms.push(arm.clone());
            sinr.push(per_k);
        }
        Ok(Self { truths, sinr, bounds, oracle_arms, optimal_reward })
    }
}

/// Expected reward `Σ_k Ω_k Σ_{(m,n)∈A} S^k_mn` of an arm under true SINR.
pub fn expected_reward(arm: &SuperArm, sinr_per_target: &[DMatrix<f64>], omega: &[f64]) -> f64 {
    sinr_per_target
        .iter()
        .zip(omega)
        .map(|(s, w)| w * arm_value(arm, s))
        .sum()
}

/// Per-target tracking bookkeeping inside one policy's loop.
struct TargetTracking {
    filters: Vec<ChannelFilter>,
    /// Step of the last successful update per channel; `None` after a
    /// divergence forces a re-initialization.
    last_step: Vec<Option<usize>>,
    fused: FusedEstimate,
    x_est_prev: TargetState,
    /// X̄_t — predicted state for the upcoming step.
    x_pred: Vector4<f64>,
}

/// Runs one policy through one trial against a shared context.
fn run_policy_trial(
    scenario: &Scenario,
    policy: &PolicySpec,
    ctx: &TrialContext,
    master_seed: u64,
    trial: u64,
    keep_measurements: bool,
) -> Result<TrialRecord> {
    let k_count = scenario.n_targets();
    let (m, n) = (scenario.layout.n_tx(), scenario.layout.n_rx());
    let tag = name_tag(&policy.name);
    let mut obs_rng = stream(master_seed, trial, StreamKind::Observation, tag);
    let mut pol_rng = stream(master_seed, trial, StreamKind::Policy, tag);

    let needs_bandit = matches!(policy.kind, PolicyKind::MgCrbCl | PolicyKind::Ucb1 | PolicyKind::EpsGreedy);

    // Warm start: observe every channel once per group; Ŷ takes the first
    // sample, d starts at 1. Pre-horizon, so no regret is accumulated.
    let mut groups: Vec<GroupState> = Vec::new();
    if needs_bandit {
        let mut warm_rng = stream(master_seed, trial, StreamKind::WarmStart, tag);
        for k in 0..k_count {
            let mut first = DMatrix::zeros(m, n);
            for mi in 0..m {
                for ni in 0..n {
                    first[(mi, ni)] = sensing::sample_sinr(ctx.sinr[0][k][(mi, ni)], &mut warm_rng)?;
                }
            }
            groups.push(GroupState::warm_start(k, first));
        }
    }

    // Tracking state: all channel filters start from the configured initial
    // estimate; the first prediction mixes the noiseless transitions under
    // the initial model probabilities.
    let mut tracking: Vec<TargetTracking> = (0..k_count)
        .map(|k| {
            let bank = &scenario.banks[k];
            let x0 = scenario.plans[k].initial_state.as_vector();
            let p0 = scenario.plans[k].initial_covariance();
            let filters: Vec<ChannelFilter> = (0..m * n)
                .map(|f| ChannelFilter::init((f / n, f % n), k, x0, p0, bank))
                .collect();
            let fused = FusedEstimate { state: x0, model_prob: bank.initial_model_prob.clone() };
            let x_pred = tracking::predict_state(&fused, bank);
            TargetTracking {
                filters,
                last_step: vec![Some(0); m * n],
                x_est_prev: TargetState::from_vector(&x0),
                x_pred,
                fused,
            }
        })
        .collect();

    let mut steps = Vec::with_capacity(scenario.horizon);
    let mut meas_rows = if keep_measurements { Some(Vec::new()) } else { None };
    let mut prev_arm: Option<SuperArm> = None;
    let mut cum_regret = 0.0;

    for t in 1..=scenario.horizon {
        // --- Step 3: predict SINR states and select the super arm. ---
        let mut y_bars: Vec<DMatrix<f64>> = Vec::new();
        let arm = match &policy.kind {
            PolicyKind::Best => ctx.oracle_arms[t - 1].clone(),
            PolicyKind::Fixed(a) => a.clone(),
            PolicyKind::MgCrbCl => {
                let mut per_group = Vec::with_capacity(k_count);
                for k in 0..k_count {
                    let y_bar = predict_all(
                        &groups[k],
                        &TargetState::from_vector(&tracking[k].x_pred),
                        &tracking[k].x_est_prev,
                        &scenario.layout,
                        &scenario.scatter,
                        policy.params.alpha,
                    )?;
                    per_group.push(ucb_index(&y_bar, &groups[k].d, t, policy.params.beta)?);
                    y_bars.push(y_bar);
                }
                let fused = fuse_indices(&per_group, &scenario.weights)?;
                let sel_ctx = SelectionContext {
                    m_s: scenario.m_s,
                    n_s: scenario.n_s,
                    fused_index: Some(&fused),
                    fused_value: None,
                    fused_true_sinr: None,
                    swarm: &scenario.swarm,
                    prev_arm: prev_arm.as_ref(),
                    epsilon: 0.0,
                };
                select(&policy.kind, &sel_ctx, &mut pol_rng)?
            }
            PolicyKind::Ucb1 => {
                let mut per_group = Vec::with_capacity(k_count);
                for k in 0..k_count {
                    per_group.push(ucb_index(&groups[k].y_hat, &groups[k].d, t, policy.params.beta)?);
                }
                let fused = fuse_indices(&per_group, &scenario.weights)?;
                let sel_ctx = SelectionContext {
                    m_s: scenario.m_s,
                    n_s: scenario.n_s,
                    fused_index: Some(&fused),
                    fused_value: None,
                    fused_true_sinr: None,
                    swarm: &scenario.swarm,
                    prev_arm: prev_arm.as_ref(),
                    epsilon: 0.0,
                };
                select(&policy.kind, &sel_ctx, &mut pol_rng)?
            }
            PolicyKind::EpsGreedy => {
                let values: Vec<DMatrix<f64>> = groups.iter().map(|g| g.y_hat.clone()).collect();
                let fused = fuse_indices(&values, &scenario.weights)?;
                let sel_ctx = SelectionContext {
                    m_s: scenario.m_s,
                    n_s: scenario.n_s,
                    fused_index: None,
                    fused_value: Some(&fused),
                    fused_true_sinr: None,
                    swarm: &scenario.swarm,
                    prev_arm: prev_arm.as_ref(),
                    epsilon: policy.params.epsilon,
                };
                select(&policy.kind, &sel_ctx, &mut pol_rng)?
            }
        };
        arm.validate(scenario.m_s, scenario.n_s)?;

        let reward = expected_reward(&arm, &ctx.sinr[t - 1], &scenario.weights);
        cum_regret += ctx.optimal_reward[t - 1] - reward;
        let matched_best = arm == ctx.oracle_arms[t - 1];

        // --- Step 4: observe the selected channels. ---
        let truths_t: Vec<TargetState> = (0..k_count).map(|k| ctx.truths[k][t - 1]).collect();
        let batch = sensing::observe(
            &scenario.layout,
            &scenario.scatter,
            &arm,
            &truths_t,
            &ctx.bounds,
            &scenario.sigma0,
            t,
            &mut obs_rng,
        )?;
        if let Some(rows) = meas_rows.as_mut() {
            for (z, g) in batch.measurements.iter().zip(&batch.sinr_samples) {
                rows.push(MeasRow {
                    t,
                    target: z.target,
                    channel: z.channel,
                    range_sum: z.range_sum,
                    azimuth: z.azimuth,
                    gamma: *g,
                    noise_cov: z.noise_cov,
                });
            }
        }

        // --- Step 1: filter each selected channel, fuse, predict. ---
        let mut diverged = 0u32;
        let mut sq_err = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let bank = &scenario.banks[k];
            let trk = &mut tracking[k];
            let mut updated_idx: Vec<usize> = Vec::new();
            let p0 = scenario.plans[k].initial_covariance();
            let stale_var = STALE_COV_FACTOR * p0[(0, 0)].max(p0[(2, 2)]);
            for z in batch.measurements.iter().filter(|z| z.target == k) {
                let (mi, ni) = z.channel;
                let fi = mi * n + ni;
                // Channels idle since the last step re-seed from the fused
                // estimate with the initial covariance. The same reset
                // applies when a continuously selected channel's position
                // covariance has run away: a channel blind along one axis
                // (target near its TX-RX baseline) pumps process noise into
                // that axis without bound, and the resulting huge gains
                // would swing its state by tens of meters per step.
                let stale = trk.filters[fi]
                    .covs
                    .iter()
                    .any(|c| c[(0, 0)].max(c[(2, 2)]) > stale_var);
                if trk.last_step[fi] != Some(t - 1) || stale {
                    let state = trk.fused.state;
                    let prob = trk.fused.model_prob.clone();
                    trk.filters[fi].reinit(state, p0, prob);
                }
                let zvec = Vector2::new(z.range_sum, z.azimuth);
                let r = Matrix2::new(z.noise_cov[0], 0.0, 0.0, z.noise_cov[1]);
                match tracking::imm_step(&trk.filters[fi], bank, &zvec, &r, &scenario.layout, mi, ni) {
                    Ok(next) => {
                        trk.filters[fi] = next;
                        trk.last_step[fi] = Some(t);
                        updated_idx.push(fi);
                    }
                    Err(Error::FilterDivergence { .. }) => {
                        diverged += 1;
                        trk.last_step[fi] = None;
                    }
                    Err(e) => return Err(e),
                }
            }
            let fused = if updated_idx.is_empty() {
                // Every selected channel diverged: coast on the prediction.
                FusedEstimate { state: trk.x_pred, model_prob: trk.fused.model_prob.clone() }
            } else {
                let refs: Vec<&ChannelFilter> = updated_idx.iter().map(|fi| &trk.filters[*fi]).collect();
                let fused = tracking::fuse_channels(&refs)?;
                // Distributed fusion with feedback: selected channels restart
                // from the fused state next step, covariances channel-local.
                for fi in &updated_idx {
                    trk.filters[*fi].feedback(fused.state, fused.model_prob.clone());
                }
                fused
            };
            let truth = &ctx.truths[k][t - 1];
            let dx = fused.state[0] - truth.x;
            let dy = fused.state[2] - truth.y;
            sq_err.push(dx * dx + dy * dy);
            trk.x_est_prev = TargetState::from_vector(&fused.state);
            trk.x_pred = tracking::predict_state(&fused, bank);
            trk.fused = fused;
        }

        // --- Step 2: update the bandit state with the new samples. ---
        if needs_bandit {
            update_bandit_state(policy, &arm, &batch, &mut groups, &y_bars)?;
        }

        steps.push(StepRecord {
            t,
            reward,
            optimal: ctx.optimal_reward[t - 1],
            cum_regret,
            sq_err,
            matched_best,
            diverged,
            arm: arm.clone(),
        });
        prev_arm = Some(arm);
    }

    Ok(TrialRecord { policy: policy.name.clone(), trial, steps, measurements: meas_rows })
}

fn update_bandit_state(
    policy: &PolicySpec,
    arm: &SuperArm,
    batch: &MeasurementBatch,
    groups: &mut [GroupState],
    y_bars: &[DMatrix<f64>],
) -> Result<()> {
    match policy.kind {
        PolicyKind::MgCrbCl => {
            for (k, group) in groups.iter_mut().enumerate() {
                let gamma: Vec<((usize, usize), f64)> = batch
                    .measurements
                    .iter()
                    .zip(&batch.sinr_samples)
                    .filter(|(z, _)| z.target == k)
                    .map(|(z, g)| (z.channel, *g))
                    .collect();
                *group = update_group(group, arm, &gamma, &y_bars[k], policy.params.bar_alpha)?;
            }
        }
        PolicyKind::Ucb1 | PolicyKind::EpsGreedy => {
            for (z, g) in batch.measurements.iter().zip(&batch.sinr_samples) {
                let group = &mut groups[z.target];
                let (mi, ni) = z.channel;
                group.y_hat[(mi, ni)] =
                    baseline_update(group.y_hat[(mi, ni)], *g, true, policy.params.bar_alpha_star);
                group.d[(mi, ni)] += 1;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Runs a single policy through one freshly built trial context.
pub fn run_trial(
    scenario: &Scenario,
    policy: &PolicySpec,
    master_seed: u64,
    trial: u64,
) -> Result<TrialRecord> {
    let ctx = TrialContext::build(scenario, master_seed, trial)?;
    run_policy_trial(scenario, policy, &ctx, master_seed, trial, false)
}

/// Per-policy summary metrics of a run.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PolicySummary {
    pub name: String,
    /// Ω-weighted time-averaged RMSE (meters).
    pub armse: f64,
    pub armse_per_target: Vec<f64>,
    /// Mean cumulative regret at the horizon (linear SINR units).
    pub total_regret: f64,
    /// Average rate of selecting exactly the oracle arm.
    pub asr: f64,
}

/// Whole-run summary. Wall-clock time is reported on stdout only so the
/// serialized summary stays byte-identical across reruns and worker counts.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub trials: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicySummary>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Means over trials at one step, per policy (aligned with the run's policy
/// order): expected reward, cumulative regret, RMSE per target.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateStep {
    pub t: usize,
    pub reward: Vec<f64>,
    pub regret: Vec<f64>,
    /// `rmse[p][k]`.
    pub rmse: Vec<Vec<f64>>,
}

pub struct ExperimentOutput {
    pub summary: RunSummary,
    pub steps: Vec<AggregateStep>,
    pub policies: Vec<PolicySpec>,
    pub weights: Vec<f64>,
    /// `records[trial][policy]`, retained only when debug output is on.
    pub records: Option<Vec<Vec<TrialRecord>>>,
}

/// Runs `m_c` Monte-Carlo trials of every (selected) policy.
pub fn run_experiment(
    scenario: &Scenario,
    policy_filter: Option<&[String]>,
    m_c: usize,
    master_seed: u64,
    workers: usize,
    keep_records: bool,
) -> Result<ExperimentOutput> {
    if m_c == 0 {
        return Err(Error::config("at least one trial required"));
    }
    let policies: Vec<PolicySpec> = match policy_filter {
        None => scenario.policies.clone(),
        Some(names) => {
            let mut out = Vec::new();
            for name in names {
                let found = scenario
                    .policies
                    .iter()
                    .find(|p| &p.name == name)
                    .ok_or_else(|| Error::config(format!("unknown policy '{name}'")))?;
                out.push(found.clone());
            }
            out
        }
    };
    if policies.is_empty() {
        return Err(Error::config("no policies selected"));
    }

    let started = std::time::Instant::now();
    let workers = workers.max(1).min(m_c);
    let mut slots: Vec<Option<Result<Vec<TrialRecord>>>> = (0..m_c).map(|_| None).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<TrialRecord>>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let policies = &policies;
            scope.spawn(move || loop {
                let trial = next.fetch_add(1, Ordering::Relaxed);
                if trial >= m_c {
                    break;
                }
                let result = TrialContext::build(scenario, master_seed, trial as u64).and_then(|ctx| {
                    policies
                        .iter()
                        .map(|p| {
                            run_policy_trial(scenario, p, &ctx, master_seed, trial as u64, keep_records)
                        })
                        .collect::<Result<Vec<TrialRecord>>>()
                });
                if tx.send((trial, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (trial, result) in rx {
            slots[trial] = Some(result);
        }
    });

    // Deterministic reduction in trial order.
    let mut records: Vec<Vec<TrialRecord>> = Vec::with_capacity(m_c);
    for slot in slots {
        records.push(slot.expect("worker filled every slot")?);
    }

    let horizon = scenario.horizon;
    let n_pol = policies.len();
    let k_count = scenario.n_targets();
    let inv_mc = 1.0 / m_c as f64;

    let mut steps = Vec::with_capacity(horizon);
    for ti in 0..horizon {
        let mut reward = vec![0.0; n_pol];
        let mut regret = vec![0.0; n_pol];
        let mut msq = vec![vec![0.0; k_count]; n_pol];
        for trial in &records {
            for (p, rec) in trial.iter().enumerate() {
                let s = &rec.steps[ti];
                reward[p] += s.reward;
                regret[p] += s.cum_regret;
                for k in 0..k_count {
                    msq[p][k] += s.sq_err[k];
                }
            }
        }
        let rmse: Vec<Vec<f64>> = msq
            .into_iter()
            .map(|per_k| per_k.into_iter().map(|v| (v * inv_mc).sqrt()).collect())
            .collect();
        steps.push(AggregateStep {
            t: ti + 1,
            reward: reward.into_iter().map(|v| v * inv_mc).collect(),
            regret: regret.into_iter().map(|v| v * inv_mc).collect(),
            rmse,
        });
    }

    let mut summaries = Vec::with_capacity(n_pol);
    for (p, spec) in policies.iter().enumerate() {
        let mut armse_per_target = vec![0.0; k_count];
        for step in &steps {
            for k in 0..k_count {
                armse_per_target[k] += step.rmse[p][k];
            }
        }
        for v in &mut armse_per_target {
            *v /= horizon as f64;
        }
        let armse = armse_per_target.iter().zip(&scenario.weights).map(|(a, w)| a * w).sum();
        let total_regret =
            records.iter().map(|trial| trial[p].steps[horizon - 1].cum_regret).sum::<f64>() * inv_mc;
        let asr = records
            .iter()
            .map(|trial| {
                trial[p].steps.iter().filter(|s| s.matched_best).count() as f64 / horizon as f64
            })
            .sum::<f64>()
            * inv_mc;
        summaries.push(PolicySummary {
            name: spec.name.clone(),
            armse,
            armse_per_target,
            total_regret,
            asr,
        });
    }

    Ok(ExperimentOutput {
        summary: RunSummary {
            scenario: scenario.name.clone(),
            trials: m_c,
            horizon,
            master_seed,
            policies: summaries,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        steps,
        policies,
        weights: scenario.weights.clone(),
        records: keep_records.then_some(records),
    })
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Writes the per-step aggregate CSV: reward in linear SINR units and dB,
/// cumulative regret likewise, RMSE per target in meters (plus the
/// Ω-weighted trace for multi-target runs).
pub fn write_steps_csv<W: IoWrite>(out: &mut W, output: &ExperimentOutput) -> Result<()> {
    let k_count = output.weights.len();
    let mut header = String::from("t");
    for p in &output.policies {
        header.push_str(&format!(",{0}_reward,{0}_reward_db,{0}_regret,{0}_regret_db", p.name));
        for k in 1..=k_count {
            header.push_str(&format!(",{}_rmse_t{}", p.name, k));
        }
        if k_count > 1 {
            header.push_str(&format!(",{}_rmse_w", p.name));
        }
    }
    writeln!(out, "{header}")?;
    for step in &output.steps {
        let mut row = step.t.to_string();
        for p in 0..output.policies.len() {
            row.push_str(&format!(
                ",{},{},{},{}",
                step.reward[p],
                db(step.reward[p]),
                step.regret[p],
                db(step.regret[p])
            ));
            for k in 0..k_count {
                row.push_str(&format!(",{}", step.rmse[p][k]));
            }
            if k_count > 1 {
                let w: f64 = step.rmse[p].iter().zip(&output.weights).map(|(r, w)| r * w).sum();
                row.push_str(&format!(",{w}"));
            }
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Writes the run summary as pretty JSON (deterministic byte-for-byte).
pub fn write_summary_json<W: IoWrite>(out: &mut W, summary: &RunSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    writeln!(out, "{json}")?;
    Ok(())
}

/// Writes per-trial step rows (debug).
pub fn write_trial_debug_csv<W: IoWrite>(out: &mut W, output: &ExperimentOutput) -> Result<()> {
    let Some(records) = &output.records else {
        return Err(Error::contract("debug records were not retained"));
    };
    let k_count = output.weights.len();
    let mut header = String::from("trial,policy,t,arm,reward,optimal,cum_regret,matched_best,diverged");
    for k in 1..=k_count {
        header.push_str(&format!(",sq_err_t{k}"));
    }
    writeln!(out, "{header}")?;
    for trial in records {
        for rec in trial {
            for s in &rec.steps {
                let mut row = format!(
                    "{},{},{},{},{},{},{},{},{}",
                    rec.trial,
                    rec.policy,
                    s.t,
                    s.arm,
                    s.reward,
                    s.optimal,
                    s.cum_regret,
                    u8::from(s.matched_best),
                    s.diverged
                );
                for e in &s.sq_err {
                    row.push_str(&format!(",{e}"));
                }
                writeln!(out, "{row}")?;
            }
        }
    }
    Ok(())
}

/// Writes flattened measurement rows (debug; intended for small trial counts).
pub fn write_measurement_debug_csv<W: IoWrite>(out: &mut W, output: &ExperimentOutput) -> Result<()> {
    let Some(records) = &output.records else {
        return Err(Error::contract("debug records were not retained"));
    };
    writeln!(out, "trial,policy,t,target,m,n,range_sum,azimuth,gamma,var_range,var_azimuth")?;
    for trial in records {
        for rec in trial {
            let Some(rows) = &rec.measurements else { continue };
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    rec.trial,
                    rec.policy,
                    r.t,
                    r.target + 1,
                    r.channel.0 + 1,
                    r.channel.1 + 1,
                    r.range_sum,
                    r.azimuth,
                    r.gamma,
                    r.noise_cov[0],
                    r.noise_cov[1]
                )?;
            }
        }
    }
    Ok(())
}

