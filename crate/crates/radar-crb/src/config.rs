//! Scenario configuration files.
//!
//! Scenarios are TOML documents; the three bundled scenarios ship embedded in
//! the binary and can be addressed by name (`scenario1`..`scenario3`). A
//! loaded [`ScenarioConfig`] is a faithful mirror of the file; [`build`] runs
//! all cross-field validation and produces the runnable [`Scenario`].
//!
//! [`build`]: ScenarioConfig::build

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::bandit::{PolicyKind, PolicyParams, SuperArm};
use crate::bpso::SwarmParams;
use crate::dynamics::{self, ModelKind, MotionModel, Segment, TargetPlan, TargetState};
use crate::error::{Error, Result};
use crate::geometry::{RadarLayout, ScatterModel};
use crate::harness::{PolicySpec, Scenario};
use crate::tracking::ModelBank;

const SCENARIO1: &str = include_str!("../configs/scenario1.toml");
const SCENARIO2: &str = include_str!("../configs/scenario2.toml");
const SCENARIO3: &str = include_str!("../configs/scenario3.toml");

/// Returns the embedded TOML for a bundled scenario name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "scenario1" => Some(SCENARIO1),
        "scenario2" => Some(SCENARIO2),
        "scenario3" => Some(SCENARIO3),
        _ => None,
    }
}

pub const BUNDLED_NAMES: [&str; 3] = ["scenario1", "scenario2", "scenario3"];

/// Motion model in config form (turn rates in degrees/second).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MotionKindConfig {
    Ncv,
    Nct { omega_deg: f64 },
}

impl MotionKindConfig {
    fn to_model_kind(self) -> ModelKind {
        match self {
            MotionKindConfig::Ncv => ModelKind::Ncv,
            MotionKindConfig::Nct { omega_deg } => ModelKind::Nct { omega: omega_deg.to_radians() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub start_t: usize,
    pub end_t: usize,
    #[serde(flatten)]
    pub model: MotionKindConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    /// Target weight Ω_k; weights must sum to 1 across targets.
    pub weight: f64,
    /// `[x, ẋ, y, ẏ]` — the true initial state and the filter's initial
    /// estimate.
    pub initial_state: TargetState,
    pub initial_covariance_diag: [f64; 4],
    pub process_noise_coeff: f64,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterConfig {
    /// Uniform reflectivity applied to every channel and target.
    #[serde(default = "default_psi")]
    pub uniform: f64,
    /// Optional full `[k][m][n]` table overriding `uniform`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<Vec<f64>>>>,
}

fn default_psi() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// σ²_r(0) in m².
    pub range_var: f64,
    /// σ²_φ(0) in squared milliradians, converted to rad² when the scenario
    /// is built. 0.002 mrad² (≈ 0.045 mrad std) keeps a single channel's
    /// cross-range error at the few-meter level over these ranges, matching
    /// the range accuracy; coarser azimuth would leave every channel
    /// rank-deficient on its own and make tracking quality hinge on channel
    /// geometry instead of channel SINR.
    pub azimuth_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub models: Vec<MotionKindConfig>,
    pub initial_model_prob: Vec<f64>,
    pub transition_prob: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKindName {
    Best,
    MgCrbCl,
    Ucb1,
    EpsGreedy,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub name: String,
    pub kind: PolicyKindName,
    /// Fixed policy only: 1-based transmitter indices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tx: Vec<usize>,
    /// Fixed policy only: 1-based receiver indices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rx: Vec<usize>,
    #[serde(flatten)]
    pub params: PolicyParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub horizon: usize,
    pub sample_interval: f64,
    pub m_s: usize,
    pub n_s: usize,
    /// Default Monte-Carlo trial count (CLI `--mc` overrides).
    pub trials: usize,
    pub master_seed: u64,
    pub layout: RadarLayout,
    #[serde(default)]
    pub scatter: ScatterConfig,
    pub measurement_noise: NoiseConfig,
    pub targets: Vec<TargetConfig>,
    pub filter: FilterConfig,
    #[serde(default)]
    pub swarm: SwarmParams,
    pub policies: Vec<PolicyConfig>,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self { uniform: 1.0, values: None }
    }
}

/// Loads and fully validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Parses scenario TOML and validates it by building the runtime scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = toml::from_str(text)?;
    config.build()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Cross-validates every field and assembles the runnable [`Scenario`].
    pub fn build(&self) -> Result<Scenario> {
        self.layout.validate()?;
        let (m, n) = (self.layout.n_tx(), self.layout.n_rx());
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.sample_interval <= 0.0 {
            return Err(Error::config("sample interval must be positive"));
        }
        if self.m_s == 0 || self.m_s > m || self.n_s == 0 || self.n_s > n {
            return Err(Error::config(format!(
                "selection sizes M_s={} / N_s={} incompatible with M={m} / N={n}",
                self.m_s, self.n_s
            )));
        }
        if self.trials == 0 {
            return Err(Error::config("trial count must be at least 1"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("at least one target required"));
        }
        let k = self.targets.len();

        let weight_sum: f64 = self.targets.iter().map(|t| t.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-9 || self.targets.iter().any(|t| t.weight < 0.0) {
            return Err(Error::config("target weights must be non-negative and sum to 1"));
        }

        let scatter = match &self.scatter.values {
            Some(values) => ScatterModel::from_table(values, m, n, k)?,
            None => ScatterModel::uniform(m, n, k, self.scatter.uniform)?,
        };

        if self.measurement_noise.range_var <= 0.0 || self.measurement_noise.azimuth_var <= 0.0 {
            return Err(Error::config("base measurement variances must be positive"));
        }
        let mrad2 = 1.0e-6;
        let sigma0 = Matrix2::new(
            self.measurement_noise.range_var,
            0.0,
            0.0,
            self.measurement_noise.azimuth_var * mrad2,
        );

        let mut plans = Vec::with_capacity(k);
        for target in &self.targets {
            let plan = TargetPlan {
                initial_state: target.initial_state,
                initial_covariance_diag: target.initial_covariance_diag,
                segments: target
                    .segments
                    .iter()
                    .map(|s| Segment { start_t: s.start_t, end_t: s.end_t, model: s.model.to_model_kind() })
                    .collect(),
                process_noise_coeff: target.process_noise_coeff,
            };
            plan.validate(self.horizon)?;
            plans.push(plan);
        }

        if self.filter.models.is_empty() {
            return Err(Error::config("filter needs at least one motion model"));
        }
        let n_models = self.filter.models.len();
        if self.filter.initial_model_prob.len() != n_models
            || self.filter.transition_prob.len() != n_models
            || self.filter.transition_prob.iter().any(|row| row.len() != n_models)
        {
            return Err(Error::config("filter probability dimensions must match the model count"));
        }
        let models: Vec<MotionModel> = self
            .filter
            .models
            .iter()
            .map(|mk| MotionModel::new(mk.to_model_kind(), self.sample_interval))
            .collect::<Result<_>>()?;
        let pi = DMatrix::from_fn(n_models, n_models, |i, j| self.filter.transition_prob[i][j]);
        let u0 = DVector::from_vec(self.filter.initial_model_prob.clone());
        let banks: Vec<ModelBank> = plans
            .iter()
            .map(|plan| {
                ModelBank::new(
                    models.clone(),
                    pi.clone(),
                    u0.clone(),
                    dynamics::process_noise_cov(plan.process_noise_coeff, self.sample_interval),
                )
            })
            .collect::<Result<_>>()?;

        self.swarm.validate()?;

        if self.policies.is_empty() {
            return Err(Error::config("at least one policy required"));
        }
        let mut names = std::collections::HashSet::new();
        let mut policies = Vec::with_capacity(self.policies.len());
        for p in &self.policies {
            if !names.insert(p.name.clone()) {
                return Err(Error::config(format!("duplicate policy name '{}'", p.name)));
            }
            p.params.validate()?;
            let kind = match p.kind {
                PolicyKindName::Best => PolicyKind::Best,
                PolicyKindName::MgCrbCl => PolicyKind::MgCrbCl,
                PolicyKindName::Ucb1 => PolicyKind::Ucb1,
                PolicyKindName::EpsGreedy => PolicyKind::EpsGreedy,
                PolicyKindName::Fixed => {
                    let tx0: Vec<usize> = one_based(&p.tx, m, "transmitter")?;
                    let rx0: Vec<usize> = one_based(&p.rx, n, "receiver")?;
                    let arm = SuperArm::from_indices(&tx0, &rx0, m, n)?;
                    arm.validate(self.m_s, self.n_s)?;
                    PolicyKind::Fixed(arm)
                }
            };
            if p.kind != PolicyKindName::Fixed && (!p.tx.is_empty() || !p.rx.is_empty()) {
                return Err(Error::config(format!("policy '{}' is not fixed but lists stations", p.name)));
            }
            policies.push(PolicySpec { name: p.name.clone(), kind, params: p.params });
        }

        Ok(Scenario {
            name: self.name.clone(),
            layout: self.layout.clone(),
            scatter,
            plans,
            weights: self.targets.iter().map(|t| t.weight).collect(),
            horizon: self.horizon,
            sample_interval: self.sample_interval,
            m_s: self.m_s,
            n_s: self.n_s,
            banks,
            swarm: self.swarm,
            sigma0,
            trials: self.trials,
            master_seed: self.master_seed,
            policies,
        })
    }
}

fn one_based(indices: &[usize], limit: usize, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i == 0 || i > limit {
            return Err(Error::config(format!("{what} index {i} out of 1..={limit}")));
        }
        out.push(i - 1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        for name in BUNDLED_NAMES {
            let text = bundled(name).unwrap();
            let config = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.name, name);
        }
        assert!(bundled("nope").is_none());
    }

    #[test]
    fn scenario1_matches_published_parameters() {
        let config = parse_scenario(bundled("scenario1").unwrap()).unwrap();
        assert_eq!(config.layout.n_tx(), 4);
        assert_eq!(config.layout.n_rx(), 6);
        assert_eq!(config.m_s, 2);
        assert_eq!(config.n_s, 3);
        assert_eq!(config.horizon, 1000);
        assert_eq!(config.measurement_noise.range_var, 5.0);
        assert_eq!(config.measurement_noise.azimuth_var, 0.002);
        assert_eq!(config.swarm.n_pop, 50);
        assert_eq!(config.swarm.q_max, 100);
        assert_eq!(config.swarm.c1, 2.0);
        assert_eq!(config.swarm.c2, 2.0);
        assert!(config.layout.tx_power.iter().all(|p| *p == 1000.0));
        assert!(config.layout.effective_bandwidth.iter().all(|b| *b == 1.0e5));
        assert_eq!(config.layout.noise_power, 1.0e-26);
        assert!(config.layout.interference_power.iter().all(|p| *p == 0.5e-21));
        let mg = config.policies.iter().find(|p| p.name == "mgcrbcl").unwrap();
        assert_eq!(mg.params.bar_alpha, 0.2);
        assert_eq!(mg.params.alpha, 0.998);
        assert_eq!(mg.params.beta, 2.0);
        let eps = config.policies.iter().find(|p| p.name == "epsgreedy").unwrap();
        assert_eq!(eps.params.epsilon, 0.1);
        assert_eq!(eps.params.bar_alpha_star, 0.998);
        let target = &config.targets[0];
        assert_eq!(target.process_noise_coeff, 0.1);
        assert_eq!(target.initial_covariance_diag, [20.0; 4]);
        assert_eq!(<[f64; 4]>::from(target.initial_state), [5.0, 100.0, 5.0, 100.0]);
    }

    #[test]
    fn scenario3_is_two_targets_with_paper_weights() {
        let config = parse_scenario(bundled("scenario3").unwrap()).unwrap();
        assert_eq!(config.targets.len(), 2);
        assert_eq!(config.targets[0].weight, 0.6);
        assert_eq!(config.targets[1].weight, 0.4);
        // Target 1 keeps the two maneuver windows.
        assert_eq!(config.targets[0].segments.len(), 2);
        let scenario = config.build().unwrap();
        assert_eq!(scenario.banks.len(), 2);
    }

    #[test]
    fn config_round_trips_through_toml() {
        for name in BUNDLED_NAMES {
            let config = parse_scenario(bundled(name).unwrap()).unwrap();
            let text = toml::to_string(&config).unwrap();
            let reparsed = parse_scenario(&text).unwrap();
            assert_eq!(config, reparsed, "{name} round trip changed the config");
        }
    }

    #[test]
    fn infeasible_fixed_policy_is_rejected() {
        let mut config = parse_scenario(bundled("scenario1").unwrap()).unwrap();
        for p in &mut config.policies {
            if p.kind == PolicyKindName::Fixed {
                p.tx = vec![3]; // Σδ_t = 1 ≠ M_s = 2
            }
        }
        let err = config.build().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn bad_weights_are_rejected() {
        let mut config = parse_scenario(bundled("scenario3").unwrap()).unwrap();
        config.targets[0].weight = 0.5; // 0.5 + 0.4 ≠ 1
        assert!(config.build().is_err());
    }

    #[test]
    fn parse_error_carries_location() {
        let err = parse_scenario("name = [unclosed").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line") || msg.contains("|"), "unhelpful parse error: {msg}");
    }
}
