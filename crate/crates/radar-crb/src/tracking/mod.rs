//! Per-channel IMM-UKF filter bank, channel fusion, and state prediction.
//!
//! Every selected channel runs its own interacting-multiple-model filter:
//! mixing under the model transition matrix, a per-model UKF predict/update
//! against the nonlinear range-sum/azimuth measurement, and a likelihood
//! driven model-probability update. Channel outputs (moment-matched across
//! models) are fused by an unweighted mean over the selected channels, and
//! the next-step state prediction is the model-probability-weighted mixture
//! of the noiseless transitions of the fused state.

pub mod ukf;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

use crate::dynamics::MotionModel;
use crate::error::{Error, Result};
use crate::geometry::RadarLayout;

pub use ukf::{UtParams, UtWeights};

/// The motion-model set shared by all channel filters.
#[derive(Clone, Debug)]
pub struct ModelBank {
    pub models: Vec<MotionModel>,
    /// Row-stochastic model transition matrix π.
    pub transition_prob: DMatrix<f64>,
    /// Initial model probabilities (simplex).
    pub initial_model_prob: DVector<f64>,
    /// Shared process-noise covariance `G·diag(Q_s,Q_s)·Gᵀ`.
    pub process_noise: Matrix4<f64>,
    pub ut: UtParams,
}

impl ModelBank {
    pub fn new(
        models: Vec<MotionModel>,
        transition_prob: DMatrix<f64>,
        initial_model_prob: DVector<f64>,
        process_noise: Matrix4<f64>,
    ) -> Result<Self> {
        let bank = Self {
            models,
            transition_prob,
            initial_model_prob,
            process_noise,
            ut: UtParams::default(),
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.models.len();
        if m == 0 {
            return Err(Error::config("model bank must hold at least one model"));
        }
        if self.transition_prob.nrows() != m || self.transition_prob.ncols() != m {
            return Err(Error::config("model transition matrix must be M_model square"));
        }
        for i in 0..m {
            let row_sum: f64 = self.transition_prob.row(i).iter().sum();
            if (row_sum - 1.0).abs() > 1e-9 || self.transition_prob.row(i).iter().any(|p| *p < 0.0) {
                return Err(Error::config("model transition rows must be stochastic"));
            }
        }
        if self.initial_model_prob.len() != m {
            return Err(Error::config("initial model probabilities must match model count"));
        }
        let u_sum: f64 = self.initial_model_prob.iter().sum();
        if (u_sum - 1.0).abs() > 1e-9 || self.initial_model_prob.iter().any(|p| *p < 0.0) {
            return Err(Error::config("initial model probabilities must lie on the simplex"));
        }
        Ok(())
    }
}

/// Per-channel IMM filter state for one target.
#[derive(Clone, Debug)]
pub struct ChannelFilter {
    pub channel: (usize, usize),
    pub target: usize,
    /// Per-model state estimates.
    pub states: Vec<Vector4<f64>>,
    /// Per-model covariances (SPD).
    pub covs: Vec<Matrix4<f64>>,
    /// Model probabilities û (simplex).
    pub model_prob: DVector<f64>,
}

impl ChannelFilter {
    /// All models start from the same state, covariance, and the bank's
    /// initial model probabilities.
    pub fn init(
        channel: (usize, usize),
        target: usize,
        state: Vector4<f64>,
        cov: Matrix4<f64>,
        bank: &ModelBank,
    ) -> Self {
        let m = bank.n_models();
        Self {
            channel,
            target,
            states: vec![state; m],
            covs: vec![cov; m],
            model_prob: bank.initial_model_prob.clone(),
        }
    }

    /// Re-seed from a fused estimate after a selection gap.
    pub fn reinit(&mut self, state: Vector4<f64>, cov: Matrix4<f64>, model_prob: DVector<f64>) {
        for s in &mut self.states {
            *s = state;
        }
        for c in &mut self.covs {
            *c = cov;
        }
        self.model_prob = model_prob;
    }

    /// Feedback form of the distributed fusion: the fused state and model
    /// probabilities replace the channel's own, while the covariances stay
    /// channel-local. Without this write-back each channel filter drifts in
    /// its weakly observed direction (a single range-sum constrains one axis)
    /// and the fused mean inherits the drift.
    pub fn feedback(&mut self, state: Vector4<f64>, model_prob: DVector<f64>) {
        for s in &mut self.states {
            *s = state;
        }
        self.model_prob = model_prob;
    }

    /// Moment-matched combination across models.
    pub fn combined(&self) -> (Vector4<f64>, Matrix4<f64>) {
        let mut x = Vector4::zeros();
        for (j, s) in self.states.iter().enumerate() {
            x += self.model_prob[j] * s;
        }
        let mut p = Matrix4::zeros();
        for (j, s) in self.states.iter().enumerate() {
            let d = s - x;
            p += self.model_prob[j] * (self.covs[j] + d * d.transpose());
        }
        (x, p)
    }
}

/// Fused multi-channel estimate for one target.
#[derive(Clone, Debug)]
pub struct FusedEstimate {
    pub state: Vector4<f64>,
    pub model_prob: DVector<f64>,
}

/// One IMM-UKF step with an arbitrary measurement function.
///
/// `angular` names the angle component of the measurement, if any. On a lost
/// positive-definiteness the error carries the channel identity so the
/// caller can drop the channel and continue.
pub fn imm_step_with<H>(
    filter: &ChannelFilter,
    bank: &ModelBank,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    h: H,
    angular: Option<usize>,
) -> Result<ChannelFilter>
where
    H: Fn(&Vector4<f64>) -> Vector2<f64>,
{
    let m_models = bank.n_models();
    debug_assert_eq!(filter.states.len(), m_models);
    let w = UtWeights::new(&bank.ut);
    let diverged = |reason: String| Error::FilterDivergence {
        m: filter.channel.0,
        n: filter.channel.1,
        k: filter.target,
        reason,
    };

    // Interaction: predicted model probabilities and mixed initial conditions.
    let pi = &bank.transition_prob;
    let u = &filter.model_prob;
    let mut c_bar = vec![0.0; m_models];
    for j in 0..m_models {
        for i in 0..m_models {
            c_bar[j] += pi[(i, j)] * u[i];
        }
        c_bar[j] = c_bar[j].max(1e-30);
    }
    let mut mixed_states = Vec::with_capacity(m_models);
    let mut mixed_covs = Vec::with_capacity(m_models);
    for j in 0..m_models {
        let mut x_mix = Vector4::zeros();
        for i in 0..m_models {
            x_mix += (pi[(i, j)] * u[i] / c_bar[j]) * filter.states[i];
        }
        let mut p_mix = Matrix4::zeros();
        for i in 0..m_models {
            let mu = pi[(i, j)] * u[i] / c_bar[j];
            let d = filter.states[i] - x_mix;
            p_mix += mu * (filter.covs[i] + d * d.transpose());
        }
        mixed_states.push(x_mix);
        mixed_covs.push((p_mix + p_mix.transpose()) * 0.5);
    }

    // Per-model UKF predict + update; collect Gaussian likelihoods.
    let mut states = Vec::with_capacity(m_models);
    let mut covs = Vec::with_capacity(m_models);
    let mut likelihoods = Vec::with_capacity(m_models);
    for j in 0..m_models {
        let model = &bank.models[j];
        let (x_pred, p_pred) = ukf::predict(
            &mixed_states[j],
            &mixed_covs[j],
            |x| model.transition_vec(x),
            &bank.process_noise,
            &w,
        )
        .map_err(|e| diverged(format!("predict (model {j}): {e}")))?;
        let out = ukf::update(&x_pred, &p_pred, z, &h, r, angular, &w)
            .map_err(|e| diverged(format!("update (model {j}): {e}")))?;
        states.push(out.state);
        covs.push(out.cov);
        likelihoods.push(out.likelihood);
    }

    // Model probability update: u_j ∝ c̄_j·Λ_j, falling back to the predicted
    // probabilities when every likelihood underflows.
    let mut u_new = DVector::zeros(m_models);
    let total: f64 = (0..m_models).map(|j| c_bar[j] * likelihoods[j]).sum();
    if total > 0.0 && total.is_finite() {
        for j in 0..m_models {
            u_new[j] = c_bar[j] * likelihoods[j] / total;
        }
    } else {
        let c_sum: f64 = c_bar.iter().sum();
        for j in 0..m_models {
            u_new[j] = c_bar[j] / c_sum;
        }
    }
    let u_sum: f64 = u_new.iter().sum();
    u_new /= u_sum;

    Ok(ChannelFilter {
        channel: filter.channel,
        target: filter.target,
        states,
        covs,
        model_prob: u_new,
    })
}

/// Builds the bistatic measurement function for channel `m-n`.
pub fn radar_measurement_fn(
    layout: &RadarLayout,
    m: usize,
    n: usize,
) -> impl Fn(&Vector4<f64>) -> Vector2<f64> + '_ {
    let tx = layout.tx_positions[m];
    let rx = layout.rx_positions[n];
    move |x: &Vector4<f64>| {
        let r_t = (x[0] - tx[0]).hypot(x[2] - tx[1]);
        let r_r = (x[0] - rx[0]).hypot(x[2] - rx[1]);
        let phi = (x[2] - rx[1]).atan2(x[0] - rx[0]);
        Vector2::new(r_t + r_r, phi)
    }
}

/// One IMM-UKF step against the radar measurement of channel `m-n`.
pub fn imm_step(
    filter: &ChannelFilter,
    bank: &ModelBank,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    layout: &RadarLayout,
    m: usize,
    n: usize,
) -> Result<ChannelFilter> {
    imm_step_with(filter, bank, z, r, radar_measurement_fn(layout, m, n), Some(1))
}

/// Unweighted mean of the channel estimates and model probabilities.
pub fn fuse_channels(filters: &[&ChannelFilter]) -> Result<FusedEstimate> {
    let Some(first) = filters.first() else {
        return Err(Error::contract("cannot fuse an empty channel list"));
    };
    if filters.iter().any(|f| f.target != first.target) {
        return Err(Error::contract("fused channels must share the target"));
    }
    let inv = 1.0 / filters.len() as f64;
    let mut state = Vector4::zeros();
    let mut prob = DVector::zeros(first.model_prob.len());
    for f in filters {
        state += f.combined().0;
        prob += &f.model_prob;
    }
    Ok(FusedEstimate { state: state * inv, model_prob: prob * inv })
}

/// Probability-weighted mixture of the noiseless model transitions.
pub fn predict_state(fused: &FusedEstimate, bank: &ModelBank) -> Vector4<f64> {
    let mut out = Vector4::zeros();
    for (i, model) in bank.models.iter().enumerate() {
        out += fused.model_prob[i] * model.transition_vec(&fused.state);
    }
    out
}
