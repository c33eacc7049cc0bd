//! Target motion models and ground-truth generation.
//!
//! State ordering is `[x, ẋ, y, ẏ]`. Two model families are supported:
//! nearly-constant-velocity (NCV) and nearly-constant-turn (NCT) with a fixed
//! turn rate `ω` (positive ω turns counterclockwise). Both noiseless maps are
//! linear in the state, with process noise injected through the 4×2 gain
//!
//! ```text
//! G = [T²/2  T   0    0 ;
//!      0     0   T²/2 T ]'
//! ```
//!
//! and `w ~ N(0, diag(Q_s, Q_s))`.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kinematic state `[x, ẋ, y, ẏ]` in meters and meters/second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct TargetState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl TargetState {
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.vx, self.y, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self { x: v[0], vx: v[1], y: v[2], vy: v[3] }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

impl From<[f64; 4]> for TargetState {
    fn from(v: [f64; 4]) -> Self {
        Self { x: v[0], vx: v[1], y: v[2], vy: v[3] }
    }
}

impl From<TargetState> for [f64; 4] {
    fn from(s: TargetState) -> Self {
        [s.x, s.vx, s.y, s.vy]
    }
}

/// Motion-model family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelKind {
    Ncv,
    /// Coordinated turn at `omega` rad/s (nonzero).
    Nct { omega: f64 },
}

/// A model family paired with the sampling interval `T_s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionModel {
    pub kind: ModelKind,
    pub sample_interval: f64,
}

impl MotionModel {
    pub fn new(kind: ModelKind, sample_interval: f64) -> Result<Self> {
        if sample_interval <= 0.0 {
            return Err(Error::config("sample interval must be positive"));
        }
        if let ModelKind::Nct { omega } = kind {
            if omega == 0.0 {
                return Err(Error::config("NCT turn rate must be nonzero"));
            }
        }
        Ok(Self { kind, sample_interval })
    }

    /// The state-transition matrix (both families are linear maps).
    pub fn matrix(&self) -> Matrix4<f64> {
        let t = self.sample_interval;
        match self.kind {
            ModelKind::Ncv => Matrix4::new(
                1.0, t, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, t, //
                0.0, 0.0, 0.0, 1.0,
            ),
            ModelKind::Nct { omega } => {
                let wt = omega * t;
                let (s, c) = wt.sin_cos();
                let a = s / omega;
                let b = (1.0 - c) / omega;
                Matrix4::new(
                    1.0, a, 0.0, -b, //
                    0.0, c, 0.0, -s, //
                    0.0, b, 1.0, a, //
                    0.0, s, 0.0, c,
                )
            }
        }
    }

    /// Noiseless one-step transition.
    pub fn transition(&self, state: &TargetState) -> TargetState {
        TargetState::from_vector(&(self.matrix() * state.as_vector()))
    }

    /// Noiseless transition on a raw state vector (filter-side form).
    pub fn transition_vec(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.matrix() * v
    }
}

/// Noise gain `G` of the discretized double integrator.
pub fn noise_gain(t_s: f64) -> Matrix4x2<f64> {
    let h = t_s * t_s / 2.0;
    Matrix4x2::new(
        h, 0.0, //
        t_s, 0.0, //
        0.0, h, //
        0.0, t_s,
    )
}

/// Process noise covariance `G · diag(Q_s, Q_s) · Gᵀ` (rank ≤ 2, PSD).
pub fn process_noise_cov(q_s: f64, t_s: f64) -> Matrix4<f64> {
    let g = noise_gain(t_s);
    let q = Matrix2::from_diagonal_element(q_s);
    g * q * g.transpose()
}

/// One maneuver window: the transition `X_t → X_{t+1}` uses `model` for every
/// `t` with `start_t ≤ t < end_t` (1-based steps).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_t: usize,
    pub end_t: usize,
    #[serde(flatten)]
    pub model: ModelKind,
}

/// Ground-truth motion schedule for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPlan {
    pub initial_state: TargetState,
    /// Diagonal of the initial estimation-error covariance.
    pub initial_covariance_diag: [f64; 4],
    /// Maneuver windows; any uncovered step defaults to NCV.
    #[serde(default)]
    pub segments: Vec<Segment>,
    /// Process-noise coefficient `Q_s`.
    pub process_noise_coeff: f64,
}

impl TargetPlan {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.process_noise_coeff < 0.0 {
            return Err(Error::config("process noise coefficient must be non-negative"));
        }
        if self.initial_covariance_diag.iter().any(|v| *v <= 0.0) {
            return Err(Error::config("initial covariance diagonal must be positive"));
        }
        let mut sorted = self.segments.clone();
        sorted.sort_by_key(|s| s.start_t);
        let mut prev_end = 0usize;
        for seg in &sorted {
            if seg.start_t < 1 || seg.end_t > horizon + 1 || seg.start_t >= seg.end_t {
                return Err(Error::config(format!(
                    "segment [{}, {}) outside horizon 1..={}",
                    seg.start_t, seg.end_t, horizon
                )));
            }
            if seg.start_t < prev_end {
                return Err(Error::config("segments must not overlap"));
            }
            if let ModelKind::Nct { omega } = seg.model {
                if omega == 0.0 {
                    return Err(Error::config("NCT segment needs a nonzero turn rate"));
                }
            }
            prev_end = seg.end_t;
        }
        Ok(())
    }

    /// The model driving the transition out of step `t` (1-based).
    pub fn model_at(&self, t: usize) -> ModelKind {
        self.segments
            .iter()
            .find(|s| s.start_t <= t && t < s.end_t)
            .map(|s| s.model)
            .unwrap_or(ModelKind::Ncv)
    }

    pub fn initial_covariance(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.initial_covariance_diag))
    }
}

/// Generates a truth trajectory of length `horizon`; entry `i` is the state
/// at step `t = i + 1`.
pub fn generate_truth<R: Rng>(
    plan: &TargetPlan,
    t_s: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<TargetState>> {
    plan.validate(horizon)?;
    let g = noise_gain(t_s);
    let noise_sd = plan.process_noise_coeff.sqrt();
    let mut out = Vec::with_capacity(horizon);
    let mut state = plan.initial_state;
    out.push(state);
    for t in 1..horizon {
        let model = MotionModel::new(plan.model_at(t), t_s)?;
        let mut v = model.transition_vec(&state.as_vector());
        if noise_sd > 0.0 {
            let w = Vector2::new(
                noise_sd * rng.sample::<f64, _>(StandardNormal),
                noise_sd * rng.sample::<f64, _>(StandardNormal),
            );
            v += g * w;
        }
        state = TargetState::from_vector(&v);
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const DEG: f64 = std::f64::consts::PI / 180.0;

    #[test]
    fn ncv_unit_step() {
        let model = MotionModel::new(ModelKind::Ncv, 1.0).unwrap();
        let s = model.transition(&TargetState { x: 0.0, vx: 1.0, y: 0.0, vy: 1.0 });
        assert_eq!(s, TargetState { x: 1.0, vx: 1.0, y: 1.0, vy: 1.0 });
    }

    #[test]
    fn nct_rotates_velocity_counterclockwise() {
        let omega = 3.0 * DEG;
        let model = MotionModel::new(ModelKind::Nct { omega }, 1.0).unwrap();
        let s = model.transition(&TargetState { x: 0.0, vx: 100.0, y: 0.0, vy: 0.0 });
        assert_relative_eq!(s.vx, 100.0 * (3.0 * DEG).cos(), max_relative = 1e-12);
        assert_relative_eq!(s.vy, 100.0 * (3.0 * DEG).sin(), max_relative = 1e-12);
        // Cross-check the full step against two composed half-steps.
        let half = MotionModel::new(ModelKind::Nct { omega }, 0.5).unwrap();
        let s2 = half.transition(&half.transition(&TargetState { x: 0.0, vx: 100.0, y: 0.0, vy: 0.0 }));
        assert_relative_eq!(s.x, s2.x, max_relative = 1e-10);
        assert_relative_eq!(s.y, s2.y, max_relative = 1e-10);
        assert_relative_eq!(s.vx, s2.vx, max_relative = 1e-10);
        assert_relative_eq!(s.vy, s2.vy, max_relative = 1e-10);
    }

    #[test]
    fn nct_preserves_speed_over_long_composition() {
        let model = MotionModel::new(ModelKind::Nct { omega: -3.0 * DEG }, 1.0).unwrap();
        let mut s = TargetState { x: 10.0, vx: 70.0, y: -4.0, vy: -30.0 };
        let speed0 = s.speed();
        for _ in 0..1000 {
            s = model.transition(&s);
        }
        assert!((s.speed() - speed0).abs() / speed0 < 1e-6);
    }

    #[test]
    fn process_noise_structure_at_unit_interval() {
        let q = process_noise_cov(1.0, 1.0);
        assert_relative_eq!(q[(0, 0)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(q[(0, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(q[(1, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(q[(2, 2)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(q[(2, 3)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(q[(3, 3)], 1.0, epsilon = 1e-15);
        // Cross-axis blocks are zero.
        assert_eq!(q[(0, 2)], 0.0);
        assert_eq!(q[(1, 3)], 0.0);
        assert_eq!(process_noise_cov(0.0, 1.0), Matrix4::zeros());
    }

    #[test]
    fn process_noise_matches_explicit_product() {
        // Independent oracle: build G literally from its definition and multiply.
        let (q_s, t_s) = (0.1, 2.0);
        let mut g = Matrix4x2::zeros();
        g[(0, 0)] = t_s * t_s / 2.0;
        g[(1, 0)] = t_s;
        g[(2, 1)] = t_s * t_s / 2.0;
        g[(3, 1)] = t_s;
        let expect = g * Matrix2::from_diagonal_element(q_s) * g.transpose();
        let got = process_noise_cov(q_s, t_s);
        assert_relative_eq!(got, expect, epsilon = 1e-15);
    }

    #[test]
    fn process_noise_has_exactly_two_zero_eigenvalues() {
        let q = process_noise_cov(0.3, 1.5);
        let mut eigs: Vec<f64> = q.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(eigs.iter().all(|e| *e > -1e-12));
        assert!(eigs[0].abs() < 1e-12 && eigs[1].abs() < 1e-12);
        assert!(eigs[2] > 1e-6 && eigs[3] > 1e-6);
    }

    #[test]
    fn noiseless_plan_is_a_straight_line() {
        let plan = TargetPlan {
            initial_state: TargetState { x: 0.0, vx: 2.0, y: 1.0, vy: -1.0 },
            initial_covariance_diag: [1.0; 4],
            segments: vec![],
            process_noise_coeff: 0.0,
        };
        let mut rng = stream(1, 0, StreamKind::Truth, 0);
        let truth = generate_truth(&plan, 1.0, 5, &mut rng).unwrap();
        for (i, s) in truth.iter().enumerate() {
            assert_relative_eq!(s.x, 2.0 * i as f64, epsilon = 1e-12);
            assert_relative_eq!(s.y, 1.0 - i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn truth_is_reproducible_under_fixed_seed() {
        let plan = TargetPlan {
            initial_state: TargetState { x: 0.0, vx: 10.0, y: 0.0, vy: 5.0 },
            initial_covariance_diag: [20.0; 4],
            segments: vec![Segment { start_t: 3, end_t: 6, model: ModelKind::Nct { omega: 3.0 * DEG } }],
            process_noise_coeff: 0.1,
        };
        let a = generate_truth(&plan, 1.0, 50, &mut stream(9, 4, StreamKind::Truth, 0)).unwrap();
        let b = generate_truth(&plan, 1.0, 50, &mut stream(9, 4, StreamKind::Truth, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_step_noise_covariance_matches_closed_form() {
        let plan = TargetPlan {
            initial_state: TargetState { x: 0.0, vx: 0.0, y: 0.0, vy: 0.0 },
            initial_covariance_diag: [1.0; 4],
            segments: vec![],
            process_noise_coeff: 0.7,
        };
        let expect = process_noise_cov(0.7, 1.0);
        let mut rng = stream(11, 0, StreamKind::Truth, 0);
        let n = 100_000usize;
        let mut acc = Matrix4::zeros();
        for _ in 0..n {
            let truth = generate_truth(&plan, 1.0, 2, &mut rng).unwrap();
            let d = truth[1].as_vector(); // zero initial state, so the step IS the noise
            acc += d * d.transpose();
        }
        let emp = acc / n as f64;
        let diff = (emp - expect).norm();
        assert!(
            diff / expect.norm() < 0.03,
            "Frobenius mismatch {} vs tolerance 3%",
            diff / expect.norm()
        );
    }

    #[test]
    fn segment_validation_rejects_overlap_and_out_of_range() {
        let mut plan = TargetPlan {
            initial_state: TargetState { x: 0.0, vx: 0.0, y: 0.0, vy: 0.0 },
            initial_covariance_diag: [1.0; 4],
            segments: vec![
                Segment { start_t: 1, end_t: 5, model: ModelKind::Ncv },
                Segment { start_t: 4, end_t: 8, model: ModelKind::Ncv },
            ],
            process_noise_coeff: 0.0,
        };
        assert!(plan.validate(10).is_err());
        plan.segments = vec![Segment { start_t: 5, end_t: 20, model: ModelKind::Ncv }];
        assert!(plan.validate(10).is_err());
        plan.segments = vec![Segment { start_t: 2, end_t: 4, model: ModelKind::Nct { omega: 0.0 } }];
        assert!(plan.validate(10).is_err());
    }

    proptest! {
        #[test]
        fn ncv_transition_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            s1 in prop::array::uniform4(-100.0f64..100.0),
            s2 in prop::array::uniform4(-100.0f64..100.0),
        ) {
            let model = MotionModel::new(ModelKind::Ncv, 1.0).unwrap();
            let v1 = Vector4::from(s1);
            let v2 = Vector4::from(s2);
            let lhs = model.transition_vec(&(a * v1 + b * v2));
            let rhs = a * model.transition_vec(&v1) + b * model.transition_vec(&v2);
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn nct_speed_preserved(omega in -0.3f64..0.3, vx in -200.0f64..200.0, vy in -200.0f64..200.0) {
            prop_assume!(omega.abs() > 1e-3);
            let model = MotionModel::new(ModelKind::Nct { omega }, 1.0).unwrap();
            let s = model.transition(&TargetState { x: 0.0, vx, y: 0.0, vy });
            let before = vx.hypot(vy);
            prop_assert!((s.speed() - before).abs() <= 1e-9 * before.max(1.0));
        }
    }
}
