//! Radar geometry and the channel SINR model.
//!
//! Each transmitter `m` / receiver `n` pair forms a bistatic channel whose
//! SINR for a target at `X` is
//!
//! ```text
//! S_mn = g · (R_tm · R_rn)^-2 · ψ_mn · P_m / (σ²_noi + σ²_int_n)
//! ```
//!
//! with radar-equation constants folded into the configurable gain `g`.
//! Measurement noise is tied to channel quality through the correlation
//! coefficient `λ = (S − S_min)/(S_max − S_min) + 0.2`, where `S_min` is the
//! horizon-wide minimum of the true SINR and `S_max` is pinned at 10; the
//! per-channel noise covariance is the base covariance divided by `λ`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::TargetState;
use crate::error::{Error, Result};

/// The fixed upper SINR normalization bound (linear scale).
pub const SINR_MAX: f64 = 10.0;

/// Station positions and per-station RF parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarLayout {
    /// Transmitter positions `(x, y)` in meters, length `M`.
    pub tx_positions: Vec<[f64; 2]>,
    /// Receiver positions `(x, y)` in meters, length `N`.
    pub rx_positions: Vec<[f64; 2]>,
    /// Per-transmitter power `P_m` in watts.
    pub tx_power: Vec<f64>,
    /// Per-transmitter effective bandwidth `β_m` in Hz. Carried for
    /// completeness; the noise model scales with SINR only.
    pub effective_bandwidth: Vec<f64>,
    /// Per-receiver 3 dB beamwidth `ς_n` in radians. Carried for completeness.
    pub beamwidth: Vec<f64>,
    /// Thermal noise power `σ²_noi` in watts, common to all receivers.
    pub noise_power: f64,
    /// Per-receiver interference power `σ²_int_n` in watts.
    pub interference_power: Vec<f64>,
    /// Dimensionless multiplier standing in for the omitted radar-equation
    /// constants; scales every channel identically.
    #[serde(default = "default_gain")]
    pub gain_constant: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl RadarLayout {
    pub fn n_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_tx();
        let n = self.n_rx();
        if m == 0 || n == 0 {
            return Err(Error::config("layout needs at least one TX and one RX"));
        }
        if self.tx_power.len() != m || self.effective_bandwidth.len() != m {
            return Err(Error::config("per-TX parameter lengths must equal M"));
        }
        if self.beamwidth.len() != n || self.interference_power.len() != n {
            return Err(Error::config("per-RX parameter lengths must equal N"));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.tx_power)
            || !positive(&self.effective_bandwidth)
            || !positive(&self.beamwidth)
            || !positive(&self.interference_power)
            || !(self.noise_power > 0.0 && self.noise_power.is_finite())
            || !(self.gain_constant > 0.0 && self.gain_constant.is_finite())
        {
            return Err(Error::config("all powers and gains must be positive and finite"));
        }
        let finite = |v: &[[f64; 2]]| v.iter().all(|p| p[0].is_finite() && p[1].is_finite());
        if !finite(&self.tx_positions) || !finite(&self.rx_positions) {
            return Err(Error::config("station positions must be finite"));
        }
        Ok(())
    }
}

/// Scattering coefficients `ψ_mn` per target, constant over time.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterModel {
    psi: Vec<f64>,
    m: usize,
    n: usize,
    k: usize,
}

impl ScatterModel {
    /// Uniform reflectivity across all channels and targets.
    pub fn uniform(m: usize, n: usize, k: usize, value: f64) -> Result<Self> {
        if value <= 0.0 || !value.is_finite() {
            return Err(Error::config("scatter coefficient must be positive"));
        }
        Ok(Self { psi: vec![value; m * n * k], m, n, k })
    }

    /// Full per-channel table; `values[k][m][n]`.
    pub fn from_table(values: &[Vec<Vec<f64>>], m: usize, n: usize, k: usize) -> Result<Self> {
        if values.len() != k || values.iter().any(|t| t.len() != m || t.iter().any(|r| r.len() != n)) {
            return Err(Error::config("scatter table must be K×M×N"));
        }
        let mut psi = Vec::with_capacity(m * n * k);
        for t in values {
            for row in t {
                for &v in row {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(Error::config("scatter coefficients must be positive"));
                    }
                    psi.push(v);
                }
            }
        }
        Ok(Self { psi, m, n, k })
    }

    #[inline]
    pub fn psi(&self, k: usize, m: usize, n: usize) -> f64 {
        debug_assert!(k < self.k && m < self.m && n < self.n);
        self.psi[(k * self.m + m) * self.n + n]
    }

    pub fn n_targets(&self) -> usize {
        self.k
    }
}

/// Ranges, bearing, and path loss of one channel for one target position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelGeometry {
    /// Transmitter-to-target range `R_tm` in meters.
    pub tx_range: f64,
    /// Target-to-receiver range `R_rn` in meters.
    pub rx_range: f64,
    /// Receiver-to-target bearing in radians, four-quadrant.
    pub azimuth: f64,
    /// `(R_tm · R_rn)^-2`, in m⁻⁴.
    pub path_loss: f64,
}

/// Computes [`ChannelGeometry`] for channel `m-n` and a target position.
pub fn channel_geometry(
    layout: &RadarLayout,
    target_pos: [f64; 2],
    m: usize,
    n: usize,
) -> Result<ChannelGeometry> {
    let tx = layout.tx_positions[m];
    let rx = layout.rx_positions[n];
    let tx_range = (target_pos[0] - tx[0]).hypot(target_pos[1] - tx[1]);
    let rx_range = (target_pos[0] - rx[0]).hypot(target_pos[1] - rx[1]);
    if tx_range == 0.0 {
        return Err(Error::DegenerateGeometry { station: "transmitter", index: m });
    }
    if rx_range == 0.0 {
        return Err(Error::DegenerateGeometry { station: "receiver", index: n });
    }
    let azimuth = (target_pos[1] - rx[1]).atan2(target_pos[0] - rx[0]);
    let prod = tx_range * rx_range;
    Ok(ChannelGeometry {
        tx_range,
        rx_range,
        azimuth,
        path_loss: 1.0 / (prod * prod),
    })
}

/// True linear SINR of channel `m-n` for target `k` at `target_pos`.
pub fn true_sinr(
    layout: &RadarLayout,
    scatter: &ScatterModel,
    target_pos: [f64; 2],
    m: usize,
    n: usize,
    k: usize,
) -> Result<f64> {
    let geom = channel_geometry(layout, target_pos, m, n)?;
    let denom = layout.noise_power + layout.interference_power[n];
    Ok(layout.gain_constant * geom.path_loss * scatter.psi(k, m, n) * layout.tx_power[m] / denom)
}

/// Correlation coefficient `λ` for a true SINR `s` and normalization bounds.
///
/// No clamping: `s > s_max` yields `λ > 1.2`, which simply shrinks the noise
/// further while keeping covariances positive.
pub fn lambda_coeff(s: f64, s_min: f64, s_max: f64) -> Result<f64> {
    if !(s_max > s_min) {
        return Err(Error::InvalidSinrBounds { s_min, s_max });
    }
    Ok((s - s_min) / (s_max - s_min) + 0.2)
}

/// Horizon-wide SINR bounds for target `k`: the realized minimum over every
/// channel and time step, and the fixed maximum [`SINR_MAX`].
pub fn sinr_bounds(
    layout: &RadarLayout,
    scatter: &ScatterModel,
    truth: &[TargetState],
    k: usize,
) -> Result<(f64, f64)> {
    if truth.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut s_min = f64::INFINITY;
    for state in truth {
        let pos = state.position();
        for m in 0..layout.n_tx() {
            for n in 0..layout.n_rx() {
                let s = true_sinr(layout, scatter, pos, m, n, k)?;
                if s < s_min {
                    s_min = s;
                }
            }
        }
    }
    Ok((s_min, SINR_MAX))
}

/// Measurement-noise covariance `σ₀ / λ` (diagonal, positive definite).
pub fn measurement_covariance(lambda: f64, sigma0: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(sigma0 / lambda)
}
