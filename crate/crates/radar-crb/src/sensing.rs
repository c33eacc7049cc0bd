//! Observation generation for a selected super arm.
//!
//! Each selected channel returns, per target, a bistatic range-sum/azimuth
//! measurement with SINR-scaled Gaussian noise and one Swerling-I SINR sample
//! (exponential about the true mean). Batch ordering is fixed: ascending
//! target, then transmitter, then receiver — independent of any randomness.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::bandit::SuperArm;
use crate::dynamics::TargetState;
use crate::error::{Error, Result};
use crate::geometry::{self, RadarLayout, ScatterModel};

/// One range/azimuth observation from channel `m-n` of target `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    /// Bistatic range sum `R_tm + R_rn` in meters.
    pub range_sum: f64,
    /// Receiver-to-target bearing in radians, wrapped to `(-π, π]`.
    pub azimuth: f64,
    /// `(m, n)` channel indices.
    pub channel: (usize, usize),
    /// Target index.
    pub target: usize,
    /// Diagonal of the noise covariance this sample was drawn with; the
    /// filter consumes it, the selection policies never see it.
    pub noise_cov: [f64; 2],
}

/// All observations of one time step for a selected super arm.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBatch {
    pub t: usize,
    /// `M_s · N_s · K` entries, ordered by `(k, m, n)` ascending.
    pub measurements: Vec<Measurement>,
    /// SINR samples `γ`, parallel to `measurements`.
    pub sinr_samples: Vec<f64>,
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Noiseless `(range_sum, azimuth)` of channel `m-n` for a target position.
pub fn ideal_measurement(
    layout: &RadarLayout,
    target_pos: [f64; 2],
    m: usize,
    n: usize,
) -> Result<(f64, f64)> {
    let geom = geometry::channel_geometry(layout, target_pos, m, n)?;
    Ok((geom.tx_range + geom.rx_range, geom.azimuth))
}

/// Adds independent zero-mean Gaussian noise with the given diagonal
/// covariance; the azimuth is wrapped back to `(-π, π]`.
pub fn noisy_measurement<R: Rng>(ideal: (f64, f64), cov: &Matrix2<f64>, rng: &mut R) -> (f64, f64) {
    let r = ideal.0 + cov[(0, 0)].sqrt() * rng.sample::<f64, _>(StandardNormal);
    let phi = ideal.1 + cov[(1, 1)].sqrt() * rng.sample::<f64, _>(StandardNormal);
    (r, wrap_angle(phi))
}

/// Draws an exponential SINR sample with the given mean (Swerling-I).
pub fn sample_sinr<R: Rng>(mean: f64, rng: &mut R) -> Result<f64> {
    if mean <= 0.0 || !mean.is_finite() {
        return Err(Error::NonPositiveSinrMean(mean));
    }
    let exp = Exp::new(1.0 / mean).expect("rate is positive");
    Ok(exp.sample(rng))
}

/// Generates the full measurement batch for `super_arm` at step `t`.
///
/// `truths` holds the true state of every target at `t`; `bounds` the
/// per-target `(s_min, s_max)` normalization pair. Noise scaling uses the
/// *true* SINR through `λ`, a simulator-side quantity.
#[allow(clippy::too_many_arguments)]
pub fn observe<R: Rng>(
    layout: &RadarLayout,
    scatter: &ScatterModel,
    super_arm: &SuperArm,
    truths: &[TargetState],
    bounds: &[(f64, f64)],
    sigma0: &Matrix2<f64>,
    t: usize,
    rng: &mut R,
) -> Result<MeasurementBatch> {
    if truths.len() != bounds.len() {
        return Err(Error::contract("one (s_min, s_max) pair per target required"));
    }
    let pairs: Vec<(usize, usize)> = super_arm.selected_pairs().collect();
    let mut measurements = Vec::with_capacity(pairs.len() * truths.len());
    let mut sinr_samples = Vec::with_capacity(pairs.len() * truths.len());
    for (k, truth) in truths.iter().enumerate() {
        let pos = truth.position();
        for &(m, n) in &pairs {
            let s = geometry::true_sinr(layout, scatter, pos, m, n, k)?;
            let lambda = geometry::lambda_coeff(s, bounds[k].0, bounds[k].1)?;
            let cov = geometry::measurement_covariance(lambda, sigma0)?;
            let ideal = ideal_measurement(layout, pos, m, n)?;
            let (range_sum, azimuth) = noisy_measurement(ideal, &cov, rng);
            measurements.push(Measurement {
                range_sum,
                azimuth,
                channel: (m, n),
                target: k,
                noise_cov: [cov[(0, 0)], cov[(1, 1)]],
            });
            sinr_samples.push(sample_sinr(s, rng)?);
        }
    }
    Ok(MeasurementBatch { t, measurements, sinr_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn layout_two_by_three() -> RadarLayout {
        RadarLayout {
            tx_positions: vec![[0.0, 0.0], [10.0, 0.0]],
            rx_positions: vec![[0.0, 10.0], [10.0, 10.0], [5.0, -5.0]],
            tx_power: vec![1.0, 1.0],
            effective_bandwidth: vec![1.0; 2],
            beamwidth: vec![1.0; 3],
            noise_power: 0.5,
            interference_power: vec![0.5; 3],
            gain_constant: 1.0,
        }
    }

    #[test]
    fn ideal_measurement_on_axis() {
        let layout = RadarLayout {
            tx_positions: vec![[0.0, 0.0]],
            rx_positions: vec![[0.0, 0.0]],
            tx_power: vec![1.0],
            effective_bandwidth: vec![1.0],
            beamwidth: vec![1.0],
            noise_power: 1.0,
            interference_power: vec![1.0],
            gain_constant: 1.0,
        };
        let (r, phi) = ideal_measurement(&layout, [1.0, 0.0], 0, 0).unwrap();
        assert_relative_eq!(r, 2.0, epsilon = 1e-15);
        assert_relative_eq!(phi, 0.0, epsilon = 1e-15);
        let (_, phi) = ideal_measurement(&layout, [0.0, 1.0], 0, 0).unwrap();
        assert_relative_eq!(phi, PI / 2.0, epsilon = 1e-15);
        // West of the receiver needs the four-quadrant convention.
        let (_, phi) = ideal_measurement(&layout, [-1.0, 0.0], 0, 0).unwrap();
        assert_relative_eq!(phi.abs(), PI, epsilon = 1e-15);
        assert!(ideal_measurement(&layout, [0.0, 0.0], 0, 0).is_err());
    }

    #[test]
    fn tiny_covariance_recovers_ideal() {
        let cov = Matrix2::new(1e-12, 0.0, 0.0, 1e-12);
        let mut rng = stream(3, 0, StreamKind::Observation, 0);
        let (r, phi) = noisy_measurement((1234.5, 0.75), &cov, &mut rng);
        assert!((r - 1234.5).abs() < 1e-4);
        assert!((phi - 0.75).abs() < 1e-4);
    }

    #[test]
    fn noise_moments_match_requested_covariance() {
        let cov = Matrix2::new(4.0, 0.0, 0.0, 0.01);
        let mut rng = stream(5, 0, StreamKind::Observation, 0);
        let n = 100_000usize;
        let (mut sr, mut sp) = (0.0, 0.0);
        let (mut sr2, mut sp2) = (0.0, 0.0);
        for _ in 0..n {
            let (r, phi) = noisy_measurement((0.0, 0.0), &cov, &mut rng);
            sr += r;
            sp += phi;
            sr2 += r * r;
            sp2 += phi * phi;
        }
        let var_r = sr2 / n as f64 - (sr / n as f64).powi(2);
        let var_p = sp2 / n as f64 - (sp / n as f64).powi(2);
        assert!((var_r - 4.0).abs() / 4.0 < 0.03, "range var {var_r}");
        assert!((var_p - 0.01).abs() / 0.01 < 0.03, "azimuth var {var_p}");
    }

    #[test]
    fn exponential_mean_converges() {
        let mut rng = stream(7, 0, StreamKind::Observation, 0);
        let target = 3.7;
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            let g = sample_sinr(target, &mut rng).unwrap();
            assert!(g > 0.0);
            sum += g;
        }
        let mean = sum / n as f64;
        assert!((mean - target).abs() / target < 0.005, "mean {mean}");
        assert!(sample_sinr(0.0, &mut rng).is_err());
        assert!(sample_sinr(-1.0, &mut rng).is_err());
    }

    #[test]
    fn seeded_draws_are_identical() {
        let mut a = stream(11, 2, StreamKind::Observation, 9);
        let mut b = stream(11, 2, StreamKind::Observation, 9);
        assert_eq!(sample_sinr(2.0, &mut a).unwrap(), sample_sinr(2.0, &mut b).unwrap());
        let cov = Matrix2::new(1.0, 0.0, 0.0, 1.0);
        assert_eq!(
            noisy_measurement((5.0, 0.1), &cov, &mut a),
            noisy_measurement((5.0, 0.1), &cov, &mut b)
        );
    }

    #[test]
    fn batch_has_ms_ns_k_entries_in_fixed_order() {
        let layout = layout_two_by_three();
        let scatter = ScatterModel::uniform(2, 3, 2, 1.0).unwrap();
        let arm = SuperArm::new(vec![true, true], vec![true, true, true]).unwrap();
        let truths = vec![
            TargetState { x: 3.0, vx: 0.0, y: 4.0, vy: 0.0 },
            TargetState { x: 7.0, vx: 0.0, y: 2.0, vy: 0.0 },
        ];
        let bounds = vec![(1e-6, 10.0), (1e-6, 10.0)];
        let sigma0 = Matrix2::new(5.0, 0.0, 0.0, 0.002);
        let mut rng = stream(13, 0, StreamKind::Observation, 0);
        let batch = observe(&layout, &scatter, &arm, &truths, &bounds, &sigma0, 1, &mut rng).unwrap();
        // M_s = 2, N_s = 3, K = 2 → M_s · N_s · K = 12 entries.
        assert_eq!(batch.measurements.len(), 12);
        assert_eq!(batch.sinr_samples.len(), 12);
        let order: Vec<(usize, usize, usize)> =
            batch.measurements.iter().map(|z| (z.target, z.channel.0, z.channel.1)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted, "batch must be ordered by (k, m, n)");

        // Same seed and arm regenerate the identical batch.
        let mut rng2 = stream(13, 0, StreamKind::Observation, 0);
        let batch2 = observe(&layout, &scatter, &arm, &truths, &bounds, &sigma0, 1, &mut rng2).unwrap();
        assert_eq!(batch, batch2);
    }

    #[test]
    fn single_target_batch_size_is_channel_count() {
        let layout = layout_two_by_three();
        let scatter = ScatterModel::uniform(2, 3, 1, 1.0).unwrap();
        let arm = SuperArm::new(vec![true, true], vec![true, true, true]).unwrap();
        let truths = vec![TargetState { x: 3.0, vx: 0.0, y: 4.0, vy: 0.0 }];
        let bounds = vec![(1e-6, 10.0)];
        let sigma0 = Matrix2::new(5.0, 0.0, 0.0, 0.002);
        let mut rng = stream(17, 0, StreamKind::Observation, 0);
        let batch = observe(&layout, &scatter, &arm, &truths, &bounds, &sigma0, 4, &mut rng).unwrap();
        assert_eq!(batch.measurements.len(), 6);
    }

    #[test]
    fn sinr_samples_are_uncorrelated_across_channels() {
        let mut rng = stream(19, 0, StreamKind::Observation, 0);
        let n = 10_000usize;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(sample_sinr(2.0, &mut rng).unwrap());
            b.push(sample_sinr(5.0, &mut rng).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..n {
            cov += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma).powi(2);
            vb += (b[i] - mb).powi(2);
        }
        let corr = cov / (va.sqrt() * vb.sqrt());
        assert!(corr.abs() < 0.05, "cross-correlation {corr}");
    }

    proptest! {
        #[test]
        fn noise_shrinks_as_sinr_grows(s1 in 0.01f64..9.99, s2 in 0.01f64..9.99) {
            prop_assume!(s1 < s2);
            let sigma0 = Matrix2::new(5.0, 0.0, 0.0, 0.002);
            let l1 = crate::geometry::lambda_coeff(s1, 0.005, 10.0).unwrap();
            let l2 = crate::geometry::lambda_coeff(s2, 0.005, 10.0).unwrap();
            let c1 = crate::geometry::measurement_covariance(l1, &sigma0).unwrap();
            let c2 = crate::geometry::measurement_covariance(l2, &sigma0).unwrap();
            prop_assert!(c2[(0, 0)] < c1[(0, 0)]);
            prop_assert!(c2[(1, 1)] < c1[(1, 1)]);
        }

        #[test]
        fn wrap_angle_lands_in_half_open_interval(a in -50.0f64..50.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            // Wrapping preserves the angle modulo 2π.
            prop_assert!(((w - a).rem_euclid(2.0 * PI)).min((a - w).rem_euclid(2.0 * PI)) < 1e-9);
        }
    }
}
