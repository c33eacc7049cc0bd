//! Closed-loop transmitter-receiver selection for distributed MIMO radar
//! target tracking.
//!
//! A distributed MIMO radar with `M` transmitters and `N` receivers tracks
//! `K` moving targets. At every time step a *super arm* — `M_s` transmitters
//! paired with `N_s` receivers — is selected, the `M_s·N_s` chosen channels
//! return SINR-dependent range/azimuth measurements plus fluctuating SINR
//! samples, and an IMM-UKF bank turns those into state estimates. Channel
//! SINR means evolve with the target geometry whether or not a channel is
//! probed, which makes the selection problem a multi-group combinatorial
//! *restless* bandit. The closed-loop policy predicts next-step SINR from the
//! tracker output, scores arms with UCB-style indices, and searches the
//! feasible super-arm space with binary particle swarm optimization.
//!
//! Module map:
//! - [`geometry`]: ranges, path loss, true channel SINR, noise scaling.
//! - [`dynamics`]: NCV/NCT motion models and ground-truth generation.
//! - [`sensing`]: measurement and SINR-sample generation for a super arm.
//! - [`tracking`]: per-channel IMM-UKF bank, channel fusion, state prediction.
//! - [`bandit`]: per-target arm state, reward prediction, indices, policies.
//! - [`bpso`]: binary PSO over feasible super arms.
//! - [`harness`]: the closed loop, Monte-Carlo trials, metrics.
//! - [`config`]: scenario files and the bundled scenarios.

pub mod bandit;
pub mod bpso;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod rng;
pub mod sensing;
pub mod tracking;

pub use error::{Error, Result};
