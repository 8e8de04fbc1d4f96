//! Monte Carlo laboratory for the finite-point motions of Arratia flows with drift.
//!
//! The crate samples driving noise (Wiener paths, Brownian bridges, pinned
//! bridges), builds coalescing trajectories from it, evaluates the Girsanov
//! stochastic exponentials of the drifted n-point motion, and estimates the
//! point densities of the surviving particles in several independent ways so
//! that the representation formulas can be cross-checked numerically.
//!
//! Path-level code is generic over the floating point type through
//! [`Scalar`]; estimators accumulate in `f64`. The aliases at the crate root
//! fix the scalar for the common `f64` (and `f32`) use.

pub mod coalesce;
pub mod error;
pub mod estimators;
pub mod girsanov;
pub mod harness;
pub mod paths;
pub mod reduce;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use coalesce::{CoalescedBundle, IndexSet, MeetingTimes, Scheme, SchemeReplay};
pub use estimators::{DensityEstimate, MCEstimate, Simulation, Window};
pub use girsanov::LogWeight;
pub use paths::{BridgeMode, DriftSpec};
pub use rng::RngStream;

/// Default scalar.
pub type Real = f64;

pub type TimeGrid = paths::TimeGrid<Real>;
pub type WienerBundle = paths::WienerBundle<Real>;
pub type BridgeBundle = paths::BridgeBundle<Real>;
pub type PinnedBundle = paths::PinnedBundle<Real>;
pub type FreePaths = paths::FreePaths<Real>;
pub type Coalesced = coalesce::CoalescedBundle<Real>;
pub type Weight = girsanov::LogWeight<Real>;

pub type TimeGrid32 = paths::TimeGrid<f32>;
pub type WienerBundle32 = paths::WienerBundle<f32>;
pub type BridgeBundle32 = paths::BridgeBundle<f32>;
pub type PinnedBundle32 = paths::PinnedBundle<f32>;
pub type FreePaths32 = paths::FreePaths<f32>;
pub type Coalesced32 = coalesce::CoalescedBundle<f32>;
pub type Weight32 = girsanov::LogWeight<f32>;
