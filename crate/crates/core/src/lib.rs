//! Symbol detection for dual-hop massive-MIMO amplify-and-forward relays.
//!
//! The transmission chain is `z = C(Hx + w) + n`: a source with `L` antennas
//! sends `x` over a first Rayleigh hop `H` to an `M`-antenna relay, which
//! forwards its noisy received signal as-is over a second hop `C` to an
//! `N`-antenna destination. Only `z`, the channels, and the noise levels are
//! known at the destination; the relay signal `y` stays hidden.
//!
//! The crate provides:
//!
//! - [`detector`] — the iterative joint detector: Gaussian message passing
//!   over the chain's factor graph with extrinsic (turbo-style) updates,
//!   producing a posterior-mean symbol estimate per iteration.
//! - [`se`] — a scalar state-evolution recursion that predicts the joint
//!   detector's per-iteration MSE from the channel Gram spectra alone.
//! - [`baselines`] — LS/LMMSE/EP reference detectors that process the hops
//!   separately or collapse them into one compound model.
//! - [`oracle`] — exact posteriors (enumeration for discrete priors, closed
//!   form for Gaussian priors) for small instances, used for verification.
//! - [`registry`] — a name-keyed registry of [`registry::Detector`]
//!   implementations so harnesses can select algorithms at runtime.

pub mod baselines;
pub mod constellation;
pub mod detector;
pub mod linalg;
pub mod messages;
pub mod oracle;
pub mod registry;
pub mod se;
pub mod system;

pub use constellation::{Constellation, GaussianPrior, Prior};
pub use detector::{DetectorOptions, DetectorResult};
pub use messages::{GaussianMessage, VarianceBounds};
pub use registry::{Detector, DetectorRegistry, Observation};
pub use system::{Dimensions, SystemInstance};
