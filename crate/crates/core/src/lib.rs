//! Double-auction trade reduction mechanisms and the tooling to check their
//! gains-from-trade guarantees under market augmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`distribution`]: value distributions given by their quantile functions,
//!   first-order stochastic dominance and the overlap parameter `Pr[b >= s]`.
//! - [`market`]: realized profiles, the first-best allocation, GFT and welfare.
//! - [`mechanisms`]: seller/buyer trade reduction and McAfee's trade reduction,
//!   together with IR / WBB / DSIC checkers.
//! - [`coupling`]: the quantile couplings between an original and an augmented
//!   market and the good/bad/concentration events defined on them.
//! - [`exactprob`]: exact rational event probabilities, their bounds and
//!   exhaustive small-instance oracles.
//! - [`experiment`]: the seeded, worker-count independent Monte Carlo engine
//!   and canned reproductions of the worked examples.

pub mod coupling;
pub mod distribution;
pub mod error;
pub mod exactprob;
pub mod experiment;
pub mod market;
pub mod mechanisms;
pub mod money;
pub mod rng;
pub mod stats;

pub use distribution::{DistributionKind, Overlap, QuantileDistribution};
pub use error::{Error, Result};
pub use market::{first_best, sort_views, welfare, Allocation, Profile, SortedViews};
pub use mechanisms::{btr, mcafee_tr, str_mechanism, Mechanism, MechanismOutcome};
pub use money::{parse_rational, Money, Rational};
