//! Random walks in a random one-dimensional environment with killing on
//! holding steps: site laws, the potential, large-deviation rates, quenched
//! dynamic programming and annealed survival estimates.

pub mod annealed;
pub mod env;
pub mod error;
pub mod ext;
pub mod law;
pub mod potential;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod walk;

pub use env::{sample_window, sample_window_member, Environment};
pub use error::{AnnealedError, LawError, PotentialError, RateError, WalkError};
pub use ext::ExtReal;
pub use law::{Atom, Regime, Safety, SiteLaw, Triple};
