//! Verification engine for the differential geometry of Cartan spaces.
//!
//! Given a fundamental function `K^2(x, p)` on the slit cotangent bundle,
//! the engine assembles every tensor, frame and connection of the
//! associated geometry — fundamental tensors, the canonical nonlinear
//! connection, the Sasaki almost-Kähler lift, the vertical Liouville
//! apparatus, fiber-leaf geometry, indicatrix CR structure, and the
//! Vrănceanu/Vaisman connection pair with its adapted basic-connection
//! triple — and certifies the identities relating them as pointwise
//! residual checks at sampled phase points.
//!
//! Derivatives come from an exact forward-mode Taylor kernel ([`jets`]);
//! an independent finite-difference oracle ([`oracle`]) cross-validates
//! them.

pub mod cartan;
pub mod checks;
pub mod connections;
pub mod error;
pub mod expr;
pub mod fiber;
pub mod frames;
pub mod harness;
pub mod indicatrix;
pub mod jets;
pub mod liouville;
pub mod metrics;
pub mod oracle;
pub mod point;
pub mod state;
pub mod subfoliation;

pub use error::{CartanError, Result};
pub use point::PhasePoint;
