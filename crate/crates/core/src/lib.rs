//! Stochastic homogenization experiments for Hamilton-Jacobi equations on
//! Carnot groups.
//!
//! The crate covers the group algebra ([`group`]), horizontal curves
//! ([`paths`]), random environments ([`environment`]), action minimization
//! ([`solver`]), effective Lagrangian estimation and limit problems
//! ([`homog`]) and the command-line harness ([`harness`]).

pub mod environment;
pub mod error;
pub mod group;
pub mod harness;
pub mod homog;
pub mod legendre;
pub mod paths;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use group::{GroupPoint, GroupSpec};
