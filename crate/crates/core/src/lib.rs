//! Loop-space variational toolkit for magnetic flows on twisted cotangent
//! bundles of the 2-torus.
//!
//! The crate finds closed orbits on energy levels through the free-time
//! Lagrangian action and the Rabinowitz action, computes Morse and
//! Conley-Zehnder indices, brackets Mañé critical values, assembles a
//! Morse-Bott chain complex with cascades, and extracts leaf-wise
//! intersection points.

pub mod cli;
pub mod error;
pub mod fourier;
pub mod free_time;
pub mod geometry;
pub mod indices;
pub mod leafwise;
pub mod linalg;
pub mod loops;
pub mod mane;
pub mod morse_complex;
pub mod ode;
pub mod rabinowitz;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use fourier::{FourierField, FourierTerm};
pub use geometry::{HomotopyClass, ManifoldModel, ReferenceLoop};
pub use loops::{DiscreteLoop, TangentField};
