//! Nonholonomic geodesic flows on compact Lie groups.
//!
//! This crate simulates and numerically certifies three families of
//! constrained rigid-body systems on `SO(n)`:
//!
//! * **LL systems** — left-invariant metric, left-invariant constraints
//!   (Euler–Poincaré–Suslov equations on the algebra), in [`eps`];
//! * **LR systems** — left-invariant metric, right-invariant constraints
//!   (the multidimensional Veselova problem, its sphere reduction, the
//!   Neumann correspondence, the Knörrer map and frame reconstruction),
//!   in [`lr`];
//! * **L+R systems** — left-invariant inertia perturbed by a right-invariant
//!   symmetric operator (Chaplygin sphere, spherical support, and the
//!   large-stiffness limit back to LR systems), in [`lplusr`].
//!
//! The supporting layers are an exact `so(n)` kernel ([`liealg`]), inertia
//! operators and constraint distributions ([`operators`]), and a fixed-step
//! integration engine with conservation monitors, divergence estimation and
//! time reparameterization ([`integrate`]).

pub mod eps;
pub mod error;
pub mod integrate;
pub mod liealg;
pub mod lplusr;
pub mod lr;
pub mod operators;

pub use error::{Error, Result};
