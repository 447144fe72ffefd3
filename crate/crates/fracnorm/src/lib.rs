//! Fractional Sobolev seminorms and real-interpolation K-functionals on
//! non-smooth planar domains.
//!
//! The crate computes, on polygonal domains with holes and zero-width slits
//! and on snowflake-type domains:
//!
//! * Gagliardo seminorms, both over all pairs (`W^{s,p}`) and restricted to
//!   `|x - y| < d(x)/2` where `d` is the boundary distance;
//! * K-functional upper bounds `K(l, f) = inf { ||g||_p + l ||h||_{1,p} }`
//!   by convex minimization over piecewise-linear finite element spaces and
//!   by an explicit partition-of-unity averaging construction;
//! * the discretized interpolation seminorm with its tail bound;
//! * an independent Monte Carlo oracle for the seminorms.
//!
//! Start with the runnable programs under `examples/`; the `fracnorm` binary
//! wraps the same entry points as subcommands.

pub mod error;
pub mod field;
pub mod geometry;
pub mod kfunctional;
pub mod meshing;
pub mod quadrature;
pub mod seminorms;
pub mod snowflake;
pub mod tri;

pub use error::{Error, Result};
pub use geometry::{DomainSpec, Exponents, Point2};
