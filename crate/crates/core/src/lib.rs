//! Numerical study of segregation patterns for strongly competing species
//! on the unit disk.
//!
//! The crate solves the elliptic competition system
//! `-Δu_i = -β u_i Σ_{j≠i} a_ij u_j` with prescribed boundary traces and
//! follows the solutions along a β-continuation toward the segregated limit.
//! All fields live on a log-polar grid: the unit disk minus a tiny central
//! hole is mapped onto the periodic strip `(θ, y) = (θ, -log r)`, where the
//! free-boundary spirals of the limit problem become straight lines and the
//! vanishing order of solutions becomes a decay rate in `y`.
//!
//! Modules:
//! - [`grid`]: strip grid, fields, coordinate maps
//! - [`traces`]: sector boundary data
//! - [`solver`]: screened linear solves and the nonlinear relaxation
//! - [`segregation`]: overlap metrics, multiplicity maps, nodal curves
//! - [`spectral`]: competition constants, weighted fields, strip Fourier analysis
//! - [`spiral`]: spiral and vanishing-order fits
//! - [`config`], [`report`], [`io`]: experiment plumbing for the CLI

pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod report;
pub mod segregation;
pub mod selftest;
pub mod solver;
pub mod spectral;
pub mod spiral;
pub mod traces;

pub use error::{Error, Result};
