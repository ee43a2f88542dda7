//! Solver and diagnostics laboratory for the isentropic compressible Euler
//! system on the flat torus.
//!
//! The library builds vanishing-viscosity approximations of the Euler system,
//! estimates the turbulent Reynolds and pressure defect fields produced by
//! coarse graining and weak limits, evaluates weak-form and energy-inequality
//! residuals against a bank of smooth test functions, and applies the
//! maximal-dissipation selection to ensembles of candidate solutions.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`state`] - equation of state, energy functions, grids, field containers
//! * [`solver`] - finite-volume integrator for the viscous approximation with
//!   its discrete energy ledger
//! * [`defect`] - block coarse graining and defect-field construction
//! * [`bank`] / [`weak_form`] - test functions and weak-formulation residuals
//! * [`analysis`] - dissipative records, compatibility and relative-energy
//!   diagnostics, Besov seminorms
//! * [`oscillation`] - patchwork solutions and weak-*-vs-strong convergence
//!   fixtures
//! * [`selection`] - energy-comparison relation and admissible-solution
//!   selection over ensembles
//! * [`riemann`] - exact solutions of the isentropic Riemann problem used as
//!   reference data
//! * [`io`] - binary array containers, CSV reports, run manifests

pub mod analysis;
pub mod bank;
pub mod defect;
pub mod error;
pub mod io;
pub mod linalg;
pub mod oscillation;
pub mod riemann;
pub mod selection;
pub mod solver;
pub mod state;
pub mod weak_form;

pub use error::{Error, Result};
pub use state::{ConservedField, EosParams, TorusGrid, Trajectory};
