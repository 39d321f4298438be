//! Forward synthesis and point-probe inversion for time-harmonic acoustic
//! scattering by a compactly supported inhomogeneous medium.
//!
//! The crate has three layers:
//!
//! * **Forward modelling.** [`medium`] describes a refractive-index profile
//!   `n` with compact support, [`solver`] discretises the volume integral
//!   formulation of the scattering problem and produces total fields, Green
//!   functions and far-field patterns, and [`mie`] provides independent
//!   partial-wave series solutions for radially symmetric profiles that are
//!   used to validate the solver.
//! * **Point-probe synthesis.** [`foldy`] augments the medium with small
//!   impedance balls (probes) and synthesises the perturbed far-field
//!   measurements an experiment would record, one probe site at a time.
//! * **Inversion and stability.** [`invert`] recovers interior total fields,
//!   interior Green-function values and finally the refractive index from the
//!   measurement matrices; [`stability`] adds measurement noise and probe
//!   placement uncertainty and quantifies how the reconstruction degrades;
//!   [`experiments`] wires these into repeatable parameter sweeps.
//!
//! Far-field conventions: an incident plane wave `exp(i kappa theta . x)`
//! with unit direction `theta` produces a scattered field that behaves like
//! `exp(i kappa |x|) / (4 pi |x|) * F(xhat)` for large `|x|`, and all
//! "far-field pattern" values in this crate are that coefficient `F(xhat)`.
//! Measurement matrices sample `F` in backscatter layout: entry `(i, j)`
//! observes along `-theta_i` for incidence `theta_j`.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod farfield;
pub mod foldy;
pub mod geom;
pub mod invert;
pub mod io;
pub mod layout;
pub mod medium;
pub mod mie;
pub mod solver;
pub mod special;
pub mod stability;
pub mod waves;

pub use error::{Result, ScatError};
pub use geom::Vec3;
