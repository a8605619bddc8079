//! Simulation and analysis toolkit for widefield NV-center vector magnetometry.
//!
//! The crate is organised along the data flow of a pulsed-ODMR experiment:
//!
//! - [`nv`]: NV-axis geometry, Zeeman conversion and lab-frame vector reconstruction.
//! - [`stray`]: magnetostatic forward model (dipole summation plus an analytic prism oracle).
//! - [`synth`]: pulse-schedule arithmetic and synthetic contrast cubes with shot noise.
//! - [`fit`]: 3×3 spatial averaging, four-Lorentzian least squares and Rabi fitting.
//! - [`maps`]: the per-pixel inverse pipeline, bias calibration and sensitivity estimates.
//! - [`io`]: the binary cube container, map CSV/PGM exports.
//!
//! Per-pixel work runs on rayon when the `parallel` feature is enabled (default).
//! Every parallel path has a sequential twin selected by [`Execution`], and both
//! produce bitwise-identical output.

pub mod error;
pub mod exec;
pub mod fit;
pub mod io;
pub mod maps;
pub mod nv;
pub mod stray;
pub mod synth;

pub use error::{Error, ErrorClass};
pub use exec::Execution;
pub use nv::{FieldVector, OrientationSet, PhysicalConstants, ProjectionQuad, ResonanceQuad};
pub use stray::{FieldMap, Scene};
pub use synth::{DipModel, OdmrCube, PulseSchedule};

/// Vacuum permeability over 4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;
