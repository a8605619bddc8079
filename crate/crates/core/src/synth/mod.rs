//! Synthetic pulsed-ODMR data: schedule arithmetic, the four-dip spectral
//! model, contrast cubes with camera shot noise, and Rabi traces.

mod cube;
mod rabi;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nv::{self, FieldVector, NvError, OrientationSet, PhysicalConstants};
pub use cube::{mirror_half_spectrum, synth_cube, NoiseMode, OdmrCube, ShotNoise, SynthConfig};
pub use rabi::{rabi_model, rabi_trace, RabiNoise, RabiParams};
pub use schedule::{build_schedule, PulseSchedule, ScheduleParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("sweep must have positive step and stop >= start")]
    BadSweep,
    #[error("durations must be positive and one sequence must fit in the exposure")]
    BadTiming,
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    #[error("cube already spans both sides of D")]
    AlreadyMirrored,
    #[error("durations must be non-negative and sorted")]
    BadDurations,
    #[error(transparent)]
    Nv(#[from] NvError),
}

/// Per-orientation Lorentzian dip parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipModel {
    /// Dip depth, dimensionless contrast.
    pub amplitude: [f64; 4],
    /// Half width at half maximum, Hz.
    pub gamma_hwhm: [f64; 4],
    /// Center frequency, Hz.
    pub nu: [f64; 4],
}

impl DipModel {
    pub fn is_valid(&self) -> bool {
        self.amplitude.iter().all(|a| *a >= 0.0 && a.is_finite())
            && self.gamma_hwhm.iter().all(|g| *g > 0.0 && g.is_finite())
            && self.nu.iter().all(|n| n.is_finite())
    }
}

/// Dip depth at `nu`: `Σ A_i Γ_i² / ((ν - ν_i)² + Γ_i²)`.
pub fn spectrum_model(d: &DipModel, nu: f64) -> f64 {
    (0..4)
        .map(|i| {
            let g2 = d.gamma_hwhm[i] * d.gamma_hwhm[i];
            let dn = nu - d.nu[i];
            d.amplitude[i] * g2 / (dn * dn + g2)
        })
        .sum()
}

/// Spatially uniform dip depths and widths per orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastProfile {
    pub amplitude: [f64; 4],
    pub gamma_hwhm: [f64; 4],
}

impl Default for ContrastProfile {
    /// Corner-averaged contrasts and linewidths of a reference measurement;
    /// the reported linewidths are read as FWHM.
    fn default() -> Self {
        Self {
            amplitude: [1.138e-2, 0.868e-2, 0.458e-2, 0.677e-2],
            gamma_hwhm: [4.942e6, 5.312e6, 4.961e6, 5.169e6].map(crate::fit::hwhm_from_fwhm),
        }
    }
}

/// Dips for a total field, with per-orientation out-of-sweep flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldDips {
    pub model: DipModel,
    pub out_of_sweep: [bool; 4],
}

/// Lower-branch dips for `b_total`; a dip is flagged when its center lies
/// outside `(sweep_start - 5Γ, sweep_stop)`.
pub fn dips_from_field(
    b_total: FieldVector,
    axes: &OrientationSet,
    consts: &PhysicalConstants,
    profile: &ContrastProfile,
    sweep: (f64, f64),
) -> Result<FieldDips, SynthError> {
    let q = nv::project_field(b_total, axes);
    let mut nu = [0.0; 4];
    let mut out_of_sweep = [false; 4];
    for i in 0..4 {
        nu[i] = nv::resonance_pair(q.p[i], consts)?.0;
        out_of_sweep[i] = !(nu[i] > sweep.0 - 5.0 * profile.gamma_hwhm[i] && nu[i] < sweep.1);
    }
    Ok(FieldDips {
        model: DipModel {
            amplitude: profile.amplitude,
            gamma_hwhm: profile.gamma_hwhm,
            nu,
        },
        out_of_sweep,
    })
}
