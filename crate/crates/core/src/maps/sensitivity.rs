//! Shot-noise-limited sensitivity from contrast, linewidth and counts.

use serde::{Deserialize, Serialize};

use super::{FrequencyMaps, MapsError, PixelRect};
use crate::fit::fwhm_from_hwhm;
use crate::nv::{OrientationSet, PhysicalConstants};
use crate::synth::OdmrCube;

/// `8/(3√3)`, the prefactor for a Lorentzian line probed at its steepest slope.
pub const LORENTZIAN_SLOPE_FACTOR: f64 = 1.539_600_717_839_002;

/// Inhomogeneous dephasing time `1/(π Γ)` from a FWHM linewidth.
pub fn t2star_from_linewidth(gamma_fwhm: f64) -> Result<f64, MapsError> {
    if !(gamma_fwhm > 0.0) || !gamma_fwhm.is_finite() {
        return Err(MapsError::NonPositive("linewidth"));
    }
    Ok(1.0 / (std::f64::consts::PI * gamma_fwhm))
}

fn positive(v: f64, what: &'static str) -> Result<f64, MapsError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(MapsError::NonPositive(what))
    }
}

/// `η = 8/(3√3) · ħ/(g_e μ_B) · √(t_o + T2*) / (C √S T2*)`, T/√Hz.
pub fn sensitivity(
    contrast: f64,
    gamma_fwhm: f64,
    counts: f64,
    t_o: f64,
    consts: &PhysicalConstants,
) -> Result<f64, MapsError> {
    let c = positive(contrast, "contrast")?;
    let s = positive(counts, "counts")?;
    let t_o = positive(t_o, "readout time")?;
    let t2 = t2star_from_linewidth(gamma_fwhm)?;
    Ok(LORENTZIAN_SLOPE_FACTOR * consts.hbar_over_ge_mub * (t_o + t2).sqrt() / (c * s.sqrt() * t2))
}

/// Counts `S` that make [`sensitivity`] return `eta`.
pub fn calibrate_counts(
    eta: f64,
    contrast: f64,
    gamma_fwhm: f64,
    t_o: f64,
    consts: &PhysicalConstants,
) -> Result<f64, MapsError> {
    let eta = positive(eta, "sensitivity")?;
    let unit = sensitivity(contrast, gamma_fwhm, 1.0, t_o, consts)?;
    Ok((unit / eta).powi(2))
}

/// Sensitivity inputs and result for one orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationSensitivity {
    pub orientation: String,
    pub contrast: f64,
    /// FWHM, Hz.
    pub linewidth_fwhm: f64,
    /// s.
    pub t2_star: f64,
    /// Counts.
    pub counts: f64,
    /// s.
    pub t_o: f64,
    /// T/√Hz.
    pub eta: f64,
    /// Pixels contributing to the averages.
    pub n_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub orientations: Vec<OrientationSensitivity>,
}

/// Average fitted contrast and linewidth over the corner regions and turn
/// them into one sensitivity per orientation.
///
/// Counts come from the cube metadata and `t_o` is the laser pulse length.
pub fn sensitivity_report(
    cube: &OdmrCube,
    fmaps: &FrequencyMaps,
    corners: &[PixelRect],
    consts: &PhysicalConstants,
) -> Result<SensitivityReport, MapsError> {
    if corners.is_empty() {
        return Err(MapsError::BadRegion("no corner regions".into()));
    }
    if fmaps.width_px != cube.width_px || fmaps.height_px != cube.height_px {
        return Err(MapsError::Mismatch("frequency maps and cube differ in size".into()));
    }
    for (i, a) in corners.iter().enumerate() {
        a.check_within(cube.width_px, cube.height_px)?;
        if corners[i + 1..].iter().any(|b| a.overlaps(b)) {
            return Err(MapsError::BadRegion("corner regions overlap".into()));
        }
    }
    let mut orientations = Vec::with_capacity(4);
    for i in 0..4 {
        let (mut sum_c, mut sum_g, mut n) = (0.0, 0.0, 0usize);
        for r in corners {
            for (x, y) in r.pixels() {
                let k = y * fmaps.width_px + x;
                if fmaps.is_valid(k) {
                    sum_c += fmaps.amplitude[i][k];
                    sum_g += fmaps.gamma_hwhm[i][k];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(MapsError::BadRegion("no valid pixels in the corner regions".into()));
        }
        let contrast = sum_c / n as f64;
        let linewidth_fwhm = fwhm_from_hwhm(sum_g / n as f64);
        let t_o = cube.schedule.t_laser;
        orientations.push(OrientationSensitivity {
            orientation: OrientationSet::LABELS[i].to_owned(),
            contrast,
            linewidth_fwhm,
            t2_star: t2star_from_linewidth(linewidth_fwhm)?,
            counts: cube.ref_counts_mean,
            t_o,
            eta: sensitivity(contrast, linewidth_fwhm, cube.ref_counts_mean, t_o, consts)?,
            n_pixels: n,
        });
    }
    Ok(SensitivityReport { orientations })
}
