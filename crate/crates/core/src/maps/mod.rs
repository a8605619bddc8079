//! The per-pixel inverse pipeline: bias calibration, frequency maps, vector
//! maps, magnitude/angle maps and sensitivity estimates.

mod sensitivity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::fit::{self, FitError, FitOptions, FitStart, SpectrumFit};
use crate::nv::{self, FieldVector, NvError, OrientationSet, PhysicalConstants, ProjectionQuad, ResonanceQuad};
use crate::synth::{ContrastProfile, DipModel, OdmrCube};
pub use sensitivity::{
    calibrate_counts, sensitivity, sensitivity_report, t2star_from_linewidth, OrientationSensitivity,
    SensitivityReport, LORENTZIAN_SLOPE_FACTOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapsError {
    #[error(transparent)]
    Nv(#[from] NvError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("bad region: {0}")]
    BadRegion(String),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("{fraction:.3} of pixels failed to converge (limit {threshold})")]
    TooManyUnconverged { fraction: f64, threshold: f64 },
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<(), MapsError> {
        if self.w == 0 || self.h == 0 || self.x + self.w > width || self.y + self.h > height {
            return Err(MapsError::BadRegion(format!(
                "{}x{} at ({}, {}) does not fit a {width}x{height} image",
                self.w, self.h, self.x, self.y
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, o: &PixelRect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| (x, y)))
    }

    /// Four `size × size` squares in the image corners.
    pub fn corners(width: usize, height: usize, size: usize) -> [PixelRect; 4] {
        [
            PixelRect::new(0, 0, size, size),
            PixelRect::new(width - size, 0, size, size),
            PixelRect::new(0, height - size, size, size),
            PixelRect::new(width - size, height - size, size, size),
        ]
    }
}

/// How calibration dips are matched to NV orientations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DipAssignment {
    /// Rank fitted amplitudes against these expected contrasts.
    ByAmplitude([f64; 4]),
    /// Nearest expected resonance, Hz.
    ByResonance([f64; 4]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationOptions {
    pub fit: FitOptions,
    pub consts: PhysicalConstants,
    pub axes: OrientationSet,
    pub assignment: DipAssignment,
    /// Dips closer than this are treated as merged, Hz.
    pub merge_tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            consts: PhysicalConstants::default(),
            axes: OrientationSet::standard(),
            assignment: DipAssignment::ByAmplitude(ContrastProfile::default().amplitude),
            merge_tolerance: 2e6,
        }
    }
}

/// Bias field and per-orientation reference dips from a field-free region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCalibration {
    pub region: PixelRect,
    pub b0: FieldVector,
    pub sign_pattern: [i8; 4],
    /// Signed bias projections, T.
    pub bias_projection: ProjectionQuad,
    /// Lower-branch resonance per orientation, Hz.
    pub reference_nu: [f64; 4],
    pub reference_amplitude: [f64; 4],
    /// Hz.
    pub reference_gamma_hwhm: [f64; 4],
    pub baseline: f64,
    /// Consistency residual of the bias quad, T.
    pub residual: f64,
}

impl BiasCalibration {
    pub fn start(&self) -> FitStart {
        FitStart {
            model: DipModel {
                amplitude: self.reference_amplitude,
                gamma_hwhm: self.reference_gamma_hwhm,
                nu: self.reference_nu,
            },
            baseline: self.baseline,
        }
    }
}

fn ambiguity(mags: &[f64; 4]) -> NvError {
    let ranked: Vec<_> = nv::rank_sign_patterns(mags).into_iter().filter(|c| c.signs[0] == 1).collect();
    NvError::AmbiguousSigns {
        best: ranked[0].signs,
        best_residual: ranked[0].residual,
        second: ranked[1].signs,
        second_residual: ranked[1].residual,
    }
}

/// Greedy minimum-distance matching; `out[i]` is the fitted dip for
/// orientation `i`.
fn greedy_match(fitted: &[f64; 4], reference: &[f64; 4]) -> [usize; 4] {
    let mut pairs: Vec<(f64, usize, usize)> = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| ((fitted[j] - reference[i]).abs(), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = [usize::MAX; 4];
    let mut used = [false; 4];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

/// Match fitted dips to reference resonances, refusing when two dips sit
/// within `tolerance` of the same reference.
pub fn assign_dips(fitted: &[f64; 4], reference: &[f64; 4], tolerance: f64) -> Option<[usize; 4]> {
    for r in reference {
        if fitted.iter().filter(|f| (*f - r).abs() < tolerance).count() > 1 {
            return None;
        }
    }
    Some(greedy_match(fitted, reference))
}

/// Fit the mean spectrum of `region` and resolve the bias vector.
pub fn calibrate_bias(cube: &OdmrCube, region: PixelRect, opts: &CalibrationOptions) -> Result<BiasCalibration, MapsError> {
    region.check_within(cube.width_px, cube.height_px)?;
    if region.w < 10 || region.h < 10 {
        return Err(MapsError::BadRegion(format!("{}x{} region, need at least 10x10", region.w, region.h)));
    }
    let spectrum = cube.mean_spectrum(region.x, region.y, region.w, region.h);
    let f = fit::fit_spectrum(&cube.frequencies, &spectrum, None, &opts.fit)?;
    let c = &opts.consts;
    let order = match opts.assignment {
        DipAssignment::ByAmplitude(expected) => {
            let mut by_fit = [0usize, 1, 2, 3];
            by_fit.sort_by(|&a, &b| f.amplitude[b].total_cmp(&f.amplitude[a]));
            let mut by_ref = [0usize, 1, 2, 3];
            by_ref.sort_by(|&a, &b| expected[b].total_cmp(&expected[a]));
            let mut out = [0usize; 4];
            for k in 0..4 {
                out[by_ref[k]] = by_fit[k];
            }
            out
        }
        DipAssignment::ByResonance(expected) => greedy_match(&f.nu, &expected),
    };
    let res = ResonanceQuad {
        nu_lower: order.map(|j| f.nu[j]),
    };
    let mags = res.magnitudes(c);
    let a_max = f.amplitude.iter().copied().fold(0.0, f64::max);
    let merged = f.nu.windows(2).any(|w| w[1] - w[0] < opts.merge_tolerance);
    if merged || f.amplitude.iter().any(|&a| a < 0.05 * a_max) {
        return Err(ambiguity(&mags).into());
    }
    if !f.converged {
        return Err(FitError::NotConverged.into());
    }
    let (q, _) = nv::resolve_bias_signs(&res, c)?;
    let rec = nv::reconstruct_vector_with(&q, &opts.axes);
    Ok(BiasCalibration {
        region,
        b0: rec.b,
        sign_pattern: q.sign_pattern,
        bias_projection: q,
        reference_nu: res.nu_lower,
        reference_amplitude: order.map(|j| f.amplitude[j]),
        reference_gamma_hwhm: order.map(|j| f.gamma_hwhm[j]),
        baseline: f.baseline,
        residual: rec.residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapOptions {
    pub fit: FitOptions,
    /// Edge of the square tiles within which warm starts are chained.
    pub tile: usize,
    /// Two dips within this distance of one reference flag the pixel, Hz.
    pub assign_tolerance: f64,
    /// Largest accepted consistency residual, T.
    pub max_residual: f64,
    /// Flag pixels whose dip amplitude or width differs from the calibration
    /// by more than this many standard errors; `None` disables the check.
    pub lineshape_sigma: Option<f64>,
    /// Relative deviation from the calibration always tolerated.
    pub lineshape_floor: f64,
    pub consts: PhysicalConstants,
    pub axes: OrientationSet,
    pub exec: Execution,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            tile: 16,
            assign_tolerance: 2e6,
            max_residual: 50e-6,
            lineshape_sigma: Some(4.0),
            lineshape_floor: 0.02,
            consts: PhysicalConstants::default(),
            axes: OrientationSet::standard(),
            exec: Execution::default(),
        }
    }
}

/// Per-pixel fit results in orientation order, row-major.
///
/// Entries are NaN where the pixel did not converge or could not be assigned.
/// `lineshape_ok` is false where the dips are diluted or broadened relative
/// to the calibration, the signature of several fields mixing in one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMaps {
    pub width_px: usize,
    pub height_px: usize,
    /// Hz.
    pub nu: [Vec<f64>; 4],
    /// One-sigma fit error, Hz.
    pub nu_err: [Vec<f64>; 4],
    pub amplitude: [Vec<f64>; 4],
    /// Hz.
    pub gamma_hwhm: [Vec<f64>; 4],
    pub baseline: Vec<f64>,
    pub rss: Vec<f64>,
    pub converged: Vec<bool>,
    pub assigned: Vec<bool>,
    pub lineshape_ok: Vec<bool>,
}

impl FrequencyMaps {
    pub fn n_pixels(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.converged[k] && self.assigned[k] && self.lineshape_ok[k]
    }

    pub fn converged_fraction(&self) -> f64 {
        self.converged.iter().filter(|&&c| c).count() as f64 / self.n_pixels().max(1) as f64
    }

    /// Fail when more than `threshold` of the pixels did not converge.
    pub fn check_convergence(&self, threshold: f64) -> Result<(), MapsError> {
        let fraction = 1.0 - self.converged_fraction();
        if fraction > threshold {
            return Err(MapsError::TooManyUnconverged { fraction, threshold });
        }
        Ok(())
    }

    fn empty(width_px: usize, height_px: usize) -> Self {
        let n = width_px * height_px;
        let nan = || vec![f64::NAN; n];
        Self {
            width_px,
            height_px,
            nu: std::array::from_fn(|_| nan()),
            nu_err: std::array::from_fn(|_| nan()),
            amplitude: std::array::from_fn(|_| nan()),
            gamma_hwhm: std::array::from_fn(|_| nan()),
            baseline: nan(),
            rss: nan(),
            converged: vec![false; n],
            assigned: vec![false; n],
            lineshape_ok: vec![false; n],
        }
    }
}

fn fit_pixel(cube: &OdmrCube, x: usize, y: usize, warm: &FitStart, opts: &FitOptions) -> Option<SpectrumFit> {
    let data: Vec<f64> = cube.spectrum(x, y).iter().map(|&v| f64::from(v)).collect();
    fit::fit_spectrum(&cube.frequencies, &data, Some(warm), opts)
        .ok()
        .filter(|f| f.is_finite())
}

/// Fit every pixel and assign its dips to orientations.
///
/// The image is cut into `opts.tile`-sized squares processed independently;
/// inside a tile pixels are visited row-major and each fit starts from the
/// previous converged one (the calibration dips for the first), so results
/// depend only on the tile size.
pub fn frequency_maps(cube: &OdmrCube, calib: &BiasCalibration, opts: &MapOptions) -> Result<FrequencyMaps, MapsError> {
    cube.check().map_err(|e| MapsError::Mismatch(e.to_string()))?;
    let (w, h) = (cube.width_px, cube.height_px);
    let tile = opts.tile.max(1);
    let (tw, th) = (w.div_ceil(tile), h.div_ceil(tile));
    let seed = calib.start();
    let tiles = opts.exec.map_indexed(tw * th, |t| {
        let (x0, y0) = ((t % tw) * tile, (t / tw) * tile);
        let mut warm = seed;
        let mut out = Vec::with_capacity(tile * tile);
        for y in y0..(y0 + tile).min(h) {
            for x in x0..(x0 + tile).min(w) {
                let fit = fit_pixel(cube, x, y, &warm, &opts.fit);
                if let Some(f) = fit.as_ref().filter(|f| f.converged) {
                    warm = f.start();
                }
                out.push((x, y, fit));
            }
        }
        out
    });
    let mut maps = FrequencyMaps::empty(w, h);
    for (x, y, fit) in tiles.into_iter().flatten() {
        let Some(f) = fit else { continue };
        let k = y * w + x;
        maps.converged[k] = f.converged;
        maps.rss[k] = f.rss;
        maps.baseline[k] = f.baseline;
        if !f.converged {
            continue;
        }
        if let Some(order) = assign_dips(&f.nu, &calib.reference_nu, opts.assign_tolerance) {
            maps.assigned[k] = true;
            for i in 0..4 {
                maps.nu[i][k] = f.nu[order[i]];
                maps.nu_err[i][k] = f.nu_err[order[i]];
                maps.amplitude[i][k] = f.amplitude[order[i]];
                maps.gamma_hwhm[i][k] = f.gamma_hwhm[order[i]];
            }
            maps.lineshape_ok[k] = lineshape_consistent(&f, &order, calib, opts);
        }
    }
    Ok(maps)
}

fn lineshape_consistent(f: &SpectrumFit, order: &[usize; 4], calib: &BiasCalibration, opts: &MapOptions) -> bool {
    let Some(k) = opts.lineshape_sigma else { return true };
    let close = |v: f64, err: f64, reference: f64| {
        let tol = (k * err).max(opts.lineshape_floor * reference);
        (v - reference).abs() <= tol
    };
    (0..4).all(|i| {
        let j = order[i];
        close(f.amplitude[j], f.amplitude_err[j], calib.reference_amplitude[i])
            && close(f.gamma_hwhm[j], f.gamma_err[j], calib.reference_gamma_hwhm[i])
    })
}

/// Per-pixel lab-frame field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMaps {
    pub width_px: usize,
    pub height_px: usize,
    /// T; NaN components where invalid.
    pub b: Vec<FieldVector>,
    pub valid: Vec<bool>,
    /// Consistency residual `√3/4 |Σ p_i|`, T.
    pub residual: Vec<f64>,
    pub bias_subtracted: bool,
}

impl VectorMaps {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len().max(1) as f64
    }
}

/// Turn frequency maps into vector maps using the calibration signs.
///
/// A pixel is valid when its fit converged and was assigned, no projection
/// may have changed sign relative to the bias, and the residual is at most
/// `opts.max_residual`.
pub fn vector_maps(
    fmaps: &FrequencyMaps,
    calib: &BiasCalibration,
    subtract_bias: bool,
    opts: &MapOptions,
) -> VectorMaps {
    let n = fmaps.n_pixels();
    let nan = FieldVector::new(f64::NAN, f64::NAN, f64::NAN);
    let per_pixel = opts.exec.map_indexed(n, |k| {
        if !fmaps.is_valid(k) {
            return (nan, false, f64::NAN);
        }
        let res = ResonanceQuad {
            nu_lower: std::array::from_fn(|i| fmaps.nu[i][k]),
        };
        let sp = nv::signed_projections(&res, &calib.bias_projection, &opts.consts);
        let rec = nv::reconstruct_vector_with(&sp.quad, &opts.axes);
        let b = if subtract_bias { rec.b - calib.b0 } else { rec.b };
        let ok = sp.valid() && rec.residual <= opts.max_residual && b.is_finite();
        (if ok { b } else { nan }, ok, rec.residual)
    });
    let mut vm = VectorMaps {
        width_px: fmaps.width_px,
        height_px: fmaps.height_px,
        b: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
        residual: Vec::with_capacity(n),
        bias_subtracted: subtract_bias,
    };
    for (b, v, r) in per_pixel {
        vm.b.push(b);
        vm.valid.push(v);
        vm.residual.push(r);
    }
    vm
}

#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeAngle {
    /// T; NaN where the vector is invalid.
    pub magnitude: Vec<f64>,
    /// `atan2(by, bx)` in radians; NaN where undefined.
    pub angle: Vec<f64>,
    pub angle_defined: Vec<bool>,
    /// RMS residual over the valid 3×3 neighbourhood, T.
    pub noise_floor: Vec<f64>,
}

/// Field magnitude and in-plane angle; the angle is only reported where the
/// in-plane component exceeds three times the local noise floor.
pub fn magnitude_and_angle(vm: &VectorMaps) -> MagnitudeAngle {
    let (w, h) = (vm.width_px, vm.height_px);
    let n = w * h;
    let mut out = MagnitudeAngle {
        magnitude: vec![f64::NAN; n],
        angle: vec![f64::NAN; n],
        angle_defined: vec![false; n],
        noise_floor: vec![f64::NAN; n],
    };
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if !vm.valid[k] {
                continue;
            }
            let (mut acc, mut cnt) = (0.0, 0usize);
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = yy * w + xx;
                    if vm.valid[j] {
                        acc += vm.residual[j] * vm.residual[j];
                        cnt += 1;
                    }
                }
            }
            let floor = (acc / cnt as f64).sqrt();
            let b = vm.b[k];
            out.magnitude[k] = b.norm();
            out.noise_floor[k] = floor;
            if b.bx.hypot(b.by) > 3.0 * floor {
                out.angle[k] = b.by.atan2(b.bx);
                out.angle_defined[k] = true;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub calib_region: PixelRect,
    pub calibration: CalibrationOptions,
    pub maps: MapOptions,
    pub subtract_bias: bool,
    /// Apply the 3×3 moving average first.
    pub average: bool,
}

impl PipelineOptions {
    pub fn new(calib_region: PixelRect) -> Self {
        Self {
            calib_region,
            calibration: CalibrationOptions::default(),
            maps: MapOptions::default(),
            subtract_bias: true,
            average: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub calibration: BiasCalibration,
    pub frequency: FrequencyMaps,
    pub vectors: VectorMaps,
}

/// Average, calibrate, fit and reconstruct in one call.
pub fn run_pipeline(cube: &OdmrCube, opts: &PipelineOptions) -> Result<PipelineOutput, MapsError> {
    let averaged;
    let cube = if opts.average {
        averaged = fit::moving_average_3x3(cube, opts.maps.exec)?;
        &averaged
    } else {
        cube
    };
    let calibration = calibrate_bias(cube, opts.calib_region, &opts.calibration)?;
    let frequency = frequency_maps(cube, &calibration, &opts.maps)?;
    let vectors = vector_maps(&frequency, &calibration, opts.subtract_bias, &opts.maps);
    Ok(PipelineOutput {
        calibration,
        frequency,
        vectors,
    })
}
