//! Contrast cubes and their synthesis from a field map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{dips_from_field, spectrum_model, ContrastProfile, PulseSchedule, SynthError};
use crate::exec::Execution;
use crate::nv::{FieldVector, OrientationSet, PhysicalConstants};
use crate::stray::FieldMap;

/// Per-pixel ODMR contrast spectra.
///
/// `contrast` is stored pixel-major: the spectrum of pixel `(x, y)` is the
/// contiguous slice starting at `(y·W + x)·n_freq`. Values are
/// `1 - signal/reference`, so a resonance appears as a positive dip depth.
#[derive(Clone, Debug, PartialEq)]
pub struct OdmrCube {
    pub width_px: usize,
    pub height_px: usize,
    /// Strictly increasing, Hz.
    pub frequencies: Vec<f64>,
    pub contrast: Vec<f32>,
    /// Mean reference counts per pixel per exposure.
    pub ref_counts_mean: f64,
    pub schedule: PulseSchedule,
    pub rng_seed: Option<u64>,
}

impl OdmrCube {
    pub fn n_freq(&self) -> usize {
        self.frequencies.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn spectrum(&self, x: usize, y: usize) -> &[f32] {
        let n = self.n_freq();
        let start = (y * self.width_px + x) * n;
        &self.contrast[start..start + n]
    }

    pub fn spectrum_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let n = self.n_freq();
        let start = (y * self.width_px + x) * n;
        &mut self.contrast[start..start + n]
    }

    pub fn check(&self) -> Result<(), SynthError> {
        if self.contrast.len() != self.n_pixels() * self.n_freq() {
            return Err(SynthError::BadDims("contrast length".into()));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SynthError::BadDims("frequencies not strictly increasing".into()));
        }
        Ok(())
    }

    /// Mean spectrum over a pixel rectangle.
    pub fn mean_spectrum(&self, x0: usize, y0: usize, w: usize, h: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_freq()];
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                for (a, &v) in acc.iter_mut().zip(self.spectrum(x, y)) {
                    *a += f64::from(v);
                }
            }
        }
        let n = (w * h) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// How shot noise is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    /// Mean counts, no randomness.
    Noiseless,
    /// One Poisson draw per image with the mean summed over `n_avg` repeats.
    #[default]
    Aggregated,
    /// `n_avg` separate signal/reference frames, summed.
    PerFrame,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotNoise {
    /// Mean reference counts per pixel per exposure.
    pub photons_per_pixel: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

impl ShotNoise {
    pub fn noiseless(photons_per_pixel: f64) -> Self {
        Self {
            photons_per_pixel,
            seed: 0,
            mode: NoiseMode::Noiseless,
        }
    }

    pub fn shot(photons_per_pixel: f64, seed: u64) -> Self {
        Self {
            photons_per_pixel,
            seed,
            mode: NoiseMode::Aggregated,
        }
    }
}

/// Everything [`synth_cube`] needs besides the field and schedule.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub noise: ShotNoise,
    pub profile: ContrastProfile,
    pub consts: PhysicalConstants,
    pub axes: OrientationSet,
    /// Optional per-pixel multiplier on all dip amplitudes (row-major).
    pub amplitude_scale: Option<Vec<f64>>,
    pub exec: Execution,
}

impl SynthConfig {
    pub fn new(noise: ShotNoise) -> Self {
        Self {
            noise,
            profile: ContrastProfile::default(),
            consts: PhysicalConstants::default(),
            axes: OrientationSet::standard(),
            amplitude_scale: None,
            exec: Execution::default(),
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(mean)
}

/// Synthesize a contrast cube for `bias + fieldmap` at every pixel.
///
/// Each pixel draws from its own ChaCha stream `(seed, pixel index)`, so the
/// result is independent of execution order.
pub fn synth_cube(
    fieldmap: &FieldMap,
    bias: FieldVector,
    schedule: &PulseSchedule,
    cfg: &SynthConfig,
) -> Result<OdmrCube, SynthError> {
    let n_pix = fieldmap.width_px * fieldmap.height_px;
    if fieldmap.data.len() != n_pix || n_pix == 0 {
        return Err(SynthError::BadDims("field map size".into()));
    }
    if let Some(s) = &cfg.amplitude_scale {
        if s.len() != n_pix {
            return Err(SynthError::BadDims("amplitude_scale length".into()));
        }
    }
    let noise = cfg.noise;
    if noise.mode != NoiseMode::Noiseless && !(noise.photons_per_pixel > 0.0) {
        return Err(SynthError::BadDims("photons_per_pixel must be positive".into()));
    }
    let freqs = schedule.frequencies();
    let n_f = freqs.len();
    let sweep = (schedule.sweep_start, schedule.sweep_stop);

    let mut models = Vec::with_capacity(n_pix);
    for (idx, b) in fieldmap.data.iter().enumerate() {
        let mut m = dips_from_field(bias + *b, &cfg.axes, &cfg.consts, &cfg.profile, sweep)?.model;
        if let Some(s) = &cfg.amplitude_scale {
            m.amplitude = m.amplitude.map(|a| a * s[idx]);
        }
        models.push(m);
    }

    let mut contrast = vec![0f32; n_pix * n_f];
    let n_avg = schedule.n_avg;
    cfg.exec.for_each_chunk_mut(&mut contrast, n_f, |idx, out| {
        let model = &models[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(idx as u64);
        for (c, &nu) in out.iter_mut().zip(&freqs) {
            let dip = spectrum_model(model, nu);
            *c = match noise.mode {
                NoiseMode::Noiseless => dip as f32,
                NoiseMode::Aggregated => {
                    let lam = noise.photons_per_pixel * n_avg as f64;
                    let r = poisson(&mut rng, lam);
                    let s = poisson(&mut rng, lam * (1.0 - dip));
                    (1.0 - s / r.max(1.0)) as f32
                }
                NoiseMode::PerFrame => {
                    let (mut r, mut s) = (0.0, 0.0);
                    for _ in 0..n_avg {
                        r += poisson(&mut rng, noise.photons_per_pixel);
                        s += poisson(&mut rng, noise.photons_per_pixel * (1.0 - dip));
                    }
                    (1.0 - s / r.max(1.0)) as f32
                }
            };
        }
    });

    Ok(OdmrCube {
        width_px: fieldmap.width_px,
        height_px: fieldmap.height_px,
        frequencies: freqs,
        contrast,
        ref_counts_mean: noise.photons_per_pixel,
        schedule: *schedule,
        rng_seed: (noise.mode != NoiseMode::Noiseless).then_some(noise.seed),
    })
}

/// Extend a half spectrum to the full spectrum assuming mirror symmetry
/// about `D`.
///
/// Points above `D` are dropped, points below `D` are reflected to `2D - ν`,
/// and a point exactly at `D` is kept once. Fails if the axis already reaches
/// the mirror image of its lowest frequency.
pub fn mirror_half_spectrum(cube: &OdmrCube, consts: &PhysicalConstants) -> Result<OdmrCube, SynthError> {
    let d = consts.d;
    let (lo, hi) = match (cube.frequencies.first(), cube.frequencies.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(SynthError::BadDims("empty frequency axis".into())),
    };
    if hi > d && hi - d >= d - lo {
        return Err(SynthError::AlreadyMirrored);
    }
    let keep: Vec<usize> = (0..cube.n_freq()).filter(|&i| cube.frequencies[i] <= d).collect();
    let below: Vec<usize> = keep.iter().copied().filter(|&i| cube.frequencies[i] < d).collect();
    // output order: kept points ascending, then mirrored points ascending
    let order: Vec<(usize, bool)> = keep
        .iter()
        .map(|&i| (i, false))
        .chain(below.iter().rev().map(|&i| (i, true)))
        .collect();
    let frequencies: Vec<f64> = order
        .iter()
        .map(|&(i, m)| if m { 2.0 * d - cube.frequencies[i] } else { cube.frequencies[i] })
        .collect();
    let n_new = order.len();
    let mut contrast = Vec::with_capacity(cube.n_pixels() * n_new);
    for y in 0..cube.height_px {
        for x in 0..cube.width_px {
            let s = cube.spectrum(x, y);
            contrast.extend(order.iter().map(|&(i, _)| s[i]));
        }
    }
    Ok(OdmrCube {
        frequencies,
        contrast,
        ..cube.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stray::Grid;
    use crate::synth::{build_schedule, ScheduleParams};

    fn flat_map(w: usize, h: usize) -> FieldMap {
        FieldMap::zeros(Grid {
            width_px: w,
            height_px: h,
            pixel_pitch: 1e-6,
        })
    }

    fn reference_bias() -> FieldVector {
        FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3)
    }

    #[test]
    fn noiseless_equals_model() {
        let sched = PulseSchedule::default();
        let cfg = SynthConfig::new(ShotNoise::noiseless(1e4));
        let cube = synth_cube(&flat_map(3, 2), reference_bias(), &sched, &cfg).unwrap();
        let m = dips_from_field(
            reference_bias(),
            &cfg.axes,
            &cfg.consts,
            &cfg.profile,
            (sched.sweep_start, sched.sweep_stop),
        )
        .unwrap()
        .model;
        for y in 0..2 {
            for x in 0..3 {
                for (c, &nu) in cube.spectrum(x, y).iter().zip(&cube.frequencies) {
                    assert_eq!(*c, spectrum_model(&m, nu) as f32);
                }
            }
        }
        assert_eq!(cube.rng_seed, None);
        assert_eq!(cube.ref_counts_mean, 1e4);
    }

    #[test]
    fn deterministic_per_seed_and_order() {
        let sched = PulseSchedule::default();
        let mut cfg = SynthConfig::new(ShotNoise::shot(1e4, 7));
        let a = synth_cube(&flat_map(4, 3), reference_bias(), &sched, &cfg).unwrap();
        cfg.exec = Execution::Sequential;
        let b = synth_cube(&flat_map(4, 3), reference_bias(), &sched, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.noise.seed = 8;
        let c = synth_cube(&flat_map(4, 3), reference_bias(), &sched, &cfg).unwrap();
        assert_ne!(a.contrast, c.contrast);
    }

    #[test]
    fn per_frame_mode_runs() {
        let sched = build_schedule(&ScheduleParams {
            sweep_start: 2.86e9,
            n_avg: 4,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = SynthConfig::new(ShotNoise::shot(200.0, 1));
        cfg.noise.mode = NoiseMode::PerFrame;
        let cube = synth_cube(&flat_map(2, 2), FieldVector::ZERO, &sched, &cfg).unwrap();
        assert!(cube.contrast.iter().all(|c| c.abs() < 1.0));
    }

    #[test]
    fn bad_dims() {
        let mut fm = flat_map(2, 2);
        fm.data.pop();
        let cfg = SynthConfig::new(ShotNoise::noiseless(1.0));
        assert!(matches!(
            synth_cube(&fm, FieldVector::ZERO, &PulseSchedule::default(), &cfg),
            Err(SynthError::BadDims(_))
        ));
    }

    #[test]
    fn mirror_default_sweep() {
        let sched = PulseSchedule::default();
        let cfg = SynthConfig::new(ShotNoise::noiseless(1e4));
        let cube = synth_cube(&flat_map(2, 1), reference_bias(), &sched, &cfg).unwrap();
        let c = PhysicalConstants::default();
        let m = mirror_half_spectrum(&cube, &c).unwrap();
        // 221 points up to D inclusive, 220 mirrored images
        assert_eq!(m.n_freq(), 441);
        assert_eq!(m.frequencies[0], 2.65e9);
        assert_eq!(*m.frequencies.last().unwrap(), 3.09e9);
        assert!(m.check().is_ok());
        let s = m.spectrum(1, 0);
        for (i, &nu) in m.frequencies.iter().enumerate() {
            let j = m.frequencies.iter().position(|&g| g == 2.0 * c.d - nu).unwrap();
            assert_eq!(s[i], s[j]);
        }
        assert!(matches!(mirror_half_spectrum(&m, &c), Err(SynthError::AlreadyMirrored)));
    }

    #[test]
    fn mirror_single_point_at_d() {
        let sched = build_schedule(&ScheduleParams {
            sweep_start: 2.87e9,
            sweep_stop: 2.87e9,
            ..Default::default()
        })
        .unwrap();
        let cfg = SynthConfig::new(ShotNoise::noiseless(1e4));
        let cube = synth_cube(&flat_map(1, 1), FieldVector::ZERO, &sched, &cfg).unwrap();
        let m = mirror_half_spectrum(&cube, &PhysicalConstants::default()).unwrap();
        assert_eq!(m.frequencies, vec![2.87e9]);
    }
}
