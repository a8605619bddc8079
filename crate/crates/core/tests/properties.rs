//! Randomized invariants across the public API.

use nvmag::fit::{self, FitOptions, FitStart, FourLorentzian, N_PARAMS};
use nvmag::maps::{self, BiasCalibration, FrequencyMaps, MapOptions, PixelRect};
use nvmag::nv::{self, FieldVector, OrientationSet, PhysicalConstants, ProjectionQuad, ResonanceQuad};
use nvmag::stray::{self, Grid, Region, Scene};
use nvmag::synth::{self, build_schedule, synth_cube, DipModel, OdmrCube, ScheduleParams, ShotNoise, SynthConfig};
use nvmag::{Execution, FieldMap};
use proptest::prelude::*;

fn field(max: f64) -> impl Strategy<Value = FieldVector> {
    (-max..max, -max..max, -max..max).prop_map(|(x, y, z)| FieldVector::new(x, y, z))
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

fn perm4() -> impl Strategy<Value = [usize; 4]> {
    Just([0usize, 1, 2, 3]).prop_shuffle().prop_map(|v| [v[0], v[1], v[2], v[3]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reconstruction_inverts_projection(b in field(10e-3)) {
        let axes = OrientationSet::standard();
        let q = nv::project_field(b, &axes);
        let r = nv::reconstruct_vector(&q).b;
        let scale = b.norm().max(1e-300);
        prop_assert!((r - b).norm() <= 1e-12 * scale, "{b:?} -> {r:?}");
        prop_assert!(q.sum().abs() <= 1e-12 * scale);
    }

    #[test]
    fn split_round_trips(p in -0.1f64..0.1) {
        let c = PhysicalConstants::default();
        let (lo, hi) = nv::resonance_pair(p, &c).unwrap();
        let back = nv::field_from_split(hi - lo, &c).unwrap();
        prop_assert!(close(back, p.abs(), 1e-9, 1e-15));
    }

    #[test]
    fn relabelled_axes_keep_magnitude(b in field(10e-3), perm in perm4()) {
        let axes = OrientationSet::standard();
        let q = nv::project_field(b, &axes);
        let r = nv::reconstruct_vector_with(&q.permuted(perm), &axes.permuted(perm)).b;
        prop_assert!(close(r.norm(), b.norm(), 1e-12, 1e-18));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bias_signs_recovered_up_to_global_flip(b in field(10e-3)) {
        let axes = OrientationSet::standard();
        let c = PhysicalConstants::default();
        let q = nv::project_field(b, &axes);
        prop_assume!(q.p.iter().all(|p| p.abs() > 50e-6));
        let res = ResonanceQuad::from_field(b, &axes, &c).unwrap();
        if let Ok((_, got)) = nv::resolve_bias_signs(&res, &c) {
            let err = (got - b).norm().min((got + b).norm());
            prop_assert!(err <= 1e-9 * b.norm(), "{b:?} -> {got:?}");
            let again = nv::resolve_bias_signs(&res, &c).unwrap().1;
            prop_assert_eq!(got, again);
        }
    }

    #[test]
    fn assignment_is_a_permutation(
        base in 2.70e9f64..2.80e9,
        gaps in prop::array::uniform3(4.5e6f64..30e6),
        jitter in prop::array::uniform4(-1.5e6f64..1.5e6),
        perm in perm4(),
    ) {
        let mut reference = [base; 4];
        for i in 0..3 {
            reference[i + 1] = reference[i] + gaps[i];
        }
        let reference = perm.map(|j| reference[j]);
        let mut fitted = reference;
        for i in 0..4 {
            fitted[i] += jitter[i];
        }
        fitted.sort_by(f64::total_cmp);
        let sep_ok = fitted.windows(2).all(|w| w[1] - w[0] > 4e6);
        prop_assume!(sep_ok);
        let a = maps::assign_dips(&fitted, &reference, 2e6).expect("assignment");
        let mut seen = [false; 4];
        for &k in &a {
            prop_assert!(!seen[k]);
            seen[k] = true;
        }
        for i in 0..4 {
            prop_assert!((fitted[a[i]] - reference[i]).abs() < 2e6);
        }
    }
}

fn sweep() -> Vec<f64> {
    (0..231).map(|k| 2.65e9 + k as f64 * 1e6).collect()
}

fn dip_model() -> impl Strategy<Value = DipModel> {
    (
        prop::array::uniform4(2e-3f64..2e-2),
        prop::array::uniform4(1.5e6f64..4e6),
        2.70e9f64..2.76e9,
        prop::array::uniform3(15e6f64..30e6),
    )
        .prop_map(|(amplitude, gamma_hwhm, first, gaps)| {
            let mut nu = [first; 4];
            for i in 0..3 {
                nu[i + 1] = nu[i] + gaps[i];
            }
            DipModel { amplitude, gamma_hwhm, nu }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_central_differences(d in dip_model(), baseline in -1e-3f64..1e-3) {
        let freqs = sweep();
        let data = vec![0.0; freqs.len()];
        let opts = FitOptions::default();
        let p = FourLorentzian::new(&freqs, &data, &opts);
        let x = p.to_internal(&FitStart { model: d, baseline });
        let (_, jac) = p.model_and_jacobian(&x);
        for a in 0..N_PARAMS {
            let h = 1e-6 * x[a].abs().max(1e-3);
            let (mut xp, mut xm) = (x, x);
            xp[a] += h;
            xm[a] -= h;
            let scale = (0..freqs.len()).map(|k| jac[k][a].abs()).fold(0.0, f64::max);
            for (k, &u) in p.offsets().iter().enumerate() {
                let fd = (p.model_at(&xp, u) - p.model_at(&xm, u)) / (2.0 * h);
                prop_assert!(
                    (fd - jac[k][a]).abs() <= 1e-6 * scale.max(1e-12),
                    "param {a} sample {k}: fd {fd} vs {}", jac[k][a]
                );
            }
        }
    }
}

/// Deterministic pseudo-noise so the optimum is not the generating model.
fn wiggle(n: usize, seed: u64, peak_to_peak: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let h = (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed;
            ((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * peak_to_peak
        })
        .collect()
}

/// Fits of the original data, of the data on a sweep shifted by `delta`
/// (result shifted back), and of the data scaled by `k` (result unscaled).
fn equivariance_fits(d: &DipModel, seed: u64, noise: f64, delta: f64, k: f64) -> Option<[fit::SpectrumFit; 3]> {
    let freqs = sweep();
    let data: Vec<f64> = freqs
        .iter()
        .zip(wiggle(freqs.len(), seed, noise))
        .map(|(&f, n)| synth::spectrum_model(d, f) + n)
        .collect();
    // ftol off: only a vanishing step ends the fit
    let opts = FitOptions {
        max_iter: 500,
        ftol: 0.0,
        xtol: 1e-13,
        record_trace: true,
        ..Default::default()
    };
    let base = fit::fit_four_lorentzians(&freqs, &data, &FitStart::from(*d), &opts).unwrap();
    if !base.converged {
        return None;
    }
    assert!(base.rss_trace.windows(2).all(|w| w[1] <= w[0]));

    let shifted_f: Vec<f64> = freqs.iter().map(|f| f + delta).collect();
    let mut sd = *d;
    sd.nu = d.nu.map(|v| v + delta);
    let mut shifted = fit::fit_four_lorentzians(&shifted_f, &data, &FitStart::from(sd), &opts).unwrap();
    shifted.nu = shifted.nu.map(|v| v - delta);

    let scaled_data: Vec<f64> = data.iter().map(|v| v * k).collect();
    let mut kd = *d;
    kd.amplitude = d.amplitude.map(|a| a * k);
    let mut scaled = fit::fit_four_lorentzians(&freqs, &scaled_data, &FitStart::from(kd), &opts).unwrap();
    scaled.amplitude = scaled.amplitude.map(|a| a / k);
    scaled.baseline /= k;
    Some([base, shifted, scaled])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_is_shift_and_scale_equivariant(
        d in dip_model(),
        seed in any::<u64>(),
        delta in -5e6f64..5e6,
        k in 0.3f64..3.0,
    ) {
        let Some([base, shifted, scaled]) = equivariance_fits(&d, seed, 4e-6, delta, k) else {
            return Err(TestCaseError::reject("base fit did not converge"));
        };
        for f in [&shifted, &scaled] {
            for i in 0..4 {
                prop_assert!(close(f.nu[i], base.nu[i], 1e-9, 0.0), "nu {:?} vs {:?}", f.nu, base.nu);
                prop_assert!(close(f.amplitude[i], base.amplitude[i], 1e-9, 0.0), "A {:?} vs {:?}", f.amplitude, base.amplitude);
                prop_assert!(close(f.gamma_hwhm[i], base.gamma_hwhm[i], 1e-9, 0.0), "G {:?} vs {:?}", f.gamma_hwhm, base.gamma_hwhm);
            }
        }
    }

    /// At realistic noise the optimum is only resolvable to a small fraction
    /// of its standard error, so compare in units of that error.
    #[test]
    fn fit_equivariance_holds_within_standard_error_at_realistic_noise(
        d in dip_model(),
        seed in any::<u64>(),
        delta in -5e6f64..5e6,
        k in 0.3f64..3.0,
    ) {
        let Some([base, shifted, scaled]) = equivariance_fits(&d, seed, 4e-4, delta, k) else {
            return Err(TestCaseError::reject("base fit did not converge"));
        };
        for f in [&shifted, &scaled] {
            for i in 0..4 {
                prop_assert!((f.nu[i] - base.nu[i]).abs() <= 1e-4 * base.nu_err[i]);
                prop_assert!((f.amplitude[i] - base.amplitude[i]).abs() <= 1e-4 * base.amplitude_err[i]);
                prop_assert!((f.gamma_hwhm[i] - base.gamma_hwhm[i]).abs() <= 1e-4 * base.gamma_err[i]);
            }
        }
    }
}

fn tiny_cube(w: usize, h: usize, values: Vec<f32>, n_freq: usize) -> OdmrCube {
    let schedule = build_schedule(&ScheduleParams {
        sweep_stop: 2.65e9 + (n_freq - 1) as f64 * 1e6,
        ..Default::default()
    })
    .unwrap();
    OdmrCube {
        width_px: w,
        height_px: h,
        frequencies: schedule.frequencies(),
        contrast: values,
        ref_counts_mean: 1e4,
        schedule,
        rng_seed: Some(1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moving_average_preserves_periodic_mean(
        w in 3usize..9,
        h in 3usize..9,
        c in -0.05f32..0.05,
        amp in 0.0f32..0.02,
    ) {
        let n_freq = 3;
        // a constant frame survives exactly, clamped edges included
        let values: Vec<f32> = (0..n_freq * w * h).map(|_| c).collect();
        let cube = tiny_cube(w, h, values, n_freq);
        let avg = fit::moving_average_3x3(&cube, Execution::Sequential).unwrap();
        for (a, b) in avg.contrast.iter().zip(&cube.contrast) {
            prop_assert!((a - b).abs() <= 1e-7 * c.abs().max(1e-6));
        }

        // period-3 pattern along x: every interior window sees one full period
        let pat = [amp, -amp, 0.0];
        let values: Vec<f32> = (0..n_freq * w * h).map(|i| c + pat[(i / n_freq) % w % 3]).collect();
        let cube = tiny_cube(w, h, values, n_freq);
        let avg = fit::moving_average_3x3(&cube, Execution::Parallel).unwrap();
        for f in 0..n_freq {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = avg.spectrum(x, y)[f];
                    prop_assert!((v - c).abs() <= 1e-6, "({x},{y}) {v} vs {c}");
                }
            }
        }
    }

    #[test]
    fn sensitivity_scaling_laws(
        c in 1e-3f64..0.1,
        fwhm in 1e6f64..2e7,
        s in 1e2f64..1e6,
        k in 1.1f64..10.0,
    ) {
        let consts = PhysicalConstants::default();
        let t_o = 50e-6;
        let eta = maps::sensitivity(c, fwhm, s, t_o, &consts).unwrap();
        prop_assert!(eta > 0.0);
        let eta_c = maps::sensitivity(k * c, fwhm, s, t_o, &consts).unwrap();
        prop_assert!(close(eta_c * k, eta, 1e-12, 0.0));
        let eta_s = maps::sensitivity(c, fwhm, k * k * s, t_o, &consts).unwrap();
        prop_assert!(close(eta_s * k, eta, 1e-12, 0.0));
        // narrower line means longer T2*, which lowers eta
        let eta_t = maps::sensitivity(c, fwhm / k, s, t_o, &consts).unwrap();
        prop_assert!(eta_t < eta);
        let t2 = maps::t2star_from_linewidth(fwhm).unwrap();
        prop_assert!(close(t2, 1.0 / (std::f64::consts::PI * fwhm), 1e-12, 0.0));
    }

    #[test]
    fn cube_round_trips_bitwise(
        w in 1usize..6,
        h in 1usize..6,
        n_freq in 2usize..12,
        seed in any::<u32>(),
    ) {
        let values: Vec<f32> = (0..w * h * n_freq)
            .map(|i| ((i as u32).wrapping_mul(2_654_435_761) ^ seed) as f32 / u32::MAX as f32 * 0.1 - 0.05)
            .collect();
        let cube = tiny_cube(w, h, values, n_freq);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        nvmag::io::write_cube_with(&cube, &path, "2020-01-01T00:00:00Z").unwrap();
        let back = nvmag::io::read_cube(&path).unwrap();
        prop_assert_eq!(&back, &cube);
        let first = std::fs::read(&path).unwrap();
        nvmag::io::write_cube_with(&back, &path, "2020-01-01T00:00:00Z").unwrap();
        prop_assert_eq!(first, std::fs::read(&path).unwrap());
    }
}

fn rect_region(x0: f64, y0: f64, w: f64, h: f64, m: [f64; 3]) -> Region {
    Region {
        polygon: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],
        magnetization: m,
        thickness: 50e-9,
    }
}

fn scene(regions: Vec<Region>) -> Scene {
    Scene {
        regions,
        standoff: 500e-9,
        grid: Grid {
            width_px: 10,
            height_px: 8,
            pixel_pitch: 0.7e-6,
        },
        cell_size: 100e-9,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_map_is_linear_and_superposes(
        m1 in prop::array::uniform3(-8e5f64..8e5),
        m2 in prop::array::uniform3(-8e5f64..8e5),
        x1 in -3e-6f64..-1.5e-6,
        x2 in 0.2e-6f64..2e-6,
    ) {
        let a = rect_region(x1, -1e-6, 1.2e-6, 2e-6, m1);
        let b = rect_region(x2, -1.5e-6, 1.0e-6, 2.5e-6, m2);
        let both = stray::field_map(&scene(vec![a.clone(), b.clone()]), Execution::Parallel).unwrap();
        let fa = stray::field_map(&scene(vec![a.clone()]), Execution::Sequential).unwrap();
        let fb = stray::field_map(&scene(vec![b]), Execution::Parallel).unwrap();
        for k in 0..both.data.len() {
            let sum = fa.data[k] + fb.data[k];
            let scale = fa.data[k].norm() + fb.data[k].norm();
            prop_assert!((both.data[k] - sum).norm() <= 1e-12 * scale.max(1e-30));
        }
        let neg = stray::field_map(&scene(vec![a]).scaled_magnetization(-1.0), Execution::Parallel).unwrap();
        for k in 0..fa.data.len() {
            prop_assert_eq!(neg.data[k], -fa.data[k]);
        }
    }
}

#[test]
fn synthesis_is_seed_deterministic_and_order_free() {
    let sc = stray::default_cross_scene(1).unwrap().resampled(12, 10);
    let fm = stray::field_map(&sc, Execution::Parallel).unwrap();
    let schedule = build_schedule(&ScheduleParams::default()).unwrap();
    let bias = FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3);
    let run = |seed: u64, exec: Execution| {
        let cfg = SynthConfig {
            exec,
            ..SynthConfig::new(ShotNoise::shot(1e4, seed))
        };
        synth_cube(&fm, bias, &schedule, &cfg).unwrap()
    };
    let a = run(7, Execution::Parallel);
    assert_eq!(a, run(7, Execution::Sequential));
    assert_ne!(a.contrast, run(8, Execution::Parallel).contrast);
    assert!(a.contrast.iter().all(|c| c.abs() < 1.0));
}

#[test]
fn exact_frequency_maps_reproduce_the_field() {
    let consts = PhysicalConstants::default();
    let axes = OrientationSet::standard();
    let bias = FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3);
    let (w, h) = (9, 7);
    let data: Vec<FieldVector> = (0..w * h)
        .map(|k| {
            let t = k as f64 * 0.37;
            FieldVector::new(0.4e-3 * t.sin(), 0.3e-3 * (1.3 * t).cos(), 0.45e-3 * (0.7 * t).sin())
        })
        .collect();
    let truth = FieldMap {
        width_px: w,
        height_px: h,
        pixel_pitch: 1e-6,
        data,
    };
    let n = w * h;
    let mut fm = FrequencyMaps {
        width_px: w,
        height_px: h,
        nu: std::array::from_fn(|_| vec![0.0; n]),
        nu_err: std::array::from_fn(|_| vec![1e3; n]),
        amplitude: std::array::from_fn(|_| vec![1e-2; n]),
        gamma_hwhm: std::array::from_fn(|_| vec![2.5e6; n]),
        baseline: vec![0.0; n],
        rss: vec![0.0; n],
        converged: vec![true; n],
        assigned: vec![true; n],
        lineshape_ok: vec![true; n],
    };
    for k in 0..n {
        let r = ResonanceQuad::from_field(bias + truth.data[k], &axes, &consts).unwrap();
        for i in 0..4 {
            fm.nu[i][k] = r.nu_lower[i];
        }
    }
    let bias_projection = nv::project_field(bias, &axes);
    let calib = BiasCalibration {
        region: PixelRect::new(0, 0, 1, 1),
        b0: bias,
        sign_pattern: bias_projection.sign_pattern,
        bias_projection: ProjectionQuad { ..bias_projection },
        reference_nu: ResonanceQuad::from_field(bias, &axes, &consts).unwrap().nu_lower,
        reference_amplitude: [1e-2; 4],
        reference_gamma_hwhm: [2.5e6; 4],
        baseline: 0.0,
        residual: 0.0,
    };
    let vm = maps::vector_maps(&fm, &calib, true, &MapOptions::default());
    assert_eq!(vm.valid_fraction(), 1.0);
    for k in 0..n {
        assert!((vm.b[k] - truth.data[k]).norm() < 1e-9, "pixel {k}: {:?} vs {:?}", vm.b[k], truth.data[k]);
    }
}

#[test]
fn bias_only_closed_loop_is_unbiased() {
    let (w, h) = (20, 20);
    let grid = Grid {
        width_px: w,
        height_px: h,
        pixel_pitch: 1e-6,
    };
    let schedule = build_schedule(&ScheduleParams::default()).unwrap();
    let bias = FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3);
    let opts = MapOptions::default();
    // each run's map mean carries that run's calibration error, so the
    // standard error comes from the spread of run means
    let run_means: Vec<[f64; 3]> = (0..12u64)
        .map(|seed| {
            let cfg = SynthConfig::new(ShotNoise::shot(1e4, seed));
            let cube = synth_cube(&FieldMap::zeros(grid), bias, &schedule, &cfg).unwrap();
            let cube = fit::moving_average_3x3(&cube, Execution::Parallel).unwrap();
            let calib = maps::calibrate_bias(&cube, PixelRect::new(0, 0, 10, 10), &Default::default()).unwrap();
            let fm = maps::frequency_maps(&cube, &calib, &opts).unwrap();
            let vm = maps::vector_maps(&fm, &calib, true, &opts);
            assert!(vm.valid_fraction() > 0.95, "seed {seed}: {}", vm.valid_fraction());
            let valid: Vec<[f64; 3]> = (0..w * h).filter(|&k| vm.valid[k]).map(|k| vm.b[k].to_array()).collect();
            std::array::from_fn(|c| valid.iter().map(|b| b[c]).sum::<f64>() / valid.len() as f64)
        })
        .collect();
    let r = run_means.len() as f64;
    for (c, name) in ["bx", "by", "bz"].iter().enumerate() {
        let mean = run_means.iter().map(|m| m[c]).sum::<f64>() / r;
        let sd = (run_means.iter().map(|m| (m[c] - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / r.sqrt(), "{name}: mean {mean:e}, run sd {sd:e}");
    }
}
