//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nvmag::fit::{self, FitOptions};
use nvmag::io::{self, RenderOptions};
use nvmag::maps::{self, BiasCalibration, CalibrationOptions, FrequencyMaps, MapOptions};
use nvmag::nv::OrientationSet;
use nvmag::stray::{self, Scene};
use nvmag::synth::{
    self, build_schedule, synth_cube, NoiseMode, OdmrCube, PulseSchedule, RabiNoise, RabiParams, ScheduleParams,
    ShotNoise, SynthConfig,
};
use nvmag::Execution;
use serde_json::json;

use crate::error::CliError;
use crate::{
    CalibrateArgs, Cli, Command, CubeInput, FitArgs, MapArgs, RabiArgs, ReconstructArgs, RenderArgs, ScheduleArgs,
    SensitivityArgs, SimulateArgs,
};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Schedule(a) => schedule(&a),
        Command::Simulate(a) => simulate(&a, exec),
        Command::Rabi(a) => rabi(&a),
        Command::Calibrate(a) => calibrate(&a, exec),
        Command::Fit(a) => fit_maps(&a, exec),
        Command::Reconstruct(a) => reconstruct(&a, exec),
        Command::Sensitivity(a) => sensitivity(&a),
        Command::Render(a) => render(&a),
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn build(a: &ScheduleArgs) -> Result<PulseSchedule, CliError> {
    Ok(build_schedule(&ScheduleParams {
        t_laser: a.t_laser,
        t_mw: a.t_mw,
        t_exposure: a.t_exposure,
        sweep_start: a.sweep_start,
        sweep_stop: a.sweep_stop,
        sweep_step: a.sweep_step,
        n_avg: a.n_avg,
    })?)
}

fn schedule(a: &ScheduleArgs) -> Result<(), CliError> {
    print_json(&build(a)?.report())
}

fn simulate(a: &SimulateArgs, exec: Execution) -> Result<(), CliError> {
    let mut scene: Scene = match &a.scene {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => stray::default_cross_scene(a.state)?,
    };
    if a.width.is_some() || a.height.is_some() {
        let w = a.width.unwrap_or(scene.grid.width_px);
        let h = a.height.unwrap_or(w);
        scene = scene.resampled(w, h);
    }
    let schedule = build(&a.schedule)?;
    let field = stray::field_map(&scene, exec)?;
    let mut noise = if a.noiseless {
        ShotNoise::noiseless(a.photons)
    } else {
        ShotNoise::shot(a.photons, a.seed)
    };
    if a.per_frame {
        noise.mode = NoiseMode::PerFrame;
    }
    let cfg = SynthConfig {
        exec,
        ..SynthConfig::new(noise)
    };
    let cube = synth_cube(&field, a.bias, &schedule, &cfg)?;
    io::write_cube(&cube, &a.out)?;
    Ok(())
}

fn read_trace(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut trace = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 2 {
            return Err(CliError::data("ParseError", format!("line {}: expected tau,counts", i + 1)));
        }
        match (f[0].parse::<f64>(), f[1].parse::<f64>()) {
            (Ok(t), Ok(c)) => trace.push((t, c)),
            _ if i == 0 => continue,
            _ => return Err(CliError::data("ParseError", format!("line {}: bad number", i + 1))),
        }
    }
    Ok(trace)
}

fn rabi(a: &RabiArgs) -> Result<(), CliError> {
    let trace = match &a.trace {
        Some(p) => read_trace(p)?,
        None => {
            let p = RabiParams {
                f0: a.f0,
                contrast: a.contrast,
                t_pi: a.t_pi,
                decay: a.decay,
                ..Default::default()
            };
            let durations: Vec<f64> = (0..a.points).map(|k| k as f64 * a.step).collect();
            let noise = (!a.noiseless).then_some(RabiNoise { seed: a.seed });
            synth::rabi_trace(&p, noise, &durations)?
        }
    };
    let csv: String = std::iter::once("tau_s,counts\n".to_owned())
        .chain(trace.iter().map(|(t, c)| format!("{t},{c}\n")))
        .collect();
    if let Some(out) = &a.out {
        fs::write(out, &csv)?;
    }
    if a.fit {
        let f = fit::fit_rabi(&trace, 1.0 / (2.0 * a.t_pi))?;
        print_json(&json!({
            "t_pi_s": f.t_pi,
            "t_pi_ns": f.t_pi * 1e9,
            "rabi_freq_hz": f.rabi_freq,
            "decay_s": f.decay,
            "contrast": f.contrast,
            "f0": f.f0,
            "rss": f.rss,
        }))?;
    } else if a.out.is_none() {
        print!("{csv}");
    }
    Ok(())
}

fn load_cube(input: &CubeInput, exec: Execution) -> Result<OdmrCube, CliError> {
    let cube = io::read_cube(&input.cube)?;
    if input.no_average {
        Ok(cube)
    } else {
        Ok(fit::moving_average_3x3(&cube, exec)?)
    }
}

fn calibrate(a: &CalibrateArgs, exec: Execution) -> Result<(), CliError> {
    let cube = load_cube(&a.input, exec)?;
    let cal = maps::calibrate_bias(&cube, a.region, &CalibrationOptions::default())?;
    print_json(&serde_json::to_value(&cal)?)
}

fn map_options(a: &MapArgs, exec: Execution) -> Result<(MapOptions, BiasCalibration), CliError> {
    if !(0.0..=1.0).contains(&a.max_unconverged) {
        return Err(CliError::usage("--max-unconverged must lie in [0, 1]"));
    }
    let calib: BiasCalibration = serde_json::from_slice(&fs::read(&a.calib)?)?;
    let opts = MapOptions {
        fit: FitOptions::default(),
        tile: a.tile.max(1),
        max_residual: a.max_residual,
        lineshape_sigma: if a.no_lineshape_check { None } else { MapOptions::default().lineshape_sigma },
        exec,
        ..Default::default()
    };
    Ok((opts, calib))
}

fn label(i: usize) -> &'static str {
    OrientationSet::LABELS[i]
}

const FITS_FILE: &str = "fits.csv";

fn write_fits_csv(path: &Path, fm: &FrequencyMaps) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["x".to_owned(), "y".into(), "converged".into(), "assigned".into(), "lineshape_ok".into()];
    header.extend(["rss".to_owned(), "baseline".into()]);
    for prefix in ["nu", "nu_err", "a", "g"] {
        header.extend((0..4).map(|i| format!("{prefix}_{}", label(i))));
    }
    writeln!(out, "{}", header.join(","))?;
    for k in 0..fm.n_pixels() {
        let mut row = vec![
            (k % fm.width_px).to_string(),
            (k / fm.width_px).to_string(),
            u8::from(fm.converged[k]).to_string(),
            u8::from(fm.assigned[k]).to_string(),
            u8::from(fm.lineshape_ok[k]).to_string(),
            fm.rss[k].to_string(),
            fm.baseline[k].to_string(),
        ];
        for maps in [&fm.nu, &fm.nu_err, &fm.amplitude, &fm.gamma_hwhm] {
            row.extend(maps.iter().map(|m| m[k].to_string()));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn read_fits_csv(path: &Path) -> Result<FrequencyMaps, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::data("ParseError", format!("{}: missing column {name}", path.display())))
    };
    let (cx, cy) = (col("x")?, col("y")?);
    let (cc, ca, cl) = (col("converged")?, col("assigned")?, col("lineshape_ok")?);
    let (crss, cb) = (col("rss")?, col("baseline")?);
    let cols = |prefix: &str| -> Result<[usize; 4], CliError> {
        let v = (0..4).map(|i| col(&format!("{prefix}_{}", label(i)))).collect::<Result<Vec<_>, _>>()?;
        Ok([v[0], v[1], v[2], v[3]])
    };
    let (cnu, cerr, camp, cg) = (cols("nu")?, cols("nu_err")?, cols("a")?, cols("g")?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let v = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::data("ParseError", format!("{}: bad number on line {}", path.display(), i + 2)))?;
        if v.len() != header.len() {
            return Err(CliError::data("ParseError", format!("{}: line {} has {} fields", path.display(), i + 2, v.len())));
        }
        rows.push(v);
    }
    let width = rows.iter().map(|r| r[cx] as usize + 1).max().unwrap_or(0);
    let height = rows.iter().map(|r| r[cy] as usize + 1).max().unwrap_or(0);
    let n = width * height;
    if n == 0 || rows.len() != n {
        return Err(CliError::data("ParseError", format!("{}: expected a full pixel grid", path.display())));
    }
    let nan = || vec![f64::NAN; n];
    let mut fm = FrequencyMaps {
        width_px: width,
        height_px: height,
        nu: std::array::from_fn(|_| nan()),
        nu_err: std::array::from_fn(|_| nan()),
        amplitude: std::array::from_fn(|_| nan()),
        gamma_hwhm: std::array::from_fn(|_| nan()),
        baseline: nan(),
        rss: nan(),
        converged: vec![false; n],
        assigned: vec![false; n],
        lineshape_ok: vec![false; n],
    };
    for r in rows {
        let k = r[cy] as usize * width + r[cx] as usize;
        fm.converged[k] = r[cc] != 0.0;
        fm.assigned[k] = r[ca] != 0.0;
        fm.lineshape_ok[k] = r[cl] != 0.0;
        fm.rss[k] = r[crss];
        fm.baseline[k] = r[cb];
        for i in 0..4 {
            fm.nu[i][k] = r[cnu[i]];
            fm.nu_err[i][k] = r[cerr[i]];
            fm.amplitude[i][k] = r[camp[i]];
            fm.gamma_hwhm[i][k] = r[cg[i]];
        }
    }
    Ok(fm)
}

fn out_dir(p: &PathBuf) -> Result<(), CliError> {
    fs::create_dir_all(p)?;
    Ok(())
}

fn fit_maps(a: &FitArgs, exec: Execution) -> Result<(), CliError> {
    let (opts, calib) = map_options(&a.maps, exec)?;
    let cube = load_cube(&a.input, exec)?;
    let fm = maps::frequency_maps(&cube, &calib, &opts)?;
    out_dir(&a.out)?;
    for i in 0..4 {
        io::write_map_csv(&a.out.join(format!("nu_{}.csv", label(i))), fm.width_px, fm.height_px, &fm.nu[i])?;
    }
    write_fits_csv(&a.out.join(FITS_FILE), &fm)?;
    let valid = (0..fm.n_pixels()).filter(|&k| fm.is_valid(k)).count();
    let summary = json!({
        "width": fm.width_px,
        "height": fm.height_px,
        "converged_fraction": fm.converged_fraction(),
        "valid_fraction": valid as f64 / fm.n_pixels() as f64,
        "reference_nu_hz": calib.reference_nu,
    });
    fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fm.check_convergence(a.maps.max_unconverged)?;
    Ok(())
}

/// Files written by `reconstruct`.
pub const RECONSTRUCT_FILES: [&str; 7] =
    ["bx.csv", "by.csv", "bz.csv", "magnitude.csv", "angle.csv", "vectors.csv", "report.json"];

fn reconstruct(a: &ReconstructArgs, exec: Execution) -> Result<(), CliError> {
    let (opts, calib) = map_options(&a.maps, exec)?;
    let cube = load_cube(&a.input, exec)?;
    let fm = maps::frequency_maps(&cube, &calib, &opts)?;
    let vm = maps::vector_maps(&fm, &calib, a.subtract_bias, &opts);
    let ma = maps::magnitude_and_angle(&vm);
    let (w, h) = (vm.width_px, vm.height_px);
    out_dir(&a.out)?;
    let component = |f: fn(&nvmag::FieldVector) -> f64| vm.b.iter().map(f).collect::<Vec<f64>>();
    io::write_map_csv(&a.out.join("bx.csv"), w, h, &component(|b| b.bx))?;
    io::write_map_csv(&a.out.join("by.csv"), w, h, &component(|b| b.by))?;
    io::write_map_csv(&a.out.join("bz.csv"), w, h, &component(|b| b.bz))?;
    io::write_map_csv(&a.out.join("magnitude.csv"), w, h, &ma.magnitude)?;
    io::write_map_csv(&a.out.join("angle.csv"), w, h, &ma.angle)?;
    io::write_vector_csv(&a.out.join("vectors.csv"), w, h, &vm.b)?;
    let valid: Vec<_> = (0..vm.b.len()).filter(|&k| vm.valid[k]).collect();
    let mean = |f: fn(&nvmag::FieldVector) -> f64| {
        if valid.is_empty() {
            f64::NAN
        } else {
            valid.iter().map(|&k| f(&vm.b[k])).sum::<f64>() / valid.len() as f64
        }
    };
    let report = json!({
        "width": w,
        "height": h,
        "bias_subtracted": a.subtract_bias,
        "b0_t": calib.b0,
        "converged_fraction": fm.converged_fraction(),
        "valid_fraction": vm.valid_fraction(),
        "mean_b_t": { "bx": mean(|b| b.bx), "by": mean(|b| b.by), "bz": mean(|b| b.bz) },
        "angle_defined_fraction": ma.angle_defined.iter().filter(|&&d| d).count() as f64 / ma.angle.len() as f64,
        "files": RECONSTRUCT_FILES,
    });
    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fm.check_convergence(a.maps.max_unconverged)?;
    Ok(())
}

fn sensitivity(a: &SensitivityArgs) -> Result<(), CliError> {
    let (cube, _) = io::read_cube_with_header(&a.cube)?;
    let fm = read_fits_csv(&a.fits.join(FITS_FILE))?;
    let corners = a.corners.resolve(cube.width_px, cube.height_px).map_err(CliError::usage)?;
    let consts = nvmag::PhysicalConstants::default();
    let report = maps::sensitivity_report(&cube, &fm, &corners, &consts)?;
    let mut v = serde_json::to_value(&report)?;
    if let Some(list) = v["orientations"].as_array_mut() {
        for (entry, o) in list.iter_mut().zip(&report.orientations) {
            entry["eta_nt_per_sqrt_hz"] = json!(o.eta * 1e9);
        }
    }
    print_json(&v)
}

fn render(a: &RenderArgs) -> Result<(), CliError> {
    let m = io::read_map_csv(&a.map)?;
    let opts = RenderOptions {
        percentile_clip: (!a.no_clip).then_some(a.clip),
    };
    io::render_map(&m.values, m.width, m.height, &a.out, &a.unit, &opts)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fits.csv");
        let n = 6;
        let fm = FrequencyMaps {
            width_px: 3,
            height_px: 2,
            nu: std::array::from_fn(|i| (0..n).map(|k| 2.8e9 + (i * 10 + k) as f64 * 1e5).collect()),
            nu_err: std::array::from_fn(|_| vec![1e4; n]),
            amplitude: std::array::from_fn(|i| vec![0.01 / (i + 1) as f64; n]),
            gamma_hwhm: std::array::from_fn(|_| vec![2.5e6; n]),
            baseline: vec![1e-4; n],
            rss: vec![1e-6; n],
            converged: vec![true, true, false, true, true, true],
            assigned: vec![true; n],
            lineshape_ok: vec![true, false, true, true, true, true],
        };
        write_fits_csv(&p, &fm).unwrap();
        assert_eq!(read_fits_csv(&p).unwrap(), fm);
    }
}
