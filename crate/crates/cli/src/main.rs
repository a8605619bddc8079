mod commands;
mod error;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nvmag::maps::PixelRect;
use nvmag::FieldVector;

use crate::error::CliError;
use crate::parse::Corners;

/// Widefield NV magnetometry: simulate pulsed-ODMR cubes and turn them into
/// vector field maps.
#[derive(Parser, Debug)]
#[command(name = "nvmag", version)]
struct Cli {
    /// Run per-pixel work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the pulse schedule as JSON.
    Schedule(ScheduleArgs),
    /// Forward-model a scene into a contrast cube.
    Simulate(SimulateArgs),
    /// Synthesize and/or fit a Rabi trace.
    Rabi(RabiArgs),
    /// Fit the bias field from a field-free region; prints JSON.
    Calibrate(CalibrateArgs),
    /// Per-pixel frequency maps and fit diagnostics.
    Fit(FitArgs),
    /// Vector, magnitude and angle maps.
    Reconstruct(ReconstructArgs),
    /// Shot-noise sensitivity from corner fits; prints JSON.
    Sensitivity(SensitivityArgs),
    /// Render a CSV map to a 16-bit PGM with a JSON sidecar.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    /// Hz.
    #[arg(long, default_value_t = 2.65e9)]
    sweep_start: f64,
    /// Hz.
    #[arg(long, default_value_t = 2.88e9)]
    sweep_stop: f64,
    /// Hz.
    #[arg(long, default_value_t = 1e6)]
    sweep_step: f64,
    /// Laser pulse, s.
    #[arg(long, default_value_t = 50e-6)]
    t_laser: f64,
    /// Microwave π pulse, s.
    #[arg(long, default_value_t = 110e-9)]
    t_mw: f64,
    /// Camera exposure, s.
    #[arg(long, default_value_t = 20e-3)]
    t_exposure: f64,
    /// Sweep repetitions.
    #[arg(long, default_value_t = 30)]
    n_avg: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scene JSON; the default crossed-ellipse scene when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Remanent state of the default scene.
    #[arg(long, default_value_t = 1)]
    state: u8,
    /// Resample the scene's field of view to this many pixels across.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Bias field "bx,by,bz" in tesla.
    #[arg(long, value_parser = parse::field, default_value = "4.1e-3,0.72e-3,1.1e-3")]
    bias: FieldVector,
    /// Mean reference counts per pixel per exposure.
    #[arg(long, default_value_t = 1.0e4)]
    photons: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store the exact model instead of drawing shot noise.
    #[arg(long)]
    noiseless: bool,
    /// Draw every exposure separately instead of one aggregated draw.
    #[arg(long, conflicts_with = "noiseless")]
    per_frame: bool,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RabiArgs {
    /// π-pulse length to synthesize, and the starting guess for the fit, s.
    #[arg(long, default_value_t = 110e-9)]
    t_pi: f64,
    #[arg(long, default_value_t = 0.2)]
    contrast: f64,
    /// Counts without microwaves.
    #[arg(long, default_value_t = 400.0)]
    f0: f64,
    /// Envelope decay, s ("inf" for none).
    #[arg(long, default_value_t = 1e-6)]
    decay: f64,
    /// Duration step, s.
    #[arg(long, default_value_t = 5e-9)]
    step: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noiseless: bool,
    /// Fit this "tau,counts" CSV instead of synthesizing.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the trace CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit the trace and print the result as JSON.
    #[arg(long)]
    fit: bool,
}

#[derive(Args, Debug)]
struct CubeInput {
    #[arg(long)]
    cube: PathBuf,
    /// Skip the 3×3 moving average.
    #[arg(long)]
    no_average: bool,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    input: CubeInput,
    /// Field-free region "x,y,w,h", at least 10×10.
    #[arg(long, value_parser = parse::region, default_value = "0,0,10,10")]
    region: PixelRect,
}

#[derive(Args, Debug)]
struct MapArgs {
    /// Calibration JSON from `calibrate`.
    #[arg(long)]
    calib: PathBuf,
    /// Warm-start tile edge, pixels.
    #[arg(long, default_value_t = 16)]
    tile: usize,
    /// Fraction of unconverged pixels above which the run fails (exit 4).
    #[arg(long, default_value_t = 0.05)]
    max_unconverged: f64,
    /// Keep pixels whose dip shapes disagree with the calibration.
    #[arg(long)]
    no_lineshape_check: bool,
    /// Largest accepted projection-sum residual, T.
    #[arg(long, default_value_t = 50e-6)]
    max_residual: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: CubeInput,
    #[command(flatten)]
    maps: MapArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    input: CubeInput,
    #[command(flatten)]
    maps: MapArgs,
    /// Report b - b0 instead of the total field.
    #[arg(long)]
    subtract_bias: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[arg(long)]
    cube: PathBuf,
    /// Output directory of `fit`.
    #[arg(long)]
    fits: PathBuf,
    /// Corner square size, or "x,y,w,h;x,y,w,h;..." rectangles.
    #[arg(long, value_parser = parse::corners, default_value = "10")]
    corners: Corners,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// "x,y,value" CSV.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Percentiles mapped to black and white.
    #[arg(long, value_parser = parse::clip, default_value = "1,99")]
    clip: (f64, f64),
    /// Use the full value range.
    #[arg(long)]
    no_clip: bool,
    /// Unit recorded in the sidecar.
    #[arg(long, default_value = "T")]
    unit: String,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("NV_THREADS must be a positive integer, got \"{v}\"")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
