//! 16-bit binary PGM renders.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IoError;

pub const MAXVAL: u16 = 65535;
const MID_GRAY: u16 = 32768;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Lower and upper percentiles mapped to black and white; `None`
    /// uses the full finite range.
    pub percentile_clip: Option<(f64, f64)>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            percentile_clip: Some((1.0, 99.0)),
        }
    }
}

/// Written next to the image as `<image>.json`.
///
/// `value = min + (max - min) · level / maxval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub min: f64,
    pub max: f64,
    pub percentile_clip: Option<(f64, f64)>,
    pub unit: String,
}

impl RenderSidecar {
    pub fn value(&self, level: u16) -> f64 {
        self.min + (self.max - self.min) * f64::from(level) / f64::from(self.maxval)
    }
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// `<image>.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Render a row-major map. Non-finite pixels become 0; a constant map
/// renders as uniform mid-gray.
pub fn render_map(
    values: &[f64],
    width: usize,
    height: usize,
    path: &Path,
    unit: &str,
    opts: &RenderOptions,
) -> Result<RenderSidecar, IoError> {
    if values.len() != width * height {
        return Err(IoError::HeaderMismatch(format!("{} values for a {width}x{height} map", values.len())));
    }
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(IoError::AllInvalid);
    }
    finite.sort_by(f64::total_cmp);
    let (lo, hi) = match opts.percentile_clip {
        Some((a, b)) => (percentile(&finite, a), percentile(&finite, b)),
        None => (finite[0], finite[finite.len() - 1]),
    };
    let levels: Vec<u16> = if hi > lo {
        values
            .iter()
            .map(|&v| {
                if v.is_finite() {
                    ((v.clamp(lo, hi) - lo) / (hi - lo) * f64::from(MAXVAL)).round() as u16
                } else {
                    0
                }
            })
            .collect()
    } else {
        values.iter().map(|v| if v.is_finite() { MID_GRAY } else { 0 }).collect()
    };
    let (min, max) = if hi > lo {
        (lo, hi)
    } else {
        // any range centred so that MID_GRAY decodes to the constant
        let delta = if lo == 0.0 { 1.0 } else { lo.abs() * 1e-6 };
        let span = 2.0 * delta;
        let min = lo - span * f64::from(MID_GRAY) / f64::from(MAXVAL);
        (min, min + span)
    };
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{width} {height}\n{MAXVAL}\n")?;
    for l in &levels {
        out.write_all(&l.to_be_bytes())?;
    }
    out.flush()?;
    let sidecar = RenderSidecar {
        width,
        height,
        maxval: MAXVAL,
        min,
        max,
        percentile_clip: opts.percentile_clip,
        unit: unit.to_owned(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}
