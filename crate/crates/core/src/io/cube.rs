//! Single-file cube container.
//!
//! Layout: the magic line `ODMRCUBE1\n`, one JSON header line, then
//! little-endian `f32` contrast values in frequency-major order
//! (`index = f·H·W + y·W + x`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::synth::{OdmrCube, PulseSchedule};

pub const MAGIC: &[u8; 10] = b"ODMRCUBE1\n";

/// JSON header line. Keys serialize in alphabetical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub created_utc: String,
    pub frequencies_hz: Vec<f64>,
    pub height: usize,
    pub n_freq: usize,
    pub ref_counts_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    pub schedule: PulseSchedule,
    pub width: usize,
}

/// Current UTC time as RFC 3339, or `SOURCE_DATE_EPOCH` when set.
pub fn created_utc_now() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|s| SystemTime::UNIX_EPOCH + Duration::from_secs(s))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(t).to_string()
}

/// Canonical header line: keys sorted, no whitespace, trailing newline.
fn header_line(h: &CubeHeader) -> Result<Vec<u8>, IoError> {
    // round-tripping through Value sorts nested keys as well
    let v = serde_json::to_value(h)?;
    let mut line = serde_json::to_vec(&v)?;
    line.push(b'\n');
    Ok(line)
}

pub fn write_cube(cube: &OdmrCube, path: &Path) -> Result<(), IoError> {
    write_cube_with(cube, path, &created_utc_now())
}

/// Write with an explicit creation timestamp.
pub fn write_cube_with(cube: &OdmrCube, path: &Path, created_utc: &str) -> Result<(), IoError> {
    cube.check().map_err(|e| IoError::HeaderMismatch(e.to_string()))?;
    let header = CubeHeader {
        created_utc: created_utc.to_owned(),
        frequencies_hz: cube.frequencies.clone(),
        height: cube.height_px,
        n_freq: cube.n_freq(),
        ref_counts_mean: cube.ref_counts_mean,
        rng_seed: cube.rng_seed,
        schedule: cube.schedule,
        width: cube.width_px,
    };
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&header_line(&header)?)?;
    let (n_pix, n_f) = (cube.n_pixels(), cube.n_freq());
    for f in 0..n_f {
        for p in 0..n_pix {
            out.write_all(&cube.contrast[p * n_f + f].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Byte offset of the payload in a cube file, i.e. where timestamp-free
/// comparisons can start.
pub fn payload_offset(path: &Path) -> Result<u64, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic).map_err(|_| IoError::CorruptMagic)?;
    if &magic != MAGIC {
        return Err(IoError::CorruptMagic);
    }
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    Ok((MAGIC.len() + line.len()) as u64)
}

pub fn read_cube(path: &Path) -> Result<OdmrCube, IoError> {
    read_cube_with_header(path).map(|(c, _)| c)
}

pub fn read_cube_with_header(path: &Path) -> Result<(OdmrCube, CubeHeader), IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic).map_err(|_| IoError::CorruptMagic)?;
    if &magic != MAGIC {
        return Err(IoError::CorruptMagic);
    }
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(IoError::HeaderMismatch("header line is not terminated".into()));
    }
    let header: CubeHeader = serde_json::from_slice(&line)?;
    if header.frequencies_hz.len() != header.n_freq {
        return Err(IoError::HeaderMismatch(format!(
            "n_freq = {} but {} frequencies listed",
            header.n_freq,
            header.frequencies_hz.len()
        )));
    }
    let n_pix = header.width * header.height;
    let n_f = header.n_freq;
    let expected = 4 * n_pix * n_f;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(IoError::HeaderMismatch(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut contrast = vec![0f32; n_pix * n_f];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let (f, p) = (i / n_pix, i % n_pix);
        contrast[p * n_f + f] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    let cube = OdmrCube {
        width_px: header.width,
        height_px: header.height,
        frequencies: header.frequencies_hz.clone(),
        contrast,
        ref_counts_mean: header.ref_counts_mean,
        schedule: header.schedule,
        rng_seed: header.rng_seed,
    };
    cube.check().map_err(|e| IoError::HeaderMismatch(e.to_string()))?;
    Ok((cube, header))
}
