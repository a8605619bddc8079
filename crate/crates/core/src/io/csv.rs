//! Lossless CSV exports of scalar and vector maps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::IoError;
use crate::nv::FieldVector;

/// Scalar map read back from `x,y,value` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MapCsv {
    pub width: usize,
    pub height: usize,
    /// Row-major; NaN for missing rows or `nan` entries.
    pub values: Vec<f64>,
}

/// `x,y,value` rows in row-major order; `f64` display round-trips exactly.
pub fn write_map_csv(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<(), IoError> {
    if values.len() != width * height {
        return Err(IoError::HeaderMismatch(format!("{} values for a {width}x{height} map", values.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,y,value")?;
    for (k, v) in values.iter().enumerate() {
        writeln!(out, "{},{},{}", k % width, k / width, v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_vector_csv(path: &Path, width: usize, height: usize, b: &[FieldVector]) -> Result<(), IoError> {
    if b.len() != width * height {
        return Err(IoError::HeaderMismatch(format!("{} vectors for a {width}x{height} map", b.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,y,bx,by,bz")?;
    for (k, v) in b.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", k % width, k / width, v.bx, v.by, v.bz)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_rows(path: &Path, n_values: usize) -> Result<Vec<(usize, usize, Vec<f64>)>, IoError> {
    let r = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 + n_values {
            return Err(IoError::Parse(format!("line {}: expected {} fields", i + 1, 2 + n_values)));
        }
        let bad = |what: &str| IoError::Parse(format!("line {}: bad {what}", i + 1));
        let x = fields[0].parse().map_err(|_| bad("x"))?;
        let y = fields[1].parse().map_err(|_| bad("y"))?;
        let vals = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((x, y, vals));
    }
    if rows.is_empty() {
        return Err(IoError::Parse("no data rows".into()));
    }
    Ok(rows)
}

pub fn read_map_csv(path: &Path) -> Result<MapCsv, IoError> {
    let rows = parse_rows(path, 1)?;
    let width = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let height = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let mut values = vec![f64::NAN; width * height];
    for (x, y, v) in rows {
        values[y * width + x] = v[0];
    }
    Ok(MapCsv { width, height, values })
}

/// Returns `(width, height, vectors)`.
pub fn read_vector_csv(path: &Path) -> Result<(usize, usize, Vec<FieldVector>), IoError> {
    let rows = parse_rows(path, 3)?;
    let width = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let height = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let mut b = vec![FieldVector::new(f64::NAN, f64::NAN, f64::NAN); width * height];
    for (x, y, v) in rows {
        b[y * width + x] = FieldVector::new(v[0], v[1], v[2]);
    }
    Ok((width, height, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let v = vec![1.234_567_890_123e-4, f64::NAN, -0.0, 3.0, 1e-300, 7.0];
        write_map_csv(&p, 3, 2, &v).unwrap();
        let m = read_map_csv(&p).unwrap();
        assert_eq!((m.width, m.height), (3, 2));
        for (a, b) in v.iter().zip(&m.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let b = vec![FieldVector::new(1e-3, -2e-4, 3.3e-5), FieldVector::new(0.0, 1.0, f64::NAN)];
        write_vector_csv(&p, 2, 1, &b).unwrap();
        let (w, h, back) = read_vector_csv(&p).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(back[0], b[0]);
        assert!(back[1].bz.is_nan());
    }

    #[test]
    fn malformed_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "x,y,value\n0,0,abc\n").unwrap();
        assert!(matches!(read_map_csv(&p), Err(IoError::Parse(_))));
    }
}
