//! Small value parsers for command-line arguments.

use nvmag::maps::PixelRect;
use nvmag::FieldVector;

fn numbers<T: std::str::FromStr>(s: &str, n: usize, what: &str) -> Result<Vec<T>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(format!("{what} needs {n} comma-separated values, got \"{s}\""));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("bad number \"{p}\" in {what}")))
        .collect()
}

pub fn field(s: &str) -> Result<FieldVector, String> {
    let v: Vec<f64> = numbers(s, 3, "field")?;
    let b = FieldVector::new(v[0], v[1], v[2]);
    if !b.is_finite() {
        return Err("field components must be finite".into());
    }
    Ok(b)
}

pub fn region(s: &str) -> Result<PixelRect, String> {
    let v: Vec<usize> = numbers(s, 4, "region")?;
    Ok(PixelRect::new(v[0], v[1], v[2], v[3]))
}

pub fn clip(s: &str) -> Result<(f64, f64), String> {
    let v: Vec<f64> = numbers(s, 2, "clip")?;
    if !(0.0 <= v[0] && v[0] < v[1] && v[1] <= 100.0) {
        return Err("clip percentiles must satisfy 0 <= lo < hi <= 100".into());
    }
    Ok((v[0], v[1]))
}

/// Either a square size for the four image corners or explicit
/// `x,y,w,h;x,y,w,h;...` rectangles.
#[derive(Clone, Debug, PartialEq)]
pub enum Corners {
    Size(usize),
    Explicit(Vec<PixelRect>),
}

impl Corners {
    pub fn resolve(&self, width: usize, height: usize) -> Result<Vec<PixelRect>, String> {
        match self {
            Corners::Size(n) if *n == 0 || *n > width || *n > height => {
                Err(format!("corner size {n} does not fit a {width}x{height} image"))
            }
            Corners::Size(n) => Ok(PixelRect::corners(width, height, *n).to_vec()),
            Corners::Explicit(r) => Ok(r.clone()),
        }
    }
}

pub fn corners(s: &str) -> Result<Corners, String> {
    if let Ok(n) = s.trim().parse::<usize>() {
        return Ok(Corners::Size(n));
    }
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(region)
        .collect::<Result<Vec<_>, _>>()
        .map(Corners::Explicit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fields_and_regions() {
        assert_eq!(field("4.1e-3, 0.72e-3,1.1e-3").unwrap(), FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3));
        assert!(field("1,2").is_err());
        assert_eq!(region("0,0,10,10").unwrap(), PixelRect::new(0, 0, 10, 10));
        assert!(region("0,0,-1,10").is_err());
        assert_eq!(clip("1,99").unwrap(), (1.0, 99.0));
        assert!(clip("99,1").is_err());
    }

    #[test]
    fn parses_corners() {
        assert_eq!(corners("10").unwrap(), Corners::Size(10));
        let c = corners("0,0,4,4;10,10,4,4").unwrap();
        assert_eq!(c, Corners::Explicit(vec![PixelRect::new(0, 0, 4, 4), PixelRect::new(10, 10, 4, 4)]));
        assert_eq!(Corners::Size(4).resolve(20, 10).unwrap()[3], PixelRect::new(16, 6, 4, 4));
        assert!(Corners::Size(11).resolve(20, 10).is_err());
    }
}
