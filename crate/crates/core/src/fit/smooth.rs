//! Spatial pre-averaging of contrast cubes.

use super::FitError;
use crate::exec::Execution;
use crate::synth::OdmrCube;

/// Replace each spectrum by the mean over its 3×3 neighborhood.
///
/// Windows are clamped at the image border, so edge pixels average 6 and
/// corner pixels 4 spectra.
pub fn moving_average_3x3(cube: &OdmrCube, exec: Execution) -> Result<OdmrCube, FitError> {
    let (w, h, nf) = (cube.width_px, cube.height_px, cube.n_freq());
    if w < 3 || h < 3 {
        return Err(FitError::TooSmall { width: w, height: h });
    }
    let mut out = vec![0f32; cube.contrast.len()];
    exec.for_each_chunk_mut(&mut out, w * nf, |y, row| {
        let mut acc = vec![0f64; nf];
        for x in 0..w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut count = 0.0;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    for (a, &v) in acc.iter_mut().zip(cube.spectrum(xx, yy)) {
                        *a += f64::from(v);
                    }
                    count += 1.0;
                }
            }
            for (o, a) in row[x * nf..(x + 1) * nf].iter_mut().zip(&acc) {
                *o = (a / count) as f32;
            }
        }
    });
    Ok(OdmrCube {
        contrast: out,
        ..cube.clone()
    })
}
