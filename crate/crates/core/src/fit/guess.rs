//! Peak-picking initialization for the four-dip fit.

use super::{FitError, DEFAULT_GAMMA_SEED};
use crate::synth::DipModel;

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Robust per-sample noise from first differences (MAD, Gaussian-scaled).
pub fn noise_estimate(data: &[f64]) -> f64 {
    if data.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = data.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(&diffs);
    let dev: Vec<f64> = diffs.iter().map(|d| (d - m).abs()).collect();
    1.4826 * median(&dev) / std::f64::consts::SQRT_2
}

/// Centered running mean, window shrunk at the ends.
pub fn running_mean(data: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = data.len();
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            data[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Seed `n_dips` Lorentzians from the deepest separated local maxima of the
/// smoothed dip depth.
///
/// Missing dips are placed at equally spaced positions across the sweep with
/// half the global maximum depth.
pub fn initial_guess(freqs: &[f64], data: &[f64], n_dips: usize, min_separation: f64) -> Result<DipModel, FitError> {
    assert!(n_dips == 4, "the spectral model has exactly four dips");
    if freqs.len() != data.len() || data.len() < 3 * n_dips {
        return Err(FitError::InsufficientData(format!("{} samples, need {}", data.len(), 3 * n_dips)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteData);
    }
    let smooth = running_mean(data, 5);
    let base = median(data);
    let depth: Vec<f64> = smooth.iter().map(|s| s - base).collect();
    let sigma = noise_estimate(data);
    let global_max = depth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(global_max > 0.0) || global_max < 3.0 * sigma {
        return Err(FitError::NoPeaks);
    }
    let n = depth.len();
    let threshold = 3.0 * sigma / 5f64.sqrt();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&k| {
            let left = if k > 0 { depth[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < n { depth[k + 1] } else { f64::NEG_INFINITY };
            depth[k] > threshold && depth[k] >= left && depth[k] > right
        })
        .collect();
    candidates.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::with_capacity(n_dips);
    for k in candidates {
        if picked.len() == n_dips {
            break;
        }
        if picked.iter().all(|&p| (freqs[p] - freqs[k]).abs() >= min_separation) {
            picked.push(k);
        }
    }
    let mut amplitude = [0.0; 4];
    let mut nu = [0.0; 4];
    for (i, &k) in picked.iter().enumerate() {
        amplitude[i] = depth[k];
        nu[i] = freqs[k];
    }
    let missing = n_dips - picked.len();
    let (lo, hi) = (freqs[0], freqs[n - 1]);
    for j in 0..missing {
        let i = picked.len() + j;
        nu[i] = lo + (hi - lo) * (j + 1) as f64 / (missing + 1) as f64;
        amplitude[i] = 0.5 * global_max;
    }
    Ok(DipModel {
        amplitude,
        gamma_hwhm: [DEFAULT_GAMMA_SEED; 4],
        nu,
    })
}
