//! Rabi-oscillation traces used to calibrate the π pulse.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiParams {
    /// Fluorescence without microwaves, counts.
    pub f0: f64,
    /// Full fluorescence drop at the π pulse.
    pub contrast: f64,
    /// First fluorescence minimum, s.
    pub t_pi: f64,
    /// Envelope decay time, s (`f64::INFINITY` for none).
    pub decay: f64,
    /// Drive frequency, Hz; recorded only.
    pub mw_frequency: f64,
}

impl Default for RabiParams {
    fn default() -> Self {
        Self {
            f0: 400.0,
            contrast: 0.2,
            t_pi: 110e-9,
            decay: 1e-6,
            mw_frequency: 2.7305e9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiNoise {
    pub seed: u64,
}

/// `F0·(1 - (c/2)(1 - cos(πτ/t_π)·e^{-τ/decay}))`.
pub fn rabi_model(p: &RabiParams, tau: f64) -> f64 {
    let env = if p.decay.is_infinite() { 1.0 } else { (-tau / p.decay).exp() };
    p.f0 * (1.0 - 0.5 * p.contrast * (1.0 - (std::f64::consts::PI * tau / p.t_pi).cos() * env))
}

/// Sample the model at `durations`, optionally with Poisson counting noise
/// (relative noise `1/√F0`).
pub fn rabi_trace(
    p: &RabiParams,
    noise: Option<RabiNoise>,
    durations: &[f64],
) -> Result<Vec<(f64, f64)>, SynthError> {
    if durations.iter().any(|t| !(*t >= 0.0)) || durations.windows(2).any(|w| w[1] < w[0]) {
        return Err(SynthError::BadDurations);
    }
    let mut rng = noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    Ok(durations
        .iter()
        .map(|&t| {
            let mean = rabi_model(p, t);
            let v = match rng.as_mut() {
                Some(r) if mean > 0.0 => Poisson::new(mean).map(|d| d.sample(r)).unwrap_or(mean),
                _ => mean,
            };
            (t, v)
        })
        .collect())
}
