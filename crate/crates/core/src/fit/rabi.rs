//! Rabi-trace fitting for π-pulse calibration.

use std::f64::consts::TAU;

use super::lm::{self, LmOptions, Problem};
use super::FitError;

/// Fitted Rabi oscillation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiFit {
    /// π-pulse length `1/(2 f_Rabi)`, s.
    pub t_pi: f64,
    /// Hz.
    pub rabi_freq: f64,
    /// Envelope decay, s; infinite when the fit finds none.
    pub decay: f64,
    pub contrast: f64,
    /// Counts.
    pub f0: f64,
    pub rss: f64,
}

/// Internal units: τ in μs, frequency in MHz, decay rate in 1/μs, counts
/// normalized to the trace maximum.
struct RabiProblem {
    tau: Vec<f64>,
    y: Vec<f64>,
}

impl Problem<4> for RabiProblem {
    fn n_residuals(&self) -> usize {
        self.tau.len()
    }

    fn evaluate(&self, x: &[f64; 4], r: &mut [f64], jac: Option<&mut [[f64; 4]]>) {
        let [f0, c, f, k] = *x;
        let mut jac = jac;
        for (i, (&t, &y)) in self.tau.iter().zip(&self.y).enumerate() {
            let e = (-k * t).exp();
            let (s, co) = (TAU * f * t).sin_cos();
            let g = 1.0 - 0.5 * c * (1.0 - co * e);
            r[i] = f0 * g - y;
            if let Some(j) = jac.as_deref_mut() {
                j[i] = [
                    g,
                    -0.5 * f0 * (1.0 - co * e),
                    -0.5 * f0 * c * s * TAU * t * e,
                    -0.5 * f0 * c * co * t * e,
                ];
            }
        }
    }

    fn project(&self, x: &mut [f64; 4]) {
        x[0] = x[0].max(1e-9);
        x[1] = x[1].clamp(0.0, 2.0);
        x[2] = x[2].max(1e-6);
        x[3] = x[3].max(0.0);
    }

    fn step_floor(&self) -> [f64; 4] {
        [1e-12, 1e-12, 1e-12, 1e-9]
    }
}

/// Best `(f, a, b, rss)` for `y ≈ a + b cos(2π f τ)` at fixed `f`.
fn linear_cosine(tau: &[f64], y: &[f64], f: f64) -> (f64, f64, f64) {
    let n = tau.len() as f64;
    let cs: Vec<f64> = tau.iter().map(|t| (TAU * f * t).cos()).collect();
    let (sc, scc) = (cs.iter().sum::<f64>(), cs.iter().map(|c| c * c).sum::<f64>());
    let (sy, scy) = (y.iter().sum::<f64>(), cs.iter().zip(y).map(|(c, y)| c * y).sum::<f64>());
    let det = n * scc - sc * sc;
    if det.abs() < 1e-12 {
        return (sy / n, 0.0, f64::INFINITY);
    }
    let a = (scc * sy - sc * scy) / det;
    let b = (n * scy - sc * sy) / det;
    let rss = cs.iter().zip(y).map(|(c, y)| (a + b * c - y).powi(2)).sum();
    (a, b, rss)
}

/// Fit `F0·(1 - (c/2)(1 - cos(2π f τ) e^{-τ/decay}))` to `(τ, counts)`.
///
/// `guess_freq` seeds a coarse scan over `[guess/2, 2·guess]` before the
/// nonlinear refinement.
pub fn fit_rabi(trace: &[(f64, f64)], guess_freq: f64) -> Result<RabiFit, FitError> {
    if trace.len() < 8 {
        return Err(FitError::InsufficientData(format!("{} Rabi samples, need 8", trace.len())));
    }
    if !(guess_freq > 0.0) {
        return Err(FitError::BadGuess);
    }
    let span = trace.last().unwrap().0 - trace[0].0;
    if span * guess_freq < 0.5 {
        return Err(FitError::InsufficientData("trace shorter than one oscillation".into()));
    }
    let scale = trace.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(FitError::NonFiniteData);
    }
    let tau: Vec<f64> = trace.iter().map(|p| p.0 * 1e6).collect();
    let y: Vec<f64> = trace.iter().map(|p| p.1 / scale).collect();
    let g_mhz = guess_freq * 1e-6;
    let (mut best_f, mut best) = (g_mhz, (0.0, 0.0, f64::INFINITY));
    for i in 0..=120 {
        let f = g_mhz * 2f64.powf(-1.0 + 2.0 * i as f64 / 120.0);
        let cand = linear_cosine(&tau, &y, f);
        if cand.1 > 0.0 && cand.2 < best.2 {
            best = cand;
            best_f = f;
        }
    }
    let (a, b, _) = best;
    let f0 = a + b;
    let x0 = [f0.max(1e-3), (2.0 * b / f0).clamp(0.0, 2.0), best_f, 0.0];
    let problem = RabiProblem { tau, y };
    let rep = lm::minimize(&problem, x0, &LmOptions::default());
    if !rep.termination.converged() {
        return Err(FitError::NotConverged);
    }
    let [f0, c, f, k] = rep.x;
    let rabi_freq = f * 1e6;
    Ok(RabiFit {
        t_pi: 1.0 / (2.0 * rabi_freq),
        rabi_freq,
        decay: if k > 0.0 { 1e-6 / k } else { f64::INFINITY },
        contrast: c,
        f0: f0 * scale,
        rss: rep.rss * scale * scale,
    })
}
