//! Four-Lorentzian spectral fit.
//!
//! Internally frequencies are megahertz offsets from the first sample, which
//! keeps the normal equations well conditioned. Parameter layout:
//! `[A_1..A_4, Γ_1..Γ_4 (MHz), ν_1..ν_4 (MHz), baseline]`.

use nalgebra::SMatrix;

use super::lm::{self, LmOptions, Problem};
use super::{initial_guess, FitError, FitOptions};
use crate::synth::DipModel;

pub const N_PARAMS: usize = 13;

const MHZ: f64 = 1e6;

/// Starting point for a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitStart {
    pub model: DipModel,
    pub baseline: f64,
}

impl From<DipModel> for FitStart {
    fn from(model: DipModel) -> Self {
        Self { model, baseline: 0.0 }
    }
}

/// Result of a four-Lorentzian fit, dips sorted by ascending frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumFit {
    pub amplitude: [f64; 4],
    /// Hz.
    pub gamma_hwhm: [f64; 4],
    /// Hz.
    pub nu: [f64; 4],
    pub baseline: f64,
    pub rss: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// rss after each accepted step, when requested.
    pub rss_trace: Vec<f64>,
    /// One-sigma standard errors from the scaled inverse normal matrix;
    /// NaN when it is singular.
    pub amplitude_err: [f64; 4],
    /// Hz.
    pub gamma_err: [f64; 4],
    /// Hz.
    pub nu_err: [f64; 4],
}

impl SpectrumFit {
    pub fn model(&self) -> DipModel {
        DipModel {
            amplitude: self.amplitude,
            gamma_hwhm: self.gamma_hwhm,
            nu: self.nu,
        }
    }

    pub fn start(&self) -> FitStart {
        FitStart {
            model: self.model(),
            baseline: self.baseline,
        }
    }

    /// Fitted contrast at `nu` including the baseline.
    pub fn eval(&self, nu: f64) -> f64 {
        self.baseline + crate::synth::spectrum_model(&self.model(), nu)
    }

    pub fn is_finite(&self) -> bool {
        self.model().is_valid() && self.baseline.is_finite() && self.rss.is_finite()
    }
}

/// Least-squares problem for `baseline + Σ A Γ²/((ν-ν_i)² + Γ²)`.
pub struct FourLorentzian<'a> {
    /// Sample positions, MHz from `origin`.
    u: Vec<f64>,
    data: &'a [f64],
    origin: f64,
    lower: [f64; N_PARAMS],
    upper: [f64; N_PARAMS],
}

impl<'a> FourLorentzian<'a> {
    pub fn new(freqs: &[f64], data: &'a [f64], opts: &FitOptions) -> Self {
        let origin = freqs[0];
        let u: Vec<f64> = freqs.iter().map(|f| (f - origin) / MHZ).collect();
        let u_max = u.last().copied().unwrap_or(0.0);
        let margin = opts.nu_margin / MHZ;
        let (g_lo, g_hi) = (opts.gamma_bounds.0 / MHZ, opts.gamma_bounds.1 / MHZ);
        let mut lower = [0.0; N_PARAMS];
        let mut upper = [0.0; N_PARAMS];
        for i in 0..4 {
            lower[i] = 0.0;
            upper[i] = 1.0;
            lower[4 + i] = g_lo;
            upper[4 + i] = g_hi;
            lower[8 + i] = -margin;
            upper[8 + i] = u_max + margin;
        }
        lower[12] = -1.0;
        upper[12] = 1.0;
        Self {
            u,
            data,
            origin,
            lower,
            upper,
        }
    }

    pub fn to_internal(&self, start: &FitStart) -> [f64; N_PARAMS] {
        let mut x = [0.0; N_PARAMS];
        for i in 0..4 {
            x[i] = start.model.amplitude[i];
            x[4 + i] = start.model.gamma_hwhm[i] / MHZ;
            x[8 + i] = (start.model.nu[i] - self.origin) / MHZ;
        }
        x[12] = start.baseline;
        x
    }

    pub fn from_internal(&self, x: &[f64; N_PARAMS]) -> FitStart {
        FitStart {
            model: DipModel {
                amplitude: std::array::from_fn(|i| x[i]),
                gamma_hwhm: std::array::from_fn(|i| x[4 + i] * MHZ),
                nu: std::array::from_fn(|i| self.origin + x[8 + i] * MHZ),
            },
            baseline: x[12],
        }
    }

    /// Model values (not residuals) and their Jacobian at internal `x`.
    pub fn model_and_jacobian(&self, x: &[f64; N_PARAMS]) -> (Vec<f64>, Vec<[f64; N_PARAMS]>) {
        let mut model = vec![0.0; self.u.len()];
        let mut jac = vec![[0.0; N_PARAMS]; self.u.len()];
        for (k, &u) in self.u.iter().enumerate() {
            let (v, row) = eval_point(x, u);
            model[k] = v;
            jac[k] = row;
        }
        (model, jac)
    }

    /// Model value at an internal frequency offset `u` (MHz).
    pub fn model_at(&self, x: &[f64; N_PARAMS], u: f64) -> f64 {
        eval_point(x, u).0
    }

    pub fn offsets(&self) -> &[f64] {
        &self.u
    }
}

#[inline]
fn eval_point(x: &[f64; N_PARAMS], u: f64) -> (f64, [f64; N_PARAMS]) {
    let mut row = [0.0; N_PARAMS];
    let mut v = x[12];
    for i in 0..4 {
        let (a, g, c) = (x[i], x[4 + i], x[8 + i]);
        let d = u - c;
        let g2 = g * g;
        let q = d * d + g2;
        let inv_q = 1.0 / q;
        let shape = g2 * inv_q;
        v += a * shape;
        row[i] = shape;
        let aq2 = a * inv_q * inv_q;
        row[4 + i] = 2.0 * aq2 * g * d * d;
        row[8 + i] = 2.0 * aq2 * g2 * d;
    }
    row[12] = 1.0;
    (v, row)
}

impl Problem<N_PARAMS> for FourLorentzian<'_> {
    fn n_residuals(&self) -> usize {
        self.u.len()
    }

    fn evaluate(&self, x: &[f64; N_PARAMS], r: &mut [f64], jac: Option<&mut [[f64; N_PARAMS]]>) {
        match jac {
            Some(j) => {
                for (k, &u) in self.u.iter().enumerate() {
                    let (v, row) = eval_point(x, u);
                    r[k] = v - self.data[k];
                    j[k] = row;
                }
            }
            None => {
                for (k, &u) in self.u.iter().enumerate() {
                    r[k] = eval_point(x, u).0 - self.data[k];
                }
            }
        }
    }

    fn project(&self, x: &mut [f64; N_PARAMS]) {
        for a in 0..N_PARAMS {
            x[a] = x[a].clamp(self.lower[a], self.upper[a]);
        }
    }

    fn step_floor(&self) -> [f64; N_PARAMS] {
        let mut f = [1e-12; N_PARAMS];
        for i in 0..4 {
            f[4 + i] = 1e-6;
            f[8 + i] = 1.0;
        }
        f
    }
}

/// Damped least-squares fit of four Lorentzian dips plus a constant.
///
/// Non-convergence is reported through `converged = false` on the best
/// point found, not as an error.
pub fn fit_four_lorentzians(
    freqs: &[f64],
    data: &[f64],
    start: &FitStart,
    opts: &FitOptions,
) -> Result<SpectrumFit, FitError> {
    if freqs.len() != data.len() {
        return Err(FitError::InsufficientData(format!("{} frequencies vs {} samples", freqs.len(), data.len())));
    }
    if freqs.len() < 13 {
        return Err(FitError::InsufficientData(format!("{} samples, need at least 13", freqs.len())));
    }
    if !start.model.nu.iter().chain(&start.model.amplitude).chain(&start.model.gamma_hwhm).all(|v| v.is_finite())
        || !start.baseline.is_finite()
    {
        return Err(FitError::BadGuess);
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteData);
    }
    let problem = FourLorentzian::new(freqs, data, opts);
    let x0 = problem.to_internal(start);
    let lm_opts = LmOptions {
        max_iter: opts.max_iter,
        ftol: opts.ftol,
        xtol: opts.xtol,
        record_trace: opts.record_trace,
        ..Default::default()
    };
    let rep = lm::minimize(&problem, x0, &lm_opts);
    let best = problem.from_internal(&rep.x);
    let err = standard_errors(&problem, &rep.x, rep.rss);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| best.model.nu[a].total_cmp(&best.model.nu[b]));
    Ok(SpectrumFit {
        amplitude: order.map(|i| best.model.amplitude[i]),
        gamma_hwhm: order.map(|i| best.model.gamma_hwhm[i]),
        nu: order.map(|i| best.model.nu[i]),
        baseline: best.baseline,
        rss: rep.rss,
        converged: rep.termination.converged(),
        n_iter: rep.n_iter,
        rss_trace: rep.trace,
        amplitude_err: order.map(|i| err[i]),
        gamma_err: order.map(|i| err[4 + i] * MHZ),
        nu_err: order.map(|i| err[8 + i] * MHZ),
    })
}

/// `sqrt(diag((JᵀJ)⁻¹) · rss/(n - 13))` in internal units.
fn standard_errors(problem: &FourLorentzian, x: &[f64; N_PARAMS], rss: f64) -> [f64; N_PARAMS] {
    let (_, jac) = problem.model_and_jacobian(x);
    let mut jtj = SMatrix::<f64, N_PARAMS, N_PARAMS>::zeros();
    for row in &jac {
        for a in 0..N_PARAMS {
            for b in 0..N_PARAMS {
                jtj[(a, b)] += row[a] * row[b];
            }
        }
    }
    let dof = (jac.len() as f64 - N_PARAMS as f64).max(1.0);
    match jtj.try_inverse() {
        Some(inv) => std::array::from_fn(|a| (inv[(a, a)].max(0.0) * rss / dof).sqrt()),
        None => [f64::NAN; N_PARAMS],
    }
}

fn lost_dip(fit: &SpectrumFit) -> Option<usize> {
    let a_max = fit.amplitude.iter().copied().fold(0.0, f64::max);
    if let Some(i) = (0..4).find(|&i| fit.amplitude[i] < 0.05 * a_max) {
        return Some(i);
    }
    for i in 0..3 {
        let g = fit.gamma_hwhm[i].min(fit.gamma_hwhm[i + 1]);
        if fit.nu[i + 1] - fit.nu[i] < 0.25 * g {
            return Some(if fit.amplitude[i] < fit.amplitude[i + 1] { i } else { i + 1 });
        }
    }
    None
}

/// Full per-spectrum fit: guess (or warm start), fit, and up to two
/// reseeds of a collapsed dip at the largest residual.
pub fn fit_spectrum(
    freqs: &[f64],
    data: &[f64],
    warm: Option<&FitStart>,
    opts: &FitOptions,
) -> Result<SpectrumFit, FitError> {
    let cold = || -> Result<FitStart, FitError> {
        let model = initial_guess(freqs, data, 4, opts.min_separation)?;
        Ok(FitStart {
            model,
            baseline: super::guess::median(data),
        })
    };
    let start = match warm {
        Some(s) => *s,
        None => cold()?,
    };
    let mut fit = fit_four_lorentzians(freqs, data, &start, opts)?;
    if warm.is_some() && (!fit.converged || lost_dip(&fit).is_some()) {
        let refit = fit_four_lorentzians(freqs, data, &cold()?, opts)?;
        if !fit.converged || (refit.converged && refit.rss <= fit.rss) {
            fit = refit;
        }
    }
    for _ in 0..2 {
        let Some(i) = lost_dip(&fit) else { break };
        let (k_max, resid) = data
            .iter()
            .zip(freqs)
            .map(|(&y, &f)| y - fit.eval(f))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 0.0));
        if resid <= 0.0 {
            break;
        }
        let mut start = fit.start();
        start.model.nu[i] = freqs[k_max];
        start.model.amplitude[i] = resid;
        start.model.gamma_hwhm[i] = super::DEFAULT_GAMMA_SEED;
        let refit = fit_four_lorentzians(freqs, data, &start, opts)?;
        if refit.rss < fit.rss {
            fit = refit;
        } else {
            break;
        }
    }
    Ok(fit)
}

/// Goodness-of-fit summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitQuality {
    pub r_squared: f64,
    /// `A_i` over the residual standard deviation.
    pub per_dip_snr: [f64; 4],
}

pub fn fit_quality(fit: &SpectrumFit, freqs: &[f64], data: &[f64]) -> FitQuality {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss_tot: f64 = data.iter().map(|y| (y - mean).powi(2)).sum();
    let rss: f64 = data.iter().zip(freqs).map(|(&y, &f)| (y - fit.eval(f)).powi(2)).sum();
    let dof = (n - N_PARAMS as f64).max(1.0);
    let sigma = (rss / dof).sqrt();
    let r_squared = if ss_tot > 0.0 {
        1.0 - rss / ss_tot
    } else if rss == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    FitQuality {
        r_squared,
        per_dip_snr: fit.amplitude.map(|a| if sigma > 0.0 { a / sigma } else { f64::INFINITY }),
    }
}
