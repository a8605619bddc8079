//! Spectral and temporal fitting: 3×3 averaging, the four-Lorentzian model
//! and Rabi traces.

mod guess;
pub mod lm;
mod lorentz;
mod rabi;
mod smooth;

use thiserror::Error;

pub use guess::{initial_guess, noise_estimate, running_mean};
pub use lorentz::{
    fit_four_lorentzians, fit_quality, fit_spectrum, FitQuality, FitStart, FourLorentzian, SpectrumFit, N_PARAMS,
};
pub use rabi::{fit_rabi, RabiFit};
pub use smooth::moving_average_3x3;

/// Starting HWHM for seeded dips, Hz.
pub const DEFAULT_GAMMA_SEED: f64 = 2.5e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("cube of {width}x{height} is smaller than the 3x3 window")]
    TooSmall { width: usize, height: usize },
    #[error("no dip stands above the noise")]
    NoPeaks,
    #[error("initial guess is not finite")]
    BadGuess,
    #[error("fit did not converge")]
    NotConverged,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("data contains non-finite samples")]
    NonFiniteData,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// How far outside the sweep a center may wander, Hz.
    pub nu_margin: f64,
    /// HWHM bounds, Hz.
    pub gamma_bounds: (f64, f64),
    /// Minimum spacing between seeded dips, Hz.
    pub min_separation: f64,
    pub record_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-8,
            nu_margin: 20e6,
            gamma_bounds: (0.2e6, 30e6),
            min_separation: 8e6,
            record_trace: false,
        }
    }
}

pub fn hwhm_from_fwhm(fwhm: f64) -> f64 {
    0.5 * fwhm
}

pub fn fwhm_from_hwhm(hwhm: f64) -> f64 {
    2.0 * hwhm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{spectrum_model, DipModel};

    fn sweep() -> Vec<f64> {
        (0..231).map(|k| 2.65e9 + k as f64 * 1e6).collect()
    }

    fn truth() -> DipModel {
        DipModel {
            amplitude: [1.138e-2, 0.868e-2, 0.458e-2, 0.677e-2],
            gamma_hwhm: [2.47e6, 2.66e6, 2.48e6, 2.58e6],
            nu: [2774.30e6, 2797.58e6, 2809.86e6, 2833.14e6],
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let f = sweep();
        let data = vec![0.0; f.len()];
        let opts = FitOptions::default();
        let p = FourLorentzian::new(&f, &data, &opts);
        let x = p.to_internal(&FitStart { model: truth(), baseline: 0.001 });
        let (_, jac) = p.model_and_jacobian(&x);
        for (k, &u) in p.offsets().iter().enumerate().step_by(17) {
            for a in 0..N_PARAMS {
                let h = 1e-6 * x[a].abs().max(1e-3);
                let (mut xp, mut xm) = (x, x);
                xp[a] += h;
                xm[a] -= h;
                let fd = (p.model_at(&xp, u) - p.model_at(&xm, u)) / (2.0 * h);
                assert!((fd - jac[k][a]).abs() <= 1e-6 * (1.0 + fd.abs()), "k={k} a={a}: {fd} vs {}", jac[k][a]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let f = sweep();
        let t = truth();
        let data: Vec<f64> = f.iter().map(|&v| spectrum_model(&t, v)).collect();
        let fit = fit_spectrum(&f, &data, None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        for i in 0..4 {
            assert!((fit.nu[i] - t.nu[i]).abs() < 1e3, "{:?}", fit.nu);
            assert!((fit.amplitude[i] / t.amplitude[i] - 1.0).abs() < 1e-3);
            assert!((fit.gamma_hwhm[i] / t.gamma_hwhm[i] - 1.0).abs() < 1e-3);
        }
        let q = fit_quality(&fit, &f, &data);
        assert!(q.r_squared > 0.999_999);
    }

    #[test]
    fn rss_trace_is_monotone() {
        let f = sweep();
        let t = truth();
        let data: Vec<f64> = f.iter().enumerate().map(|(k, &v)| spectrum_model(&t, v) + 1e-4 * ((k * 7919 % 13) as f64 - 6.0) / 6.0).collect();
        let opts = FitOptions { record_trace: true, ..Default::default() };
        let fit = fit_four_lorentzians(&f, &data, &FitStart::from(t), &opts).unwrap();
        assert!(fit.rss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn scaling_data_scales_amplitudes() {
        let f = sweep();
        let t = truth();
        let data: Vec<f64> = f.iter().map(|&v| spectrum_model(&t, v)).collect();
        let scaled: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        let a = fit_spectrum(&f, &data, None, &FitOptions::default()).unwrap();
        let b = fit_spectrum(&f, &scaled, None, &FitOptions::default()).unwrap();
        for i in 0..4 {
            assert!((b.amplitude[i] - 2.0 * a.amplitude[i]).abs() < 1e-6);
            assert!((b.nu[i] - a.nu[i]).abs() < 1e3);
        }
    }

    #[test]
    fn merged_dips_still_return_four() {
        let f = sweep();
        let mut t = truth();
        t.nu = [2.80e9, 2.80e9 + 0.5e6, 2.80e9 + 1e6, 2.80e9 + 1.5e6];
        let data: Vec<f64> = f.iter().map(|&v| spectrum_model(&t, v)).collect();
        let fit = fit_spectrum(&f, &data, None, &FitOptions::default()).unwrap();
        assert!(fit.is_finite());
        assert!(fit.nu.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let f = sweep();
        let data = vec![0.0; f.len()];
        assert_eq!(fit_spectrum(&f, &data, None, &FitOptions::default()), Err(FitError::NoPeaks));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let f = sweep();
        let mut data = vec![0.0; f.len()];
        assert!(matches!(
            fit_four_lorentzians(&f[..10], &data[..10], &FitStart::from(truth()), &FitOptions::default()),
            Err(FitError::InsufficientData(_))
        ));
        data[3] = f64::NAN;
        assert_eq!(
            fit_four_lorentzians(&f, &data, &FitStart::from(truth()), &FitOptions::default()),
            Err(FitError::NonFiniteData)
        );
        let mut bad = truth();
        bad.nu[0] = f64::INFINITY;
        assert_eq!(
            fit_four_lorentzians(&f, &vec![0.0; f.len()], &FitStart::from(bad), &FitOptions::default()),
            Err(FitError::BadGuess)
        );
    }

    #[test]
    fn rabi_fit_recovers_pi_time() {
        use crate::synth::{rabi_model, RabiParams};
        let p = RabiParams::default();
        let trace: Vec<(f64, f64)> = (0..200).map(|k| k as f64 * 5e-9).map(|t| (t, rabi_model(&p, t))).collect();
        let fit = fit_rabi(&trace, 1.0 / (2.0 * 150e-9)).unwrap();
        assert!((fit.t_pi - p.t_pi).abs() < 1e-12, "{}", fit.t_pi);
        assert!((fit.decay - p.decay).abs() < 1e-12);
        assert!((fit.contrast - p.contrast).abs() < 1e-9);
    }

    #[test]
    fn fwhm_round_trip() {
        assert_eq!(fwhm_from_hwhm(hwhm_from_fwhm(4.942e6)), 4.942e6);
    }
}
