//! Bound-constrained Levenberg-Marquardt for small, fixed-size problems.
//!
//! Damping follows Marquardt's diagonal scaling, which makes the iteration
//! invariant under per-parameter rescaling. Bounds are enforced by
//! projecting every trial point, with parameters pinned at a bound frozen
//! for the step. Only steps that do not increase the residual sum of
//! squares are accepted.

use nalgebra::{SMatrix, SVector};

/// A least-squares problem with `N` parameters.
pub trait Problem<const N: usize> {
    fn n_residuals(&self) -> usize;

    /// Residuals at `x` into `r`; when `jac` is given, also the rows of
    /// `∂r/∂x`.
    fn evaluate(&self, x: &[f64; N], r: &mut [f64], jac: Option<&mut [[f64; N]]>);

    /// Clamp `x` into the feasible box.
    fn project(&self, x: &mut [f64; N]);

    /// Magnitude below which a parameter's relative step is measured
    /// against this floor instead of `|x_i|`.
    fn step_floor(&self) -> [f64; N];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative rss decrease below which an accepted step ends the fit.
    pub ftol: f64,
    /// Relative parameter step below which an accepted step ends the fit.
    pub xtol: f64,
    pub lambda0: f64,
    pub record_trace: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-8,
            lambda0: 1e-3,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    RssTolerance,
    StepTolerance,
    /// No damping level yields a non-increasing step; `x` is a local minimum
    /// to working precision.
    Stalled,
    MaxIterations,
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::RssTolerance | Termination::StepTolerance | Termination::Stalled)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmReport<const N: usize> {
    pub x: [f64; N],
    pub rss: f64,
    pub n_iter: usize,
    pub termination: Termination,
    /// rss after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn minimize<const N: usize, P: Problem<N>>(problem: &P, x0: [f64; N], opts: &LmOptions) -> LmReport<N> {
    let m = problem.n_residuals();
    let mut x = x0;
    problem.project(&mut x);
    let mut r = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    let mut jac = vec![[0.0; N]; m];
    problem.evaluate(&x, &mut r, None);
    let mut rss = sum_sq(&r);
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(rss);
    }
    if !rss.is_finite() {
        return LmReport {
            x,
            rss,
            n_iter: 0,
            termination: Termination::NonFinite,
            trace,
        };
    }
    let floor = problem.step_floor();
    let mut lambda = opts.lambda0;
    let mut termination = Termination::MaxIterations;
    let mut n_iter = 0;

    'outer: while n_iter < opts.max_iter {
        n_iter += 1;
        problem.evaluate(&x, &mut r, Some(&mut jac));
        let mut jtj = SMatrix::<f64, N, N>::zeros();
        let mut jtr = SVector::<f64, N>::zeros();
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..N {
                jtr[a] += row[a] * ri;
                for b in a..N {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..N {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let max_diag = (0..N).map(|a| jtj[(a, a)]).fold(0.0, f64::max);
        let diag_floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);

        loop {
            let mut damped = jtj;
            for a in 0..N {
                damped[(a, a)] += lambda * jtj[(a, a)].max(diag_floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    termination = Termination::Stalled;
                    break 'outer;
                }
                continue;
            };
            let mut delta = chol.solve(&jtr);
            let mut trial: [f64; N] = std::array::from_fn(|a| x[a] - delta[a]);
            problem.project(&mut trial);
            // parameters pinned at a bound by the projection are frozen and
            // the remaining ones re-solved, so the free step is not wasted
            let pinned: Vec<usize> = (0..N).filter(|&a| delta[a] != 0.0 && trial[a] == x[a]).collect();
            if !pinned.is_empty() && pinned.len() < N {
                let mut reduced = damped;
                let mut rhs = jtr;
                for &a in &pinned {
                    for b in 0..N {
                        reduced[(a, b)] = 0.0;
                        reduced[(b, a)] = 0.0;
                    }
                    reduced[(a, a)] = 1.0;
                    rhs[a] = 0.0;
                }
                if let Some(c) = reduced.cholesky() {
                    delta = c.solve(&rhs);
                    trial = std::array::from_fn(|a| x[a] - delta[a]);
                    problem.project(&mut trial);
                }
            }
            problem.evaluate(&trial, &mut r_trial, None);
            let rss_trial = sum_sq(&r_trial);
            if rss_trial.is_finite() && rss_trial <= rss {
                let rel_drop = if rss > 0.0 { (rss - rss_trial) / rss } else { 0.0 };
                let rel_step = (0..N)
                    .map(|a| (trial[a] - x[a]).abs() / x[a].abs().max(floor[a]))
                    .fold(0.0, f64::max);
                x = trial;
                rss = rss_trial;
                if opts.record_trace {
                    trace.push(rss);
                }
                lambda = (lambda / 3.0).max(1e-15);
                if rel_drop < opts.ftol {
                    termination = Termination::RssTolerance;
                    break 'outer;
                }
                if rel_step < opts.xtol {
                    termination = Termination::StepTolerance;
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }
    LmReport {
        x,
        rss,
        n_iter,
        termination,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (1 - x, 10 (y - x²)).
    struct Rosen;

    impl Problem<2> for Rosen {
        fn n_residuals(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &[f64; 2], r: &mut [f64], jac: Option<&mut [[f64; 2]]>) {
            r[0] = 1.0 - x[0];
            r[1] = 10.0 * (x[1] - x[0] * x[0]);
            if let Some(j) = jac {
                j[0] = [-1.0, 0.0];
                j[1] = [-20.0 * x[0], 10.0];
            }
        }
        fn project(&self, _x: &mut [f64; 2]) {}
        fn step_floor(&self) -> [f64; 2] {
            [1e-12; 2]
        }
    }

    struct BoxedRosen;

    impl Problem<2> for BoxedRosen {
        fn n_residuals(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &[f64; 2], r: &mut [f64], jac: Option<&mut [[f64; 2]]>) {
            Rosen.evaluate(x, r, jac)
        }
        fn project(&self, x: &mut [f64; 2]) {
            x[0] = x[0].min(0.5);
        }
        fn step_floor(&self) -> [f64; 2] {
            [1e-12; 2]
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let opts = LmOptions {
            record_trace: true,
            ..Default::default()
        };
        let rep = minimize(&Rosen, [-1.2, 1.0], &opts);
        assert!(rep.termination.converged(), "{:?}", rep.termination);
        assert!((rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6);
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_bounds() {
        let rep = minimize(&BoxedRosen, [-1.2, 1.0], &LmOptions::default());
        assert!(rep.x[0] <= 0.5);
        assert!((rep.x[0] - 0.5).abs() < 1e-6 && (rep.x[1] - 0.25).abs() < 1e-6);
    }
}
