//! Linear quantile regression under the check loss, sparsity estimation,
//! and the quantile likelihood-ratio test for nested models.
//!
//! [`fit`] runs a Frisch-Newton interior point method and then moves to an
//! exact optimal vertex of the LP (see `vertex`), so returned coefficients
//! interpolate exactly `p` observations and satisfy the subgradient
//! optimality conditions to rounding error. Fits can be warm-started from a
//! previous basis, which is how the profiled MIDAS estimator walks its grid.

mod ipm;
mod lagtest;
mod vertex;

pub use lagtest::{sequential_lag_test, LagTestReport};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, norm_pdf, norm_ppf, sorted, empirical_quantile};

/// `rho_tau(u) = u (tau - 1(u < 0))`
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Outcome of one quantile regression.
#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub tau: f64,
    pub theta: Vec<f64>,
    /// Attained objective `sum rho_tau(y - X theta)`.
    pub loss: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    /// Observations interpolated by the solution.
    pub basis: Vec<usize>,
    pub ipm_iterations: usize,
    pub pivots: usize,
}

impl QuantileFit {
    pub fn n_params(&self) -> usize {
        self.theta.len()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Relative duality-gap tolerance of the interior point phase.
    pub gap_tol: f64,
    pub max_iter: usize,
    pub max_pivots: usize,
    /// Basis to start the vertex search from, skipping the interior point
    /// phase when it leads to an optimum.
    pub warm_basis: Option<Vec<usize>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            max_iter: 200,
            max_pivots: 2000,
            warm_basis: None,
        }
    }
}

/// Borrowed column-major view of an `n x p` design.
pub(crate) struct ColumnView<'a> {
    data: &'a [f64],
    n: usize,
    p: usize,
}

impl<'a> ColumnView<'a> {
    fn new(x: &'a DMatrix<f64>) -> Self {
        Self {
            data: x.as_slice(),
            n: x.nrows(),
            p: x.ncols(),
        }
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

fn validate(y: &[f64], x: &DMatrix<f64>, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
    }
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if p == 0 || n <= p {
        return Err(Error::InvalidInput(format!("need n > p, got n={n}, p={p}")));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in regression data".into()));
    }
    Ok(())
}

/// Numerical column-rank check via the eigenvalues of the scaled Gram matrix.
fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::SingularDesign(format!("column {j} is identically zero")));
    }
    let mut g = x.transpose() * x;
    for j in 0..p {
        for k in 0..p {
            g[(j, k)] /= norms[j] * norms[k];
        }
    }
    let eig = g.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-12 {
        return Err(Error::SingularDesign(format!(
            "design is numerically rank deficient (smallest scaled eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Minimizes `sum rho_tau(y - X theta)`.
pub fn fit(y: &[f64], x: &DMatrix<f64>, tau: f64) -> Result<QuantileFit> {
    fit_with(y, x, tau, &FitOptions::default())
}

pub fn fit_with(y: &[f64], x: &DMatrix<f64>, tau: f64, opts: &FitOptions) -> Result<QuantileFit> {
    validate(y, x, tau)?;
    check_rank(x)?;
    let view = ColumnView::new(x);
    let n = view.n();

    let finish = |v: vertex::Vertex, ipm_iterations: usize| QuantileFit {
        tau,
        loss: vertex::total_loss(&v.residuals, tau),
        theta: v.theta,
        n_obs: n,
        converged: v.optimal,
        residuals: v.residuals,
        basis: v.basis,
        ipm_iterations,
        pivots: v.pivots,
    };

    if let Some(basis) = &opts.warm_basis {
        if basis.len() == view.p() && basis.iter().all(|&i| i < n) {
            if let Some(v) = vertex::descend(&view, y, tau, basis.clone(), opts.max_pivots) {
                if v.optimal {
                    return Ok(finish(v, 0));
                }
            }
        }
    }

    let (start_basis, iters) = match ipm::frisch_newton(&view, y, tau, opts.gap_tol, opts.max_iter) {
        Some(out) => {
            let mut r = y.to_vec();
            for (j, b) in out.beta.iter().enumerate() {
                for (ri, xv) in r.iter_mut().zip(view.col(j)) {
                    *ri -= xv * b;
                }
            }
            if !out.converged {
                log::debug!("interior point stopped after {} iterations without closing the gap", out.iterations);
            }
            (vertex::select_basis(&view, &r), out.iterations)
        }
        None => {
            // interior point broke down; start the vertex search from the
            // observations closest to the least-absolute-deviation-ish
            // centre of the response instead
            let med = {
                let s = sorted(y);
                empirical_quantile(&s, tau)
            };
            let score: Vec<f64> = y.iter().map(|v| v - med).collect();
            (vertex::select_basis(&view, &score), 0)
        }
    };
    let basis = start_basis
        .ok_or_else(|| Error::SingularDesign("no nonsingular basis of observations".into()))?;
    let v = vertex::descend(&view, y, tau, basis, opts.max_pivots.max(50 * n))
        .ok_or_else(|| Error::SingularDesign("basis matrix became singular".into()))?;
    Ok(finish(v, iters))
}

/// Checks the subgradient optimality conditions at `theta`: with `h` the
/// `p` observations of smallest absolute residual, there must be weights
/// `a_h` in `[tau - 1, tau]` (widened by `tol`) solving
/// `X_h' a_h = -sum_{i not in h} x_i psi_tau(r_i)`.
pub fn verify_optimality(y: &[f64], x: &DMatrix<f64>, tau: f64, theta: &[f64], tol: f64) -> bool {
    let (n, p) = x.shape();
    if theta.len() != p || y.len() != n || n < p {
        return false;
    }
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| x[(i, j)] * theta[j]).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()));
    let h = &order[..p];
    let mut in_h = vec![false; n];
    for &i in h {
        in_h[i] = true;
    }
    let mut g = nalgebra::DVector::zeros(p);
    for i in (0..n).filter(|&i| !in_h[i]) {
        let psi = if r[i] < 0.0 { tau - 1.0 } else { tau };
        for j in 0..p {
            g[j] -= x[(i, j)] * psi;
        }
    }
    let xh_t = DMatrix::from_fn(p, p, |j, k| x[(h[k], j)]);
    let Some(a) = xh_t.lu().solve(&g) else {
        return false;
    };
    a.iter().all(|v| *v >= tau - 1.0 - tol && *v <= tau + tol)
}

/// Hall-Sheather bandwidth for the sparsity difference quotient, with
/// `alpha = 0.05`.
pub fn hall_sheather_bandwidth(n: usize, tau: f64) -> f64 {
    let alpha = 0.05;
    let x0 = norm_ppf(tau);
    let f0 = norm_pdf(x0);
    let z = norm_ppf(1.0 - alpha / 2.0);
    (n as f64).powf(-1.0 / 3.0)
        * z.powf(2.0 / 3.0)
        * (1.5 * f0 * f0 / (2.0 * x0 * x0 + 1.0)).powf(1.0 / 3.0)
}

/// Empirical quantile function of a residual sample.
#[derive(Debug, Clone)]
pub struct EmpiricalQuantile {
    sorted: Vec<f64>,
}

impl EmpiricalQuantile {
    pub fn new(sample: &[f64]) -> Self {
        Self { sorted: sorted(sample) }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        empirical_quantile(&self.sorted, p)
    }
}

/// Siddiqui difference quotient `[Q(tau + h) - Q(tau - h)] / (2h)`.
///
/// The window is clamped to `[1/n, 1 - 1/n]`; the quotient then divides by
/// the clamped width.
pub fn sparsity<F: Fn(f64) -> f64>(quantile: F, tau: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput("sparsity needs at least two residuals".into()));
    }
    let h = hall_sheather_bandwidth(n, tau);
    let nf = n as f64;
    let lo = (tau - h).max(1.0 / nf);
    let hi = (tau + h).min(1.0 - 1.0 / nf);
    if hi <= lo {
        return Err(Error::ZeroSparsity);
    }
    let s = (quantile(hi) - quantile(lo)) / (hi - lo);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroSparsity);
    }
    Ok(s)
}

/// Sparsity estimated from a fit's residuals.
pub fn residual_sparsity(fit: &QuantileFit) -> Result<f64> {
    let q = EmpiricalQuantile::new(&fit.residuals);
    sparsity(|u| q.quantile(u), fit.tau, fit.n_obs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrTestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub sparsity: f64,
    pub v_restricted: f64,
    pub v_unrestricted: f64,
}

/// `2 (V_R - V_U) / (tau (1 - tau) s)`, clamped at zero, against chi-squared(1).
pub fn lr_test(
    restricted: &QuantileFit,
    unrestricted: &QuantileFit,
    sparsity: f64,
) -> Result<LrTestResult> {
    if restricted.tau != unrestricted.tau {
        return Err(Error::Incompatible(format!(
            "tau differs: {} vs {}",
            restricted.tau, unrestricted.tau
        )));
    }
    if restricted.n_obs != unrestricted.n_obs {
        return Err(Error::Incompatible(format!(
            "sample sizes differ: {} vs {}",
            restricted.n_obs, unrestricted.n_obs
        )));
    }
    if restricted.n_params() + 1 != unrestricted.n_params() {
        return Err(Error::Incompatible(format!(
            "models must be nested by one coefficient, got {} and {} parameters",
            restricted.n_params(),
            unrestricted.n_params()
        )));
    }
    lr_statistic(restricted.loss, unrestricted.loss, restricted.tau, sparsity)
}

/// Same statistic from raw check-loss values.
pub fn lr_statistic(v_restricted: f64, v_unrestricted: f64, tau: f64, sparsity: f64) -> Result<LrTestResult> {
    if !(sparsity > 0.0) {
        return Err(Error::ZeroSparsity);
    }
    let raw = 2.0 * (v_restricted - v_unrestricted) / (tau * (1.0 - tau) * sparsity);
    let statistic = raw.max(0.0);
    Ok(LrTestResult {
        statistic,
        df: 1,
        p_value: chi2_sf(statistic, 1.0),
        sparsity,
        v_restricted,
        v_unrestricted,
    })
}
