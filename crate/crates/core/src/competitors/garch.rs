//! GARCH(1,1) and GJR-GARCH(1,1) with Gaussian or Student-t innovations,
//! and the RiskMetrics exponential smoother.

use statrs::function::gamma::ln_gamma;

use super::optim::{nelder_mead_restarts, simplex_logits, simplex_weights, PENALTY};
use crate::error::{Error, Result};
use crate::stats::{norm_ppf, student_t_ppf, variance};

pub const RISKMETRICS_LAMBDA: f64 = 0.94;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GarchFamily {
    Garch,
    Gjr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GarchDist {
    Normal,
    StudentT,
}

#[derive(Debug, Clone)]
pub struct GarchModel {
    pub family: GarchFamily,
    pub dist: GarchDist,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Zero for plain GARCH.
    pub gamma1: f64,
    pub beta1: f64,
    /// Degrees of freedom; `None` for Gaussian innovations.
    pub nu: Option<f64>,
    pub loglik: f64,
    /// Variance used to start the filter.
    pub h0: f64,
}

impl GarchModel {
    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.beta1 + self.gamma1 / 2.0
    }

    /// Conditional variances over `returns`, length `returns.len() + 1`;
    /// the last entry is the next-day variance.
    pub fn variance_path(&self, returns: &[f64]) -> Vec<f64> {
        filter(self.alpha0, self.alpha1, self.gamma1, self.beta1, self.h0, returns)
    }

    /// VaR for the day after `returns`.
    pub fn forecast(&self, returns: &[f64], tau: f64) -> f64 {
        let h = *self.variance_path(returns).last().unwrap();
        var_garch(self, h, tau)
    }
}

fn filter(a0: f64, a1: f64, g1: f64, b1: f64, h0: f64, returns: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(returns.len() + 1);
    h.push(h0);
    for (t, r) in returns.iter().enumerate() {
        let lev = if *r < 0.0 { g1 } else { 0.0 };
        h.push(a0 + (a1 + lev) * r * r + b1 * h[t]);
    }
    h
}

/// `sqrt(h) F^{-1}(tau)` with `F` the unit-variance innovation law.
pub fn var_garch(model: &GarchModel, h_next: f64, tau: f64) -> f64 {
    let q = match (model.dist, model.nu) {
        (GarchDist::StudentT, Some(nu)) => student_t_ppf(tau, nu) * ((nu - 2.0) / nu).sqrt(),
        _ => norm_ppf(tau),
    };
    h_next.sqrt() * q
}

/// `nu - 2` is capped at `exp(MAX_NU_LOGIT)` (about 500), past which the
/// likelihood is flat in `nu` and Gaussian for practical purposes.
const MAX_NU_LOGIT: f64 = 6.2146;

struct Params {
    a0: f64,
    a1: f64,
    g1: f64,
    b1: f64,
    nu: Option<f64>,
}

fn unpack(family: GarchFamily, dist: GarchDist, u: &[f64]) -> Params {
    let a0 = u[0].exp();
    let (a1, g1, b1, rest) = match family {
        GarchFamily::Garch => {
            let w = simplex_weights(&u[1..3]);
            (w[0], 0.0, w[1], 3)
        }
        GarchFamily::Gjr => {
            let w = simplex_weights(&u[1..4]);
            (w[0], 2.0 * w[1], w[2], 4)
        }
    };
    let nu = (dist == GarchDist::StudentT).then(|| 2.0 + u[rest].min(MAX_NU_LOGIT).exp());
    Params { a0, a1, g1, b1, nu }
}

fn pack(family: GarchFamily, p: &Params) -> Vec<f64> {
    let mut u = vec![p.a0.ln()];
    match family {
        GarchFamily::Garch => u.extend(simplex_logits(&[p.a1, p.b1])),
        GarchFamily::Gjr => u.extend(simplex_logits(&[p.a1, p.g1 / 2.0, p.b1])),
    }
    if let Some(nu) = p.nu {
        u.push((nu - 2.0).ln());
    }
    u
}

fn loglik(p: &Params, h0: f64, returns: &[f64]) -> f64 {
    if p.a1 + p.b1 + p.g1 / 2.0 >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let h = filter(p.a0, p.a1, p.g1, p.b1, h0, returns);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    match p.nu {
        None => {
            for (r, ht) in returns.iter().zip(&h) {
                ll -= 0.5 * (ln2pi + ht.ln() + r * r / ht);
            }
        }
        Some(nu) => {
            let c = ln_gamma((nu + 1.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
            for (r, ht) in returns.iter().zip(&h) {
                ll += c - 0.5 * ht.ln() - 0.5 * (nu + 1.0) * (1.0 + r * r / (ht * (nu - 2.0))).ln();
            }
        }
    }
    ll
}

/// Maximum likelihood with zero conditional mean; the filter starts at the
/// sample variance and the constraints are imposed by reparametrization.
pub fn fit_garch(returns: &[f64], family: GarchFamily, dist: GarchDist) -> Result<GarchModel> {
    let n = returns.len();
    if n < 250 {
        return Err(Error::InsufficientHistory(format!(
            "GARCH needs at least 250 observations, got {n}"
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite return".into()));
    }
    let h0 = variance(returns).max(1e-12);

    let neg_ll = |u: &[f64]| {
        let p = unpack(family, dist, u);
        let ll = loglik(&p, h0, returns);
        if ll.is_finite() {
            -ll
        } else {
            PENALTY
        }
    };

    let starts = [(0.05, 0.05, 0.90), (0.10, 0.10, 0.80), (0.03, 0.02, 0.95)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (a1, g, b1) in starts {
        let g1 = if family == GarchFamily::Gjr { g } else { 0.0 };
        let pers = a1 + b1 + g1 / 2.0;
        let p = Params {
            a0: h0 * (1.0 - pers),
            a1,
            g1,
            b1,
            nu: (dist == GarchDist::StudentT).then_some(8.0),
        };
        let u0 = pack(family, &p);
        let step = vec![0.5; u0.len()];
        let (u, v) = nelder_mead_restarts(&neg_ll, &u0, &step, 4000, 4);
        if v < PENALTY && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((u, v));
        }
    }
    let (u, v) = best.ok_or_else(|| Error::Estimation("GARCH likelihood is not finite".into()))?;
    let p = unpack(family, dist, &u);
    Ok(GarchModel {
        family,
        dist,
        alpha0: p.a0,
        alpha1: p.a1,
        gamma1: p.g1,
        beta1: p.b1,
        nu: p.nu,
        loglik: -v,
        h0,
    })
}

/// `h_{t+1} = lambda h_t + (1 - lambda) r_t^2` from `h1`; length `n + 1`.
pub fn riskmetrics_path(returns: &[f64], h1: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(returns.len() + 1);
    h.push(h1);
    for (t, r) in returns.iter().enumerate() {
        h.push(RISKMETRICS_LAMBDA * h[t] + (1.0 - RISKMETRICS_LAMBDA) * r * r);
    }
    h
}

/// RiskMetrics variance path started at the sample variance.
pub fn fit_riskmetrics(returns: &[f64]) -> Result<Vec<f64>> {
    if returns.len() < 2 {
        return Err(Error::InsufficientHistory("RiskMetrics needs two observations".into()));
    }
    Ok(riskmetrics_path(returns, variance(returns)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(nu: Option<f64>) -> GarchModel {
        GarchModel {
            family: GarchFamily::Garch,
            dist: if nu.is_some() { GarchDist::StudentT } else { GarchDist::Normal },
            alpha0: 0.1,
            alpha1: 0.1,
            gamma1: 0.0,
            beta1: 0.8,
            nu,
            loglik: 0.0,
            h0: 1.0,
        }
    }

    #[test]
    fn var_scaling() {
        let m = gaussian(None);
        assert!((var_garch(&m, 1.0, 0.05) + 1.644_853_6).abs() < 1e-6);
        assert!((var_garch(&m, 4.0, 0.05) + 3.289_707_3).abs() < 1e-6);
        let t = gaussian(Some(1e6));
        assert!((var_garch(&t, 1.0, 0.05) - var_garch(&m, 1.0, 0.05)).abs() < 1e-3);
    }

    #[test]
    fn var_monotone_in_tau_and_scale() {
        let m = gaussian(Some(5.0));
        let mut prev = f64::NEG_INFINITY;
        for tau in [0.01, 0.05, 0.1, 0.25] {
            let v = var_garch(&m, 2.0, tau);
            assert!(v > prev);
            prev = v;
        }
        assert!(var_garch(&m, 2.0, 0.05) < var_garch(&m, 1.0, 0.05));
    }

    #[test]
    fn riskmetrics_recursion() {
        let h = riskmetrics_path(&[0.0; 5], 2.0);
        for (t, v) in h.iter().enumerate() {
            assert!((v - 2.0 * 0.94f64.powi(t as i32)).abs() < 1e-12);
        }
        let h = riskmetrics_path(&[0.0, 10.0], 1.0);
        assert!((h[2] - (0.94 * 0.94 + 0.06 * 100.0)).abs() < 1e-12);
        let h = riskmetrics_path(&[1.5; 400], 7.0);
        assert!((h[400] - 2.25).abs() < 1e-6);
    }

    #[test]
    fn transform_round_trip() {
        let p = Params {
            a0: 0.02,
            a1: 0.04,
            g1: 0.1,
            b1: 0.88,
            nu: Some(6.0),
        };
        let q = unpack(GarchFamily::Gjr, GarchDist::StudentT, &pack(GarchFamily::Gjr, &p));
        assert!((q.a0 - p.a0).abs() < 1e-12);
        assert!((q.a1 - p.a1).abs() < 1e-12);
        assert!((q.g1 - p.g1).abs() < 1e-12);
        assert!((q.b1 - p.b1).abs() < 1e-12);
        assert!((q.nu.unwrap() - 6.0).abs() < 1e-12);
    }
}
