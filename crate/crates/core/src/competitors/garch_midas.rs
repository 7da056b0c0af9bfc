//! GARCH-MIDAS: a unit-mean GJR short-run component times a long-run
//! component driven by Beta-weighted monthly observations.

use super::optim::{nelder_mead_restarts, simplex_weights, PENALTY};
use crate::error::{Error, Result};
use crate::midas::{beta_weights, weighted_sums};
use crate::stats::{norm_ppf, variance};
use crate::timegrid::MixedFreqPanel;

#[derive(Debug, Clone)]
pub struct GarchMidasModel {
    pub alpha1: f64,
    pub gamma1: f64,
    pub beta1: f64,
    pub m: f64,
    pub zeta: f64,
    pub omega2: f64,
    pub k_lags: usize,
    pub loglik: f64,
}

/// Long-run component `exp(m + zeta WS_{t-1})` for every daily position
/// (`None` before `K` months of history).
fn long_run(panel: &MixedFreqPanel, k: usize, m: f64, zeta: f64, omega2: f64) -> Result<Vec<Option<f64>>> {
    let w = beta_weights(k, 1.0, omega2)?;
    let ws = weighted_sums(&panel.monthly_values(), &w);
    Ok(ws.iter().map(|v| v.map(|s| (m + zeta * s).exp())).collect())
}

struct Raw {
    a1: f64,
    g1: f64,
    b1: f64,
    m: f64,
    zeta: f64,
    omega2: f64,
}

impl GarchMidasModel {
    fn raw(&self) -> Raw {
        Raw {
            a1: self.alpha1,
            g1: self.gamma1,
            b1: self.beta1,
            m: self.m,
            zeta: self.zeta,
            omega2: self.omega2,
        }
    }

    /// Conditional variances `tau_t xi_{i,t}` for days `start..=end`, using
    /// returns on `start..end`. `end` may equal `panel.len()`.
    pub fn variance_path(&self, panel: &MixedFreqPanel, start: usize, end: usize) -> Result<Vec<f64>> {
        variance_path(&self.raw(), self.k_lags, panel, start, end)
    }

    /// VaR for day `target`, filtering from `start`.
    pub fn forecast(&self, panel: &MixedFreqPanel, start: usize, target: usize, tau: f64) -> Result<f64> {
        let v = *self.variance_path(panel, start, target)?.last().unwrap();
        Ok(v.sqrt() * norm_ppf(tau))
    }
}

fn variance_path(p: &Raw, k: usize, panel: &MixedFreqPanel, start: usize, end: usize) -> Result<Vec<f64>> {
    if start > end || end > panel.len() || start >= panel.len() {
        return Err(Error::InvalidInput(format!("bad filter range {start}..={end}")));
    }
    let lr = long_run(panel, k, p.m, p.zeta, p.omega2)?;
    let tau_at = |pos: usize| -> Result<f64> {
        let t = panel.month_of(pos.min(panel.len() - 1));
        lr[t].ok_or_else(|| {
            Error::InsufficientHistory(format!("{} lacks {k} monthly lags", panel.date(pos.min(panel.len() - 1))))
        })
    };
    let intercept = 1.0 - p.a1 - p.b1 - p.g1 / 2.0;
    let mut out = Vec::with_capacity(end - start + 1);
    let mut xi = 1.0;
    out.push(tau_at(start)? * xi);
    for pos in start..end {
        let r = panel.ret(pos);
        let lev = if r < 0.0 { p.g1 } else { 0.0 };
        xi = intercept + (p.a1 + lev) * r * r / tau_at(pos)? + p.b1 * xi;
        out.push(tau_at(pos + 1)? * xi);
    }
    Ok(out)
}

fn unpack(u: &[f64]) -> Raw {
    let w = simplex_weights(&u[0..3]);
    Raw {
        a1: w[0],
        g1: 2.0 * w[1],
        b1: w[2],
        m: u[3],
        zeta: u[4],
        omega2: 1.0 + u[5].exp(),
    }
}

/// Gaussian maximum likelihood over the whole panel, all six parameters
/// estimated jointly.
pub fn fit_garch_midas(panel: &MixedFreqPanel, k_lags: usize) -> Result<GarchMidasModel> {
    let n = panel.len();
    if n < 250 {
        return Err(Error::InsufficientHistory(format!(
            "GARCH-MIDAS needs at least 250 observations, got {n}"
        )));
    }
    if k_lags == 0 || panel.month_of(0) < k_lags {
        return Err(Error::InsufficientHistory(format!(
            "the first day lacks {k_lags} monthly lags"
        )));
    }
    let r = panel.returns();
    let v0 = variance(&r).max(1e-12);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    let neg_ll = |u: &[f64]| -> f64 {
        let p = unpack(u);
        if p.a1 + p.b1 + p.g1 / 2.0 >= 1.0 || !p.omega2.is_finite() {
            return PENALTY;
        }
        let Ok(h) = variance_path(&p, k_lags, panel, 0, n) else {
            return PENALTY;
        };
        let mut ll = 0.0;
        for (x, v) in r.iter().zip(&h) {
            if !(*v > 0.0) {
                return PENALTY;
            }
            ll -= 0.5 * (ln2pi + v.ln() + x * x / v);
        }
        -ll
    };

    // only the months the sample's days load on; the monthly series may
    // extend past the last day
    let ws = weighted_sums(&panel.monthly_values(), &beta_weights(k_lags, 1.0, 2.0)?);
    let mut months: Vec<usize> = (0..n).map(|i| panel.month_of(i)).collect();
    months.dedup();
    let ws: Vec<f64> = months.iter().filter_map(|&t| ws[t]).collect();
    let ws_sd = variance(&ws).sqrt();
    let zeta_step = if ws_sd > 0.0 { 0.5 / ws_sd } else { 0.1 };

    let logits = super::optim::simplex_logits(&[0.05, 0.025, 0.9]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for zeta0 in [0.0, zeta_step, -zeta_step] {
        let mut u0 = logits.clone();
        u0.extend([v0.ln(), zeta0, 0.0]);
        let step = [0.5, 0.5, 0.5, 0.5, zeta_step, 0.7];
        let (u, v) = nelder_mead_restarts(&neg_ll, &u0, &step, 5000, 4);
        if v < PENALTY && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((u, v));
        }
    }
    let (u, v) = best.ok_or_else(|| Error::Estimation("GARCH-MIDAS likelihood is not finite".into()))?;
    let p = unpack(&u);
    Ok(GarchMidasModel {
        alpha1: p.a1,
        gamma1: p.g1,
        beta1: p.b1,
        m: p.m,
        zeta: p.zeta,
        omega2: p.omega2,
        k_lags,
        loglik: -v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{build_panel, DailyObs, MonthlyObs, YearMonth};
    use chrono::{Datelike, Days, NaiveDate};

    fn panel(n_months: usize) -> MixedFreqPanel {
        let monthly: Vec<_> = (0..n_months)
            .map(|k| {
                MonthlyObs::new(YearMonth::from_ordinal(2000 * 12 + k as i64), (k as f64).sin()).unwrap()
            })
            .collect();
        let mut daily = vec![];
        let mut d = NaiveDate::from_ymd_opt(2000, 4, 1).unwrap();
        let last = YearMonth::from_ordinal(2000 * 12 + n_months as i64 - 1);
        let mut i = 0;
        while YearMonth::of(d) <= last {
            daily.push(DailyObs::new(d, ((i * 37 % 11) as f64 - 5.0) / 5.0, None).unwrap());
            d = d.checked_add_days(Days::new(1)).unwrap();
            i += 1;
        }
        assert!(daily[0].date.month() == 4);
        build_panel(daily, monthly, 3).unwrap()
    }

    #[test]
    fn zero_zeta_has_constant_long_run() {
        let p = panel(12);
        let lr = long_run(&p, 3, 0.4, 0.0, 5.0).unwrap();
        for v in lr.iter().skip(3) {
            assert!((v.unwrap() - 0.4f64.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn variance_path_is_positive() {
        let p = panel(12);
        let m = GarchMidasModel {
            alpha1: 0.1,
            gamma1: 0.1,
            beta1: 0.8,
            m: -1.0,
            zeta: 2.0,
            omega2: 3.0,
            k_lags: 3,
            loglik: 0.0,
        };
        let h = m.variance_path(&p, 0, p.len()).unwrap();
        assert_eq!(h.len(), p.len() + 1);
        assert!(h.iter().all(|v| *v > 0.0));
    }
}
