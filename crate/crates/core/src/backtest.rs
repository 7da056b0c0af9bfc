//! VaR backtests on a hit sequence: actual-over-expected ratio, Kupiec
//! unconditional coverage, Christoffersen conditional coverage and the
//! dynamic quantile test.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, mean, variance};

/// Significance level used for the pass/fail flag.
pub const PASS_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarRecord {
    pub date: NaiveDate,
    pub ret: f64,
    pub var: f64,
    pub hit: bool,
}

impl VarRecord {
    pub fn new(date: NaiveDate, ret: f64, var: f64) -> Self {
        Self {
            date,
            ret,
            var,
            hit: ret < var,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarTrack {
    pub tau: f64,
    pub records: Vec<VarRecord>,
}

impl VarTrack {
    pub fn new(tau: f64, records: Vec<VarRecord>) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
        }
        if let Some(r) = records.iter().find(|r| r.hit != (r.ret < r.var)) {
            return Err(Error::InvalidInput(format!("hit flag on {} disagrees with ret < var", r.date)));
        }
        Ok(Self { tau, records })
    }

    /// Track from parallel slices; dates are synthetic consecutive days.
    pub fn from_series(tau: f64, ret: &[f64], var: &[f64]) -> Result<Self> {
        if ret.len() != var.len() {
            return Err(Error::InvalidInput("ret and var lengths differ".into()));
        }
        let d0 = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let records = ret
            .iter()
            .zip(var)
            .enumerate()
            .map(|(i, (r, v))| VarRecord::new(d0 + chrono::Days::new(i as u64), *r, *v))
            .collect();
        Self::new(tau, records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hits(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.hit).collect()
    }

    pub fn n_hits(&self) -> usize {
        self.records.iter().filter(|r| r.hit).count()
    }

    pub fn vars(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.var).collect()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ret).collect()
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Bernoulli log-likelihood of `ones` successes and `zeros` failures.
fn bern_ll(zeros: f64, ones: f64, p: f64) -> f64 {
    xlogy(zeros, 1.0 - p) + xlogy(ones, p)
}

pub fn ae_ratio(track: &VarTrack) -> f64 {
    track.n_hits() as f64 / (track.tau * track.len() as f64)
}

/// Kupiec likelihood ratio; `(statistic, p-value)` against chi-squared(1).
pub fn kupiec_uc(track: &VarTrack) -> (f64, f64) {
    uc_from_counts(track.len(), track.n_hits(), track.tau)
}

fn uc_from_counts(n: usize, hits: usize, tau: f64) -> (f64, f64) {
    let (n, x) = (n as f64, hits as f64);
    let pi = x / n;
    let stat = (-2.0 * (bern_ll(n - x, x, tau) - bern_ll(n - x, x, pi))).max(0.0);
    (stat, chi2_sf(stat, 1.0))
}

/// First-order Markov independence statistic.
fn independence(hits: &[bool]) -> f64 {
    let mut c = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        c[w[0] as usize][w[1] as usize] += 1.0;
    }
    let n0 = c[0][0] + c[0][1];
    let n1 = c[1][0] + c[1][1];
    let pi01 = if n0 > 0.0 { c[0][1] / n0 } else { 0.0 };
    let pi11 = if n1 > 0.0 { c[1][1] / n1 } else { 0.0 };
    let pi = (c[0][1] + c[1][1]) / (n0 + n1);
    let restricted = bern_ll(c[0][0] + c[1][0], c[0][1] + c[1][1], pi);
    let unrestricted = bern_ll(c[0][0], c[0][1], pi01) + bern_ll(c[1][0], c[1][1], pi11);
    (-2.0 * (restricted - unrestricted)).max(0.0)
}

/// Christoffersen conditional coverage: UC plus the Markov independence
/// statistic, against chi-squared(2).
pub fn christoffersen_cc(track: &VarTrack) -> (f64, f64) {
    let (uc, _) = kupiec_uc(track);
    let stat = if track.len() >= 2 {
        uc + independence(&track.hits())
    } else {
        uc
    };
    (stat, chi2_sf(stat, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Dynamic quantile test: `Hit_t - tau` on a constant, `n_lags` lagged
/// demeaned hits and the VaR itself. Rank-deficient designs are handled by
/// projecting onto the numerical column space.
pub fn dq_test(track: &VarTrack, n_lags: usize) -> Result<DqResult> {
    let n = track.len();
    if n <= n_lags + 2 {
        return Err(Error::InsufficientHistory(format!(
            "DQ test with {n_lags} lags needs more than {} observations, got {n}",
            n_lags + 2
        )));
    }
    let tau = track.tau;
    let hit: Vec<f64> = track
        .records
        .iter()
        .map(|r| if r.hit { 1.0 - tau } else { -tau })
        .collect();
    let rows = n - n_lags;
    let p = n_lags + 2;
    let x = DMatrix::from_fn(rows, p, |i, j| {
        let t = i + n_lags;
        match j {
            0 => 1.0,
            j if j <= n_lags => hit[t - j],
            _ => track.records[t].var,
        }
    });
    let y = DVector::from_iterator(rows, hit[n_lags..].iter().cloned());
    let svd = x.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let tol = smax * (rows.max(p) as f64) * f64::EPSILON;
    let mut proj = 0.0;
    let mut rank = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            rank += 1;
            proj += u.column(k).dot(&y).powi(2);
        }
    }
    let statistic = proj / (tau * (1.0 - tau));
    Ok(DqResult {
        statistic,
        p_value: chi2_sf(statistic, rank as f64),
        df: rank,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub n: usize,
    pub n_hits: usize,
    pub mean_var: f64,
    pub sd_var: f64,
    pub ae: f64,
    pub uc_stat: f64,
    pub uc_p: f64,
    pub cc_stat: f64,
    pub cc_p: f64,
    pub dq_stat: f64,
    pub dq_p: f64,
    pub dq_df: usize,
}

impl BacktestReport {
    /// All three tests fail to reject at [`PASS_LEVEL`].
    pub fn passes(&self) -> bool {
        self.uc_p >= PASS_LEVEL && self.cc_p >= PASS_LEVEL && self.dq_p >= PASS_LEVEL
    }
}

pub fn backtest(track: &VarTrack, dq_lags: usize) -> Result<BacktestReport> {
    if track.is_empty() {
        return Err(Error::InvalidInput("empty VaR track".into()));
    }
    let (uc_stat, uc_p) = kupiec_uc(track);
    let (cc_stat, cc_p) = christoffersen_cc(track);
    let dq = dq_test(track, dq_lags)?;
    let vars = track.vars();
    Ok(BacktestReport {
        n: track.len(),
        n_hits: track.n_hits(),
        mean_var: mean(&vars),
        sd_var: variance(&vars).sqrt(),
        ae: ae_ratio(track),
        uc_stat,
        uc_p,
        cc_stat,
        cc_p,
        dq_stat: dq.statistic,
        dq_p: dq.p_value,
        dq_df: dq.df,
    })
}

pub const REPORT_HEADER: [&str; 8] = ["model", "lf_var", "mean_var", "sd_var", "ae", "uc_p", "cc_p", "dq_p"];

/// One CSV row per model; `lf_var` names the low-frequency variable (empty
/// for models without one).
pub fn write_report_csv(path: &Path, rows: &[(String, String, BacktestReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for (model, lf, r) in rows {
        w.write_record([
            model.clone(),
            lf.clone(),
            format!("{:.3}", r.mean_var),
            format!("{:.3}", r.sd_var),
            format!("{:.3}", r.ae),
            format!("{:.3}", r.uc_p),
            format!("{:.3}", r.cc_p),
            format!("{:.3}", r.dq_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flat `key = value` block for one model.
pub fn format_report_text(model: &str, r: &BacktestReport) -> String {
    format!(
        "[{model}]\nn = {}\nn_hits = {}\nmean_var = {:.4}\nsd_var = {:.4}\nae = {:.4}\n\
         uc_stat = {:.4}\nuc_p = {:.4}\ncc_stat = {:.4}\ncc_p = {:.4}\n\
         dq_stat = {:.4}\ndq_p = {:.4}\ndq_df = {}\npasses_at_{} = {}\n",
        r.n,
        r.n_hits,
        r.mean_var,
        r.sd_var,
        r.ae,
        r.uc_stat,
        r.uc_p,
        r.cc_stat,
        r.cc_p,
        r.dq_stat,
        r.dq_p,
        r.dq_df,
        PASS_LEVEL,
        r.passes()
    )
}

/// Writes `date,ret,var,hit` rows, preceded by `# ` comment lines.
pub fn write_track_csv(path: &Path, track: &VarTrack, comments: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    writeln!(f, "# tau = {}", track.tau)?;
    writeln!(f, "date,ret,var,hit")?;
    for r in &track.records {
        writeln!(f, "{},{},{},{}", r.date, r.ret, r.var, r.hit as u8)?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a track written by [`write_track_csv`]. `tau` is taken from the
/// `# tau = ...` comment.
pub fn read_track_csv(path: &Path) -> Result<VarTrack> {
    let err = |line: usize, msg: String| Error::Data {
        path: path.display().to_string(),
        line,
        msg,
    };
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut tau = None;
    let mut records = Vec::new();
    let mut seen_header = false;
    for (k, line) in f.lines().enumerate() {
        let line = line?;
        let ln = k + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("tau =") {
                tau = Some(v.trim().parse::<f64>().map_err(|e| err(ln, format!("bad tau: {e}")))?);
            }
            continue;
        }
        if !seen_header {
            if t != "date,ret,var,hit" {
                return Err(err(ln, format!("expected header date,ret,var,hit, got {t}")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != 4 {
            return Err(err(ln, format!("expected 4 fields, got {}", fields.len())));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| err(ln, format!("bad date {}: {e}", fields[0])))?;
        let ret: f64 = fields[1].parse().map_err(|e| err(ln, format!("bad ret: {e}")))?;
        let var: f64 = fields[2].parse().map_err(|e| err(ln, format!("bad var: {e}")))?;
        let hit = match fields[3] {
            "1" => true,
            "0" => false,
            other => return Err(err(ln, format!("bad hit flag {other}"))),
        };
        if hit != (ret < var) {
            return Err(err(ln, "hit flag disagrees with ret < var".into()));
        }
        records.push(VarRecord { date, ret, var, hit });
    }
    let tau = tau.ok_or_else(|| err(0, "missing `# tau = ...` line".into()))?;
    if records.is_empty() {
        return Err(err(0, "track has no records".into()));
    }
    VarTrack::new(tau, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track_with_hits(n: usize, hit_at: &[usize], tau: f64) -> VarTrack {
        let ret: Vec<f64> = (0..n).map(|i| if hit_at.contains(&i) { -3.0 } else { 1.0 }).collect();
        VarTrack::from_series(tau, &ret, &vec![-2.0; n]).unwrap()
    }

    fn spread(n: usize, k: usize) -> Vec<usize> {
        (0..k).map(|j| j * n / k).collect()
    }

    #[test]
    fn ae_examples() {
        assert!((ae_ratio(&track_with_hits(960, &spread(960, 48), 0.05)) - 1.0).abs() < 1e-12);
        assert!((ae_ratio(&track_with_hits(960, &spread(960, 45), 0.05)) - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn kupiec_examples() {
        let (s, p) = uc_from_counts(1000, 50, 0.05);
        assert!(s.abs() < 1e-9 && (p - 1.0).abs() < 1e-9);

        let oracle = -2.0
            * (70.0 * 0.05f64.ln() + 930.0 * 0.95f64.ln() - 70.0 * 0.07f64.ln() - 930.0 * 0.93f64.ln());
        let (s, p) = uc_from_counts(1000, 70, 0.05);
        assert!((s - oracle).abs() < 1e-9);
        assert!((s - 7.53).abs() < 0.01);
        assert!((p - 0.006).abs() < 0.001);

        let (s, _) = uc_from_counts(100, 0, 0.05);
        assert!((s + 200.0 * 0.95f64.ln()).abs() < 1e-12);
        assert!((s - 10.26).abs() < 0.01);
    }

    #[test]
    fn cc_degenerate_and_clustered() {
        let t = track_with_hits(200, &[], 0.05);
        assert!((christoffersen_cc(&t).0 - kupiec_uc(&t).0).abs() < 1e-12);

        let run: Vec<usize> = (100..110).collect();
        let t = track_with_hits(200, &run, 0.05);
        let (cc, p) = christoffersen_cc(&t);
        assert!(cc - kupiec_uc(&t).0 > 20.0);
        assert!(p < 1e-4);
    }

    #[test]
    fn dq_zero_when_hits_are_orthogonal() {
        // alternating hits at tau = 0.5 have zero mean and the VaR column is zero
        let ret: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let var = vec![0.0; 40];
        let t = VarTrack::from_series(0.5, &ret, &var).unwrap();
        let d = dq_test(&t, 0).unwrap();
        assert!(d.statistic.abs() < 1e-12);
        assert!((d.p_value - 1.0).abs() < 1e-12);
        assert_eq!(d.df, 1);
    }

    #[test]
    fn dq_needs_observations() {
        assert!(dq_test(&track_with_hits(6, &[], 0.05), 4).is_err());
    }

    #[test]
    fn empty_track_is_an_error() {
        assert!(backtest(&VarTrack::new(0.05, vec![]).unwrap(), 4).is_err());
    }

    #[test]
    fn track_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = track_with_hits(30, &[3, 17], 0.05);
        write_track_csv(&p, &t, &["seed = 1".into()]).unwrap();
        assert_eq!(read_track_csv(&p).unwrap(), t);
    }
}
