//! Double-indexed (day-of-month, month) data model.
//!
//! Daily observations live on a flat index; each one is mapped to the
//! position of its calendar month in the monthly series. Lags of daily
//! quantities are always taken on the flat index, so a lag from the first
//! trading day of a month reaches back into the previous month.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// Calendar month key, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    /// Months since year 0, used for gap detection.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn succ(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidInput(format!("bad month key {s:?}, expected YYYY-MM")))?;
        let year = y
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad year in {s:?}")))?;
        let month = m
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad month in {s:?}")))?;
        Self::new(year, month)
    }
}

/// One trading day: log-return in percent and an optional realized volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyObs {
    pub date: NaiveDate,
    pub ret: f64,
    pub x: Option<f64>,
}

impl DailyObs {
    pub fn new(date: NaiveDate, ret: f64, x: Option<f64>) -> Result<Self> {
        if !ret.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite return on {date}")));
        }
        if let Some(v) = x {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "realized measure on {date} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self { date, ret, x })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyObs {
    pub month: YearMonth,
    pub value: f64,
}

impl MonthlyObs {
    pub fn new(month: YearMonth, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value for {month}")));
        }
        Ok(Self { month, value })
    }
}

/// Aligned daily and monthly series.
///
/// `month_of[pos]` is the position `t` of the daily observation's month in
/// `monthly`. It may equal `monthly.len()` for trailing days in the month
/// right after the last monthly entry, since only lagged monthly values are
/// ever read.
#[derive(Debug, Clone)]
pub struct MixedFreqPanel {
    daily: Vec<DailyObs>,
    monthly: Vec<MonthlyObs>,
    month_of: Vec<usize>,
    k_lags: usize,
}

/// Builds a panel, requiring every daily observation to have at least
/// `k_lags` complete months of monthly history before it.
pub fn build_panel(
    mut daily: Vec<DailyObs>,
    mut monthly: Vec<MonthlyObs>,
    k_lags: usize,
) -> Result<MixedFreqPanel> {
    if k_lags == 0 {
        return Err(Error::InvalidInput("k_lags must be positive".into()));
    }
    if daily.is_empty() {
        return Err(Error::InvalidInput("no daily observations".into()));
    }
    if monthly.is_empty() {
        return Err(Error::InvalidInput("no monthly observations".into()));
    }
    daily.sort_by_key(|d| d.date);
    monthly.sort_by_key(|m| m.month);

    for w in daily.windows(2) {
        if w[0].date == w[1].date {
            return Err(Error::Alignment(format!("duplicate daily date {}", w[0].date)));
        }
    }
    for w in monthly.windows(2) {
        let gap = w[1].month.ordinal() - w[0].month.ordinal();
        if gap == 0 {
            return Err(Error::Alignment(format!("duplicate month {}", w[0].month)));
        }
        if gap != 1 {
            return Err(Error::Alignment(format!(
                "monthly series has a gap between {} and {}",
                w[0].month, w[1].month
            )));
        }
    }

    let first = monthly[0].month.ordinal();
    let len = monthly.len() as i64;
    let mut month_of = Vec::with_capacity(daily.len());
    for d in &daily {
        let t = YearMonth::of(d.date).ordinal() - first;
        if t < 0 || t > len {
            return Err(Error::Coverage(format!(
                "daily date {} falls outside the monthly span {}..={}",
                d.date,
                monthly[0].month,
                monthly[monthly.len() - 1].month.succ()
            )));
        }
        if (t as usize) < k_lags {
            return Err(Error::Coverage(format!(
                "daily date {} has {} prior months, {} required",
                d.date, t, k_lags
            )));
        }
        month_of.push(t as usize);
    }

    Ok(MixedFreqPanel {
        daily,
        monthly,
        month_of,
        k_lags,
    })
}

/// Like [`build_panel`], but first drops leading daily observations whose
/// month lacks `k_lags` prior monthly values. Returns the number dropped.
pub fn build_panel_trimmed(
    mut daily: Vec<DailyObs>,
    monthly: Vec<MonthlyObs>,
    k_lags: usize,
) -> Result<(MixedFreqPanel, usize)> {
    let first_usable = monthly
        .iter()
        .map(|m| m.month.ordinal())
        .min()
        .map(|o| o + k_lags as i64)
        .ok_or_else(|| Error::InvalidInput("no monthly observations".into()))?;
    let before = daily.len();
    daily.retain(|d| YearMonth::of(d.date).ordinal() >= first_usable);
    let trimmed = before - daily.len();
    if daily.is_empty() {
        return Err(Error::Coverage(format!(
            "no daily observation has {k_lags} months of monthly history"
        )));
    }
    Ok((build_panel(daily, monthly, k_lags)?, trimmed))
}

impl MixedFreqPanel {
    pub fn len(&self) -> usize {
        self.daily.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily.is_empty()
    }

    pub fn k_lags(&self) -> usize {
        self.k_lags
    }

    pub fn daily(&self) -> &[DailyObs] {
        &self.daily
    }

    pub fn monthly(&self) -> &[MonthlyObs] {
        &self.monthly
    }

    pub fn month_of(&self, pos: usize) -> usize {
        self.month_of[pos]
    }

    pub fn ret(&self, pos: usize) -> f64 {
        self.daily[pos].ret
    }

    pub fn returns(&self) -> Vec<f64> {
        self.daily.iter().map(|d| d.ret).collect()
    }

    pub fn monthly_values(&self) -> Vec<f64> {
        self.monthly.iter().map(|m| m.value).collect()
    }

    pub fn has_x(&self) -> bool {
        self.daily.iter().all(|d| d.x.is_some())
    }

    pub fn date(&self, pos: usize) -> NaiveDate {
        self.daily[pos].date
    }

    /// `(i, t)` pairs: 1-based day within month and month position.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len());
        let mut day = 0;
        for (pos, &t) in self.month_of.iter().enumerate() {
            if pos == 0 || self.month_of[pos - 1] != t {
                day = 0;
            }
            day += 1;
            out.push((day, t));
        }
        out
    }

    /// Absolute returns at `pos - 1, pos - 2, ..., pos - q`, most recent first.
    pub fn lagged_returns(&self, pos: usize, q: usize) -> Result<Vec<f64>> {
        if pos < q || pos > self.len() {
            return Err(Error::InsufficientHistory(format!(
                "position {pos} cannot supply {q} daily lags"
            )));
        }
        Ok((1..=q).map(|j| self.daily[pos - j].ret.abs()).collect())
    }

    /// Sub-panel restricted to daily positions `range`, sharing the monthly series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> MixedFreqPanel {
        MixedFreqPanel {
            daily: self.daily[range.clone()].to_vec(),
            monthly: self.monthly.clone(),
            month_of: self.month_of[range].to_vec(),
            k_lags: self.k_lags,
        }
    }

    /// First daily position whose date is on or after `date`.
    pub fn position_of(&self, date: NaiveDate) -> Option<usize> {
        let p = self.daily.partition_point(|d| d.date < date);
        (p < self.len()).then_some(p)
    }
}

/// Unit of the return column in a daily file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnUnit {
    #[default]
    Percent,
    Decimal,
}

impl ReturnUnit {
    fn to_percent(self) -> f64 {
        match self {
            ReturnUnit::Percent => 1.0,
            ReturnUnit::Decimal => 100.0,
        }
    }
}

fn data_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a daily CSV with header `date,ret[,x]`.
pub fn read_daily_csv(path: &Path, unit: ReturnUnit) -> Result<Vec<DailyObs>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, 0, e.to_string()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci_date), Some(ci_ret)) = (col("date"), col("ret")) else {
        return Err(data_err(path, 1, "header must contain `date` and `ret`"));
    };
    let ci_x = col("x");
    let scale = unit.to_percent();

    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(path, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[ci_date], "%Y-%m-%d")
            .map_err(|e| data_err(path, line, format!("bad date: {e}")))?;
        let ret: f64 = rec[ci_ret]
            .parse()
            .map_err(|_| data_err(path, line, "bad return value"))?;
        let x = match ci_x.map(|i| &rec[i]) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| data_err(path, line, "bad x value"))?
                    * scale,
            ),
        };
        out.push(DailyObs::new(date, ret * scale, x).map_err(|e| data_err(path, line, e.to_string()))?);
    }
    Ok(out)
}

/// Reads a monthly CSV with header `month,value`.
pub fn read_monthly_csv(path: &Path) -> Result<Vec<MonthlyObs>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, 0, e.to_string()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci_m), Some(ci_v)) = (col("month"), col("value")) else {
        return Err(data_err(path, 1, "header must contain `month` and `value`"));
    };
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(path, line, e.to_string()))?;
        let month: YearMonth = rec[ci_m]
            .parse()
            .map_err(|e: Error| data_err(path, line, e.to_string()))?;
        let value: f64 = rec[ci_v]
            .parse()
            .map_err(|_| data_err(path, line, "bad value"))?;
        out.push(MonthlyObs::new(month, value).map_err(|e| data_err(path, line, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_daily_csv(path: &Path, daily: &[DailyObs]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_x = daily.iter().all(|d| d.x.is_some());
    if with_x {
        w.write_record(["date", "ret", "x"])?;
    } else {
        w.write_record(["date", "ret"])?;
    }
    for d in daily {
        let date = d.date.format("%Y-%m-%d").to_string();
        let ret = format!("{:.10}", d.ret);
        match (with_x, d.x) {
            (true, Some(x)) => w.write_record([date, ret, format!("{x:.10}")])?,
            _ => w.write_record([date, ret])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_monthly_csv(path: &Path, monthly: &[MonthlyObs]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["month", "value"])?;
    for m in monthly {
        w.write_record([m.month.to_string(), format!("{:.10}", m.value)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn month(y: i32, m: u32, v: f64) -> MonthlyObs {
        MonthlyObs::new(YearMonth::new(y, m).unwrap(), v).unwrap()
    }

    /// 20 trading days in each of Feb and Mar 2020.
    fn feb_mar() -> Vec<DailyObs> {
        let mut out = Vec::new();
        for m in [2u32, 3] {
            for d in 1..=20 {
                out.push(DailyObs::new(date(2020, m, d), (d as f64) - 10.0, None).unwrap());
            }
        }
        out
    }

    #[test]
    fn minimal_alignment_uses_every_day() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0), month(2020, 3, 3.0)];
        let panel = build_panel(feb_mar(), monthly, 1).unwrap();
        assert_eq!(panel.len(), 40);
        assert_eq!(panel.month_of(0), 1);
        assert_eq!(panel.month_of(39), 2);
    }

    #[test]
    fn short_monthly_history_is_a_coverage_error() {
        // 11 months (Feb..Dec 2019) precede the first daily month.
        let monthly: Vec<_> = (0..13)
            .map(|k| {
                let ym = YearMonth::from_ordinal(YearMonth::new(2019, 2).unwrap().ordinal() + k);
                MonthlyObs::new(ym, k as f64).unwrap()
            })
            .collect();
        let daily = vec![DailyObs::new(date(2020, 1, 2), 0.1, None).unwrap()];
        assert!(matches!(build_panel(daily, monthly, 12), Err(Error::Coverage(_))));
    }

    #[test]
    fn duplicate_date_is_an_alignment_error() {
        let mut daily = feb_mar();
        daily.push(daily[3]);
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0), month(2020, 3, 3.0)];
        assert!(matches!(build_panel(daily, monthly, 1), Err(Error::Alignment(_))));
    }

    #[test]
    fn monthly_gap_is_an_alignment_error() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 3, 3.0)];
        assert!(matches!(build_panel(feb_mar(), monthly, 1), Err(Error::Alignment(_))));
    }

    #[test]
    fn trailing_month_after_monthly_span_is_allowed() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0)];
        let panel = build_panel(feb_mar(), monthly.clone(), 1).unwrap();
        assert_eq!(panel.month_of(39), 2);
        let mut late = feb_mar();
        late.push(DailyObs::new(date(2020, 4, 1), 0.0, None).unwrap());
        assert!(matches!(build_panel(late, monthly, 1), Err(Error::Coverage(_))));
    }

    #[test]
    fn trimmed_build_drops_leading_days() {
        let monthly = vec![month(2020, 2, 2.0), month(2020, 3, 3.0)];
        let (panel, dropped) = build_panel_trimmed(feb_mar(), monthly, 1).unwrap();
        assert_eq!(dropped, 20);
        assert_eq!(panel.len(), 20);
        assert_eq!(panel.month_of(0), 1);
    }

    #[test]
    fn lagged_returns_are_absolute_and_most_recent_first() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0), month(2020, 3, 3.0)];
        let mut daily = feb_mar();
        daily[5].ret = -1.0;
        daily[6].ret = 2.0;
        let panel = build_panel(daily, monthly, 1).unwrap();
        assert_eq!(panel.lagged_returns(7, 2).unwrap(), vec![2.0, 1.0]);
        assert!(matches!(panel.lagged_returns(0, 1), Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn lag_crosses_month_boundary() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0), month(2020, 3, 3.0)];
        let mut daily = feb_mar();
        // last day of February and first of March
        daily[19].ret = -7.5;
        daily[18].ret = 0.25;
        let panel = build_panel(daily, monthly, 1).unwrap();
        assert_ne!(panel.month_of(19), panel.month_of(20));
        assert_eq!(panel.lagged_returns(20, 2).unwrap(), vec![7.5, 0.25]);
    }

    #[test]
    fn index_pairs_restart_each_month() {
        let monthly = vec![month(2020, 1, 1.0), month(2020, 2, 2.0), month(2020, 3, 3.0)];
        let panel = build_panel(feb_mar(), monthly, 1).unwrap();
        let pairs = panel.index_pairs();
        assert_eq!(pairs[0], (1, 1));
        assert_eq!(pairs[19], (20, 1));
        assert_eq!(pairs[20], (1, 2));
    }

    #[test]
    fn year_month_parsing_and_order() {
        let a: YearMonth = "2019-12".parse().unwrap();
        assert_eq!(a.succ().to_string(), "2020-01");
        assert!("2019-13".parse::<YearMonth>().is_err());
        assert!("201912".parse::<YearMonth>().is_err());
    }

    #[test]
    fn invalid_observations_are_rejected() {
        assert!(DailyObs::new(date(2020, 1, 1), f64::NAN, None).is_err());
        assert!(DailyObs::new(date(2020, 1, 1), 0.0, Some(-1.0)).is_err());
        assert!(MonthlyObs::new(YearMonth::new(2020, 1).unwrap(), f64::INFINITY).is_err());
    }

    #[test]
    fn csv_round_trip_with_unit_flag() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "date,ret,x\n2020-01-02,0.01,0.02\n2020-01-03,-0.02,0.01\n").unwrap();
        let d = read_daily_csv(&p, ReturnUnit::Decimal).unwrap();
        assert!((d[0].ret - 1.0).abs() < 1e-12);
        assert!((d[1].x.unwrap() - 1.0).abs() < 1e-12);
        let d = read_daily_csv(&p, ReturnUnit::Percent).unwrap();
        assert!((d[0].ret - 0.01).abs() < 1e-12);

        std::fs::write(&p, "date,ret\n2020-01-02,abc\n").unwrap();
        match read_daily_csv(&p, ReturnUnit::Percent) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected data error, got {other:?}"),
        }

        let m = dir.path().join("m.csv");
        std::fs::write(&m, "month,value\n2019-12,1.5\n2020-01,-0.5\n").unwrap();
        let mv = read_monthly_csv(&m).unwrap();
        assert_eq!(mv.len(), 2);
        assert_eq!(mv[1].month, YearMonth::new(2020, 1).unwrap());
    }
}
