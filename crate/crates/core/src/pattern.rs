//! Binned intra-day pattern: mean inter-trade time and return standard
//! deviation by time of day.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Day, ReturnPoint, SessionSpec};
use crate::table::{Table, TableError};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("bin width {bin_width} must be positive and divide the session length {length}")]
    BinWidth { bin_width: f64, length: f64 },
    #[error("no inter-trade intervals")]
    NoData,
    #[error("every bin is empty")]
    AllEmpty,
    #[error("pattern table: {0}")]
    Table(String),
    #[error(transparent)]
    TableIo(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Every interval (return) of every day weighted equally.
    Pooled,
    /// Per-day bin statistics, then an equal-weight mean over the days
    /// where the bin is populated.
    PerDay,
}

impl std::fmt::Display for Averaging {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Averaging::Pooled => "pooled",
            Averaging::PerDay => "per_day",
        })
    }
}

impl std::str::FromStr for Averaging {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pooled" => Ok(Averaging::Pooled),
            "per_day" | "per-day" => Ok(Averaging::PerDay),
            other => Err(format!("unknown averaging {other:?} (pooled, per_day)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntradayBin {
    pub t_mid: f64,
    /// `None` for an empty bin.
    pub mean_dt: Option<f64>,
    /// `None` with fewer than two returns.
    pub std_return: Option<f64>,
    /// Inter-trade intervals assigned to the bin.
    pub count: u64,
    /// Standard deviation of the interval lengths.
    pub dt_std: Option<f64>,
    pub return_count: u64,
}

impl IntradayBin {
    /// Standard error of `mean_dt`.
    pub fn mean_dt_se(&self) -> Option<f64> {
        Some(self.dt_std? / (self.count as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntradayPattern {
    pub bin_width: f64,
    pub length: f64,
    pub averaging: Averaging,
    pub normalized: bool,
    pub bins: Vec<IntradayBin>,
}

fn n_bins(bin_width: f64, length: f64) -> Result<usize, PatternError> {
    let err = PatternError::BinWidth { bin_width, length };
    if !(bin_width > 0.0 && bin_width.is_finite() && length > 0.0) {
        return Err(err);
    }
    let n = (length / bin_width).round();
    if n < 1.0 || (n * bin_width - length).abs() > 1e-9 * length {
        return Err(err);
    }
    Ok(n as usize)
}

fn bin_of(t: f64, bin_width: f64, n: usize) -> usize {
    ((t / bin_width).max(0.0) as usize).min(n - 1)
}

/// Shifted sums `Σ(x - s)`, `Σ(x - s)²`, n. Identical values give an
/// exactly zero variance.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    d: f64,
    d2: f64,
    n: u64,
}

impl Moments {
    fn add(&mut self, x: f64, shift: f64) {
        let d = x - shift;
        self.d += d;
        self.d2 += d * d;
        self.n += 1;
    }

    fn merge(&mut self, other: &Moments) {
        self.d += other.d;
        self.d2 += other.d2;
        self.n += other.n;
    }

    fn mean(&self, shift: f64) -> Option<f64> {
        (self.n > 0).then(|| shift + self.d / self.n as f64)
    }

    fn std(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        Some(((self.d2 - self.d * self.d / n) / (n - 1.0)).max(0.0).sqrt())
    }
}

struct DayBins {
    dt: Vec<Moments>,
    ret: Vec<Moments>,
}

/// Builds the raw (un-normalized) pattern. An interval `(t_k, t_{k+1}]`
/// goes to the bin holding its midpoint; a return goes to the bin holding
/// its time stamp.
pub fn build_pattern(
    days: &[Day],
    returns: &[ReturnPoint],
    bin_width: f64,
    spec: &SessionSpec,
    averaging: Averaging,
) -> Result<IntradayPattern, PatternError> {
    let length = spec.length;
    let n = n_bins(bin_width, length)?;
    if days.iter().all(|d| d.ticks.len() < 2) {
        return Err(PatternError::NoData);
    }

    // per-bin shift: the first value met in day order
    let mut dt_shift: Vec<Option<f64>> = vec![None; n];
    for day in days {
        for w in day.ticks.windows(2) {
            let b = bin_of(0.5 * (w[0].t + w[1].t), bin_width, n);
            dt_shift[b].get_or_insert(w[1].t - w[0].t);
        }
    }
    let mut ret_shift: Vec<Option<f64>> = vec![None; n];
    for r in returns {
        ret_shift[bin_of(r.t, bin_width, n)].get_or_insert(r.value);
    }
    let dt_shift: Vec<f64> = dt_shift.into_iter().map(|s| s.unwrap_or(0.0)).collect();
    let ret_shift: Vec<f64> = ret_shift.into_iter().map(|s| s.unwrap_or(0.0)).collect();

    let mut returns_by_day: Vec<&[ReturnPoint]> = Vec::with_capacity(days.len());
    let mut start = 0;
    for day in days {
        let end = start + returns[start..].iter().take_while(|r| r.day == day.date).count();
        returns_by_day.push(&returns[start..end]);
        start = end;
    }

    let per_day: Vec<DayBins> = days
        .par_iter()
        .zip(returns_by_day.par_iter())
        .map(|(day, rets)| {
            let mut bins = DayBins { dt: vec![Moments::default(); n], ret: vec![Moments::default(); n] };
            for w in day.ticks.windows(2) {
                let b = bin_of(0.5 * (w[0].t + w[1].t), bin_width, n);
                bins.dt[b].add(w[1].t - w[0].t, dt_shift[b]);
            }
            for r in rets.iter() {
                let b = bin_of(r.t, bin_width, n);
                bins.ret[b].add(r.value, ret_shift[b]);
            }
            bins
        })
        .collect();

    let mut bins = Vec::with_capacity(n);
    for b in 0..n {
        let mut dt = Moments::default();
        let mut ret = Moments::default();
        for d in &per_day {
            dt.merge(&d.dt[b]);
            ret.merge(&d.ret[b]);
        }
        let (mean_dt, std_return) = match averaging {
            Averaging::Pooled => (dt.mean(dt_shift[b]), ret.std()),
            Averaging::PerDay => {
                let day_mean = |f: &dyn Fn(&DayBins) -> Option<f64>| {
                    let vals: Vec<f64> = per_day.iter().filter_map(f).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                };
                (day_mean(&|d| d.dt[b].mean(dt_shift[b])), day_mean(&|d| d.ret[b].std()))
            }
        };
        bins.push(IntradayBin {
            t_mid: (b as f64 + 0.5) * bin_width,
            mean_dt,
            std_return,
            count: dt.n,
            dt_std: dt.std(),
            return_count: ret.n,
        });
    }
    Ok(IntradayPattern { bin_width, length, averaging, normalized: false, bins })
}

fn weighted_mean(pairs: impl Iterator<Item = (Option<f64>, u64)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in pairs {
        if let Some(v) = v {
            num += v * w as f64;
            den += w as f64;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Divides `mean_dt` (and `dt_std`) by the count-weighted mean of `mean_dt`
/// and `std_return` by its return-count-weighted mean. A pattern that is
/// already normalized is returned unchanged.
pub fn normalize_pattern(p: &IntradayPattern) -> Result<IntradayPattern, PatternError> {
    if p.normalized {
        return Ok(p.clone());
    }
    let dt_scale = weighted_mean(p.bins.iter().map(|b| (b.mean_dt, b.count))).ok_or(PatternError::AllEmpty)?;
    let ret_scale = weighted_mean(p.bins.iter().map(|b| (b.std_return, b.return_count)));
    let bins = p
        .bins
        .iter()
        .map(|b| IntradayBin {
            mean_dt: b.mean_dt.map(|v| v / dt_scale),
            dt_std: b.dt_std.map(|v| v / dt_scale),
            std_return: match ret_scale {
                Some(s) if s > 0.0 => b.std_return.map(|v| v / s),
                _ => b.std_return,
            },
            ..*b
        })
        .collect();
    Ok(IntradayPattern { normalized: true, bins, ..p.clone() })
}

impl IntradayPattern {
    pub fn nonempty_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.mean_dt.is_some()).count()
    }

    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_table(&self) -> Table {
        let title = if self.normalized { "pattern (normalized)" } else { "pattern" };
        let mut t = Table::new(title, &["t_mid", "mean_dt", "std_return", "count", "dt_std", "return_count"])
            .param("bin_width", self.bin_width)
            .param("T", self.length)
            .param("averaging", self.averaging)
            .param("normalized", self.normalized);
        for b in &self.bins {
            t.push(vec![
                b.t_mid.into(),
                b.mean_dt.into(),
                b.std_return.into(),
                b.count.into(),
                b.dt_std.into(),
                b.return_count.into(),
            ]);
        }
        t
    }

    /// Reads a table written by [`IntradayPattern::to_table`]. Only
    /// `t_mid`, `mean_dt` and `count` are required.
    pub fn from_table(t: &Table) -> Result<Self, PatternError> {
        let bad = |m: &str| PatternError::Table(m.to_string());
        let param = |k: &str| t.get_param(k).ok_or_else(|| bad(&format!("missing parameter {k}")));
        let num = |k: &str| -> Result<f64, PatternError> {
            param(k)?.parse().map_err(|_| bad(&format!("bad number for {k}")))
        };
        let bin_width = num("bin_width")?;
        let length = num("T")?;
        let averaging = param("averaging").map_or(Ok(Averaging::Pooled), |s| s.parse().map_err(|e: String| bad(&e)))?;
        let normalized = param("normalized").map(|s| s == "true").unwrap_or(false);
        let n = n_bins(bin_width, length)?;
        let t_mid = t.column("t_mid")?;
        let mean_dt = t.column("mean_dt")?;
        let count = t.column("count")?;
        let optional = |name: &str| t.column(name).unwrap_or_else(|_| vec![None; t.rows.len()]);
        let std_return = optional("std_return");
        let dt_std = optional("dt_std");
        let return_count = optional("return_count");
        if t.rows.len() != n {
            return Err(bad(&format!("expected {n} bins, found {}", t.rows.len())));
        }
        let bins = (0..n)
            .map(|i| {
                Ok(IntradayBin {
                    t_mid: t_mid[i].ok_or_else(|| bad("missing t_mid"))?,
                    mean_dt: mean_dt[i],
                    std_return: std_return[i],
                    count: count[i].ok_or_else(|| bad("missing count"))? as u64,
                    dt_std: dt_std[i],
                    return_count: return_count[i].unwrap_or(0.0) as u64,
                })
            })
            .collect::<Result<Vec<_>, PatternError>>()?;
        Ok(Self { bin_width, length, averaging, normalized, bins })
    }
}
