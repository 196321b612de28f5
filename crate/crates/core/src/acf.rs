//! Slotted autocorrelation estimates for irregularly spaced marks.
//!
//! Pairs `(i, j)` with `i < j` from the same day are binned by lag
//! `t_j - t_i` into rectangular slots `((k - 1/2) h, (k + 1/2) h]`, `k ≥ 1`;
//! slot 0 holds the self-pairs and gives the variance. Pairs closer than
//! `h/2` (including ties) fall in no slot. Each pair is counted once.
//!
//! Two weightings are offered:
//!
//! * [`Weighting::Pooled`] averages all pairs of a slot. When events arrive
//!   with a time-varying intensity λ(t), a slot effectively weights session
//!   time by `λ(t) λ(t + Δt)`.
//! * [`Weighting::ClockUniform`] first averages products within strata of
//!   session time (by the earlier event of the pair) and then averages the
//!   strata by their length. This estimates the clock-time average
//!   `(1/(T - Δt)) ∫ cov(Y(t), Y(t + Δt)) dt` regardless of λ.
//!
//! Per-day accumulators are kept so that days can be resampled for
//! bootstrap standard errors without revisiting the pairs.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ReturnPoint;
use crate::table::Table;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcfError {
    #[error("no points")]
    Empty,
    #[error("points must be grouped by day in date order and time-sorted within a day (index {0})")]
    Unsorted(usize),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("zero variance: normalized ACF undefined")]
    ZeroVariance,
    #[error("slot grids differ")]
    MismatchedGrid,
    #[error("accumulators cover different days")]
    MismatchedDays,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkTransform {
    Identity,
    AbsoluteValue,
}

impl MarkTransform {
    fn apply(self, x: f64) -> f64 {
        match self {
            MarkTransform::Identity => x,
            MarkTransform::AbsoluteValue => x.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarkTransform::Identity => "identity",
            MarkTransform::AbsoluteValue => "absolute_value",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanRemoval {
    /// One mean over all days.
    Global,
    /// Each day centred on its own mean.
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Pooled,
    ClockUniform { stratum_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcfOptions {
    pub max_lag: f64,
    pub slot_width: f64,
    /// Session length `T`; `max_lag` must be smaller.
    pub session_length: f64,
    pub transform: MarkTransform,
    pub mean: MeanRemoval,
    pub weighting: Weighting,
    /// Divide by the slot-0 variance.
    pub normalize: bool,
}

impl AcfOptions {
    pub fn new(max_lag: f64, slot_width: f64, session_length: f64) -> Self {
        Self {
            max_lag,
            slot_width,
            session_length,
            transform: MarkTransform::Identity,
            mean: MeanRemoval::Global,
            weighting: Weighting::Pooled,
            normalize: true,
        }
    }

    fn validate(&self) -> Result<(), AcfError> {
        let bad = |m: String| Err(AcfError::Options(m));
        if !(self.session_length > 0.0) {
            return bad(format!("session length must be > 0, got {}", self.session_length));
        }
        if !(self.slot_width > 0.0 && self.slot_width.is_finite()) {
            return bad(format!("slot width must be > 0, got {}", self.slot_width));
        }
        if !(self.max_lag >= 0.0 && self.max_lag < self.session_length) {
            return bad(format!("max lag {} must lie in [0, T = {})", self.max_lag, self.session_length));
        }
        if let Weighting::ClockUniform { stratum_width } = self.weighting {
            if !(stratum_width > 0.0 && stratum_width.is_finite()) {
                return bad(format!("stratum width must be > 0, got {stratum_width}"));
            }
        }
        Ok(())
    }

    /// Index of the last slot.
    fn last_slot(&self) -> usize {
        (self.max_lag / self.slot_width).floor() as usize
    }
}

/// Slot of a positive lag, or `None` for lags within `h/2` of zero.
pub(crate) fn slot_of(lag: f64, h: f64) -> Option<usize> {
    if lag <= 0.5 * h {
        return None;
    }
    Some((lag / h - 0.5).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfEstimate {
    pub slot_width: f64,
    /// Slot centres `k h`.
    pub lags: Vec<f64>,
    /// `None` where a slot has no pairs.
    pub values: Vec<Option<f64>>,
    pub pair_counts: Vec<u64>,
    pub normalized: bool,
    pub transform: MarkTransform,
    pub weighting: Weighting,
    pub mean: f64,
    pub variance: f64,
}

impl AcfEstimate {
    pub fn to_table(&self) -> Table {
        let weighting = match self.weighting {
            Weighting::Pooled => "pooled".to_string(),
            Weighting::ClockUniform { stratum_width } => format!("clock_uniform({stratum_width})"),
        };
        let mut t = Table::new("acf", &["lag", "value", "pair_count"])
            .param("slot_width", self.slot_width)
            .param("transform", self.transform.name())
            .param("weighting", weighting)
            .param("normalized", self.normalized)
            .param("mean", crate::table::fmt_f64(self.mean))
            .param("variance", crate::table::fmt_f64(self.variance));
        for i in 0..self.lags.len() {
            t.push(vec![self.lags[i].into(), self.values[i].into(), self.pair_counts[i].into()]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DayCells {
    date: NaiveDate,
    /// Σ (x - reference) over the day's marks.
    sum_dev: f64,
    count: u64,
    /// Per (stratum, slot): Σ d_i d_j, Σ (d_i + d_j), pair count.
    sxy: Vec<f64>,
    sx: Vec<f64>,
    n: Vec<u64>,
}

/// Per-day slot sums from which estimates for any resampling of days can
/// be formed.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAccumulators {
    opts: AcfOptions,
    n_slots: usize,
    n_strata: usize,
    stratum_width: f64,
    mean: f64,
    days: Vec<DayCells>,
}

fn split_days(points: &[ReturnPoint]) -> Result<Vec<&[ReturnPoint]>, AcfError> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        if i == points.len() || points[i].day != points[start].day {
            out.push(&points[start..i]);
            if i < points.len() && points[i].day < points[start].day {
                return Err(AcfError::Unsorted(i));
            }
            start = i;
        } else if points[i].t < points[i - 1].t {
            return Err(AcfError::Unsorted(i));
        }
    }
    Ok(out)
}

impl SlotAccumulators {
    pub fn collect(points: &[ReturnPoint], opts: &AcfOptions) -> Result<Self, AcfError> {
        opts.validate()?;
        if points.is_empty() {
            return Err(AcfError::Empty);
        }
        let days = split_days(points)?;
        let h = opts.slot_width;
        let n_slots = opts.last_slot() + 1;
        let (n_strata, stratum_width) = match opts.weighting {
            Weighting::Pooled => (1, opts.session_length),
            Weighting::ClockUniform { stratum_width } => {
                ((opts.session_length / stratum_width).ceil().max(1.0) as usize, stratum_width)
            }
        };
        let transform = opts.transform;
        let mean = points.iter().map(|p| transform.apply(p.value)).sum::<f64>() / points.len() as f64;
        let upper = (n_slots as f64 - 0.5) * h;

        let cells = days
            .par_iter()
            .map(|day| {
                let xs: Vec<f64> = day.iter().map(|p| transform.apply(p.value)).collect();
                let reference = match opts.mean {
                    MeanRemoval::Global => mean,
                    MeanRemoval::PerDay => xs.iter().sum::<f64>() / xs.len() as f64,
                };
                let d: Vec<f64> = xs.iter().map(|x| x - reference).collect();
                let size = n_strata * n_slots;
                let mut c = DayCells {
                    date: day[0].day,
                    sum_dev: d.iter().sum(),
                    count: d.len() as u64,
                    sxy: vec![0.0; size],
                    sx: vec![0.0; size],
                    n: vec![0; size],
                };
                for i in 0..day.len() {
                    let ti = day[i].t;
                    let base = ((ti / stratum_width) as usize).min(n_strata - 1) * n_slots;
                    c.sxy[base] += d[i] * d[i];
                    c.sx[base] += 2.0 * d[i];
                    c.n[base] += 1;
                    for j in i + 1..day.len() {
                        let lag = day[j].t - ti;
                        if lag > upper {
                            break;
                        }
                        if let Some(k) = slot_of(lag, h) {
                            if k < n_slots {
                                c.sxy[base + k] += d[i] * d[j];
                                c.sx[base + k] += d[i] + d[j];
                                c.n[base + k] += 1;
                            }
                        }
                    }
                }
                c
            })
            .collect();
        Ok(Self { opts: *opts, n_slots, n_strata, stratum_width, mean, days: cells })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Covariance per slot (unnormalized) and pair counts for the days
    /// taken with the given multiplicities (`None`: every day once).
    fn covariances(&self, multiplicity: Option<&[u32]>) -> (Vec<Option<f64>>, Vec<u64>) {
        let size = self.n_strata * self.n_slots;
        let mut sxy = vec![0.0; size];
        let mut sx = vec![0.0; size];
        let mut n = vec![0u64; size];
        let mut sum_dev = 0.0;
        let mut count = 0u64;
        for (idx, day) in self.days.iter().enumerate() {
            let m = multiplicity.map_or(1, |m| m[idx]);
            if m == 0 {
                continue;
            }
            let mf = m as f64;
            for c in 0..size {
                sxy[c] += mf * day.sxy[c];
                sx[c] += mf * day.sx[c];
                n[c] += m as u64 * day.n[c];
            }
            sum_dev += mf * day.sum_dev;
            count += m as u64 * day.count;
        }
        // shift to the resample's own mean; zero for the full sample
        let delta = match (multiplicity, self.opts.mean) {
            (Some(_), MeanRemoval::Global) if count > 0 => sum_dev / count as f64,
            _ => 0.0,
        };
        let cell_cov = |c: usize| -> Option<f64> {
            if n[c] == 0 {
                return None;
            }
            let s = if delta == 0.0 { sxy[c] } else { sxy[c] - delta * sx[c] + delta * delta * n[c] as f64 };
            Some(s / n[c] as f64)
        };
        let mut covs = Vec::with_capacity(self.n_slots);
        let mut counts = Vec::with_capacity(self.n_slots);
        let h = self.opts.slot_width;
        let length = self.opts.session_length;
        for k in 0..self.n_slots {
            counts.push((0..self.n_strata).map(|s| n[s * self.n_slots + k]).sum());
            let cov = match self.opts.weighting {
                Weighting::Pooled => cell_cov(k),
                Weighting::ClockUniform { .. } => {
                    let reach = (length - k as f64 * h).max(0.0);
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for s in 0..self.n_strata {
                        let lo = s as f64 * self.stratum_width;
                        let hi = ((s + 1) as f64 * self.stratum_width).min(length);
                        let weight = (hi.min(reach) - lo).max(0.0);
                        if weight == 0.0 {
                            continue;
                        }
                        if let Some(v) = cell_cov(s * self.n_slots + k) {
                            num += weight * v;
                            den += weight;
                        }
                    }
                    (den > 0.0).then(|| num / den)
                }
            };
            covs.push(cov);
        }
        (covs, counts)
    }

    fn values(&self, multiplicity: Option<&[u32]>) -> Result<(Vec<Option<f64>>, Vec<u64>, f64), AcfError> {
        let (covs, counts) = self.covariances(multiplicity);
        let variance = covs[0].unwrap_or(0.0);
        if !self.opts.normalize {
            return Ok((covs, counts, variance));
        }
        if !(variance > 0.0) {
            return Err(AcfError::ZeroVariance);
        }
        let mut values: Vec<Option<f64>> = covs.iter().map(|c| c.map(|v| v / variance)).collect();
        values[0] = Some(1.0);
        Ok((values, counts, variance))
    }

    pub fn estimate(&self) -> Result<AcfEstimate, AcfError> {
        let (values, pair_counts, variance) = self.values(None)?;
        let h = self.opts.slot_width;
        Ok(AcfEstimate {
            slot_width: h,
            lags: (0..self.n_slots).map(|k| k as f64 * h).collect(),
            values,
            pair_counts,
            normalized: self.opts.normalize,
            transform: self.opts.transform,
            weighting: self.opts.weighting,
            mean: self.mean,
            variance,
        })
    }
}

/// Slotted ACF of `points` (grouped by day, time-sorted within a day).
pub fn acf_slotted(points: &[ReturnPoint], opts: &AcfOptions) -> Result<AcfEstimate, AcfError> {
    SlotAccumulators::collect(points, opts)?.estimate()
}

/// Day-resampling bootstrap replicates of one or more estimators computed
/// on the same days. Using shared resamples lets contrasts between the
/// estimators carry their joint uncertainty.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    /// `[replicate][estimator][slot]`
    replicates: Vec<Vec<Vec<Option<f64>>>>,
}

impl Bootstrap {
    pub fn run(accs: &[&SlotAccumulators], replicates: usize, seed: u64) -> Result<Self, AcfError> {
        let first = accs.first().ok_or(AcfError::Empty)?;
        let n_days = first.n_days();
        for a in accs {
            if a.n_days() != n_days || a.dates() != first.dates() {
                return Err(AcfError::MismatchedDays);
            }
        }
        let replicates = (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r);
                let mut mult = vec![0u32; n_days];
                for _ in 0..n_days {
                    mult[rng.random_range(0..n_days)] += 1;
                }
                accs.iter()
                    .map(|a| match a.values(Some(&mult)) {
                        Ok((v, _, _)) => v,
                        Err(_) => vec![None; a.n_slots],
                    })
                    .collect()
            })
            .collect();
        Ok(Self { replicates })
    }

    /// Bootstrap standard error of an arbitrary per-replicate statistic.
    pub fn se_of<F>(&self, stat: F) -> Option<f64>
    where
        F: Fn(&[Vec<Option<f64>>]) -> Option<f64>,
    {
        let vals: Vec<f64> = self.replicates.iter().filter_map(|r| stat(r)).collect();
        crate::numeric::sample_std(&vals)
    }

    /// Standard error of estimator `which` at `slot`.
    pub fn se(&self, which: usize, slot: usize) -> Option<f64> {
        self.se_of(|r| r[which].get(slot).copied().flatten())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfComparisonRow {
    pub lag: f64,
    pub raw: Option<f64>,
    pub warped: Option<f64>,
    /// `warped - raw`.
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfComparison {
    pub rows: Vec<AcfComparisonRow>,
    /// Lags > 0 where both values exist.
    pub compared: usize,
    pub warped_above: usize,
    pub warped_below: usize,
}

/// Per-lag differences between a clock-time and a deformed-time estimate.
pub fn acf_compare(raw: &AcfEstimate, warped: &AcfEstimate) -> Result<AcfComparison, AcfError> {
    if raw.lags.len() != warped.lags.len() || raw.slot_width != warped.slot_width {
        return Err(AcfError::MismatchedGrid);
    }
    let mut cmp = AcfComparison { rows: Vec::new(), compared: 0, warped_above: 0, warped_below: 0 };
    for k in 0..raw.lags.len() {
        let diff = match (raw.values[k], warped.values[k]) {
            (Some(r), Some(w)) => Some(w - r),
            _ => None,
        };
        if let (Some(d), true) = (diff, k > 0) {
            cmp.compared += 1;
            if d > 0.0 {
                cmp.warped_above += 1;
            } else if d < 0.0 {
                cmp.warped_below += 1;
            }
        }
        cmp.rows.push(AcfComparisonRow { lag: raw.lags[k], raw: raw.values[k], warped: warped.values[k], diff });
    }
    Ok(cmp)
}
