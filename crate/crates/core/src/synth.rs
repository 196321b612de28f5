//! Synthetic seasonal tick data with a known stationary underlying process,
//! and the end-to-end check of the clock-time estimator against its
//! prediction from the warp.
//!
//! Event times follow an inhomogeneous Poisson process with intensity
//! 1/θ(t), drawn by thinning. Marks are a Gaussian vector indexed by the
//! warped times τ(t_i) with covariance C_X(|τ_i - τ_j|), sampled exactly
//! through a dense Cholesky factor per day.

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acf::{AcfError, AcfOptions, Bootstrap, MeanRemoval, SlotAccumulators, Weighting};
use crate::ingest::{Day, ReturnPoint, Tick};
use crate::kernel::{predict_cy, predict_cy_pair_weighted, KernelError, StationaryAcf};
use crate::table::Table;
use crate::theta::{Shape, ThetaModel};
use crate::warp::WarpFn;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("covariance of day {day} ({date}) is not positive definite; reduce c or tau_c")]
    NotPositiveDefinite { day: usize, date: NaiveDate },
    #[error(transparent)]
    Acf(#[from] AcfError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Stationary autocorrelation of the marks in deformed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcfKind {
    /// `C(0) = 1`, `C(Δ) = c e^{-Δ/τc}`: positive, decreasing, convex.
    PositiveExp { c: f64, tau_c: f64 },
    /// `C(0) = 1`, `C(Δ) = -c e^{-Δ/τc}`: negative, increasing, concave.
    NegativeExp { c: f64, tau_c: f64 },
}

impl AcfKind {
    pub fn c(&self) -> f64 {
        match *self {
            AcfKind::PositiveExp { c, .. } | AcfKind::NegativeExp { c, .. } => c,
        }
    }

    pub fn tau_c(&self) -> f64 {
        match *self {
            AcfKind::PositiveExp { tau_c, .. } | AcfKind::NegativeExp { tau_c, .. } => tau_c,
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, AcfKind::NegativeExp { .. })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (c, tau_c) = (self.c(), self.tau_c());
        if !(c > 0.0 && c <= 1.0 && tau_c > 0.0 && tau_c.is_finite()) {
            return Err(SynthError::Config(format!("need 0 < c <= 1 and tau_c > 0, got c = {c}, tau_c = {tau_c}")));
        }
        Ok(())
    }
}

impl StationaryAcf for AcfKind {
    fn eval(&self, lag: f64) -> f64 {
        if lag == 0.0 {
            return 1.0;
        }
        let decay = (-lag.abs() / self.tau_c()).exp();
        match *self {
            AcfKind::PositiveExp { c, .. } => c * decay,
            AcfKind::NegativeExp { c, .. } => -c * decay,
        }
    }
}

impl std::fmt::Display for AcfKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            AcfKind::PositiveExp { c, tau_c } => write!(f, "positive_exp(c = {c}, tau_c = {tau_c})"),
            AcfKind::NegativeExp { c, tau_c } => write!(f, "negative_exp(c = {c}, tau_c = {tau_c})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub theta: ThetaModel,
    pub n_days: usize,
    pub acf_kind: AcfKind,
    pub seed: u64,
    /// Date of the first synthetic day; later days follow on consecutive dates.
    pub start_date: NaiveDate,
}

impl SynthConfig {
    pub fn new(theta: ThetaModel, n_days: usize, acf_kind: AcfKind, seed: u64) -> Self {
        Self { theta, n_days, acf_kind, seed, start_date: NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() }
    }

    fn date(&self, day: usize) -> NaiveDate {
        self.start_date + Days::new(day as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDay {
    pub date: NaiveDate,
    pub clock_times: Vec<f64>,
    pub warped_times: Vec<f64>,
    pub marks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub days: Vec<SynthDay>,
}

fn day_rng(seed: u64, day: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day as u64);
    rng
}

/// Event times on `[0, T]` with intensity `model.intensity`, by thinning a
/// homogeneous process at the maximal intensity.
fn thinned_times<R: Rng>(model: &ThetaModel, rng: &mut R) -> Vec<f64> {
    let lambda_max = model.max_intensity();
    let gaps = Exp::new(lambda_max).expect("positive intensity");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.sample(gaps);
        if t > model.length() {
            return out;
        }
        let u: f64 = rng.random();
        if u * lambda_max < model.intensity(t) {
            out.push(t);
        }
    }
}

/// Event times only, per day. The times are the same as those produced by
/// [`gen_seasonal_days`] for the same model, day count and seed.
pub fn gen_event_times(model: &ThetaModel, n_days: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_days).into_par_iter().map(|d| thinned_times(model, &mut day_rng(seed, d))).collect()
}

fn gen_day(cfg: &SynthConfig, warp: &WarpFn, day: usize) -> Result<SynthDay, SynthError> {
    let date = cfg.date(day);
    let mut rng = day_rng(cfg.seed, day);
    let clock_times = thinned_times(&cfg.theta, &mut rng);
    let warped_times: Vec<f64> = clock_times.iter().map(|&t| warp.tau_unchecked(t).min(warp.length())).collect();
    let n = clock_times.len();
    let cov = DMatrix::from_fn(n, n, |i, j| cfg.acf_kind.eval((warped_times[i] - warped_times[j]).abs()));
    let chol = cov.cholesky().ok_or(SynthError::NotPositiveDefinite { day, date })?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let marks = (chol.l() * z).iter().copied().collect();
    Ok(SynthDay { date, clock_times, warped_times, marks })
}

/// Days are generated in parallel from per-day streams, so the output does
/// not depend on the thread count. On a covariance that is not positive
/// definite the earliest offending day is reported.
pub fn gen_seasonal_days(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    if cfg.n_days == 0 {
        return Err(SynthError::Config("n_days must be >= 1".into()));
    }
    cfg.acf_kind.validate()?;
    let warp = WarpFn::new(cfg.theta);
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut days = Vec::with_capacity(cfg.n_days);
    for start in (0..cfg.n_days).step_by(chunk) {
        let end = (start + chunk).min(cfg.n_days);
        let batch: Vec<Result<SynthDay, SynthError>> =
            (start..end).into_par_iter().map(|d| gen_day(cfg, &warp, d)).collect();
        for r in batch {
            days.push(r?);
        }
    }
    Ok(SynthData { days })
}

impl SynthData {
    fn points(&self, warped: bool) -> Vec<ReturnPoint> {
        self.days
            .iter()
            .flat_map(|d| {
                let times = if warped { &d.warped_times } else { &d.clock_times };
                times.iter().zip(&d.marks).map(move |(&t, &value)| ReturnPoint { day: d.date, t, value })
            })
            .collect()
    }

    /// Marks at clock times: the seasonal process Y(t).
    pub fn clock_points(&self) -> Vec<ReturnPoint> {
        self.points(false)
    }

    /// Marks at warped times: the stationary process X(τ).
    pub fn warped_points(&self) -> Vec<ReturnPoint> {
        self.points(true)
    }

    pub fn n_events(&self) -> usize {
        self.days.iter().map(|d| d.clock_times.len()).sum()
    }

    /// Tick days whose log returns are `1e-3` times the marks (the first
    /// mark of a day sets the opening price).
    pub fn to_ticks(&self) -> Vec<Day> {
        self.days
            .iter()
            .map(|d| {
                let mut log_price = 100f64.ln();
                let ticks = d
                    .clock_times
                    .iter()
                    .zip(&d.marks)
                    .map(|(&t, &x)| {
                        log_price += 1e-3 * x;
                        Tick { t, price: log_price.exp(), volume: 1 }
                    })
                    .collect();
                Day { date: d.date, ticks }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub slot_width: f64,
    pub max_lag: f64,
    /// Stratum width of the clock-uniform estimator.
    pub stratum_width: f64,
    pub bootstrap_replicates: usize,
    pub bootstrap_seed: u64,
    /// Slots with fewer pairs are dropped.
    pub min_pairs: u64,
}

impl ValidationOptions {
    pub fn for_model(model: &ThetaModel) -> Self {
        Self {
            slot_width: model.mean_dt(),
            max_lag: 600.0,
            stratum_width: 300.0,
            bootstrap_replicates: 200,
            bootstrap_seed: 0x5eed,
            min_pairs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub lag: f64,
    /// Clock-time estimate, clock-uniform weighting.
    pub emp_cy: f64,
    /// Clock-time estimate, pooled pairs.
    pub emp_cy_pooled: f64,
    /// Warped-time estimate.
    pub emp_cx: f64,
    pub pred_cy: f64,
    pub pred_cy_pooled: f64,
    pub analytic_cx: f64,
    pub se_cy: f64,
    pub se_cy_pooled: f64,
    pub se_cx: f64,
    /// Bootstrap SE of `emp_cy - emp_cx`.
    pub se_diff: f64,
    pub pairs_clock: u64,
    pub pairs_warped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub acf_kind: AcfKind,
    pub rows: Vec<ValidationRow>,
    pub checks: Vec<Check>,
    pub notices: Vec<String>,
    pub n_days: usize,
    pub n_events: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            "validate",
            &[
                "lag",
                "emp_cy",
                "emp_cy_pooled",
                "emp_cx",
                "pred_cy",
                "pred_cy_pooled",
                "analytic_cx",
                "se_cy",
                "se_cy_pooled",
                "se_cx",
                "se_diff",
                "pairs_clock",
                "pairs_warped",
            ],
        )
        .param("acf_kind", self.acf_kind)
        .param("n_days", self.n_days as u64)
        .param("n_events", self.n_events as u64);
        for c in &self.checks {
            t = t.param(&format!("check.{}", c.name), format!("{} ({})", if c.passed { "pass" } else { "FAIL" }, c.detail));
        }
        for n in &self.notices {
            t = t.param("notice", n);
        }
        t = t.param("verdict", if self.passed() { "pass" } else { "FAIL" });
        for r in &self.rows {
            t.push(vec![
                r.lag.into(),
                r.emp_cy.into(),
                r.emp_cy_pooled.into(),
                r.emp_cx.into(),
                r.pred_cy.into(),
                r.pred_cy_pooled.into(),
                r.analytic_cx.into(),
                r.se_cy.into(),
                r.se_cy_pooled.into(),
                r.se_cx.into(),
                r.se_diff.into(),
                r.pairs_clock.into(),
                r.pairs_warped.into(),
            ]);
        }
        t
    }
}

fn first_below(values: impl Iterator<Item = (f64, f64)>, threshold: f64) -> Option<f64> {
    values.into_iter().find(|&(_, v)| v.abs() < threshold).map(|(lag, _)| lag)
}

/// Compares slotted estimates of `data` against the warp prediction and
/// the analytic C_X. Checks:
///
/// * `exact_relation`: clock-uniform C_Y within 3 SE of `predict_cy`.
/// * `direction_empirical`: C_Y ≤ C_X (negative kind) or ≥ (positive kind)
///   at every slot; violations no larger than 1 SE are tolerated on at most
///   5% of slots. For a constant θ: |C_Y - C_X| ≤ 3 SE.
/// * `direction_predicted`: the same direction for `predict_cy` against
///   the analytic C_X.
/// * `stationarity`: warped-time C_X within 3 SE of the analytic C_X.
/// * `pooled_relation`: pooled C_Y within 3 SE of the pair-weighted
///   prediction.
/// * `lag_zero`: normalized lag-0 values equal 1.
/// * `memory_extension` (negative kind): predicted C_Y relaxes below
///   `0.05 c` no earlier than C_X.
pub fn validate_relation(
    cfg: &SynthConfig,
    data: &SynthData,
    opts: &ValidationOptions,
) -> Result<ValidationReport, SynthError> {
    let warp = WarpFn::new(cfg.theta);
    let length = cfg.theta.length();
    let base = AcfOptions {
        max_lag: opts.max_lag,
        slot_width: opts.slot_width,
        session_length: length,
        transform: crate::acf::MarkTransform::Identity,
        mean: MeanRemoval::Global,
        weighting: Weighting::Pooled,
        normalize: true,
    };
    let clock = data.clock_points();
    let warped = data.warped_points();
    let acc_uniform = SlotAccumulators::collect(
        &clock,
        &AcfOptions { weighting: Weighting::ClockUniform { stratum_width: opts.stratum_width }, ..base },
    )?;
    let acc_pooled = SlotAccumulators::collect(&clock, &base)?;
    let acc_warped = SlotAccumulators::collect(&warped, &base)?;
    let (cy, cy_pooled, cx) = (acc_uniform.estimate()?, acc_pooled.estimate()?, acc_warped.estimate()?);
    let boot = Bootstrap::run(&[&acc_uniform, &acc_pooled, &acc_warped], opts.bootstrap_replicates, opts.bootstrap_seed)?;

    let kind = cfg.acf_kind;
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for k in 1..cy.lags.len() {
        let lag = cy.lags[k];
        let pairs_clock = cy.pair_counts[k];
        let pairs_warped = cx.pair_counts[k];
        let values = (cy.values[k], cy_pooled.values[k], cx.values[k]);
        let (Some(emp_cy), Some(emp_cy_pooled), Some(emp_cx)) = values else {
            notices.push(format!("slot at lag {lag} dropped: no pairs"));
            continue;
        };
        if pairs_clock.min(pairs_warped) < opts.min_pairs {
            notices.push(format!("slot at lag {lag} dropped: {} pairs", pairs_clock.min(pairs_warped)));
            continue;
        }
        let se = |which| boot.se(which, k).unwrap_or(f64::NAN);
        let se_diff = boot
            .se_of(|r| Some(r[0].get(k).copied().flatten()? - r[2].get(k).copied().flatten()?))
            .unwrap_or(f64::NAN);
        rows.push(ValidationRow {
            lag,
            emp_cy,
            emp_cy_pooled,
            emp_cx,
            pred_cy: predict_cy(&warp, &kind, lag)?,
            pred_cy_pooled: predict_cy_pair_weighted(&warp, &kind, lag)?,
            analytic_cx: kind.eval(lag),
            se_cy: se(0),
            se_cy_pooled: se(1),
            se_cx: se(2),
            se_diff,
            pairs_clock,
            pairs_warped,
        });
    }
    if rows.is_empty() {
        return Err(SynthError::Config("no slot has enough pairs".into()));
    }

    let mut checks = Vec::new();
    let within = |name: &str, f: &dyn Fn(&ValidationRow) -> (f64, f64)| {
        let bad: Vec<f64> = rows.iter().filter(|r| { let (d, s) = f(r); !(d.abs() <= 3.0 * s) }).map(|r| r.lag).collect();
        let worst = rows.iter().map(|r| { let (d, s) = f(r); d.abs() / s }).fold(0.0, f64::max);
        Check {
            name: name.to_string(),
            passed: bad.is_empty(),
            detail: format!("max |diff|/SE = {worst:.3}, slots outside 3 SE: {bad:?}"),
        }
    };
    checks.push(within("exact_relation", &|r| (r.emp_cy - r.pred_cy, r.se_cy)));

    // sign s: +1 when C_Y ≥ C_X is expected, -1 for C_Y ≤ C_X
    let sign = if kind.is_negative() { -1.0 } else { 1.0 };
    if let Shape::Constant = cfg.theta.shape() {
        checks.push(within("direction_empirical", &|r| (r.emp_cy - r.emp_cx, r.se_diff)));
    } else {
        let mut large = Vec::new();
        let mut small = Vec::new();
        for r in &rows {
            let v = sign * (r.emp_cy - r.emp_cx);
            if v < 0.0 {
                if -v <= r.se_diff { small.push(r.lag) } else { large.push(r.lag) }
            }
        }
        let allowed = (0.05 * rows.len() as f64).floor() as usize;
        checks.push(Check {
            name: "direction_empirical".into(),
            passed: large.is_empty() && small.len() <= allowed,
            detail: format!(
                "expected C_Y {} C_X; violations beyond 1 SE at {large:?}, within 1 SE at {small:?} (allowed {allowed})",
                if sign > 0.0 { ">=" } else { "<=" }
            ),
        });
    }
    let bad_pred: Vec<f64> = rows
        .iter()
        .filter(|r| sign * (r.pred_cy - r.analytic_cx) < -1e-12)
        .map(|r| r.lag)
        .collect();
    checks.push(Check {
        name: "direction_predicted".into(),
        passed: bad_pred.is_empty(),
        detail: format!("violating lags: {bad_pred:?}"),
    });
    checks.push(within("stationarity", &|r| (r.emp_cx - r.analytic_cx, r.se_cx)));
    checks.push(within("pooled_relation", &|r| (r.emp_cy_pooled - r.pred_cy_pooled, r.se_cy_pooled)));
    checks.push(Check {
        name: "lag_zero".into(),
        passed: cy.values[0] == Some(1.0) && cx.values[0] == Some(1.0) && cy_pooled.values[0] == Some(1.0),
        detail: format!("C_Y(0) = {:?}, C_X(0) = {:?}", cy.values[0], cx.values[0]),
    });
    if kind.is_negative() {
        let threshold = 0.05 * kind.c();
        let lag_y = first_below(rows.iter().map(|r| (r.lag, r.pred_cy)), threshold);
        let lag_x = first_below(rows.iter().map(|r| (r.lag, r.analytic_cx)), threshold);
        let emp_y = first_below(rows.iter().map(|r| (r.lag, r.emp_cy)), threshold);
        let emp_x = first_below(rows.iter().map(|r| (r.lag, r.emp_cx)), threshold);
        let passed = match (lag_y, lag_x) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(y), Some(x)) => y >= x,
        };
        checks.push(Check {
            name: "memory_extension".into(),
            passed,
            detail: format!(
                "first lag with |C| < {threshold}: predicted C_Y {lag_y:?}, analytic C_X {lag_x:?}; empirical C_Y {emp_y:?}, empirical C_X {emp_x:?}"
            ),
        });
    }
    Ok(ValidationReport { acf_kind: kind, rows, checks, notices, n_days: data.days.len(), n_events: data.n_events() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 25200.0;

    fn kghm() -> ThetaModel {
        ThetaModel::new(Shape::Quadratic { t1: -1640.65, t2: 29999.47 }, 24.465, T).unwrap()
    }

    #[test]
    fn acf_kinds() {
        let neg = AcfKind::NegativeExp { c: 0.2, tau_c: 120.0 };
        assert_eq!(neg.eval(0.0), 1.0);
        assert!((neg.eval(120.0) + 0.2 / std::f64::consts::E).abs() < 1e-15);
        let pos = AcfKind::PositiveExp { c: 1.0, tau_c: 300.0 };
        assert!((pos.eval(300.0) - 1.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(AcfKind::PositiveExp { c: 0.0, tau_c: 1.0 }.validate().is_err());
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let cfg = SynthConfig::new(kghm(), 3, AcfKind::PositiveExp { c: 1.0, tau_c: 300.0 }, 11);
        let a = gen_seasonal_days(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| gen_seasonal_days(&cfg).unwrap());
        assert_eq!(a, b);
        let times = gen_event_times(&cfg.theta, 3, 11);
        for (d, t) in a.days.iter().zip(&times) {
            assert_eq!(&d.clock_times, t);
            assert!(d.clock_times.windows(2).all(|w| w[1] > w[0]));
            assert!(d.warped_times.windows(2).all(|w| w[1] >= w[0]));
        }
        let other = gen_seasonal_days(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.days[0].clock_times, other.days[0].clock_times);
    }

    #[test]
    fn infeasible_negative_kernel_names_a_day() {
        let cfg = SynthConfig::new(kghm(), 2, AcfKind::NegativeExp { c: 0.9, tau_c: 600.0 }, 1);
        match gen_seasonal_days(&cfg) {
            Err(SynthError::NotPositiveDefinite { day, date }) => {
                assert_eq!(day, 0);
                assert_eq!(date, cfg.start_date);
            }
            other => panic!("expected positive-definiteness error, got {other:?}"),
        }
    }

    #[test]
    fn ticks_carry_marks_as_returns() {
        let cfg = SynthConfig::new(kghm(), 1, AcfKind::PositiveExp { c: 1.0, tau_c: 60.0 }, 5);
        let data = gen_seasonal_days(&cfg).unwrap();
        let days = data.to_ticks();
        let r = crate::ingest::compute_returns(&days);
        assert_eq!(r.points.len(), data.days[0].marks.len() - 1);
        for (p, &x) in r.points.iter().zip(&data.days[0].marks[1..]) {
            assert!((p.value - 1e-3 * x).abs() < 1e-12);
        }
    }
}
