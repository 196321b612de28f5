//! How a fixed clock lag Δt is seen in deformed time.
//!
//! For `t` uniform on `[0, T - Δt]` the deformed lag `Δτ(t, Δt)` has a
//! density ρ_Δt. The clock-time autocorrelation estimator of the seasonal
//! process is the ρ_Δt-average of the stationary autocorrelation, and
//! ω(Δt) = E[Δτ] / Δt measures how much the seasonal estimator shortens
//! the lags it effectively probes.
//!
//! Everything is computed in `t`-space (quadrature over `t` or sampling of
//! `t`), which sidesteps the integrable singularity of ρ_Δt at the support
//! edge that belongs to a branch breakpoint. The branch-by-branch inverse
//! computation is kept as an independent cross-check.

use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::{brent_root, integrate, NumericError};
use crate::theta::Shape;
use crate::warp::{WarpError, WarpFn, QUAD_REL_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("lag {dt} must lie in (0, {length})")]
    LagOutOfRange { dt: f64, length: f64 },
    #[error("grid size {0} too small (need at least 1000 samples and 1 cell)")]
    Grid(usize),
    #[error("stationary ACF defined on [{:?}], needed on [{:?}]", available, needed)]
    CxUndefined { needed: (f64, f64), available: (f64, f64) },
    #[error("invalid ACF table: {0}")]
    Table(String),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub const DEFAULT_CELLS: usize = 512;
pub const DEFAULT_GRID_N: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Flat,
}

/// A sub-interval of `[0, T - Δt]` on which `t ↦ Δτ(t, Δt)` is monotone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub direction: Monotonicity,
}

fn check_lag(w: &WarpFn, dt: f64) -> Result<(), KernelError> {
    if dt > 0.0 && dt < w.length() {
        Ok(())
    } else {
        Err(KernelError::LagOutOfRange { dt, length: w.length() })
    }
}

/// Splits `[0, T - dt]` where θ(t + dt) = θ(t), i.e. where ∂Δτ/∂t changes
/// sign. Unimodal θ gives at most one breakpoint.
pub fn branch_decomposition(w: &WarpFn, dt: f64) -> Result<Vec<Branch>, KernelError> {
    check_lag(w, dt)?;
    let end = w.length() - dt;
    let model = *w.model();
    if let Shape::Constant = model.shape() {
        return Ok(vec![Branch { lo: 0.0, hi: end, direction: Monotonicity::Flat }]);
    }
    let g = |t: f64| model.theta(t + dt) - model.theta(t);
    // Δτ increases where θ(t + dt) < θ(t)
    let direction = |gv: f64| {
        if gv < 0.0 {
            Monotonicity::Increasing
        } else if gv > 0.0 {
            Monotonicity::Decreasing
        } else {
            Monotonicity::Flat
        }
    };
    let (g_lo, g_hi) = (g(0.0), g(end));
    if g_lo != 0.0 && g_hi != 0.0 && g_lo.signum() != g_hi.signum() {
        let b = brent_root(g, 0.0, end, 1e-13 * w.length(), 200)?;
        Ok(vec![
            Branch { lo: 0.0, hi: b, direction: direction(g_lo) },
            Branch { lo: b, hi: end, direction: direction(g_hi) },
        ])
    } else {
        Ok(vec![Branch { lo: 0.0, hi: end, direction: direction(g(0.5 * end)) }])
    }
}

/// `[min, max]` of Δτ(t, dt) over `t ∈ [0, T - dt]`.
pub fn lag_support(w: &WarpFn, dt: f64) -> Result<(f64, f64), KernelError> {
    let branches = branch_decomposition(w, dt)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in &branches {
        for t in [b.lo, b.hi] {
            let v = w.delta_tau_unchecked(t, dt);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok((lo, hi))
}

/// Histogram of the deformed-lag density ρ_Δt.
#[derive(Debug, Clone, PartialEq)]
pub struct LagDistribution {
    pub dt: f64,
    pub support: (f64, f64),
    /// `cells + 1` edges spanning the support.
    pub edges: Vec<f64>,
    /// Probability mass per cell.
    pub mass: Vec<f64>,
}

impl LagDistribution {
    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// True when all mass sits at one lag (flat θ).
    pub fn is_degenerate(&self) -> bool {
        self.mass.len() == 1 && self.edges[0] == self.edges[1]
    }

    /// Density per cell (1/s); infinite for a degenerate distribution.
    pub fn density(&self) -> Vec<f64> {
        self.mass
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| if e[1] > e[0] { m / (e[1] - e[0]) } else { f64::INFINITY })
            .collect()
    }

    pub fn cell_mid(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Mean deformed lag, using cell midpoints.
    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(i, m)| m * self.cell_mid(i)).sum()
    }

    fn empty(dt: f64, support: (f64, f64), cells: usize) -> Self {
        let (lo, hi) = support;
        if hi - lo <= 1e-12 * dt.max(1.0) {
            return Self { dt, support, edges: vec![lo, hi], mass: vec![0.0] };
        }
        let edges = (0..=cells)
            .map(|i| if i == cells { hi } else { lo + (hi - lo) * i as f64 / cells as f64 })
            .collect();
        Self { dt, support, edges, mass: vec![0.0; cells] }
    }

    fn cell_of(&self, v: f64) -> usize {
        let cells = self.mass.len();
        if cells == 1 {
            return 0;
        }
        let (lo, hi) = self.support;
        let idx = ((v - lo) / (hi - lo) * cells as f64).floor();
        (idx.max(0.0) as usize).min(cells - 1)
    }
}

/// ρ_Δt by uniform midpoint sampling of `t` on `[0, T - dt]`, each sample
/// carrying mass `1 / grid_n`.
pub fn lag_distribution(w: &WarpFn, dt: f64, grid_n: usize) -> Result<LagDistribution, KernelError> {
    lag_distribution_with_cells(w, dt, grid_n, DEFAULT_CELLS)
}

pub fn lag_distribution_with_cells(
    w: &WarpFn,
    dt: f64,
    grid_n: usize,
    cells: usize,
) -> Result<LagDistribution, KernelError> {
    check_lag(w, dt)?;
    if grid_n < 1000 || cells == 0 {
        return Err(KernelError::Grid(grid_n.min(cells)));
    }
    let support = lag_support(w, dt)?;
    let mut dist = LagDistribution::empty(dt, support, cells);
    let end = w.length() - dt;
    let h = end / grid_n as f64;
    let weight = 1.0 / grid_n as f64;
    for j in 0..grid_n {
        let t = (j as f64 + 0.5) * h;
        let i = dist.cell_of(w.delta_tau_unchecked(t, dt));
        dist.mass[i] += weight;
    }
    Ok(dist)
}

/// Cell masses from the branch inverses: the mass of `[e_k, e_{k+1}]` is
/// `Σ_i |t_i(e_{k+1}) - t_i(e_k)| / (T - dt)`. Exact up to root-finding
/// tolerance; used to cross-check [`lag_distribution`].
pub fn lag_distribution_by_branches(
    w: &WarpFn,
    dt: f64,
    cells: usize,
) -> Result<LagDistribution, KernelError> {
    let support = lag_support(w, dt)?;
    let mut dist = LagDistribution::empty(dt, support, cells);
    if dist.mass.len() == 1 {
        dist.mass[0] = 1.0;
        return Ok(dist);
    }
    let end = w.length() - dt;
    for b in branch_decomposition(w, dt)? {
        let v_lo = w.delta_tau_unchecked(b.lo, dt);
        let v_hi = w.delta_tau_unchecked(b.hi, dt);
        let (v_min, v_max) = (v_lo.min(v_hi), v_lo.max(v_hi));
        // t on this branch where Δτ = e, clipped to the branch's range
        let t_of = |e: f64| -> Result<f64, KernelError> {
            if e <= v_min {
                return Ok(if v_lo <= v_hi { b.lo } else { b.hi });
            }
            if e >= v_max {
                return Ok(if v_lo <= v_hi { b.hi } else { b.lo });
            }
            Ok(brent_root(|t| w.delta_tau_unchecked(t, dt) - e, b.lo, b.hi, 1e-13 * w.length(), 200)?)
        };
        let mut prev = t_of(dist.edges[0])?;
        for k in 0..cells {
            let next = t_of(dist.edges[k + 1])?;
            dist.mass[k] += (next - prev).abs() / end;
            prev = next;
        }
    }
    Ok(dist)
}

/// Pointwise ρ_Δt(Δτ) = Σ_i 1 / ((T - dt) |∂Δτ/∂t (t_i)|).
pub fn density_branch_sum(w: &WarpFn, dt: f64, dtau: f64) -> Result<f64, KernelError> {
    let end = w.length() - dt;
    let mut total = 0.0;
    for b in branch_decomposition(w, dt)? {
        let (v_lo, v_hi) = (w.delta_tau_unchecked(b.lo, dt), w.delta_tau_unchecked(b.hi, dt));
        if dtau < v_lo.min(v_hi) || dtau > v_lo.max(v_hi) || b.direction == Monotonicity::Flat {
            continue;
        }
        let t = brent_root(|t| w.delta_tau_unchecked(t, dt) - dtau, b.lo, b.hi, 1e-13 * w.length(), 200)?;
        let slope = (w.rate(t + dt) - w.rate(t)).abs();
        total += 1.0 / (end * slope);
    }
    Ok(total)
}

/// ω(dt) = (1/dt) E_ρ[Δτ] = (1/(dt (T - dt))) ∫_0^{T-dt} Δτ(t, dt) dt.
pub fn omega(w: &WarpFn, dt: f64) -> Result<f64, KernelError> {
    check_lag(w, dt)?;
    if let Shape::Constant = w.model().shape() {
        return Ok(1.0);
    }
    let end = w.length() - dt;
    let mean = integrate(|t| w.delta_tau_unchecked(t, dt), 0.0, end, QUAD_REL_TOL, 0.0)? / end;
    Ok(mean / dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaCurve {
    pub dts: Vec<f64>,
    pub omega: Vec<f64>,
}

pub fn omega_curve(w: &WarpFn, dts: &[f64]) -> Result<OmegaCurve, KernelError> {
    let omega = dts.par_iter().map(|&dt| omega(w, dt)).collect::<Result<Vec<_>, _>>()?;
    Ok(OmegaCurve { dts: dts.to_vec(), omega })
}

/// A stationary autocorrelation function C_X of the deformed-time process.
pub trait StationaryAcf: Sync {
    fn eval(&self, lag: f64) -> f64;

    /// Lags on which `eval` is defined.
    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// Wraps a closure as a [`StationaryAcf`] defined for all lags ≥ 0.
pub struct FnAcf<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> StationaryAcf for FnAcf<F> {
    fn eval(&self, lag: f64) -> f64 {
        (self.0)(lag)
    }
}

/// Tabulated C_X, linearly interpolated between strictly increasing lags.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfTable {
    lags: Vec<f64>,
    values: Vec<f64>,
}

impl AcfTable {
    pub fn new(lags: Vec<f64>, values: Vec<f64>) -> Result<Self, KernelError> {
        if lags.len() != values.len() || lags.len() < 2 {
            return Err(KernelError::Table("need at least two (lag, value) rows".into()));
        }
        if lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::Table("lags must be strictly increasing".into()));
        }
        if lags.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(KernelError::Table("non-finite entry".into()));
        }
        Ok(Self { lags, values })
    }
}

impl StationaryAcf for AcfTable {
    fn eval(&self, lag: f64) -> f64 {
        let n = self.lags.len();
        if lag < self.lags[0] || lag > self.lags[n - 1] {
            return f64::NAN;
        }
        let k = self.lags.partition_point(|&l| l <= lag).clamp(1, n - 1);
        let (x0, x1) = (self.lags[k - 1], self.lags[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        y0 + (y1 - y0) * (lag - x0) / (x1 - x0)
    }

    fn domain(&self) -> (f64, f64) {
        (self.lags[0], self.lags[self.lags.len() - 1])
    }
}

fn check_cx_support(w: &WarpFn, cx: &dyn StationaryAcf, dt: f64) -> Result<(), KernelError> {
    let needed = lag_support(w, dt)?;
    let available = cx.domain();
    let slack = 1e-9 * needed.1.abs().max(1.0);
    if needed.0 < available.0 - slack || needed.1 > available.1 + slack {
        return Err(KernelError::CxUndefined { needed, available });
    }
    Ok(())
}

fn clamp_to(cx: &dyn StationaryAcf, v: f64) -> f64 {
    let (lo, hi) = cx.domain();
    cx.eval(v.clamp(lo, hi))
}

/// Predicted clock-time estimator C_Y(dt) = E_ρ[C_X(Δτ)], evaluated as
/// `(1/(T - dt)) ∫_0^{T-dt} C_X(Δτ(t, dt)) dt`.
pub fn predict_cy(w: &WarpFn, cx: &dyn StationaryAcf, dt: f64) -> Result<f64, KernelError> {
    check_lag(w, dt)?;
    check_cx_support(w, cx, dt)?;
    if let Shape::Constant = w.model().shape() {
        return Ok(clamp_to(cx, dt));
    }
    let end = w.length() - dt;
    let v = integrate(|t| clamp_to(cx, w.delta_tau_unchecked(t, dt)), 0.0, end, QUAD_REL_TOL, 1e-15)?;
    Ok(v / end)
}

/// Expected value of the pooled slotting estimator at clock lag `dt` when
/// events arrive with intensity 1/θ: every pair is weighted by
/// `λ(t) λ(t + dt)` instead of uniformly in `t`.
pub fn predict_cy_pair_weighted(w: &WarpFn, cx: &dyn StationaryAcf, dt: f64) -> Result<f64, KernelError> {
    check_lag(w, dt)?;
    check_cx_support(w, cx, dt)?;
    let model = w.model();
    let end = w.length() - dt;
    let weight = |t: f64| model.intensity(t) * model.intensity(t + dt);
    let num = integrate(
        |t| weight(t) * clamp_to(cx, w.delta_tau_unchecked(t, dt)),
        0.0,
        end,
        QUAD_REL_TOL,
        1e-18,
    )?;
    let den = integrate(weight, 0.0, end, QUAD_REL_TOL, 0.0)?;
    Ok(num / den)
}
