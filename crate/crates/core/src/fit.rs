//! Least-squares fit of the two free shape parameters of θ to a binned
//! pattern of mean inter-trade times.
//!
//! The objective is `Σ count_i (mean_dt_i - θ(t_mid_i))²` over nonempty
//! bins, with `a` re-solved for every candidate so that `τ(T) = T` holds
//! throughout. Candidates outside the feasible region score `+∞`.

use log::debug;
use thiserror::Error;

use crate::ingest::{SessionSpec, SessionStats};
use crate::pattern::IntradayPattern;
use crate::theta::{Shape, ThetaError, ThetaKind, ThetaModel};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 3 nonempty bins, found {0}")]
    TooFewBins(usize),
    #[error("pattern is normalized; fit needs raw mean intervals in seconds")]
    Normalized,
    #[error("pattern covers T = {pattern}, session has T = {session}")]
    LengthMismatch { pattern: f64, session: f64 },
    #[error("no convergence after {iterations} iterations (best objective {objective})")]
    NonConvergence { best: Box<ThetaModel>, objective: f64, iterations: usize },
    #[error(transparent)]
    Theta(#[from] ThetaError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative spread of the simplex values at convergence.
    pub f_tol: f64,
    /// Simplex diameter at convergence, scaled coordinates.
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 5000, f_tol: 1e-12, x_tol: 1e-9, restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: ThetaModel,
    pub objective: f64,
    /// Count-weighted RMS residual, seconds.
    pub residual_norm: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Best objective after each iteration.
    pub history: Vec<f64>,
}

struct Problem {
    kind: ThetaKind,
    mean_dt: f64,
    length: f64,
    /// (t_mid, mean_dt, count) of the nonempty bins
    bins: Vec<(f64, f64, f64)>,
}

impl Problem {
    fn shape(&self, x: [f64; 2]) -> Shape {
        let t = self.length;
        match self.kind {
            ThetaKind::Quadratic => Shape::Quadratic { t1: x[0] * t, t2: x[1] * t },
            ThetaKind::Rational => Shape::Rational { p: x[0] * t, q: x[1].exp() * t * t },
            ThetaKind::Constant => Shape::Constant,
        }
    }

    fn start(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            ThetaKind::Quadratic => ([-0.1, 1.2], [0.05, 0.05]),
            _ => ([0.5, 0.25f64.ln()], [0.05, 0.5]),
        }
    }

    fn model(&self, x: [f64; 2]) -> Result<ThetaModel, ThetaError> {
        ThetaModel::new(self.shape(x), self.mean_dt, self.length)
    }

    fn objective_of(&self, m: &ThetaModel) -> f64 {
        self.bins.iter().map(|&(t, y, w)| w * (y - m.theta(t)).powi(2)).sum()
    }

    fn objective(&self, x: [f64; 2]) -> f64 {
        match self.model(x) {
            Ok(m) => {
                let f = self.objective_of(&m);
                if f.is_finite() { f } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

struct NmResult {
    x: [f64; 2],
    f: f64,
    iterations: usize,
    converged: bool,
}

fn lin(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    // a + s (b - a)
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: &F,
    x0: [f64; 2],
    step: [f64; 2],
    opts: &FitOptions,
    f_floor: f64,
    budget: usize,
    history: &mut Vec<f64>,
) -> NmResult {
    let mut pts = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut fs = [f(pts[0]), f(pts[1]), f(pts[2])];
    let mut iterations = 0;
    loop {
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]));
        pts = [pts[order[0]], pts[order[1]], pts[order[2]]];
        fs = [fs[order[0]], fs[order[1]], fs[order[2]]];

        let diameter = (1..3)
            .map(|i| (pts[i][0] - pts[0][0]).abs().max((pts[i][1] - pts[0][1]).abs()))
            .fold(0.0, f64::max);
        let spread = fs[2] - fs[0];
        if fs[0] <= f_floor || (spread <= opts.f_tol * fs[0].abs() + f_floor && diameter <= opts.x_tol) {
            return NmResult { x: pts[0], f: fs[0], iterations, converged: true };
        }
        if iterations >= budget {
            return NmResult { x: pts[0], f: fs[0], iterations, converged: false };
        }
        iterations += 1;

        let centroid = lin(pts[0], pts[1], 0.5);
        let xr = lin(centroid, pts[2], -1.0);
        let fr = f(xr);
        if fr < fs[0] {
            let xe = lin(centroid, pts[2], -2.0);
            let fe = f(xe);
            if fe < fr {
                (pts[2], fs[2]) = (xe, fe);
            } else {
                (pts[2], fs[2]) = (xr, fr);
            }
        } else if fr < fs[1] {
            (pts[2], fs[2]) = (xr, fr);
        } else {
            let (xc, fc) = if fr < fs[2] {
                let xc = lin(centroid, xr, 0.5);
                (xc, f(xc))
            } else {
                let xc = lin(centroid, pts[2], 0.5);
                (xc, f(xc))
            };
            if fc < fs[2].min(fr) {
                (pts[2], fs[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    pts[i] = lin(pts[0], pts[i], 0.5);
                    fs[i] = f(pts[i]);
                }
            }
        }
        history.push(fs.iter().cloned().fold(f64::INFINITY, f64::min));
    }
}

/// Fits the shape parameters of `kind` to the raw pattern. Starting
/// points: `t1 = -0.1 T, t2 = 1.2 T` (quadratic), `p = T/2, q = (T/2)²`
/// (rational).
pub fn fit_theta(
    pattern: &IntradayPattern,
    kind: ThetaKind,
    stats: &SessionStats,
    spec: &SessionSpec,
) -> Result<FitReport, FitError> {
    fit_theta_with(pattern, kind, stats, spec, &FitOptions::default())
}

pub fn fit_theta_with(
    pattern: &IntradayPattern,
    kind: ThetaKind,
    stats: &SessionStats,
    spec: &SessionSpec,
    opts: &FitOptions,
) -> Result<FitReport, FitError> {
    if pattern.normalized {
        return Err(FitError::Normalized);
    }
    if (pattern.length - spec.length).abs() > 1e-9 * spec.length {
        return Err(FitError::LengthMismatch { pattern: pattern.length, session: spec.length });
    }
    let bins: Vec<(f64, f64, f64)> = pattern
        .bins
        .iter()
        .filter_map(|b| Some((b.t_mid, b.mean_dt?, b.count as f64)))
        .filter(|&(_, _, w)| w > 0.0)
        .collect();
    if bins.len() < 3 {
        return Err(FitError::TooFewBins(bins.len()));
    }
    let problem = Problem { kind, mean_dt: stats.mean_dt, length: spec.length, bins };
    let weight: f64 = problem.bins.iter().map(|b| b.2).sum();
    let report = |model: ThetaModel, objective: f64, iterations, restarts, history| FitReport {
        model,
        objective,
        residual_norm: (objective / weight).sqrt(),
        iterations,
        restarts,
        history,
    };

    if kind == ThetaKind::Constant {
        let model = ThetaModel::constant(stats.mean_dt, spec.length)?;
        let objective = problem.objective_of(&model);
        return Ok(report(model, objective, 0, 0, vec![objective]));
    }

    let f = |x: [f64; 2]| problem.objective(x);
    let f_floor = 1e-20 * stats.mean_dt * stats.mean_dt * weight;
    let (mut x, step) = problem.start();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut restarts = 0;
    let mut best_f = f64::INFINITY;
    loop {
        let budget = opts.max_iterations - iterations;
        let r = nelder_mead(&f, x, step, opts, f_floor, budget, &mut history);
        iterations += r.iterations;
        debug!("nelder-mead pass {restarts}: f = {:e} after {} iterations", r.f, r.iterations);
        let improved = r.f < best_f * (1.0 - 1e-12);
        x = r.x;
        best_f = best_f.min(r.f);
        if !r.converged {
            let best = problem.model(x)?;
            return Err(FitError::NonConvergence { best: Box::new(best), objective: r.f, iterations });
        }
        // a fresh simplex around the optimum guards against collapse onto a line
        if r.f <= f_floor || !improved || restarts >= opts.restarts {
            break;
        }
        restarts += 1;
    }
    let model = problem.model(x)?;
    Ok(report(model, best_f, iterations, restarts, history))
}
