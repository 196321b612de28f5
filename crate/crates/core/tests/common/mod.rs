//! Independent oracles shared by the integration tests. Nothing here calls
//! into the numeric code under test.
#![allow(dead_code)]

use chrono::NaiveDate;
use tickwarp::ingest::ReturnPoint;
use tickwarp::theta::{Shape, ThetaModel};
use tickwarp::warp::WarpFn;

pub const T: f64 = 25200.0;
pub const SEED: u64 = 20241017;

pub const KGHM_T1: f64 = -1640.65;
pub const KGHM_T2: f64 = 29999.47;
pub const KGHM_MEAN_DT: f64 = 24.465;
pub const PKOBP_P: f64 = 14301.01;
pub const PKOBP_Q: f64 = 1.56e8;
pub const PKOBP_MEAN_DT: f64 = 27.292;

pub fn kghm() -> ThetaModel {
    ThetaModel::new(Shape::Quadratic { t1: KGHM_T1, t2: KGHM_T2 }, KGHM_MEAN_DT, T).unwrap()
}

pub fn pkobp() -> ThetaModel {
    ThetaModel::new(Shape::Rational { p: PKOBP_P, q: PKOBP_Q }, PKOBP_MEAN_DT, T).unwrap()
}

pub fn warp(m: ThetaModel) -> WarpFn {
    WarpFn::new(m)
}

/// θ straight from its defining formula.
pub fn theta_direct(shape: Shape, a: f64, t: f64) -> f64 {
    match shape {
        Shape::Quadratic { t1, t2 } => a * (t - t1) * (t - t2),
        Shape::Rational { p, q } => 1.0 / (a * ((t - p) * (t - p) + q)),
        Shape::Constant => 1.0 / a,
    }
}

/// τ in the textbook form: the plain log ratio for the parabola, the
/// cubic for the rational family.
pub fn tau_textbook(m: &ThetaModel, t: f64) -> f64 {
    let (a, mdt) = (m.a(), m.mean_dt());
    match m.shape() {
        Shape::Quadratic { t1, t2 } => mdt / (a * (t2 - t1)) * (((t - t2) * t1) / ((t - t1) * t2)).ln(),
        Shape::Rational { p, q } => {
            mdt * a * ((t - p).powi(3) / 3.0 + q * (t - p) + p.powi(3) / 3.0 + q * p)
        }
        Shape::Constant => t,
    }
}

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // split first so that narrow features are not missed by the first estimate
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Bisection on a monotone function.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let f_lo = f(lo);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub struct BruteAcf {
    pub values: Vec<Option<f64>>,
    pub counts: Vec<u64>,
}

/// Every same-day pair `i < j` checked against every slot by direct
/// comparison with the slot edges. Sums are formed per day in pair order
/// and then added over days, like the estimator under test.
pub fn brute_force_acf(points: &[ReturnPoint], max_lag: f64, h: f64) -> BruteAcf {
    let n_slots = (max_lag / h).floor() as usize + 1;
    let mean = points.iter().map(|p| p.value).sum::<f64>() / points.len() as f64;
    let mut days: Vec<(NaiveDate, Vec<&ReturnPoint>)> = Vec::new();
    for p in points {
        match days.last_mut() {
            Some((d, v)) if *d == p.day => v.push(p),
            _ => days.push((p.day, vec![p])),
        }
    }
    let mut total = vec![0.0; n_slots];
    let mut counts = vec![0u64; n_slots];
    for (_, pts) in &days {
        let mut sums = vec![0.0; n_slots];
        for i in 0..pts.len() {
            let di = pts[i].value - mean;
            sums[0] += di * di;
            counts[0] += 1;
            for j in i + 1..pts.len() {
                let lag = pts[j].t - pts[i].t;
                for k in 1..n_slots {
                    if lag > (k as f64 - 0.5) * h && lag <= (k as f64 + 0.5) * h {
                        sums[k] += di * (pts[j].value - mean);
                        counts[k] += 1;
                    }
                }
            }
        }
        for k in 0..n_slots {
            total[k] += sums[k];
        }
    }
    let var = total[0] / counts[0] as f64;
    let values = (0..n_slots)
        .map(|k| (counts[k] > 0).then(|| (total[k] / counts[k] as f64) / var))
        .collect();
    BruteAcf { values, counts }
}

/// Kolmogorov–Smirnov distance between the sample and Exp(rate).
pub fn ks_exponential(sample: &[f64], rate: f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

pub fn date(day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 1, 1).unwrap() + chrono::Days::new(day as u64)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
