//! Numerical primitives: adaptive Gauss–Kronrod quadrature and bracketed
//! root finding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge after {0} iterations")]
    RootNoConvergence(usize),
    #[error("quadrature reached {intervals} subintervals (estimate {estimate}, error {error})")]
    QuadratureLimit { intervals: usize, estimate: f64, error: f64 },
    #[error("non-finite integrand value at x = {0}")]
    NonFinite(f64),
}

// Kronrod 15-point abscissae and weights; the embedded 7-point Gauss rule
// uses the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment, NumericError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(NumericError::NonFinite(center));
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let (xl, xr) = (center - dx, center + dx);
        let (fl, fr) = (f(xl), f(xr));
        if !fl.is_finite() {
            return Err(NumericError::NonFinite(xl));
        }
        if !fr.is_finite() {
            return Err(NumericError::NonFinite(xr));
        }
        kronrod += w * (fl + fr);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (fl + fr);
        }
    }
    Ok(Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Integrates `f` over `[lo, hi]` by globally adaptive 15-point
/// Gauss–Kronrod subdivision until the summed error estimate falls below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, NumericError> {
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return integrate(f, hi, lo, rel_tol, abs_tol).map(|v| -v);
    }
    let first = gauss_kronrod(&f, lo, hi)?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    // The |K - G| estimate never drops below rounding noise; stop there.
    let noise_floor = |total: f64| 64.0 * f64::EPSILON * total.abs();
    while total_err > abs_tol.max(rel_tol * total.abs()).max(noise_floor(total)) {
        if heap.len() >= MAX_INTERVALS {
            return Err(NumericError::QuadratureLimit {
                intervals: heap.len(),
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // interval cannot be split further in floating point
            heap.push(Segment { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let left = gauss_kronrod(&f, worst.lo, mid)?;
        let right = gauss_kronrod(&f, mid, worst.hi)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the drift accumulated by incremental updates
    Ok(heap.iter().map(|s| s.value).sum())
}

/// Brent's bracketed root finder (bisection safeguarded by inverse
/// quadratic interpolation and secant steps).
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<f64, NumericError> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericError::NotBracketed { lo, hi, f_lo: fa, f_hi: fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(NumericError::RootNoConvergence(max_iter))
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (ll, lh) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..n)
                .map(|i| (ll + (lh - ll) * i as f64 / (n - 1) as f64).exp())
                .collect();
            v[0] = lo;
            v[n - 1] = hi;
            v
        }
    }
}

/// Sample standard deviation with the `n - 1` denominator.
pub(crate) fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert_relative_eq!(v, 13.5, max_relative = 1e-14);
    }

    #[test]
    fn integrates_peaked_function() {
        // ∫_0^1 1/(1e-4 + x^2) dx = atan(100)/0.01
        let v = integrate(|x| 1.0 / (1e-4 + x * x), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(v, 100f64.atan() / 0.01, max_relative = 1e-11);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let v = integrate(f64::exp, 1.0, 0.0, 1e-13, 0.0).unwrap();
        assert_relative_eq!(v, 1.0 - std::f64::consts::E, max_relative = 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-12, 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert_relative_eq!(r, 2f64.cbrt(), max_relative = 1e-13);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        let r = brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100);
        assert!(matches!(r, Err(NumericError::NotBracketed { .. })));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(2.0, 2000.0, 4);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 2.0);
        assert_eq!(g[3], 2000.0);
        assert_relative_eq!(g[1], 20.0, max_relative = 1e-12);
    }
}
