//! The deseasonalizing clock τ(t) = <t> ∫_0^t ds / θ(s).
//!
//! τ maps `[0, T]` onto itself, is strictly increasing and stretches the
//! time line where trading is dense. Both parametric families have closed
//! forms; [`WarpFn::tau_by_quadrature`] is the generic numeric path.

use thiserror::Error;

use crate::ingest::{Day, ReturnPoint, Tick};
use crate::numeric::{brent_root, integrate, NumericError};
use crate::theta::{Shape, ThetaModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("time {t} outside session [0, {length}]")]
    OutOfDomain { t: f64, length: f64 },
    #[error("lag window [{t}, {t} + {dt}] outside session [0, {length}]")]
    LagOutOfDomain { t: f64, dt: f64, length: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Relative slack on the session edge for window arithmetic such as
/// `(T - dt) + dt`.
const EDGE_SLACK: f64 = 1e-12;

pub const QUAD_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpFn {
    model: ThetaModel,
}

impl WarpFn {
    pub fn new(model: ThetaModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &ThetaModel {
        &self.model
    }

    pub fn length(&self) -> f64 {
        self.model.length()
    }

    fn check(&self, t: f64) -> Result<(), WarpError> {
        if (0.0..=self.length()).contains(&t) {
            Ok(())
        } else {
            Err(WarpError::OutOfDomain { t, length: self.length() })
        }
    }

    pub fn tau(&self, t: f64) -> Result<f64, WarpError> {
        self.check(t)?;
        // keep warped times inside the session despite rounding at t = T
        Ok(self.tau_unchecked(t).min(self.length()))
    }

    /// Closed-form τ(t); exactly 0 at t = 0.
    pub fn tau_unchecked(&self, t: f64) -> f64 {
        let m = &self.model;
        match m.shape() {
            Shape::Quadratic { t1, t2 } => {
                let log_ratio = (-t / t2).ln_1p() - (-t / t1).ln_1p();
                m.mean_dt() / (m.a() * (t2 - t1)) * log_ratio
            }
            Shape::Rational { p, q } => {
                // <t> a ((t-p)^3/3 + q(t-p) + p^3/3 + qp), expanded in powers of t
                m.mean_dt() * m.a() * t * ((p * p + q) + t * (-p + t / 3.0))
            }
            Shape::Constant => t,
        }
    }

    /// dτ/dt = <t>/θ(t).
    pub fn rate(&self, t: f64) -> f64 {
        self.model.mean_dt() * self.model.intensity(t)
    }

    /// τ(t) by adaptive quadrature of `<t>/θ`.
    pub fn tau_by_quadrature(&self, t: f64) -> Result<f64, WarpError> {
        self.check(t)?;
        Ok(integrate(|s| self.rate(s), 0.0, t, QUAD_REL_TOL, 0.0)?)
    }

    /// The `t` with τ(t) = `tau_val`, to within 1e-9·T in τ.
    pub fn tau_inverse(&self, tau_val: f64) -> Result<f64, WarpError> {
        self.check(tau_val)?;
        let length = self.length();
        if tau_val == 0.0 {
            return Ok(0.0);
        }
        if let Shape::Constant = self.model.shape() {
            return Ok(tau_val);
        }
        let f = |t: f64| self.tau_unchecked(t) - tau_val;
        let (f_lo, f_hi) = (f(0.0), f(length));
        // τ(T) may miss T by an ulp or two
        if f_hi <= 0.0 {
            return Ok(length);
        }
        if f_lo >= 0.0 {
            return Ok(0.0);
        }
        Ok(brent_root(f, 0.0, length, 1e-13 * length, 200)?)
    }

    /// Δτ(t, dt) = τ(t + dt) - τ(t), evaluated without cancellation.
    pub fn delta_tau(&self, t: f64, dt: f64) -> Result<f64, WarpError> {
        let length = self.length();
        let slack = EDGE_SLACK * length;
        if !(t >= 0.0 && dt >= 0.0 && t + dt <= length + slack) {
            return Err(WarpError::LagOutOfDomain { t, dt, length });
        }
        Ok(self.delta_tau_unchecked(t, dt))
    }

    pub fn delta_tau_unchecked(&self, t: f64, dt: f64) -> f64 {
        let m = &self.model;
        match m.shape() {
            Shape::Quadratic { t1, t2 } => {
                let log_ratio = (dt / (t - t2)).ln_1p() - (dt / (t - t1)).ln_1p();
                m.mean_dt() / (m.a() * (t2 - t1)) * log_ratio
            }
            Shape::Rational { p, q } => {
                let u = t - p;
                m.mean_dt() * m.a() * dt * (u * u + u * dt + dt * dt / 3.0 + q)
            }
            Shape::Constant => dt,
        }
    }

    /// Replaces every tick time by τ(t). Counts, order and the session
    /// span are preserved.
    pub fn warp_ticks(&self, days: &[Day]) -> Result<Vec<Day>, WarpError> {
        days.iter()
            .map(|day| {
                let ticks = day
                    .ticks
                    .iter()
                    .map(|tick| Ok(Tick { t: self.tau(tick.t)?, ..*tick }))
                    .collect::<Result<Vec<_>, WarpError>>()?;
                Ok(Day { date: day.date, ticks })
            })
            .collect()
    }

    pub fn warp_points(&self, points: &[ReturnPoint]) -> Result<Vec<ReturnPoint>, WarpError> {
        points.iter().map(|p| Ok(ReturnPoint { t: self.tau(p.t)?, ..*p })).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const T: f64 = 25200.0;

    fn kghm() -> WarpFn {
        WarpFn::new(ThetaModel::new(Shape::Quadratic { t1: -1640.65, t2: 29999.47 }, 24.465, T).unwrap())
    }
    fn pkobp() -> WarpFn {
        WarpFn::new(ThetaModel::new(Shape::Rational { p: 14301.01, q: 1.56e8 }, 27.292, T).unwrap())
    }

    #[test]
    fn endpoints() {
        for w in [kghm(), pkobp(), WarpFn::new(ThetaModel::constant(20.0, T).unwrap())] {
            assert_eq!(w.tau(0.0).unwrap(), 0.0);
            assert!((w.tau(T).unwrap() - T).abs() <= 1e-9 * T);
            assert_eq!(w.tau_inverse(0.0).unwrap(), 0.0);
            assert!((w.tau_inverse(T).unwrap() - T).abs() <= 1e-8 * T);
        }
    }

    #[test]
    fn constant_theta_is_identity() {
        let w = WarpFn::new(ThetaModel::constant(20.0, T).unwrap());
        for t in [0.0, 1.5, 1000.0, T] {
            assert_eq!(w.tau(t).unwrap(), t);
            assert_eq!(w.tau_inverse(t).unwrap(), t);
        }
        assert_eq!(w.delta_tau(100.0, 37.0).unwrap(), 37.0);
    }

    #[test]
    fn kghm_runs_ahead_mid_session() {
        let w = kghm();
        let mid = w.tau(T / 2.0).unwrap();
        assert!(mid > T / 2.0);
        let quad = w.tau_by_quadrature(T / 2.0).unwrap();
        assert_relative_eq!(mid, quad, max_relative = 1e-9);
    }

    #[test]
    fn delta_tau_matches_difference() {
        for w in [kghm(), pkobp()] {
            for (t, dt) in [(0.0, 600.0), (12000.0, 600.0), (T - 600.0, 600.0), (5000.0, 1e-3)] {
                let direct = w.delta_tau(t, dt).unwrap();
                let diff = w.tau_unchecked(t + dt) - w.tau_unchecked(t);
                assert_relative_eq!(direct, diff, max_relative = 1e-7);
                assert!(direct > 0.0);
            }
            assert_eq!(w.delta_tau(100.0, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn kghm_delta_tau_smallest_mid_session() {
        let w = kghm();
        let dt = 600.0;
        let samples: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let t = (T - dt) * i as f64 / 100.0;
                (t, w.delta_tau(t, dt).unwrap())
            })
            .collect();
        let (t_min, _) = samples.iter().cloned().fold((0.0, f64::INFINITY), |acc, s| if s.1 < acc.1 { s } else { acc });
        // θ peaks at (t1 + t2)/2, so the smallest Δτ window is centred there
        let expected = 0.5 * (-1640.65 + 29999.47) - dt / 2.0;
        assert!((t_min - expected).abs() <= (T - dt) / 100.0);
        for &(t, d) in samples.iter().step_by(10) {
            let quad = integrate(|s| w.rate(s), t, t + dt, 1e-13, 0.0).unwrap();
            assert_relative_eq!(d, quad, max_relative = 1e-10);
        }
    }

    #[test]
    fn domain_errors() {
        let w = kghm();
        assert!(w.tau(-1.0).is_err());
        assert!(w.tau(T + 1.0).is_err());
        assert!(w.tau_inverse(T * 1.01).is_err());
        assert!(w.delta_tau(T - 10.0, 20.0).is_err());
        assert!(w.delta_tau(10.0, -1.0).is_err());
    }

    #[test]
    fn warp_preserves_counts_and_order() {
        use chrono::NaiveDate;
        let w = kghm();
        let day = Day {
            date: NaiveDate::from_ymd_opt(2005, 1, 3).unwrap(),
            ticks: [0.0, 10.0, 10.0, 5000.0, T]
                .iter()
                .map(|&t| Tick { t, price: 1.0, volume: 1 })
                .collect(),
        };
        let warped = w.warp_ticks(std::slice::from_ref(&day)).unwrap();
        assert_eq!(warped[0].ticks.len(), day.ticks.len());
        let ts: Vec<f64> = warped[0].ticks.iter().map(|t| t.t).collect();
        assert!(ts.windows(2).all(|p| p[1] >= p[0]));
        assert!(ts[2] == ts[1] && ts[3] > ts[2]);
        assert_eq!(ts[0], 0.0);
        assert!((ts[4] - T).abs() < 1e-9 * T);
    }
}
