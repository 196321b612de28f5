//! Parametric activity functions θ(t): the expected inter-trade interval at
//! session time `t`.
//!
//! Two families are supported, plus the flat degenerate model:
//!
//! ```text
//! quadratic  θ(t) = a (t - t1)(t - t2)
//! rational   θ(t) = 1 / (a ((t - p)^2 + q))
//! constant   θ(t) = <t>
//! ```
//!
//! The scale `a` is never free: it is fixed by requiring the deformed clock
//! `τ(t) = <t> ∫_0^t ds / θ(s)` to end the session at `τ(T) = T`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{fmt_f64, parse_f64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThetaError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("t = {t} outside session [0, {length}]")]
    OutOfDomain { t: f64, length: f64 },
    #[error("scale a = {a} violates the mean-interval constraint (relative error {rel_err:e})")]
    ConstraintViolated { a: f64, rel_err: f64 },
    #[error("bad model record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    Quadratic,
    Rational,
    Constant,
}

impl fmt::Display for ThetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaKind::Quadratic => "quadratic",
            ThetaKind::Rational => "rational",
            ThetaKind::Constant => "constant",
        })
    }
}

impl FromStr for ThetaKind {
    type Err = ThetaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(ThetaKind::Quadratic),
            "rational" => Ok(ThetaKind::Rational),
            "constant" => Ok(ThetaKind::Constant),
            other => Err(ThetaError::Record(format!("unknown kind {other:?}"))),
        }
    }
}

/// Free shape parameters of θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Roots of the parabola, seconds.
    Quadratic { t1: f64, t2: f64 },
    /// Location of the activity minimum (s) and its width parameter (s²).
    Rational { p: f64, q: f64 },
    Constant,
}

impl Shape {
    pub fn kind(&self) -> ThetaKind {
        match self {
            Shape::Quadratic { .. } => ThetaKind::Quadratic,
            Shape::Rational { .. } => ThetaKind::Rational,
            Shape::Constant => ThetaKind::Constant,
        }
    }

    fn check(&self, length: f64) -> Result<(), ThetaError> {
        match *self {
            Shape::Quadratic { t1, t2 } => {
                if !(t1.is_finite() && t2.is_finite()) || t1 >= t2 {
                    return Err(ThetaError::InvalidShape(format!("need finite t1 < t2, got ({t1}, {t2})")));
                }
                if (0.0..=length).contains(&t1) || (0.0..=length).contains(&t2) {
                    return Err(ThetaError::InvalidShape(format!(
                        "root inside session: t1 = {t1}, t2 = {t2}, T = {length}"
                    )));
                }
                Ok(())
            }
            Shape::Rational { p, q } => {
                if !(p.is_finite() && q.is_finite() && q > 0.0) {
                    return Err(ThetaError::InvalidShape(format!("need finite p and q > 0, got ({p}, {q})")));
                }
                Ok(())
            }
            Shape::Constant => Ok(()),
        }
    }
}

/// Scale `a` that makes `<t> ∫_0^T ds/θ(s) = T`.
pub fn solve_a(shape: &Shape, mean_dt: f64, length: f64) -> Result<f64, ThetaError> {
    if !(mean_dt > 0.0 && mean_dt.is_finite()) {
        return Err(ThetaError::InvalidShape(format!("mean_dt must be > 0, got {mean_dt}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(ThetaError::InvalidShape(format!("T must be > 0, got {length}")));
    }
    shape.check(length)?;
    let a = match *shape {
        Shape::Quadratic { t1, t2 } => {
            // ln(((T - t2) t1) / ((T - t1) t2)) split into log1p terms
            let log_ratio = (-length / t2).ln_1p() - (-length / t1).ln_1p();
            mean_dt * log_ratio / (length * (t2 - t1))
        }
        Shape::Rational { p, q } => {
            1.0 / (mean_dt * (length * length / 3.0 - p * length + p * p + q))
        }
        Shape::Constant => 1.0 / mean_dt,
    };
    if !(a.is_finite() && a != 0.0) {
        return Err(ThetaError::InvalidShape(format!("degenerate scale a = {a}")));
    }
    Ok(a)
}

/// A validated activity function: θ > 0 on `[0, T]` and `τ(T) = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaModel {
    shape: Shape,
    a: f64,
    length: f64,
    mean_dt: f64,
}

impl ThetaModel {
    /// Builds the model with `a` solved from the mean-interval constraint.
    pub fn new(shape: Shape, mean_dt: f64, length: f64) -> Result<Self, ThetaError> {
        let a = solve_a(&shape, mean_dt, length)?;
        let m = Self { shape, a, length, mean_dt };
        m.check_positive()?;
        Ok(m)
    }

    pub fn constant(mean_dt: f64, length: f64) -> Result<Self, ThetaError> {
        Self::new(Shape::Constant, mean_dt, length)
    }

    /// Rebuilds a model from stored parts. `a` must agree with the
    /// constraint to 1e-12 relative.
    pub fn from_parts(shape: Shape, a: f64, length: f64, mean_dt: f64) -> Result<Self, ThetaError> {
        let solved = solve_a(&shape, mean_dt, length)?;
        let rel_err = ((a - solved) / solved).abs();
        if !(rel_err <= 1e-12) {
            return Err(ThetaError::ConstraintViolated { a, rel_err });
        }
        let m = Self { shape, a, length, mean_dt };
        m.check_positive()?;
        Ok(m)
    }

    fn check_positive(&self) -> Result<(), ThetaError> {
        let mut probes = vec![0.0, self.length];
        if let Some(v) = self.vertex() {
            if (0.0..=self.length).contains(&v) {
                probes.push(v);
            }
        }
        for t in probes {
            let th = self.theta(t);
            if !(th > 0.0 && th.is_finite()) {
                return Err(ThetaError::InvalidShape(format!("θ({t}) = {th} is not positive")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ThetaKind {
        self.shape.kind()
    }
    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    /// Session length `T`.
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn mean_dt(&self) -> f64 {
        self.mean_dt
    }

    /// θ(t) with a domain check.
    pub fn eval(&self, t: f64) -> Result<f64, ThetaError> {
        if !(0.0..=self.length).contains(&t) {
            return Err(ThetaError::OutOfDomain { t, length: self.length });
        }
        Ok(self.theta(t))
    }

    /// θ(t) without a domain check.
    pub fn theta(&self, t: f64) -> f64 {
        match self.shape {
            Shape::Quadratic { t1, t2 } => self.a * (t - t1) * (t - t2),
            Shape::Rational { p, q } => 1.0 / (self.a * ((t - p) * (t - p) + q)),
            Shape::Constant => self.mean_dt,
        }
    }

    /// Trade intensity 1/θ(t).
    pub fn intensity(&self, t: f64) -> f64 {
        match self.shape {
            Shape::Rational { p, q } => self.a * ((t - p) * (t - p) + q),
            _ => 1.0 / self.theta(t),
        }
    }

    /// Extremum of θ (maximum for the session-bracketing parabola and for
    /// the rational family). `None` for the constant model.
    pub fn vertex(&self) -> Option<f64> {
        match self.shape {
            Shape::Quadratic { t1, t2 } => Some(0.5 * (t1 + t2)),
            Shape::Rational { p, .. } => Some(p),
            Shape::Constant => None,
        }
    }

    /// Largest intensity on `[0, T]`. Both families are unimodal in θ, so
    /// the extremes sit at the endpoints or the vertex.
    pub fn max_intensity(&self) -> f64 {
        let mut m = self.intensity(0.0).max(self.intensity(self.length));
        if let Some(v) = self.vertex() {
            if (0.0..=self.length).contains(&v) {
                m = m.max(self.intensity(v));
            }
        }
        m
    }

    /// `key = value` text record; floats carry 17 significant digits so
    /// the record reads back bit-identically.
    pub fn to_record(&self) -> String {
        let mut s = String::from("# theta model\n");
        s.push_str(&format!("kind = {}\n", self.kind()));
        match self.shape {
            Shape::Quadratic { t1, t2 } => {
                s.push_str(&format!("t1 = {}\nt2 = {}\n", fmt_f64(t1), fmt_f64(t2)));
            }
            Shape::Rational { p, q } => {
                s.push_str(&format!("p = {}\nq = {}\n", fmt_f64(p), fmt_f64(q)));
            }
            Shape::Constant => {}
        }
        s.push_str(&format!(
            "a = {}\nT = {}\nmean_dt = {}\n",
            fmt_f64(self.a),
            fmt_f64(self.length),
            fmt_f64(self.mean_dt)
        ));
        s
    }

    /// Reads a record written by [`ThetaModel::to_record`]. Without an `a`
    /// line the scale is solved from the constraint.
    pub fn from_record(text: &str) -> Result<Self, ThetaError> {
        let mut kv = std::collections::HashMap::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ThetaError::Record(format!("expected key = value: {line}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<f64, ThetaError> {
            let v = kv.get(k).ok_or_else(|| ThetaError::Record(format!("missing {k}")))?;
            parse_f64(v).ok_or_else(|| ThetaError::Record(format!("bad number for {k}: {v:?}")))
        };
        let kind: ThetaKind = kv
            .get("kind")
            .ok_or_else(|| ThetaError::Record("missing kind".into()))?
            .parse()?;
        let shape = match kind {
            ThetaKind::Quadratic => Shape::Quadratic { t1: get("t1")?, t2: get("t2")? },
            ThetaKind::Rational => Shape::Rational { p: get("p")?, q: get("q")? },
            ThetaKind::Constant => Shape::Constant,
        };
        if kv.contains_key("a") {
            Self::from_parts(shape, get("a")?, get("T")?, get("mean_dt")?)
        } else {
            Self::new(shape, get("mean_dt")?, get("T")?)
        }
    }
}
