//! Smooth losses `f(z; y)` with derivative, convex conjugate and the
//! Lipschitz constant of the derivative.
//!
//! | kind            | `f(z; y)`              | `f*(θ; y)` (with `s = θy`)          | `L`   |
//! |-----------------|------------------------|-------------------------------------|-------|
//! | squared         | `½(z − y)²`            | `θ²/2 + θy`                         | 1     |
//! | logistic        | `log(1 + e^{−yz})`     | `(−s)log(−s) + (1+s)log(1+s)`, `s ∈ [−1, 0]` | 1/4 |
//! | squared hinge   | `max(0, 1 − yz)²`      | `s + s²/4`, `s ≤ 0`                 | 2     |
//!
//! Outside its domain the conjugate is `+∞`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Squared,
    Logistic,
    SquaredHinge,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
            LossKind::SquaredHinge => "squared-hinge",
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::Squared)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            "squared-hinge" | "squared_hinge" => Ok(LossKind::SquaredHinge),
            other => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    kind: LossKind,
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LossModel {
    pub fn new(kind: LossKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Lipschitz constant of `z ↦ f'(z; y)`.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Logistic => 0.25,
            LossKind::SquaredHinge => 2.0,
        }
    }

    pub fn check_label(&self, y: f64) -> Result<()> {
        if self.kind.is_classification() && y != 1.0 && y != -1.0 {
            return Err(Error::InvalidLabel {
                label: y,
                loss: self.kind.name(),
            });
        }
        Ok(())
    }

    pub fn validate_labels(&self, labels: &[f64]) -> Result<()> {
        labels.iter().try_for_each(|&y| self.check_label(y))
    }

    pub fn value(&self, z: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.f(z, y))
    }

    pub fn deriv(&self, z: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.d(z, y))
    }

    /// `f(z; y)` for a label already known to be admissible.
    #[inline]
    pub fn f(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 0.5 * (z - y) * (z - y),
            LossKind::Logistic => softplus(-y * z),
            LossKind::SquaredHinge => {
                let h = (1.0 - y * z).max(0.0);
                h * h
            }
        }
    }

    /// `f'(z; y)` for a label already known to be admissible.
    #[inline]
    pub fn d(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => z - y,
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::SquaredHinge => -2.0 * y * (1.0 - y * z).max(0.0),
        }
    }

    /// Convex conjugate `f*_y(θ) = sup_z θz − f(z; y)`; `+∞` outside the
    /// domain. Classification kinds return NaN for labels other than ±1.
    pub fn conjugate(&self, theta: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 0.5 * theta * theta + theta * y,
            LossKind::Logistic => {
                if self.check_label(y).is_err() {
                    return f64::NAN;
                }
                let s = theta * y;
                if !(-1.0..=0.0).contains(&s) {
                    return f64::INFINITY;
                }
                xlogx(-s) + xlogx(1.0 + s)
            }
            LossKind::SquaredHinge => {
                if self.check_label(y).is_err() {
                    return f64::NAN;
                }
                let s = theta * y;
                if s > 0.0 {
                    return f64::INFINITY;
                }
                s + 0.25 * s * s
            }
        }
    }
}
