//! Polynomially decaying stepsize and regularization-weight schedules.
//!
//! Both loops damp two sequences at once: the stepsize `step(k) =
//! step_coef/(k+offset)^step_exp` and the regularization weight `reg(k) =
//! reg_coef/(k+offset)^reg_exp`. Convergence requires the exponent pair to sit
//! inside an algorithm-specific admissible region, checked by
//! [`ScheduleParams::validate`].

use serde::{Deserialize, Serialize};

use crate::{Algorithm, Error, Result};

/// Parameters of the coupled stepsize/regularization schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// Stepsize numerator.
    pub step_coef: f64,
    /// Stepsize decay exponent (`a`).
    pub step_exp: f64,
    /// Regularization-weight numerator.
    pub reg_coef: f64,
    /// Regularization decay exponent (`b`), strictly below `step_exp`.
    pub reg_exp: f64,
    /// Iteration offset, at least 1; larger values tame early iterations.
    pub offset: f64,
    /// Which loop the schedule must be admissible for.
    pub mode: Algorithm,
}

/// One evaluated point of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    /// Stepsize at this iteration.
    pub step: f64,
    /// Regularization weight at this iteration.
    pub reg: f64,
    /// Relative one-step drop of the regularization weight,
    /// `1 − reg(k+1)/reg(k)`.
    pub reg_drop: f64,
}

impl ScheduleParams {
    /// Schedule with unit coefficients and the crate-default offset of 10.
    pub fn with_exponents(step_exp: f64, reg_exp: f64, mode: Algorithm) -> Self {
        Self { step_coef: 1.0, step_exp, reg_coef: 1.0, reg_exp, offset: 10.0, mode }
    }

    /// Stepsize at iteration `k`.
    pub fn step(&self, k: u64) -> f64 {
        self.step_coef / (k as f64 + self.offset).powf(self.step_exp)
    }

    /// Regularization weight at iteration `k`.
    pub fn reg(&self, k: u64) -> f64 {
        self.reg_coef / (k as f64 + self.offset).powf(self.reg_exp)
    }

    /// Relative drop of the regularization weight between `k` and `k+1`.
    ///
    /// Computed in the cancellation-free form
    /// `1 − ((k+offset)/(k+1+offset))^reg_exp`, which is valid because the
    /// weight is strictly decreasing.
    pub fn reg_drop(&self, k: u64) -> f64 {
        let base = (k as f64 + self.offset) / (k as f64 + 1.0 + self.offset);
        1.0 - base.powf(self.reg_exp)
    }

    /// All three schedule values at iteration `k`.
    pub fn at(&self, k: u64) -> SchedulePoint {
        SchedulePoint { step: self.step(k), reg: self.reg(k), reg_drop: self.reg_drop(k) }
    }

    /// Check admissibility for the configured mode, returning the full list of
    /// violated conditions (empty error never occurs: either `Ok` or every
    /// failed condition named).
    pub fn validate(&self) -> Result<()> {
        let issues = self.violations();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("schedule: {}", issues.join("; "))))
        }
    }

    /// Human-readable list of violated admissibility conditions; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let a = self.step_exp;
        let b = self.reg_exp;
        let mut issues = Vec::new();
        if !(self.step_coef > 0.0) || !self.step_coef.is_finite() {
            issues.push(format!("step_coef must be positive, got {}", self.step_coef));
        }
        if !(self.reg_coef > 0.0) || !self.reg_coef.is_finite() {
            issues.push(format!("reg_coef must be positive, got {}", self.reg_coef));
        }
        if !(self.offset >= 1.0) || !self.offset.is_finite() {
            issues.push(format!("offset must be at least 1, got {}", self.offset));
        }
        if !(b > 0.0) {
            issues.push(format!("exponents must satisfy reg_exp > 0, got {b}"));
        }
        if !(a > b) {
            issues.push(format!("exponents must satisfy step_exp > reg_exp, got ({a}, {b})"));
        }
        if !(a < 1.0) {
            issues.push(format!("step_exp must be below 1, got {a}"));
        }
        match self.mode {
            Algorithm::IrPushPull => {
                if !(a + b < 1.0) {
                    issues.push(format!("push-pull requires step_exp + reg_exp < 1, got {}", a + b));
                }
                if !(2.0 * a + 3.0 * b < 2.0) {
                    issues.push(format!(
                        "push-pull requires 2*step_exp + 3*reg_exp < 2, got {}",
                        2.0 * a + 3.0 * b
                    ));
                }
            }
            Algorithm::IrDsgt => {
                if !(3.0 * a + b < 2.0) {
                    issues.push(format!(
                        "gossip requires 3*step_exp + reg_exp < 2, got {}",
                        3.0 * a + b
                    ));
                }
            }
        }
        issues
    }
}
