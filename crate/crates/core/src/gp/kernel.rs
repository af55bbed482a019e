use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential-sine covariance
/// `σ_f² · exp(-2 sin²(π |t - t'| / p) / l²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicKernel {
    /// Seconds.
    #[serde(rename = "p")]
    pub period: f64,
    #[serde(rename = "l")]
    pub length_scale: f64,
    /// N².
    pub signal_variance: f64,
}

impl PeriodicKernel {
    pub fn new(period: f64, length_scale: f64, signal_variance: f64) -> Result<Self> {
        let k = Self {
            period,
            length_scale,
            signal_variance,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.period) && ok(self.length_scale) && ok(self.signal_variance) {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid kernel parameters {self:?}")))
        }
    }

    pub fn eval(&self, t: f64, t_prime: f64) -> f64 {
        let s = (PI * (t - t_prime).abs() / self.period).sin();
        self.signal_variance * (-2.0 * s * s / (self.length_scale * self.length_scale)).exp()
    }

    /// Covariance and its derivatives with respect to
    /// `(ln p, ln l, ln σ_f²)` at separation `tau`.
    pub(crate) fn eval_with_log_grad(&self, tau: f64) -> (f64, [f64; 3]) {
        let l2 = self.length_scale * self.length_scale;
        let arg = PI * tau.abs() / self.period;
        let s = arg.sin();
        let k = self.signal_variance * (-2.0 * s * s / l2).exp();
        let d_log_p = k * 2.0 * arg * (2.0 * arg).sin() / l2;
        let d_log_l = k * 4.0 * s * s / l2;
        (k, [d_log_p, d_log_l, k])
    }

    pub(crate) fn to_log(self) -> [f64; 3] {
        [self.period.ln(), self.length_scale.ln(), self.signal_variance.ln()]
    }

    pub(crate) fn from_log(x: &[f64]) -> Self {
        Self {
            period: x[0].exp(),
            length_scale: x[1].exp(),
            signal_variance: x[2].exp(),
        }
    }
}

/// `k(t, t')` for a periodic kernel.
pub fn kernel_eval(k: &PeriodicKernel, t: f64, t_prime: f64) -> f64 {
    k.eval(t, t_prime)
}
