//! Physical constants of the model.
//!
//! Only the length scale `sigma2`, the time unit `tau` and the action
//! constant `eta` are stored. The mass is always derived through
//! `m = eta * tau / sigma2`, so the binding relation holds by construction.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    sigma2: f64,
    tau: f64,
    eta: f64,
}

/// Relative tolerance used when all four constants are supplied and the
/// relation `m * sigma2 = eta * tau` has to be checked.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-12;

fn check_positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::config(format!("{name} must be finite and strictly positive, got {value}")))
    }
}

impl PhysicalConstants {
    pub fn new(sigma2: f64, tau: f64, eta: f64) -> Result<Self> {
        Ok(Self {
            sigma2: check_positive("sigma2", sigma2)?,
            tau: check_positive("tau", tau)?,
            eta: check_positive("eta", eta)?,
        })
    }

    /// Natural units: `eta = tau = sigma2 = 1`, hence `m = 1`.
    pub fn natural() -> Self {
        Self { sigma2: 1.0, tau: 1.0, eta: 1.0 }
    }

    /// Builds constants from any subset of the four values.
    ///
    /// Missing values default to 1, except for one that is derived from the
    /// binding relation: the mass if it was not given, otherwise `sigma2`,
    /// then `tau`, then `eta`. When all four are given they must satisfy
    /// `m * sigma2 = eta * tau` to [`CONSISTENCY_TOLERANCE`].
    pub fn resolve(
        sigma2: Option<f64>,
        tau: Option<f64>,
        eta: Option<f64>,
        mass: Option<f64>,
    ) -> Result<Self> {
        for (name, v) in [("sigma2", sigma2), ("tau", tau), ("eta", eta), ("mass", mass)] {
            if let Some(v) = v {
                check_positive(name, v)?;
            }
        }
        match (sigma2, tau, eta, mass) {
            (Some(s), Some(t), Some(e), Some(m)) => {
                let lhs = m * s;
                let rhs = e * t;
                if ((lhs - rhs) / rhs).abs() > CONSISTENCY_TOLERANCE {
                    return Err(Error::config(format!(
                        "inconsistent constants: m*sigma2 = {lhs} but eta*tau = {rhs} \
                         (the relation m = eta*tau/sigma2 must hold)"
                    )));
                }
                Self::new(s, t, e)
            }
            (s, t, e, None) => Self::new(s.unwrap_or(1.0), t.unwrap_or(1.0), e.unwrap_or(1.0)),
            (None, t, e, Some(m)) => {
                let (t, e) = (t.unwrap_or(1.0), e.unwrap_or(1.0));
                Self::new(e * t / m, t, e)
            }
            (Some(s), None, e, Some(m)) => {
                let e = e.unwrap_or(1.0);
                Self::new(s, m * s / e, e)
            }
            (Some(s), Some(t), None, Some(m)) => Self::new(s, t, m * s / t),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mass(&self) -> f64 {
        self.eta * self.tau / self.sigma2
    }

    /// `sigma2 / tau`, which equals `eta / m`. Sets both the drift scale
    /// and the Wiener variance per unit time.
    pub fn diffusion(&self) -> f64 {
        self.sigma2 / self.tau
    }

    /// Same `eta` and `tau`, mass multiplied by `factor` (so `sigma2` is divided by it).
    pub fn with_mass_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma2 / check_positive("mass factor", factor)?, self.tau, self.eta)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}
