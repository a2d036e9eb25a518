use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the kicked dimer (units with hbar = 1).
///
/// `c` is the raw kick strength. Most callers think in terms of
/// `c_scaled = c * (N + 1)`, see [`SystemParams::with_c_scaled`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub epsilon: f64,
    pub v: f64,
    pub c: f64,
    pub tau: f64,
    pub n: usize,
}

impl SystemParams {
    pub fn new(epsilon: f64, v: f64, c: f64, tau: f64, n: usize) -> Result<Self> {
        let p = SystemParams {
            epsilon,
            v,
            c,
            tau,
            n,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric trap with `c = c_scaled / (N + 1)`.
    pub fn with_c_scaled(n: usize, c_scaled: f64, v: f64, tau: f64) -> Result<Self> {
        Self::new(0.0, v, c_scaled / (n as f64 + 1.0), tau, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.n < 1 {
            return Err(Error::invalid("n", "particle number must be >= 1"));
        }
        for (name, x) in [("epsilon", self.epsilon), ("v", self.v), ("c", self.c)] {
            if !x.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Angular momentum quantum number N/2.
    pub fn ell(&self) -> f64 {
        self.n as f64 / 2.0
    }

    /// Mean-field Bloch vector length (N+1)/2.
    pub fn s(&self) -> f64 {
        (self.n as f64 + 1.0) / 2.0
    }

    /// Rotation frequency of the free evolution.
    pub fn omega(&self) -> f64 {
        self.epsilon.hypot(self.v)
    }

    pub fn c_scaled(&self) -> f64 {
        self.c * (self.n as f64 + 1.0)
    }

    pub fn with_n(&self, n: usize) -> Self {
        SystemParams { n, ..*self }
    }

    pub fn with_c(&self, c: f64) -> Self {
        SystemParams { c, ..*self }
    }

    pub fn with_v(&self, v: f64) -> Self {
        SystemParams { v, ..*self }
    }

    /// Same parameters with the kick strength given in scaled units for the current N.
    pub fn at_c_scaled(&self, c_scaled: f64) -> Self {
        self.with_c(c_scaled / (self.n as f64 + 1.0))
    }

    /// The Floquet operator commutes with the pi-rotation about x only for a symmetric trap.
    pub fn is_symmetric(&self) -> bool {
        self.epsilon == 0.0
    }
}
