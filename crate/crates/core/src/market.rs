use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Interest rate `r > 0` and dividend yield `delta >= 0`, both continuously
/// compounded (1/time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub delta: f64,
}

impl MarketParams {
    pub fn new(r: f64, delta: f64) -> Result<Self> {
        let m = Self { r, delta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("r", self.r)?;
        ensure_finite("delta", self.delta)?;
        if self.r <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "r must be > 0, got {}",
                self.r
            )));
        }
        if self.delta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}
