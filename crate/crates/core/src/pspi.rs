//! Prkachin-Solomon Pain Intensity.
//!
//! PSPI sums brow lowering (AU4), the stronger of the two orbital-tightening
//! units (AU6, AU7), the stronger of nose wrinkle / lip raise (AU9, AU10) and
//! the binary eye-closure unit AU43. Because AU43 is binary, the formula
//! tops out at 16 even though PSPI is conventionally quoted on a 0-15 scale,
//! so the regression target scaling takes the denominator as a parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest value the PSPI formula can produce.
pub const PSPI_FORMULA_MAX: u8 = 16;

/// Default denominator for [`scale_pspi`].
pub const DEFAULT_MAX_PSPI: u8 = 16;

/// Per-frame action-unit intensities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuVector {
    pub au4: u8,
    pub au6: u8,
    pub au7: u8,
    pub au9: u8,
    pub au10: u8,
    pub au43: u8,
}

impl AuVector {
    /// Builds a vector, checking that graded units lie in 0..=5 and AU43 in 0..=1.
    pub fn new(au4: u8, au6: u8, au7: u8, au9: u8, au10: u8, au43: u8) -> Result<Self> {
        let v = AuVector {
            au4,
            au6,
            au7,
            au9,
            au10,
            au43,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("au4", self.au4),
            ("au6", self.au6),
            ("au7", self.au7),
            ("au9", self.au9),
            ("au10", self.au10),
        ] {
            if value > 5 {
                return Err(Error::invalid(format!("{name} = {value} outside [0, 5]")));
            }
        }
        if self.au43 > 1 {
            return Err(Error::invalid(format!("au43 = {} must be 0 or 1", self.au43)));
        }
        Ok(())
    }
}

pub fn compute_pspi(au: &AuVector) -> u8 {
    au.au4 + au.au6.max(au.au7) + au.au9.max(au.au10) + au.au43
}

/// Maps an integer PSPI onto [0, 1] by dividing by `max_pspi` (15 or 16).
pub fn scale_pspi(s: u8, max_pspi: u8) -> Result<f64> {
    if !(15..=16).contains(&max_pspi) {
        return Err(Error::invalid(format!(
            "max_pspi must be 15 or 16, got {max_pspi}"
        )));
    }
    if s > max_pspi {
        return Err(Error::invalid(format!(
            "PSPI {s} exceeds max_pspi {max_pspi}"
        )));
    }
    Ok(f64::from(s) / f64::from(max_pspi))
}
