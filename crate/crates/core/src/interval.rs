//! Certified enclosures with exact rational endpoints.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// A certified enclosure `[lo, hi]` of a true value.
///
/// Endpoints are exact rationals, so all arithmetic here is outward-exact:
/// no rounding ever widens or narrows an interval beyond what the operands
/// imply. Measure-valued enclosures are nonnegative; centered correlations
/// reuse the same type with possibly negative endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureInterval {
    lo: BigRational,
    hi: BigRational,
}

impl MeasureInterval {
    pub fn new(lo: BigRational, hi: BigRational) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "interval endpoints out of order: {lo} > {hi}"
            )));
        }
        Ok(MeasureInterval { lo, hi })
    }

    pub fn point(v: BigRational) -> Self {
        MeasureInterval { lo: v.clone(), hi: v }
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, v: &BigRational) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    pub fn intersects(&self, other: &MeasureInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn add(&self, other: &MeasureInterval) -> MeasureInterval {
        MeasureInterval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    pub fn sub(&self, other: &MeasureInterval) -> MeasureInterval {
        MeasureInterval {
            lo: &self.lo - &other.hi,
            hi: &self.hi - &other.lo,
        }
    }

    /// Shifts both endpoints by an exact constant.
    pub fn offset(&self, c: &BigRational) -> MeasureInterval {
        MeasureInterval {
            lo: &self.lo + c,
            hi: &self.hi + c,
        }
    }

    /// Scales by an exact constant, flipping endpoints when negative.
    pub fn scale(&self, c: &BigRational) -> MeasureInterval {
        if c.is_negative() {
            MeasureInterval {
                lo: &self.hi * c,
                hi: &self.lo * c,
            }
        } else {
            MeasureInterval {
                lo: &self.lo * c,
                hi: &self.hi * c,
            }
        }
    }

    /// Enclosure of the absolute value.
    pub fn abs(&self) -> MeasureInterval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            MeasureInterval {
                lo: -self.hi.clone(),
                hi: -self.lo.clone(),
            }
        } else {
            let hi = std::cmp::max(-self.lo.clone(), self.hi.clone());
            MeasureInterval {
                lo: BigRational::zero(),
                hi,
            }
        }
    }

    /// Enclosure of `max` over several true values.
    pub fn max_of(intervals: &[MeasureInterval]) -> Option<MeasureInterval> {
        let lo = intervals.iter().map(|i| i.lo.clone()).max()?;
        let hi = intervals.iter().map(|i| i.hi.clone()).max()?;
        Some(MeasureInterval { lo, hi })
    }

    /// Clamps the lower endpoint up to zero (for quantities known
    /// nonnegative, e.g. squared norms).
    pub fn clamp_nonnegative(&self) -> MeasureInterval {
        MeasureInterval {
            lo: std::cmp::max(self.lo.clone(), BigRational::zero()),
            hi: std::cmp::max(self.hi.clone(), BigRational::zero()),
        }
    }
}

impl std::fmt::Display for MeasureInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}]",
            crate::ratio::format_ratio(&self.lo),
            crate::ratio::format_ratio(&self.hi)
        )
    }
}
