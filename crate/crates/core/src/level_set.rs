//! Measurable sets as unions of tower levels.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

use crate::construction::StageTable;
use crate::error::{Error, Result};

/// A set represented as a stage index plus sorted, duplicate-free level
/// indices of that tower. Its measure is `|levels| * w_stage`, exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSet {
    stage: u32,
    levels: Vec<BigInt>,
}

impl LevelSet {
    /// Sorts and deduplicates; rejects negative levels. Range checking
    /// against a tower happens in [`LevelSet::validate_against`].
    pub fn new(stage: u32, mut levels: Vec<BigInt>) -> Result<Self> {
        if stage == 0 {
            return Err(Error::InvalidArgument("stages are 1-based".into()));
        }
        if levels.iter().any(|l| l.is_negative()) {
            return Err(Error::InvalidArgument("levels must be >= 0".into()));
        }
        levels.sort();
        levels.dedup();
        Ok(LevelSet { stage, levels })
    }

    /// Wraps levels already known to be strictly increasing.
    pub(crate) fn from_sorted(stage: u32, levels: Vec<BigInt>) -> Self {
        debug_assert!(levels.windows(2).all(|w| w[0] < w[1]));
        LevelSet { stage, levels }
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn levels(&self) -> &[BigInt] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn contains(&self, level: &BigInt) -> bool {
        self.levels.binary_search(level).is_ok()
    }

    /// Checks every level lies in `[0, h_stage]` of the given table.
    pub fn validate_against(&self, table: &StageTable) -> Result<()> {
        let h = table.height(self.stage)?;
        match self.levels.last() {
            Some(top) if top > h => Err(Error::LevelOutOfRange {
                stage: self.stage,
                level: top.clone(),
                h: h.clone(),
            }),
            _ => Ok(()),
        }
    }

    /// Exact measure `|levels| * w_stage`.
    pub fn measure(&self, table: &StageTable) -> Result<BigRational> {
        let w = table.width(self.stage)?;
        Ok(BigRational::from_integer(BigInt::from(self.levels.len())) * w)
    }

    /// Number of common levels with another set at the same stage.
    pub fn intersection_count(&self, other: &LevelSet) -> usize {
        debug_assert_eq!(self.stage, other.stage);
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .levels
            .iter()
            .filter(|l| large.contains(l))
            .count()
    }
}
