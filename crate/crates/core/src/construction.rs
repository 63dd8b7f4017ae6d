//! The symbolic cutting-and-stacking recursion.
//!
//! A construction is driven by an initial height `h1`, a cut policy giving
//! `r_j >= 2` pieces per stage, and a spacer policy giving the number of new
//! intervals added over each column before stacking. Stage `j` is a tower of
//! `h_j + 1` levels of width `w_j`; cutting each level into `r_j` pieces and
//! stacking column `i+1` over column `i` (after its spacers) yields stage
//! `j+1` with
//!
//! ```text
//! h_{j+1} + 1 = (h_j + 1) r_j + sum_{i=1}^{r_j} s_j(i),     w_{j+1} = w_j / r_j.
//! ```
//!
//! Everything here is exact: heights, cut counts and column offsets are
//! arbitrary-precision integers, widths and measures are rationals. The
//! staircase policy `s_j(i) = i - 1` can push cut counts past 10^7 and
//! heights past 10^15, so offsets are evaluated on demand from closed forms
//! instead of being materialized per column.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::level_set::LevelSet;

/// How many pieces each stage is cut into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CutPolicy {
    /// Fixed list; stage `j` uses the `j`-th entry and the policy is
    /// undefined past the end.
    ExplicitList(Vec<BigInt>),
    /// `r_j = a*j + b`.
    Affine { a: BigInt, b: BigInt },
    /// `r_j = h_j`.
    EqualHeight,
}

impl CutPolicy {
    /// Number of pieces for the cut of stage `j` (height `h_j`), if defined.
    pub fn eval(&self, j: u32, h_j: &BigInt) -> Option<BigInt> {
        match self {
            CutPolicy::ExplicitList(list) => list.get(j as usize - 1).cloned(),
            CutPolicy::Affine { a, b } => Some(a * BigInt::from(j) + b),
            CutPolicy::EqualHeight => Some(h_j.clone()),
        }
    }
}

/// How many spacers go over each column of a cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpacerPolicy {
    /// `s_j(i) = i - 1`: the staircase.
    Staircase,
    /// `s_j(i) = k` for every stage and column.
    ConstantHeight(BigInt),
    /// One vector per stage; the vector for stage `j` must have exactly
    /// `r_j` nonnegative entries.
    Explicit(Vec<Vec<BigInt>>),
}

/// Evaluated spacer data for one cut, supporting closed-form prefix sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpacerEval {
    Staircase,
    Constant(BigInt),
    List {
        values: Vec<BigInt>,
        /// `prefix[i]` = sum of the first `i` values.
        prefix: Vec<BigInt>,
    },
}

impl SpacerEval {
    /// `s_j(i)` for a 1-based column index.
    pub fn value(&self, i: &BigInt) -> BigInt {
        match self {
            SpacerEval::Staircase => i - BigInt::one(),
            SpacerEval::Constant(k) => k.clone(),
            SpacerEval::List { values, .. } => {
                let idx = i.to_usize().expect("list column index fits usize");
                values[idx - 1].clone()
            }
        }
    }

    /// Sum of `s_j(1..=i)`.
    pub fn prefix_sum(&self, i: &BigInt) -> BigInt {
        match self {
            SpacerEval::Staircase => i * (i - BigInt::one()) / BigInt::from(2),
            SpacerEval::Constant(k) => k * i,
            SpacerEval::List { prefix, .. } => {
                let idx = i.to_usize().expect("list column index fits usize");
                prefix[idx].clone()
            }
        }
    }

    /// Coefficients `(alpha, beta)` when `s_j(i) = alpha*i + beta`.
    ///
    /// The run-compressed delay-profile arithmetic only applies to affine
    /// spacer shapes; explicit lists fall back to per-column stepping.
    pub fn affine(&self) -> Option<(BigInt, BigInt)> {
        match self {
            SpacerEval::Staircase => Some((BigInt::one(), -BigInt::one())),
            SpacerEval::Constant(k) => Some((BigInt::zero(), k.clone())),
            SpacerEval::List { .. } => None,
        }
    }
}

/// Parameters defining a construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionParams {
    /// Top level index of the stage-1 tower (the tower has `h1 + 1` levels).
    pub h1: BigInt,
    pub cuts: CutPolicy,
    pub spacers: SpacerPolicy,
    /// Width of each stage-1 level.
    pub base_width: BigRational,
}

impl ConstructionParams {
    pub fn new(h1: impl Into<BigInt>, cuts: CutPolicy, spacers: SpacerPolicy) -> Self {
        ConstructionParams {
            h1: h1.into(),
            cuts,
            spacers,
            base_width: BigRational::one(),
        }
    }

    pub fn with_base_width(mut self, w: BigRational) -> Self {
        self.base_width = w;
        self
    }

    /// The staircase construction with cut sequence `r_j = j + 1`.
    pub fn affine_staircase(h1: impl Into<BigInt>) -> Self {
        ConstructionParams::new(
            h1,
            CutPolicy::Affine {
                a: BigInt::one(),
                b: BigInt::one(),
            },
            SpacerPolicy::Staircase,
        )
    }

    /// A staircase construction with an explicit cut list.
    pub fn staircase_list(h1: impl Into<BigInt>, cuts: &[i64]) -> Self {
        ConstructionParams::new(
            h1,
            CutPolicy::ExplicitList(cuts.iter().map(|&c| BigInt::from(c)).collect()),
            SpacerPolicy::Staircase,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.h1 < BigInt::one() {
            return Err(Error::InvalidArgument("h1 must be >= 1".into()));
        }
        if !self.base_width.is_positive() {
            return Err(Error::InvalidArgument("base_width must be positive".into()));
        }
        if let SpacerPolicy::ConstantHeight(k) = &self.spacers {
            if k.is_negative() {
                return Err(Error::InvalidArgument("spacer count must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// One built stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    /// Stage index, 1-based.
    pub j: u32,
    /// Top level index; the tower is `E_j, T E_j, ..., T^{h} E_j`.
    pub h: BigInt,
    /// Width of each level.
    pub w: BigRational,
    /// Total mass `(h + 1) * w` of the stage-`j` tower.
    pub total: BigRational,
}

/// The cut between stage `j` and stage `j+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    /// Cut count `r_j`.
    pub r: BigInt,
    pub spacers: SpacerEval,
}

/// Where a fine level sits when expressed in a coarser tower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TowerCoord {
    /// Level `level` of the coarse tower, inside piece `column` of its cut.
    /// `column` is 1 when no descent step was taken.
    InTower { column: BigInt, level: BigInt },
    /// A spacer interval: it first appeared in the tower of
    /// `added_at_stage`, above `column` of the cut below it, at 1-based
    /// `spacer_index`.
    Spacer {
        added_at_stage: u32,
        column: BigInt,
        spacer_index: BigInt,
    },
}

/// Result of [`StageTable::coarse_coords`]: the coordinate plus the column
/// chosen at each descent step (finest first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseLocation {
    pub columns: Vec<BigInt>,
    pub coord: TowerCoord,
}

/// The full symbolic record of a construction, append-only.
///
/// Extending to deeper stages never mutates existing stages, so shared
/// references can be read concurrently once a table is deep enough.
#[derive(Debug, Clone)]
pub struct StageTable {
    params: ConstructionParams,
    stages: Vec<Stage>,
    transitions: Vec<Transition>,
    cell_limit: Option<u64>,
}

/// Builds stages `1..=depth` for the given parameters.
pub fn build_stage_table(params: ConstructionParams, depth: u32) -> Result<StageTable> {
    StageTable::build(params, depth)
}

impl StageTable {
    pub fn build(params: ConstructionParams, depth: u32) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        params.validate()?;
        let first = Stage {
            j: 1,
            h: params.h1.clone(),
            w: params.base_width.clone(),
            total: BigRational::from_integer(&params.h1 + BigInt::one()) * &params.base_width,
        };
        let mut table = StageTable {
            params,
            stages: vec![first],
            transitions: Vec::new(),
            cell_limit: None,
        };
        table.extend_to(depth)?;
        Ok(table)
    }

    /// Deepest built stage index.
    pub fn depth(&self) -> u32 {
        self.stages.len() as u32
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.params
    }

    /// Caps the number of cells any refinement may materialize.
    pub fn set_cell_limit(&mut self, limit: Option<u64>) {
        self.cell_limit = limit;
    }

    pub fn cell_limit(&self) -> Option<u64> {
        self.cell_limit
    }

    pub fn stage(&self, j: u32) -> Result<&Stage> {
        if j == 0 {
            return Err(Error::InvalidArgument("stages are 1-based".into()));
        }
        self.stages.get(j as usize - 1).ok_or(Error::StageMissing {
            needed: j,
            depth: self.depth(),
        })
    }

    pub fn height(&self, j: u32) -> Result<&BigInt> {
        Ok(&self.stage(j)?.h)
    }

    pub fn width(&self, j: u32) -> Result<&BigRational> {
        Ok(&self.stage(j)?.w)
    }

    /// `mu(X_j)`, the mass of the stage-`j` tower.
    pub fn total_measure(&self, j: u32) -> Result<&BigRational> {
        Ok(&self.stage(j)?.total)
    }

    /// The cut data between stage `j` and `j+1`; requires stage `j+1` built.
    pub fn transition(&self, j: u32) -> Result<&Transition> {
        if j == 0 {
            return Err(Error::InvalidArgument("stages are 1-based".into()));
        }
        self.transitions
            .get(j as usize - 1)
            .ok_or(Error::StageMissing {
                needed: j + 1,
                depth: self.depth(),
            })
    }

    /// Cut count `r_j`.
    pub fn cut_count(&self, j: u32) -> Result<&BigInt> {
        Ok(&self.transition(j)?.r)
    }

    /// Spacer count `s_j(i)` over column `i` of the stage-`j` cut.
    pub fn spacer_count(&self, j: u32, i: &BigInt) -> Result<BigInt> {
        let t = self.transition(j)?;
        if i < &BigInt::one() || i > &t.r {
            return Err(Error::ColumnOutOfRange {
                stage: j,
                column: i.clone(),
                r: t.r.clone(),
            });
        }
        Ok(t.spacers.value(i))
    }

    /// Appends stages up to `depth`; existing stages are untouched.
    pub fn extend_to(&mut self, depth: u32) -> Result<()> {
        while self.depth() < depth {
            let j = self.depth();
            let cur = self.stages.last().expect("at least one stage");
            let r = self
                .params
                .cuts
                .eval(j, &cur.h)
                .ok_or(Error::PolicyUndefined { stage: j })?;
            if r < BigInt::from(2) {
                return Err(Error::PolicyUndefined { stage: j });
            }
            let spacers = self.eval_spacers(j, &r)?;
            let spacer_mass = spacers.prefix_sum(&r);
            let h_next = (&cur.h + BigInt::one()) * &r + &spacer_mass - BigInt::one();
            let w_next = &cur.w / BigRational::from_integer(r.clone());
            let total = BigRational::from_integer(&h_next + BigInt::one()) * &w_next;
            self.stages.push(Stage {
                j: j + 1,
                h: h_next,
                w: w_next,
                total,
            });
            self.transitions.push(Transition { r, spacers });
        }
        Ok(())
    }

    fn eval_spacers(&self, j: u32, r: &BigInt) -> Result<SpacerEval> {
        match &self.params.spacers {
            SpacerPolicy::Staircase => Ok(SpacerEval::Staircase),
            SpacerPolicy::ConstantHeight(k) => Ok(SpacerEval::Constant(k.clone())),
            SpacerPolicy::Explicit(per_stage) => {
                let values = per_stage
                    .get(j as usize - 1)
                    .ok_or(Error::SpacerMismatch { stage: j })?;
                let len = BigInt::from(values.len());
                if &len != r || values.iter().any(|v| v.is_negative()) {
                    return Err(Error::SpacerMismatch { stage: j });
                }
                let mut prefix = Vec::with_capacity(values.len() + 1);
                let mut acc = BigInt::zero();
                prefix.push(acc.clone());
                for v in values {
                    acc += v;
                    prefix.push(acc.clone());
                }
                Ok(SpacerEval::List {
                    values: values.clone(),
                    prefix,
                })
            }
        }
    }

    /// Offset of the bottom of column `i` of the stage-`j` cut inside tower
    /// `j+1`: `o_1 = 0`, `o_{i+1} = o_i + (h_j + 1) + s_j(i)`.
    ///
    /// Computed in closed form, never by materializing all offsets.
    pub fn column_offset(&self, j: u32, i: &BigInt) -> Result<BigInt> {
        let t = self.transition(j)?;
        if i < &BigInt::one() || i > &t.r {
            return Err(Error::ColumnOutOfRange {
                stage: j,
                column: i.clone(),
                r: t.r.clone(),
            });
        }
        let h = self.height(j)?;
        let below = i - BigInt::one();
        Ok(&below * (h + BigInt::one()) + t.spacers.prefix_sum(&below))
    }

    /// Finds the column block of tower `j+1` containing level `p`: returns
    /// `(column, p - offset)`. Binary search over the monotone offsets.
    pub fn column_containing(&self, j: u32, p: &BigInt) -> Result<(BigInt, BigInt)> {
        let t = self.transition(j)?;
        let h_fine = self.height(j + 1)?;
        if p.is_negative() || p > h_fine {
            return Err(Error::LevelOutOfRange {
                stage: j + 1,
                level: p.clone(),
                h: h_fine.clone(),
            });
        }
        let mut lo = BigInt::one();
        let mut hi = t.r.clone();
        // Largest column whose offset is <= p.
        while lo < hi {
            let mid: BigInt = (&lo + &hi + BigInt::one()) / BigInt::from(2);
            if self.column_offset(j, &mid)? <= *p {
                lo = mid;
            } else {
                hi = mid - BigInt::one();
            }
        }
        let g = p - self.column_offset(j, &lo)?;
        Ok((lo, g))
    }

    /// Expresses level `n` of tower `fine` in the coordinates of tower
    /// `coarse <= fine`, descending one cut at a time.
    pub fn coarse_coords(&self, fine: u32, n: &BigInt, coarse: u32) -> Result<CoarseLocation> {
        if coarse == 0 || coarse > fine {
            return Err(Error::InvalidArgument(format!(
                "coarse stage {coarse} must be in [1, {fine}]"
            )));
        }
        let h_fine = self.height(fine)?;
        if n.is_negative() || n > h_fine {
            return Err(Error::LevelOutOfRange {
                stage: fine,
                level: n.clone(),
                h: h_fine.clone(),
            });
        }
        let mut columns = Vec::new();
        let mut cur = n.clone();
        let mut s = fine;
        while s > coarse {
            let below = s - 1;
            let (c, g) = self.column_containing(below, &cur)?;
            let h_below = self.height(below)?;
            if &g > h_below {
                return Ok(CoarseLocation {
                    columns,
                    coord: TowerCoord::Spacer {
                        added_at_stage: s,
                        column: c,
                        spacer_index: g - h_below,
                    },
                });
            }
            columns.push(c);
            cur = g;
            s = below;
        }
        let column = columns.last().cloned().unwrap_or_else(BigInt::one);
        Ok(CoarseLocation {
            columns,
            coord: TowerCoord::InTower { column, level: cur },
        })
    }

    fn check_cells(&self, needed: u64) -> Result<()> {
        if let Some(limit) = self.cell_limit {
            if needed > limit {
                return Err(Error::CellLimit { limit, needed });
            }
        }
        Ok(())
    }

    /// Refines sorted levels one stage down the cut: level `k` of stage `j`
    /// becomes `{o_i + k : i = 1..r_j}` of stage `j+1`, in sorted order.
    pub(crate) fn refine_levels(&self, j: u32, levels: &[BigInt]) -> Result<Vec<BigInt>> {
        let t = self.transition(j)?;
        let r = t.r.to_u64().ok_or(Error::CellLimit {
            limit: u64::MAX,
            needed: u64::MAX,
        })?;
        let needed = (levels.len() as u64).saturating_mul(r);
        self.check_cells(needed)?;
        let mut out = Vec::with_capacity(needed as usize);
        let mut i = BigInt::one();
        while i <= t.r {
            let offset = self.column_offset(j, &i)?;
            for k in levels {
                out.push(&offset + k);
            }
            i += BigInt::one();
        }
        Ok(out)
    }

    /// Refines a level set to stage `target`, preserving measure exactly.
    pub fn refine(&self, set: &LevelSet, target: u32) -> Result<LevelSet> {
        if target < set.stage() {
            return Err(Error::InvalidArgument(format!(
                "cannot refine stage {} set to coarser stage {target}",
                set.stage()
            )));
        }
        self.stage(target)?;
        set.validate_against(self)?;
        let mut levels = set.levels().to_vec();
        for j in set.stage()..target {
            levels = self.refine_levels(j, &levels)?;
        }
        Ok(LevelSet::from_sorted(target, levels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;

    fn list_params(cuts: &[i64]) -> ConstructionParams {
        ConstructionParams::staircase_list(1, cuts)
    }

    #[test]
    fn staircase_heights_match_hand_recursion() {
        // h_{j+1}+1 = (h_j+1) r_j + sum_{i<r_j} i, evaluated by hand.
        let t = build_stage_table(list_params(&[2, 2, 2]), 4).unwrap();
        let hs: Vec<i64> = (1..=4).map(|j| t.height(j).unwrap().to_i64().unwrap()).collect();
        assert_eq!(hs, vec![1, 4, 10, 22]);
        let ws: Vec<BigRational> = (1..=4).map(|j| t.width(j).unwrap().clone()).collect();
        assert_eq!(ws, vec![rat(1, 1), rat(1, 2), rat(1, 4), rat(1, 8)]);
        assert_eq!(t.total_measure(4).unwrap(), &rat(23, 8));

        let t2 = build_stage_table(list_params(&[2, 3, 4]), 4).unwrap();
        let hs2: Vec<i64> = (1..=4).map(|j| t2.height(j).unwrap().to_i64().unwrap()).collect();
        assert_eq!(hs2, vec![1, 4, 17, 77]);
    }

    #[test]
    fn zero_spacers_add_no_mass() {
        let params = ConstructionParams::new(
            1,
            CutPolicy::ExplicitList(vec![BigInt::from(2)]),
            SpacerPolicy::ConstantHeight(BigInt::zero()),
        );
        let t = build_stage_table(params, 2).unwrap();
        assert_eq!(t.height(2).unwrap(), &BigInt::from(3));
        assert_eq!(t.total_measure(2).unwrap(), &rat(2, 1));
        assert_eq!(t.total_measure(1).unwrap(), &rat(2, 1));
    }

    #[test]
    fn offsets_match_prefix_recursion() {
        // h_j = 4, staircase: offsets 0, 5, 11.
        let t = build_stage_table(list_params(&[2, 3]), 3).unwrap();
        assert_eq!(t.height(2).unwrap(), &BigInt::from(4));
        let offs: Vec<i64> = (1..=3)
            .map(|i| t.column_offset(2, &BigInt::from(i)).unwrap().to_i64().unwrap())
            .collect();
        assert_eq!(offs, vec![0, 5, 11]);
        // h_j = 1, staircase r = 2: second column starts at 2.
        assert_eq!(t.column_offset(1, &BigInt::from(2)).unwrap(), BigInt::from(2));
        assert_eq!(t.column_offset(1, &BigInt::one()).unwrap(), BigInt::zero());
        assert!(t.column_offset(2, &BigInt::from(4)).is_err());
    }

    #[test]
    fn offset_consistency_closes_each_stage() {
        // o_{r_j} + h_j + s_j(r_j) = h_{j+1}.
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 7).unwrap();
        for j in 1..7 {
            let r = t.cut_count(j).unwrap().clone();
            let top = t.column_offset(j, &r).unwrap()
                + t.height(j).unwrap()
                + t.spacer_count(j, &r).unwrap();
            assert_eq!(&top, t.height(j + 1).unwrap());
        }
    }

    #[test]
    fn coarse_coords_examples() {
        let t = build_stage_table(list_params(&[2, 2]), 3).unwrap();
        // Level 6 of tower 3 sits in piece 2 of the stage-2 cut, at level 1.
        let loc = t.coarse_coords(3, &BigInt::from(6), 2).unwrap();
        assert_eq!(
            loc.coord,
            TowerCoord::InTower {
                column: BigInt::from(2),
                level: BigInt::one()
            }
        );
        // Level 10 of tower 3 is the staircase spacer over piece 2.
        let loc = t.coarse_coords(3, &BigInt::from(10), 2).unwrap();
        assert_eq!(
            loc.coord,
            TowerCoord::Spacer {
                added_at_stage: 3,
                column: BigInt::from(2),
                spacer_index: BigInt::one()
            }
        );
        // Identity when stages coincide.
        let loc = t.coarse_coords(2, &BigInt::from(3), 2).unwrap();
        assert_eq!(
            loc.coord,
            TowerCoord::InTower {
                column: BigInt::one(),
                level: BigInt::from(3)
            }
        );
        assert!(t.coarse_coords(3, &BigInt::from(11), 2).is_err());
    }

    #[test]
    fn refine_examples() {
        let t = build_stage_table(list_params(&[2, 2]), 3).unwrap();
        let set = LevelSet::new(1, vec![BigInt::zero()]).unwrap();
        let fine = t.refine(&set, 3).unwrap();
        let got: Vec<i64> = fine.levels().iter().map(|l| l.to_i64().unwrap()).collect();
        assert_eq!(got, vec![0, 2, 5, 7]);
        // Identity refinement.
        let same = t.refine(&set, 1).unwrap();
        assert_eq!(same.levels(), set.levels());
        // {1} at stage 1 -> {1, 3} at stage 2.
        let one = LevelSet::new(1, vec![BigInt::one()]).unwrap();
        let got: Vec<i64> = t
            .refine(&one, 2)
            .unwrap()
            .levels()
            .iter()
            .map(|l| l.to_i64().unwrap())
            .collect();
        assert_eq!(got, vec![1, 3]);
    }

    #[test]
    fn policy_exhaustion_is_reported() {
        let err = build_stage_table(list_params(&[2]), 3).unwrap_err();
        assert_eq!(err, Error::PolicyUndefined { stage: 2 });
        // r_j = 1 is rejected.
        let err = build_stage_table(list_params(&[1]), 2).unwrap_err();
        assert_eq!(err, Error::PolicyUndefined { stage: 1 });
    }

    #[test]
    fn explicit_spacers_are_validated() {
        let params = ConstructionParams::new(
            1,
            CutPolicy::ExplicitList(vec![BigInt::from(2)]),
            SpacerPolicy::Explicit(vec![vec![BigInt::from(3)]]),
        );
        assert_eq!(
            build_stage_table(params, 2).unwrap_err(),
            Error::SpacerMismatch { stage: 1 }
        );
        let params = ConstructionParams::new(
            1,
            CutPolicy::ExplicitList(vec![BigInt::from(2)]),
            SpacerPolicy::Explicit(vec![vec![BigInt::from(3), BigInt::from(0)]]),
        );
        let t = build_stage_table(params, 2).unwrap();
        // h_2 + 1 = 2*2 + 3  =>  h_2 = 6.
        assert_eq!(t.height(2).unwrap(), &BigInt::from(6));
    }

    #[test]
    fn extend_is_append_only() {
        let mut t = build_stage_table(ConstructionParams::affine_staircase(1), 3).unwrap();
        let before: Vec<Stage> = (1..=3).map(|j| t.stage(j).unwrap().clone()).collect();
        t.extend_to(6).unwrap();
        for (j, old) in before.iter().enumerate() {
            assert_eq!(t.stage(j as u32 + 1).unwrap(), old);
        }
        assert_eq!(t.depth(), 6);
    }
}
