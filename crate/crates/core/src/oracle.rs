//! Brute-force cross-check of the certified path.
//!
//! The oracle materializes full cell arrays at one deep stage and counts
//! shifted cells directly. It re-derives the stacking layout from the
//! construction parameters by explicit per-column simulation — it calls
//! none of the closed-form offset or refinement code it is checking — and
//! it accounts for the cells it cannot shift (those within `m` of the roof)
//! as an explicit error bound. Deliberately memory-bounded and
//! single-threaded: a test instrument, not a user feature.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};

use crate::construction::{ConstructionParams, CutPolicy, SpacerPolicy, StageTable};
use crate::dynamics::measure_intersection;
use crate::error::{Error, Result};
use crate::interval::MeasureInterval;
use crate::level_set::LevelSet;

/// Hard cap on materialized tower height.
pub const MAX_ORACLE_CELLS: u64 = 1_000_000;

/// A direct measurement with its exact error bound: the true value lies in
/// `[value - error_bound, value + error_bound]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub value: BigRational,
    pub error_bound: BigRational,
}

impl OracleResult {
    pub fn as_interval(&self) -> MeasureInterval {
        MeasureInterval::new(
            &self.value - &self.error_bound,
            &self.value + &self.error_bound,
        )
        .expect("error bound is nonnegative")
    }
}

/// Layout rebuilt from scratch: per-stage heights, widths, and fully
/// materialized column offsets.
struct OracleLayout {
    heights: Vec<u64>,
    widths: Vec<BigRational>,
    /// `offsets[j - 1][i - 1]` = bottom of column `i` of the stage-`j` cut
    /// inside tower `j+1`; present for `j = 1..K-1`.
    offsets: Vec<Vec<u64>>,
}

fn eval_cut(params: &ConstructionParams, j: u32, h: u64) -> Result<u64> {
    let r = match &params.cuts {
        CutPolicy::ExplicitList(list) => list
            .get(j as usize - 1)
            .and_then(|r| r.to_u64())
            .ok_or(Error::PolicyUndefined { stage: j })?,
        CutPolicy::Affine { a, b } => (a * BigInt::from(j) + b)
            .to_u64()
            .ok_or(Error::PolicyUndefined { stage: j })?,
        CutPolicy::EqualHeight => h,
    };
    if r < 2 {
        return Err(Error::PolicyUndefined { stage: j });
    }
    Ok(r)
}

fn eval_spacer(params: &ConstructionParams, j: u32, i: u64) -> Result<u64> {
    match &params.spacers {
        SpacerPolicy::Staircase => Ok(i - 1),
        SpacerPolicy::ConstantHeight(k) => {
            k.to_u64().ok_or(Error::SpacerMismatch { stage: j })
        }
        SpacerPolicy::Explicit(per_stage) => per_stage
            .get(j as usize - 1)
            .and_then(|v| v.get(i as usize - 1))
            .and_then(|s| s.to_u64())
            .ok_or(Error::SpacerMismatch { stage: j }),
    }
}

fn build_layout(params: &ConstructionParams, depth: u32) -> Result<OracleLayout> {
    let h1 = params
        .h1
        .to_u64()
        .ok_or_else(|| Error::InvalidArgument("oracle requires small h1".into()))?;
    let mut heights = vec![h1];
    let mut widths = vec![params.base_width.clone()];
    let mut offsets = Vec::new();
    for j in 1..depth {
        let h = *heights.last().unwrap();
        let r = eval_cut(params, j, h)?;
        // Walk the stacking column by column: each column contributes its
        // h+1 levels plus its spacers.
        let mut offs = Vec::with_capacity(r as usize);
        let mut bottom: u64 = 0;
        for i in 1..=r {
            offs.push(bottom);
            let spacer = eval_spacer(params, j, i)?;
            bottom = bottom
                .checked_add(h + 1)
                .and_then(|b| b.checked_add(spacer))
                .ok_or(Error::CellLimit {
                    limit: MAX_ORACLE_CELLS,
                    needed: u64::MAX,
                })?;
        }
        let new_height = bottom - 1;
        if new_height > MAX_ORACLE_CELLS && j + 1 < depth {
            return Err(Error::CellLimit {
                limit: MAX_ORACLE_CELLS,
                needed: new_height,
            });
        }
        heights.push(new_height);
        widths.push(widths.last().unwrap() / BigRational::from_integer(BigInt::from(r)));
        offsets.push(offs);
    }
    Ok(OracleLayout {
        heights,
        widths,
        offsets,
    })
}

fn refine_cells(layout: &OracleLayout, set: &LevelSet, depth: u32) -> Result<Vec<u64>> {
    if set.stage() > depth {
        return Err(Error::InvalidArgument(format!(
            "set at stage {} is finer than oracle depth {depth}",
            set.stage()
        )));
    }
    let mut cells: Vec<u64> = set
        .levels()
        .iter()
        .map(|l| {
            l.to_u64()
                .ok_or_else(|| Error::InvalidArgument("oracle requires small levels".into()))
        })
        .collect::<Result<_>>()?;
    for j in set.stage()..depth {
        let offs = &layout.offsets[j as usize - 1];
        let needed = cells.len() as u64 * offs.len() as u64;
        if needed > MAX_ORACLE_CELLS {
            return Err(Error::CellLimit {
                limit: MAX_ORACLE_CELLS,
                needed,
            });
        }
        let mut next = Vec::with_capacity(needed as usize);
        for &o in offs {
            for &c in &cells {
                next.push(o + c);
            }
        }
        next.sort_unstable();
        cells = next;
    }
    Ok(cells)
}

/// Directly measures `mu(A ∩ T^m B)` at stage `K` by cell counting.
///
/// `value` counts cells of `B_K` whose shift lands in `A_K`; cells shifted
/// past the roof contribute to `error_bound` instead.
pub fn oracle_measure_intersection(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    m: &BigInt,
    depth: u32,
) -> Result<OracleResult> {
    if m.is_negative() {
        return Err(Error::InvalidArgument("shift m must be >= 0".into()));
    }
    let layout = build_layout(table.params(), depth)?;
    let h_k = layout.heights[depth as usize - 1];
    let m = m.to_u64().ok_or(Error::DepthInsufficient {
        m: m.clone(),
        h: BigInt::from(h_k),
    })?;
    if m > h_k {
        return Err(Error::DepthInsufficient {
            m: BigInt::from(m),
            h: BigInt::from(h_k),
        });
    }
    if h_k > MAX_ORACLE_CELLS {
        return Err(Error::CellLimit {
            limit: MAX_ORACLE_CELLS,
            needed: h_k,
        });
    }
    let a_cells = refine_cells(&layout, a, depth)?;
    let b_cells = refine_cells(&layout, b, depth)?;
    let w = &layout.widths[depth as usize - 1];

    let mut hits = 0u64;
    let mut blocked = 0u64;
    for &c in &b_cells {
        if c + m > h_k {
            blocked += 1;
        } else if a_cells.binary_search(&(c + m)).is_ok() {
            hits += 1;
        }
    }
    Ok(OracleResult {
        value: BigRational::from_integer(BigInt::from(hits)) * w,
        error_bound: BigRational::from_integer(BigInt::from(blocked)) * w,
    })
}

/// One certified-vs-oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub a: LevelSet,
    pub b: LevelSet,
    pub m: BigInt,
    pub depth: u32,
    pub tol: BigRational,
}

#[derive(Debug, Clone)]
pub struct OracleEntry {
    pub instance: OracleInstance,
    pub certified: MeasureInterval,
    pub oracle: OracleResult,
    pub compatible: bool,
}

#[derive(Debug, Clone, Default)]
pub struct OracleReport {
    pub entries: Vec<OracleEntry>,
    pub failures: usize,
}

/// Runs every instance through both paths; incompatibilities become report
/// entries with full provenance rather than errors.
pub fn oracle_check(table: &StageTable, instances: &[OracleInstance]) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for inst in instances {
        let certified = measure_intersection(table, &inst.a, &inst.b, &inst.m, &inst.tol)?;
        let oracle = oracle_measure_intersection(table, &inst.a, &inst.b, &inst.m, inst.depth)?;
        let compatible = certified.intersects(&oracle.as_interval());
        if !compatible {
            report.failures += 1;
        }
        report.entries.push(OracleEntry {
            instance: inst.clone(),
            certified,
            oracle,
            compatible,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_stage_table, ConstructionParams};
    use crate::ratio::rat;
    use num_traits::Zero;

    fn set(stage: u32, levels: &[i64]) -> LevelSet {
        LevelSet::new(stage, levels.iter().map(|&l| BigInt::from(l)).collect()).unwrap()
    }

    #[test]
    fn oracle_matches_hand_counts() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap();
        let b = set(2, &[0]);
        let r = oracle_measure_intersection(&t, &b, &b, &BigInt::from(5), 3).unwrap();
        assert_eq!(r.value, rat(1, 4));
        assert_eq!(r.error_bound, rat(0, 1));
        // m = 0 is the plain intersection measure.
        let r = oracle_measure_intersection(&t, &b, &b, &BigInt::zero(), 3).unwrap();
        assert_eq!(r.value, rat(1, 2));
        assert_eq!(r.error_bound, rat(0, 1));
        // m = 9 pushes cell 5 past the roof: value 0, error 1/4.
        let r = oracle_measure_intersection(&t, &b, &b, &BigInt::from(9), 3).unwrap();
        assert_eq!(r.value, rat(0, 1));
        assert_eq!(r.error_bound, rat(1, 4));
    }

    #[test]
    fn oracle_rejects_shifts_past_the_roof() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap();
        let b = set(2, &[0]);
        let err = oracle_measure_intersection(&t, &b, &b, &BigInt::from(11), 3).unwrap_err();
        assert!(matches!(err, Error::DepthInsufficient { .. }));
    }

    #[test]
    fn check_reports_compatibility() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap();
        let b = set(2, &[0]);
        let instances: Vec<OracleInstance> = [0i64, 2, 5]
            .iter()
            .map(|&m| OracleInstance {
                a: b.clone(),
                b: b.clone(),
                m: BigInt::from(m),
                depth: 3,
                tol: rat(0, 1),
            })
            .collect();
        let report = oracle_check(&t, &instances).unwrap();
        assert_eq!(report.failures, 0);
        assert!(report.entries.iter().all(|e| e.compatible));
        // Empty instance list: empty report.
        let report = oracle_check(&t, &[]).unwrap();
        assert!(report.entries.is_empty());
    }
}
