//! Certified dynamics: images `T^m(A)`, intersection measures, centered
//! correlations and Cesàro-average norms, all as exact-rational enclosures.
//!
//! At every finite stage the map is undefined on the roof, so `T^m(A)` is
//! resolved level by level: at stage `J` a level `k` maps to `k + m`
//! whenever `k + m <= h_J`, and the rest of the set is refined one stage
//! deeper and retried. Unresolved mass is tracked exactly and returned as a
//! residual; it shrinks geometrically (at most `m` levels can ever be
//! unresolved), so any positive tolerance terminates on a deep enough table.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::construction::{StageTable, TowerCoord};
use crate::error::{Error, Result};
use crate::interval::MeasureInterval;
use crate::level_set::LevelSet;

/// How raw tower measures are normalized in reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Treat `mu_ref` as the mass of the whole space; probabilities are
    /// `mu / mu_ref`. The reference is explicit because `mu(X)` is a limit
    /// no finite table determines.
    Probability { mu_ref: BigRational },
    /// Report raw measures; the mixing target is 0.
    Infinite,
}

impl NormalizationMode {
    pub fn probability(mu_ref: BigRational) -> Self {
        NormalizationMode::Probability { mu_ref }
    }
}

/// `mu(X_J)` of the deepest built stage: the default probability reference.
pub fn default_mu_ref(table: &StageTable) -> BigRational {
    table
        .total_measure(table.depth())
        .expect("deepest stage exists")
        .clone()
}

/// The resolved part of `T^m(A)` at a single common stage, plus the exact
/// unresolved mass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertifiedImage {
    pub resolved: LevelSet,
    pub residual: BigRational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// Resolved image levels grouped by the stage where they resolved.
///
/// This is the working representation: sweeps intersect each part directly
/// (coarsening single levels instead of refining whole sets to a common
/// stage), which keeps deep computations polynomial in the answer size.
#[derive(Debug, Clone)]
pub struct ImageParts {
    pub parts: Vec<(u32, Vec<BigInt>)>,
    pub residual: BigRational,
    /// Deepest stage the iteration reached.
    pub final_stage: u32,
}

impl ImageParts {
    /// Total resolved mass, exact.
    pub fn resolved_measure(&self, table: &StageTable) -> Result<BigRational> {
        let mut acc = BigRational::zero();
        for (stage, levels) in &self.parts {
            acc += table.width(*stage)? * BigRational::from_integer(BigInt::from(levels.len()));
        }
        Ok(acc)
    }
}

fn image_parts_directed(
    table: &StageTable,
    set: &LevelSet,
    m: &BigInt,
    tol: &BigRational,
    dir: Direction,
) -> Result<ImageParts> {
    if m.is_negative() {
        return Err(Error::InvalidArgument("shift m must be >= 0".into()));
    }
    if tol.is_negative() {
        return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
    }
    set.validate_against(table)?;
    let mut stage = set.stage();
    let mut frontier = set.levels().to_vec();
    let mut parts: Vec<(u32, Vec<BigInt>)> = Vec::new();
    loop {
        let h = table.height(stage)?;
        // `frontier` is sorted, so the unresolved levels are a suffix
        // (forward: k > h - m) or a prefix (backward: k < m).
        let (resolved, unresolved): (Vec<BigInt>, Vec<BigInt>) = match dir {
            Direction::Forward => {
                let threshold = h - m;
                let split = frontier.partition_point(|k| *k <= threshold);
                let unres = frontier.split_off(split);
                (frontier.iter().map(|k| k + m).collect(), unres)
            }
            Direction::Backward => {
                let split = frontier.partition_point(|k| k < m);
                let res = frontier.split_off(split);
                (res.iter().map(|k| k - m).collect(), frontier)
            }
        };
        if !resolved.is_empty() {
            parts.push((stage, resolved));
        }
        let residual =
            BigRational::from_integer(BigInt::from(unresolved.len())) * table.width(stage)?;
        if &residual <= tol {
            return Ok(ImageParts {
                parts,
                residual,
                final_stage: stage,
            });
        }
        if stage + 1 > table.depth() {
            return Err(Error::StageMissing {
                needed: stage + 1,
                depth: table.depth(),
            });
        }
        frontier = table.refine_levels(stage, &unresolved)?;
        stage += 1;
    }
}

/// Raw parts of the forward image `T^m(set)`.
pub fn image_parts(
    table: &StageTable,
    set: &LevelSet,
    m: &BigInt,
    tol: &BigRational,
) -> Result<ImageParts> {
    image_parts_directed(table, set, m, tol, Direction::Forward)
}

/// Certified image `T^m(A)`: all resolved levels refined to the finest
/// stage reached, with `measure(resolved) + residual = measure(A)` exactly.
pub fn image(
    table: &StageTable,
    a: &LevelSet,
    m: &BigInt,
    tol: &BigRational,
) -> Result<CertifiedImage> {
    let parts = image_parts(table, a, m, tol)?;
    let target = parts.final_stage;
    let mut merged: Vec<BigInt> = Vec::new();
    for (stage, levels) in &parts.parts {
        let mut fine = levels.clone();
        for j in *stage..target {
            fine = table.refine_levels(j, &fine)?;
        }
        merged.extend(fine);
    }
    merged.sort();
    debug_assert!(merged.windows(2).all(|w| w[0] < w[1]));
    Ok(CertifiedImage {
        resolved: LevelSet::new(target, merged)?,
        residual: parts.residual,
    })
}

/// Counts how much of the image parts lies inside `target`, exactly.
fn parts_mass_inside(table: &StageTable, parts: &ImageParts, target: &LevelSet) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    for (stage, levels) in &parts.parts {
        let count = if *stage == target.stage() {
            levels
                .iter()
                .filter(|l| target.contains(l))
                .count()
        } else if *stage > target.stage() {
            // Classify each fine level by its coarse coordinate.
            let mut n = 0usize;
            for level in levels {
                let loc = table.coarse_coords(*stage, level, target.stage())?;
                if let TowerCoord::InTower { level: t, .. } = loc.coord {
                    if target.contains(&t) {
                        n += 1;
                    }
                }
            }
            n
        } else {
            // Part coarser than the target set: refine the part.
            let mut fine = levels.clone();
            for j in *stage..target.stage() {
                fine = table.refine_levels(j, &fine)?;
            }
            let part_set = LevelSet::from_sorted(target.stage(), fine);
            part_set.intersection_count(target)
        };
        let w = if *stage >= target.stage() {
            table.width(*stage)?
        } else {
            table.width(target.stage())?
        };
        acc += BigRational::from_integer(BigInt::from(count)) * w;
    }
    Ok(acc)
}

/// Certified enclosure of `mu(A ∩ T^m B)`, imaging `B` forward.
///
/// The interval width equals the image residual, hence is at most `tol`.
pub fn measure_intersection(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    m: &BigInt,
    tol: &BigRational,
) -> Result<MeasureInterval> {
    a.validate_against(table)?;
    let parts = image_parts(table, b, m, tol)?;
    let lo = parts_mass_inside(table, &parts, a)?;
    let hi = &lo + &parts.residual;
    MeasureInterval::new(lo, hi)
}

/// The transported route to the same quantity: `mu(A ∩ T^m B) =
/// mu(T^{-m} A ∩ B)`, imaging `A` backward. Used to cross-check
/// [`measure_intersection`]; the two intervals must overlap.
pub fn measure_intersection_via_preimage(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    m: &BigInt,
    tol: &BigRational,
) -> Result<MeasureInterval> {
    b.validate_against(table)?;
    let parts = image_parts_directed(table, a, m, tol, Direction::Backward)?;
    let lo = parts_mass_inside(table, &parts, b)?;
    let hi = &lo + &parts.residual;
    MeasureInterval::new(lo, hi)
}

fn check_reference(mu_ref: &BigRational, sets: &[&BigRational]) -> Result<()> {
    if !mu_ref.is_positive() {
        return Err(Error::BadReference);
    }
    if sets.iter().any(|m| *m > mu_ref) {
        return Err(Error::BadReference);
    }
    Ok(())
}

/// Correlation of `B` with itself at shift `n`.
///
/// Probability mode: enclosure of `P(T^n B ∩ B) - P(B)^2`, the inner
/// product of the centered indicator with its shift. Infinite mode: the raw
/// enclosure of `mu(T^n B ∩ B)`.
pub fn correlation(
    table: &StageTable,
    b: &LevelSet,
    n: &BigInt,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<MeasureInterval> {
    let raw = measure_intersection(table, b, b, n, tol)?;
    match mode {
        NormalizationMode::Infinite => Ok(raw),
        NormalizationMode::Probability { mu_ref } => {
            let mu_b = b.measure(table)?;
            check_reference(mu_ref, &[&mu_b])?;
            let p = mu_b / mu_ref;
            let centered = raw
                .scale(&(BigRational::one() / mu_ref))
                .offset(&-(&p * &p));
            Ok(centered)
        }
    }
}

/// Enclosure of `|| (1/L) sum_{l=0}^{L-1} T^{ld} f ||^2` via the Gram
/// expansion `(1/L^2) sum_{l,l'} C((l - l') d)`, using `C(-n) = C(n)`.
pub fn cesaro_norm_sq(
    table: &StageTable,
    b: &LevelSet,
    d: &BigInt,
    big_l: u64,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<MeasureInterval> {
    if big_l < 1 {
        return Err(Error::InvalidArgument("L must be >= 1".into()));
    }
    let c0 = correlation(table, b, &BigInt::zero(), mode, tol)?;
    let mut acc = c0.scale(&BigRational::from_integer(BigInt::from(big_l)));
    for k in 1..big_l {
        let shift = d * BigInt::from(k);
        let ck = correlation(table, b, &shift, mode, tol)?;
        let weight = BigRational::from_integer(BigInt::from(2 * (big_l - k)));
        acc = acc.add(&ck.scale(&weight));
    }
    let l_sq = BigRational::from_integer(BigInt::from(big_l) * BigInt::from(big_l));
    Ok(acc.scale(&(BigRational::one() / l_sq)))
}

/// Report of one Blum–Hanson inequality check.
#[derive(Debug, Clone)]
pub struct BlumHansonReport {
    /// Enclosure of `max_{l=1..L-1} C(l d)`.
    pub max_cross: MeasureInterval,
    /// Enclosure of the averaged-shift squared norm.
    pub norm_sq: MeasureInterval,
    /// `eps + C(0).hi / L`, the bound's certified upper form.
    pub bound: BigRational,
    /// All cross-correlations certified below `eps`.
    pub premise_holds: bool,
    /// Norm certified below `eps + ||f||^2 / L`.
    pub conclusion_holds: bool,
}

/// Checks the Blum–Hanson bound: if `<T^{ld} f, f> < eps` for `l = 1..L-1`
/// then `||(1/L) sum T^{ld} f||^2 <= (1/L^2)(eps L(L-1) + L ||f||^2)`.
///
/// Both sides are evaluated with certified endpoints in the conservative
/// direction, so `premise_holds` and `conclusion_holds` are only reported
/// `true` when certain.
pub fn blum_hanson_check(
    table: &StageTable,
    b: &LevelSet,
    d: &BigInt,
    big_l: u64,
    eps: &BigRational,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<BlumHansonReport> {
    if big_l < 2 {
        return Err(Error::InvalidArgument("L must be >= 2".into()));
    }
    let c0 = correlation(table, b, &BigInt::zero(), mode, tol)?;
    let mut crosses = Vec::with_capacity(big_l as usize - 1);
    for l in 1..big_l {
        let shift = d * BigInt::from(l);
        crosses.push(correlation(table, b, &shift, mode, tol)?);
    }
    // Reuse the correlations for the Gram sum rather than recomputing.
    let mut acc = c0.scale(&BigRational::from_integer(BigInt::from(big_l)));
    for (k, ck) in crosses.iter().enumerate() {
        let weight = BigRational::from_integer(BigInt::from(2 * (big_l - (k as u64 + 1))));
        acc = acc.add(&ck.scale(&weight));
    }
    let l_sq = BigRational::from_integer(BigInt::from(big_l) * BigInt::from(big_l));
    let norm_sq = acc.scale(&(BigRational::one() / l_sq));
    let max_cross = MeasureInterval::max_of(&crosses).expect("L >= 2 gives a cross term");
    let l_rat = BigRational::from_integer(BigInt::from(big_l));
    let bound = eps + c0.hi() / &l_rat;
    let premise_holds = max_cross.hi() < eps;
    let conclusion_holds = *norm_sq.hi() <= eps + c0.lo() / &l_rat;
    Ok(BlumHansonReport {
        max_cross,
        norm_sq,
        bound,
        premise_holds,
        conclusion_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_stage_table, ConstructionParams};
    use crate::ratio::rat;

    fn two_two() -> crate::construction::StageTable {
        build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap()
    }

    fn set(stage: u32, levels: &[i64]) -> LevelSet {
        LevelSet::new(stage, levels.iter().map(|&l| BigInt::from(l)).collect()).unwrap()
    }

    #[test]
    fn image_resolves_across_the_roof() {
        let t = two_two();
        let a = set(2, &[0]);
        let img = image(&t, &a, &BigInt::from(5), &rat(0, 1)).unwrap();
        assert_eq!(img.residual, rat(0, 1));
        assert_eq!(img.resolved.stage(), 3);
        let got: Vec<i64> = img.resolved.levels().iter().map(|l| l.try_into().unwrap()).collect();
        assert_eq!(got, vec![5, 10]);
    }

    #[test]
    fn image_identity_and_small_shift() {
        let t = two_two();
        let a = set(2, &[0]);
        let img = image(&t, &a, &BigInt::zero(), &rat(0, 1)).unwrap();
        assert_eq!(img.resolved, a);
        assert_eq!(img.residual, rat(0, 1));
        let img = image(&t, &a, &BigInt::from(2), &rat(0, 1)).unwrap();
        assert_eq!(img.resolved, set(2, &[2]));
    }

    #[test]
    fn image_errors_when_table_too_shallow() {
        let t = two_two();
        let a = set(2, &[0]);
        // m = 9 leaves level 5's image over the roof at stage 3 and the
        // table has no stage 4.
        let err = image(&t, &a, &BigInt::from(9), &rat(0, 1)).unwrap_err();
        assert_eq!(err.missing_stage(), Some(4));
        // A loose tolerance accepts the residual instead.
        let img = image(&t, &a, &BigInt::from(9), &rat(1, 4)).unwrap();
        assert_eq!(img.residual, rat(1, 4));
        let got: Vec<i64> = img.resolved.levels().iter().map(|l| l.try_into().unwrap()).collect();
        assert_eq!(got, vec![9]);
    }

    #[test]
    fn intersection_examples() {
        let t = two_two();
        let a = set(2, &[0]);
        let i = measure_intersection(&t, &a, &a, &BigInt::from(5), &rat(0, 1)).unwrap();
        assert_eq!(i, MeasureInterval::point(rat(1, 4)));
        let i = measure_intersection(&t, &a, &a, &BigInt::zero(), &rat(0, 1)).unwrap();
        assert_eq!(i, MeasureInterval::point(rat(1, 2)));
        let i = measure_intersection(&t, &a, &a, &BigInt::from(2), &rat(0, 1)).unwrap();
        assert_eq!(i, MeasureInterval::point(rat(0, 1)));
    }

    #[test]
    fn preimage_route_agrees() {
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 8).unwrap();
        let a = set(2, &[0, 2]);
        let b = set(2, &[0]);
        for m in [0i64, 1, 2, 5, 7, 23, 60] {
            let f = measure_intersection(&t, &a, &b, &BigInt::from(m), &rat(1, 64)).unwrap();
            let g =
                measure_intersection_via_preimage(&t, &a, &b, &BigInt::from(m), &rat(1, 64))
                    .unwrap();
            assert!(f.intersects(&g), "m={m}: {f} vs {g}");
        }
    }

    #[test]
    fn correlation_probability_and_infinite() {
        let t = two_two();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(11, 4));
        let c = correlation(&t, &b, &BigInt::from(2), &mode, &rat(0, 1)).unwrap();
        assert_eq!(c, MeasureInterval::point(rat(-4, 121)));
        // n = 0: variance of the indicator.
        let c0 = correlation(&t, &b, &BigInt::zero(), &mode, &rat(0, 1)).unwrap();
        assert_eq!(c0, MeasureInterval::point(rat(18, 121)));
        let raw = correlation(&t, &b, &BigInt::from(2), &NormalizationMode::Infinite, &rat(0, 1))
            .unwrap();
        assert_eq!(raw, MeasureInterval::point(rat(0, 1)));
    }

    #[test]
    fn bad_reference_is_rejected() {
        let t = two_two();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(0, 1));
        assert_eq!(
            correlation(&t, &b, &BigInt::zero(), &mode, &rat(0, 1)).unwrap_err(),
            Error::BadReference
        );
        // mu_ref below mu(B) is also rejected.
        let mode = NormalizationMode::probability(rat(1, 4));
        assert_eq!(
            correlation(&t, &b, &BigInt::zero(), &mode, &rat(0, 1)).unwrap_err(),
            Error::BadReference
        );
    }

    #[test]
    fn cesaro_examples() {
        let t = two_two();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(11, 4));
        // L = 1: just C(0).
        let n1 = cesaro_norm_sq(&t, &b, &BigInt::from(3), 1, &mode, &rat(0, 1)).unwrap();
        assert_eq!(n1, MeasureInterval::point(rat(18, 121)));
        // d = 2, L = 2: (1/4)(2*18/121 + 2*(-4/121)) = 7/121.
        let n2 = cesaro_norm_sq(&t, &b, &BigInt::from(2), 2, &mode, &rat(0, 1)).unwrap();
        assert_eq!(n2, MeasureInterval::point(rat(7, 121)));
        // d = 0: every term is C(0).
        let n0 = cesaro_norm_sq(&t, &b, &BigInt::zero(), 4, &mode, &rat(0, 1)).unwrap();
        assert_eq!(n0, MeasureInterval::point(rat(18, 121)));
    }

    #[test]
    fn blum_hanson_example() {
        let t = two_two();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(11, 4));
        let rep =
            blum_hanson_check(&t, &b, &BigInt::from(2), 2, &rat(1, 100), &mode, &rat(0, 1))
                .unwrap();
        assert!(rep.premise_holds);
        assert!(rep.conclusion_holds);
        assert_eq!(rep.norm_sq, MeasureInterval::point(rat(7, 121)));
        assert_eq!(rep.bound, rat(1, 100) + rat(9, 121));
        // d = 0 keeps every cross-correlation at C(0), defeating any
        // eps < C(0).
        let rep = blum_hanson_check(&t, &b, &BigInt::zero(), 3, &rat(1, 100), &mode, &rat(0, 1))
            .unwrap();
        assert!(!rep.premise_holds);
        // eps >= C(0): premise and conclusion both hold.
        let rep = blum_hanson_check(&t, &b, &BigInt::zero(), 3, &rat(1, 5), &mode, &rat(0, 1))
            .unwrap();
        assert!(rep.premise_holds);
        assert!(rep.conclusion_holds);
    }
}
