//! Staircase-specific machinery: delay decompositions, case classification,
//! constant-delay domain profiles, rakes, the conditioned-measure bound
//! check, good-delay densities, multiplier search and mixing sweeps.

use num_bigint::{BigInt, RandBigInt};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::construction::StageTable;
use crate::dynamics::{cesaro_norm_sq, correlation, measure_intersection, NormalizationMode};
use crate::error::{Error, Result};
use crate::interval::MeasureInterval;
use crate::level_set::LevelSet;
use crate::ratio::{div_ceil, sqrt_enclosure};

/// The unique writing `m = d*h + d(d-1)/2 + t` with `0 <= t < d + h`,
/// equivalently `m = sum_{i=1}^{d} (h + i - 1) + t`: the shift climbs the
/// tower `d` times, each pass one step longer than the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayDecomposition {
    pub d: BigInt,
    pub t: BigInt,
}

fn delay_threshold(d: &BigInt, h: &BigInt) -> BigInt {
    d * h + d * (d - BigInt::one()) / BigInt::from(2)
}

/// Decomposes `m >= 0` against height `h >= 1`.
///
/// `d` is found by solving the quadratic threshold `S_d = d*h + d(d-1)/2`
/// and adjusting by at most one step, never by iterating over all `d`.
pub fn decompose_delay(m: &BigInt, h: &BigInt) -> DelayDecomposition {
    assert!(!m.is_negative(), "m must be >= 0");
    assert!(h >= &BigInt::one(), "h must be >= 1");
    // S_d <= m  <=>  d^2 + (2h - 1) d - 2m <= 0.
    let b = BigInt::from(2) * h - BigInt::one();
    let disc = &b * &b + BigInt::from(8) * m;
    let root = disc.sqrt();
    let mut d = (&root - &b) / BigInt::from(2);
    if d.is_negative() {
        d = BigInt::zero();
    }
    if &delay_threshold(&(&d + BigInt::one()), h) <= m {
        d += BigInt::one();
    } else if &delay_threshold(&d, h) > m {
        d -= BigInt::one();
    }
    let t = m - delay_threshold(&d, h);
    debug_assert!(!t.is_negative());
    debug_assert!(&t < &(&d + h));
    DelayDecomposition { d, t }
}

/// Heuristic tag for the ratio `d^2 / h_j`; the exact ratio is the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    Zero,
    C,
    Infinity,
    Unclassified,
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CaseTag::Zero => "zero",
            CaseTag::C => "c",
            CaseTag::Infinity => "infinity",
            CaseTag::Unclassified => "unclassified",
        };
        write!(f, "{s}")
    }
}

/// Tagging thresholds; limits are undecidable from finite data, so these
/// only color the reported ratio.
#[derive(Debug, Clone)]
pub struct CaseThresholds {
    pub zero_max: BigRational,
    pub infinity_min: BigRational,
}

impl Default for CaseThresholds {
    fn default() -> Self {
        CaseThresholds {
            zero_max: BigRational::new(BigInt::one(), BigInt::from(10)),
            infinity_min: BigRational::from_integer(BigInt::from(10)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseRecord {
    /// Stage with `h_j <= m < h_{j+1}`.
    pub j: u32,
    pub m: BigInt,
    pub d: BigInt,
    pub t: BigInt,
    /// `d^2 / h_j`, exact.
    pub ratio: BigRational,
    pub tag: CaseTag,
}

/// Classifies each `m >= h_1` at the stage whose height window contains it.
pub fn classify_case(
    table: &StageTable,
    ms: &[BigInt],
    thresholds: Option<&CaseThresholds>,
) -> Result<Vec<CaseRecord>> {
    let mut out = Vec::with_capacity(ms.len());
    for m in ms {
        if m < table.height(1)? {
            return Err(Error::InvalidArgument(format!(
                "m = {m} is below h_1; no stage window contains it"
            )));
        }
        // Largest built j with h_j <= m; the window needs h_{j+1} too.
        let mut j = 1;
        while j < table.depth() && table.height(j + 1)? <= m {
            j += 1;
        }
        if j == table.depth() {
            return Err(Error::StageMissing {
                needed: j + 1,
                depth: table.depth(),
            });
        }
        let h = table.height(j)?;
        let dec = decompose_delay(m, h);
        let ratio = BigRational::new(&dec.d * &dec.d, h.clone());
        let tag = match thresholds {
            None => CaseTag::Unclassified,
            Some(th) => {
                if ratio < th.zero_max {
                    CaseTag::Zero
                } else if ratio > th.infinity_min {
                    CaseTag::Infinity
                } else {
                    CaseTag::C
                }
            }
        };
        out.push(CaseRecord {
            j,
            m: m.clone(),
            d: dec.d,
            t: dec.t,
            ratio,
            tag,
        });
    }
    Ok(out)
}

/// Landing of the first column of a profile segment, in tower-`j`
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentLanding {
    InTower { level: BigInt },
    Spacer { index: BigInt },
    /// The image of the column bottom crosses the roof of tower `j+1`:
    /// a domain wall, not refined further.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentDelay {
    /// Landing positions step down by this amount per column inside the
    /// segment (for a one-column segment: the stride its domain would
    /// continue with).
    Constant(BigInt),
    Boundary,
}

/// A maximal run of consecutive columns with one landing kind and one
/// constant delay: the paper-figure domain `D_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSegment {
    pub first_column: BigInt,
    pub last_column: BigInt,
    pub landing: SegmentLanding,
    pub delay: SegmentDelay,
}

impl ProfileSegment {
    pub fn column_count(&self) -> BigInt {
        &self.last_column - &self.first_column + BigInt::one()
    }

    pub fn is_in_tower(&self) -> bool {
        matches!(self.landing, SegmentLanding::InTower { .. })
    }
}

/// The partition of the stage-`j` columns into constant-delay domains
/// under `T^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayProfile {
    pub stage: u32,
    pub m: BigInt,
    pub segments: Vec<ProfileSegment>,
}

impl DelayProfile {
    /// Segment containing the given column range, if a single one does.
    pub fn segment_containing(&self, first: &BigInt, last: &BigInt) -> Option<&ProfileSegment> {
        self.segments
            .iter()
            .find(|s| &s.first_column <= first && last <= &s.last_column)
    }
}

/// Landing of one column bottom: block `c` of tower `j+1` at offset `g`.
fn landing_kind(g: &BigInt, h: &BigInt) -> SegmentLanding {
    if g <= h {
        SegmentLanding::InTower { level: g.clone() }
    } else {
        SegmentLanding::Spacer { index: g - h }
    }
}

/// Computes the delay profile of `T^m` over the columns of the stage-`j`
/// cut.
///
/// Column `i`'s bottom is level `o_i` of tower `j+1`; when `o_i + m <=
/// h_{j+1}` its image is the single level `o_i + m`, which coarsens to a
/// tower-`j` level or spacer. Columns whose bottoms cross the tower-`j+1`
/// roof are reported as one trailing `Unresolved` segment: they are the
/// measure-vanishing walls between domains.
///
/// For affine spacer shapes (staircase, constant) consecutive columns with
/// equal landing stride are grouped by closed-form arithmetic, so the cost
/// is proportional to the number of segments, not to `r_j`.
pub fn delay_profile(table: &StageTable, j: u32, m: &BigInt) -> Result<DelayProfile> {
    if m.is_negative() {
        return Err(Error::InvalidArgument("shift m must be >= 0".into()));
    }
    // Per the domain-wall bookkeeping, profiles require two stages above j.
    table.stage(j + 2)?;
    let h = table.height(j)?.clone();
    let h_fine = table.height(j + 1)?.clone();
    let r = table.cut_count(j)?.clone();
    let affine = table.transition(j)?.spacers.affine();

    // Largest column whose bottom image stays inside tower j+1.
    let col_max = if m > &h_fine {
        BigInt::zero()
    } else {
        let budget = &h_fine - m;
        let mut lo = BigInt::one();
        let mut hi = r.clone();
        if table.column_offset(j, &lo)? > budget {
            lo = BigInt::zero();
        } else {
            while lo < hi {
                let mid: BigInt = (&lo + &hi + BigInt::one()) / BigInt::from(2);
                if table.column_offset(j, &mid)? <= budget {
                    lo = mid;
                } else {
                    hi = &mid - BigInt::one();
                }
            }
        }
        lo
    };

    let mut segments = Vec::new();
    if affine.is_some() {
        let (alpha, _beta) = affine.clone().unwrap();
        let mut i = BigInt::one();
        while i <= col_max {
            let p = table.column_offset(j, &i)? + m;
            let (c, g) = table.column_containing(j, &p)?;
            let delta: BigInt = &alpha * (&i - &c);
            let in_tower = &g <= &h;
            // How far the k=1 stride keeps the same landing kind.
            let kind_bound: Option<BigInt> = if in_tower {
                if delta.is_negative() {
                    Some(&g / -&delta)
                } else if delta.is_zero() {
                    None
                } else {
                    Some((&h - &g) / &delta)
                }
            } else if delta.is_negative() {
                Some((&g - &h - BigInt::one()) / -&delta)
            } else {
                // Spacer capacity of block c+x grows like alpha*(c+x)+beta;
                // the landing escapes upward only if delta > alpha.
                let growth = &delta - &alpha;
                if growth.is_positive() {
                    let spacer_cap = &h + table.transition(j)?.spacers.value(&c);
                    Some((&spacer_cap - &g) / &growth)
                } else {
                    None
                }
            };
            let mut n: BigInt = std::cmp::min(&col_max - &i, &r - &c);
            if let Some(k) = kind_bound {
                n = std::cmp::min(n, k);
            }
            debug_assert!(!n.is_negative());
            segments.push(ProfileSegment {
                first_column: i.clone(),
                last_column: &i + &n,
                landing: landing_kind(&g, &h),
                delay: SegmentDelay::Constant(-delta),
            });
            i += n + BigInt::one();
        }
    } else {
        // Explicit spacer lists: per-column landings, grouped into maximal
        // constant-stride runs.
        let mut i = BigInt::one();
        let mut run: Option<(BigInt, BigInt, SegmentLanding, BigInt, Option<BigInt>)> = None;
        // run = (first, last, landing_of_first, last_g, stride)
        while i <= col_max {
            let p = table.column_offset(j, &i)? + m;
            let (_, g) = table.column_containing(j, &p)?;
            let landing = landing_kind(&g, &h);
            run = match run {
                None => Some((i.clone(), i.clone(), landing, g, None)),
                Some((first, last, first_landing, last_g, stride)) => {
                    let same_kind = std::mem::discriminant(&first_landing)
                        == std::mem::discriminant(&landing);
                    let step = &last_g - &g;
                    let step_ok = match &stride {
                        None => true,
                        Some(s) => s == &step,
                    };
                    if same_kind && step_ok {
                        Some((first, i.clone(), first_landing, g, Some(step)))
                    } else {
                        segments.push(ProfileSegment {
                            first_column: first,
                            last_column: last,
                            landing: first_landing,
                            delay: match stride {
                                Some(s) => SegmentDelay::Constant(s),
                                None => SegmentDelay::Boundary,
                            },
                        });
                        Some((i.clone(), i.clone(), landing, g, None))
                    }
                }
            };
            i += BigInt::one();
        }
        if let Some((first, last, landing, _, stride)) = run {
            segments.push(ProfileSegment {
                first_column: first,
                last_column: last,
                landing,
                delay: match stride {
                    Some(s) => SegmentDelay::Constant(s),
                    None => SegmentDelay::Boundary,
                },
            });
        }
    }

    if col_max < r {
        segments.push(ProfileSegment {
            first_column: &col_max + BigInt::one(),
            last_column: r,
            landing: SegmentLanding::Unresolved,
            delay: SegmentDelay::Boundary,
        });
    }
    Ok(DelayProfile {
        stage: j,
        m: m.clone(),
        segments,
    })
}

/// A union of level ranges over equally spaced columns, represented at
/// stage `j+1` so its measure is exact.
#[derive(Debug, Clone)]
pub struct Rake {
    pub stage: u32,
    pub start_column: BigInt,
    pub tooth_count: u64,
    pub tooth_step: BigInt,
    pub level_lo: BigInt,
    pub level_hi: BigInt,
    pub body: LevelSet,
}

/// Builds the rake over columns `s, s+step, ..., s+(L-1)step` of the
/// stage-`j` cut, taking levels `n_lo..=n_hi` of each.
pub fn build_rake(
    table: &StageTable,
    j: u32,
    s: &BigInt,
    tooth_count: u64,
    tooth_step: &BigInt,
    n_lo: &BigInt,
    n_hi: &BigInt,
) -> Result<Rake> {
    if tooth_count < 1 || tooth_step < &BigInt::one() {
        return Err(Error::InvalidArgument(
            "rake needs tooth_count >= 1 and tooth_step >= 1".into(),
        ));
    }
    let r = table.cut_count(j)?.clone();
    let h = table.height(j)?;
    let last_col = s + tooth_step * BigInt::from(tooth_count - 1);
    if s < &BigInt::one() || last_col > r {
        return Err(Error::ColumnOutOfRange {
            stage: j,
            column: last_col,
            r,
        });
    }
    if n_lo.is_negative() || n_lo > n_hi || n_hi > h {
        return Err(Error::LevelOutOfRange {
            stage: j,
            level: n_hi.clone(),
            h: h.clone(),
        });
    }
    let height = (n_hi - n_lo + BigInt::one())
        .to_u64()
        .ok_or(Error::InvalidArgument("rake level range too large".into()))?;
    let mut body = Vec::with_capacity((tooth_count * height) as usize);
    for l in 0..tooth_count {
        let col = s + tooth_step * BigInt::from(l);
        let offset = table.column_offset(j, &col)?;
        let mut n = n_lo.clone();
        while &n <= n_hi {
            body.push(&offset + &n);
            n += BigInt::one();
        }
    }
    // Teeth are disjoint increasing blocks, so the concatenation is sorted.
    debug_assert!(body.windows(2).all(|w| w[0] < w[1]));
    Ok(Rake {
        stage: j,
        start_column: s.clone(),
        tooth_count,
        tooth_step: tooth_step.clone(),
        level_lo: n_lo.clone(),
        level_hi: n_hi.clone(),
        body: LevelSet::new(j + 1, body)?,
    })
}

/// Intersection of two level sets, exact, at the finer of the two stages.
pub fn intersect_sets(table: &StageTable, x: &LevelSet, y: &LevelSet) -> Result<LevelSet> {
    let target = x.stage().max(y.stage());
    let xf = table.refine(x, target)?;
    let yf = table.refine(y, target)?;
    let levels: Vec<BigInt> = xf
        .levels()
        .iter()
        .filter(|l| yf.contains(l))
        .cloned()
        .collect();
    Ok(LevelSet::from_sorted(target, levels))
}

/// One conditioned-measure bound check on a rake.
#[derive(Debug, Clone)]
pub struct RakeBoundReport {
    /// Enclosure of `|mu(T^m A ∩ B ∩ Y) - P(A) P(B) mu(Y)|`, normalized
    /// per mode.
    pub lhs: MeasureInterval,
    /// Enclosure of `mu(Y) * delta^{-1} * || (1/L) sum T^{l d step} f ||`.
    pub rhs: MeasureInterval,
    /// Delay used for the Cesàro average.
    pub d: BigInt,
    /// `lhs.hi <= rhs.lo`: the bound certified to hold.
    pub holds: bool,
    /// Every interior rake level boundary sits in `(delta h_j, (1-delta) h_j)`.
    pub height_window_ok: bool,
    /// The rake's teeth lie inside one constant-delay in-tower domain.
    pub single_domain: bool,
}

impl RakeBoundReport {
    pub fn valid_regime(&self) -> bool {
        self.height_window_ok && self.single_domain
    }
}

/// Checks the conditioned bound `|mu(T^m A ∩ B ∩ Y) - mu(A) mu(B) mu(Y)| <=
/// mu(Y) delta^{-1} ||(1/L) sum_l T^{l d} f||` on one rake.
///
/// The Cesàro shift is `d * tooth_step`, with `d` from the delay
/// decomposition of `m` at the rake's stage: stepped teeth sample every
/// `tooth_step`-th domain column, multiplying the landing stride.
pub fn rake_bound_check(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    m: &BigInt,
    rake: &Rake,
    delta: &BigRational,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<RakeBoundReport> {
    if !delta.is_positive() || delta >= &BigRational::one() {
        return Err(Error::InvalidArgument("delta must be in (0, 1)".into()));
    }
    let j = rake.stage;
    let h = table.height(j)?.clone();
    let dec = decompose_delay(m, &h);

    let mu_y = rake.body.measure(table)?;
    let by = intersect_sets(table, b, &rake.body)?;
    let raw = measure_intersection(table, &by, a, m, tol)?;

    let (lhs, p_y) = match mode {
        NormalizationMode::Probability { mu_ref } => {
            if !mu_ref.is_positive() {
                return Err(Error::BadReference);
            }
            let p_a = a.measure(table)? / mu_ref;
            let p_b = b.measure(table)? / mu_ref;
            let p_y = &mu_y / mu_ref;
            let product = &p_a * &p_b * &p_y;
            let lhs = raw
                .scale(&(BigRational::one() / mu_ref))
                .offset(&-product)
                .abs();
            (lhs, p_y)
        }
        NormalizationMode::Infinite => (raw.abs(), mu_y.clone()),
    };

    let shift = &dec.d * &rake.tooth_step;
    let norm_sq = cesaro_norm_sq(table, b, &shift, rake.tooth_count, mode, tol)?
        .clamp_nonnegative();
    let (sq_lo, sq_hi) = {
        let (lo_lo, _) = sqrt_enclosure(norm_sq.lo(), 64)?;
        let (_, hi_hi) = sqrt_enclosure(norm_sq.hi(), 64)?;
        (lo_lo, hi_hi)
    };
    let factor = &p_y / delta;
    let rhs = MeasureInterval::new(&factor * sq_lo, &factor * sq_hi)?;

    let holds = lhs.hi() <= rhs.lo();

    // delta h_j < v < (1 - delta) h_j for each cut the rake makes strictly
    // inside the tower.
    let h_rat = BigRational::from_integer(h.clone());
    let lo_gate = delta * &h_rat;
    let hi_gate = (BigRational::one() - delta) * &h_rat;
    let mut height_window_ok = true;
    for v in [&rake.level_lo, &rake.level_hi] {
        if v.is_zero() || v == &h {
            continue;
        }
        let v_rat = BigRational::from_integer(v.clone());
        if v_rat <= lo_gate || v_rat >= hi_gate {
            height_window_ok = false;
        }
    }

    let profile = delay_profile(table, j, m)?;
    let last_col = &rake.start_column + &rake.tooth_step * BigInt::from(rake.tooth_count - 1);
    let single_domain = profile
        .segment_containing(&rake.start_column, &last_col)
        .map(|seg| seg.is_in_tower())
        .unwrap_or(false);

    Ok(RakeBoundReport {
        lhs,
        rhs,
        d: dec.d,
        holds,
        height_window_ok,
        single_domain,
    })
}

/// Fraction of delays in `[d_lo, d_hi]` that are eps-good for `(B, L)`.
#[derive(Debug, Clone)]
pub struct DensityReport {
    pub fraction: BigRational,
    pub good: u64,
    pub total: u64,
}

/// A delay `d` is eps-good when `correlation(B, l d).hi < eps` for every
/// `l = 1..L-1`.
pub fn good_delay_density(
    table: &StageTable,
    b: &LevelSet,
    d_lo: &BigInt,
    d_hi: &BigInt,
    big_l: u64,
    eps: &BigRational,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<DensityReport> {
    if big_l < 2 {
        return Err(Error::InvalidArgument("L must be >= 2".into()));
    }
    if d_lo > d_hi {
        return Err(Error::InvalidArgument("d_lo must be <= d_hi".into()));
    }
    let mut good = 0u64;
    let mut total = 0u64;
    let mut d = d_lo.clone();
    while &d <= d_hi {
        total += 1;
        if is_good_delay(table, b, &d, big_l, eps, mode, tol)? {
            good += 1;
        }
        d += BigInt::one();
    }
    Ok(DensityReport {
        fraction: BigRational::new(BigInt::from(good), BigInt::from(total)),
        good,
        total,
    })
}

/// Whether a single delay is eps-good.
pub fn is_good_delay(
    table: &StageTable,
    b: &LevelSet,
    d: &BigInt,
    big_l: u64,
    eps: &BigRational,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<bool> {
    for l in 1..big_l {
        let shift = d * BigInt::from(l);
        let c = correlation(table, b, &shift, mode, tol)?;
        if c.hi() >= eps {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multiplier {
    /// Stage whose height window catches the multiple.
    pub p: u32,
    pub q: BigInt,
}

/// Smallest built stage `p` admitting `q >= 1` with `q d in [h_p, 2 h_p]`;
/// `q = ceil(h_p / d)` is the only candidate worth checking. `None` means
/// no built stage admits one (only possible when `d > 2 h_p` for all of
/// them) — reported, not guessed.
pub fn find_multiplier(table: &StageTable, d: &BigInt) -> Result<Option<Multiplier>> {
    if d < &BigInt::one() {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    for p in 1..=table.depth() {
        let h = table.height(p)?;
        let q = std::cmp::max(BigInt::one(), div_ceil(h, d));
        if &q * d <= BigInt::from(2) * h {
            return Ok(Some(Multiplier { p, q }));
        }
    }
    Ok(None)
}

/// Deterministic sampling plan for a mixing sweep: `samples_per_window`
/// shifts drawn from `[h_j, 2 h_j]` for each window stage.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub windows: Vec<u32>,
    pub samples_per_window: u32,
    pub seed: u64,
}

/// Draws the shift samples for a plan; fixed seed gives a fixed sequence.
pub fn sweep_samples(table: &StageTable, plan: &SweepPlan) -> Result<Vec<BigInt>> {
    let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
    let mut ms = Vec::with_capacity(plan.windows.len() * plan.samples_per_window as usize);
    for &w in &plan.windows {
        let lo = table.height(w)?.clone();
        let hi = BigInt::from(2) * &lo + BigInt::one();
        for _ in 0..plan.samples_per_window {
            ms.push(rng.gen_bigint_range(&lo, &hi));
        }
    }
    Ok(ms)
}

#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub m: BigInt,
    pub interval: MeasureInterval,
    /// `P(A) P(B) mu_ref` in probability mode, `0` in infinite mode.
    pub target: BigRational,
    /// Certified distance from the interval to the target.
    pub residual_to_target: BigRational,
}

/// Evaluates one sweep sample.
pub fn sweep_record(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    m: &BigInt,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<SweepRecord> {
    let interval = measure_intersection(table, a, b, m, tol)?;
    let target = sweep_target(table, a, b, mode)?;
    let lo_dist = (interval.lo() - &target).abs();
    let hi_dist = (interval.hi() - &target).abs();
    Ok(SweepRecord {
        m: m.clone(),
        interval,
        target,
        residual_to_target: lo_dist.max(hi_dist),
    })
}

/// The mixing target for a pair of sets under the given normalization.
pub fn sweep_target(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    mode: &NormalizationMode,
) -> Result<BigRational> {
    match mode {
        NormalizationMode::Probability { mu_ref } => {
            if !mu_ref.is_positive() {
                return Err(Error::BadReference);
            }
            Ok(a.measure(table)? * b.measure(table)? / mu_ref)
        }
        NormalizationMode::Infinite => Ok(BigRational::zero()),
    }
}

/// Full sweep: sample, evaluate, sort by shift.
pub fn mixing_sweep(
    table: &StageTable,
    a: &LevelSet,
    b: &LevelSet,
    plan: &SweepPlan,
    mode: &NormalizationMode,
    tol: &BigRational,
) -> Result<Vec<SweepRecord>> {
    let ms = sweep_samples(table, plan)?;
    let mut records = ms
        .iter()
        .map(|m| sweep_record(table, a, b, m, mode, tol))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|x, y| x.m.cmp(&y.m));
    Ok(records)
}

/// Ensures `image` calls with shift up to `m` can meet `tol` on this table:
/// at most `m` levels are ever unresolved, so depth `J` with `m * w_J <=
/// tol` suffices.
pub fn stage_needed_for(table: &StageTable, m: &BigInt, tol: &BigRational) -> Result<u32> {
    if !tol.is_positive() {
        return Err(Error::InvalidArgument(
            "a positive tolerance is required to bound the depth".into(),
        ));
    }
    let m_rat = BigRational::from_integer(m.clone());
    for j in 1..=table.depth() {
        if &m_rat * table.width(j)? <= *tol {
            return Ok(j);
        }
    }
    Err(Error::StageMissing {
        needed: table.depth() + 1,
        depth: table.depth(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_stage_table, ConstructionParams};
    use crate::ratio::rat;

    fn set(stage: u32, levels: &[i64]) -> LevelSet {
        LevelSet::new(stage, levels.iter().map(|&l| BigInt::from(l)).collect()).unwrap()
    }

    #[test]
    fn decompose_spot_values() {
        let d = decompose_delay(&BigInt::from(11), &BigInt::from(4));
        assert_eq!((d.d, d.t), (BigInt::from(2), BigInt::from(2)));
        let d = decompose_delay(&BigInt::from(0), &BigInt::from(7));
        assert_eq!((d.d, d.t), (BigInt::zero(), BigInt::zero()));
        let d = decompose_delay(&BigInt::from(4), &BigInt::from(4));
        assert_eq!((d.d, d.t), (BigInt::one(), BigInt::zero()));
        let d = decompose_delay(&BigInt::from(9), &BigInt::from(4));
        assert_eq!((d.d, d.t), (BigInt::from(2), BigInt::zero()));
    }

    #[test]
    fn classify_picks_the_height_window() {
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 5).unwrap();
        let recs = classify_case(
            &t,
            &[BigInt::from(50)],
            Some(&CaseThresholds::default()),
        )
        .unwrap();
        assert_eq!(recs[0].j, 3);
        assert_eq!(recs[0].d, BigInt::from(2));
        assert_eq!(recs[0].t, BigInt::from(15));
        assert_eq!(recs[0].ratio, rat(4, 17));
        assert_eq!(recs[0].tag, CaseTag::C);
        // m = h_j gives the first roof crossing.
        let recs = classify_case(&t, &[BigInt::from(17)], None).unwrap();
        assert_eq!((recs[0].j, recs[0].d.clone(), recs[0].t.clone()), (3, BigInt::one(), BigInt::zero()));
        assert_eq!(recs[0].tag, CaseTag::Unclassified);
        // Too-large m needs a deeper table.
        let err = classify_case(&t, &[BigInt::from(10_000)], None).unwrap_err();
        assert!(err.missing_stage().is_some());
    }

    #[test]
    fn profile_matches_hand_landings() {
        // h_2 = 4, r_2 = 3, offsets 0, 5, 11; bottoms + 6 = {6, 11, 17}.
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 3, 4]), 4).unwrap();
        let p = delay_profile(&t, 2, &BigInt::from(6)).unwrap();
        assert_eq!(p.segments.len(), 2);
        assert_eq!(p.segments[0].first_column, BigInt::one());
        assert_eq!(p.segments[0].last_column, BigInt::from(2));
        assert_eq!(
            p.segments[0].landing,
            SegmentLanding::InTower { level: BigInt::one() }
        );
        assert_eq!(p.segments[0].delay, SegmentDelay::Constant(BigInt::one()));
        assert_eq!(
            p.segments[1].landing,
            SegmentLanding::Spacer { index: BigInt::from(2) }
        );
    }

    #[test]
    fn profile_zero_shift_is_one_flat_segment() {
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 6).unwrap();
        for j in [2u32, 3, 4] {
            let p = delay_profile(&t, j, &BigInt::zero()).unwrap();
            assert_eq!(p.segments.len(), 1);
            assert_eq!(
                p.segments[0].landing,
                SegmentLanding::InTower { level: BigInt::zero() }
            );
            assert_eq!(p.segments[0].delay, SegmentDelay::Constant(BigInt::zero()));
            assert_eq!(p.segments[0].column_count(), t.cut_count(j).unwrap().clone());
        }
    }

    #[test]
    fn profile_small_shift_is_pure_shift() {
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 6).unwrap();
        let m = BigInt::from(3);
        let p = delay_profile(&t, 4, &m).unwrap();
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.segments[0].landing, SegmentLanding::InTower { level: m });
        assert_eq!(p.segments[0].delay, SegmentDelay::Constant(BigInt::zero()));
    }

    #[test]
    fn profile_walls_become_one_boundary_tail() {
        // j = 4: h_4 = 77, h_5 = 399, r_4 = 5, offsets 0, 78, 157, 237, 318.
        // m = 200: bottoms map to 200, 278, 357 (resolved), 437, 518 (walls).
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 6).unwrap();
        let p = delay_profile(&t, 4, &BigInt::from(200)).unwrap();
        assert_eq!(p.segments.len(), 2);
        assert_eq!(p.segments[0].last_column, BigInt::from(3));
        assert_eq!(
            p.segments[0].landing,
            SegmentLanding::InTower { level: BigInt::from(43) }
        );
        assert_eq!(p.segments[0].delay, SegmentDelay::Constant(BigInt::from(2)));
        assert_eq!(p.segments[1].landing, SegmentLanding::Unresolved);
        assert_eq!(p.segments[1].delay, SegmentDelay::Boundary);
        assert_eq!(p.segments[1].first_column, BigInt::from(4));
        assert_eq!(p.segments[1].last_column, BigInt::from(5));
    }

    #[test]
    fn rake_bodies_and_measures() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 3]), 3).unwrap();
        // j = 2: offsets 0, 5, 11.
        let rake = build_rake(
            &t,
            2,
            &BigInt::one(),
            2,
            &BigInt::one(),
            &BigInt::zero(),
            &BigInt::one(),
        )
        .unwrap();
        let got: Vec<i64> = rake.body.levels().iter().map(|l| l.try_into().unwrap()).collect();
        assert_eq!(got, vec![0, 1, 5, 6]);
        assert_eq!(rake.body.measure(&t).unwrap(), rat(4, 6));
        // Three bottoms.
        let rake = build_rake(
            &t,
            2,
            &BigInt::one(),
            3,
            &BigInt::one(),
            &BigInt::zero(),
            &BigInt::zero(),
        )
        .unwrap();
        let got: Vec<i64> = rake.body.levels().iter().map(|l| l.try_into().unwrap()).collect();
        assert_eq!(got, vec![0, 5, 11]);
        // Out-of-range teeth are rejected.
        assert!(build_rake(
            &t,
            2,
            &BigInt::from(2),
            3,
            &BigInt::one(),
            &BigInt::zero(),
            &BigInt::zero()
        )
        .is_err());
    }

    #[test]
    fn multiplier_search_examples() {
        let t = build_stage_table(ConstructionParams::staircase_list(4, &[2, 2]), 2).unwrap();
        // h_1 = 4: d = 3 -> q = 2 (6 in [4, 8]); d = 5 -> q = 1; d = 1 -> q = 4.
        assert_eq!(
            find_multiplier(&t, &BigInt::from(3)).unwrap(),
            Some(Multiplier { p: 1, q: BigInt::from(2) })
        );
        assert_eq!(
            find_multiplier(&t, &BigInt::from(5)).unwrap(),
            Some(Multiplier { p: 1, q: BigInt::one() })
        );
        assert_eq!(
            find_multiplier(&t, &BigInt::one()).unwrap(),
            Some(Multiplier { p: 1, q: BigInt::from(4) })
        );
        // d too large for every built stage: h = (4, 14): 2*h_2 = 28 < 29.
        assert_eq!(find_multiplier(&t, &BigInt::from(29)).unwrap(), None);
    }

    #[test]
    fn sweep_is_deterministic_and_sorted() {
        let t = build_stage_table(ConstructionParams::affine_staircase(1), 8).unwrap();
        let a = set(2, &[0]);
        let plan = SweepPlan {
            windows: vec![3, 4],
            samples_per_window: 8,
            seed: 7,
        };
        let mode = NormalizationMode::Infinite;
        let r1 = mixing_sweep(&t, &a, &a, &plan, &mode, &rat(1, 1024)).unwrap();
        let r2 = mixing_sweep(&t, &a, &a, &plan, &mode, &rat(1, 1024)).unwrap();
        assert_eq!(r1.len(), 16);
        assert!(r1.windows(2).all(|w| w[0].m <= w[1].m));
        for (x, y) in r1.iter().zip(&r2) {
            assert_eq!(x.m, y.m);
            assert_eq!(x.interval, y.interval);
        }
    }

    #[test]
    fn zero_shift_sweep_record() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(11, 4));
        let rec = sweep_record(&t, &b, &b, &BigInt::zero(), &mode, &rat(0, 1)).unwrap();
        assert_eq!(rec.interval, MeasureInterval::point(rat(1, 2)));
        // target = mu(B)^2 / mu_ref = (1/4)/(11/4) = 1/11.
        assert_eq!(rec.target, rat(1, 11));
        assert_eq!(rec.residual_to_target, rat(1, 2) - rat(1, 11));
    }

    #[test]
    fn good_density_degenerate_cases() {
        let t = build_stage_table(ConstructionParams::staircase_list(1, &[2, 2]), 3).unwrap();
        let b = set(2, &[0]);
        let mode = NormalizationMode::probability(rat(11, 4));
        // eps above C(0).hi: everything is good.
        let rep = good_delay_density(
            &t,
            &b,
            &BigInt::zero(),
            &BigInt::from(2),
            3,
            &rat(1, 1),
            &mode,
            &rat(1, 16),
        )
        .unwrap();
        assert_eq!(rep.fraction, rat(1, 1));
        // d = 0 with eps <= C(0) is never good.
        let rep = good_delay_density(
            &t,
            &b,
            &BigInt::zero(),
            &BigInt::zero(),
            3,
            &rat(1, 100),
            &mode,
            &rat(0, 1),
        )
        .unwrap();
        assert_eq!(rep.fraction, rat(0, 1));
        assert_eq!((rep.good, rep.total), (0, 1));
    }
}
