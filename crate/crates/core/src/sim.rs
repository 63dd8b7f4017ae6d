//! Auto-extending driver around a [`StageTable`].
//!
//! The table-level operations are pure read functions that fail with
//! [`Error::StageMissing`] when the table is too shallow. A [`Simulator`]
//! owns the table and retries after extending, within explicit resource
//! limits, which is the right shape for single-threaded callers. Parallel
//! sweeps instead pre-extend once ([`Simulator::prepare_depth`]) and then
//! share `&StageTable` across workers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

use crate::analysis::{
    self, CaseRecord, CaseThresholds, DelayProfile, DensityReport, Multiplier, Rake,
    RakeBoundReport, SweepPlan, SweepRecord,
};
use crate::construction::{ConstructionParams, StageTable};
use crate::dynamics::{self, BlumHansonReport, CertifiedImage, NormalizationMode};
use crate::error::{Error, Result};
use crate::interval::MeasureInterval;
use crate::level_set::LevelSet;

/// Resource guards for automatic extension.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_stage: u32,
    pub max_cells: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_stage: 64,
            max_cells: 10_000_000,
        }
    }
}

pub struct Simulator {
    table: StageTable,
    limits: Limits,
}

impl Simulator {
    pub fn new(params: ConstructionParams) -> Result<Self> {
        Simulator::with_limits(params, Limits::default())
    }

    pub fn with_limits(params: ConstructionParams, limits: Limits) -> Result<Self> {
        let mut table = StageTable::build(params, 1)?;
        table.set_cell_limit(Some(limits.max_cells));
        Ok(Simulator { table, limits })
    }

    pub fn from_table(mut table: StageTable, limits: Limits) -> Self {
        table.set_cell_limit(Some(limits.max_cells));
        Simulator { table, limits }
    }

    pub fn table(&self) -> &StageTable {
        &self.table
    }

    pub fn into_table(self) -> StageTable {
        self.table
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    /// Extends the table, wrapping policy exhaustion and limit breaches as
    /// [`Error::CannotExtend`].
    pub fn extend_to(&mut self, depth: u32) -> Result<()> {
        if depth > self.limits.max_stage {
            return Err(Error::CannotExtend {
                stage: depth,
                source: Box::new(Error::InvalidArgument(format!(
                    "stage limit {} reached",
                    self.limits.max_stage
                ))),
            });
        }
        self.table.extend_to(depth).map_err(|e| Error::CannotExtend {
            stage: depth,
            source: Box::new(e),
        })
    }

    /// Runs a read-only computation, extending the table on demand.
    fn run<T>(&mut self, mut f: impl FnMut(&StageTable) -> Result<T>) -> Result<T> {
        loop {
            match f(&self.table) {
                Err(e) => match e.missing_stage() {
                    Some(needed) => self.extend_to(needed)?,
                    None => return Err(e),
                },
                ok => return ok,
            }
        }
    }

    /// Pre-extends so every image with shift `<= m_max` meets `tol` without
    /// further building: at most `m` levels are ever unresolved, so
    /// `m_max * w_J <= tol` suffices.
    pub fn prepare_depth(&mut self, m_max: &BigInt, tol: &BigRational) -> Result<u32> {
        if !tol.is_positive() {
            return Err(Error::InvalidArgument(
                "prepare_depth needs a positive tolerance".into(),
            ));
        }
        self.run(|t| analysis::stage_needed_for(t, m_max, tol))
    }

    /// Like [`Simulator::prepare_depth`], but a construction whose policy
    /// runs out early is left at its deepest buildable stage instead of
    /// failing: exact resolution often needs less depth than the worst-case
    /// bound, and the later computation will say so if it truly cannot.
    pub fn prepare_depth_or_exhaust(&mut self, m_max: &BigInt, tol: &BigRational) -> Result<u32> {
        match self.prepare_depth(m_max, tol) {
            Ok(depth) => Ok(depth),
            Err(Error::CannotExtend { source, .. })
                if matches!(*source, Error::PolicyUndefined { .. }) =>
            {
                Ok(self.table.depth())
            }
            Err(e) => Err(e),
        }
    }

    /// Pre-extends for a sweep plan: deep enough to sample every window and
    /// to certify every sampled shift.
    pub fn prepare_sweep(&mut self, plan: &SweepPlan, tol: &BigRational) -> Result<u32> {
        let deepest_window = plan.windows.iter().copied().max().unwrap_or(1);
        self.extend_to(deepest_window.max(self.table.depth()))?;
        let m_max = BigInt::from(2) * self.table.height(deepest_window)?;
        self.prepare_depth(&m_max, tol)
    }

    pub fn image(&mut self, a: &LevelSet, m: &BigInt, tol: &BigRational) -> Result<CertifiedImage> {
        self.run(|t| dynamics::image(t, a, m, tol))
    }

    pub fn measure_intersection(
        &mut self,
        a: &LevelSet,
        b: &LevelSet,
        m: &BigInt,
        tol: &BigRational,
    ) -> Result<MeasureInterval> {
        self.run(|t| dynamics::measure_intersection(t, a, b, m, tol))
    }

    pub fn correlation(
        &mut self,
        b: &LevelSet,
        n: &BigInt,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<MeasureInterval> {
        self.run(|t| dynamics::correlation(t, b, n, mode, tol))
    }

    pub fn cesaro_norm_sq(
        &mut self,
        b: &LevelSet,
        d: &BigInt,
        big_l: u64,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<MeasureInterval> {
        self.run(|t| dynamics::cesaro_norm_sq(t, b, d, big_l, mode, tol))
    }

    pub fn blum_hanson_check(
        &mut self,
        b: &LevelSet,
        d: &BigInt,
        big_l: u64,
        eps: &BigRational,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<BlumHansonReport> {
        self.run(|t| dynamics::blum_hanson_check(t, b, d, big_l, eps, mode, tol))
    }

    pub fn classify_case(
        &mut self,
        ms: &[BigInt],
        thresholds: Option<&CaseThresholds>,
    ) -> Result<Vec<CaseRecord>> {
        self.run(|t| analysis::classify_case(t, ms, thresholds))
    }

    pub fn delay_profile(&mut self, j: u32, m: &BigInt) -> Result<DelayProfile> {
        self.run(|t| analysis::delay_profile(t, j, m))
    }

    pub fn build_rake(
        &mut self,
        j: u32,
        s: &BigInt,
        tooth_count: u64,
        tooth_step: &BigInt,
        n_lo: &BigInt,
        n_hi: &BigInt,
    ) -> Result<Rake> {
        self.run(|t| analysis::build_rake(t, j, s, tooth_count, tooth_step, n_lo, n_hi))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn rake_bound_check(
        &mut self,
        a: &LevelSet,
        b: &LevelSet,
        m: &BigInt,
        rake: &Rake,
        delta: &BigRational,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<RakeBoundReport> {
        self.run(|t| analysis::rake_bound_check(t, a, b, m, rake, delta, mode, tol))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn good_delay_density(
        &mut self,
        b: &LevelSet,
        d_lo: &BigInt,
        d_hi: &BigInt,
        big_l: u64,
        eps: &BigRational,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<DensityReport> {
        self.run(|t| analysis::good_delay_density(t, b, d_lo, d_hi, big_l, eps, mode, tol))
    }

    pub fn find_multiplier(&mut self, d: &BigInt) -> Result<Option<Multiplier>> {
        self.run(|t| analysis::find_multiplier(t, d))
    }

    pub fn mixing_sweep(
        &mut self,
        a: &LevelSet,
        b: &LevelSet,
        plan: &SweepPlan,
        mode: &NormalizationMode,
        tol: &BigRational,
    ) -> Result<Vec<SweepRecord>> {
        self.prepare_sweep(plan, tol)?;
        self.run(|t| analysis::mixing_sweep(t, a, b, plan, mode, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;

    #[test]
    fn auto_extension_reaches_the_needed_depth() {
        let mut sim = Simulator::new(ConstructionParams::affine_staircase(1)).unwrap();
        assert_eq!(sim.table().depth(), 1);
        let a = LevelSet::new(2, vec![BigInt::from(0)]).unwrap();
        // Needs stage 2 for the set, deeper for the image.
        let img = sim.image(&a, &BigInt::from(9), &rat(0, 1)).unwrap();
        assert_eq!(img.residual, rat(0, 1));
        assert!(sim.table().depth() >= 3);
    }

    #[test]
    fn stage_limit_is_enforced() {
        let limits = Limits {
            max_stage: 3,
            max_cells: 1_000_000,
        };
        let mut sim =
            Simulator::with_limits(ConstructionParams::staircase_list(1, &[2, 2]), limits)
                .unwrap();
        let a = LevelSet::new(2, vec![BigInt::from(0)]).unwrap();
        // Exact resolution of m = 9 would need stage 4.
        let err = sim.image(&a, &BigInt::from(9), &rat(0, 1)).unwrap_err();
        assert!(matches!(err, Error::CannotExtend { .. }));
    }

    #[test]
    fn prepare_sweep_bounds_the_depth() {
        let mut sim = Simulator::new(ConstructionParams::affine_staircase(1)).unwrap();
        let plan = SweepPlan {
            windows: vec![4],
            samples_per_window: 4,
            seed: 1,
        };
        let depth = sim.prepare_sweep(&plan, &rat(1, 1 << 20)).unwrap();
        // 2 * h_4 * w_depth <= 2^-20.
        let bound = BigRational::from_integer(BigInt::from(2) * sim.table().height(4).unwrap())
            * sim.table().width(depth).unwrap();
        assert!(bound <= rat(1, 1 << 20));
    }
}
