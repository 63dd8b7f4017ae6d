//! Exact-arithmetic simulator for rank-one cutting-and-stacking
//! transformations, specialized to staircase constructions.
//!
//! The library builds the symbolic stage recursion (heights, widths, column
//! offsets), computes certified enclosures of `mu(A ∩ T^m B)` and of the
//! correlation and Cesàro-average quantities used in mixing arguments, and
//! implements the staircase delay geometry: delay decompositions, constant-
//! delay domains, rakes and good-delay densities. All core arithmetic is on
//! arbitrary-precision integers and rationals; every reported quantity is
//! either exact or an enclosure with exact endpoints.

pub mod analysis;
pub mod config;
pub mod construction;
pub mod dynamics;
pub mod error;
pub mod interval;
pub mod level_set;
pub mod oracle;
pub mod parse;
pub mod ratio;
pub mod sim;

pub use analysis::{
    build_rake, classify_case, decompose_delay, delay_profile, find_multiplier,
    good_delay_density, mixing_sweep, CaseRecord, CaseTag, CaseThresholds, DelayDecomposition,
    DelayProfile, DensityReport, Multiplier, ProfileSegment, Rake, RakeBoundReport,
    SegmentDelay, SegmentLanding, SweepPlan, SweepRecord,
};
pub use construction::{
    build_stage_table, ConstructionParams, CutPolicy, SpacerPolicy, Stage, StageTable,
    TowerCoord,
};
pub use dynamics::{
    blum_hanson_check, cesaro_norm_sq, correlation, default_mu_ref, image, measure_intersection,
    BlumHansonReport, CertifiedImage, NormalizationMode,
};
pub use error::{Error, Result};
pub use interval::MeasureInterval;
pub use level_set::LevelSet;
pub use oracle::{oracle_check, oracle_measure_intersection, OracleInstance, OracleResult};
pub use sim::{Limits, Simulator};
