//! Experiment driver: builds stage tables from config files, runs the
//! measure/sweep/profile/check commands, and emits exact-rational CSV plus
//! static SVG figures. Sampling is seeded, evaluation order is fixed, and
//! parallel workers only read a pre-extended table, so a fixed seed yields
//! byte-identical output at any parallelism width.

mod svg;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use rayon::prelude::*;

use staircase_core::analysis::{is_good_delay, sweep_record, sweep_samples};
use staircase_core::config::{parse_construction_config, parse_cut_policy, parse_spacer_policy};
use staircase_core::parse::{parse_level_set, parse_rake_spec};
use staircase_core::ratio::{format_ratio, parse_ratio};
use staircase_core::{
    default_mu_ref, CaseThresholds, Limits, NormalizationMode, SegmentDelay, SegmentLanding,
    Simulator, SweepPlan,
};

#[derive(Parser)]
#[command(name = "staircase", version, about = "Exact simulator for staircase rank-one transformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Construction source; flags override config-file values.
#[derive(Args, Clone)]
struct BuildOpts {
    /// Key-value construction config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial height index (overrides config).
    #[arg(long)]
    h1: Option<String>,
    /// Cut policy: `list:2,3,4`, `affine:a,b`, `equal-height`.
    #[arg(long)]
    cuts: Option<String>,
    /// Spacer policy: `staircase`, `const:k`, `file:<path>`.
    #[arg(long)]
    spacers: Option<String>,
    /// Width of the stage-1 levels, `p/q`.
    #[arg(long)]
    base_width: Option<String>,
}

#[derive(Args, Clone)]
struct ModeOpts {
    /// `probability` or `infinite`.
    #[arg(long, default_value = "probability")]
    mode: String,
    /// Probability reference mass `p/q`; defaults to the deepest built
    /// stage's total measure.
    #[arg(long)]
    mu_ref: Option<String>,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Enclosure tolerance `p/q`, must be positive.
    #[arg(long, default_value = "1/1048576")]
    tol: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel evaluation; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stage table.
    Stages {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long, default_value_t = 6)]
        depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One certified intersection measure mu(A ∩ T^m B).
    Measure {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        m: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Seeded mixing sweep over stage windows [h_j, 2 h_j].
    Sweep {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        /// Comma-separated window stages, e.g. `5,7`.
        #[arg(long)]
        windows: String,
        #[arg(long, default_value_t = 16)]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        mode: ModeOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Delay decomposition and case classification for given shifts.
    Delays {
        #[command(flatten)]
        build: BuildOpts,
        /// Comma-separated shifts.
        #[arg(long)]
        ms: String,
        /// Ratio below which the tag leans to case (0).
        #[arg(long, default_value = "1/10")]
        zero_max: String,
        /// Ratio above which the tag leans to case (infinity).
        #[arg(long, default_value = "10/1")]
        infinity_min: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constant-delay domain profile of T^m over the stage-j columns.
    Profile {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long)]
        j: u32,
        #[arg(long)]
        m: String,
        /// Also render the domain picture to this SVG file.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conditioned-measure bound report on one rake.
    RakeCheck {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        m: String,
        /// Rake spec `j=<j>;s=<s>;L=<L>;step=<q>;levels=<lo>..<hi>`.
        #[arg(long)]
        rake: String,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[command(flatten)]
        mode: ModeOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Blum-Hanson inequality report for (B, d, L, eps).
    BhCheck {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        d: String,
        #[arg(long = "L", default_value_t = 2)]
        tooth_count: u64,
        #[arg(long)]
        eps: String,
        #[command(flatten)]
        mode: ModeOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fraction of eps-good delays in [d_lo, d_hi].
    GoodDensity {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        d_lo: String,
        #[arg(long)]
        d_hi: String,
        #[arg(long = "L", default_value_t = 3)]
        tooth_count: u64,
        #[arg(long)]
        eps: String,
        #[command(flatten)]
        mode: ModeOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Smallest stage p with q d in [h_p, 2 h_p].
    FindQ {
        #[command(flatten)]
        build: BuildOpts,
        #[arg(long)]
        d: String,
        /// Stages to build before searching.
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn limits_from_env() -> anyhow::Result<Limits> {
    let mut limits = Limits::default();
    if let Ok(v) = std::env::var("STAIRCASE_MAX_STAGE_CELLS") {
        limits.max_cells = v
            .parse::<u64>()
            .map_err(|_| anyhow!("STAIRCASE_MAX_STAGE_CELLS must be an integer, got `{v}`"))?;
    }
    Ok(limits)
}

impl BuildOpts {
    fn params(&self) -> anyhow::Result<staircase_core::ConstructionParams> {
        let mut params = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config `{}`", path.display()))?;
                parse_construction_config(&text, path.parent())?
            }
            None => {
                if self.h1.is_none() || self.cuts.is_none() {
                    bail!("either --config or both --h1 and --cuts are required");
                }
                staircase_core::ConstructionParams::new(
                    self.h1.as_ref().unwrap().parse::<BigInt>().map_err(|_| {
                        anyhow!("invalid --h1 `{}`", self.h1.as_ref().unwrap())
                    })?,
                    parse_cut_policy(self.cuts.as_ref().unwrap())?,
                    staircase_core::SpacerPolicy::Staircase,
                )
            }
        };
        if let Some(h1) = &self.h1 {
            params.h1 = h1
                .parse::<BigInt>()
                .map_err(|_| anyhow!("invalid --h1 `{h1}`"))?;
        }
        if let Some(cuts) = &self.cuts {
            params.cuts = parse_cut_policy(cuts)?;
        }
        if let Some(spacers) = &self.spacers {
            let base = self.config.as_deref().and_then(Path::parent);
            params.spacers = parse_spacer_policy(spacers, base)?;
        }
        if let Some(w) = &self.base_width {
            params = params.with_base_width(parse_ratio(w)?);
        }
        Ok(params)
    }

    fn simulator(&self) -> anyhow::Result<Simulator> {
        Ok(Simulator::with_limits(self.params()?, limits_from_env()?)?)
    }
}

impl ModeOpts {
    /// Resolves the mode; the default reference is read off the simulator's
    /// current depth, so call this after any pre-extension.
    fn resolve(&self, sim: &Simulator) -> anyhow::Result<NormalizationMode> {
        match self.mode.as_str() {
            "infinite" => Ok(NormalizationMode::Infinite),
            "probability" => {
                let mu_ref = match &self.mu_ref {
                    Some(s) => parse_ratio(s)?,
                    None => default_mu_ref(sim.table()),
                };
                Ok(NormalizationMode::Probability { mu_ref })
            }
            other => bail!("unknown mode `{other}` (use probability or infinite)"),
        }
    }
}

fn mode_comment(mode: &NormalizationMode) -> String {
    match mode {
        NormalizationMode::Probability { mu_ref } => {
            format!("# mode=probability mu_ref={}\n", format_ratio(mu_ref))
        }
        NormalizationMode::Infinite => "# mode=infinite\n".to_string(),
    }
}

fn parse_tol(s: &str) -> anyhow::Result<BigRational> {
    let tol = parse_ratio(s)?;
    if !tol.is_positive() {
        bail!("tolerance must be positive, got `{s}`");
    }
    Ok(tol)
}

fn parse_bigint(s: &str) -> anyhow::Result<BigInt> {
    s.trim()
        .parse::<BigInt>()
        .map_err(|_| anyhow!("invalid integer `{s}`"))
}

fn write_output(out: Option<&PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("cannot write `{}`", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn thread_pool(jobs: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be >= 1");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn landing_field(landing: &SegmentLanding) -> String {
    match landing {
        SegmentLanding::InTower { level } => level.to_string(),
        SegmentLanding::Spacer { .. } => "spacer".to_string(),
        SegmentLanding::Unresolved => "unresolved".to_string(),
    }
}

fn delay_field(delay: &SegmentDelay) -> String {
    match delay {
        SegmentDelay::Constant(d) => d.to_string(),
        SegmentDelay::Boundary => "boundary".to_string(),
    }
}

/// Exit code 2 signals a violated check; other failures exit 1.
fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Stages { build, depth, out } => {
            let mut sim = build.simulator()?;
            sim.extend_to(depth)?;
            let table = sim.table();
            let mut csv = String::from("j,h,r,w,total\n");
            for j in 1..=table.depth() {
                let r = table
                    .cut_count(j)
                    .map(|r| r.to_string())
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    j,
                    table.height(j)?,
                    r,
                    format_ratio(table.width(j)?),
                    format_ratio(table.total_measure(j)?),
                ));
            }
            write_output(out.as_ref(), &csv)?;
            Ok(0)
        }
        Command::Measure { build, a, b, m, common } => {
            let mut sim = build.simulator()?;
            let a = parse_level_set(&a)?;
            let b = parse_level_set(&b)?;
            let m = parse_bigint(&m)?;
            let tol = parse_tol(&common.tol)?;
            let interval = sim.measure_intersection(&a, &b, &m, &tol)?;
            let line = format!(
                "{},{}\n",
                format_ratio(interval.lo()),
                format_ratio(interval.hi())
            );
            write_output(common.out.as_ref(), &line)?;
            Ok(0)
        }
        Command::Sweep {
            build,
            a,
            b,
            windows,
            samples,
            seed,
            mode,
            common,
        } => {
            let mut sim = build.simulator()?;
            let a = parse_level_set(&a)?;
            let b = parse_level_set(&b)?;
            let tol = parse_tol(&common.tol)?;
            let windows: Vec<u32> = windows
                .split(',')
                .map(|w| w.trim().parse::<u32>().map_err(|_| anyhow!("bad window `{w}`")))
                .collect::<anyhow::Result<_>>()?;
            if windows.is_empty() {
                bail!("--windows needs at least one stage");
            }
            let plan = SweepPlan {
                windows,
                samples_per_window: samples,
                seed,
            };
            // Exclusive build phase, then read-only parallel evaluation.
            sim.prepare_sweep(&plan, &tol)?;
            let mode = mode.resolve(&sim)?;
            let table = sim.table();
            let ms = sweep_samples(table, &plan)?;
            let pool = thread_pool(common.jobs)?;
            let mut records = pool.install(|| {
                ms.par_iter()
                    .map(|m| sweep_record(table, &a, &b, m, &mode, &tol))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            records.sort_by(|x, y| x.m.cmp(&y.m));
            let mut csv = mode_comment(&mode);
            csv.push_str("m,lo,hi,target,residual_hi\n");
            for rec in &records {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    rec.m,
                    format_ratio(rec.interval.lo()),
                    format_ratio(rec.interval.hi()),
                    format_ratio(&rec.target),
                    format_ratio(&rec.residual_to_target),
                ));
            }
            write_output(common.out.as_ref(), &csv)?;
            Ok(0)
        }
        Command::Delays {
            build,
            ms,
            zero_max,
            infinity_min,
            out,
        } => {
            let mut sim = build.simulator()?;
            let ms: Vec<BigInt> = ms
                .split(',')
                .map(parse_bigint)
                .collect::<anyhow::Result<_>>()?;
            let thresholds = CaseThresholds {
                zero_max: parse_ratio(&zero_max)?,
                infinity_min: parse_ratio(&infinity_min)?,
            };
            let records = sim.classify_case(&ms, Some(&thresholds))?;
            let mut csv = String::from("m,stage,d,t,ratio,tag\n");
            for r in &records {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.m,
                    r.j,
                    r.d,
                    r.t,
                    format_ratio(&r.ratio),
                    r.tag
                ));
            }
            write_output(out.as_ref(), &csv)?;
            Ok(0)
        }
        Command::Profile {
            build,
            j,
            m,
            svg: svg_path,
            out,
        } => {
            let mut sim = build.simulator()?;
            let m = parse_bigint(&m)?;
            let profile = sim.delay_profile(j, &m)?;
            let mut csv = String::from("col_from,col_to,landing,delay\n");
            for seg in &profile.segments {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    seg.first_column,
                    seg.last_column,
                    landing_field(&seg.landing),
                    delay_field(&seg.delay),
                ));
            }
            write_output(out.as_ref(), &csv)?;
            if let Some(path) = svg_path {
                let figure = svg::render_profile(sim.table(), &profile)?;
                std::fs::write(&path, figure)
                    .with_context(|| format!("cannot write `{}`", path.display()))?;
            }
            Ok(0)
        }
        Command::RakeCheck {
            build,
            a,
            b,
            m,
            rake,
            delta,
            mode,
            common,
        } => {
            let mut sim = build.simulator()?;
            let a = parse_level_set(&a)?;
            let b = parse_level_set(&b)?;
            let m = parse_bigint(&m)?;
            let tol = parse_tol(&common.tol)?;
            let delta = parse_ratio(&delta)?;
            let spec = parse_rake_spec(&rake)?;
            let rake = sim.build_rake(
                spec.stage,
                &spec.start_column,
                spec.tooth_count,
                &spec.tooth_step,
                &spec.level_lo,
                &spec.level_hi,
            )?;
            sim.prepare_depth_or_exhaust(&m.clone().max(BigInt::from(1)), &tol)?;
            let mode = mode.resolve(&sim)?;
            let report = sim.rake_bound_check(&a, &b, &m, &rake, &delta, &mode, &tol)?;
            let mut csv = mode_comment(&mode);
            csv.push_str(
                "lhs_lo,lhs_hi,rhs_lo,rhs_hi,d,holds,height_window_ok,single_domain,valid_regime\n",
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                format_ratio(report.lhs.lo()),
                format_ratio(report.lhs.hi()),
                format_ratio(report.rhs.lo()),
                format_ratio(report.rhs.hi()),
                report.d,
                report.holds,
                report.height_window_ok,
                report.single_domain,
                report.valid_regime(),
            ));
            write_output(common.out.as_ref(), &csv)?;
            Ok(if report.valid_regime() && !report.holds { 2 } else { 0 })
        }
        Command::BhCheck {
            build,
            b,
            d,
            tooth_count,
            eps,
            mode,
            common,
        } => {
            let mut sim = build.simulator()?;
            let b = parse_level_set(&b)?;
            let d = parse_bigint(&d)?;
            let eps = parse_ratio(&eps)?;
            let tol = parse_tol(&common.tol)?;
            // Resolve the default reference against the depth the check
            // will actually use.
            let m_max = &d * BigInt::from(tooth_count.max(2) - 1);
            sim.prepare_depth_or_exhaust(&m_max.max(BigInt::from(1)), &tol)?;
            let mode = mode.resolve(&sim)?;
            let report = sim.blum_hanson_check(&b, &d, tooth_count, &eps, &mode, &tol)?;
            let mut csv = mode_comment(&mode);
            csv.push_str(
                "d,L,eps,max_cross_lo,max_cross_hi,norm_sq_lo,norm_sq_hi,bound,premise_holds,conclusion_holds\n",
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                d,
                tooth_count,
                format_ratio(&eps),
                format_ratio(report.max_cross.lo()),
                format_ratio(report.max_cross.hi()),
                format_ratio(report.norm_sq.lo()),
                format_ratio(report.norm_sq.hi()),
                format_ratio(&report.bound),
                report.premise_holds,
                report.conclusion_holds,
            ));
            write_output(common.out.as_ref(), &csv)?;
            Ok(if report.premise_holds && !report.conclusion_holds { 2 } else { 0 })
        }
        Command::GoodDensity {
            build,
            b,
            d_lo,
            d_hi,
            tooth_count,
            eps,
            mode,
            common,
        } => {
            let mut sim = build.simulator()?;
            let b = parse_level_set(&b)?;
            let d_lo = parse_bigint(&d_lo)?;
            let d_hi = parse_bigint(&d_hi)?;
            if d_lo > d_hi {
                bail!("--d-lo must be <= --d-hi");
            }
            let eps = parse_ratio(&eps)?;
            let tol = parse_tol(&common.tol)?;
            let m_max = &d_hi * BigInt::from(tooth_count.max(2) - 1);
            sim.prepare_depth_or_exhaust(&m_max.max(BigInt::from(1)), &tol)?;
            let mode = mode.resolve(&sim)?;
            let table = sim.table();
            let mut delays = Vec::new();
            let mut d = d_lo.clone();
            while d <= d_hi {
                delays.push(d.clone());
                d += 1;
            }
            let pool = thread_pool(common.jobs)?;
            let goods = pool.install(|| {
                delays
                    .par_iter()
                    .map(|d| is_good_delay(table, &b, d, tooth_count, &eps, &mode, &tol))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let good = goods.iter().filter(|g| **g).count() as u64;
            let total = goods.len() as u64;
            let fraction = BigRational::new(BigInt::from(good), BigInt::from(total));
            let mut csv = mode_comment(&mode);
            csv.push_str("fraction,good,total\n");
            csv.push_str(&format!("{},{},{}\n", format_ratio(&fraction), good, total));
            write_output(common.out.as_ref(), &csv)?;
            Ok(0)
        }
        Command::FindQ { build, d, depth, out } => {
            let mut sim = build.simulator()?;
            sim.extend_to(depth)?;
            let d = parse_bigint(&d)?;
            let found = sim.find_multiplier(&d)?;
            let mut csv = String::from("p,q\n");
            match found {
                Some(m) => csv.push_str(&format!("{},{}\n", m.p, m.q)),
                None => csv.push_str("not-found,not-found\n"),
            }
            write_output(out.as_ref(), &csv)?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version displays are successes; bad usage exits 1.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
