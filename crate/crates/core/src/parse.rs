//! Spec-string mini-grammars used by the CLI and bindings.
//!
//! Sets: `stage=<j>:levels=<list>` where the list mixes indices and
//! inclusive ranges, e.g. `stage=2:levels=0,3..5`.
//! Rakes: `j=<j>;s=<s>;L=<L>;step=<q>;levels=<lo>..<hi>`.

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::level_set::LevelSet;

fn parse_int(s: &str) -> Result<BigInt> {
    s.trim()
        .parse::<BigInt>()
        .map_err(|_| Error::Parse(format!("invalid integer `{s}`")))
}

fn parse_u32(s: &str) -> Result<u32> {
    s.trim()
        .parse::<u32>()
        .map_err(|_| Error::Parse(format!("invalid stage index `{s}`")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| Error::Parse(format!("invalid count `{s}`")))
}

/// `stage=<j>:levels=0,3..5`
pub fn parse_level_set(spec: &str) -> Result<LevelSet> {
    let (stage_part, levels_part) = spec
        .trim()
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("set spec `{spec}` needs `stage=..:levels=..`")))?;
    let stage = parse_u32(
        stage_part
            .trim()
            .strip_prefix("stage=")
            .ok_or_else(|| Error::Parse(format!("set spec `{spec}` must start with `stage=`")))?,
    )?;
    let list = levels_part
        .trim()
        .strip_prefix("levels=")
        .ok_or_else(|| Error::Parse(format!("set spec `{spec}` needs a `levels=` part")))?;
    let mut levels = Vec::new();
    for item in list.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = item.split_once("..") {
            let lo = parse_int(lo)?;
            let hi = parse_int(hi)?;
            if lo > hi {
                return Err(Error::Parse(format!("empty range `{item}`")));
            }
            let mut k = lo;
            while k <= hi {
                levels.push(k.clone());
                k += BigInt::one();
            }
        } else {
            levels.push(parse_int(item)?);
        }
    }
    if levels.is_empty() {
        return Err(Error::Parse(format!("set spec `{spec}` names no levels")));
    }
    LevelSet::new(stage, levels)
}

/// Renders a set back in the spec grammar (ranges re-compressed).
pub fn format_level_set(set: &LevelSet) -> String {
    let mut parts: Vec<String> = Vec::new();
    let levels = set.levels();
    let mut i = 0;
    while i < levels.len() {
        let mut j = i;
        while j + 1 < levels.len() && &levels[j + 1] == &(&levels[j] + BigInt::one()) {
            j += 1;
        }
        if j > i + 1 {
            parts.push(format!("{}..{}", levels[i], levels[j]));
        } else {
            for k in i..=j {
                parts.push(levels[k].to_string());
            }
        }
        i = j + 1;
    }
    format!("stage={}:levels={}", set.stage(), parts.join(","))
}

/// Parsed rake spec, ready for `build_rake`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RakeSpec {
    pub stage: u32,
    pub start_column: BigInt,
    pub tooth_count: u64,
    pub tooth_step: BigInt,
    pub level_lo: BigInt,
    pub level_hi: BigInt,
}

/// `j=<j>;s=<s>;L=<L>;step=<q>;levels=<lo>..<hi>`
pub fn parse_rake_spec(spec: &str) -> Result<RakeSpec> {
    let mut stage = None;
    let mut start = None;
    let mut count = None;
    let mut step = None;
    let mut range = None;
    for field in spec.trim().split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("rake field `{field}` needs `key=value`")))?;
        match key.trim() {
            "j" => stage = Some(parse_u32(value)?),
            "s" => start = Some(parse_int(value)?),
            "L" => count = Some(parse_u64(value)?),
            "step" => step = Some(parse_int(value)?),
            "levels" => {
                let (lo, hi) = value
                    .split_once("..")
                    .ok_or_else(|| Error::Parse(format!("rake levels `{value}` need `lo..hi`")))?;
                range = Some((parse_int(lo)?, parse_int(hi)?));
            }
            other => return Err(Error::Parse(format!("unknown rake field `{other}`"))),
        }
    }
    let (level_lo, level_hi) =
        range.ok_or_else(|| Error::Parse("rake spec is missing `levels`".into()))?;
    Ok(RakeSpec {
        stage: stage.ok_or_else(|| Error::Parse("rake spec is missing `j`".into()))?,
        start_column: start.ok_or_else(|| Error::Parse("rake spec is missing `s`".into()))?,
        tooth_count: count.ok_or_else(|| Error::Parse("rake spec is missing `L`".into()))?,
        tooth_step: step.unwrap_or_else(BigInt::one),
        level_lo,
        level_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_specs_parse_ranges() {
        let s = parse_level_set("stage=2:levels=0,3..5").unwrap();
        assert_eq!(s.stage(), 2);
        let got: Vec<i64> = s.levels().iter().map(|l| l.try_into().unwrap()).collect();
        assert_eq!(got, vec![0, 3, 4, 5]);
        assert_eq!(format_level_set(&s), "stage=2:levels=0,3..5");
        assert!(parse_level_set("levels=1").is_err());
        assert!(parse_level_set("stage=2:levels=").is_err());
        assert!(parse_level_set("stage=2:levels=5..3").is_err());
    }

    #[test]
    fn rake_specs_parse() {
        let r = parse_rake_spec("j=2;s=1;L=2;step=1;levels=0..1").unwrap();
        assert_eq!(
            r,
            RakeSpec {
                stage: 2,
                start_column: BigInt::one(),
                tooth_count: 2,
                tooth_step: BigInt::one(),
                level_lo: BigInt::from(0),
                level_hi: BigInt::one(),
            }
        );
        // step defaults to 1.
        let r = parse_rake_spec("j=3;s=2;L=4;levels=0..0").unwrap();
        assert_eq!(r.tooth_step, BigInt::one());
        assert!(parse_rake_spec("j=3;L=4;levels=0..0").is_err());
    }
}
