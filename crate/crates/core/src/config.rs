//! Construction parameters from a flat key-value text file.
//!
//! ```text
//! # staircase, r_j = j + 1
//! h1 = 1
//! cuts = affine:1,1
//! spacers = staircase
//! base_width = 1/1
//! ```
//!
//! Recognized values: `cuts` takes `list:2,3,4`, `affine:a,b` or
//! `equal-height`; `spacers` takes `staircase`, `const:k` or `file:<path>`
//! (one comma-separated spacer vector per line, stage by stage);
//! `base_width` takes `p/q`. Values may be quoted.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;

use crate::construction::{ConstructionParams, CutPolicy, SpacerPolicy};
use crate::error::{Error, Result};
use crate::ratio::parse_ratio;

fn parse_int(s: &str) -> Result<BigInt> {
    s.trim()
        .parse::<BigInt>()
        .map_err(|_| Error::Parse(format!("invalid integer `{s}`")))
}

fn parse_int_list(s: &str) -> Result<Vec<BigInt>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_int)
        .collect()
}

/// Splits `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
        let value = value.trim().trim_matches('"').trim_matches('\'');
        map.insert(key.trim().to_string(), value.to_string());
    }
    Ok(map)
}

pub fn parse_cut_policy(s: &str) -> Result<CutPolicy> {
    let s = s.trim();
    if s == "equal-height" {
        return Ok(CutPolicy::EqualHeight);
    }
    if let Some(rest) = s.strip_prefix("list:") {
        return Ok(CutPolicy::ExplicitList(parse_int_list(rest)?));
    }
    if let Some(rest) = s.strip_prefix("affine:") {
        let parts = parse_int_list(rest)?;
        if parts.len() != 2 {
            return Err(Error::Parse(format!("affine cuts need `a,b`, got `{rest}`")));
        }
        return Ok(CutPolicy::Affine {
            a: parts[0].clone(),
            b: parts[1].clone(),
        });
    }
    Err(Error::Parse(format!("unknown cut policy `{s}`")))
}

pub fn parse_spacer_policy(s: &str, base_dir: Option<&Path>) -> Result<SpacerPolicy> {
    let s = s.trim();
    if s == "staircase" {
        return Ok(SpacerPolicy::Staircase);
    }
    if let Some(rest) = s.strip_prefix("const:") {
        return Ok(SpacerPolicy::ConstantHeight(parse_int(rest)?));
    }
    if let Some(rest) = s.strip_prefix("file:") {
        let path = match base_dir {
            Some(dir) => dir.join(rest),
            None => Path::new(rest).to_path_buf(),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Parse(format!("cannot read spacer file `{}`: {e}", path.display()))
        })?;
        return parse_spacer_file(&text);
    }
    Err(Error::Parse(format!("unknown spacer policy `{s}`")))
}

/// One spacer vector per non-comment line, stage by stage.
pub fn parse_spacer_file(text: &str) -> Result<SpacerPolicy> {
    let mut stages = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        stages.push(parse_int_list(line)?);
    }
    Ok(SpacerPolicy::Explicit(stages))
}

/// Parses a whole config file; `base_dir` anchors relative spacer files.
pub fn parse_construction_config(
    text: &str,
    base_dir: Option<&Path>,
) -> Result<ConstructionParams> {
    let map = parse_key_values(text)?;
    for key in map.keys() {
        if !matches!(key.as_str(), "h1" | "cuts" | "spacers" | "base_width") {
            return Err(Error::Parse(format!("unknown config key `{key}`")));
        }
    }
    let h1 = map
        .get("h1")
        .map(|v| parse_int(v))
        .transpose()?
        .ok_or_else(|| Error::Parse("config is missing `h1`".into()))?;
    let cuts = map
        .get("cuts")
        .map(|v| parse_cut_policy(v))
        .transpose()?
        .ok_or_else(|| Error::Parse("config is missing `cuts`".into()))?;
    let spacers = match map.get("spacers") {
        Some(v) => parse_spacer_policy(v, base_dir)?,
        None => SpacerPolicy::Staircase,
    };
    let mut params = ConstructionParams::new(h1, cuts, spacers);
    if let Some(w) = map.get("base_width") {
        params = params.with_base_width(parse_ratio(w)?);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;

    #[test]
    fn full_config_round_trip() {
        let text = "# example\nh1 = 1\ncuts = \"list:2,3,4\"\nspacers = staircase\nbase_width = 1/2\n";
        let p = parse_construction_config(text, None).unwrap();
        assert_eq!(p.h1, BigInt::from(1));
        assert_eq!(
            p.cuts,
            CutPolicy::ExplicitList(vec![BigInt::from(2), BigInt::from(3), BigInt::from(4)])
        );
        assert_eq!(p.spacers, SpacerPolicy::Staircase);
        assert_eq!(p.base_width, rat(1, 2));
    }

    #[test]
    fn policy_variants_parse() {
        assert_eq!(parse_cut_policy("equal-height").unwrap(), CutPolicy::EqualHeight);
        assert_eq!(
            parse_cut_policy("affine:1,1").unwrap(),
            CutPolicy::Affine {
                a: BigInt::from(1),
                b: BigInt::from(1)
            }
        );
        assert!(parse_cut_policy("fibonacci").is_err());
        assert_eq!(
            parse_spacer_policy("const:3", None).unwrap(),
            SpacerPolicy::ConstantHeight(BigInt::from(3))
        );
        let sp = parse_spacer_file("0,1\n0,0,2\n").unwrap();
        assert_eq!(
            sp,
            SpacerPolicy::Explicit(vec![
                vec![BigInt::from(0), BigInt::from(1)],
                vec![BigInt::from(0), BigInt::from(0), BigInt::from(2)],
            ])
        );
    }

    #[test]
    fn missing_keys_are_reported() {
        assert!(parse_construction_config("cuts = equal-height\n", None).is_err());
        assert!(parse_construction_config("h1 = 2\n", None).is_err());
        assert!(parse_construction_config("h1 = 2\ncuts = equal-height\nstairs = x\n", None).is_err());
    }
}
