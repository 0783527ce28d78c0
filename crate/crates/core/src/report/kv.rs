use std::collections::BTreeMap;

use crate::inputgen::EpConfig;
use crate::sim::{Dim3, LaunchConfig};

use super::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, KvError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(KvError {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, KvError> {
    v.parse().map_err(|_| KvError {
        line,
        message: format!("bad value `{v}` for `{key}`"),
    })
}

fn parse_dim(line: usize, key: &str, v: &str) -> Result<Dim3, KvError> {
    v.parse().map_err(|e: String| KvError {
        line,
        message: format!("`{key}`: {e}"),
    })
}

fn parse_range(line: usize, key: &str, v: &str) -> Result<(f64, f64), KvError> {
    let bad = || KvError {
        line,
        message: format!("`{key}` expects `lo,hi`, found `{v}`"),
    };
    let (lo, hi) = v.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Applies one search setting. Returns `Ok(false)` for keys it does not know.
fn apply_ep_key(ep: &mut EpConfig, line: usize, key: &str, v: &str) -> Result<bool, KvError> {
    match key {
        "population" => ep.population = parse(line, key, v)?,
        "generations" => ep.generations = parse(line, key, v)?,
        "threshold" => ep.threshold = parse(line, key, v)?,
        "seed" => ep.seed = parse(line, key, v)?,
        "grid_max" => ep.bounds.grid_max = parse_dim(line, key, v)?.0,
        "block_max" => ep.bounds.block_max = parse_dim(line, key, v)?.0,
        "arg_init" => ep.arg_init = parse_range(line, key, v)?,
        "warp_size" => ep.limits.warp_size = parse(line, key, v)?,
        "budget" => ep.limits.budget = parse(line, key, v)?,
        "max_threads_per_block" => ep.limits.max_threads_per_block = parse(line, key, v)?,
        _ => {
            if let Some(name) = key.strip_prefix("arg_init.") {
                ep.arg_init_ranges
                    .insert(name.to_string(), parse_range(line, key, v)?);
            } else {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Reads a search configuration file into `ep`.
///
/// Keys: `population`, `generations`, `threshold`, `seed`, `grid_max`,
/// `block_max`, `arg_init`, `arg_init.NAME`, `warp_size`, `budget`,
/// `max_threads_per_block`.
pub fn apply_ep_settings(ep: &mut EpConfig, text: &str) -> Result<(), KvError> {
    for (line, k, v) in parse_key_values(text)? {
        if !apply_ep_key(ep, line, &k, &v)? {
            return Err(KvError {
                line,
                message: format!("unknown setting `{k}`"),
            });
        }
    }
    validate_ep(ep).map_err(|message| KvError { line: 0, message })
}

pub(crate) fn validate_ep(ep: &EpConfig) -> Result<(), String> {
    if ep.population == 0 {
        return Err("population must be at least 1".into());
    }
    if !(ep.threshold > 0.0 && ep.threshold < 1.0) {
        return Err(format!("threshold must lie in (0, 1), got {}", ep.threshold));
    }
    if ep.bounds.grid_max.contains(&0) || ep.bounds.block_max.contains(&0) {
        return Err("dimension bounds must be at least 1".into());
    }
    Ok(())
}

/// Contents of a corpus `.expected` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub verdict: Verdict,
    /// Set when `grid` or `block` is given; the missing one defaults to 1.
    pub pinned: Option<LaunchConfig>,
    /// `arg.NAME` values; in search mode they hold those arguments fixed.
    pub args: BTreeMap<String, f64>,
    /// Exact set of barriers that must be judged redundant.
    pub redundant: Option<Vec<String>>,
    pub ep: EpConfig,
}

impl Expected {
    /// Search settings default to seed 7 unless the file says otherwise.
    pub fn parse(text: &str) -> Result<Expected, KvError> {
        let mut verdict = None;
        let (mut grid, mut block) = (None, None);
        let mut args = BTreeMap::new();
        let mut redundant = None;
        let mut ep = EpConfig {
            seed: 7,
            ..EpConfig::default()
        };
        for (line, k, v) in parse_key_values(text)? {
            match k.as_str() {
                "verdict" => {
                    verdict = Some(v.parse().map_err(|message| KvError { line, message })?)
                }
                "grid" => grid = Some(parse_dim(line, &k, &v)?),
                "block" => block = Some(parse_dim(line, &k, &v)?),
                "redundant" => {
                    let mut names: Vec<String> = v
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    names.sort();
                    redundant = Some(names);
                }
                _ => {
                    if let Some(name) = k.strip_prefix("arg.") {
                        args.insert(name.to_string(), parse(line, &k, &v)?);
                    } else if !apply_ep_key(&mut ep, line, &k, &v)? {
                        return Err(KvError {
                            line,
                            message: format!("unknown key `{k}`"),
                        });
                    }
                }
            }
        }
        let verdict = verdict.ok_or(KvError {
            line: 0,
            message: "missing `verdict`".into(),
        })?;
        let pinned = (grid.is_some() || block.is_some()).then(|| LaunchConfig {
            grid: grid.unwrap_or(Dim3::ONE),
            block: block.unwrap_or(Dim3::ONE),
            args: args.clone(),
        });
        ep.pinned_args = args.clone();
        Ok(Expected {
            verdict,
            pinned,
            args,
            redundant,
            ep,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_skip_comments() {
        let kv = parse_key_values("# note\n\nverdict = race  # trailing\n").unwrap();
        assert_eq!(kv, vec![(3, "verdict".to_string(), "race".to_string())]);
        assert_eq!(parse_key_values("a b").unwrap_err().line, 1);
    }

    #[test]
    fn expected_with_pinned_config() {
        let e = Expected::parse("verdict = race\ngrid = 1,1\nblock = 3,2\narg.n = 5\n").unwrap();
        assert_eq!(e.verdict, Verdict::Race);
        let p = e.pinned.unwrap();
        assert_eq!(p.block, Dim3::new(3, 2, 1));
        assert_eq!(p.args["n"], 5.0);
        assert_eq!(e.ep.seed, 7);
    }

    #[test]
    fn expected_search_mode() {
        let e = Expected::parse("verdict = clean\nseed = 3\npopulation = 4\n").unwrap();
        assert!(e.pinned.is_none());
        assert_eq!((e.ep.seed, e.ep.population), (3, 4));
        assert!(Expected::parse("grid = 1\n").is_err());
        assert!(Expected::parse("verdict = clean\nbogus = 1\n").is_err());
    }

    #[test]
    fn ep_settings_file() {
        let mut ep = EpConfig::default();
        apply_ep_settings(&mut ep, "population = 10\nthreshold = 0.5\narg_init.n = 1, 4\n").unwrap();
        assert_eq!(ep.population, 10);
        assert_eq!(ep.arg_init_ranges["n"], (1.0, 4.0));
        assert!(apply_ep_settings(&mut ep, "threshold = 2\n").is_err());
    }
}
