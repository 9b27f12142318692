use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use super::{CliError, CommonArgs, EXIT_MISSING_INPUT, EXIT_USAGE};
use crate::dataset::LabelClass;
use crate::detection::DetectionMode;
use crate::encoding::DEFAULT_LEVELS;
use crate::signatures::ConflictPolicy;

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out_log: Option<PathBuf>,
    pub out_series: Option<PathBuf>,
    pub mode: DetectionMode,
    pub tau: f64,
    pub levels: u64,
    pub policy: ConflictPolicy,
    pub sizes: Option<Vec<usize>>,
    pub priority: [LabelClass; 4],
    pub skip_bad: bool,
    pub group_signatures: bool,
    pub workers: Option<usize>,
    pub limit: Option<usize>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::new(EXIT_USAGE, msg)
}

fn parse_config_file(path: &PathBuf) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::new(
            EXIT_MISSING_INPUT,
            format!("cannot read config {}: {e}", path.display()),
        )
    })?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, CliError> {
    let sizes = s
        .split(',')
        .map(|t| t.trim().replace('_', ""))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| usage(format!("bad size {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--sizes must be strictly ascending"));
    }
    Ok(sizes)
}

fn parse_priority(s: &str) -> Result<[LabelClass; 4], CliError> {
    let classes = s
        .split(',')
        .map(|t| t.trim().to_lowercase().parse::<LabelClass>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("bad priority {s:?}")))?;
    let arr: [LabelClass; 4] = classes
        .try_into()
        .map_err(|_| usage("--priority needs the four attack classes"))?;
    let mut sorted = arr;
    sorted.sort();
    if sorted != LabelClass::ATTACKS {
        return Err(usage("--priority must list dos, probe, r2l, u2r once each"));
    }
    Ok(arr)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!("bad boolean for {key}: {v:?}"))),
    }
}

impl RunConfig {
    /// Merges flags over the optional config file and validates values.
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => parse_config_file(p)?,
            None => HashMap::new(),
        };
        const KNOWN: &[&str] = &[
            "schema", "taxonomy", "train", "test", "encoder", "db", "weights", "mode", "tau",
            "levels", "policy", "sizes", "skip_bad", "workers", "out_log", "out_series",
            "group_signatures", "priority", "limit",
        ];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(usage(format!("unknown config key {k:?}")));
        }
        let path = |flag: &Option<PathBuf>, key: &str| {
            flag.clone().or_else(|| file.get(key).map(PathBuf::from))
        };
        let text = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());

        let mode = match text(&args.mode, "mode") {
            Some(m) => m.parse().map_err(usage)?,
            None => DetectionMode::Exact,
        };
        let tau = match args.tau {
            Some(t) => t,
            None => match file.get("tau") {
                Some(t) => t.parse().map_err(|_| usage(format!("bad tau {t:?}")))?,
                None => 0.0,
            },
        };
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(usage("--tau must be >= 0"));
        }
        let levels = match args.levels {
            Some(l) => l,
            None => match file.get("levels") {
                Some(l) => l.parse().map_err(|_| usage(format!("bad levels {l:?}")))?,
                None => DEFAULT_LEVELS,
            },
        };
        if levels < 2 {
            return Err(usage("--levels must be at least 2"));
        }
        let policy = match text(&args.policy, "policy") {
            Some(p) => p.parse().map_err(usage)?,
            None => ConflictPolicy::DropConflicts,
        };
        let sizes = text(&args.sizes, "sizes").map(|s| parse_sizes(&s)).transpose()?;
        let priority = match text(&args.priority, "priority") {
            Some(p) => parse_priority(&p)?,
            None => LabelClass::ATTACKS,
        };
        let flag = |given: bool, key: &str| -> Result<bool, CliError> {
            if given {
                return Ok(true);
            }
            file.get(key).map_or(Ok(false), |v| parse_bool(key, v))
        };
        let number = |given: Option<usize>, key: &str| -> Result<Option<usize>, CliError> {
            match given {
                Some(n) => Ok(Some(n)),
                None => file
                    .get(key)
                    .map(|v| v.parse().map_err(|_| usage(format!("bad {key} {v:?}"))))
                    .transpose(),
            }
        };

        Ok(RunConfig {
            schema: path(&args.schema, "schema"),
            taxonomy: path(&args.taxonomy, "taxonomy"),
            train: path(&args.train, "train"),
            test: path(&args.test, "test"),
            encoder: path(&args.encoder, "encoder"),
            db: path(&args.db, "db"),
            weights: path(&args.weights, "weights"),
            out_log: path(&args.out_log, "out_log"),
            out_series: path(&args.out_series, "out_series"),
            mode,
            tau,
            levels,
            policy,
            sizes,
            priority,
            skip_bad: flag(args.skip_bad, "skip_bad")?,
            group_signatures: flag(args.group_signatures, "group_signatures")?,
            workers: number(args.workers, "workers")?,
            limit: number(args.limit, "limit")?,
        })
    }
}
