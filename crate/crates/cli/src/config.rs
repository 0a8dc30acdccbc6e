//! JSON run configuration and its merge with command-line overrides.

use std::path::Path;

use asyrgs_core::fcg::FcgConfig;
use asyrgs_core::{AsyncConfig, DelaySchedule, ReadModel, SolveConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Config file layout. Each section has the field names of the matching
/// library type; `solve` and `async` are alternatives (`async.base` is a
/// full `solve` section).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default, rename = "async")]
    pub async_cfg: Option<AsyncConfig>,
    #[serde(default)]
    pub fcg: Option<FcgConfig>,
    #[serde(default)]
    pub schedule: Option<DelaySchedule>,
    #[serde(default)]
    pub model: Option<ReadModel>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.solve.is_some() && cfg.async_cfg.is_some() {
            return Err(CliError::Config(
                "give either a `solve` or an `async` section, not both".into(),
            ));
        }
        Ok(cfg)
    }
}

/// Flag values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub sweeps: Option<u64>,
    pub iterations: Option<u64>,
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub checkpoint_every: Option<u64>,
    pub threads: Option<usize>,
    pub plain_writes: bool,
    pub sync_period: Option<u64>,
    pub instrument: bool,
    pub exact: bool,
}

pub const DEFAULT_SWEEPS: u64 = 10;

/// Solver settings for an `n`-column problem. Returns `None` for the
/// asynchronous part when neither the config nor the flags ask for it.
pub fn resolve_solver(cfg: &RunConfig, ov: &Overrides, n: usize) -> CliResult<(SolveConfig, Option<AsyncConfig>)> {
    let mut base = match (&cfg.solve, &cfg.async_cfg) {
        (Some(s), _) => s.clone(),
        (_, Some(a)) => a.base.clone(),
        _ => SolveConfig::sweeps(n, DEFAULT_SWEEPS, 0),
    };
    if ov.sweeps.is_some() && ov.iterations.is_some() {
        return Err(CliError::Config("--sweeps and --iterations are exclusive".into()));
    }
    if let Some(s) = ov.sweeps {
        base.total_iterations = s
            .checked_mul(n as u64)
            .ok_or_else(|| CliError::Config("sweeps * n overflows".into()))?;
    }
    if let Some(m) = ov.iterations {
        base.total_iterations = m;
    }
    if let Some(s) = ov.seed {
        base.seed = s;
    }
    if let Some(b) = ov.beta {
        base.beta = b;
    }
    if let Some(c) = ov.checkpoint_every {
        base.checkpoint_every = c;
    }
    if ov.exact {
        base.record_a_norm_error = true;
    }
    base.validate()?;

    let wants_async = cfg.async_cfg.is_some() || ov.threads.is_some() || ov.plain_writes || ov.sync_period.is_some() || ov.instrument;
    if !wants_async {
        return Ok((base, None));
    }
    let mut a = cfg.async_cfg.clone().unwrap_or_else(|| AsyncConfig::new(base.clone(), 1));
    a.base = base.clone();
    if let Some(t) = ov.threads {
        a.threads = t;
    }
    if ov.plain_writes {
        a.atomic_writes = false;
    }
    if ov.sync_period.is_some() {
        a.sync_period = ov.sync_period;
    }
    if ov.instrument {
        a.instrument = true;
    }
    a.validate()?;
    Ok((base, Some(a)))
}
