//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use jobmarket_core::agents::{AttemptRule, ManagerPolicy};
use jobmarket_core::model::{JobSpecs, SessionConfig, Timers};
use jobmarket_core::pool::PoolOptions;
use jobmarket_core::session::SessionRole;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "JOBMARKET_DATA_DIR";

/// Where manager sessions get their evaluated pool and the stored job
/// outcomes used for BDM payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PoolSource {
    /// Run a simulated worker session with the lab signals, then build the
    /// pool from its results.
    Build {
        #[serde(default = "PoolOptions::lab_reference")]
        options: PoolOptions,
    },
    /// Read `pool.csv` and `outcomes.csv` style files.
    File { pool: PathBuf, outcomes: PathBuf },
}

impl Default for PoolSource {
    fn default() -> Self {
        PoolSource::Build {
            options: PoolOptions::lab_reference(),
        }
    }
}

/// Agent parameters for simulated studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Coefficients, noise and defaults shared by all simulated managers.
    pub manager: ManagerPolicy,
    /// Manager intercepts are drawn from a normal distribution.
    pub intercept_mean: f64,
    pub intercept_sd: f64,
    /// How many managers report one constant value throughout.
    pub constant_reporters: usize,
    pub constant_value: u32,
    pub worker_attempt_rule: AttemptRule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            manager: ManagerPolicy::default(),
            intercept_mean: 10.0,
            intercept_sd: 4.0,
            constant_reporters: 0,
            constant_value: 100,
            worker_attempt_rule: AttemptRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub managers: usize,
    /// Managers per simulated session.
    pub session_size: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            managers: 78,
            session_size: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServedSession {
    pub id: String,
    pub role: SessionRole,
    pub roster: Vec<String>,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: String,
    pub tick_ms: u64,
    pub sessions: Vec<ServedSession>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:7878".into(),
            tick_ms: 100,
            sessions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Currency per point.
    pub conversion_rate: f64,
    pub job_specs: JobSpecs,
    pub timers: Timers,
    pub pool: PoolSource,
    /// TOML file holding an [`AgentConfig`]; overrides `agents` when set.
    pub policy_file: Option<PathBuf>,
    pub agents: AgentConfig,
    pub study: StudyConfig,
    pub output_dir: Option<PathBuf>,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let session = SessionConfig::default();
        Self {
            seed: session.rng_seed,
            conversion_rate: session.conversion_rate,
            job_specs: session.job_specs,
            timers: session.timers,
            pool: PoolSource::default(),
            policy_file: None,
            agents: AgentConfig::default(),
            study: StudyConfig::default(),
            output_dir: None,
            serve: ServeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Some(pf) = &cfg.policy_file {
            let text = std::fs::read_to_string(pf).with_context(|| format!("reading {}", pf.display()))?;
            cfg.agents = toml::from_str(&text).with_context(|| format!("parsing {}", pf.display()))?;
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PoolSource::File { pool, outcomes } = &mut self.pool {
            fix(pool);
            fix(outcomes);
        }
        if let Some(p) = &mut self.policy_file {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            rng_seed: self.seed,
            conversion_rate: self.conversion_rate,
            job_specs: self.job_specs,
            timers: self.timers,
            ..SessionConfig::default()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.conversion_rate, 0.08);
        assert_eq!(cfg.job_specs, JobSpecs::default());
        assert_eq!(cfg.timers.math_task_seconds, 60);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        cfg.agents.constant_reporters = 18;
        cfg.serve.sessions.push(ServedSession {
            id: "s1".into(),
            role: SessionRole::WorkerSession,
            roster: vec!["a".into(), "b".into()],
            seed: None,
        });
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_sections() {
        let cfg: RunConfig = toml::from_str(
            "seed = 3\n[study]\nmanagers = 96\n[pool]\nsource = \"file\"\npool = \"p.csv\"\noutcomes = \"o.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.study.managers, 96);
        assert_eq!(cfg.study.session_size, 20);
        assert!(matches!(cfg.pool, PoolSource::File { .. }));
    }
}
