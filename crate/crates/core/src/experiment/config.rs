use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{Method, SacConfig};
use crate::decorrelation::DecorrConfig;
use crate::envs::{make_pointmass, make_spurious_bandit, BanditConfig, EnvSuite, PointmassConfig};
use crate::error::{Result, SgfdError};
use crate::saliency::SaliencyConfig;

/// Prefix of the environment variables that override config keys.
pub const ENV_PREFIX: &str = "SGFD_";

const SECTIONS: [&str; 4] = ["env", "agent", "decorr", "saliency"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    SpuriousBandit(BanditConfig),
    Pointmass(PointmassConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::SpuriousBandit(BanditConfig::default())
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<EnvSuite> {
        match self {
            EnvConfig::SpuriousBandit(cfg) => make_spurious_bandit(cfg),
            EnvConfig::Pointmass(cfg) => make_pointmass(cfg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::SpuriousBandit(cfg) => cfg.validate(),
            EnvConfig::Pointmass(cfg) => cfg.validate(),
        }
    }

    pub fn num_envs(&self) -> usize {
        match self {
            EnvConfig::SpuriousBandit(cfg) => cfg.num_envs,
            EnvConfig::Pointmass(cfg) => cfg.num_envs,
        }
    }
}

/// Everything one training run needs. Loaded from sectioned TOML; missing keys take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub method: Method,
    pub total_steps: u64,
    /// Steps of uniformly random actions before the first update.
    pub start_steps: u64,
    /// Evaluation period in environment steps; the final step is always evaluated.
    pub eval_every: u64,
    /// Episodes per held-out environment at each evaluation.
    pub eval_episodes: usize,
    /// Most recent replay rows used for the final correlation reports.
    pub correlation_samples: usize,
    pub output_dir: PathBuf,
    /// Also write per-step decorrelation and saliency traces.
    pub trace: bool,
    pub env: EnvConfig,
    pub agent: SacConfig,
    pub decorr: DecorrConfig,
    pub saliency: SaliencyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            method: Method::Sgfd,
            total_steps: 20_000,
            start_steps: 1_000,
            eval_every: 5_000,
            eval_episodes: 20,
            correlation_samples: 2_000,
            output_dir: PathBuf::from("runs/default"),
            trace: false,
            env: EnvConfig::default(),
            agent: SacConfig::default(),
            decorr: DecorrConfig::default(),
            saliency: SaliencyConfig::default(),
        }
    }
}

fn bad<T>(field: &str, message: impl Into<String>) -> Result<T> {
    Err(SgfdError::Config {
        field: field.into(),
        message: message.into(),
    })
}

fn config_error(e: impl std::fmt::Display) -> SgfdError {
    SgfdError::Config {
        field: "config".into(),
        message: e.to_string().trim().to_string(),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return bad("total_steps", "must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes", "must be at least 1");
        }
        if self.correlation_samples < 2 {
            return bad("correlation_samples", "must be at least 2");
        }
        if self.start_steps >= self.total_steps {
            return bad("start_steps", "must be below total_steps");
        }
        if (self.start_steps as usize) < self.agent.batch_size {
            return bad(
                "start_steps",
                "must collect at least one batch before updates start",
            );
        }
        self.env.validate().map_err(|e| match e {
            SgfdError::InvalidArgument(message) => SgfdError::Config {
                field: "env".into(),
                message,
            },
            other => other,
        })?;
        self.agent.validate()?;
        self.decorr.validate()?;
        self.saliency.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Applies `SGFD_KEY` and `SGFD_SECTION_KEY` overrides, e.g. `SGFD_TOTAL_STEPS=500`
    /// or `SGFD_AGENT_BATCH_SIZE=64`. Values parse as TOML scalars, falling back to strings.
    /// Unknown `SGFD_` keys are errors; section keys are checked when the result is parsed.
    pub fn with_overrides<I>(&self, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::Table::try_from(self).map_err(config_error)?;
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        if vars.is_empty() {
            return Ok(self.clone());
        }
        vars.sort();
        for (name, raw) in vars {
            let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
            let value = parse_value(&raw);
            if table.contains_key(&key) && !SECTIONS.contains(&key.as_str()) {
                table.insert(key, value);
                continue;
            }
            let target = SECTIONS.iter().find_map(|section| {
                let rest = key.strip_prefix(section)?.strip_prefix('_')?;
                Some((*section, rest.to_string()))
            });
            let Some((section, field)) = target else {
                return bad(&name, "does not name a config key");
            };
            let Some(toml::Value::Table(inner)) = table.get_mut(section) else {
                return bad(&name, "does not name a config key");
            };
            inner.insert(field, value);
        }
        let text = toml::to_string(&table).map_err(config_error)?;
        Self::from_toml_str(&text)
    }

    /// Overrides from the process environment.
    pub fn with_env_overrides(&self) -> Result<Self> {
        self.with_overrides(std::env::vars())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
