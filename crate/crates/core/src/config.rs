//! Experiment configuration: a versioned TOML document with `model`,
//! `agent`, `env` and `run` sections. Unknown keys are errors.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::coupling::CouplingMatrix;
use crate::envs::{BanditParams, ContinuousBandit, Environment, SteerLine, SteerParams};
use crate::error::{Error, Result};
use crate::exec::child_rng;
use crate::exp_family::ExpFamilyPrior;
use crate::model::{CsqbmModel, ModelOptions};
use crate::quantum::{PauliHamiltonianSpec, PauliOp, PauliTerm};

pub const CONFIG_VERSION: u32 = 1;

/// Stream of the root seed used to initialise model weights.
const INIT_STREAM: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    pub env: EnvConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Visible units: state dimension plus action dimension.
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_basis")]
    pub coupling_basis: PauliOp,
    #[serde(default = "one")]
    pub beta: f64,
    /// Per-unit prior means.
    pub prior_mu: Vec<f64>,
    /// Per-unit prior standard deviations.
    pub prior_sigma: Vec<f64>,
    /// Linear coupling weights start uniform in `[-w_init_scale, w_init_scale]`.
    #[serde(default = "default_w_scale")]
    pub w_init_scale: f64,
    /// Explicit hidden terms; when absent, single-qubit and nearest-neighbour
    /// terms in the coupling basis are drawn with `hidden_init_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_terms: Option<Vec<PauliTerm>>,
    #[serde(default = "default_hidden_scale")]
    pub hidden_init_scale: f64,
    #[serde(default = "yes")]
    pub strict_sampler: bool,
    #[serde(default)]
    pub quadratic_coupling: bool,
    #[serde(default)]
    pub train_theta: bool,
}

fn default_basis() -> PauliOp {
    PauliOp::Z
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_w_scale() -> f64 {
    0.1
}
fn default_hidden_scale() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    Bandit(BanditParams),
    SteerLine(SteerParams),
}

impl EnvConfig {
    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Bandit(p) => Box::new(ContinuousBandit::new(*p, seed)?),
            EnvConfig::SteerLine(p) => Box::new(SteerLine::new(*p, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub episodes: usize,
    /// Checkpoint every this many episodes (0: only the final one).
    pub checkpoint_interval: usize,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Write real timings into `wall_ms`; breaks byte-identical metrics.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            checkpoint_interval: 0,
            eval_episodes: 100,
            out_dir: PathBuf::from("runs/default"),
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; messages carry the 1-based source line.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))?;
        cfg.validate().map_err(|e| match e {
            ConfigIssue { key, message } => {
                let line = locate_key(text, &key).map(|l| format!("line {l}: ")).unwrap_or_default();
                Error::Config(format!("{line}{key}: {message}"))
            }
        })?;
        Ok(cfg)
    }

    /// Parses with `key.path=value` overrides applied before validation.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Self::from_toml_str(text);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(describe_toml_error(text, &e)))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_toml_str(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The resolved document, with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> std::result::Result<(), ConfigIssue> {
        let issue = |key: &str, message: String| Err(ConfigIssue { key: key.into(), message });
        if self.version != CONFIG_VERSION {
            return issue("version", format!("unsupported version {} (expected {CONFIG_VERSION})", self.version));
        }
        let m = &self.model;
        if m.n == 0 {
            return issue("model.n", "must be at least 1".into());
        }
        if m.prior_mu.len() != m.n {
            return issue("model.prior_mu", format!("has {} entries, expected n = {}", m.prior_mu.len(), m.n));
        }
        if m.prior_sigma.len() != m.n {
            return issue("model.prior_sigma", format!("has {} entries, expected n = {}", m.prior_sigma.len(), m.n));
        }
        if m.prior_sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return issue("model.prior_sigma", "entries must be positive".into());
        }
        if !(m.beta > 0.0 && m.beta.is_finite()) {
            return issue("model.beta", "must be positive".into());
        }
        if !(m.w_init_scale >= 0.0 && m.hidden_init_scale >= 0.0) {
            return issue("model.w_init_scale", "init scales must be non-negative".into());
        }
        if m.m > 10 {
            return issue("model.m", "dense simulation is limited to 10 hidden qubits".into());
        }
        if let Err(e) = self.agent.validate() {
            let msg = e.to_string();
            let key = ["alpha", "gamma", "sweeps", "candidates", "batch_size", "epsilon", "explore_beta", "divergence"]
                .iter()
                .find(|k| msg.contains(*k))
                .map(|k| format!("agent.{k}"))
                .unwrap_or_else(|| "agent".into());
            return issue(&key, msg.trim_start_matches("invalid configuration: ").to_string());
        }
        let env = match self.env.build(0) {
            Ok(env) => env,
            Err(e) => return issue("env", e.to_string()),
        };
        let spec = env.spec();
        if spec.state_dim + spec.action_dim != m.n {
            return issue(
                "model.n",
                format!("environment needs n = {} (state {} + action {})", spec.state_dim + spec.action_dim, spec.state_dim, spec.action_dim),
            );
        }
        if let Err(e) = self.build_model() {
            return issue("model", e.to_string());
        }
        Ok(())
    }

    /// The initial model; random parts are drawn from the run seed.
    pub fn build_model(&self) -> Result<CsqbmModel> {
        let m = &self.model;
        let prior = ExpFamilyPrior::gaussian(&m.prior_mu, &m.prior_sigma)?;
        let rows = prior.stat_dim();
        let k = prior.family().stats_per_unit();
        let quadratic = prior.family().quadratic_slot();
        let mut rng = child_rng(self.run.seed, INIT_STREAM);
        let mut w = CouplingMatrix::zeros(rows, m.m);
        for i in 0..rows {
            let is_quadratic = quadratic == Some(i % k);
            for j in 0..m.m {
                let x = if m.w_init_scale > 0.0 { rng.random_range(-m.w_init_scale..=m.w_init_scale) } else { 0.0 };
                if !is_quadratic || m.quadratic_coupling {
                    w.set(i, j, x);
                }
            }
        }
        let terms = match &m.hidden_terms {
            Some(t) => t.clone(),
            None => random_hidden_terms(m.m, m.coupling_basis, m.hidden_init_scale, &mut rng)?,
        };
        let options = ModelOptions {
            strict_sampler: m.strict_sampler,
            quadratic_coupling: m.quadratic_coupling,
            train_theta: m.train_theta,
        };
        CsqbmModel::new(prior, w, PauliHamiltonianSpec::new(m.m, terms)?, m.coupling_basis, m.beta, options)
    }
}

fn random_hidden_terms<R: Rng>(m: usize, basis: PauliOp, scale: f64, rng: &mut R) -> Result<Vec<PauliTerm>> {
    let draw = |rng: &mut R| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
    let mut terms = Vec::new();
    for q in 0..m {
        terms.push(PauliTerm::single(draw(rng), q, basis)?);
    }
    for q in 1..m {
        terms.push(PauliTerm::pair(draw(rng), (q - 1, basis), (q, basis))?);
    }
    Ok(terms)
}

struct ConfigIssue {
    key: String,
    message: String,
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg,
    }
}

/// 1-based line of `section.key` (or a bare top-level key) in `text`.
fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = match dotted.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

/// Applies `a.b.c=value`; the value is read as TOML, falling back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
    let value: toml::Value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().filter(|(l, _)| !l.is_empty()).ok_or_else(|| Error::Config(format!("empty override key in '{spec}'")))?;
    let mut cursor = table;
    for k in parents {
        cursor = cursor
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{k}' is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
