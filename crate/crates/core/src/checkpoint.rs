//! Versioned JSON checkpoints. Floats are written with shortest round-trip
//! formatting, so save/load is bit-exact on every weight.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::exp_family::{ExpFamilyPrior, Family, NaturalParams};
use crate::model::{CsqbmModel, ModelOptions};
use crate::quantum::{PauliHamiltonianSpec, PauliOp, PauliTerm};

pub const FORMAT: &str = "csqbm-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub kind: String,
    pub alpha: f64,
    /// Environment steps taken so far.
    pub steps: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub coupling_basis: PauliOp,
    pub beta: f64,
    pub options: ModelOptions,
    /// Natural parameters, unit-major.
    pub theta: Vec<f64>,
    #[serde(default)]
    pub log_base_shift: f64,
    /// Coupling weights, row-major with shape `stat_dim x m`.
    pub weights: Vec<f64>,
    pub hidden_terms: Vec<PauliTerm>,
    /// Label of the generator state that produced this snapshot.
    pub rng: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_model(model: &CsqbmModel, optimizer: Option<OptimizerState>) -> Self {
        Self::with_rng_label(model, optimizer, String::new())
    }

    pub fn with_rng_label(model: &CsqbmModel, optimizer: Option<OptimizerState>, rng: String) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            family: model.prior().family(),
            n: model.n(),
            m: model.m(),
            coupling_basis: model.coupling_basis(),
            beta: model.beta(),
            options: model.options(),
            theta: model.prior().theta().values().to_vec(),
            log_base_shift: model.prior().log_base_shift(),
            weights: model.coupling().as_slice().to_vec(),
            hidden_terms: model.hidden().terms().to_vec(),
            rng,
            optimizer,
        }
    }

    pub fn to_model(&self) -> Result<CsqbmModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag '{}'", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {} (expected {VERSION})", self.version)));
        }
        let theta = NaturalParams::new(self.family, self.theta.clone())?;
        if theta.num_units() != self.n {
            return Err(Error::Checkpoint(format!("theta describes {} units but n = {}", theta.num_units(), self.n)));
        }
        let rows = theta.stat_dim();
        let prior = ExpFamilyPrior::new(theta)?.with_log_base_shift(self.log_base_shift);
        let coupling = CouplingMatrix::from_row_major(rows, self.m, self.weights.clone())?;
        let hidden = PauliHamiltonianSpec::new(self.m, self.hidden_terms.clone())?;
        CsqbmModel::new(prior, coupling, hidden, self.coupling_basis, self.beta, self.options)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_json()?;
        std::fs::write(path, &text)?;
        Ok(hash_text(&text))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
