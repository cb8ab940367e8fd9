use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{FewshotConfig, OodExperimentConfig, TransferConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Transfer,
    Fewshot,
    Ood,
    Verify,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Transfer => "transfer",
            Pipeline::Fewshot => "fewshot",
            Pipeline::Ood => "ood",
            Pipeline::Verify => "verify",
        }
    }
}

/// Top-level run description. Only the block matching `pipeline` is used;
/// every block falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_groups")]
    pub n_groups: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub fewshot: FewshotConfig,
    #[serde(default)]
    pub ood: OodExperimentConfig,
}

fn default_groups() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn new(pipeline: Pipeline) -> Self {
        Self {
            pipeline,
            master_seed: 0,
            n_groups: default_groups(),
            output_dir: default_output_dir(),
            transfer: TransferConfig::default(),
            fewshot: FewshotConfig::default(),
            ood: OodExperimentConfig::default(),
        }
    }

    /// Parses JSON; errors name the offending field with its line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        // serde_json messages end with "at line L column C".
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 && self.pipeline != Pipeline::Verify {
            return Err(Error::Config("n_groups must be at least 1".into()));
        }
        let field = |name: &str, r: Result<()>| {
            r.map_err(|e| Error::Config(format!("{name}: {e}")))
        };
        match self.pipeline {
            Pipeline::Transfer => field("transfer", self.transfer.validate()),
            Pipeline::Fewshot => field("fewshot", self.fewshot.validate()),
            Pipeline::Ood => field("ood", self.ood.validate()),
            Pipeline::Verify => Ok(()),
        }
    }

    /// SHA-256 over the canonical JSON of the effective configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canon))
    }
}

/// JSON schema of [`ExperimentConfig`], pretty-printed with a trailing
/// newline. The copy shipped under `schema/` must match it.
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    let mut s = serde_json::to_string_pretty(&schema).expect("schema serializes");
    s.push('\n');
    s
}
