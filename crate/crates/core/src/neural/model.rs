use std::path::Path;

use serde::{Deserialize, Serialize};

use super::deepset::DeepSetQNet;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Options,
    HighLevel,
}

/// Online network plus its two target copies, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    pub training_steps: u64,
    pub online: DeepSetQNet,
    pub targets: [DeepSetQNet; 2],
}

impl ModelFile {
    pub fn new(kind: ModelKind, seed: u64, online: DeepSetQNet, targets: [DeepSetQNet; 2]) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            seed,
            training_steps: 0,
            online,
            targets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(self.format_version));
        }
        self.online.validate()?;
        for t in &self.targets {
            t.validate()?;
            if !t.same_architecture(&self.online) {
                return Err(Error::Architecture("target and online architectures differ".into()));
            }
        }
        let outputs = self.online.architecture().outputs;
        let expected = match self.kind {
            ModelKind::Options => 1,
            ModelKind::HighLevel => 3,
        };
        if outputs != expected {
            return Err(Error::Architecture(format!(
                "{:?} model needs {expected} outputs, has {outputs}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelFile = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingModel(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
