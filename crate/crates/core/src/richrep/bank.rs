use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{format, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    IndependentEpisodes,
    Snapshots,
    JointTraining,
}

/// Ordered set of trained networks whose penultimate outputs are the
/// representations `Φ_1 … Φ_n`. Members keep their classifier heads: they
/// serve as frozen teacher heads for distillation and as leg classifiers in
/// two-stage fine-tuning. The extractor is everything below the head.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBank {
    members: Vec<Network>,
    seeds: Vec<u64>,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankManifest {
    pub provenance: Provenance,
    pub seeds: Vec<u64>,
    pub dims: Vec<usize>,
    pub config_hash: String,
    pub files: Vec<String>,
}

impl RepresentationBank {
    pub fn new(members: Vec<Network>, seeds: Vec<u64>, provenance: Provenance) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Parameter("a representation bank needs at least one member".into()));
        }
        if seeds.len() != members.len() {
            return Err(Error::Parameter(format!(
                "{} seeds for {} members",
                seeds.len(),
                members.len()
            )));
        }
        let d = members[0].input_dim();
        if let Some(i) = members.iter().position(|m| m.input_dim() != d) {
            return Err(Error::Shape(format!(
                "member {i} expects {} inputs, member 0 expects {d}",
                members[i].input_dim()
            )));
        }
        Ok(Self {
            members,
            seeds,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Network] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Network {
        &self.members[i]
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.members.iter().map(Network::feature_dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    /// First `n` members, as the bank CAT-n would be built from.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::Parameter(format!(
                "cannot take {n} members from a bank of {}",
                self.len()
            )));
        }
        Self::new(self.members[..n].to_vec(), self.seeds[..n].to_vec(), self.provenance)
    }

    pub fn without(&self, i: usize) -> Result<Self> {
        let mut members = self.members.clone();
        let mut seeds = self.seeds.clone();
        members.remove(i);
        seeds.remove(i);
        Self::new(members, seeds, self.provenance)
    }

    pub fn push(&mut self, member: Network, seed: u64) -> Result<()> {
        if member.input_dim() != self.input_dim() {
            return Err(Error::Shape("new member has a different input width".into()));
        }
        self.members.push(member);
        self.seeds.push(seed);
        Ok(())
    }

    /// Writes `member_NN.rrnn` files and `bank.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.len());
        for (i, m) in self.members.iter().enumerate() {
            let name = format!("member_{i:02}.rrnn");
            format::save(m, dir.join(&name))?;
            files.push(name);
        }
        let manifest = BankManifest {
            provenance: self.provenance,
            seeds: self.seeds.clone(),
            dims: self.dims(),
            config_hash: config_hash.to_string(),
            files,
        };
        let path = dir.join("bank.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, BankManifest)> {
        let dir = dir.as_ref();
        let path = dir.join("bank.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BankManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let members = manifest
            .files
            .iter()
            .map(|f| format::load(dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let bank = Self::new(members, manifest.seeds.clone(), manifest.provenance)?;
        if bank.dims() != manifest.dims {
            return Err(Error::Format("bank manifest dims disagree with member files".into()));
        }
        Ok((bank, manifest))
    }
}

/// Concatenated representation `[Φ_1(x), …, Φ_n(x)]`, blocks in bank order.
pub fn cat_features(bank: &RepresentationBank, x: &Matrix) -> Result<Matrix> {
    let blocks = bank
        .members
        .iter()
        .map(|m| m.features(x))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hcat(&refs)
}

/// Column offset of each member's block in [`cat_features`].
pub fn block_offsets(bank: &RepresentationBank) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bank.len());
    let mut at = 0;
    for d in bank.dims() {
        offsets.push(at);
        at += d;
    }
    offsets
}
