use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::probing::format as rrfm;

/// Labelled examples with an environment id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub env: Vec<u32>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, env: Vec<u32>, n_classes: usize) -> Result<Self> {
        let ds = Self { x, y, env, n_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.rows() || self.env.len() != self.x.rows() {
            return Err(Error::Shape(format!(
                "{} rows, {} labels, {} environment ids",
                self.x.rows(),
                self.y.len(),
                self.env.len()
            )));
        }
        if let Some(&bad) = self.y.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            env: idx.iter().map(|&i| self.env[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Row-wise concatenation; the class count is the largest of the parts.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let xs: Vec<&Matrix> = parts.iter().map(|d| &d.x).collect();
        Ok(Dataset {
            x: Matrix::vcat(&xs)?,
            y: parts.iter().flat_map(|d| d.y.iter().copied()).collect(),
            env: parts.iter().flat_map(|d| d.env.iter().copied()).collect(),
            n_classes: parts.iter().map(|d| d.n_classes).max().unwrap_or(0),
        })
    }

    /// Same rows, features replaced (e.g. by a representation of them).
    pub fn with_features(&self, x: Matrix) -> Result<Dataset> {
        Dataset::new(x, self.y.clone(), self.env.clone(), self.n_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    /// Writes `path` in RRFM format and the environment ids to `path.env`.
    pub fn save_rrfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let labels: Vec<i32> = self.y.iter().map(|&y| y as i32).collect();
        rrfm::save(path, &self.x, &labels)?;
        let envs: Vec<i32> = self.env.iter().map(|&e| e as i32).collect();
        let env_path = env_sidecar(path);
        std::fs::write(&env_path, rrfm::encode_envs(&envs)).map_err(|e| Error::io(env_path, e))
    }

    /// Reads an RRFM file and, when present, its environment sidecar.
    pub fn load_rrfm(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let (x, labels) = rrfm::load(path)?;
        let y = rrfm::labels_to_usize(&labels)?;
        let env_path = env_sidecar(path);
        let env = if env_path.exists() {
            let raw = std::fs::read(&env_path).map_err(|e| Error::io(&env_path, e))?;
            rrfm::decode_envs(&raw)?
                .into_iter()
                .map(|e| u32::try_from(e).map_err(|_| Error::Data(format!("negative environment id {e}"))))
                .collect::<Result<_>>()?
        } else {
            vec![0; y.len()]
        };
        let k = y.iter().max().map_or(0, |m| m + 1);
        Dataset::new(x, y, env, k)
    }
}

fn env_sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".env");
    s.into()
}
