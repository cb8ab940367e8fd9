use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::dataset::Dataset;

/// Which environments train, which one tunes hyper-parameters, which one
/// tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvRoles {
    pub train: Vec<usize>,
    pub tune: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodTask {
    pub train: Vec<Dataset>,
    pub tune: Dataset,
    pub test: Dataset,
}

pub fn env_partition(envs: &[Dataset], roles: &EnvRoles) -> Result<OodTask> {
    if roles.train.is_empty() {
        return Err(Error::Parameter("at least one training environment is required".into()));
    }
    let mut used = vec![false; envs.len()];
    let all = roles.train.iter().chain([&roles.tune, &roles.test]);
    for &i in all {
        if i >= envs.len() {
            return Err(Error::Parameter(format!(
                "environment {i} does not exist ({} given)",
                envs.len()
            )));
        }
        if used[i] {
            return Err(Error::Parameter(format!("environment {i} assigned to two roles")));
        }
        used[i] = true;
    }
    Ok(OodTask {
        train: roles.train.iter().map(|&i| envs[i].clone()).collect(),
        tune: envs[roles.tune].clone(),
        test: envs[roles.test].clone(),
    })
}
