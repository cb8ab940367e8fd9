use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tasks::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            n_way: 5,
            k_shot: 1,
            n_query: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Dataset,
    pub query: Dataset,
    /// Row indices into the source dataset.
    pub support_rows: Vec<usize>,
    pub query_rows: Vec<usize>,
    /// Source class of each episode label.
    pub classes: Vec<usize>,
}

/// Draws one N-way K-shot episode. Classes come without replacement in draw
/// order and become labels `0..n_way`; each contributes `k_shot` support and
/// `n_query` query rows, disjoint.
pub fn sample_episode(novel: &Dataset, spec: &EpisodeSpec, rng: &mut Rng) -> Result<Episode> {
    if spec.n_way == 0 || spec.k_shot == 0 || spec.n_query == 0 {
        return Err(Error::Parameter("episode sizes must be positive".into()));
    }
    if spec.n_way > novel.n_classes {
        return Err(Error::Sampling(format!(
            "{}-way episode from {} classes",
            spec.n_way, novel.n_classes
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); novel.n_classes];
    for (i, &y) in novel.y.iter().enumerate() {
        by_class[y].push(i);
    }
    let classes = rng.choose_distinct(novel.n_classes, spec.n_way);
    let need = spec.k_shot + spec.n_query;
    let mut support_rows = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query_rows = Vec::with_capacity(spec.n_way * spec.n_query);
    let mut support_y = Vec::new();
    let mut query_y = Vec::new();
    for (label, &c) in classes.iter().enumerate() {
        let rows = &by_class[c];
        if rows.len() < need {
            return Err(Error::Sampling(format!(
                "class {c} has {} rows, episode needs {need}",
                rows.len()
            )));
        }
        let picks = rng.choose_distinct(rows.len(), need);
        for (j, &p) in picks.iter().enumerate() {
            if j < spec.k_shot {
                support_rows.push(rows[p]);
                support_y.push(label);
            } else {
                query_rows.push(rows[p]);
                query_y.push(label);
            }
        }
    }
    let relabel = |rows: &[usize], y: Vec<usize>| {
        let mut d = novel.subset(rows);
        d.y = y;
        d.n_classes = spec.n_way;
        d
    };
    Ok(Episode {
        support: relabel(&support_rows, support_y),
        query: relabel(&query_rows, query_y),
        support_rows,
        query_rows,
        classes,
    })
}
