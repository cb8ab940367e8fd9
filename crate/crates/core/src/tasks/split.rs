use crate::error::{Error, Result};
use crate::tasks::dataset::Dataset;

/// Splits `ds` into the rows labelled with `base` classes and those with
/// `novel` classes. Labels are re-indexed by position in each list; row
/// order is preserved.
pub fn split_classes(ds: &Dataset, base: &[usize], novel: &[usize]) -> Result<(Dataset, Dataset)> {
    if base.is_empty() || novel.is_empty() {
        return Err(Error::Parameter("base and novel class sets must be nonempty".into()));
    }
    let mut role = vec![None; ds.n_classes];
    for (set, classes) in [(0usize, base), (1, novel)] {
        for (new_label, &c) in classes.iter().enumerate() {
            if c >= ds.n_classes {
                return Err(Error::Parameter(format!("class {c} does not exist")));
            }
            if role[c].is_some() {
                return Err(Error::Parameter(format!("class {c} listed twice")));
            }
            role[c] = Some((set, new_label));
        }
    }
    let mut parts = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for (i, &y) in ds.y.iter().enumerate() {
        if let Some((set, new_label)) = role[y] {
            parts[set].0.push(i);
            parts[set].1.push(new_label);
        }
    }
    let build = |(idx, labels): &(Vec<usize>, Vec<usize>), k: usize| {
        let mut d = ds.subset(idx);
        d.y = labels.clone();
        d.n_classes = k;
        d
    };
    Ok((build(&parts[0], base.len()), build(&parts[1], novel.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn ten_classes() -> Dataset {
        let n = 40;
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i % 10).collect(), vec![0; n], 10).unwrap()
    }

    #[test]
    fn five_five_split() {
        let ds = ten_classes();
        let (b, n) = split_classes(&ds, &[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]).unwrap();
        assert!(b.y.iter().all(|&y| y < 5) && n.y.iter().all(|&y| y < 5));
        assert_eq!(b.len() + n.len(), ds.len());
        assert_eq!(n.x[(0, 0)], 5.0);
        assert!(b.x.as_slice().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn partial_split_counts() {
        let ds = ten_classes();
        let (b, n) = split_classes(&ds, &[3], &[7, 1]).unwrap();
        assert_eq!(b.len() + n.len(), 12);
        assert_eq!(n.y[0], 1); // class 1 appears first and maps to index 1
    }

    #[test]
    fn invalid_sets() {
        let ds = ten_classes();
        let all: Vec<usize> = (0..10).collect();
        assert!(matches!(split_classes(&ds, &all, &[]), Err(Error::Parameter(_))));
        assert!(split_classes(&ds, &[1, 2], &[2, 3]).is_err());
        assert!(split_classes(&ds, &[1], &[12]).is_err());
    }
}
