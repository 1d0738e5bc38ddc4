use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, Matrix};

/// Feature columns with one class id (1-based) per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    /// Class id → column indices, ascending.
    pub class_index: BTreeMap<usize, Vec<usize>>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::input(format!(
                "{} labels for {} samples",
                labels.len(),
                x.ncols()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::input(format!("sample {i} has class 0; class ids start at 1")));
        }
        ensure_finite(&x, "dataset features")?;
        let mut class_index: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            class_index.entry(l).or_default().push(i);
        }
        Ok(Dataset {
            x,
            labels,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Largest class id present.
    pub fn num_classes(&self) -> usize {
        self.class_index.keys().next_back().copied().unwrap_or(0)
    }

    /// Column lists for classes `1..=num_classes()`, zero-based by position.
    /// Fails if any class in that range has no samples.
    pub fn class_partition(&self) -> Result<Vec<Vec<usize>>> {
        (1..=self.num_classes())
            .map(|c| match self.class_index.get(&c) {
                Some(cols) if !cols.is_empty() => Ok(cols.clone()),
                _ => Err(Error::input(format!("class {c} has no training samples"))),
            })
            .collect()
    }

    pub fn subset(&self, columns: &[usize]) -> Result<Dataset> {
        let x = self.x.select_columns(columns);
        let labels = columns.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(x, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_index_partitions_columns() {
        let ds = Dataset::new(Matrix::zeros(2, 3), vec![1, 2, 1]).unwrap();
        assert_eq!(ds.class_index[&1], vec![0, 2]);
        assert_eq!(ds.class_index[&2], vec![1]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn gap_in_classes_is_an_error_for_training() {
        let ds = Dataset::new(Matrix::zeros(2, 2), vec![1, 3]).unwrap();
        assert!(ds.class_partition().is_err());
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(Dataset::new(Matrix::zeros(2, 2), vec![1]).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 2), vec![1, 0]).is_err());
    }
}
