use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Principal component projection fitted on sample columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Column mean, `dim × 1`.
    pub mean: Matrix,
    /// Orthonormal components as columns, `dim × d`, by descending variance.
    pub basis: Matrix,
    /// Number of trailing basis vectors that carry no variance and were
    /// completed with an orthonormal complement.
    pub padded: usize,
}

impl Pca {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `basisᵀ (x − mean)` for every column of `x`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.input_dim() {
            return Err(Error::input(format!(
                "PCA expects {} input rows, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean.column(0);
        }
        Ok(self.basis.tr_mul(&centered))
    }
}

pub fn pca_fit(x: &Matrix, d: usize) -> Result<Pca> {
    if x.is_empty() {
        return Err(Error::input("pca_fit on an empty matrix"));
    }
    if d == 0 || d > x.nrows() {
        return Err(Error::input(format!(
            "pca_fit: requested {d} components for {}-dimensional data",
            x.nrows()
        )));
    }
    super::ensure_finite(x, "pca input")?;
    let dim = x.nrows();
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }

    let svd = centered.svd(true, false);
    let u = svd.u.expect("svd computed with u");
    // rounding in the centering leaves O(ε‖X‖) singular values on
    // variance-free data
    let cutoff = (1e-10 * svd.singular_values.max()).max(1e-13 * x.norm()).max(1e-300);
    let mut order: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    order.truncate(d);

    let mut basis: Vec<Vector> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let padded = d - basis.len();
    if padded > 0 {
        log::warn!("pca_fit: data rank {} below {d} components, padding basis", basis.len());
        // Gram-Schmidt the canonical vectors against what we have.
        let mut e = 0;
        while basis.len() < d && e < dim {
            let mut v = Vector::zeros(dim);
            v[e] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&v);
                    v.axpy(-proj, b, 1.0);
                }
            }
            let n = v.norm();
            if n > 1e-8 {
                basis.push(v / n);
            }
            e += 1;
        }
    }

    for b in &mut basis {
        if let Some(first) = b.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                b.neg_mut();
            }
        }
    }

    Ok(Pca {
        mean: Matrix::from_column_slice(dim, 1, mean.as_slice()),
        basis: Matrix::from_columns(&basis),
        padded,
    })
}
