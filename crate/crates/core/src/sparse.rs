//! Sparse recovery primitives: hard thresholding, OMP, simultaneous OMP and
//! the reverse-shrinkage proximal step used by the support-diversity term.

use crate::error::{Error, Result};
use crate::numerics::linalg_internal::ridge_solve_unchecked;
use crate::numerics::{column_norms, Matrix, Vector};

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-7;

/// Hard sparsity budgets standing in for the `l0` / `l2,0` penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparsityBudget {
    /// Nonzeros per coefficient column.
    pub per_column_s: usize,
    /// Nonzero rows per class block.
    pub row_s: usize,
}

impl SparsityBudget {
    /// `ceil(0.2 · atoms)` for both budgets, at least one.
    pub fn default_for(atoms: usize) -> Self {
        let s = ((atoms as f64) * 0.2).ceil().max(1.0) as usize;
        SparsityBudget {
            per_column_s: s,
            row_s: s,
        }
    }

    pub fn validate(&self, atoms: usize) -> Result<()> {
        if self.per_column_s == 0 || self.row_s == 0 {
            return Err(Error::input("sparsity budgets must be positive"));
        }
        if self.per_column_s > atoms || self.row_s > atoms {
            return Err(Error::input(format!(
                "sparsity budget ({}, {}) exceeds the {atoms} deepest atoms",
                self.per_column_s, self.row_s
            )));
        }
        Ok(())
    }
}

/// Keep the `s` largest-magnitude entries of each column; ties go to the
/// smaller row index.
pub fn hard_threshold_per_column(m: &Matrix, s: usize) -> Matrix {
    let s = s.min(m.nrows());
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    let mut idx: Vec<usize> = Vec::with_capacity(m.nrows());
    for (j, col) in m.column_iter().enumerate() {
        idx.clear();
        idx.extend(0..m.nrows());
        idx.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
        for &i in &idx[..s] {
            out[(i, j)] = col[i];
        }
    }
    out
}

fn check_dictionary(d: &Matrix, s: usize) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::input("empty dictionary"));
    }
    if s == 0 || s > d.ncols() {
        return Err(Error::input(format!(
            "sparsity {s} outside 1..={} atoms",
            d.ncols()
        )));
    }
    let norms = column_norms(d);
    if let Some(j) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::input(format!("dictionary atom {j} has zero norm")));
    }
    Ok(norms)
}

/// Orthogonal matching pursuit on a single signal.
pub fn omp(d: &Matrix, x: &Vector, s: usize, residual_tol: f64) -> Result<Vector> {
    if x.len() != d.nrows() {
        return Err(Error::input(format!(
            "omp: signal has {} rows, dictionary {}",
            x.len(),
            d.nrows()
        )));
    }
    let norms = check_dictionary(d, s)?;
    let y = Matrix::from_column_slice(x.len(), 1, x.as_slice());
    let z = pursuit(d, &norms, &y, s, residual_tol);
    Ok(z.column(0).into_owned())
}

/// Simultaneous OMP: every column of `y` shares one support of at most `s`
/// rows, selected by the row l2 norm of `Dᵀ R`.
pub fn somp(d: &Matrix, y: &Matrix, s: usize, residual_tol: f64) -> Result<Matrix> {
    if y.ncols() == 0 {
        return Err(Error::input("somp: no signals"));
    }
    if y.nrows() != d.nrows() {
        return Err(Error::input(format!(
            "somp: signals have {} rows, dictionary {}",
            y.nrows(),
            d.nrows()
        )));
    }
    let norms = check_dictionary(d, s)?;
    Ok(pursuit(d, &norms, y, s, residual_tol))
}

/// Shared greedy loop. Atoms with zero norm are never selected, which lets
/// callers pass dictionaries damaged by DropConnect.
pub(crate) fn pursuit(d: &Matrix, norms: &[f64], y: &Matrix, s: usize, residual_tol: f64) -> Matrix {
    let n_atoms = d.ncols();
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut selected = vec![false; n_atoms];
    let mut residual = y.clone();
    let mut coef = Matrix::zeros(0, y.ncols());

    while support.len() < s.min(n_atoms) {
        if residual.norm() <= residual_tol {
            break;
        }
        let corr = d.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n_atoms {
            if selected[j] || !(norms[j] > 0.0) {
                continue;
            }
            let score = corr.row(j).norm() / norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        selected[j] = true;
        support.push(j);

        let sub = d.select_columns(&support);
        coef = ridge_solve_unchecked(&sub, y, 0.0).0;
        residual = y - &sub * &coef;
    }

    let mut z = Matrix::zeros(n_atoms, y.ncols());
    for (k, &j) in support.iter().enumerate() {
        z.row_mut(j).copy_from(&coef.row(k));
    }
    z
}

/// Reverse shrinkage: entries above `mu / (2 gamma)` in magnitude pass
/// through, all others are pushed out to `sign(v) · mu / (2 gamma)` with
/// `sign(0) = +1`.
pub fn prox_push(v: &Matrix, mu: f64, gamma: f64) -> Matrix {
    let threshold = mu / (2.0 * gamma);
    v.map(|x| prox_push_scalar(x, threshold))
}

#[inline]
pub(crate) fn prox_push_scalar(v: f64, threshold: f64) -> f64 {
    if threshold < v.abs() {
        v
    } else if v < 0.0 {
        -threshold
    } else {
        threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn col(v: &[f64]) -> Vector {
        Vector::from_column_slice(v)
    }

    #[test]
    fn threshold_examples() {
        let m = Matrix::from_column_slice(3, 2, &[0.1, -5.0, 2.0, 3.0, 3.0, 1.0]);
        let t = hard_threshold_per_column(&m, 1);
        assert_eq!(t.column(0).as_slice(), &[0.0, -5.0, 0.0]);
        assert_eq!(t.column(1).as_slice(), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn threshold_is_best_s_term_approximation() {
        // brute force over all C(10, 3) supports
        let mut rng = Rng::new(17);
        let m = rng.normal_matrix(10, 4);
        let t = hard_threshold_per_column(&m, 3);
        for j in 0..4 {
            let c = m.column(j);
            assert_eq!(t.column(j).iter().filter(|v| **v != 0.0).count(), 3);
            let mut best = f64::INFINITY;
            for a in 0..10 {
                for b in a + 1..10 {
                    for e in b + 1..10 {
                        let kept = c[a] * c[a] + c[b] * c[b] + c[e] * c[e];
                        best = best.min(c.norm_squared() - kept);
                    }
                }
            }
            let err = (c - t.column(j)).norm_squared();
            assert!((err - best).abs() < 1e-12);
        }
    }

    #[test]
    fn omp_canonical() {
        let d = Matrix::identity(3, 3);
        let z = omp(&d, &col(&[0.0, 2.0, 0.0]), 1, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 2.0, 0.0]);
        let z = omp(&d, &col(&[1.0, 2.0, 3.0]), 3, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn omp_rejects_zero_atom() {
        let mut d = Matrix::identity(3, 3);
        d.column_mut(1).fill(0.0);
        assert!(matches!(
            omp(&d, &col(&[1.0, 0.0, 0.0]), 1, 1e-7),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn omp_stops_early_at_tolerance() {
        let d = Matrix::identity(4, 4);
        let z = omp(&d, &col(&[0.0, 1.0, 0.0, 0.0]), 3, 1e-7).unwrap();
        assert_eq!(z.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn somp_identity_rows() {
        let d = Matrix::identity(4, 4);
        let y = Matrix::from_row_slice(4, 3, &[0., 0., 0., 1., -2., 3., 0., 0., 0., 4., 5., 6.]);
        let z = somp(&d, &y, 2, DEFAULT_RESIDUAL_TOL).unwrap();
        assert!((z - y).norm() < 1e-14);
    }

    #[test]
    fn somp_single_column_is_omp() {
        let mut rng = Rng::new(8);
        let mut d = rng.normal_matrix(8, 12);
        for mut c in d.column_iter_mut() {
            c.normalize_mut();
        }
        let x = rng.normal_matrix(8, 1);
        let a = somp(&d, &x, 3, 1e-7).unwrap();
        let b = omp(&d, &x.column(0).into_owned(), 3, 1e-7).unwrap();
        assert!((a.column(0) - b).norm() < 1e-14);
    }

    #[test]
    fn prox_examples() {
        let v = Matrix::from_row_slice(1, 4, &[3.0, 1.0, 0.0, -1.0]);
        let p = prox_push(&v, 0.5, 0.1);
        assert_eq!(p.as_slice(), &[3.0, 2.5, 2.5, -2.5]);
    }

    #[test]
    fn default_budget() {
        assert_eq!(SparsityBudget::default_for(25).per_column_s, 5);
        assert_eq!(SparsityBudget::default_for(4).row_s, 1);
        assert_eq!(SparsityBudget::default_for(1).row_s, 1);
    }

    mod props {
        use super::*;
        use crate::numerics::Rng;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn prox_idempotent_and_never_shrinks(v in -10.0f64..10.0, mu in 0.01f64..5.0, gamma in 0.01f64..1.0) {
                let m = Matrix::from_element(1, 1, v);
                let once = prox_push(&m, mu, gamma);
                let twice = prox_push(&once, mu, gamma);
                prop_assert_eq!(once[(0, 0)], twice[(0, 0)]);
                prop_assert!(once[(0, 0)].abs() >= v.abs().min(mu / (2.0 * gamma)));
            }

            #[test]
            fn omp_on_orthonormal_is_thresholding(seed in 0u64..500, s in 1usize..=6) {
                let mut rng = Rng::new(seed);
                let q = rng.normal_matrix(6, 6).qr().q();
                let x = rng.normal_matrix(6, 1);
                let z = omp(&q, &x.column(0).into_owned(), s, 0.0).unwrap();
                let ht = hard_threshold_per_column(&q.tr_mul(&x), s);
                prop_assert!((Matrix::from_column_slice(6, 1, z.as_slice()) - ht).norm() < 1e-9);
            }

            #[test]
            fn pursuit_respects_budget(seed in 0u64..500, s in 1usize..=5, cols in 1usize..6) {
                let mut rng = Rng::new(seed);
                let d = rng.normal_matrix(7, 10);
                let y = rng.normal_matrix(7, cols);
                let z = somp(&d, &y, s, 1e-7).unwrap();
                let rows = z.row_iter().filter(|r| r.norm() > 0.0).count();
                prop_assert!(rows <= s);
                if rows < s {
                    prop_assert!((&y - &d * &z).norm() <= 1e-7);
                }
            }
        }
    }
}
