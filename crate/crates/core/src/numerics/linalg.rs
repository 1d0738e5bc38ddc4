use nalgebra::linalg::Cholesky;

use super::Matrix;
use crate::error::{Error, Result};

/// Singular values below `DEFAULT_PINV_TOL * σ_max` are dropped.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Build a matrix from row-major data, rejecting NaN/Inf.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::input(format!("matrix must be nonempty, got {rows}x{cols}")));
    }
    if data.len() != rows * cols {
        return Err(Error::input(format!(
            "{rows}x{cols} matrix needs {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    let m = Matrix::from_row_slice(rows, cols, data);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    match m.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::input(format!(
            "{what} has a non-finite entry at ({}, {})",
            i % m.nrows(),
            i / m.nrows()
        ))),
    }
}

pub fn column_norms(m: &Matrix) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

/// Moore-Penrose pseudo-inverse through the SVD.
pub fn pinv(a: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if a.is_empty() {
        return Err(Error::input("pinv of an empty matrix"));
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::input(format!("pinv tolerance {rel_tol} outside (0, 1)")));
    }
    ensure_finite(a, "pinv input")?;
    Ok(pinv_unchecked(a, rel_tol))
}

pub(crate) fn pinv_unchecked(a: &Matrix, rel_tol: f64) -> Matrix {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let mut v_t = svd.v_t.expect("svd computed with v_t");
    let s_max = svd.singular_values.max();
    let cutoff = rel_tol * s_max;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s_max > 0.0 && s > cutoff { 1.0 / s } else { 0.0 };
        v_t.row_mut(i).scale_mut(inv);
    }
    v_t.transpose() * u.transpose()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RidgeDiagnostics {
    /// The normal equations were singular and the pseudo-inverse was used.
    pub used_pinv: bool,
}

/// Minimizer of `‖B − A·X‖² + alpha·‖X‖²`.
pub fn ridge_solve(a: &Matrix, b: &Matrix, alpha: f64) -> Result<Matrix> {
    ridge_solve_with_diagnostics(a, b, alpha).map(|(x, _)| x)
}

pub fn ridge_solve_with_diagnostics(
    a: &Matrix,
    b: &Matrix,
    alpha: f64,
) -> Result<(Matrix, RidgeDiagnostics)> {
    if a.nrows() != b.nrows() {
        return Err(Error::input(format!(
            "ridge_solve: A has {} rows but B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::input(format!("ridge_solve: alpha {alpha} must be >= 0")));
    }
    if a.is_empty() {
        return Err(Error::input("ridge_solve: empty system"));
    }
    Ok(ridge_solve_unchecked(a, b, alpha))
}

pub(crate) fn ridge_solve_unchecked(a: &Matrix, b: &Matrix, alpha: f64) -> (Matrix, RidgeDiagnostics) {
    let mut normal = a.tr_mul(a);
    for i in 0..normal.nrows() {
        normal[(i, i)] += alpha;
    }
    let rhs = a.tr_mul(b);
    if let Some(chol) = Cholesky::new(normal) {
        // Cholesky succeeds on numerically singular Gram matrices too; the
        // ratio of pivots squared bounds the condition number from below.
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let well_posed = alpha > 0.0 || (hi > 0.0 && (lo / hi).powi(2) > 1e-13);
        if well_posed {
            let x = chol.solve(&rhs);
            if x.iter().all(|v| v.is_finite()) {
                return (x, RidgeDiagnostics { used_pinv: false });
            }
        }
    }
    log::debug!("ridge_solve: singular normal equations, using pseudo-inverse");
    let x = pinv_unchecked(a, DEFAULT_PINV_TOL) * b;
    (x, RidgeDiagnostics { used_pinv: true })
}

/// Solve `M·X = R` for symmetric positive definite `M`, falling back to the
/// pseudo-inverse when the factorization breaks down.
pub fn solve_spd(m: &Matrix, rhs: &Matrix) -> Matrix {
    match Cholesky::new(m.clone()) {
        Some(chol) => chol.solve(rhs),
        None => pinv_unchecked(m, DEFAULT_PINV_TOL) * rhs,
    }
}

/// Rescale dictionary columns to unit l2 norm, folding each scale into the
/// matching coefficient row so `d·z` is unchanged.
///
/// Dead atoms (vanishing column or vanishing coefficient row) are re-seeded
/// from the worst-reconstructed column of `target` and their coefficient row
/// is cleared. Returns the number of re-seeded atoms.
pub fn normalize_dictionary(d: &mut Matrix, z: &mut Matrix, target: &Matrix) -> usize {
    debug_assert_eq!(d.ncols(), z.nrows());
    let col_norms = column_norms(d);
    let row_norms: Vec<f64> = z.row_iter().map(|r| r.norm()).collect();
    let max_row = row_norms.iter().cloned().fold(0.0, f64::max);
    let dead: Vec<usize> = (0..d.ncols())
        .filter(|&j| col_norms[j] <= 1e-10 || row_norms[j] <= 1e-12 * max_row.max(1e-300))
        .collect();

    let mut worst: Vec<usize> = Vec::new();
    if !dead.is_empty() {
        let residual = target - &*d * &*z;
        let mut order: Vec<(usize, f64)> = residual
            .column_iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm_squared()))
            .collect();
        // worst first, ties by smaller index
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        worst = order.into_iter().map(|(i, _)| i).collect();
    }

    for (slot, &j) in dead.iter().enumerate() {
        let mut atom = worst
            .get(slot % worst.len().max(1))
            .map(|&i| target.column(i).into_owned())
            .unwrap_or_else(|| nalgebra::DVector::zeros(d.nrows()));
        let n = atom.norm();
        if n > 1e-12 {
            atom /= n;
        } else {
            atom.fill(0.0);
            atom[j % d.nrows()] = 1.0;
        }
        d.set_column(j, &atom);
        z.row_mut(j).fill(0.0);
    }

    for j in 0..d.ncols() {
        if dead.contains(&j) {
            continue;
        }
        let n = col_norms[j];
        d.column_mut(j).unscale_mut(n);
        z.row_mut(j).scale_mut(n);
    }
    dead.len()
}
