//! Shallow dictionary learning and the greedy layer-wise deep baseline.
//!
//! Every layer is trained by alternating minimization: a code step (OMP with
//! a per-column budget on the deepest layer, plain least squares elsewhere)
//! followed by a least-squares dictionary step and column renormalization.

use crate::error::{Error, Result};
use crate::numerics::linalg_internal::{pinv_unchecked, ridge_solve_unchecked};
use crate::numerics::{column_norms, normalize_dictionary, Activation, Matrix, Rng, Vector, DEFAULT_PINV_TOL};
use crate::sparse::{self, DEFAULT_RESIDUAL_TOL};

/// Per-layer atom counts, shallowest first, plus the activation between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub atoms_per_layer: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(atoms_per_layer: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = Architecture {
            atoms_per_layer,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms_per_layer.is_empty() {
            return Err(Error::input("architecture needs at least one layer"));
        }
        if self.atoms_per_layer.contains(&0) {
            return Err(Error::input("every layer needs at least one atom"));
        }
        if !(self.activation.clamp_eps > 0.0 && self.activation.clamp_eps < 1.0) {
            return Err(Error::input("activation clamp_eps must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.atoms_per_layer.len()
    }

    /// Dimension of the deepest coefficients.
    pub fn feature_dim(&self) -> usize {
        *self.atoms_per_layer.last().expect("validated architecture")
    }

    /// Parse `"100,50,25"`.
    pub fn parse_atoms(s: &str) -> Result<Vec<usize>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::input(format!("bad atom count {t:?} in architecture {s:?}")))
            })
            .collect()
    }

    pub fn atoms_string(&self) -> String {
        self.atoms_per_layer
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyModel {
    pub dictionaries: Vec<Matrix>,
    pub architecture: Architecture,
}

#[derive(Debug, Clone)]
pub struct DictLearnResult {
    pub dictionary: Matrix,
    pub codes: Matrix,
    /// `‖X − DZ‖_F` after every iteration.
    pub objective: Vec<f64>,
    pub reseeded: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub model: GreedyModel,
    /// Coefficients of every layer; intermediate ones are clamped into the
    /// activation's invertible band.
    pub layer_codes: Vec<Matrix>,
    pub layer_objectives: Vec<Vec<f64>>,
}

impl GreedyResult {
    pub fn codes(&self) -> &Matrix {
        self.layer_codes.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, Copy)]
enum CodeStep {
    Sparse(usize),
    Dense,
}

fn random_dictionary(rows: usize, atoms: usize, rng: &mut Rng) -> Matrix {
    let mut d = rng.normal_matrix(rows, atoms);
    for mut c in d.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        } else {
            c[0] = 1.0;
        }
    }
    d
}

fn column_residuals(x: &Matrix, d: &Matrix, z: &Matrix) -> Vec<f64> {
    (x - d * z).column_iter().map(|c| c.norm_squared()).collect()
}

fn factorize(x: &Matrix, n_atoms: usize, step: CodeStep, iters: usize, rng: &mut Rng) -> Result<DictLearnResult> {
    if x.is_empty() {
        return Err(Error::input("cannot learn a dictionary from empty data"));
    }
    if n_atoms == 0 || iters == 0 {
        return Err(Error::input("dictionary learning needs atoms > 0 and iters > 0"));
    }
    crate::numerics::ensure_finite(x, "training data")?;
    if let CodeStep::Sparse(s) = step {
        if s == 0 || s > n_atoms {
            return Err(Error::input(format!("sparsity {s} outside 1..={n_atoms}")));
        }
    }
    if n_atoms > x.ncols() {
        log::warn!("learning {n_atoms} atoms from only {} samples", x.ncols());
    }

    let mut d = random_dictionary(x.nrows(), n_atoms, rng);
    let mut z: Option<Matrix> = None;
    let mut objective = Vec::with_capacity(iters);
    let mut reseeded = 0;

    for _ in 0..iters {
        let mut codes = match step {
            CodeStep::Dense => pinv_unchecked(&d, DEFAULT_PINV_TOL) * x,
            CodeStep::Sparse(s) => {
                let norms = column_norms(&d);
                let mut codes = Matrix::zeros(n_atoms, x.ncols());
                for (j, xc) in x.column_iter().enumerate() {
                    let y = Matrix::from_column_slice(x.nrows(), 1, xc.as_slice());
                    let c = sparse::pursuit(&d, &norms, &y, s, DEFAULT_RESIDUAL_TOL);
                    codes.set_column(j, &c.column(0));
                }
                // greedy pursuit can lose to the previous code under the new
                // dictionary; keep whichever fits better so the objective
                // never goes up
                if let Some(prev) = &z {
                    let new_res = column_residuals(x, &d, &codes);
                    let old_res = column_residuals(x, &d, prev);
                    for j in 0..x.ncols() {
                        if old_res[j] < new_res[j] {
                            codes.set_column(j, &prev.column(j));
                        }
                    }
                }
                codes
            }
        };

        // D-step: least squares on Zᵀ Dᵀ = Xᵀ
        d = ridge_solve_unchecked(&codes.transpose(), &x.transpose(), 0.0).0.transpose();
        reseeded += normalize_dictionary(&mut d, &mut codes, x);
        objective.push((x - &d * &codes).norm());
        z = Some(codes);
    }

    Ok(DictLearnResult {
        dictionary: d,
        codes: z.expect("iters > 0"),
        objective,
        reseeded,
    })
}

/// Shallow dictionary learning with `s` nonzeros per code column.
pub fn dict_learn(x: &Matrix, n_atoms: usize, s: usize, iters: usize, rng: &mut Rng) -> Result<DictLearnResult> {
    factorize(x, n_atoms, CodeStep::Sparse(s), iters, rng)
}

/// Unpenalized matrix factorization `X ≈ DZ` by alternating least squares.
pub fn factorize_dense(x: &Matrix, n_atoms: usize, iters: usize, rng: &mut Rng) -> Result<DictLearnResult> {
    factorize(x, n_atoms, CodeStep::Dense, iters, rng)
}

/// Greedy layer-wise training: layer 1 factorizes `X`, every deeper layer
/// factorizes the inverted activation of the previous coefficients, and only
/// the deepest layer is sparse.
pub fn greedy_train(
    x: &Matrix,
    arch: &Architecture,
    s: usize,
    iters_per_layer: usize,
    rng: &mut Rng,
) -> Result<GreedyResult> {
    arch.validate()?;
    let act = arch.activation;
    let depth = arch.depth();
    let mut input = x.clone();
    let mut dictionaries = Vec::with_capacity(depth);
    let mut layer_codes = Vec::with_capacity(depth);
    let mut layer_objectives = Vec::with_capacity(depth);

    for (layer, &atoms) in arch.atoms_per_layer.iter().enumerate() {
        let last = layer + 1 == depth;
        let fit = if last {
            dict_learn(&input, atoms, s, iters_per_layer, rng)?
        } else {
            factorize_dense(&input, atoms, iters_per_layer, rng)?
        };
        let codes = if last { fit.codes } else { act.clamp(&fit.codes) };
        if !last {
            input = act.inverse(&codes);
        }
        dictionaries.push(fit.dictionary);
        layer_codes.push(codes);
        layer_objectives.push(fit.objective);
    }

    Ok(GreedyResult {
        model: GreedyModel {
            dictionaries,
            architecture: arch.clone(),
        },
        layer_codes,
        layer_objectives,
    })
}

/// `D1 φ(D2 φ(… D_L z))` for any depth.
pub fn reconstruct(dictionaries: &[Matrix], act: &Activation, z: &Matrix) -> Matrix {
    let mut y = dictionaries.last().expect("nonempty stack") * z;
    for d in dictionaries.iter().rev().skip(1) {
        y = d * act.forward(&y);
    }
    y
}

/// Greedy test encoding: pseudo-inverse through the shallow layers, OMP on
/// the deepest.
pub fn greedy_encode(model: &GreedyModel, x: &Vector, s: usize) -> Result<Vector> {
    let dicts = &model.dictionaries;
    if x.len() != dicts[0].nrows() {
        return Err(Error::input(format!(
            "sample has {} features, model expects {}",
            x.len(),
            dicts[0].nrows()
        )));
    }
    let act = model.architecture.activation;
    let mut v = Matrix::from_column_slice(x.len(), 1, x.as_slice());
    for (layer, d) in dicts.iter().enumerate() {
        if layer + 1 == dicts.len() {
            return sparse::omp(d, &v.column(0).into_owned(), s, DEFAULT_RESIDUAL_TOL);
        }
        let code = act.clamp(&(pinv_unchecked(d, DEFAULT_PINV_TOL) * &v));
        v = act.inverse(&code);
    }
    unreachable!("loop returns on the deepest layer")
}
