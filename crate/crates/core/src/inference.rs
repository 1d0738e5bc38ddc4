//! Test-time encoding and nearest-feature classification.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::ddl::{greedy_encode, reconstruct};
use crate::error::{Error, Result};
use crate::joint::BregmanRule;
use crate::model::{Model, Trainer};
use crate::numerics::linalg_internal::pinv_unchecked;
use crate::numerics::{column_norms, solve_spd, Activation, Matrix, Vector, DEFAULT_PINV_TOL};
use crate::sparse::{self, DEFAULT_RESIDUAL_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeature {
    pub z: Vector,
    pub support: Vec<bool>,
    /// `‖x − D1 φ(D2 φ(D3 z))‖₂` against the (possibly normalized) input.
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Count of coordinates where the features differ.
    L0,
    /// Sum of absolute coordinate differences.
    L1,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::L0 => "l0",
            Rule::L1 => "l1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l0" => Some(Rule::L0),
            "l1" => Some(Rule::L1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Distance to the nearest training feature of each class, class 1 first.
    pub per_class_score: Vec<(usize, f64)>,
    pub rule: Rule,
}

impl Prediction {
    pub fn distance(&self) -> f64 {
        self.per_class_score[self.label - 1].1
    }
}

fn to_column(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// T2: `(D1ᵀD1 + η1 I) z1 = D1ᵀx + η1 (φ(D2 z2) + b1)`.
pub fn solve_t2(x: &Vector, d1: &Matrix, d2: &Matrix, z2: &Vector, b1: &Vector, eta1: f64, act: &Activation) -> Vector {
    let mut lhs = d1.tr_mul(d1);
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += eta1;
    }
    let rhs = d1.tr_mul(&to_column(x)) + (act.forward(&to_column(&(d2 * z2))) + to_column(b1)) * eta1;
    solve_spd(&lhs, &rhs).column(0).into_owned()
}

/// T3: `(η1 D2ᵀD2 + η2 I) z2 = η1 D2ᵀ φ⁻¹(z1 − b1) + η2 (φ(D3 z) + b2)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_t3(
    z1: &Vector,
    b1: &Vector,
    d2: &Matrix,
    d3: &Matrix,
    z: &Vector,
    b2: &Vector,
    eta1: f64,
    eta2: f64,
    act: &Activation,
) -> Vector {
    let mut lhs = d2.tr_mul(d2) * eta1;
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += eta2;
    }
    let rhs = d2.tr_mul(&act.inverse(&to_column(&(z1 - b1)))) * eta1
        + (act.forward(&to_column(&(d3 * z))) + to_column(b2)) * eta2;
    solve_spd(&lhs, &rhs).column(0).into_owned()
}

fn check_input(model: &Model, x: &Vector) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::input(format!(
            "sample has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("sample contains non-finite values"));
    }
    Ok(())
}

/// Encode one test sample into a deepest-layer feature.
///
/// Jointly trained models start from a pseudo-inverse pass through the
/// shallow layers, an OMP code on the deepest one and `b1 = b2 = 1`, then run
/// `test_iters` rounds in the training sweep order: the closed-form proxy
/// updates (T2, T3), OMP on the deepest layer (T1), the Bregman updates.
/// Greedy models use the greedy encoder.
pub fn encode_test(model: &Model, x: &Vector) -> Result<EncodedFeature> {
    check_input(model, x)?;
    let cfg = &model.config;
    let act = model.activation();
    let x = if cfg.normalize_inputs {
        let n = x.norm();
        if n > 0.0 {
            x / n
        } else {
            x.clone()
        }
    } else {
        x.clone()
    };
    let s = cfg.budget.per_column_s;

    let z = if model.trainer == Trainer::Greedy || model.dictionaries.len() != 3 {
        greedy_encode(&model.greedy_view(), &x, s)?
    } else {
        let (d1, d2, d3) = (&model.dictionaries[0], &model.dictionaries[1], &model.dictionaries[2]);
        let norms = column_norms(d3);
        let z1_0 = act.clamp(&(pinv_unchecked(d1, DEFAULT_PINV_TOL) * to_column(&x)));
        let z2_0 = act.clamp(&(pinv_unchecked(d2, DEFAULT_PINV_TOL) * act.inverse(&z1_0)));
        let mut z1 = z1_0.column(0).into_owned();
        let mut z2 = z2_0.column(0).into_owned();
        let mut b1 = Vector::from_element(z1.len(), 1.0);
        let mut b2 = Vector::from_element(z2.len(), 1.0);
        let mut z = sparse::pursuit(d3, &norms, &act.inverse(&z2_0), s, DEFAULT_RESIDUAL_TOL)
            .column(0)
            .into_owned();
        for _ in 0..cfg.test_iters {
            z1 = solve_t2(&x, d1, d2, &z2, &b1, cfg.eta1, &act);
            z2 = solve_t3(&z1, &b1, d2, d3, &z, &b2, cfg.eta1, cfg.eta2, &act);
            let target = act.inverse(&to_column(&(&z2 - &b2)));
            z = sparse::pursuit(d3, &norms, &target, s, DEFAULT_RESIDUAL_TOL).column(0).into_owned();
            let r1 = &z1 - act.forward(&to_column(&(d2 * &z2))).column(0);
            let r2 = &z2 - act.forward(&to_column(&(d3 * &z))).column(0);
            b1 = bregman(cfg.bregman_rule, r1, b1);
            b2 = bregman(cfg.bregman_rule, r2, b2);
        }
        z
    };

    let recon = reconstruct(&model.dictionaries, &act, &to_column(&z));
    let support = z.iter().map(|v| v.abs() > cfg.support_tol).collect();
    Ok(EncodedFeature {
        reconstruction_residual: (to_column(&x) - recon).norm(),
        support,
        z,
    })
}

fn bregman(rule: BregmanRule, residual: Vector, old: Vector) -> Vector {
    match rule {
        BregmanRule::Printed => residual - old,
        BregmanRule::DualAscent => old - residual,
    }
}

/// Entries with `|a − b| > tol`.
pub fn l0_distance(a: &[f64], b: &[f64], tol: f64) -> usize {
    a.iter().zip(b).filter(|(x, y)| (*x - *y).abs() > tol).count()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// 1-NN over stored training features; ties go to the smaller class id.
pub fn nearest_class(train: &Matrix, labels: &[usize], classes: usize, z: &[f64], rule: Rule, tol: f64) -> Prediction {
    let mut best = vec![f64::INFINITY; classes];
    for (j, &l) in labels.iter().enumerate() {
        let col = train.column(j);
        let d = match rule {
            Rule::L0 => l0_distance(z, col.as_slice(), tol) as f64,
            Rule::L1 => l1_distance(z, col.as_slice()),
        };
        if d < best[l - 1] {
            best[l - 1] = d;
        }
    }
    let mut label = 1;
    for c in 1..classes {
        if best[c] < best[label - 1] {
            label = c + 1;
        }
    }
    Prediction {
        label,
        per_class_score: best.into_iter().enumerate().map(|(c, d)| (c + 1, d)).collect(),
        rule,
    }
}

pub fn classify(model: &Model, f: &EncodedFeature, rule: Rule) -> Prediction {
    nearest_class(
        &model.train_features,
        &model.train_labels,
        model.num_classes(),
        f.z.as_slice(),
        rule,
        model.config.support_tol,
    )
}

pub fn classify_l0(model: &Model, f: &EncodedFeature) -> Prediction {
    classify(model, f, Rule::L0)
}

pub fn classify_l1(model: &Model, f: &EncodedFeature) -> Prediction {
    classify(model, f, Rule::L1)
}

/// Encode every column of `x` in parallel.
pub fn encode_batch(model: &Model, x: &Matrix) -> Result<Vec<EncodedFeature>> {
    (0..x.ncols())
        .into_par_iter()
        .map(|j| encode_test(model, &x.column(j).into_owned()))
        .collect()
}

pub fn predict_batch(model: &Model, features: &[EncodedFeature], rule: Rule) -> Vec<Prediction> {
    features.par_iter().map(|f| classify(model, f, rule)).collect()
}

/// One line per sample: `index<TAB>label<TAB>rule<TAB>distance`.
pub fn format_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for (i, p) in predictions.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}\t{}", p.label, p.rule.name(), p.distance());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_train() -> (Matrix, Vec<usize>) {
        let a = [0.0, 0.0, 0.5, 0.0, 0.3, 0.0];
        let b = [1.1, 0.0, 0.0, 0.1, 0.0, 0.2];
        let mut m = Matrix::zeros(6, 2);
        m.set_column(0, &Vector::from_row_slice(&a));
        m.set_column(1, &Vector::from_row_slice(&b));
        (m, vec![1, 2])
    }

    const TEST_Z: [f64; 6] = [0.0, 0.0, 0.4, 0.0, 0.1, 0.0];

    #[test]
    fn l0_figure_example() {
        let (m, labels) = fig1_train();
        let p = nearest_class(&m, &labels, 2, &TEST_Z, Rule::L0, 1e-8);
        assert_eq!(p.per_class_score, vec![(1, 2.0), (2, 5.0)]);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn l1_figure_example() {
        let (m, labels) = fig1_train();
        let p = nearest_class(&m, &labels, 2, &TEST_Z, Rule::L1, 1e-8);
        assert!((p.per_class_score[0].1 - 0.3).abs() < 1e-12);
        assert!((p.per_class_score[1].1 - 1.9).abs() < 1e-12);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn exact_match_and_ties() {
        let (m, labels) = fig1_train();
        let own = m.column(1).into_owned();
        let p = nearest_class(&m, &labels, 2, own.as_slice(), Rule::L0, 1e-8);
        assert_eq!((p.label, p.distance()), (2, 0.0));
        let p = nearest_class(&m, &labels, 2, own.as_slice(), Rule::L1, 1e-8);
        assert_eq!((p.label, p.distance()), (2, 0.0));

        let tie = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let p = nearest_class(&tie, &[2, 1], 2, &[0.0, 0.0], Rule::L0, 1e-8);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn l1_scale_invariant_argmin() {
        let (m, labels) = fig1_train();
        let z: Vec<f64> = TEST_Z.iter().map(|v| v * 3.0).collect();
        let p = nearest_class(&(m * 3.0), &labels, 2, &z, Rule::L1, 1e-8);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn prediction_lines() {
        let (m, labels) = fig1_train();
        let p = nearest_class(&m, &labels, 2, &TEST_Z, Rule::L0, 1e-8);
        assert_eq!(format_predictions(&[p]), "0\t1\tl0\t2\n");
    }

    #[test]
    fn t2_t3_limits() {
        let act = Activation::tanh();
        let d1 = Matrix::identity(3, 3);
        let d2 = Matrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let d3 = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let x = Vector::from_row_slice(&[0.3, -0.2, 0.1]);
        let z2 = Vector::from_row_slice(&[0.2, -0.1]);
        let b1 = Vector::zeros(3);
        let z1 = solve_t2(&x, &d1, &d2, &z2, &b1, 1.0, &act);
        let avg = (&x + act.forward(&to_column(&(&d2 * &z2))).column(0)) / 2.0;
        assert!((z1 - avg).norm() < 1e-12);

        let z = Vector::from_row_slice(&[0.5, 0.0]);
        let b2 = Vector::from_row_slice(&[0.1, 0.1]);
        let z2 = solve_t3(&Vector::from_row_slice(&[0.1, 0.2, 0.3]), &b1, &d2, &d3, &z, &b2, 0.0, 1.0, &act);
        let exact = act.forward(&to_column(&(&d3 * &z))).column(0) + &b2;
        assert!((z2 - exact).norm() < 1e-12);
    }
}
