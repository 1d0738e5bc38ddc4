//! Joint training of all three dictionary layers.
//!
//! The proxies `Z1 = φ(D2 Z2)` and `Z2 = φ(D3 Z)` are relaxed with Bregman
//! variables `B1`, `B2` and the resulting augmented Lagrangian is minimized
//! one block at a time. Every outer iteration runs
//!
//! ```text
//! P4 (Z1) → P5 (Z2) → P6 (Z, per class) → [DropOut]
//!        → P1 (D1) → P2 (D2) → P3 (D3) → [DropConnect] → Bregman (B1, B2)
//! ```
//!
//! P6 is itself a small ADMM per class: a simultaneous OMP step on a stacked
//! system (data term plus one identity block per competing class) alternated
//! with the reverse-shrinkage step and the update of the relaxation `C`.
//! Drops are never applied in the last outer iteration.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataio::Dataset;
use crate::ddl::{greedy_train, reconstruct, Architecture};
use crate::error::{Error, Result};
use crate::model::{Model, Trainer};
use crate::numerics::linalg_internal::pinv_unchecked;
use crate::numerics::{
    column_norms, solve_spd, Activation, Matrix, Rng, Vector, DEFAULT_PINV_TOL,
};
use crate::sparse::{self, prox_push, SparsityBudget, DEFAULT_RESIDUAL_TOL};

/// Objective values above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropMode {
    None,
    DropOut,
    DropConnect,
}

impl DropMode {
    pub fn name(self) -> &'static str {
        match self {
            DropMode::None => "none",
            DropMode::DropOut => "out",
            DropMode::DropConnect => "connect",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(DropMode::None),
            "out" | "dropout" => Some(DropMode::DropOut),
            "connect" | "dropconnect" => Some(DropMode::DropConnect),
            _ => None,
        }
    }
}

/// Update rule for the Bregman relaxation variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanRule {
    /// `B ← r − B` with `r` the constraint residual.
    Printed,
    /// `B ← B − r`, the usual scaled dual ascent for a `‖r − B‖²` penalty.
    DualAscent,
}

impl BregmanRule {
    pub fn name(self) -> &'static str {
        match self {
            BregmanRule::Printed => "printed",
            BregmanRule::DualAscent => "dual-ascent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "printed" => Some(BregmanRule::Printed),
            "dual-ascent" => Some(BregmanRule::DualAscent),
            _ => None,
        }
    }

    /// New relaxation value given the residual `r` and the old value.
    fn apply(self, residual: &Matrix, old: &Matrix) -> Matrix {
        match self {
            BregmanRule::Printed => residual - old,
            BregmanRule::DualAscent => old - residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub budget: SparsityBudget,
    /// Weight of the row-sparsity count in the reported objective. The
    /// optimization itself only sees `budget`.
    pub lambda: f64,
    /// Support-diversity weight.
    pub mu: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Weight of the inner (per-class) augmented term.
    pub gamma: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub test_iters: usize,
    /// Alternations per layer for the greedy warm start.
    pub warm_start_iters: usize,
    pub drop_mode: DropMode,
    pub drop_rate: f64,
    pub seed: u64,
    pub bregman_rule: BregmanRule,
    /// Magnitudes at or below this count as zero in supports and `l0` counts.
    pub support_tol: f64,
    /// Scale every sample (train and test) to unit l2 norm before use.
    pub normalize_inputs: bool,
}

impl TrainConfig {
    pub fn for_architecture(arch: &Architecture) -> Self {
        TrainConfig {
            budget: SparsityBudget::default_for(arch.feature_dim()),
            lambda: 0.1,
            mu: 0.5,
            eta1: 1.0,
            eta2: 1.0,
            gamma: 0.1,
            outer_iters: 15,
            inner_iters: 5,
            test_iters: 10,
            warm_start_iters: 10,
            drop_mode: DropMode::DropConnect,
            drop_rate: 0.1,
            seed: 0,
            bregman_rule: BregmanRule::Printed,
            support_tol: 1e-8,
            normalize_inputs: true,
        }
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        arch.validate()?;
        self.budget.validate(arch.feature_dim())?;
        let positive = [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::input(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::input(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::input(format!("drop rate {} outside [0, 1)", self.drop_rate)));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 || self.test_iters == 0 || self.warm_start_iters == 0 {
            return Err(Error::input("iteration counts must be positive"));
        }
        if !(self.support_tol >= 0.0) {
            return Err(Error::input("support_tol must be >= 0"));
        }
        Ok(())
    }

    /// Every field as `key=value`, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("per_column_s", self.budget.per_column_s.to_string()),
            ("row_s", self.budget.row_s.to_string()),
            ("lambda", self.lambda.to_string()),
            ("mu", self.mu.to_string()),
            ("eta1", self.eta1.to_string()),
            ("eta2", self.eta2.to_string()),
            ("gamma", self.gamma.to_string()),
            ("outer_iters", self.outer_iters.to_string()),
            ("inner_iters", self.inner_iters.to_string()),
            ("test_iters", self.test_iters.to_string()),
            ("warm_start_iters", self.warm_start_iters.to_string()),
            ("drop", self.drop_mode.name().to_string()),
            ("drop_rate", self.drop_rate.to_string()),
            ("seed", self.seed.to_string()),
            ("bregman", self.bregman_rule.name().to_string()),
            ("support_tol", self.support_tol.to_string()),
            ("normalize", self.normalize_inputs.to_string()),
        ]
    }

    /// Set one field from its `to_pairs` key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad value {value:?} for {key}")))
        }
        match key {
            "per_column_s" => self.budget.per_column_s = num(key, value)?,
            "row_s" => self.budget.row_s = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "eta1" => self.eta1 = num(key, value)?,
            "eta2" => self.eta2 = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "outer_iters" => self.outer_iters = num(key, value)?,
            "inner_iters" => self.inner_iters = num(key, value)?,
            "test_iters" => self.test_iters = num(key, value)?,
            "warm_start_iters" => self.warm_start_iters = num(key, value)?,
            "drop" => {
                self.drop_mode = DropMode::parse(value.trim())
                    .ok_or_else(|| Error::input(format!("unknown drop mode {value:?}")))?
            }
            "drop_rate" => self.drop_rate = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "bregman" => {
                self.bregman_rule = BregmanRule::parse(value.trim())
                    .ok_or_else(|| Error::input(format!("unknown Bregman rule {value:?}")))?
            }
            "support_tol" => self.support_tol = num(key, value)?,
            "normalize" => self.normalize_inputs = num(key, value)?,
            _ => return Err(Error::input(format!("unknown training parameter {key:?}"))),
        }
        Ok(())
    }
}

/// Proxy and relaxation variables of the diversity split for one ordered
/// class pair `(c, k)`: `P ≈ Z̄k − Zc` with relaxation `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityPair {
    /// Zero-based index of the competing class `k`.
    pub competitor: usize,
    pub p: Matrix,
    pub c: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub d1: Matrix,
    pub d2: Matrix,
    pub d3: Matrix,
    pub z1: Matrix,
    pub z2: Matrix,
    pub z: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    /// `diversity[c]` holds one pair per competitor of class `c`.
    pub diversity: Vec<Vec<DiversityPair>>,
}

/// Mean feature of every class, as columns.
pub fn class_means(z: &Matrix, classes: &[Vec<usize>]) -> Vec<Vector> {
    classes
        .iter()
        .map(|cols| {
            let mut m = Vector::zeros(z.nrows());
            for &j in cols {
                m += z.column(j);
            }
            m / cols.len().max(1) as f64
        })
        .collect()
}

fn repeat_column(v: &Vector, n: usize) -> Matrix {
    Matrix::from_fn(v.len(), n, |i, _| v[i])
}

fn scatter_columns(dst: &mut Matrix, cols: &[usize], block: &Matrix) {
    for (k, &j) in cols.iter().enumerate() {
        dst.set_column(j, &block.column(k));
    }
}

/// Least-squares dictionary for `target ≈ D · codes`, renormalized with the
/// scale folded into `codes`.
///
/// Atoms whose code row is zero are not determined by the fit; they keep
/// their column from `prev` instead of being re-seeded from the data, so an
/// atom no class uses cannot turn into a copy of one sample.
fn solve_dictionary(target: &Matrix, codes: &mut Matrix, prev: &Matrix) -> Matrix {
    let mut d = target * pinv_unchecked(codes, DEFAULT_PINV_TOL);
    let row_norms: Vec<f64> = codes.row_iter().map(|r| r.norm()).collect();
    let max_row = row_norms.iter().cloned().fold(0.0, f64::max);
    for j in 0..d.ncols() {
        let n = d.column(j).norm();
        if row_norms[j] <= 1e-12 * max_row.max(1e-300) || n <= 1e-10 {
            let mut atom = prev.column(j).into_owned();
            let pn = atom.norm();
            if pn > 1e-12 {
                atom /= pn;
            } else {
                atom.fill(0.0);
                let rows = atom.len();
                atom[j % rows] = 1.0;
            }
            d.set_column(j, &atom);
            codes.row_mut(j).fill(0.0);
        } else {
            d.column_mut(j).unscale_mut(n);
            codes.row_mut(j).scale_mut(n);
        }
    }
    d
}

/// P1: `min ‖X − D1 Z1‖`.
pub fn solve_p1(x: &Matrix, z1: &mut Matrix, prev: &Matrix) -> Matrix {
    solve_dictionary(x, z1, prev)
}

/// P2: `min ‖φ⁻¹(Z1 − B1) − D2 Z2‖`.
pub fn solve_p2(z1: &Matrix, b1: &Matrix, z2: &mut Matrix, prev: &Matrix, act: &Activation) -> Matrix {
    solve_dictionary(&act.inverse(&(z1 - b1)), z2, prev)
}

/// P3: `min ‖φ⁻¹(Z2 − B2) − D3 Z‖`.
pub fn solve_p3(z2: &Matrix, b2: &Matrix, z: &mut Matrix, prev: &Matrix, act: &Activation) -> Matrix {
    solve_dictionary(&act.inverse(&(z2 - b2)), z, prev)
}

/// P4: `min ‖X − D1 Z1‖² + η1 ‖Z1 − φ(D2 Z2) − B1‖²`.
pub fn solve_p4(
    x: &Matrix,
    d1: &Matrix,
    d2: &Matrix,
    z2: &Matrix,
    b1: &Matrix,
    eta1: f64,
    act: &Activation,
) -> Matrix {
    let mut lhs = d1.tr_mul(d1);
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += eta1;
    }
    let rhs = d1.tr_mul(x) + (act.forward(&(d2 * z2)) + b1) * eta1;
    solve_spd(&lhs, &rhs)
}

/// P5: `min η1 ‖φ⁻¹(Z1 − B1) − D2 Z2‖² + η2 ‖Z2 − φ(D3 Z) − B2‖²`.
#[allow(clippy::too_many_arguments)]
pub fn solve_p5(
    z1: &Matrix,
    b1: &Matrix,
    d2: &Matrix,
    d3: &Matrix,
    z: &Matrix,
    b2: &Matrix,
    eta1: f64,
    eta2: f64,
    act: &Activation,
) -> Matrix {
    let mut lhs = d2.tr_mul(d2) * eta1;
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += eta2;
    }
    let rhs = d2.tr_mul(&act.inverse(&(z1 - b1))) * eta1 + (act.forward(&(d3 * z)) + b2) * eta2;
    solve_spd(&lhs, &rhs)
}

#[derive(Debug, Clone, Copy)]
pub struct ClassSolveParams {
    pub row_s: usize,
    pub mu: f64,
    pub gamma: f64,
    pub eta2: f64,
    pub inner_iters: usize,
    pub rule: BregmanRule,
}

/// P6 restricted to one class.
///
/// `target` is `φ⁻¹(Z2c − B2c)`. Each pair in `pairs` names a competitor
/// whose mean is looked up in `means`; its `P` and `C` are updated in place.
/// Without competitors, or with `mu == 0`, this is a single SOMP solve of the
/// data term.
pub fn solve_p6_class(
    target: &Matrix,
    d3: &Matrix,
    means: &[Vector],
    pairs: &mut [DiversityPair],
    params: &ClassSolveParams,
) -> Matrix {
    let n = target.ncols();
    let atoms = d3.ncols();
    let rows = d3.nrows();
    let sq_eta = params.eta2.sqrt();

    if pairs.is_empty() || params.mu == 0.0 {
        let a = d3 * sq_eta;
        let norms = column_norms(&a);
        return sparse::pursuit(&a, &norms, &(target * sq_eta), params.row_s, DEFAULT_RESIDUAL_TOL);
    }

    let sq_gamma = params.gamma.sqrt();
    let k = pairs.len();
    let mut a = Matrix::zeros(rows + k * atoms, atoms);
    a.view_mut((0, 0), (rows, atoms)).copy_from(&(d3 * sq_eta));
    for block in 0..k {
        for i in 0..atoms {
            a[(rows + block * atoms + i, i)] = sq_gamma;
        }
    }
    let norms = column_norms(&a);
    let repeated: Vec<Matrix> = pairs.iter().map(|p| repeat_column(&means[p.competitor], n)).collect();

    let mut zc = Matrix::zeros(atoms, n);
    for _ in 0..params.inner_iters {
        // S1: joint row-sparse fit of the data and proximity terms
        let mut b = Matrix::zeros(rows + k * atoms, n);
        b.view_mut((0, 0), (rows, n)).copy_from(&(target * sq_eta));
        for (block, pair) in pairs.iter().enumerate() {
            let goal = (&repeated[block] + &pair.c - &pair.p) * sq_gamma;
            b.view_mut((rows + block * atoms, 0), (atoms, n)).copy_from(&goal);
        }
        zc = sparse::pursuit(&a, &norms, &b, params.row_s, DEFAULT_RESIDUAL_TOL);

        // S2 and the relaxation update
        for (block, pair) in pairs.iter_mut().enumerate() {
            let gap = &repeated[block] - &zc;
            pair.p = prox_push(&(&gap + &pair.c), params.mu, params.gamma);
            let residual = &pair.p - &gap;
            pair.c = params.rule.apply(&residual, &pair.c);
        }
    }
    zc
}

/// Outer Bregman step for `B1` and `B2`. The diversity relaxations `C` are
/// updated inside [`solve_p6_class`].
pub fn bregman_update(state: &mut JointState, act: &Activation, rule: BregmanRule) {
    let r1 = &state.z1 - act.forward(&(&state.d2 * &state.z2));
    let r2 = &state.z2 - act.forward(&(&state.d3 * &state.z));
    state.b1 = rule.apply(&r1, &state.b1);
    state.b2 = rule.apply(&r2, &state.b2);
}

/// Zero each entry independently with probability `rate`; returns the count.
pub fn drop_entries(m: &mut Matrix, rate: f64, rng: &mut Rng) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let mut dropped = 0;
    for v in m.iter_mut() {
        if rng.bernoulli(rate) {
            *v = 0.0;
            dropped += 1;
        }
    }
    dropped
}

/// DropOut analog: zero random entries of the intermediate codes `Z1`, `Z2`.
/// The sparse deepest codes are left alone.
pub fn apply_dropout(state: &mut JointState, rate: f64, rng: &Rng) -> usize {
    drop_entries(&mut state.z1, rate, &mut rng.substream(1)) + drop_entries(&mut state.z2, rate, &mut rng.substream(2))
}

/// DropConnect analog: zero random entries of every dictionary.
pub fn apply_dropconnect(state: &mut JointState, rate: f64, rng: &Rng) -> usize {
    drop_entries(&mut state.d1, rate, &mut rng.substream(1))
        + drop_entries(&mut state.d2, rate, &mut rng.substream(2))
        + drop_entries(&mut state.d3, rate, &mut rng.substream(3))
}

fn count_nonzero(m: &Matrix, tol: f64) -> usize {
    m.iter().filter(|v| v.abs() > tol).count()
}

fn nonzero_rows(m: &Matrix, tol: f64) -> usize {
    m.row_iter().filter(|r| r.norm() > tol).count()
}

/// Training objective with the `l2,0` / `l0` terms evaluated as counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// `‖X − D1 φ(D2 φ(D3 Z))‖²_F`
    pub reconstruction: f64,
    /// `Σ_c ‖Z_c‖_{2,0}`
    pub row_support: usize,
    /// `Σ_c Σ_{k≠c} ‖Z̄_k − Z_c‖_0`
    pub diversity: usize,
    pub total: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn objective(
    x: &Matrix,
    dictionaries: &[Matrix],
    z: &Matrix,
    classes: &[Vec<usize>],
    lambda: f64,
    mu: f64,
    act: &Activation,
    tol: f64,
) -> Objective {
    let reconstruction = (x - reconstruct(dictionaries, act, z)).norm_squared();
    let means = class_means(z, classes);
    let mut row_support = 0;
    let mut diversity = 0;
    for (c, cols) in classes.iter().enumerate() {
        let zc = z.select_columns(cols);
        row_support += nonzero_rows(&zc, tol);
        for (k, mean) in means.iter().enumerate() {
            if k != c {
                diversity += count_nonzero(&(repeat_column(mean, cols.len()) - &zc), tol);
            }
        }
    }
    Objective {
        reconstruction,
        row_support,
        diversity,
        total: reconstruction + lambda * row_support as f64 - mu * diversity as f64,
    }
}

/// `(‖Z1 − φ(D2 Z2)‖_F, ‖Z2 − φ(D3 Z)‖_F)`
pub fn feasibility(state: &JointState, act: &Activation) -> (f64, f64) {
    (
        (&state.z1 - act.forward(&(&state.d2 * &state.z2))).norm(),
        (&state.z2 - act.forward(&(&state.d3 * &state.z))).norm(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the warm-started initial point.
    pub iter: usize,
    pub objective: Objective,
    pub feasibility: (f64, f64),
    /// Nonzero rows of each class block, class 1 first.
    pub supports: Vec<usize>,
    pub perturbed: bool,
}

/// Per-iteration trace of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub config: Vec<(String, String)>,
    pub records: Vec<IterationRecord>,
    /// `‖X − D1 φ(D2 φ(D3 Z))‖_F` of the greedy layer-wise fit.
    pub greedy_reconstruction: Option<f64>,
    /// Same quantity for the jointly trained model.
    pub joint_reconstruction: Option<f64>,
}

impl RunLog {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# rsddl run log\n");
        for (k, v) in &self.config {
            let _ = writeln!(out, "config\t{k}={v}");
        }
        if let Some(g) = self.greedy_reconstruction {
            let _ = writeln!(out, "greedy_reconstruction\t{g:.10e}");
        }
        let last = self.records.len().saturating_sub(1);
        for (i, r) in self.records.iter().enumerate() {
            let supports = r
                .supports
                .iter()
                .enumerate()
                .map(|(c, s)| format!("{}:{s}", c + 1))
                .collect::<Vec<_>>()
                .join(",");
            let _ = write!(
                out,
                "iter={}\tobjective={:.10e}\treconstruction={:.10e}\trow_support={}\tdiversity={}\tfeas1={:.10e}\tfeas2={:.10e}\tsupports={}\tperturbed={}",
                r.iter,
                r.objective.total,
                r.objective.reconstruction,
                r.objective.row_support,
                r.objective.diversity,
                r.feasibility.0,
                r.feasibility.1,
                supports,
                if r.perturbed { "yes" } else { "no" },
            );
            if i == last && r.iter > 0 {
                out.push_str("\tfinal");
            }
            out.push('\n');
        }
        if let Some(j) = self.joint_reconstruction {
            let _ = writeln!(out, "joint_reconstruction\t{j:.10e}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: RunLog,
}

/// Scale every column to unit l2 norm (zero columns are left as they are).
pub fn normalize_samples(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

pub(crate) fn prepare_inputs(data: &Dataset, cfg: &TrainConfig) -> Matrix {
    if cfg.normalize_inputs {
        normalize_samples(&data.x)
    } else {
        data.x.clone()
    }
}

impl JointState {
    /// Greedy layer-wise fit, codes clamped into the activation band and the
    /// deepest codes projected onto the per-class row budget. All relaxation
    /// variables start at one; each `P` starts at its constraint value
    /// `Z̄k − Zc`.
    pub fn warm_start(
        x: &Matrix,
        arch: &Architecture,
        classes: &[Vec<usize>],
        cfg: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<(JointState, f64)> {
        let act = arch.activation;
        let greedy = greedy_train(x, arch, cfg.budget.per_column_s, cfg.warm_start_iters, rng)?;
        let greedy_recon = (x - reconstruct(&greedy.model.dictionaries, &act, greedy.codes())).norm();

        let mut dicts = greedy.model.dictionaries.into_iter();
        let (d1, d2, d3) = (
            dicts.next().expect("depth 3"),
            dicts.next().expect("depth 3"),
            dicts.next().expect("depth 3"),
        );
        let mut codes = greedy.layer_codes.into_iter();
        let z1 = act.clamp(&codes.next().expect("depth 3"));
        let z2 = act.clamp(&codes.next().expect("depth 3"));

        let target = act.inverse(&z2);
        let mut z = Matrix::zeros(d3.ncols(), x.ncols());
        let norms = column_norms(&d3);
        for cols in classes {
            let zc = sparse::pursuit(&d3, &norms, &target.select_columns(cols), cfg.budget.row_s, DEFAULT_RESIDUAL_TOL);
            scatter_columns(&mut z, cols, &zc);
        }

        let means = class_means(&z, classes);
        let diversity = if cfg.mu > 0.0 {
            classes
                .iter()
                .enumerate()
                .map(|(c, cols)| {
                    let zc = z.select_columns(cols);
                    (0..classes.len())
                        .filter(|&k| k != c)
                        .map(|k| DiversityPair {
                            competitor: k,
                            p: repeat_column(&means[k], cols.len()) - &zc,
                            c: Matrix::from_element(zc.nrows(), zc.ncols(), 1.0),
                        })
                        .collect()
                })
                .collect()
        } else {
            vec![Vec::new(); classes.len()]
        };

        let state = JointState {
            b1: Matrix::from_element(z1.nrows(), z1.ncols(), 1.0),
            b2: Matrix::from_element(z2.nrows(), z2.ncols(), 1.0),
            d1,
            d2,
            d3,
            z1,
            z2,
            z,
            diversity,
        };
        Ok((state, greedy_recon))
    }

    pub fn dictionaries(&self) -> [Matrix; 3] {
        [self.d1.clone(), self.d2.clone(), self.d3.clone()]
    }

    /// P1, P2, P3. The column scales of `D1` and `D2` are folded into
    /// scratch copies only: `Z1` and `Z2` stand in for activation outputs,
    /// and rescaling them would break `Z1 = φ(D2 Z2)` and leave the
    /// invertible band. P4 and P5 recompute them against the unit-norm
    /// dictionaries on the next sweep. The scale of `D3` goes into `Z` so
    /// `D3 Z` is unchanged. Unused atoms are taken from `prev`, the last
    /// dictionaries the solver produced before any drop.
    pub fn update_dictionaries(&mut self, x: &Matrix, act: &Activation, prev: &[Matrix; 3]) {
        self.d1 = solve_p1(x, &mut self.z1.clone(), &prev[0]);
        self.d2 = solve_p2(&self.z1, &self.b1, &mut self.z2.clone(), &prev[1], act);
        self.d3 = solve_p3(&self.z2, &self.b2, &mut self.z, &prev[2], act);
    }

    /// P6 for every class, in parallel; writes the new `Z`.
    pub fn solve_p6(&mut self, classes: &[Vec<usize>], cfg: &TrainConfig, act: &Activation) {
        let means = class_means(&self.z, classes);
        let target = act.inverse(&(&self.z2 - &self.b2));
        let params = ClassSolveParams {
            row_s: cfg.budget.row_s,
            mu: cfg.mu,
            gamma: cfg.gamma,
            eta2: cfg.eta2,
            inner_iters: cfg.inner_iters,
            rule: cfg.bregman_rule,
        };
        let d3 = &self.d3;
        let blocks: Vec<Matrix> = self
            .diversity
            .par_iter_mut()
            .zip(classes.par_iter())
            .map(|(pairs, cols)| solve_p6_class(&target.select_columns(cols), d3, &means, pairs, &params))
            .collect();
        for (cols, zc) in classes.iter().zip(&blocks) {
            scatter_columns(&mut self.z, cols, zc);
        }
    }
}

fn record(
    iter: usize,
    x: &Matrix,
    state: &JointState,
    classes: &[Vec<usize>],
    cfg: &TrainConfig,
    act: &Activation,
    perturbed: bool,
) -> IterationRecord {
    let objective = objective(
        x,
        &state.dictionaries(),
        &state.z,
        classes,
        cfg.lambda,
        cfg.mu,
        act,
        cfg.support_tol,
    );
    let supports = classes
        .iter()
        .map(|cols| nonzero_rows(&state.z.select_columns(cols), cfg.support_tol))
        .collect();
    IterationRecord {
        iter,
        objective,
        feasibility: feasibility(state, act),
        supports,
        perturbed,
    }
}

/// Jointly train a three-layer model on labeled columns.
pub fn joint_train(data: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate(arch)?;
    if arch.depth() != 3 {
        return Err(Error::input(format!(
            "joint training needs exactly 3 layers, got {}",
            arch.depth()
        )));
    }
    let classes = data.class_partition()?;
    let act = arch.activation;
    let x = prepare_inputs(data, cfg);
    let rng = Rng::new(cfg.seed);

    let (mut state, greedy_recon) = JointState::warm_start(&x, arch, &classes, cfg, &mut rng.substream(0))?;
    let mut log = RunLog {
        config: config_echo(arch, cfg, Trainer::Joint),
        greedy_reconstruction: Some(greedy_recon),
        ..RunLog::default()
    };
    log.records.push(record(0, &x, &state, &classes, cfg, &act, false));

    let mut clean = state.dictionaries();
    for iter in 1..=cfg.outer_iters {
        let perturb = iter < cfg.outer_iters && cfg.drop_rate > 0.0;
        let iter_rng = rng.substream(iter as u64);

        state.z1 = solve_p4(&x, &state.d1, &state.d2, &state.z2, &state.b1, cfg.eta1, &act);
        state.z2 = solve_p5(
            &state.z1, &state.b1, &state.d2, &state.d3, &state.z, &state.b2, cfg.eta1, cfg.eta2, &act,
        );
        state.solve_p6(&classes, cfg, &act);

        let mut perturbed = false;
        if perturb && cfg.drop_mode == DropMode::DropOut {
            apply_dropout(&mut state, cfg.drop_rate, &iter_rng);
            perturbed = true;
        }

        state.update_dictionaries(&x, &act, &clean);
        clean = state.dictionaries();

        if perturb && cfg.drop_mode == DropMode::DropConnect {
            apply_dropconnect(&mut state, cfg.drop_rate, &iter_rng);
            perturbed = true;
        }

        bregman_update(&mut state, &act, cfg.bregman_rule);

        let rec = record(iter, &x, &state, &classes, cfg, &act, perturbed);
        log::debug!("iteration {iter}: objective {:.6e}", rec.objective.total);
        let total = rec.objective.total;
        log.records.push(rec);
        if !total.is_finite() || total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { iter, objective: total });
        }
    }

    let dictionaries = vec![state.d1, state.d2, state.d3];
    log.joint_reconstruction = Some((&x - reconstruct(&dictionaries, &act, &state.z)).norm());
    let model = Model::summarize(
        Trainer::Joint,
        arch.clone(),
        dictionaries,
        state.z,
        data.labels.clone(),
        cfg.clone(),
    );
    Ok(TrainOutcome { model, log })
}

pub(crate) fn config_echo(arch: &Architecture, cfg: &TrainConfig, trainer: Trainer) -> Vec<(String, String)> {
    let mut out = vec![
        ("trainer".to_string(), trainer.name().to_string()),
        ("architecture".to_string(), arch.atoms_string()),
        ("activation".to_string(), arch.activation.kind.name().to_string()),
        ("clamp_eps".to_string(), arch.activation.clamp_eps.to_string()),
    ];
    out.extend(cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
    out
}
