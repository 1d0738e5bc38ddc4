//! Trained model: dictionaries plus the stored training features used by the
//! nearest-feature classifiers.

use crate::dataio::Dataset;
use crate::ddl::{greedy_train, reconstruct, Architecture, GreedyModel};
use crate::error::{Error, Result};
use crate::joint::{class_means, config_echo, prepare_inputs, IterationRecord, Objective, RunLog, TrainConfig};
use crate::numerics::{Matrix, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainer {
    Joint,
    Greedy,
}

impl Trainer {
    pub fn name(self) -> &'static str {
        match self {
            Trainer::Joint => "joint",
            Trainer::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(Trainer::Joint),
            "greedy" => Some(Trainer::Greedy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub trainer: Trainer,
    pub architecture: Architecture,
    pub dictionaries: Vec<Matrix>,
    /// Deepest-layer training codes, one column per sample.
    pub train_features: Matrix,
    pub train_labels: Vec<usize>,
    /// Column `c` is the mean feature of class `c + 1`.
    pub class_means: Matrix,
    /// Row `c` is the binary support of class `c + 1`.
    pub class_supports: Vec<Vec<bool>>,
    pub config: TrainConfig,
}

/// Bit `i` is set iff row `i` of `zc` has l2 norm above `tol`.
pub fn class_support(zc: &Matrix, tol: f64) -> Vec<bool> {
    zc.row_iter().map(|r| r.norm() > tol).collect()
}

fn partition(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().copied().max().unwrap_or(0);
    let mut out = vec![Vec::new(); classes];
    for (j, &l) in labels.iter().enumerate() {
        out[l - 1].push(j);
    }
    out
}

impl Model {
    /// Assemble a model and derive the per-class means and supports from the
    /// training features. Labels must be 1-based.
    pub fn summarize(
        trainer: Trainer,
        architecture: Architecture,
        dictionaries: Vec<Matrix>,
        train_features: Matrix,
        train_labels: Vec<usize>,
        config: TrainConfig,
    ) -> Model {
        let classes = partition(&train_labels);
        let means = class_means(&train_features, &classes);
        let mut class_means = Matrix::zeros(train_features.nrows(), classes.len());
        for (c, m) in means.iter().enumerate() {
            class_means.set_column(c, m);
        }
        let class_supports = classes
            .iter()
            .map(|cols| class_support(&train_features.select_columns(cols), config.support_tol))
            .collect();
        Model {
            trainer,
            architecture,
            dictionaries,
            train_features,
            train_labels,
            class_means,
            class_supports,
            config,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dictionaries[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.architecture.feature_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.ncols()
    }

    pub fn activation(&self) -> crate::numerics::Activation {
        self.architecture.activation
    }

    pub fn greedy_view(&self) -> GreedyModel {
        GreedyModel {
            dictionaries: self.dictionaries.clone(),
            architecture: self.architecture.clone(),
        }
    }

    /// Check the dictionary shape chain and that every stored piece agrees
    /// with the architecture.
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.config.validate(&self.architecture)?;
        let atoms = &self.architecture.atoms_per_layer;
        if self.dictionaries.len() != atoms.len() {
            return Err(Error::Format(format!(
                "{} dictionaries for a {}-layer architecture",
                self.dictionaries.len(),
                atoms.len()
            )));
        }
        for (l, d) in self.dictionaries.iter().enumerate() {
            if d.ncols() != atoms[l] || (l > 0 && d.nrows() != atoms[l - 1]) || d.nrows() == 0 {
                return Err(Error::Format(format!(
                    "dictionary {} is {}x{}, inconsistent with architecture {}",
                    l + 1,
                    d.nrows(),
                    d.ncols(),
                    self.architecture.atoms_string()
                )));
            }
        }
        let feat = self.feature_dim();
        if self.train_features.nrows() != feat || self.train_features.ncols() != self.train_labels.len() {
            return Err(Error::Format("training features do not match labels or architecture".into()));
        }
        if self.train_labels.iter().any(|&l| l == 0 || l > self.num_classes()) {
            return Err(Error::Format("training label outside 1..=classes".into()));
        }
        if self.class_means.nrows() != feat
            || self.class_supports.len() != self.num_classes()
            || self.class_supports.iter().any(|s| s.len() != feat)
        {
            return Err(Error::Format("class summaries do not match feature dimension".into()));
        }
        Ok(())
    }
}

/// Greedy layer-wise baseline packaged as a [`Model`].
pub fn train_greedy(data: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<(Model, RunLog)> {
    cfg.validate(arch)?;
    data.class_partition()?;
    let x = prepare_inputs(data, cfg);
    let mut rng = Rng::new(cfg.seed).substream(0);
    let fit = greedy_train(&x, arch, cfg.budget.per_column_s, cfg.warm_start_iters, &mut rng)?;
    let act = arch.activation;
    let recon = (&x - reconstruct(&fit.model.dictionaries, &act, fit.codes())).norm();
    let z = fit.codes().clone();
    let model = Model::summarize(
        Trainer::Greedy,
        arch.clone(),
        fit.model.dictionaries,
        z,
        data.labels.clone(),
        cfg.clone(),
    );
    let supports = model
        .class_supports
        .iter()
        .map(|s| s.iter().filter(|&&b| b).count())
        .collect();
    let log = RunLog {
        config: config_echo(arch, cfg, Trainer::Greedy),
        records: vec![IterationRecord {
            iter: 0,
            objective: Objective {
                reconstruction: recon * recon,
                row_support: 0,
                diversity: 0,
                total: recon * recon,
            },
            feasibility: (0.0, 0.0),
            supports,
            perturbed: false,
        }],
        greedy_reconstruction: Some(recon),
        joint_reconstruction: None,
    };
    Ok((model, log))
}

/// Mean of class `c` (1-based) as a vector.
pub fn class_mean(model: &Model, class: usize) -> Vector {
    model.class_means.column(class - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_one_supports() {
        let c1 = Matrix::from_row_slice(
            6,
            3,
            &[0., 0., 0., 0., 0., 0., 0.5, 0.7, 0.4, 0., 0., 0., 0.3, 0.2, 0.2, 0., 0., 0.],
        );
        let c2 = Matrix::from_row_slice(
            6,
            4,
            &[
                1.1, 0.5, 0.9, 1.2, 0., 0., 0., 0., 0., 0., 0., 0., 0.1, 0.6, 0.4, 0.5, 0., 0., 0., 0., 0.2, 0.4,
                0.4, 0.2,
            ],
        );
        let bits = |v: Vec<bool>| v.into_iter().map(u8::from).collect::<Vec<_>>();
        assert_eq!(bits(class_support(&c1, 1e-8)), vec![0, 0, 1, 0, 1, 0]);
        assert_eq!(bits(class_support(&c2, 1e-8)), vec![1, 0, 0, 1, 0, 1]);
        assert!(class_support(&Matrix::zeros(4, 2), 1e-8).iter().all(|b| !b));
    }

    #[test]
    fn summarize_means_and_supports() {
        let arch = Architecture::new(vec![3, 2], Default::default()).unwrap();
        let z = Matrix::from_row_slice(2, 3, &[1.0, 3.0, 0.0, 0.0, 0.0, 5.0]);
        let cfg = TrainConfig::for_architecture(&arch);
        let m = Model::summarize(
            Trainer::Greedy,
            arch,
            vec![Matrix::identity(4, 3), Matrix::identity(3, 2)],
            z,
            vec![1, 1, 2],
            cfg,
        );
        assert_eq!(m.num_classes(), 2);
        assert_eq!(class_mean(&m, 1), Vector::from_vec(vec![2.0, 0.0]));
        assert_eq!(m.class_supports, vec![vec![true, false], vec![false, true]]);
        m.validate().unwrap();
    }

    #[test]
    fn validate_rejects_broken_chain() {
        let arch = Architecture::new(vec![3, 2], Default::default()).unwrap();
        let cfg = TrainConfig::for_architecture(&arch);
        let m = Model::summarize(
            Trainer::Greedy,
            arch,
            vec![Matrix::identity(4, 3), Matrix::identity(4, 2)],
            Matrix::zeros(2, 1),
            vec![1],
            cfg,
        );
        assert!(m.validate().is_err());
    }
}
