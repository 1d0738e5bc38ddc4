use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ddl::Architecture;
use crate::error::{Error, Result};
use crate::joint::TrainConfig;
use crate::model::{Model, Trainer};
use crate::numerics::{Activation, ActivationKind, Matrix, Pca};

pub const MODEL_MAGIC: &str = "RSDDL1";
pub const PCA_MAGIC: &str = "RSDDL-PCA";
const VERSION: u32 = 1;

// 17 significant digits: parses back to the same bits
fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.row_iter() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", vals.join(" ")).unwrap();
    }
}

fn write_list<T: ToString>(out: &mut String, items: impl IntoIterator<Item = T>) {
    let parts: Vec<String> = items.into_iter().map(|v| v.to_string()).collect();
    writeln!(out, "{}", parts.join(" ")).unwrap();
}

/// Line cursor with 1-based positions for error messages.
struct Lines<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Lines {
            path,
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file (truncated?)"))
            }
        }
    }

    /// Next line split as `key rest...`, checking the key.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected {key:?}, found {line:?}")));
        }
        Ok(parts.collect())
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("bad value {tok:?}")))
    }

    fn values<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        let line = self.next()?;
        let vals: Vec<T> = line.split_whitespace().map(|t| self.parse(t)).collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let head = self.keyed("matrix")?;
        if head.len() != 3 || head[0] != name {
            return Err(self.err(format!("expected \"matrix {name} <rows> <cols>\"")));
        }
        let (r, c): (usize, usize) = (self.parse(head[1])?, self.parse(head[2])?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let row: Vec<f64> = self.values(c)?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(self.err("non-finite value"));
            }
            data.extend(row);
        }
        Ok(Matrix::from_row_slice(r, c, &data))
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        if self.next()? != magic {
            return Err(self.err(format!("not a {magic} file")));
        }
        let v = self.keyed("version")?;
        if v != [VERSION.to_string().as_str()] {
            return Err(self.err(format!("unsupported version {v:?}")));
        }
        Ok(())
    }

    fn end(&mut self) -> Result<()> {
        self.keyed("end")?;
        Ok(())
    }
}

/// Text rendering of a model. Matrices are written row by row.
pub fn model_to_string(m: &Model) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}\nversion {VERSION}").unwrap();
    writeln!(out, "trainer {}", m.trainer.name()).unwrap();
    writeln!(out, "architecture {}", m.architecture.atoms_string()).unwrap();
    let act = m.architecture.activation;
    writeln!(out, "activation {} {}", act.kind.name(), act.clamp_eps).unwrap();
    for (k, v) in m.config.to_pairs() {
        writeln!(out, "config {k} {v}").unwrap();
    }
    for (l, d) in m.dictionaries.iter().enumerate() {
        write_matrix(&mut out, &format!("D{}", l + 1), d);
    }
    write_matrix(&mut out, "features", &m.train_features);
    writeln!(out, "labels {}", m.train_labels.len()).unwrap();
    write_list(&mut out, &m.train_labels);
    write_matrix(&mut out, "class_means", &m.class_means);
    writeln!(out, "supports {} {}", m.class_supports.len(), m.feature_dim()).unwrap();
    for s in &m.class_supports {
        write_list(&mut out, s.iter().map(|&b| u8::from(b)));
    }
    out.push_str("end\n");
    out
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(path, &text)
}

fn parse_model(path: &Path, text: &str) -> Result<Model> {
    let mut r = Lines::new(path, text);
    r.header(MODEL_MAGIC)?;
    let t = r.keyed("trainer")?;
    let trainer = t
        .first()
        .and_then(|s| Trainer::parse(s))
        .ok_or_else(|| r.err("unknown trainer"))?;
    let a = r.keyed("architecture")?;
    let atoms = Architecture::parse_atoms(a.first().copied().unwrap_or("")).map_err(|e| r.err(e.to_string()))?;
    let act = r.keyed("activation")?;
    if act.len() != 2 {
        return Err(r.err("expected \"activation <kind> <clamp_eps>\""));
    }
    let kind = ActivationKind::parse(act[0]).ok_or_else(|| r.err("unknown activation"))?;
    let activation = Activation {
        kind,
        clamp_eps: r.parse(act[1])?,
    };
    let architecture = Architecture::new(atoms, activation).map_err(|e| r.err(e.to_string()))?;

    let mut config = TrainConfig::for_architecture(&architecture);
    for _ in 0..config.to_pairs().len() {
        let kv = r.keyed("config")?;
        if kv.len() != 2 {
            return Err(r.err("expected \"config <key> <value>\""));
        }
        config.set(kv[0], kv[1]).map_err(|e| r.err(e.to_string()))?;
    }

    let dictionaries = (1..=architecture.depth())
        .map(|l| r.matrix(&format!("D{l}")))
        .collect::<Result<Vec<_>>>()?;
    let train_features = r.matrix("features")?;
    let n = r.keyed("labels")?;
    let n: usize = r.parse(n.first().copied().unwrap_or(""))?;
    let train_labels = r.values(n)?;
    let class_means = r.matrix("class_means")?;
    let s = r.keyed("supports")?;
    if s.len() != 2 {
        return Err(r.err("expected \"supports <classes> <features>\""));
    }
    let (classes, feats): (usize, usize) = (r.parse(s[0])?, r.parse(s[1])?);
    let class_supports = (0..classes)
        .map(|_| {
            let bits: Vec<u8> = r.values(feats)?;
            bits.iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(r.err("support bits must be 0 or 1")),
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;
    r.end()?;

    let model = Model {
        trainer,
        architecture,
        dictionaries,
        train_features,
        train_labels,
        class_means,
        class_supports,
        config,
    };
    model.validate().map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok(model)
}

/// PCA statistics with the window they were computed for.
pub fn save_pca(pca: &Pca, window: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(out, "{PCA_MAGIC}\nversion {VERSION}\nwindow {window}\npadded {}", pca.padded).unwrap();
    write_matrix(&mut out, "mean", &pca.mean);
    write_matrix(&mut out, "basis", &pca.basis);
    out.push_str("end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<(Pca, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Lines::new(path, &text);
    r.header(PCA_MAGIC)?;
    let w = r.keyed("window")?;
    let window = r.parse(w.first().copied().unwrap_or(""))?;
    let p = r.keyed("padded")?;
    let padded = r.parse(p.first().copied().unwrap_or(""))?;
    let mean = r.matrix("mean")?;
    let basis = r.matrix("basis")?;
    r.end()?;
    if mean.ncols() != 1 || mean.nrows() != basis.nrows() {
        return Err(Error::input(format!("{}: mean and basis shapes disagree", path.display())));
    }
    Ok((Pca { mean, basis, padded }, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{pca_fit, Rng};

    fn toy_model() -> Model {
        let arch = Architecture::new(vec![6, 4, 3], Activation::tanh()).unwrap();
        let mut rng = Rng::new(4);
        let mut cfg = TrainConfig::for_architecture(&arch);
        cfg.mu = 0.3;
        let z = Matrix::from_fn(3, 5, |i, j| if i == j % 2 { rng.normal() } else { 0.0 });
        let mut d1 = rng.normal_matrix(10, 6);
        d1[(0, 0)] = -0.0;
        d1[(1, 0)] = 1e-300;
        Model::summarize(
            Trainer::Joint,
            arch,
            vec![d1, rng.normal_matrix(6, 4), rng.normal_matrix(4, 3)],
            z,
            vec![1, 2, 1, 2, 1],
            cfg,
        )
    }

    #[test]
    fn round_trip_bit_exact() {
        let d = tempfile::tempdir().unwrap();
        let m = toy_model();
        let (a, b) = (d.path().join("a"), d.path().join("b"));
        save_model(&m, &a).unwrap();
        let back = load_model(&a).unwrap();
        assert_eq!(back, m);
        assert!(back.dictionaries[0][(0, 0)].is_sign_negative());
        save_model(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn declares_shapes() {
        let text = model_to_string(&toy_model());
        for s in ["matrix D1 10 6", "matrix D2 6 4", "matrix D3 4 3"] {
            assert!(text.lines().any(|l| l == s), "{s}");
        }
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let path = Path::new("m");
        let text = model_to_string(&toy_model());
        let lines: Vec<&str> = text.lines().collect();
        for keep in [0, 1, 5, lines.len() / 2, lines.len() - 1] {
            let cut = lines[..keep].join("\n");
            assert!(parse_model(path, &cut).is_err(), "kept {keep} lines");
        }
        // cut inside a number row
        assert!(parse_model(path, &text[..text.len() * 2 / 3]).is_err());
        assert!(parse_model(path, &text.replacen("RSDDL1", "RSDDL2", 1)).is_err());
        assert!(parse_model(path, &text.replacen("version 1", "version 9", 1)).is_err());
        assert!(parse_model(path, &text.replacen("matrix D2 6 4", "matrix D2 5 4", 1)).is_err());
    }

    #[test]
    fn pca_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let pca = pca_fit(&Rng::new(2).normal_matrix(5, 9), 3).unwrap();
        let p = d.path().join("p");
        save_pca(&pca, 4, &p).unwrap();
        assert_eq!(load_pca(&p).unwrap(), (pca, 4));
    }
}
