//! Accuracy indices and the McNemar test.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Counts indexed `[true][predicted]`, classes 1-based on the outside and
/// 0-based inside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Build from paired label lists. The matrix covers classes
    /// `1..=max(label)`.
    pub fn from_labels(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::input(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.iter().chain(predicted).any(|&l| l == 0) {
            return Err(Error::input("class ids start at 1"));
        }
        let n = truth.iter().chain(predicted).copied().max().unwrap_or(0);
        let mut counts = vec![vec![0u64; n]; n];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[t - 1][p - 1] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::input("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Accuracy of each class, `None` for classes without samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.num_classes())
            .map(|i| {
                let n = self.row_sum(i);
                (n > 0).then(|| self.counts[i][i] as f64 / n as f64)
            })
            .collect()
    }
}

fn nonempty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::input("confusion matrix is empty")),
        t => Ok(t as f64),
    }
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / nonempty(cm)?)
}

/// Mean per-class accuracy over classes that have samples.
pub fn average_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let acc = cm.per_class_accuracy();
    let present: Vec<f64> = acc.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::input("every class row is empty"));
    }
    if present.len() < acc.len() {
        let missing: Vec<String> = acc
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        log::warn!("average accuracy excludes classes without samples: {}", missing.join(","));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonempty(cm)?;
    let po = cm.trace() as f64 / total;
    let pe = (0..cm.num_classes())
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (total * total);
    if pe >= 1.0 {
        if po >= 1.0 {
            return Ok(1.0);
        }
        log::warn!("kappa undefined: chance agreement is 1");
        return Ok(0.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemar {
    /// A right, B wrong.
    pub f12: u64,
    /// A wrong, B right.
    pub f21: u64,
    pub z: f64,
    pub significant: bool,
}

/// Two-sided 5% critical value.
pub const MCNEMAR_CRITICAL: f64 = 1.96;

/// Standardized McNemar statistic without continuity correction.
pub fn mcnemar_from_counts(f12: u64, f21: u64) -> McNemar {
    let n = f12 + f21;
    let z = if n == 0 {
        0.0
    } else {
        (f12 as f64 - f21 as f64) / (n as f64).sqrt()
    };
    McNemar {
        f12,
        f21,
        z,
        significant: z.abs() > MCNEMAR_CRITICAL,
    }
}

pub fn mcnemar_z(pred_a: &[usize], pred_b: &[usize], truth: &[usize]) -> Result<McNemar> {
    if pred_a.len() != truth.len() || pred_b.len() != truth.len() {
        return Err(Error::input(format!(
            "prediction lengths {} and {} do not match {} true labels",
            pred_a.len(),
            pred_b.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::input("no samples to compare"));
    }
    let (mut f12, mut f21) = (0, 0);
    for ((a, b), t) in pred_a.iter().zip(pred_b).zip(truth) {
        match (a == t, b == t) {
            (true, false) => f12 += 1,
            (false, true) => f21 += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(f12, f21))
}

/// Plain-text summary: OA, AA and Kappa, per-class accuracy, optional
/// McNemar line.
pub fn report(cm: &ConfusionMatrix, mcnemar: Option<&McNemar>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "OA\t{:.4}", overall_accuracy(cm)?).unwrap();
    writeln!(out, "AA\t{:.4}", average_accuracy(cm)?).unwrap();
    writeln!(out, "Kappa\t{:.4}", kappa(cm)?).unwrap();
    for (i, a) in cm.per_class_accuracy().iter().enumerate() {
        match a {
            Some(a) => writeln!(out, "class {}\t{:.4}", i + 1, a).unwrap(),
            None => writeln!(out, "class {}\tn/a", i + 1).unwrap(),
        }
    }
    if let Some(m) = mcnemar {
        writeln!(
            out,
            "McNemar\tz={:.2}\tf12={}\tf21={}\t{}",
            m.z,
            m.f12,
            m.f21,
            if m.significant { "significant" } else { "not significant" }
        )
        .unwrap();
    }
    Ok(out)
}
