use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Vector};

use super::Dataset;

/// Seeded Gaussian mixture for tests and demos.
///
/// Class means lie along mutually orthogonal random directions, placed so
/// every pair of means is `separation · sigma` apart. Noise is isotropic with
/// expected norm about `sigma` (per-coordinate deviation `sigma / √dim`).
/// Samples are grouped by class, class 1 first.
pub fn gaussian_mixture(
    classes: usize,
    dim: usize,
    per_class: usize,
    sigma: f64,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if classes == 0 || per_class == 0 || classes > dim {
        return Err(Error::input(format!(
            "need 1 <= classes <= dim and samples per class > 0 (got {classes}, {dim}, {per_class})"
        )));
    }
    let mut dirs: Vec<Vector> = Vec::with_capacity(classes);
    while dirs.len() < classes {
        let mut v = Vector::from_fn(dim, |_, _| rng.normal());
        for u in &dirs {
            v -= u * u.dot(&v);
        }
        let n = v.norm();
        if n > 1e-6 {
            dirs.push(v / n);
        }
    }
    // orthonormal means at radius r are r·√2 apart
    let radius = separation * sigma / std::f64::consts::SQRT_2;
    let noise = sigma / (dim as f64).sqrt();
    let n = classes * per_class;
    let mut x = Matrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for (c, u) in dirs.iter().enumerate() {
        for k in 0..per_class {
            let j = c * per_class + k;
            for i in 0..dim {
                x[(i, j)] = radius * u[i] + noise * rng.normal();
            }
            labels.push(c + 1);
        }
    }
    Dataset::new(x, labels)
}
