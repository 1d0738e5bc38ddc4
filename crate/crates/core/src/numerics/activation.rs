use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(ActivationKind::Tanh),
            "identity" | "linear" => Some(ActivationKind::Identity),
            _ => None,
        }
    }
}

/// Elementwise activation `φ` placed between dictionary layers.
///
/// `inverse` first clamps its argument into `(-1 + clamp_eps, 1 - clamp_eps)`
/// for `Tanh`, so it is total on every finite input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub clamp_eps: f64,
}

impl Default for Activation {
    fn default() -> Self {
        Activation {
            kind: ActivationKind::Tanh,
            clamp_eps: 1e-6,
        }
    }
}

impl Activation {
    pub fn tanh() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Activation {
            kind: ActivationKind::Identity,
            ..Self::default()
        }
    }

    #[inline]
    pub fn forward_scalar(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    #[inline]
    pub fn clamp_scalar(&self, y: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let bound = 1.0 - self.clamp_eps;
                y.clamp(-bound, bound)
            }
            ActivationKind::Identity => y,
        }
    }

    #[inline]
    pub fn inverse_scalar(&self, y: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                // odd by construction so inverse(-y) == -inverse(y) bit for bit
                let c = self.clamp_scalar(y);
                c.signum() * c.abs().atanh()
            }
            ActivationKind::Identity => y,
        }
    }

    pub fn forward(&self, m: &Matrix) -> Matrix {
        m.map(|x| self.forward_scalar(x))
    }

    pub fn inverse(&self, m: &Matrix) -> Matrix {
        m.map(|y| self.inverse_scalar(y))
    }

    /// Clamp into the invertible band (no-op for `Identity`).
    pub fn clamp(&self, m: &Matrix) -> Matrix {
        m.map(|y| self.clamp_scalar(y))
    }
}
