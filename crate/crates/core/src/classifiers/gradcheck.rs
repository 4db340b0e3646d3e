//! Finite-difference verification of the analytic gradients used in training.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{self, MlpShape};
use super::{mnlogit, ClassifierKind};
use crate::error::{McmaError, Result};
use crate::rng::{stream, Stream};

pub const STEP: f64 = 1e-5;

/// A loss evaluation point: data plus a parameter vector.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub kind: ClassifierKind,
    pub x: DMatrix<f64>,
    pub y: Vec<u8>,
    pub params: Vec<f64>,
    /// Hidden width (MLP only).
    pub hidden: usize,
    /// L2 penalty (MNLogit only).
    pub lambda: f64,
}

impl GradInstance {
    /// Gaussian features, uniform labels and Gaussian parameters.
    pub fn random(
        kind: ClassifierKind,
        n: usize,
        f: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream(seed, Stream::Model);
        let x = DMatrix::from_fn(n, f, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n).map(|_| rng.random_range(0..3u8)).collect();
        let len = match kind {
            ClassifierKind::MnLogit => 3 * (f + 1),
            ClassifierKind::Mlp => MlpShape { inputs: f, hidden }.n_params(),
            _ => return Err(not_differentiable(kind)),
        };
        let params: Vec<f64> = (0..len)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                0.5 * v
            })
            .collect();
        Ok(GradInstance {
            kind,
            x,
            y,
            params,
            hidden,
            lambda: 1e-2,
        })
    }

    pub fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.kind {
            ClassifierKind::MnLogit => {
                Ok(mnlogit::loss_grad(params, &self.x, &self.y, self.lambda))
            }
            ClassifierKind::Mlp => {
                let shape = MlpShape {
                    inputs: self.x.ncols(),
                    hidden: self.hidden,
                };
                Ok(mlp::loss_grad(params, shape, &self.x, &self.y))
            }
            kind => Err(not_differentiable(kind)),
        }
    }
}

fn not_differentiable(kind: ClassifierKind) -> McmaError {
    McmaError::InvalidArgument(format!("{kind} has no gradient-trained parameters"))
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step [`STEP`]. Components where both are below `1e-7`
/// in magnitude are compared absolutely.
pub fn gradient_check(inst: &GradInstance) -> Result<f64> {
    let (_, analytic) = inst.loss_grad(&inst.params)?;
    let mut worst = 0.0f64;
    let mut p = inst.params.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = p[k];
        p[k] = orig + STEP;
        let up = inst.loss_grad(&p)?.0;
        p[k] = orig - STEP;
        let down = inst.loss_grad(&p)?.0;
        p[k] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(err);
    }
    Ok(worst)
}
