//! Plain, heavy-ball and Nesterov SGD.

use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelState};
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Ignored by plain SGD.
    #[serde(default)]
    pub momentum: f64,
}

impl OptimizerSpec {
    pub fn sgd() -> Self {
        OptimizerSpec { kind: OptimizerKind::Sgd, momentum: 0.0 }
    }

    pub fn momentum(mu: f64) -> Self {
        OptimizerSpec { kind: OptimizerKind::Momentum, momentum: mu }
    }

    pub fn nesterov(mu: f64) -> Self {
        OptimizerSpec { kind: OptimizerKind::Nesterov, momentum: mu }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.kind != OptimizerKind::Sgd && !(0.0..1.0).contains(&self.momentum) {
            return Err(EngineError::InvalidSpec(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// One coordinate of the update rule.
    ///
    /// - sgd: `θ ← θ − lr·g`
    /// - momentum: `v ← μv − lr·g; θ ← θ + v`
    /// - nesterov: `v ← μv − lr·g; θ ← θ + μv − lr·g`
    #[inline]
    pub fn update(&self, theta: &mut f64, grad: f64, velocity: &mut f64, lr: f64) {
        let mu = self.momentum;
        match self.kind {
            OptimizerKind::Sgd => *theta -= lr * grad,
            OptimizerKind::Momentum => {
                *velocity = mu * *velocity - lr * grad;
                *theta += *velocity;
            }
            OptimizerKind::Nesterov => {
                *velocity = mu * *velocity - lr * grad;
                *theta += mu * *velocity - lr * grad;
            }
        }
    }
}

/// Optimizer with its velocity buffers, zero until the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    velocity: Option<Gradients>,
}

fn apply<D: Dimension>(
    spec: &OptimizerSpec,
    theta: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    velocity: &mut Array<f64, D>,
    lr: f64,
) {
    Zip::from(theta)
        .and(grad)
        .and(velocity)
        .for_each(|t, &g, v| spec.update(t, g, v, lr));
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        Optimizer { spec, velocity: None }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step(&mut self, model: &mut ModelState, grads: &Gradients, lr: f64) {
        debug_assert!(lr >= 0.0);
        let velocity = self.velocity.get_or_insert_with(|| model.zero_gradients());
        for ((layer, g), v) in model.layers.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            apply(&self.spec, &mut layer.w, &g.w, &mut v.w, lr);
            apply(&self.spec, &mut layer.b, &g.b, &mut v.b, lr);
        }
    }
}
