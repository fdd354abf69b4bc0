use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tensor, TensorError};

/// RMSProp hyperparameters plus the global gradient-norm clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub epsilon_placement: EpsilonPlacement,
}

/// Where ε enters the denominator: `√v + ε` or `√(v + ε)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPlacement {
    Outside,
    /// Keeps steps small after long stretches of near-zero gradients.
    #[default]
    Inside,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 7e-4,
            decay: 0.99,
            epsilon: 1e-5,
            clip_norm: 0.5,
            epsilon_placement: EpsilonPlacement::default(),
        }
    }
}

/// Squared-gradient running averages, one per parameter, plus a step counter.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub config: RmsPropConfig,
    square_avg: Vec<Tensor>,
    step_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Multiplier applied to every gradient (1 when no clipping happened).
    pub clip_scale: f64,
}

/// Scales `grads` in place so that their joint L2 norm is at most `clip_norm`.
pub fn clip_global_norm(grads: &mut [Tensor], clip_norm: f64) -> StepStats {
    let norm = grads.iter().map(Tensor::sum_of_squares).sum::<f64>().sqrt();
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    if scale != 1.0 {
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale as Real;
            }
        }
    }
    StepStats { grad_norm: norm, clip_scale: scale }
}

impl OptimState {
    pub fn new(config: RmsPropConfig, params: &ParamStore) -> Self {
        OptimState {
            config,
            square_avg: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.square_avg
    }

    /// Clip, then apply `p ← p − lr·g / √(v + ε)` with `v ← ρ·v + (1−ρ)·g²`
    /// (or `√v + ε` with [`EpsilonPlacement::Outside`]).
    ///
    /// Non-finite gradients abort the step before anything is modified.
    pub fn step(&mut self, params: &mut ParamStore, mut grads: Vec<Tensor>) -> Result<StepStats, TensorError> {
        if grads.len() != params.len() || grads.len() != self.square_avg.len() {
            return Err(TensorError::Shape {
                op: "optim_step",
                detail: format!(
                    "{} gradients for {} parameters ({} accumulators)",
                    grads.len(),
                    params.len(),
                    self.square_avg.len()
                ),
            });
        }
        for ((name, p), g) in params.iter().zip(&grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::Shape {
                    op: "optim_step",
                    detail: format!("gradient for {name}: {:?} vs {:?}", p.shape(), g.shape()),
                });
            }
            g.ensure_finite(&format!("gradient of {name}"))?;
        }
        let stats = clip_global_norm(&mut grads, self.config.clip_norm);
        let lr = self.config.learning_rate as Real;
        let rho = self.config.decay as Real;
        let eps = self.config.epsilon as Real;
        let inside = self.config.epsilon_placement == EpsilonPlacement::Inside;
        for ((p, g), v) in params.tensors_mut().iter_mut().zip(&grads).zip(&mut self.square_avg) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = rho * *vv + (1.0 - rho) * gv * gv;
                let denom = if inside { (*vv + eps).sqrt() } else { vv.sqrt() + eps };
                *pv -= lr * gv / denom;
            }
        }
        self.step_count += 1;
        Ok(stats)
    }
}
