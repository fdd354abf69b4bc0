use serde::{Deserialize, Serialize};

use crate::tensorgrad::{Graph, Real, Tensor, Var};

use super::TdError;

/// One TD-AE head: prediction discount and loss weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdaeSpec {
    pub gamma_aux: f64,
    pub lambda_tdae: f64,
}

impl TdaeSpec {
    pub fn new(gamma_aux: f64, lambda_tdae: f64) -> Result<Self, TdError> {
        let spec = TdaeSpec { gamma_aux, lambda_tdae };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TdError> {
        if !(0.0..1.0).contains(&self.gamma_aux) {
            return Err(TdError::Spec(format!("gamma_aux {} must lie in [0, 1)", self.gamma_aux)));
        }
        if !(self.lambda_tdae >= 0.0 && self.lambda_tdae.is_finite()) {
            return Err(TdError::Spec(format!("lambda_tdae {} must be finite and non-negative", self.lambda_tdae)));
        }
        Ok(())
    }
}

/// Weights of the value and entropy terms in the actor-critic loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { value: 0.5, entropy: 0.001 }
    }
}

/// Graph nodes of the three actor-critic terms.
#[derive(Clone, Copy, Debug)]
pub struct A2cTerms {
    pub policy: Var,
    pub value: Var,
    /// Negative mean entropy.
    pub entropy: Var,
}

/// Scalar loss components of one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Negative mean policy entropy.
    pub entropy_loss: f64,
    /// Unweighted TD-AE loss per head.
    pub tdae_losses: Vec<f64>,
    /// `Σ λ_k·L_k` over the heads.
    pub tdae_weighted: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recomputes the total from the components in the same order and
    /// precision as the graph.
    pub fn reassemble(&self, weights: &LossWeights, heads: &[TdaeSpec]) -> f64 {
        let r = |x: f64| x as Real;
        let mut total = r(self.policy_loss) + r(self.value_loss) * r(weights.value);
        total += r(self.entropy_loss) * r(weights.entropy);
        for (l, spec) in self.tdae_losses.iter().zip(heads) {
            if spec.lambda_tdae != 0.0 {
                total += r(*l) * r(spec.lambda_tdae);
            }
        }
        total as f64
    }

    /// Mean policy entropy.
    pub fn entropy(&self) -> f64 {
        -self.entropy_loss
    }
}

fn finite(g: &Graph<'_>, v: Var, term: &'static str) -> Result<f64, TdError> {
    let x = g.value(v).item()? as f64;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(TdError::NonFinite { term, value: x })
    }
}

/// Policy-gradient, value and entropy terms over `N` transitions.
///
/// `logits` is `[N×|A|]`, `values` is `[N]`. The advantage `G − V` enters the
/// policy term as a constant and the returns enter the value term as constants.
/// Pass `advantages` to supply precomputed values instead of reading `values`.
pub fn a2c_loss(
    g: &mut Graph<'_>,
    logits: Var,
    values: Var,
    actions: &[usize],
    returns: &[f64],
    advantages: Option<&[f64]>,
) -> Result<A2cTerms, TdError> {
    let n = actions.len();
    let (ls, vs) = (g.value(logits).shape().to_vec(), g.value(values).shape().to_vec());
    if ls.len() != 2 || ls[0] != n || vs != [n] || returns.len() != n {
        return Err(TdError::Shape(format!(
            "logits {ls:?}, values {vs:?}, {n} actions, {} returns",
            returns.len()
        )));
    }
    let advantages: Vec<Real> = match advantages {
        Some(a) if a.len() == n => a.iter().map(|&x| x as Real).collect(),
        Some(a) => return Err(TdError::Shape(format!("{} advantages for {n} transitions", a.len()))),
        None => returns
            .iter()
            .zip(g.value(values).data())
            .map(|(&ret, &v)| ret as Real - v)
            .collect(),
    };
    let log_probs = g.log_softmax(logits)?;
    let taken = g.gather(log_probs, actions)?;
    let adv = g.constant(Tensor::new(&[n], advantages)?);
    let weighted = g.mul(taken, adv)?;
    let mean_weighted = g.mean(weighted, None)?;
    let policy = g.neg(mean_weighted);

    let targets = g.constant(Tensor::new(&[n], returns.iter().map(|&x| x as Real).collect())?);
    let err = g.sub(targets, values)?;
    let sq = g.square(err)?;
    let value = g.mean(sq, None)?;

    let probs = g.exp(log_probs)?;
    let plogp = g.mul(probs, log_probs)?;
    let neg_entropy = g.sum(plogp, Some(1))?;
    let entropy = g.mean(neg_entropy, None)?;

    finite(g, policy, "policy_loss")?;
    finite(g, value, "value_loss")?;
    finite(g, entropy, "entropy_loss")?;
    Ok(A2cTerms { policy, value, entropy })
}

/// Bootstrap target `(1−γ)·X_t + γ·ψ̃(S_{t+1})`, or `(1−γ)·X_t` at terminations.
pub fn tdae_targets(
    cumulants: &Tensor,
    psi_next: &Tensor,
    terminated: &[bool],
    gamma_aux: f64,
) -> Result<Tensor, TdError> {
    if cumulants.shape() != psi_next.shape() || cumulants.rank() != 2 || cumulants.shape()[0] != terminated.len() {
        return Err(TdError::Shape(format!(
            "cumulants {:?}, next predictions {:?}, {} flags",
            cumulants.shape(),
            psi_next.shape(),
            terminated.len()
        )));
    }
    if !(0.0..1.0).contains(&gamma_aux) {
        return Err(TdError::Spec(format!("gamma_aux {gamma_aux} must lie in [0, 1)")));
    }
    let d = cumulants.shape()[1];
    let (scale, gamma) = ((1.0 - gamma_aux) as Real, gamma_aux as Real);
    let data = cumulants
        .data()
        .iter()
        .zip(psi_next.data())
        .enumerate()
        .map(|(i, (&x, &next))| {
            if terminated[i / d] {
                scale * x
            } else {
                scale * x + gamma * next
            }
        })
        .collect();
    Ok(Tensor::new(cumulants.shape(), data)?)
}

/// Mean squared scaled TD error over every pixel of every transition.
///
/// `psi` is the recorded `[N×d]` prediction at `S_t`; `psi_next` holds plain
/// values of the prediction at `S_{t+1}`, so no gradient reaches it.
pub fn tdae_loss(
    g: &mut Graph<'_>,
    psi: Var,
    psi_next: &Tensor,
    cumulants: &Tensor,
    terminated: &[bool],
    spec: &TdaeSpec,
) -> Result<Var, TdError> {
    spec.validate()?;
    if g.value(psi).shape() != cumulants.shape() {
        return Err(TdError::Shape(format!(
            "prediction {:?} vs cumulants {:?}",
            g.value(psi).shape(),
            cumulants.shape()
        )));
    }
    let target = g.constant(tdae_targets(cumulants, psi_next, terminated, spec.gamma_aux)?);
    let err = g.sub(target, psi)?;
    let sq = g.square(err)?;
    let loss = g.mean(sq, None)?;
    finite(g, loss, "tdae_loss")?;
    Ok(loss)
}

/// `policy + λ_v·value + λ_H·entropy + Σ λ_k·tdae_k`.
///
/// Heads with a zero weight are left out of the graph, so their gradients
/// are exactly those of a network without them.
pub fn total_loss(
    g: &mut Graph<'_>,
    a2c: &A2cTerms,
    tdae: &[Var],
    heads: &[TdaeSpec],
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown), TdError> {
    if tdae.len() != heads.len() {
        return Err(TdError::Shape(format!("{} auxiliary losses for {} heads", tdae.len(), heads.len())));
    }
    if !(weights.value >= 0.0 && weights.entropy >= 0.0) {
        return Err(TdError::Spec(format!("negative loss weights {weights:?}")));
    }
    let value = g.scale(a2c.value, weights.value as Real);
    let mut total = g.add(a2c.policy, value)?;
    let entropy = g.scale(a2c.entropy, weights.entropy as Real);
    total = g.add(total, entropy)?;
    let mut tdae_losses = Vec::with_capacity(tdae.len());
    let mut tdae_weighted = 0.0;
    for (&l, spec) in tdae.iter().zip(heads) {
        spec.validate()?;
        let raw = finite(g, l, "tdae_loss")?;
        tdae_losses.push(raw);
        if spec.lambda_tdae != 0.0 {
            let w = g.scale(l, spec.lambda_tdae as Real);
            tdae_weighted += g.value(w).item()? as f64;
            total = g.add(total, w)?;
        }
    }
    let breakdown = LossBreakdown {
        policy_loss: finite(g, a2c.policy, "policy_loss")?,
        value_loss: finite(g, a2c.value, "value_loss")?,
        entropy_loss: finite(g, a2c.entropy, "entropy_loss")?,
        tdae_losses,
        tdae_weighted,
        total: finite(g, total, "total_loss")?,
    };
    Ok((total, breakdown))
}
