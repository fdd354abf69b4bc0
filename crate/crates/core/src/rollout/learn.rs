use crate::netcore::AgentNet;
use crate::tdcore::{a2c_loss, nstep_returns, tdae_loss, total_loss, LossBreakdown, LossWeights, SegmentBatch, TdaeSpec};
use crate::tensorgrad::{Graph, OptimState, ParamStore, Real, Tensor, Var};

use super::RolloutError;

/// Loss settings shared by every update of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateConfig {
    pub gamma: f64,
    pub weights: LossWeights,
    /// One entry per auxiliary head of the network, in head order.
    pub heads: Vec<TdaeSpec>,
}

/// Recorded outputs for every transition of a segment, time-major.
#[derive(Clone, Debug)]
pub struct SegmentForward {
    /// `[N×|A|]`
    pub logits: Var,
    /// `[N]`
    pub values: Var,
    /// `[N×d]` per head.
    pub psi: Vec<Var>,
    /// Hidden state after each step, `[W×H]`, before any reset.
    pub hidden_after: Vec<Var>,
}

/// Everything the loss treats as a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub returns: Vec<f64>,
    /// `G_t − V(S_t)` from the recorded values.
    pub advantages: Vec<f64>,
    /// `ψ̃(S_{t+1})` per head, `[N×d]`; rows of terminated steps are zero.
    pub psi_next: Vec<Tensor>,
    /// Observations as `[N×d]` cumulants.
    pub cumulants: Tensor,
}

fn reset_mask(batch: &SegmentBatch, step: usize, hidden: usize) -> Tensor {
    let mut data = Vec::with_capacity(batch.workers * hidden);
    for w in 0..batch.workers {
        let keep = if batch.episode_ends(w, step) { 0.0 } else { 1.0 };
        data.extend(std::iter::repeat_n(keep, hidden));
    }
    Tensor::new(&[batch.workers, hidden], data).expect("mask shape")
}

/// Re-runs the network over the segment from its stored initial hidden state,
/// zeroing hidden rows at recorded episode boundaries.
pub fn forward_segment(
    g: &mut Graph<'_>,
    p: &[Var],
    net: &AgentNet,
    batch: &SegmentBatch,
) -> Result<SegmentForward, RolloutError> {
    batch.validate()?;
    if batch.obs_shape != net.obs_shape() || batch.initial_hidden.is_some() != net.hidden_size().is_some() {
        return Err(RolloutError::Config("segment does not match the network".into()));
    }
    let mut hidden = batch.initial_hidden.as_ref().map(|h| g.constant(h.clone()));
    let (mut logits, mut values) = (Vec::new(), Vec::new());
    let mut psi: Vec<Vec<Var>> = vec![Vec::new(); net.aux_heads()];
    let mut hidden_after = Vec::new();
    for t in 0..batch.steps {
        if t > 0 {
            if let (Some(h), Some(size)) = (hidden, net.hidden_size()) {
                let any_reset = (0..batch.workers).any(|w| batch.episode_ends(w, t - 1));
                if any_reset {
                    let mask = g.constant(reset_mask(batch, t - 1, size));
                    hidden = Some(g.mul(h, mask)?);
                }
            }
        }
        let obs = g.constant(batch.observations[t].clone());
        let (out, h) = net.step(g, p, obs, hidden)?;
        logits.push(out.logits);
        values.push(out.value);
        for (k, v) in out.psi_scaled.into_iter().enumerate() {
            psi[k].push(v);
        }
        if let Some(h) = h {
            hidden_after.push(h);
        }
        hidden = h;
    }
    Ok(SegmentForward {
        logits: g.concat(&logits)?,
        values: g.concat(&values)?,
        psi: psi.iter().map(|parts| g.concat(parts)).collect::<Result<_, _>>()?,
        hidden_after,
    })
}

/// Bootstrap values and next-step predictions, evaluated without recording.
pub fn compute_targets(
    g: &Graph<'_>,
    fwd: &SegmentForward,
    net: &AgentNet,
    params: &ParamStore,
    batch: &SegmentBatch,
    config: &UpdateConfig,
) -> Result<Targets, RolloutError> {
    if config.heads.len() != net.aux_heads() {
        return Err(RolloutError::Config(format!(
            "{} auxiliary specs for {} heads",
            config.heads.len(),
            net.aux_heads()
        )));
    }
    let (w, n) = (batch.workers, batch.steps);
    let d = batch.obs_len();
    let last = n - 1;

    // Extra states to evaluate: every worker's S_{t+n}, then each truncated
    // step's final observation, each with the hidden state it would see.
    let mut obs_rows: Vec<&Tensor> = Vec::new();
    let bootstrap_rows: Vec<Tensor> = (0..w)
        .map(|k| Tensor::new(&batch.obs_shape, batch.bootstrap_obs.row(k).to_vec()))
        .collect::<Result<_, _>>()?;
    obs_rows.extend(bootstrap_rows.iter());
    let mut hidden_rows: Vec<Vec<Real>> = Vec::new();
    let hidden_row = |t: usize, k: usize| -> Vec<Real> { g.value(fwd.hidden_after[t]).row(k).to_vec() };
    if net.hidden_size().is_some() {
        for k in 0..w {
            hidden_rows.push(hidden_row(last, k));
        }
    }
    let mut truncated_at = Vec::new();
    for t in 0..n {
        for k in 0..w {
            let i = batch.index(k, t);
            if let Some(o) = &batch.final_obs[i] {
                obs_rows.push(o);
                truncated_at.push(i);
                if net.hidden_size().is_some() {
                    hidden_rows.push(hidden_row(t, k));
                }
            }
        }
    }
    let extra = obs_rows.len();
    let mut ig = Graph::inference();
    let p = ig.bind(params);
    let o = ig.constant(Tensor::stack(&obs_rows)?);
    let h = match net.hidden_size() {
        Some(size) => Some(ig.constant(Tensor::new(&[extra, size], hidden_rows.concat())?)),
        None => None,
    };
    let (out, _) = net.step(&mut ig, &p, o, h)?;
    let extra_values = ig.value(out.value).data();

    let bootstrap_values: Vec<f64> = extra_values[..w].iter().map(|&v| v as f64).collect();
    let mut truncation_values = vec![0.0; w * n];
    for (j, &i) in truncated_at.iter().enumerate() {
        truncation_values[i] = extra_values[w + j] as f64;
    }
    let returns = nstep_returns(batch, &bootstrap_values, &truncation_values, config.gamma)?;

    let mut psi_next = Vec::with_capacity(net.aux_heads());
    for (k, &extra_psi) in out.psi_scaled.iter().enumerate() {
        let recorded = g.value(fwd.psi[k]).data();
        let extra_psi = ig.value(extra_psi).data();
        let mut data = vec![0.0; w * n * d];
        for t in 0..n {
            for r in 0..w {
                let i = batch.index(r, t);
                let src = if batch.terminated[i] {
                    continue;
                } else if batch.truncated[i] {
                    let j = truncated_at.iter().position(|&x| x == i).expect("indexed above");
                    &extra_psi[(w + j) * d..][..d]
                } else if t == last {
                    &extra_psi[r * d..][..d]
                } else {
                    &recorded[batch.index(r, t + 1) * d..][..d]
                };
                data[i * d..][..d].copy_from_slice(src);
            }
        }
        psi_next.push(Tensor::new(&[w * n, d], data)?);
    }
    let advantages = returns
        .iter()
        .zip(g.value(fwd.values).data())
        .map(|(&ret, &v)| ret - v as f64)
        .collect();
    Ok(Targets {
        returns,
        advantages,
        psi_next,
        cumulants: batch.flat_observations(),
    })
}

/// Builds the total loss on the recording graph from frozen targets.
pub fn assemble_loss(
    g: &mut Graph<'_>,
    fwd: &SegmentForward,
    batch: &SegmentBatch,
    targets: &Targets,
    config: &UpdateConfig,
) -> Result<(Var, LossBreakdown), RolloutError> {
    let terms = a2c_loss(g, fwd.logits, fwd.values, &batch.actions, &targets.returns, Some(&targets.advantages))?;
    let mut aux = Vec::with_capacity(config.heads.len());
    for (k, spec) in config.heads.iter().enumerate() {
        aux.push(tdae_loss(g, fwd.psi[k], &targets.psi_next[k], &targets.cumulants, &batch.terminated, spec)?);
    }
    Ok(total_loss(g, &terms, &aux, &config.heads, &config.weights)?)
}

/// Result of one learner step.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    pub losses: LossBreakdown,
    pub grad_norm: f64,
}

/// One actor-critic update on `batch`: recorded forward pass, loss, backward
/// and an optimizer step.
pub fn train_update(
    net: &AgentNet,
    params: &mut ParamStore,
    optim: &mut OptimState,
    batch: &SegmentBatch,
    config: &UpdateConfig,
) -> Result<UpdateStats, RolloutError> {
    let update = optim.step_count();
    let wrap = |source: RolloutError| RolloutError::Update { update, source: Box::new(source) };
    let (losses, grads) = {
        let mut g = Graph::new();
        let p = g.bind(params);
        let fwd = forward_segment(&mut g, &p, net, batch).map_err(wrap)?;
        let targets = compute_targets(&g, &fwd, net, params, batch, config).map_err(wrap)?;
        let (loss, losses) = assemble_loss(&mut g, &fwd, batch, &targets, config).map_err(wrap)?;
        let grads = g.backward(loss).map_err(|e| wrap(e.into()))?;
        (losses, grads.for_params(&p, params))
    };
    let stats = optim.step(params, grads).map_err(|e| wrap(e.into()))?;
    Ok(UpdateStats { losses, grad_norm: stats.grad_norm })
}
