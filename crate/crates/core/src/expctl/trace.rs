use std::fmt::Write as _;

use crate::gridpix::dump::{Trajectory, TrajectoryStep};
use crate::gridpix::{Env, Scenario};
use crate::netcore::AgentNet;
use crate::rollout::{select_action, ActionSelection};
use crate::seeding::{self, tags};
use crate::tensorgrad::{Graph, ParamStore, Tensor};

use super::svg::{Chart, Series, PALETTE};
use super::ExpError;

/// Paired prediction and empirical-return series for selected pixels.
#[derive(Clone, Debug)]
pub struct TraceOutput {
    pub pixels: Vec<usize>,
    pub gamma_aux: f64,
    /// `[pixel][t]` scaled predictions `ψ̃_i(S_t)`.
    pub predictions: Vec<Vec<f64>>,
    /// `[pixel][t]` scaled empirical returns.
    pub empirical: Vec<Vec<f64>>,
    /// `[pixel][t]` raw pixel values `X_{t,i}`.
    pub cumulants: Vec<Vec<f64>>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub trajectory: Trajectory,
}

/// `G̃_t = (1−γ)·Σ_k γ^k·X_{t+k}` by direct summation, cut at terminations,
/// closed with `γ^{k+1}·truncation_pred` at truncations and with
/// `γ^{K−t}·bootstrap` at the end of the series.
pub fn empirical_scaled_return(
    cumulants: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    truncation_pred: &[f64],
    bootstrap: f64,
    gamma: f64,
) -> Vec<f64> {
    let k = cumulants.len();
    (0..k)
        .map(|t| {
            let mut sum = 0.0;
            for j in t..k {
                let discount = gamma.powi((j - t) as i32);
                sum += (1.0 - gamma) * discount * cumulants[j];
                if terminated[j] {
                    return sum;
                }
                if truncated[j] {
                    return sum + discount * gamma * truncation_pred[j];
                }
            }
            sum + gamma.powi((k - t) as i32) * bootstrap
        })
        .collect()
}

struct Probe {
    logits: Vec<f64>,
    psi: Vec<f64>,
    hidden: Option<Tensor>,
}

fn probe(net: &AgentNet, params: &ParamStore, head: usize, obs: &Tensor, hidden: Option<&Tensor>) -> Result<Probe, ExpError> {
    let mut g = Graph::inference();
    let p = g.bind(params);
    let shape = [&[1], obs.shape()].concat();
    let o = g.constant(obs.reshape(&shape)?);
    let h = match hidden {
        Some(h) => Some(g.constant(h.reshape(&[1, h.len()])?)),
        None => None,
    };
    let (out, h2) = net.step(&mut g, &p, o, h)?;
    Ok(Probe {
        logits: g.value(out.logits).data().iter().map(|&v| v as f64).collect(),
        psi: g.value(out.psi_scaled[head]).data().iter().map(|&v| v as f64).collect(),
        hidden: match h2 {
            Some(v) => Some(g.value(v).reshape(&[g.value(v).len()])?),
            None => None,
        },
    })
}

/// Rolls out `steps` transitions from a fresh episode, through any resets,
/// recording the auxiliary head's prediction for each selected pixel.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub fn pixel_prediction_trace(
    net: &AgentNet,
    params: &ParamStore,
    scenario: &Scenario,
    head: usize,
    gamma_aux: f64,
    pixels: &[usize],
    steps: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<TraceOutput, ExpError> {
    if head >= net.aux_heads() {
        return Err(ExpError::Config(format!("network has {} auxiliary heads, asked for head {head}", net.aux_heads())));
    }
    if !(0.0..1.0).contains(&gamma_aux) {
        return Err(ExpError::Config(format!("gamma_aux {gamma_aux} must lie in [0, 1)")));
    }
    let d = net.obs_len();
    if let Some(&bad) = pixels.iter().find(|&&i| i >= d) {
        return Err(ExpError::Config(format!("pixel index {bad} out of range for {d} pixels")));
    }
    if pixels.is_empty() || steps == 0 {
        return Err(ExpError::Config("need at least one pixel and one step".into()));
    }
    let mut env = Env::new(scenario.clone())?;
    let mut episode = 0u64;
    let mut obs = env.reset(seeding::derive(&[seed, tags::TRACE, episode]))?;
    let mut hidden = net.zero_hidden(1).map(|h| h.reshape(&[h.len()])).transpose()?;
    let mut rng = seeding::rng(&[seed, tags::TRACE, tags::ACTIONS]);
    let mut predictions = vec![Vec::with_capacity(steps); pixels.len()];
    let mut cumulants = vec![Vec::with_capacity(steps); pixels.len()];
    let mut trunc_pred = vec![vec![0.0; steps]; pixels.len()];
    let (mut terminated, mut truncated) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    let mut traj = Trajectory { obs_shape: net.obs_shape(), steps: Vec::with_capacity(steps) };
    for t in 0..steps {
        let pr = probe(net, params, head, &obs, hidden.as_ref())?;
        for (k, &i) in pixels.iter().enumerate() {
            predictions[k].push(pr.psi[i]);
            cumulants[k].push(obs.data()[i] as f64);
        }
        let logits: Vec<_> = pr.logits.iter().map(|&v| v as crate::tensorgrad::Real).collect();
        let action = select_action(&logits, selection, &mut rng);
        let r = env.step(action)?;
        traj.steps.push(TrajectoryStep {
            obs: obs.data().iter().map(|&v| v as f32).collect(),
            action: action as u32,
            reward: r.reward,
            terminated: r.terminated,
            truncated: r.truncated,
        });
        terminated.push(r.terminated);
        truncated.push(r.truncated);
        hidden = pr.hidden;
        if r.truncated {
            let fin = probe(net, params, head, &r.obs, hidden.as_ref())?;
            for (k, &i) in pixels.iter().enumerate() {
                trunc_pred[k][t] = fin.psi[i];
            }
        }
        if r.terminated || r.truncated {
            episode += 1;
            obs = env.reset(seeding::derive(&[seed, tags::TRACE, episode]))?;
            hidden = net.zero_hidden(1).map(|h| h.reshape(&[h.len()])).transpose()?;
        } else {
            obs = r.obs;
        }
    }
    let last = probe(net, params, head, &obs, hidden.as_ref())?;
    let empirical = pixels
        .iter()
        .enumerate()
        .map(|(k, &i)| empirical_scaled_return(&cumulants[k], &terminated, &truncated, &trunc_pred[k], last.psi[i], gamma_aux))
        .collect();
    Ok(TraceOutput {
        pixels: pixels.to_vec(),
        gamma_aux,
        predictions,
        empirical,
        cumulants,
        terminated,
        truncated,
        trajectory: traj,
    })
}

impl TraceOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from("t,pixel,value,prediction,empirical_return,terminated,truncated\n");
        for (k, &i) in self.pixels.iter().enumerate() {
            for t in 0..self.predictions[k].len() {
                let _ = writeln!(
                    out,
                    "{t},{i},{},{},{},{},{}",
                    self.cumulants[k][t], self.predictions[k][t], self.empirical[k][t], self.terminated[t] as u8, self.truncated[t] as u8
                );
            }
        }
        out
    }

    /// Prediction (solid) against empirical return (dashed) per pixel.
    pub fn svg(&self) -> String {
        let mut chart = Chart {
            title: format!("pixel predictions, gamma_aux = {}", self.gamma_aux),
            x_label: "step".into(),
            y_label: "scaled return".into(),
            ..Chart::default()
        };
        for (k, &i) in self.pixels.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()].to_string();
            let xs: Vec<f64> = (0..self.predictions[k].len()).map(|t| t as f64).collect();
            chart.series.push(Series {
                label: format!("pixel {i} prediction"),
                xs: xs.clone(),
                ys: self.predictions[k].clone(),
                color: color.clone(),
                dashed: false,
                show_in_legend: true,
            });
            chart.series.push(Series {
                label: format!("pixel {i} empirical"),
                xs,
                ys: self.empirical[k].clone(),
                color,
                dashed: true,
                show_in_legend: true,
            });
        }
        chart.render()
    }
}
