use crate::tensorgrad::Tensor;

use super::TdError;

/// One update's worth of experience: `W` workers × `n` lock-steps.
///
/// Storage is time-major: per-transition vectors are indexed `t * W + w` and
/// `observations[t]` stacks all workers as `[W×C×H×W]`. A terminated or
/// truncated flag at `(t, w)` means row `w` restarts at `t + 1` with a zeroed
/// hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBatch {
    pub workers: usize,
    pub steps: usize,
    pub obs_shape: [usize; 3],
    /// `X_t`, the observation each transition starts from.
    pub observations: Vec<Tensor>,
    pub actions: Vec<usize>,
    /// `R_{t+1}`.
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Last observation of a truncated episode, kept for bootstrapping.
    pub final_obs: Vec<Option<Tensor>>,
    /// `S_{t+n}` for every worker, `[W×C×H×W]`.
    pub bootstrap_obs: Tensor,
    /// Hidden state entering the segment, `[W×H]`; `None` without memory.
    pub initial_hidden: Option<Tensor>,
}

impl SegmentBatch {
    pub fn transitions(&self) -> usize {
        self.workers * self.steps
    }

    pub fn index(&self, worker: usize, step: usize) -> usize {
        step * self.workers + worker
    }

    /// True if row `w` starts a fresh episode right after step `t`.
    pub fn episode_ends(&self, worker: usize, step: usize) -> bool {
        let i = self.index(worker, step);
        self.terminated[i] || self.truncated[i]
    }

    /// Number of pixels per observation.
    pub fn obs_len(&self) -> usize {
        self.obs_shape.iter().product()
    }

    /// All observations as one `[n·W × d]` matrix, in transition order.
    pub fn flat_observations(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.transitions() * self.obs_len());
        for t in &self.observations {
            data.extend_from_slice(t.data());
        }
        Tensor::new(&[self.transitions(), self.obs_len()], data).expect("validated batch")
    }

    pub fn validate(&self) -> Result<(), TdError> {
        let (w, n) = (self.workers, self.steps);
        if w == 0 || n == 0 {
            return Err(TdError::Shape(format!("empty segment W={w} n={n}")));
        }
        let total = w * n;
        let per_step = [vec![w], self.obs_shape.to_vec()].concat();
        for (name, len) in [
            ("actions", self.actions.len()),
            ("rewards", self.rewards.len()),
            ("terminated", self.terminated.len()),
            ("truncated", self.truncated.len()),
            ("final_obs", self.final_obs.len()),
        ] {
            if len != total {
                return Err(TdError::Shape(format!("{name} has {len} entries, expected {total}")));
            }
        }
        if self.observations.len() != n {
            return Err(TdError::Shape(format!("{} observation steps, expected {n}", self.observations.len())));
        }
        for (t, o) in self.observations.iter().enumerate() {
            if o.shape() != per_step.as_slice() {
                return Err(TdError::Shape(format!("observations[{t}] has shape {:?}, expected {per_step:?}", o.shape())));
            }
        }
        if self.bootstrap_obs.shape() != per_step.as_slice() {
            return Err(TdError::Shape(format!("bootstrap_obs has shape {:?}", self.bootstrap_obs.shape())));
        }
        for i in 0..total {
            if self.terminated[i] && self.truncated[i] {
                return Err(TdError::Shape(format!("transition {i} is both terminated and truncated")));
            }
            let want = self.truncated[i];
            match &self.final_obs[i] {
                Some(o) if !want => return Err(TdError::Shape(format!("final_obs at {i} without truncation"))),
                Some(o) if o.shape() != self.obs_shape => {
                    return Err(TdError::Shape(format!("final_obs at {i} has shape {:?}", o.shape())))
                }
                None if want => return Err(TdError::Shape(format!("truncated transition {i} lacks final_obs"))),
                _ => {}
            }
        }
        if let Some(h) = &self.initial_hidden {
            if h.rank() != 2 || h.shape()[0] != w {
                return Err(TdError::Shape(format!("initial_hidden has shape {:?}", h.shape())));
            }
        }
        Ok(())
    }
}
