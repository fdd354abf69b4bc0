use super::{SegmentBatch, TdError};

/// Per-row inputs to the return recursion. `rewards[t]` is `R_{t+1}`;
/// `truncation_values[t]` is only read where `truncated[t]` holds.
#[derive(Clone, Copy, Debug)]
pub struct RowView<'a> {
    pub rewards: &'a [f64],
    pub terminated: &'a [bool],
    pub truncated: &'a [bool],
    pub truncation_values: &'a [f64],
    /// `V(S_{t+n})`, used when the last step neither terminated nor truncated.
    pub bootstrap: f64,
}

impl RowView<'_> {
    fn check(&self) -> Result<(), TdError> {
        let n = self.rewards.len();
        if self.terminated.len() != n || self.truncated.len() != n || self.truncation_values.len() != n {
            return Err(TdError::Shape(format!(
                "row lengths differ: rewards {n}, terminated {}, truncated {}, truncation values {}",
                self.terminated.len(),
                self.truncated.len(),
                self.truncation_values.len()
            )));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<(), TdError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(TdError::Spec(format!("discount {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// Backward recursion `G_t = R_{t+1} + γ·G_{t+1}` over one row, cut at
/// terminations and re-seeded at truncations.
pub fn nstep_returns_row(row: RowView<'_>, gamma: f64) -> Result<Vec<f64>, TdError> {
    row.check()?;
    check_gamma(gamma)?;
    let n = row.rewards.len();
    let mut out = vec![0.0; n];
    let mut next = row.bootstrap;
    for t in (0..n).rev() {
        if row.terminated[t] {
            next = 0.0;
        } else if row.truncated[t] {
            next = row.truncation_values[t];
        }
        out[t] = row.rewards[t] + gamma * next;
        next = out[t];
    }
    Ok(out)
}

/// The same returns by explicit forward summation `Σ_k γ^k R_{t+k+1}`.
pub fn brute_force_return_oracle(row: RowView<'_>, gamma: f64) -> Result<Vec<f64>, TdError> {
    row.check()?;
    check_gamma(gamma)?;
    let n = row.rewards.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut sum = 0.0;
        let mut discount = 1.0;
        let mut j = t;
        loop {
            sum += discount * row.rewards[j];
            discount *= gamma;
            if row.terminated[j] {
                break;
            }
            if row.truncated[j] {
                sum += discount * row.truncation_values[j];
                break;
            }
            if j + 1 == n {
                sum += discount * row.bootstrap;
                break;
            }
            j += 1;
        }
        out.push(sum);
    }
    Ok(out)
}

/// n-step returns for a whole batch, in transition order (`t * W + w`).
///
/// `bootstrap_values[w]` is `V(S_{t+n})` for row `w`; `truncation_values` is
/// per transition and only read at truncated steps.
pub fn nstep_returns(
    batch: &SegmentBatch,
    bootstrap_values: &[f64],
    truncation_values: &[f64],
    gamma: f64,
) -> Result<Vec<f64>, TdError> {
    let (w, n) = (batch.workers, batch.steps);
    if bootstrap_values.len() != w || truncation_values.len() != w * n {
        return Err(TdError::Shape(format!(
            "{} bootstrap values for {w} workers, {} truncation values for {} transitions",
            bootstrap_values.len(),
            truncation_values.len(),
            w * n
        )));
    }
    let column = |v: &[f64], k: usize| -> Vec<f64> { (0..n).map(|t| v[t * w + k]).collect() };
    let flags = |v: &[bool], k: usize| -> Vec<bool> { (0..n).map(|t| v[t * w + k]).collect() };
    let mut out = vec![0.0; w * n];
    for k in 0..w {
        let (r, term, trunc, tv) = (
            column(&batch.rewards, k),
            flags(&batch.terminated, k),
            flags(&batch.truncated, k),
            column(truncation_values, k),
        );
        let row = RowView {
            rewards: &r,
            terminated: &term,
            truncated: &trunc,
            truncation_values: &tv,
            bootstrap: bootstrap_values[k],
        };
        for (t, g) in nstep_returns_row(row, gamma)?.into_iter().enumerate() {
            out[t * w + k] = g;
        }
    }
    Ok(out)
}

/// Scaled cumulant return `G̃_t = (1−γ)·X_t + γ·G̃_{t+1}` for one pixel series,
/// with the same cut and bootstrap rules as [`nstep_returns_row`]. The
/// bootstrap and truncation values are scaled predictions `ψ̃`.
pub fn scaled_cumulant_returns(
    cumulants: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    truncation_values: &[f64],
    bootstrap: f64,
    gamma: f64,
) -> Result<Vec<f64>, TdError> {
    if gamma >= 1.0 {
        return Err(TdError::Spec(format!("auxiliary discount {gamma} must be below 1")));
    }
    let scaled: Vec<f64> = cumulants.iter().map(|x| (1.0 - gamma) * x).collect();
    nstep_returns_row(
        RowView {
            rewards: &scaled,
            terminated,
            truncated,
            truncation_values,
            bootstrap,
        },
        gamma,
    )
}
