use nalgebra::{DMatrix, DVector};

use super::{ChainSpec, EnvError};

/// State values of a chain under discount `gamma`, from the direct solve
/// `v = (I − γP)⁻¹ r` with terminal rows of `P` and `r` zeroed.
pub fn analytic_values(chain: &ChainSpec, gamma: f64) -> Result<Vec<f64>, EnvError> {
    chain.validate()?;
    let n = chain.states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        if chain.terminal[s] {
            continue;
        }
        r[s] = chain.rewards[s];
        for (j, p) in chain.transitions[s].iter().enumerate() {
            a[(s, j)] -= gamma * p;
        }
    }
    let v = a
        .lu()
        .solve(&r)
        .ok_or_else(|| EnvError::Config(format!("(I - {gamma}P) is singular for this chain")))?;
    Ok(v.iter().copied().collect())
}
