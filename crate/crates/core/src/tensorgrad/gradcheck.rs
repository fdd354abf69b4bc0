use super::{Graph, ParamStore, Real, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of `f` against central finite differences
/// `(f(p+h) − f(p−h)) / 2h` on every parameter coordinate.
///
/// The relative error of one coordinate is `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
/// `params` is never modified.
pub fn check_gradients<F>(params: &ParamStore, h: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var, TensorError>,
{
    let analytic = {
        let mut g = Graph::new();
        let vars = g.bind(params);
        let loss = f(&mut g, &vars)?;
        if !g.requires_grad(loss) {
            // a loss that ignores every parameter has an all-zero gradient
            params.tensors().iter().map(|t| super::Tensor::zeros(t.shape())).collect()
        } else {
            let grads = g.backward(loss)?;
            grads.for_params(&vars, params)
        }
    };

    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut g = Graph::inference();
        let vars = g.bind(store);
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item()? as f64)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };
    let mut probe = params.clone();
    for (pi, grad) in analytic.iter().enumerate() {
        for ci in 0..grad.len() {
            let original = probe.tensors()[pi].data()[ci];
            probe.tensors_mut()[pi].data_mut()[ci] = original + h as Real;
            let plus = eval(&probe)?;
            probe.tensors_mut()[pi].data_mut()[ci] = original - h as Real;
            let minus = eval(&probe)?;
            probe.tensors_mut()[pi].data_mut()[ci] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[ci] as f64;
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let err = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((params.name(pi).to_string(), ci));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
