use super::{Graph, Tensor, TensorError, Var};

/// Denominator floor of the relative error, so coordinates whose gradient is
/// (near) zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences `(f(x+h) - f(x-h)) / 2h` on every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    grad_check_coords(f, inputs, &coords, h, tol)
}

/// Like [`grad_check`], restricted to the listed `(input, flat index)` pairs.
pub fn grad_check_coords<F>(
    f: F,
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(TensorError::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let loss = f(&mut graph, &vars)?;
    graph.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| graph.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let eval = |probe: &[Tensor]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let value = g.value(out);
        match value.item() {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(TensorError::NonFinite { op: "grad_check probe" }),
            None => Err(TensorError::NonScalarLoss {
                shape: value.shape().to_vec(),
            }),
        }
    };

    let mut probe = inputs.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        tolerance: tol,
        passed: true,
    };
    for &(i, j) in coords {
        let orig = probe[i].data()[j];
        probe[i].data_mut()[j] = orig + h;
        let plus = eval(&probe)?;
        probe[i].data_mut()[j] = orig - h;
        let minus = eval(&probe)?;
        probe[i].data_mut()[j] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let exact = analytic[i][j];
        let abs_err = (numeric - exact).abs();
        let rel_err = abs_err / numeric.abs().max(exact.abs()).max(REL_ERROR_FLOOR);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs_err);
        if rel_err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel_err);
            report.worst = Some((i, j));
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}
