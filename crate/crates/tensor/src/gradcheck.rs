//! Central finite differences as an independent oracle for [`Graph::backward`].
//!
//! The numeric side never touches a backward rule: it only re-runs the
//! forward closure with one input entry nudged by `±step`.

use crate::{Graph, Tensor, TensorError, Var};

/// Default finite-difference step for 64-bit checks.
pub const STEP: f64 = 1e-6;
/// Pass threshold on [`relative_error`].
pub const TOLERANCE: f64 = 1e-4;
/// Gradient magnitudes below this are compared in absolute terms.
pub const FLOOR: f64 = 1e-3;

/// `∂f/∂xᵢ ≈ (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub step: f64,
    pub floor: f64,
    /// Check at most this many entries per input (evenly strided, plus the
    /// entry with the largest analytic gradient). `None` checks all.
    pub max_entries: Option<usize>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: STEP,
            floor: FLOOR,
            max_entries: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct InputReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub inputs: Vec<InputReport>,
}

impl CheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.inputs.iter().map(|r| r.checked).sum()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

fn entries_to_check(grad: &[f64], limit: Option<usize>) -> Vec<usize> {
    let n = grad.len();
    match limit {
        Some(k) if k < n => {
            let stride = n.div_ceil(k.max(1));
            let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
            let argmax = grad
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, g)| if g.abs() > best.1 { (i, g.abs()) } else { best })
                .0;
            if !idx.contains(&argmax) {
                idx.push(argmax);
            }
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Compares analytic gradients of the scalar built by `build` against
/// central differences, for every input tensor. `build` may fail with any
/// error that tensor errors convert into.
pub fn check<F, E>(inputs: &[Tensor], build: F, opts: &CheckOptions) -> std::result::Result<CheckReport, E>
where
    F: Fn(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let eval = |values: &[Tensor]| -> std::result::Result<f64, E> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = CheckReport::default();
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let mut r = InputReport::default();
        for i in entries_to_check(&analytic, opts.max_entries) {
            let x0 = input.data()[i];
            probe[k].data_mut()[i] = x0 + opts.step;
            let hi = eval(&probe)?;
            probe[k].data_mut()[i] = x0 - opts.step;
            let lo = eval(&probe)?;
            probe[k].data_mut()[i] = x0;
            let numeric = (hi - lo) / (2.0 * opts.step);
            let err = relative_error(analytic[i], numeric, opts.floor);
            r.checked += 1;
            if err > r.max_rel_error || r.checked == 1 {
                r.max_rel_error = err.max(r.max_rel_error);
                r.worst_index = i;
                r.analytic = analytic[i];
                r.numeric = numeric;
            }
        }
        report.inputs.push(r);
    }
    Ok(report)
}
