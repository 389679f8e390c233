use super::graph::{Graph, NodeId};
use super::tensor::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare tape gradients with central finite differences on every scalar.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-8)`. `loss_fn`
/// must be deterministic in the parameters it is handed.
pub fn grad_check<F>(params: &ParamSet, fd_epsilon: f64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<(Graph, NodeId)>,
{
    let mut analytic = params.clone();
    analytic.zero_grad();
    {
        let (g, loss) = loss_fn(&analytic)?;
        finite(g.scalar(loss))?;
        g.backward(loss)?.accumulate_into(&mut analytic);
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = params.clone();
    for t in 0..params.len() {
        let n = params.get(t).len();
        for i in 0..n {
            let base = flat(&probe, t, i);
            set_flat(&mut probe, t, i, base + fd_epsilon);
            let plus = eval(&mut loss_fn, &probe)?;
            set_flat(&mut probe, t, i, base - fd_epsilon);
            let minus = eval(&mut loss_fn, &probe)?;
            set_flat(&mut probe, t, i, base);

            let numeric = (plus - minus) / (2.0 * fd_epsilon);
            let a = analytic.get(t).grad.as_slice().expect("standard layout")[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = rel;
                report.worst_tensor = params.get(t).name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss(v))
    }
}

fn eval<F>(loss_fn: &mut F, p: &ParamSet) -> Result<f64>
where
    F: FnMut(&ParamSet) -> Result<(Graph, NodeId)>,
{
    let (g, loss) = loss_fn(p)?;
    finite(g.scalar(loss))
}

fn flat(p: &ParamSet, t: usize, i: usize) -> f64 {
    p.get(t).values.as_slice().expect("standard layout")[i]
}

fn set_flat(p: &mut ParamSet, t: usize, i: usize, v: f64) {
    p.get_mut(t).values.as_slice_mut().expect("standard layout")[i] = v;
}
