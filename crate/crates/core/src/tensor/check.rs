use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences and returns the worst relative error
/// `|a - b| / max(|a|, |b|, 1e-8)`.
///
/// `loss_fn` receives a fresh graph and one tracked leaf per entry of
/// `params`. When `max_coords` is set, at most that many evenly spaced
/// coordinates per tensor are perturbed.
pub fn grad_check<F>(loss_fn: F, params: &[Tensor], eps: f64, max_coords: Option<usize>) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Param(format!("grad_check eps {eps} outside [1e-6, 1e-3]")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = loss_fn(&mut g, &vars)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check loss evaluated to {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = loss_fn(&mut g, &vars)?;
    let l0 = g.value(loss).item();
    if !l0.is_finite() {
        return Err(Error::NonFinite(format!("grad_check loss evaluated to {l0}")));
    }
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad_tensor(v)).collect();

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let n = p.len();
        let coords: Vec<usize> = match max_coords {
            Some(m) if m < n => (0..m).map(|j| j * n / m).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[c] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let fd = (up - down) / (2.0 * eps);
            let an = analytic[pi].data()[c];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
