//! Central-finite-difference gradient checking.
//!
//! Perturbs each parameter element by `±h`, recomputes a scalar loss, and
//! compares the numerical slope against the analytic gradient. Losses must be
//! deterministic functions of the parameters (fix any sampling inputs first).

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with a small floor so finite-difference noise on near-zero
/// gradients does not produce false alarms while real scale errors still do.
pub fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-4)
}

/// Checks `analytic` (one matrix per parameter tensor of `model`, in the
/// order `params(model)` yields them) against central differences of `loss`.
pub fn check<M>(
    model: &mut M,
    params: impl Fn(&mut M) -> Vec<&mut Matrix>,
    mut loss: impl FnMut(&mut M) -> f64,
    analytic: &[Matrix],
    h: f64,
) -> GradCheckReport {
    let n_tensors = params(model).len();
    assert_eq!(
        analytic.len(),
        n_tensors,
        "analytic gradient count mismatch"
    );
    let mut max_rel_err = 0.0f64;
    let mut checked = 0usize;
    for t in 0..n_tensors {
        let len = analytic[t].data().len();
        for i in 0..len {
            {
                let mut ps = params(model);
                ps[t].data_mut()[i] += h;
            }
            let lp = loss(model);
            {
                let mut ps = params(model);
                ps[t].data_mut()[i] -= 2.0 * h;
            }
            let lm = loss(model);
            {
                let mut ps = params(model);
                ps[t].data_mut()[i] += h;
            }
            let fd = (lp - lm) / (2.0 * h);
            max_rel_err = max_rel_err.max(rel_err(fd, analytic[t].data()[i]));
            checked += 1;
        }
    }
    GradCheckReport {
        max_rel_err,
        checked,
    }
}
