//! Central finite differences against reverse-mode gradients.

use super::tape::{Grads, Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name, element index, analytic and numeric value of the
    /// worst element.
    pub worst: Option<(String, usize, f64, f64)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Denominator floor so that near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Checks every scalar of every parameter of `f`, a scalar-valued graph
/// builder, with step `h`.
pub fn grad_check<F>(params: &ParamStore<f64>, f: F, h: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>) -> Var,
{
    let mut analytic = Grads::zeros_like(params);
    {
        let mut g = Graph::new(params);
        let out = f(&mut g);
        g.backward(out, &mut analytic);
    }
    let eval = |p: &ParamStore<f64>| -> f64 {
        let mut g = Graph::new(p);
        let out = f(&mut g);
        g.value(out).item()
    };
    let mut work = params.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_err: 0.0, worst: None, tol };
    for id in 0..params.len() {
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data[i];
            work.get_mut(id).data[i] = orig + h;
            let up = eval(&work);
            work.get_mut(id).data[i] = orig - h;
            let down = eval(&work);
            work.get_mut(id).data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.tensors[id].data[i];
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((params.name(id).to_string(), i, a, numeric));
            }
        }
    }
    report
}
