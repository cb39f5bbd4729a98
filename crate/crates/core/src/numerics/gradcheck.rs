//! Central finite-difference oracle for reverse-mode gradients.
//!
//! The oracle only evaluates forward values, so it shares no code with
//! [`Graph::backward`].

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Binding, ParamStore};
use super::tensor::Tensor;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Evaluate `build` once with reverse mode and once per element with
/// central differences of width `2 * step`.
pub fn check_gradients<F>(params: &[Tensor], step: f64, build: F) -> GradReport
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let root = build(&mut g, &vars);
        g.value(root).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.parameter(t.clone())).collect();
    let root = build(&mut g, &vars);
    let grads = g.backward(root).expect("scalar root");

    let mut report = GradReport::default();
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; params[pi].len()]);
        for e in 0..params[pi].len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + step;
            let up = eval(&work);
            work[pi].data_mut()[e] = orig - step;
            let down = eval(&work);
            work[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = rel_error(analytic[e], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, e);
            }
        }
    }
    report
}

/// Finite-difference check of every scalar in `store` for the scalar
/// produced by `build`.
pub fn check_store_gradients<F>(store: &ParamStore, step: f64, build: F) -> GradReport
where
    F: Fn(&mut Graph, &Binding) -> Var,
{
    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let b = s.bind(&mut g, false);
        let root = build(&mut g, &b);
        g.value(root).item()
    };
    let mut g = Graph::new();
    let binding = store.bind(&mut g, true);
    let root = build(&mut g, &binding);
    let mut grads = g.backward(root).expect("scalar root");
    let analytic = binding.collect(&mut grads);

    let mut report = GradReport::default();
    let mut work = store.clone();
    for (pi, id) in store.ids().enumerate() {
        let n = store.get(id).len();
        for e in 0..n {
            let a = analytic[pi].as_ref().map_or(0.0, |t| t.data()[e]);
            let orig = work.get(id).data()[e];
            work.get_mut(id).data_mut()[e] = orig + step;
            let up = eval(&work);
            work.get_mut(id).data_mut()[e] = orig - step;
            let down = eval(&work);
            work.get_mut(id).data_mut()[e] = orig;
            let err = rel_error(a, (up - down) / (2.0 * step));
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, e);
            }
        }
    }
    report
}

/// Uniform values in `[-scale, scale]`.
pub fn random_tensor(rng: &mut (impl Rng + ?Sized), shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
}
