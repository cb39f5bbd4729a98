//! Vectors of independent categorical variables.
//!
//! A latent with `K` categoricals of `C` classes is laid out as one row of
//! `K * C` columns; each consecutive group of `C` columns is one variable.

use rand::Rng;

use super::graph::{softmax_in_place, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mixing weight of the uniform component in `probs`.
pub const DEFAULT_UNIMIX: f64 = 0.01;

/// Categorical distribution over `[K, C]` with explicit probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist {
    logits: Tensor,
    probs: Tensor,
}

impl CategoricalDist {
    /// `probs = (1 - unimix) * softmax(logits) + unimix / C`, row-wise.
    pub fn from_logits(logits: Tensor, unimix: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&unimix) {
            return Err(Error::Contract(format!("unimix {unimix} outside [0, 1)")));
        }
        if !logits.is_finite() {
            return Err(Error::Contract("categorical logits must be finite".into()));
        }
        let c = logits.cols();
        let mut probs = logits.data().to_vec();
        for row in probs.chunks_mut(c) {
            softmax_in_place(row);
            row.iter_mut().for_each(|p| *p = (1.0 - unimix) * *p + unimix / c as f64);
        }
        let probs = Tensor::new(logits.shape().to_vec(), probs);
        Ok(Self { logits, probs })
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn categoricals(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }
}

/// Draw one class per group of `classes` columns by inverse CDF.
pub fn sample_one_hot(probs: &[f64], classes: usize, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    for (row, o) in probs.chunks(classes).zip(out.chunks_mut(classes)) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = classes - 1;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        // Never land on a zero-probability class through rounding at the tail.
        while row[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        o[pick] = 1.0;
    }
    out
}

/// Most likely class per group, ties broken towards the lowest index.
pub fn argmax_one_hot(probs: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    for (row, o) in probs.chunks(classes).zip(out.chunks_mut(classes)) {
        let mut best = 0;
        for (i, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = i;
            }
        }
        o[best] = 1.0;
    }
    out
}

/// One-hot sample of `dist` (forward value of the straight-through sample).
pub fn sample_categorical_st(dist: &CategoricalDist, rng: &mut (impl Rng + ?Sized)) -> Tensor {
    let data = sample_one_hot(dist.probs.data(), dist.classes(), rng);
    Tensor::new(dist.probs.shape().to_vec(), data)
}

/// `Σ_k Σ_c q (ln q − ln p)` by direct summation.
pub fn kl_categorical(q: &CategoricalDist, p: &CategoricalDist) -> Result<f64> {
    if q.probs.shape() != p.probs.shape() {
        return Err(Error::Contract(format!(
            "kl: shape mismatch {:?} vs {:?}",
            q.probs.shape(),
            p.probs.shape()
        )));
    }
    Ok(q.probs
        .data()
        .iter()
        .zip(p.probs.data())
        .map(|(&a, &b)| if a > 0.0 { a * (a.ln() - b.ln()) } else { 0.0 })
        .sum())
}

/// Graph handles for a categorical latent built from a logits node.
#[derive(Clone, Copy, Debug)]
pub struct CategoricalVars {
    pub logits: Var,
    pub probs: Var,
    pub log_probs: Var,
    pub classes: usize,
}

impl CategoricalVars {
    pub fn from_logits(g: &mut Graph, logits: Var, classes: usize, unimix: f64) -> Self {
        assert!((0.0..1.0).contains(&unimix), "unimix {unimix} outside [0, 1)");
        let (probs, log_probs) = if unimix == 0.0 {
            let probs = g.softmax_groups(logits, classes);
            (probs, g.log_softmax_groups(logits, classes))
        } else {
            let sm = g.softmax_groups(logits, classes);
            let scaled = g.scale(sm, 1.0 - unimix);
            let probs = g.add_scalar(scaled, unimix / classes as f64);
            (probs, g.ln(probs))
        };
        Self { logits, probs, log_probs, classes }
    }

    /// Straight-through one-hot sample: the forward value is a draw from
    /// `probs`, the backward pass treats it as `probs`.
    pub fn sample_st(&self, g: &mut Graph, rng: &mut (impl Rng + ?Sized)) -> Var {
        let data = sample_one_hot(g.value(self.probs).data(), self.classes, rng);
        let shape = g.value(self.probs).shape().to_vec();
        g.straight_through(self.probs, Tensor::new(shape, data))
    }

    /// The probabilities themselves, used where a deterministic,
    /// differentiable latent is required.
    pub fn mean(&self) -> Var {
        self.probs
    }

    fn detached(&self, g: &mut Graph) -> Self {
        Self {
            logits: g.detach(self.logits),
            probs: g.detach(self.probs),
            log_probs: g.detach(self.log_probs),
            classes: self.classes,
        }
    }
}

/// Row-wise `KL(q ‖ p)`, shape `[rows, 1]`.
pub fn kl_rows(g: &mut Graph, q: &CategoricalVars, p: &CategoricalVars) -> Var {
    assert_eq!(g.value(q.probs).dims2(), g.value(p.probs).dims2(), "kl: shape mismatch");
    let diff = g.sub(q.log_probs, p.log_probs);
    let terms = g.mul(q.probs, diff);
    g.sum_cols(terms)
}

/// Row-wise balanced KL:
/// `alpha · KL(stop(q) ‖ p) + (1 − alpha) · KL(q ‖ stop(p))`.
///
/// The value equals `KL(q ‖ p)`; the prior receives `alpha` of the gradient
/// and the posterior `1 − alpha`.
pub fn kl_balanced_rows(g: &mut Graph, q: &CategoricalVars, p: &CategoricalVars, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("kl balancing weight {alpha} outside [0, 1]")));
    }
    let q_stop = q.detached(g);
    let p_stop = p.detached(g);
    let to_prior = kl_rows(g, &q_stop, p);
    let to_posterior = kl_rows(g, q, &p_stop);
    let a = g.scale(to_prior, alpha);
    let b = g.scale(to_posterior, 1.0 - alpha);
    Ok(g.add(a, b))
}

/// Scalar balanced KL summed over all rows.
pub fn kl_balanced(g: &mut Graph, q: &CategoricalVars, p: &CategoricalVars, alpha: f64) -> Result<Var> {
    let rows = kl_balanced_rows(g, q, p, alpha)?;
    Ok(g.sum(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::random_tensor;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle_kl(q: &[f64], p: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..q.len() {
            total += q[i] * (q[i].ln() - p[i].ln());
        }
        total
    }

    #[test]
    fn uniform_kl_is_zero() {
        let u = CategoricalDist::from_logits(Tensor::zeros(&[2, 4]), 0.0).unwrap();
        assert_eq!(kl_categorical(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn one_hot_against_uniform_is_ln_c() {
        let q = CategoricalDist::from_logits(Tensor::new(vec![1, 4], vec![800.0, 0.0, 0.0, 0.0]), 0.0).unwrap();
        let p = CategoricalDist::from_logits(Tensor::zeros(&[1, 4]), 0.0).unwrap();
        assert!((kl_categorical(&q, &p).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = CategoricalDist::from_logits(random_tensor(&mut rng, &[2, 3], 2.0), DEFAULT_UNIMIX).unwrap();
            let p = CategoricalDist::from_logits(random_tensor(&mut rng, &[2, 3], 2.0), DEFAULT_UNIMIX).unwrap();
            let got = kl_categorical(&q, &p).unwrap();
            let want = oracle_kl(q.probs().data(), p.probs().data());
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_shape_mismatch_is_error() {
        let q = CategoricalDist::from_logits(Tensor::zeros(&[2, 3]), 0.0).unwrap();
        let p = CategoricalDist::from_logits(Tensor::zeros(&[3, 2]), 0.0).unwrap();
        assert!(kl_categorical(&q, &p).is_err());
    }

    #[test]
    fn degenerate_distribution_always_samples_its_class() {
        let d = CategoricalDist::from_logits(Tensor::new(vec![1, 3], vec![1000.0, 0.0, 0.0]), 0.0).unwrap();
        assert_eq!(d.probs().data(), &[1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            assert_eq!(sample_categorical_st(&d, &mut rng).data(), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let d = CategoricalDist::from_logits(random_tensor(&mut r, &[4, 5], 1.0), DEFAULT_UNIMIX).unwrap();
        let a = sample_categorical_st(&d, &mut ChaCha8Rng::seed_from_u64(0));
        let b = sample_categorical_st(&d, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a, b);
        for row in a.data().chunks(5) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        }
    }

    #[test]
    fn straight_through_gradient_equals_probs_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = random_tensor(&mut rng, &[3, 4], 1.5);
        let weights = random_tensor(&mut rng, &[3, 4], 1.0);
        let grad_of = |use_sample: bool| {
            let mut g = Graph::new();
            let l = g.parameter(logits.clone());
            let cat = CategoricalVars::from_logits(&mut g, l, 4, DEFAULT_UNIMIX);
            let x = if use_sample { cat.sample_st(&mut g, &mut ChaCha8Rng::seed_from_u64(2)) } else { cat.probs };
            let w = g.constant(weights.clone());
            let y = g.mul(x, w);
            let s = g.sum(y);
            g.backward(s).unwrap().take(l).unwrap()
        };
        assert_eq!(grad_of(true), grad_of(false));
    }

    fn balanced_grads(q0: &Tensor, p0: &Tensor, alpha: Option<f64>) -> (f64, Tensor, Tensor) {
        let mut g = Graph::new();
        let ql = g.parameter(q0.clone());
        let pl = g.parameter(p0.clone());
        let q = CategoricalVars::from_logits(&mut g, ql, 3, DEFAULT_UNIMIX);
        let p = CategoricalVars::from_logits(&mut g, pl, 3, DEFAULT_UNIMIX);
        let root = match alpha {
            Some(a) => kl_balanced(&mut g, &q, &p, a).unwrap(),
            None => {
                let r = kl_rows(&mut g, &q, &p);
                g.sum(r)
            }
        };
        let mut grads = g.backward(root).unwrap();
        let gq = grads.take(ql).unwrap_or_else(|| Tensor::zeros(q0.shape()));
        let gp = grads.take(pl).unwrap_or_else(|| Tensor::zeros(p0.shape()));
        (g.value(root).item(), gq, gp)
    }

    #[test]
    fn balanced_kl_routes_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q0 = random_tensor(&mut rng, &[2, 3], 2.0);
        let p0 = random_tensor(&mut rng, &[2, 3], 2.0);
        let (plain, gq, gp) = balanced_grads(&q0, &p0, None);
        let (bal, bq, bp) = balanced_grads(&q0, &p0, Some(0.8));
        assert!((plain - bal).abs() < 1e-12);
        for (a, b) in bp.data().iter().zip(gp.data()) {
            assert!((a - 0.8 * b).abs() < 1e-12);
        }
        for (a, b) in bq.data().iter().zip(gq.data()) {
            assert!((a - 0.2 * b).abs() < 1e-12);
        }
        let (_, fully_stopped, _) = balanced_grads(&q0, &p0, Some(1.0));
        assert!(fully_stopped.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn balancing_weight_out_of_range_is_error() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::zeros(&[1, 3]));
        let q = CategoricalVars::from_logits(&mut g, l, 3, 0.0);
        assert!(kl_balanced(&mut g, &q, &q, 1.5).is_err());
        assert!(kl_balanced(&mut g, &q, &q, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn probs_rows_normalized_and_positive(vals in proptest::collection::vec(-30.0f64..30.0, 12)) {
            let d = CategoricalDist::from_logits(Tensor::new(vec![3, 4], vals), DEFAULT_UNIMIX).unwrap();
            for row in d.probs().data().chunks(4) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&p| p > 0.0));
            }
        }

        #[test]
        fn balanced_value_equals_plain_kl(q in proptest::collection::vec(-5.0f64..5.0, 6),
                                          p in proptest::collection::vec(-5.0f64..5.0, 6),
                                          alpha in 0.0f64..=1.0) {
            let qd = CategoricalDist::from_logits(Tensor::new(vec![2, 3], q.clone()), DEFAULT_UNIMIX).unwrap();
            let pd = CategoricalDist::from_logits(Tensor::new(vec![2, 3], p.clone()), DEFAULT_UNIMIX).unwrap();
            let plain = kl_categorical(&qd, &pd).unwrap();
            prop_assert!(plain >= 0.0);
            let mut g = Graph::new();
            let ql = g.constant(Tensor::new(vec![2, 3], q));
            let pl = g.constant(Tensor::new(vec![2, 3], p));
            let qv = CategoricalVars::from_logits(&mut g, ql, 3, DEFAULT_UNIMIX);
            let pv = CategoricalVars::from_logits(&mut g, pl, 3, DEFAULT_UNIMIX);
            let b = kl_balanced(&mut g, &qv, &pv, alpha).unwrap();
            prop_assert!((g.value(b).item() - plain).abs() < 1e-12);
        }
    }
}
