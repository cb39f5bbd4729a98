use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::envs::{rollout, Batch, CorridorMeet, Episode, MarkovGame, SyncMatrix};
use crate::numerics::gradcheck::{check_gradients, check_store_gradients, random_tensor};
use crate::numerics::{kl_categorical, Activation, CategoricalDist, Graph, Tensor};

fn tiny(mode: AblationMode) -> ModelConfig {
    ModelConfig {
        n_agents: 2,
        state_dim: 5,
        obs_dim: 4,
        action_count: 3,
        agent_categoricals: 3,
        agent_classes: 3,
        global_categoricals: 3,
        global_classes: 3,
        agent_hidden: 8,
        global_hidden: 8,
        mlp_width: 8,
        mlp_depth: 2,
        activation: Activation::Elu,
        unimix: 0.01,
        kl_alpha: 0.8,
        mode,
        weights: LossWeights::default(),
    }
}

fn model(cfg: ModelConfig, seed: u64) -> WorldModel {
    WorldModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn corridor_model(mode: AblationMode) -> WorldModel {
    let env = CorridorMeet::new();
    let mut cfg = ModelConfig::for_env(&env);
    cfg.agent_categoricals = 4;
    cfg.agent_classes = 4;
    cfg.global_categoricals = 4;
    cfg.global_classes = 4;
    cfg.agent_hidden = 16;
    cfg.global_hidden = 16;
    cfg.mlp_width = 16;
    cfg.mode = mode;
    model(cfg, 1)
}

fn random_episodes(count: usize, seed: u64) -> Vec<Episode> {
    let mut env = CorridorMeet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut ep = rollout(&mut env, seed + i as u64, |_, _| vec![rng.gen_range(0..3), rng.gen_range(0..3)]).unwrap();
            ep.steps.truncate(6 + i);
            ep
        })
        .collect()
}

/// Random batch matching the tiny configuration's dimensions.
fn tiny_batch(seed: u64, length: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Batch::from_windows(&[(&sync_episode(), 0), (&sync_episode(), 2)], length).unwrap();
    b.state = (0..length).map(|_| random_tensor(&mut rng, &[2, 5], 1.0)).collect();
    b.obs = (0..length).map(|_| random_tensor(&mut rng, &[4, 4], 1.0)).collect();
    b.reward = (0..length).map(|_| random_tensor(&mut rng, &[4, 1], 1.0)).collect();
    b
}

fn sync_episode() -> Episode {
    let mut env = SyncMatrix::new();
    rollout(&mut env, 0, |_, t| vec![t % 3, (t + 1) % 3]).unwrap()
}

fn mean_opts() -> LossOptions {
    LossOptions { latent: LatentMode::Mean, balanced_kl: false, ..LossOptions::default() }
}

fn row_sums(t: &Tensor, classes: usize) -> Vec<f64> {
    t.data().chunks(classes).map(|c| c.iter().sum()).collect()
}

#[test]
fn init_state_is_zero_and_deterministic() {
    let m = model(tiny(AblationMode::Full), 0);
    let a = m.init_state(1, &mut ChaCha8Rng::seed_from_u64(0));
    let b = m.init_state(1, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(a, b);
    assert_eq!(a.h_agent.shape(), &[2, 8]);
    assert!(a.h_agent.data().iter().all(|&v| v == 0.0));
    assert!(a.h_global.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
    assert!(row_sums(&a.z_agent, 3).iter().all(|&s| s == 1.0));
    assert!(row_sums(a.z_global.as_ref().unwrap(), 3).iter().all(|&s| s == 1.0));
    let none = model(tiny(AblationMode::NoGlobal), 0).init_state(3, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(none.h_global.is_none() && none.z_global.is_none());
    let single = model(tiny(AblationMode::SingleGlobal), 0).init_state(3, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(single.h_global.unwrap().rows(), 3);
}

#[test]
fn recurrent_global_shapes_and_determinism() {
    let m = model(tiny(AblationMode::Full), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_tensor(&mut rng, &[2, 8], 1.0);
    let z = random_tensor(&mut rng, &[2, 9], 1.0);
    let a = random_tensor(&mut rng, &[2, 6], 1.0);
    let run = || {
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, false);
        let (hv, zv, av) = (g.constant(h.clone()), g.constant(z.clone()), g.constant(a.clone()));
        let out = m.recurrent_step_global(&mut g, &p, hv, zv, av).unwrap();
        g.value(out).clone()
    };
    let out = run();
    assert_eq!(out.shape(), &[2, 8]);
    assert_eq!(out, run());

    let mut g = Graph::new();
    let p = m.params.bind(&mut g, false);
    let hv = g.constant(h.clone());
    let zv = g.constant(z.clone());
    let bad = g.constant(Tensor::zeros(&[2, 3]));
    assert!(m.recurrent_step_global(&mut g, &p, hv, zv, bad).is_err());
}

#[test]
fn recurrent_agent_ignores_other_agents() {
    let m = model(tiny(AblationMode::Full), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = random_tensor(&mut rng, &[2, 8], 1.0);
    let z = random_tensor(&mut rng, &[2, 9], 1.0);
    let step = |actions: &[usize]| {
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, false);
        let (hv, zv) = (g.constant(h.clone()), g.constant(z.clone()));
        let av = g.constant(one_hot_rows(actions, 3));
        let out = m.recurrent_step_agent(&mut g, &p, hv, zv, av).unwrap();
        g.value(out).clone()
    };
    let base = step(&[0, 1]);
    assert_eq!(base.shape(), &[2, 8]);
    for other in 0..3 {
        assert_eq!(step(&[0, other]).row(0), base.row(0));
        assert_eq!(step(&[other, 1]).row(1), base.row(1));
    }
}

#[test]
fn zero_representation_weights_give_uniform_posterior() {
    let mut m = model(tiny(AblationMode::Full), 0);
    let mlp = m.repr_agent_mlp().clone();
    mlp.zero_output(&mut m.params);
    let mut g = Graph::new();
    let p = m.params.bind(&mut g, false);
    let o = g.constant(random_tensor(&mut ChaCha8Rng::seed_from_u64(0), &[2, 4], 1.0));
    let h = g.constant(Tensor::zeros(&[2, 8]));
    let q = m.posterior_agent(&mut g, &p, o, h);
    for v in g.value(q.probs).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = q.sample_st(&mut g, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(row_sums(g.value(s), 3).iter().all(|&v| v == 1.0));
}

#[test]
fn posterior_global_is_per_agent_and_normalized() {
    let m = model(tiny(AblationMode::Full), 3);
    let mut g = Graph::new();
    let p = m.params.bind(&mut g, false);
    let state = g.constant(Tensor::full(&[2, 5], 0.3));
    let za = g.constant(Tensor::from_rows(&[
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
    ]));
    let hg = g.constant(Tensor::zeros(&[2, 8]));
    let q = m.posterior_global(&mut g, &p, state, za, hg).unwrap();
    let probs = g.value(q.probs);
    assert!(row_sums(probs, 3).iter().all(|s| (s - 1.0).abs() < 1e-12));
    assert_ne!(probs.row(0), probs.row(1));
}

#[test]
fn prior_global_reads_only_its_embedding() {
    let m = model(tiny(AblationMode::Full), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = random_tensor(&mut rng, &[2, 8], 1.0);
    let prior = |g: &mut Graph| {
        let p = m.params.bind(g, false);
        let hv = g.constant(h.clone());
        m.prior_global(g, &p, hv).unwrap()
    };
    let mut g1 = Graph::new();
    let a = prior(&mut g1);
    let mut g2 = Graph::new();
    g2.constant(random_tensor(&mut rng, &[2, 5], 1.0));
    let b = prior(&mut g2);
    assert_eq!(g1.value(a.probs), g2.value(b.probs));
    assert!(row_sums(g1.value(a.probs), 3).iter().all(|s| (s - 1.0).abs() < 1e-12));

    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, false);
        let s = g.constant(random_tensor(&mut rng, &[2, 5], 2.0));
        let za = g.constant(random_tensor(&mut rng, &[2, 9], 1.0));
        let hg = g.constant(random_tensor(&mut rng, &[2, 8], 1.0));
        let q = m.posterior_global(&mut g, &p, s, za, hg).unwrap();
        let pr = m.prior_global(&mut g, &p, hg).unwrap();
        for r in 0..2 {
            let qd = CategoricalDist::from_logits(g.value(q.logits).select_rows([r]).reshape(vec![3, 3]), 0.01).unwrap();
            let pd = CategoricalDist::from_logits(g.value(pr.logits).select_rows([r]).reshape(vec![3, 3]), 0.01).unwrap();
            assert!(kl_categorical(&qd, &pd).unwrap() >= 0.0);
        }
    }
}

#[test]
fn heads_have_the_documented_shapes() {
    let mut m = model(tiny(AblationMode::Full), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = m.init_state(1, &mut rng);
    {
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, false);
        let sv = StateVars::constants(&mut g, &s);
        let o = m.decode_observation(&mut g, &p, sv.h_agent, sv.z_agent);
        assert_eq!(g.value(o).shape(), &[2, 4]);
        let f = m.features(&mut g, &sv);
        assert_eq!(g.value(f).cols(), m.config.feature_dim());
        let av = m.predict_avail_actions(&mut g, &p, f);
        assert_eq!(g.value(av).shape(), &[2, 3]);
        let act = m.decode_action(&mut g, &p, f);
        let probs = g.softmax_groups(act, 3);
        assert!(row_sums(g.value(probs), 3).iter().all(|s| (s - 1.0).abs() < 1e-12));
    }
    let heads: Vec<_> = m.head_mlps().into_iter().cloned().collect();
    for h in &heads {
        h.zero_output(&mut m.params);
    }
    let mut g = Graph::new();
    let p = m.params.bind(&mut g, false);
    let sv = StateVars::constants(&mut g, &s);
    let r = m.predict_reward(&mut g, &p, sv.z_agent, sv.h_agent);
    assert!(g.value(r).data().iter().all(|&v| v == 0.0));
    let f = m.features(&mut g, &sv);
    let y = m.predict_termination(&mut g, &p, f);
    let y = g.sigmoid(y);
    assert!(g.value(y).data().iter().all(|&v| v == 0.5));
    let av = m.predict_avail_actions(&mut g, &p, f);
    let av = g.sigmoid(av);
    assert!(g.value(av).data().iter().all(|&v| v == 0.5));
}

#[test]
fn bernoulli_and_gaussian_losses_are_minimal_at_target() {
    for target in [0.0, 1.0] {
        let loss = |x: f64| {
            let mut g = Graph::new();
            let v = g.constant(Tensor::scalar(x));
            let l = bce_with_logits(&mut g, v, &Tensor::scalar(target));
            g.value(l).item()
        };
        let toward = if target == 1.0 { 8.0 } else { -8.0 };
        assert!(loss(toward) < loss(0.0) && loss(0.0) < loss(-toward));
        assert!((loss(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}

#[test]
fn component_gradients_match_finite_differences() {
    for mode in AblationMode::ALL {
        let m = model(tiny(mode), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let state = m.init_state(1, &mut rng);
        let obs = random_tensor(&mut rng, &[2, 4], 1.0);
        let env_state = random_tensor(&mut rng, &[1, 5], 1.0);
        let action = one_hot_rows(&[1, 2], 3);
        let report = check_store_gradients(&m.params, 1e-5, |g, p| {
            let sv = StateVars::constants(g, &state);
            let (ha, hg) = m.advance(g, p, &sv, &action).unwrap();
            let o = g.constant(obs.clone());
            let s = hg.map(|_| g.constant(m.state_rows(&env_state)));
            let (post, qa, qg) = m.observe(g, p, ha, hg, o, s, LatentMode::Mean, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let pa = m.prior_agent(g, p, ha, post.z_global);
            let mut parts = vec![crate::numerics::kl_rows(g, &qa, &pa)];
            if let (Some(qg), Some(hg)) = (qg, hg) {
                let pg = m.prior_global(g, p, hg).unwrap();
                parts.push(crate::numerics::kl_rows(g, &qg, &pg));
            }
            let dec = m.decode_observation(g, p, ha, post.z_agent);
            let r = m.predict_reward(g, p, post.z_agent, ha);
            let f = m.features(g, &post);
            let y = m.predict_termination(g, p, f);
            let av = m.predict_avail_actions(g, p, f);
            let ad = m.decode_action(g, p, f);
            let mut total = g.sum(dec);
            for v in parts.into_iter().chain([r, y, av, ad]) {
                let v = g.tanh(v);
                let s = g.sum(v);
                total = g.add(total, s);
            }
            total
        });
        assert!(report.max_rel_error < 1e-4, "{mode}: {report:?}");
    }
}

#[test]
fn posterior_global_gradient_through_state_input() {
    let m = model(tiny(AblationMode::Full), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs = [random_tensor(&mut rng, &[2, 5], 1.0), random_tensor(&mut rng, &[2, 9], 1.0)];
    let hg = random_tensor(&mut rng, &[2, 8], 1.0);
    let report = check_gradients(&inputs, 1e-5, |g, v| {
        let p = m.params.bind(g, false);
        let h = g.constant(hg.clone());
        let q = m.posterior_global(g, &p, v[0], v[1], h).unwrap();
        let w = g.constant(random_tensor(&mut ChaCha8Rng::seed_from_u64(1), &[2, 9], 1.0));
        let prod = g.mul(q.log_probs, w);
        g.sum(prod)
    });
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn action_nll_reaches_posterior_logits() {
    let m = model(tiny(AblationMode::Full), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let obs = random_tensor(&mut rng, &[2, 4], 1.0);
    let mut g = Graph::new();
    let p = m.params.bind(&mut g, false);
    let logits = g.parameter(random_tensor(&mut rng, &[2, 9], 1.0));
    let q = crate::numerics::CategoricalVars::from_logits(&mut g, logits, 3, 0.01);
    let za = q.sample_st(&mut g, &mut rng);
    let _ = g.constant(obs);
    let h = g.constant(Tensor::zeros(&[2, 8]));
    let st = StateVars { h_agent: h, h_global: None, z_agent: za, z_global: None };
    let m2 = model(tiny(AblationMode::NoGlobal), 10);
    let p2 = m2.params.bind(&mut g, false);
    let f = m2.features(&mut g, &st);
    let a = m2.decode_action(&mut g, &p2, f);
    let logp = g.log_softmax_groups(a, 3);
    let taken = g.constant(one_hot_rows(&[0, 2], 3));
    let picked = g.mul(logp, taken);
    let nll = g.sum(picked);
    let grads = g.backward(nll).unwrap();
    assert!(grads.get(logits).unwrap().data().iter().any(|&v| v.abs() > 1e-8));
    drop(p);
}

#[test]
fn loss_total_is_sum_of_components() {
    for mode in AblationMode::ALL {
        let m = corridor_model(mode);
        let eps = random_episodes(4, 11);
        let batch = Batch::from_episodes(&eps).unwrap();
        let (b, _) = m.model_loss(&batch, &mut ChaCha8Rng::seed_from_u64(0), &LossOptions::default()).unwrap();
        assert!((b.total - b.component_sum()).abs() < 1e-9, "{mode}: {b:?}");
        assert!(b.kl_agent >= 0.0 && b.kl_global >= 0.0);
        if mode == AblationMode::NoGlobal {
            assert_eq!(b.kl_global, 0.0);
        }
    }
}

#[test]
fn prior_equal_to_posterior_has_zero_kl() {
    let m = corridor_model(AblationMode::Full);
    let batch = Batch::from_episodes(&random_episodes(3, 12)).unwrap();
    let opts = LossOptions { prior_equals_posterior: true, ..LossOptions::default() };
    let (b, _) = m.model_loss(&batch, &mut ChaCha8Rng::seed_from_u64(0), &opts).unwrap();
    assert!(b.kl_agent.abs() < 1e-9 && b.kl_global.abs() < 1e-9, "{b:?}");
}

#[test]
fn elbo_terms_match_direct_recomputation() {
    for mode in [AblationMode::Full, AblationMode::SingleGlobal] {
        let mut m = corridor_model(mode);
        m.config.weights = LossWeights::elbo_only();
        let batch = Batch::from_episodes(&random_episodes(3, 13)).unwrap();
        let opts = LossOptions { trace: true, ..LossOptions::default() };
        let (b, trace) = m.model_loss(&batch, &mut ChaCha8Rng::seed_from_u64(1), &opts).unwrap();
        let trace = trace.unwrap();
        let c = &m.config;

        let kl_rows = |q: &Tensor, p: &Tensor, k: usize, classes: usize| -> Vec<f64> {
            (0..q.rows())
                .map(|r| {
                    let qd = CategoricalDist::from_logits(q.select_rows([r]).reshape(vec![k, classes]), c.unimix).unwrap();
                    let pd = CategoricalDist::from_logits(p.select_rows([r]).reshape(vec![k, classes]), c.unimix).unwrap();
                    kl_categorical(&qd, &pd).unwrap()
                })
                .collect()
        };
        let (mut recon, mut kla, mut klg, mut count, mut gcount) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 0..batch.length {
            let mask = batch.mask[t].data();
            for r in 0..batch.rows() {
                let d: f64 = trace.decoded_obs[t].row(r).iter().zip(batch.obs[t].row(r)).map(|(a, b)| (a - b) * (a - b)).sum();
                recon += mask[r] * 0.5 * d;
                count += mask[r];
            }
            let ka = kl_rows(&trace.posterior_agent_logits[t], &trace.prior_agent_logits[t], c.agent_categoricals, c.agent_classes);
            kla += ka.iter().zip(mask).map(|(k, m)| k * m).sum::<f64>();
            let kg = kl_rows(&trace.posterior_global_logits[t], &trace.prior_global_logits[t], c.global_categoricals, c.global_classes);
            let gm: Vec<f64> = match mode {
                AblationMode::SingleGlobal => mask.iter().step_by(c.n_agents).copied().collect(),
                _ => mask.to_vec(),
            };
            klg += kg.iter().zip(&gm).map(|(k, m)| k * m).sum::<f64>();
            gcount += gm.iter().sum::<f64>();
        }
        assert!((b.recon_nll - recon / count).abs() < 1e-9);
        assert!((b.kl_agent - kla / count).abs() < 1e-9);
        assert!((b.kl_global - klg / gcount).abs() < 1e-9);
        assert!((b.total - (b.recon_nll + b.kl_agent + b.kl_global)).abs() < 1e-9);
        assert_eq!([b.reward_nll, b.term_nll, b.avail_nll, b.action_nll], [0.0; 4]);
    }
}

#[test]
fn balancing_changes_gradients_but_not_values() {
    let m = model(tiny(AblationMode::Full), 20);
    let batch = tiny_batch(21, 3);
    let run = |balanced: bool| {
        let opts = LossOptions { balanced_kl: balanced, ..mean_opts() };
        m.loss_and_gradients(&batch, &mut ChaCha8Rng::seed_from_u64(0), &opts).unwrap()
    };
    let (a, ga) = run(true);
    let (b, gb) = run(false);
    assert!((a.total - b.total).abs() < 1e-12);
    assert_ne!(ga, gb);
}

#[test]
fn empty_batch_is_rejected() {
    let m = model(tiny(AblationMode::Full), 0);
    let mut b = tiny_batch(0, 2);
    for mask in &mut b.mask {
        mask.data_mut().fill(0.0);
    }
    assert!(m.model_loss(&b, &mut ChaCha8Rng::seed_from_u64(0), &LossOptions::default()).is_err());
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    for mode in AblationMode::ALL {
        let m = model(tiny(mode), 14);
        let batch = tiny_batch(15, 3);
        let report = check_store_gradients(&m.params, 1e-5, |g, p| {
            m.loss_on_graph(g, p, &batch, &mut ChaCha8Rng::seed_from_u64(0), &mean_opts()).unwrap().total
        });
        assert!(report.max_rel_error < 1e-3, "{mode}: {report:?}");
        assert_eq!(report.checked, m.params.num_scalars());
    }
}

#[test]
fn parameter_arrays_do_not_depend_on_agent_count() {
    for mode in AblationMode::ALL {
        let mut three = tiny(mode);
        three.n_agents = 3;
        assert_eq!(model(tiny(mode), 0).params.len(), model(three, 0).params.len());
    }
}

#[test]
fn ablations_change_the_parameter_set() {
    let full = model(tiny(AblationMode::Full), 0);
    let none = model(tiny(AblationMode::NoGlobal), 0);
    let single = model(tiny(AblationMode::SingleGlobal), 0);
    assert!(none.params.num_scalars() < full.params.num_scalars());
    assert!(none.params.iter().all(|(n, _)| !n.contains("_global")));
    assert!(full.params.iter().any(|(n, _)| n.starts_with("repr_global")));
    assert_eq!(single.params.len(), full.params.len());
}

#[test]
fn single_global_runs_once_per_instance() {
    let m = corridor_model(AblationMode::SingleGlobal);
    let batch = Batch::from_episodes(&random_episodes(3, 16)).unwrap();
    let start = m.encode_starts(&batch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(start.h_global.as_ref().unwrap().rows(), start.batch);
    assert_eq!(start.h_agent.rows(), start.batch * 2);
}

#[test]
fn imagination_horizon_contract() {
    let m = corridor_model(AblationMode::Full);
    let batch = Batch::from_episodes(&random_episodes(2, 17)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = m.encode_starts(&batch, &mut rng).unwrap();
    assert!(m.imagine(&start, &mut FixedPolicy(1), 0, &mut rng).is_err());
    let one = m.imagine(&start, &mut FixedPolicy(1), 1, &mut rng).unwrap();
    assert_eq!(one.horizon(), 1);
    assert!(one.steps[0].state.posterior);
    assert!(one.steps[0].act.is_none());
    assert_eq!(one.steps[0].state, start);
    let five = m.imagine(&start, &mut FixedPolicy(1), 5, &mut rng).unwrap();
    assert_eq!(five.horizon(), 5);
    assert!(five.steps[1..].iter().all(|s| !s.state.posterior));
    assert!(five.steps[..4].iter().all(|s| s.act.is_some()));
    let w = five.weight(4);
    assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
    // Starts exclude frames after termination and padding.
    let usable: f64 = (0..batch.length)
        .map(|t| (0..batch.batch).filter(|&b| batch.mask[t].data()[2 * b] == 1.0 && batch.done[t].data()[2 * b] == 0.0).count() as f64)
        .sum();
    assert_eq!(start.batch as f64, usable);
}

#[test]
fn availability_threshold_falls_back_when_empty() {
    let t = threshold_avail(&Tensor::from_rows(&[vec![0.9, 0.2, 0.6], vec![0.1, 0.3, 0.5]]));
    assert_eq!(t.row(0), &[1.0, 0.0, 1.0]);
    assert_eq!(t.row(1), &[1.0, 1.0, 1.0]);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let m = model(tiny(AblationMode::Full), 18);
    let ck = Checkpoint::from_stores(m.config.fingerprint(), &[("model", &m.params)]);
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    let back = Checkpoint::read_from(&bytes[..]).unwrap();
    assert_eq!(back, ck);
    let mut fresh = model(tiny(AblationMode::Full), 19);
    assert_ne!(fresh.params.checksum(), m.params.checksum());
    back.restore("model", &mut fresh.params).unwrap();
    assert_eq!(fresh.params.checksum(), m.params.checksum());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);

    bytes[0] = b'X';
    assert!(Checkpoint::read_from(&bytes[..]).is_err());
    let mut other = model(tiny(AblationMode::NoGlobal), 0);
    assert!(back.restore("model", &mut other.params).is_err());
}

#[test]
fn fingerprint_tracks_configuration() {
    let a = tiny(AblationMode::Full);
    let mut b = a.clone();
    assert_eq!(a.fingerprint(), b.fingerprint());
    b.mlp_width = 9;
    assert_ne!(a.fingerprint(), b.fingerprint());
}

#[test]
fn env_dimensions_feed_the_config() {
    let env = CorridorMeet::new();
    let cfg = ModelConfig::for_env(&env);
    assert_eq!((cfg.state_dim, cfg.obs_dim, cfg.action_count), (21, 15, 3));
    assert_eq!(cfg.n_agents, env.n_agents());
}
