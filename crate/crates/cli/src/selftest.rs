//! Fast invariant suite run by `bilevel selftest`.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bilevel_core::envs::{make_env, rollout, Batch, Episode};
use bilevel_core::marl::{gae, Actor, DecentralizedExecutor};
use bilevel_core::numerics::gradcheck::check_store_gradients;
use bilevel_core::numerics::{kl_balanced, Activation, CategoricalVars, Graph, Tensor};
use bilevel_core::trainer::{RunConfig, Trainer};
use bilevel_core::worldmodel::{AblationMode, LatentMode, LossOptions, ModelConfig, WorldModel};

/// Deliberate breakage used to show that a check can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Evaluate the KL identities against a reversed divergence.
    Kl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26} {:<6} {:>8}  detail", "check", "result", "seconds")?;
        for c in &self.checks {
            let r = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "{:<26} {:<6} {:>8.2}  {}", c.name, r, c.seconds, c.detail)?;
        }
        Ok(())
    }
}

type Outcome = Result<String, String>;

fn tiny_config(mode: AblationMode) -> ModelConfig {
    let env = make_env("sync_matrix").expect("built-in env");
    ModelConfig {
        agent_categoricals: 3,
        agent_classes: 3,
        global_categoricals: 3,
        global_classes: 3,
        agent_hidden: 8,
        global_hidden: 8,
        mlp_width: 8,
        mlp_depth: 1,
        activation: Activation::Elu,
        mode,
        ..ModelConfig::for_env(env.as_ref())
    }
}

fn random_episodes(env: &str, count: usize, seed: u64) -> Vec<Episode> {
    let mut env = make_env(env).expect("built-in env");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            rollout(env.as_mut(), seed + i as u64, |f, _| {
                f.avail_actions
                    .iter()
                    .map(|av| {
                        let ok: Vec<usize> = (0..av.len()).filter(|&a| av[a]).collect();
                        ok[rng.gen_range(0..ok.len())]
                    })
                    .collect()
            })
            .expect("valid actions")
        })
        .collect()
}

fn tiny_batch(length: usize) -> Batch {
    let eps = random_episodes("sync_matrix", 2, 3);
    Batch::from_windows(&[(&eps[0], 0), (&eps[1], 4)], length).expect("windows fit")
}

fn gradient_check() -> Outcome {
    let batch = tiny_batch(3);
    let opts = LossOptions { latent: LatentMode::Mean, balanced_kl: false, ..LossOptions::default() };
    let mut worst: f64 = 0.0;
    for mode in AblationMode::ALL {
        let m = WorldModel::new(tiny_config(mode), &mut ChaCha8Rng::seed_from_u64(7)).map_err(|e| e.to_string())?;
        let report = check_store_gradients(&m.params, 1e-5, |g, p| {
            m.loss_on_graph(g, p, &batch, &mut ChaCha8Rng::seed_from_u64(0), &opts).expect("valid batch").total
        });
        worst = worst.max(report.max_rel_error);
    }
    if worst < 1e-3 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} >= 1e-3"))
    }
}

fn direct_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(a, b)| a * (a / b).ln()).sum()
}

fn kl_identities(fault: Option<Fault>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let classes = rng.gen_range(2..6);
        let mut g = Graph::new();
        let lq = g.constant(Tensor::new(vec![1, classes], (0..classes).map(|_| rng.gen_range(-3.0..3.0)).collect()));
        let lp = g.constant(Tensor::new(vec![1, classes], (0..classes).map(|_| rng.gen_range(-3.0..3.0)).collect()));
        let q = CategoricalVars::from_logits(&mut g, lq, classes, 0.0);
        let p = CategoricalVars::from_logits(&mut g, lp, classes, 0.0);
        let value = match fault {
            Some(Fault::Kl) => kl_balanced(&mut g, &p, &q, 0.8),
            None => kl_balanced(&mut g, &q, &p, 0.8),
        }
        .map_err(|e| e.to_string())?;
        let got = g.value(value).item();
        let want = direct_kl(g.value(q.probs).data(), g.value(p.probs).data());
        worst = worst.max((got - want).abs());
    }
    if worst < 1e-12 {
        Ok(format!("1000 pairs, max |balanced − direct| {worst:.1e}"))
    } else {
        Err(format!("balanced KL differs from direct KL by {worst:.3e}"))
    }
}

fn elbo_identities() -> Outcome {
    let batch = tiny_batch(4);
    for mode in AblationMode::ALL {
        let m = WorldModel::new(tiny_config(mode), &mut ChaCha8Rng::seed_from_u64(3)).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, _) = m.model_loss(&batch, &mut rng, &LossOptions::default()).map_err(|e| e.to_string())?;
        if (l.total - l.component_sum()).abs() > 1e-9 {
            return Err(format!("{mode}: total {} vs component sum {}", l.total, l.component_sum()));
        }
        let same = LossOptions { prior_equals_posterior: true, ..LossOptions::default() };
        let (l, _) = m.model_loss(&batch, &mut rng, &same).map_err(|e| e.to_string())?;
        if l.kl_agent.abs() > 1e-9 || l.kl_global.abs() > 1e-9 {
            return Err(format!("{mode}: prior = posterior left KL {} / {}", l.kl_agent, l.kl_global));
        }
    }
    Ok("sum of components and zero KL at prior = posterior, all modes".into())
}

fn decentralized_execution() -> Outcome {
    let mut env = make_env("corridor_meet").expect("built-in env");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ModelConfig {
        agent_hidden: 8,
        global_hidden: 8,
        mlp_width: 8,
        agent_categoricals: 3,
        agent_classes: 3,
        ..ModelConfig::for_env(env.as_ref())
    };
    let model = WorldModel::new(cfg.clone(), &mut rng).map_err(|e| e.to_string())?;
    let actor = Actor::new(cfg.agent_latent() + cfg.agent_hidden, cfg.action_count, 8, 1, Activation::Relu, &mut rng);
    let trials = 200;
    for trial in 0..trials {
        let seed = rng.gen();
        let mut base = DecentralizedExecutor::new(&model, seed);
        let mut pert = DecentralizedExecutor::new(&model, seed);
        let frame = env.reset(trial);
        let (mut obs, mut avail) = (frame.observations, frame.avail_actions);
        for _ in 0..5 {
            let a = base.act(&model, &actor, &obs, &avail, false).map_err(|e| e.to_string())?;
            let mut o2 = obs.clone();
            o2[1].iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            let mut av2 = avail.clone();
            let keep = rng.gen_range(0..cfg.action_count);
            av2[1] = (0..cfg.action_count).map(|k| k == keep).collect();
            let b = pert.act(&model, &actor, &o2, &av2, false).map_err(|e| e.to_string())?;
            if a[0] != b[0] {
                return Err(format!("trial {trial}: agent 0 changed action {} -> {}", a[0], b[0]));
            }
            env.step(&a).map_err(|e| e.to_string())?;
            if env.is_done() {
                break;
            }
            let f = env.frame();
            obs = f.observations;
            avail = f.avail_actions;
        }
    }
    Ok(format!("{trials} perturbed trials, 0 violations"))
}

fn brute_force_advantages(r: &[f64], v: &[f64], c: &[f64], gamma: f64) -> Vec<f64> {
    let t = r.len();
    (0..t)
        .map(|k| {
            let mut ret = 0.0;
            let mut disc = 1.0;
            for j in k..t {
                ret += disc * r[j];
                disc *= gamma * c[j];
            }
            ret + disc * v[t] - v[k]
        })
        .collect()
}

fn gae_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gamma = 0.99;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (a1, _) = gae(&r, &v, &c, gamma, 1.0).map_err(|e| e.to_string())?;
        for (x, y) in a1.iter().zip(brute_force_advantages(&r, &v, &c, gamma)) {
            worst = worst.max((x - y).abs());
        }
        let (a0, _) = gae(&r, &v, &c, gamma, 0.0).map_err(|e| e.to_string())?;
        for k in 0..5 {
            let td = r[k] + gamma * c[k] * v[k + 1] - v[k];
            if a0[k] != td {
                return Err(format!("λ=0 advantage {} differs from TD residual {td}", a0[k]));
            }
        }
    }
    if worst < 1e-10 {
        Ok(format!("100 sequences, λ=1 max error {worst:.1e}, λ=0 exact"))
    } else {
        Err(format!("λ=1 advantages off by {worst:.3e}"))
    }
}

fn imagination_isolation() -> Outcome {
    let cfg = RunConfig {
        env: "corridor_meet".into(),
        window: 6,
        horizon: 3,
        model_batch: 2,
        policy_batch: 2,
        ppo_epochs: 1,
        agent_categoricals: 3,
        agent_classes: 3,
        global_categoricals: 3,
        global_classes: 3,
        agent_hidden: 8,
        global_hidden: 8,
        mlp_width: 8,
        policy_width: 8,
        ..RunConfig::default()
    };
    let mut t = Trainer::new(cfg).map_err(|e| e.to_string())?;
    t.collect_episode().map_err(|e| e.to_string())?;
    t.train_model_phase(1).map_err(|e| e.to_string())?;
    let calls = t.env.calls();
    let model = t.model.params.checksum();
    t.train_policy_phase(3).map_err(|e| e.to_string())?;
    if t.env.calls() != calls {
        return Err(format!("environment calls changed by {}", t.env.calls() - calls));
    }
    if t.model.params.checksum() != model {
        return Err("model parameters changed".into());
    }
    Ok("3 policy rounds, 0 environment calls, model unchanged".into())
}

fn masked_actions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let actor = Actor::new(4, 3, 8, 1, Activation::Relu, &mut rng);
    for _ in 0..200 {
        let x = Tensor::new(vec![1, 4], (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let mut avail = vec![0.0; 3];
        avail[rng.gen_range(0..3)] = 1.0;
        avail[rng.gen_range(0..3)] = 1.0;
        let p = actor.probs_on(&x, &Tensor::new(vec![1, 3], avail.clone()));
        if p.data().iter().zip(&avail).any(|(p, a)| *a == 0.0 && *p != 0.0) {
            return Err(format!("masked action with probability {:?}", p.data()));
        }
    }
    Ok("200 random masks, masked probability exactly 0".into())
}

/// Run every check; with `fault`, the corresponding check is sabotaged.
pub fn selftest(fault: Option<Fault>) -> SelftestReport {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient check", Box::new(gradient_check)),
        ("kl identities", Box::new(move || kl_identities(fault))),
        ("elbo decomposition", Box::new(elbo_identities)),
        ("decentralized execution", Box::new(decentralized_execution)),
        ("gae oracle", Box::new(gae_oracle)),
        ("imagination isolation", Box::new(imagination_isolation)),
        ("masked actions", Box::new(masked_actions)),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let out = f();
            let seconds = t.elapsed().as_secs_f64();
            let passed = out.is_ok();
            CheckResult { name, passed, detail: out.unwrap_or_else(|e| e), seconds }
        })
        .collect();
    SelftestReport { checks }
}
