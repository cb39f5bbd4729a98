use super::*;

pub(crate) fn small(env: &str, mode: AblationMode) -> RunConfig {
    RunConfig {
        env: env.into(),
        mode,
        episodes: 4,
        warmup: 1,
        window: 8,
        horizon: 3,
        model_steps: 2,
        policy_steps: 1,
        model_batch: 4,
        policy_batch: 3,
        ppo_epochs: 1,
        agent_categoricals: 4,
        agent_classes: 4,
        global_categoricals: 4,
        global_classes: 4,
        agent_hidden: 16,
        global_hidden: 16,
        mlp_width: 16,
        mlp_depth: 1,
        policy_width: 16,
        policy_depth: 1,
        eval_every: 2,
        eval_episodes: 2,
        ..RunConfig::default()
    }
}

#[test]
fn collection_accounts_for_every_step() {
    let mut t = Trainer::new(small("corridor_meet", AblationMode::Full)).unwrap();
    let mut total = 0;
    for _ in 0..3 {
        let before = t.buffer.total_steps();
        let s = t.collect_episode().unwrap();
        assert_eq!(t.buffer.total_steps(), before + s.steps);
        total += s.steps;
    }
    assert_eq!(t.env_steps(), total);
    assert_eq!(t.env.calls() as usize, total + 3);
}

#[test]
fn uniform_policy_matches_one_third_of_the_time() {
    let mut t = Trainer::new(small("sync_matrix", AblationMode::Full)).unwrap();
    t.actor.net.zero_output(&mut t.actor.params);
    let mut reward = 0.0;
    while t.env_steps() < 10_000 {
        reward += t.collect_episode().unwrap().total_reward;
    }
    let mean = reward / t.env_steps() as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.02, "{mean}");
}

#[test]
fn identical_seeds_give_identical_episodes() {
    let episodes = || {
        let mut t = Trainer::new(small("corridor_meet", AblationMode::Full)).unwrap();
        (0..3).for_each(|_| {
            t.collect_episode().unwrap();
        });
        t.buffer.episodes().cloned().collect::<Vec<_>>()
    };
    assert_eq!(episodes(), episodes());
}

#[test]
fn model_phase_leaves_the_policy_alone() {
    let mut t = Trainer::new(small("corridor_meet", AblationMode::Full)).unwrap();
    t.collect_episode().unwrap();
    let model = t.model.params.checksum();
    assert!(t.train_model_phase(0).unwrap().is_empty());
    assert_eq!(t.model.params.checksum(), model);

    let policy = (t.actor.params.checksum(), t.critic.params.checksum());
    assert_eq!(t.train_model_phase(3).unwrap().len(), 3);
    assert_eq!((t.actor.params.checksum(), t.critic.params.checksum()), policy);
    assert_ne!(t.model.params.checksum(), model);
}

#[test]
fn policy_phase_is_pure_imagination() {
    for mode in AblationMode::ALL {
        let mut t = Trainer::new(small("corridor_meet", mode)).unwrap();
        t.collect_episode().unwrap();
        t.collect_episode().unwrap();
        t.train_model_phase(1).unwrap();
        let model = t.model.params.checksum();
        let calls = t.env.calls();
        let actor = t.actor.params.checksum();
        let stats = t.train_policy_phase(2).unwrap();
        assert_eq!(stats.len(), 2);
        assert_eq!(t.env.calls(), calls);
        assert_eq!(t.model.params.checksum(), model);
        assert_eq!(t.start_windows(), 2 * t.config.policy_batch);
        assert_ne!(t.actor.params.checksum(), actor);
    }
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small("corridor_meet", AblationMode::SingleGlobal);
    let sa = run(&cfg, Some(a.path())).unwrap();
    let sb = run(&cfg, Some(b.path())).unwrap();
    assert_eq!(sa, sb);
    let ca = std::fs::read(a.path().join("metrics.csv")).unwrap();
    let cb = std::fs::read(b.path().join("metrics.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().count(), 2 + sa.episodes);
    let steps: Vec<f64> = text.lines().skip(2).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.path().join("checkpoint.bin").exists());
    assert_eq!(sa.evals.len(), 2);
}

#[test]
fn no_global_checkpoint_has_no_global_arrays() {
    let t = Trainer::new(small("corridor_meet", AblationMode::NoGlobal)).unwrap();
    let ckpt = t.checkpoint();
    assert!(ckpt.arrays.iter().all(|(name, _)| !name.contains("global")));
    let full = Trainer::new(small("corridor_meet", AblationMode::Full)).unwrap().checkpoint();
    assert!(full.arrays.iter().any(|(name, _)| name.contains("global")));
}

#[test]
fn checkpoint_restores_evaluation() {
    let cfg = small("corridor_meet", AblationMode::Full);
    let dir = tempfile::tempdir().unwrap();
    let s = run(&cfg, Some(dir.path())).unwrap();
    let mut t = Trainer::new(cfg.clone()).unwrap();
    t.restore(&Checkpoint::load(dir.path().join("checkpoint.bin")).unwrap()).unwrap();
    assert_eq!(t.evaluate(cfg.eval_episodes).unwrap(), s.final_eval);

    let mut other = Trainer::new(RunConfig { agent_hidden: 8, ..cfg }).unwrap();
    assert!(other.restore(&Checkpoint::load(dir.path().join("checkpoint.bin")).unwrap()).is_err());
}

#[test]
fn invalid_config_does_no_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = RunConfig { horizon: 0, ..small("corridor_meet", AblationMode::Full) };
    assert!(run(&cfg, Some(&out)).is_err());
    assert!(!out.exists());
}

#[test]
fn step_budget_stops_the_run() {
    let cfg = RunConfig { episodes: 1000, max_env_steps: 60, ..small("sync_matrix", AblationMode::Full) };
    let s = run(&cfg, None).unwrap();
    assert_eq!(s.env_steps, 60);
    assert_eq!(s.episodes, 6);
}
