//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! The trend check reuses finished runs from `$SOFTARM_TREND_DIR` (default
//! `<workspace>/runs/trend`, as written by `scripts/trend_runs.sh`) when their
//! fingerprint matches the desk profile, and trains missing runs in place.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softarm::checkpoint::Checkpoint;
use softarm::config::{check_scenario_supported, ResolvedRun, RunConfig, RunOverrides};
use softarm::env::{EnvConfig, JointAction, ReachEnv, ScenarioKind, ScenarioSpec, SECTION_COUNTS};
use softarm::eval::{run_episode, run_suite, EpisodeMetrics, PolicyController, SuiteEntry, SuiteSpec};
use softarm::policy::{ActionMode, Architecture, CommNet, NetworkShape, Policy, PEER_TUPLE_DIM};
use softarm::report;
use softarm::rod::{forcing_nodes, RodModel, RodParams, Vec3};
use softarm::trainer::{self, compute_gae, ppo_loss, ppo_loss_and_grad, LossCoefficients, Minibatch, StreamBatch};

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn physics() -> Check {
    let started = Instant::now();
    let (dt, substeps) = (2e-3, 100);
    let model = RodModel::new(RodParams::default()).map_err(|e| e.to_string())?;
    let start = model.init_straight_rod(Vec3::zeros(), Vec3::z()).unwrap();
    let n_nodes = start.n_nodes();
    let zero = vec![Vec3::zeros(); n_nodes];

    let mut s = start.clone();
    for _ in 0..1000 {
        model.step_physics(&mut s, &zero, dt, substeps).unwrap();
    }
    let drift = s
        .node_positions
        .iter()
        .zip(&start.node_positions)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    ensure!(drift < 1e-8, "rest drift {drift:e} m");

    let free = RodModel::new(RodParams {
        clamp_base: false,
        damping_coefficient: 1e-9,
        ..RodParams::default()
    })
    .unwrap();
    let mut s = start.clone();
    let f = Vec3::new(0.7, -1.1, 2.3);
    let v0 = free.centre_of_mass_velocity(&s);
    free.step_physics(&mut s, &vec![f; n_nodes], dt, substeps).unwrap();
    let accel = (free.centre_of_mass_velocity(&s) - v0) / dt;
    let expected = f * n_nodes as f64 / free.total_mass();
    let newton_err = (accel - expected).norm() / expected.norm();
    ensure!(newton_err <= 0.01, "F/m acceleration off by {:.3}%", 100.0 * newton_err);

    let mut s = start.clone();
    let mut push = zero.clone();
    for &k in &forcing_nodes(3, model.params().n_elements).unwrap() {
        push[k] = Vec3::new(15.0, -6.0, 0.0);
    }
    for _ in 0..150 {
        model.step_physics(&mut s, &push, dt, substeps).unwrap();
    }
    let mut e = model.mechanical_energy(&s);
    let e0 = e;
    for step in 0..1000 {
        model.step_physics(&mut s, &zero, dt, substeps).unwrap();
        let next = model.mechanical_energy(&s);
        ensure!(next <= e * (1.0 + 1e-9), "energy rose at step {step}: {e} -> {next}");
        e = next;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "suite took {secs:.1} s");
    Ok(format!(
        "drift {drift:.1e} m, F/m error {:.2e}, energy {e0:.3e} -> {e:.3e} J, {secs:.1} s",
        newton_err
    ))
}

fn contract() -> Check {
    let rod = RodParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    for n in SECTION_COUNTS {
        let cfg = EnvConfig::new(n);
        let mut env = ReachEnv::new(rod.clone(), cfg.clone()).unwrap();
        let obs = env.reset(n as u64);
        ensure!(
            obs.per_agent.iter().all(|o| o.len() == 6 * n + 4) && obs.global_state.len() == 6 * n + 3,
            "observation dims wrong for n = {n}"
        );
        let g = cfg.target_vec();
        let nodes = |e: &ReachEnv| -> Vec<Vec3> {
            e.forcing_node_indices()
                .iter()
                .map(|&k| e.rod_state().node_positions[k])
                .collect()
        };
        let d0 = obs.tip_distance;
        let mut progress = 0.0;
        let mut last;
        loop {
            let u: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-20.0..20.0)).collect();
            let prev = nodes(&env);
            let out = env.step(&JointAction::from_flat(&u)).unwrap();
            let next = nodes(&env);
            let global = (prev[n - 1] - g).norm() - (next[n - 1] - g).norm();
            let costs: Vec<f64> = u
                .chunks(3)
                .map(|c| {
                    Vec3::new(c[0], c[1], c[2])
                        .map(|x| x.clamp(-cfg.f_max, cfg.f_max))
                        .norm()
                        / cfg.f_max
                })
                .collect();
            let central = cfg.lambda_d * global - cfg.lambda_a * costs.iter().sum::<f64>() / n as f64;
            worst = worst.max((out.reward_centralised - central).abs());
            for i in 0..n {
                let local = (prev[i] - g).norm() - (next[i] - g).norm();
                let r = 0.5 * cfg.lambda_d * (global + local) - cfg.lambda_a * costs[i];
                worst = worst.max((out.rewards_distributed[i] - r).abs());
                worst = worst.max((out.info.effort_costs[i] - costs[i]).abs());
            }
            worst = worst.max((out.info.global_progress - global).abs());
            progress += out.info.global_progress;
            last = out.info.tip_distance;
            if out.done {
                break;
            }
        }
        ensure!(worst <= 1e-12, "reward identity error {worst:e} at n = {n}");
        let tele = (progress - (d0 - last)).abs();
        ensure!(tele <= 1e-9, "telescoping error {tele:e} at n = {n}");
    }
    let mut env = ReachEnv::new(rod, EnvConfig::new(2)).unwrap();
    env.reset(0);
    let out = env
        .step(&JointAction {
            per_agent_forces: vec![Vec3::new(0.0, 0.0, 15.0), Vec3::zeros()],
        })
        .unwrap();
    ensure!(
        out.info.effort_costs[0] == 1.0,
        "15 N cost = {}",
        out.info.effort_costs[0]
    );
    Ok(format!("six n values, full episodes, worst reward error {worst:.1e}"))
}

fn brute_gae(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let len = r.len();
    let delta = |t: usize| {
        let next = if t + 1 < len { v[t + 1] } else { boot };
        r[t] + if d[t] { 0.0 } else { gamma * next } - v[t]
    };
    (0..len)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..len {
                sum += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if d[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn toy_shape() -> NetworkShape {
    NetworkShape {
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        encoder_hidden: vec![4],
        aggregator_hidden: vec![4],
    }
}

fn fd_gradient_error(arch: Architecture, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaling = softarm::policy::InputScaling {
        length: 1.0,
        f_max: 15.0,
    };
    let mut policy = Policy::new(arch, n, scaling, toy_shape(), seed).unwrap();
    for a in &mut policy.agents {
        a.actor.log_std.mapv_inplace(|_| rng.random_range(-0.5..1.5));
    }
    let rows = 10;
    let mut uniform =
        |r: usize, c: usize, s: f64| ndarray::Array2::from_shape_fn((r, c), |_| s * rng.random_range(-1.0..1.0));
    let streams: Vec<StreamBatch> = (0..policy.n_streams())
        .map(|k| {
            let agent = &policy.agents[k];
            let obs_dim = agent.actor.input_dim() - agent.comm.as_ref().map_or(0, |_| softarm::policy::MESSAGE_DIM);
            let obs = uniform(rows, obs_dim, 1.0);
            let peers = agent
                .comm
                .as_ref()
                .map(|_| uniform(rows * (n - 1), PEER_TUPLE_DIM, 1.0));
            let actions = uniform(rows, agent.actor.output_dim(), 12.0);
            let cache = policy
                .stream_forward(k, obs.view(), peers.as_ref().map(|p| p.view()))
                .unwrap();
            let logp = agent.actor.log_probs(cache.actor(), actions.view());
            StreamBatch {
                old_log_probs: &logp + &uniform(rows, 1, 0.4).column(0),
                advantages: uniform(rows, 1, 1.5).column(0).to_owned(),
                obs,
                peers,
                actions,
            }
        })
        .collect();
    let mb = Minibatch {
        streams,
        states: uniform(rows, 6 * n + 3, 1.0),
        returns: uniform(rows, 1, 2.0).column(0).to_owned(),
    };
    let coef = LossCoefficients {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    use softarm::nn::Parameters;
    let (_, grad) = ppo_loss_and_grad(&policy, &mb, coef).unwrap();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (t, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let mut up = policy.clone();
            up.tensors_mut()[t][i] += h;
            let mut down = policy.clone();
            down.tensors_mut()[t][i] -= h;
            let fd = (ppo_loss(&up, &mb, coef).unwrap().total - ppo_loss(&down, &mb, coef).unwrap().total) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

fn tiny_run(arch: Architecture, n: usize, updates: usize, num_envs: usize) -> ResolvedRun {
    let mut run = RunConfig::default()
        .resolve(&RunOverrides {
            architecture: Some(arch),
            n_sections: Some(n),
            seed: Some(3),
            ..Default::default()
        })
        .unwrap();
    run.env.horizon = 60;
    run.train.updates = updates;
    run.train.num_envs = num_envs;
    run.train.steps_per_env = 200;
    run.train.minibatch_size = 100;
    run.train.eval_every = updates;
    run.train.eval_episodes = 2;
    run.train.network = NetworkShape {
        actor_hidden: vec![32, 32],
        critic_hidden: vec![32, 32],
        encoder_hidden: vec![16],
        aggregator_hidden: vec![16],
    };
    run
}

fn numerics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut gae_err: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..12);
        let r: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d: Vec<bool> = (0..len).map(|_| rng.random_bool(0.2)).collect();
        let (boot, gamma, lambda) = (
            rng.random_range(-3.0..3.0),
            rng.random_range(0.5..1.0),
            rng.random_range(0.0..=1.0),
        );
        let (a, _) = compute_gae(&r, &v, &d, boot, gamma, lambda).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(brute_gae(&r, &v, &d, boot, gamma, lambda)) {
            gae_err = gae_err.max((x - y).abs());
        }
    }
    ensure!(gae_err <= 1e-9, "GAE differs from nested sums by {gae_err:e}");

    let (r, v, d) = ([0.5, -1.0, 2.0], [0.1, 0.4, -0.3], [false, false, true]);
    let (a0, _) = compute_gae(&r, &v, &d, 7.0, 0.9, 0.0).unwrap();
    let td = [0.5 + 0.9 * 0.4 - 0.1, -1.0 + 0.9 * -0.3 - 0.4, 2.0 + 0.3];
    ensure!(a0 == td, "λ = 0 is not the TD residual: {a0:?}");
    let (a1, _) = compute_gae(&r, &v, &d, 7.0, 0.9, 1.0).unwrap();
    let mc = [0.5 - 0.9 + 0.81 * 2.0 - 0.1, -1.0 + 0.9 * 2.0 - 0.4, 2.0 + 0.3];
    let mc_err = a1.iter().zip(mc).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure!(mc_err <= 1e-12, "λ = 1 is not the Monte Carlo return: {a1:?}");

    let fd =
        fd_gradient_error(Architecture::Centralised, 2, 11).max(fd_gradient_error(Architecture::Distributed, 3, 12));
    ensure!(fd < 1e-4, "worst gradient relative error {fd:e}");

    let dir = tempfile::tempdir().unwrap();
    let run = tiny_run(Architecture::Distributed, 3, 10, 2);
    let summary = trainer::train(&run, dir.path(), |_| {}).map_err(|e| e.to_string())?;
    let max_norm = summary.rows.iter().map(|r| r.clipped_grad_norm).fold(0.0, f64::max);
    ensure!(summary.rows.len() == 10, "expected 10 updates");
    ensure!(max_norm <= 0.5 + 1e-9, "post-clip norm {max_norm}");
    Ok(format!(
        "GAE error {gae_err:.1e}, gradient error {fd:.1e}, max post-clip norm {max_norm:.6}"
    ))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn communication() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = CommNet::new(&NetworkShape::default(), &mut rng);
    let mut checked = 0;
    for n in [3usize, 6] {
        let peers: Vec<[f64; PEER_TUPLE_DIM]> = (0..n - 1)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect();
        let base: Vec<u64> = net
            .encode_and_aggregate(&peers)
            .unwrap()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        for perm in permutations(n - 1) {
            let shuffled: Vec<_> = perm.iter().map(|&i| peers[i]).collect();
            let c: Vec<u64> = net
                .encode_and_aggregate(&shuffled)
                .unwrap()
                .iter()
                .map(|v| v.to_bits())
                .collect();
            ensure!(c == base, "context changed under permutation {perm:?} at n = {n}");
            checked += 1;
        }
    }
    let tuple: [f64; PEER_TUPLE_DIM] = std::array::from_fn(|i| 0.3 * i as f64 - 1.0);
    let single = net
        .aggregator
        .forward_one(&net.encoder.forward_one(&tuple).unwrap())
        .unwrap();
    let mut worst: f64 = 0.0;
    for k in 1..12 {
        let many = net.encode_and_aggregate(&vec![tuple; k]).unwrap();
        worst = many
            .iter()
            .zip(&single)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    ensure!(worst <= 1e-12, "identical peers deviate by {worst:e}");
    Ok(format!(
        "{checked} permutations bitwise equal, identical-peer error {worst:.1e}"
    ))
}

fn determinism() -> Check {
    let run = tiny_run(Architecture::Distributed, 2, 3, 1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = trainer::train(&run, a.path(), |_| {}).map_err(|e| e.to_string())?;
    trainer::train(&run, b.path(), |_| {}).map_err(|e| e.to_string())?;
    for f in [trainer::TRAIN_LOG, trainer::EVAL_LOG] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        ensure!(x == y, "{f} differs between identical runs");
    }

    let ck = Checkpoint::load(&sa.final_checkpoint).map_err(|e| e.to_string())?;
    let policy = ck.to_policy().map_err(|e| e.to_string())?;
    let entries = [SuiteEntry {
        policy: &policy,
        env: ck.env.clone(),
        rod: ck.rod.clone(),
    }];
    let spec = SuiteSpec {
        scenarios: vec![ScenarioKind::Nominal, ScenarioKind::Disturbance],
        episodes: 4,
        base_seed: 9,
        mode: ActionMode::Stochastic,
        disturbance: None,
        failure: None,
    };
    let first = run_suite(&entries, &spec, "x").map_err(|e| e.to_string())?;
    let second = run_suite(&entries, &spec, "x").map_err(|e| e.to_string())?;
    let csv = |rows: &[EpisodeMetrics]| {
        let p = a.path().join("episodes.csv");
        report::write_episodes_csv(&p, "x", rows).unwrap();
        std::fs::read(&p).unwrap()
    };
    ensure!(
        csv(&first.episodes) == csv(&second.episodes),
        "episode CSV differs on re-run"
    );

    for row in &first.episodes {
        let env = ck
            .env
            .clone()
            .with_scenario(softarm::eval::scenario_for(row.scenario, &spec, &ck.rod));
        let controller = PolicyController {
            policy: &policy,
            mode: spec.mode,
        };
        let trace = run_episode(&controller, &ck.rod, &env, row.seed, false).map_err(|e| e.to_string())?;
        let again = EpisodeMetrics::from_trace(
            &trace,
            row.episode_id,
            row.seed,
            row.scenario,
            ck.n_sections,
            ck.architecture,
        );
        ensure!(&again == row, "replay of episode {} differs", row.episode_id);
    }
    Ok(format!(
        "logs, {}-row CSV and every replay identical",
        first.episodes.len()
    ))
}

const TREND_SEEDS: [u64; 3] = [0, 1, 2];

fn trend_policy(dir: &Path, arch: Architecture, n: usize, seed: u64) -> Result<Policy, String> {
    let cfg = RunConfig::load(&workspace().join("configs/desk.toml")).map_err(|e| e.to_string())?;
    let run = cfg
        .resolve(&RunOverrides {
            architecture: Some(arch),
            n_sections: Some(n),
            seed: Some(seed),
            profile: Some(softarm::config::Profile::Desk),
        })
        .map_err(|e| e.to_string())?;
    let run_dir = dir.join(format!("{arch}_n{n}_seed{seed}"));
    let final_path = run_dir.join(trainer::CHECKPOINT_DIR).join(trainer::FINAL_CHECKPOINT);
    if let Ok(ck) = Checkpoint::load(&final_path) {
        if ck.fingerprint == run.fingerprint() {
            return ck.to_policy().map_err(|e| e.to_string());
        }
    }
    eprintln!("training {arch} n={n} seed={seed} into {}", run_dir.display());
    let summary = trainer::train(&run, &run_dir, |_| {}).map_err(|e| e.to_string())?;
    Ok(summary.policy)
}

fn nominal_success(policies: &[(Architecture, Policy)]) -> Result<Vec<softarm::eval::AggregateReport>, String> {
    let rod = RodParams::default();
    let entries: Vec<SuiteEntry> = policies
        .iter()
        .map(|(_, p)| SuiteEntry {
            policy: p,
            env: EnvConfig::for_rod(p.n_sections, &rod),
            rod: rod.clone(),
        })
        .collect();
    let spec = SuiteSpec {
        scenarios: vec![ScenarioKind::Nominal],
        episodes: 100,
        base_seed: 0,
        mode: ActionMode::Deterministic,
        disturbance: None,
        failure: None,
    };
    Ok(run_suite(&entries, &spec, "trend")
        .map_err(|e| e.to_string())?
        .aggregates)
}

fn trend() -> Check {
    let dir = std::env::var_os("SOFTARM_TREND_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("runs/trend"));
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut saturated = None;
    let mut n2_wins = 0;
    for n in [6usize, 2] {
        for seed in TREND_SEEDS {
            let pair = [Architecture::Distributed, Architecture::Centralised]
                .into_iter()
                .map(|a| trend_policy(&dir, a, n, seed).map(|p| (a, p)))
                .collect::<Result<Vec<_>, _>>()?;
            let reports = nominal_success(&pair)?;
            let rate = |a: Architecture| reports.iter().find(|r| r.architecture == a).unwrap().success_rate;
            let (dist, cent) = (rate(Architecture::Distributed), rate(Architecture::Centralised));
            lines.push(format!(
                "n={n} seed={seed}: distributed {dist:.2}% centralised {cent:.2}%"
            ));
            if n == 6 && dist - cent < 30.0 {
                failures.push(format!("n=6 seed {seed} gap {:.2} pp < 30", dist - cent));
            }
            if n == 2 && cent >= dist {
                n2_wins += 1;
            }
            if saturated.is_none() {
                saturated = reports.into_iter().find(|r| r.successes == 0);
            }
        }
    }
    if n2_wins < 2 {
        failures.push(format!("n=2 centralised ≥ distributed on {n2_wins}/3 seeds"));
    }
    match saturated {
        Some(r) => {
            let md = report::render_markdown(std::slice::from_ref(&r), "trend");
            if !md.contains("1000.0 ± 0.0") {
                failures.push(format!(
                    "saturated cell reports {:.1} ± {:.1}",
                    r.mean_episode_length, r.std_episode_length
                ));
            }
            lines.push(format!(
                "saturated cell {} n={} reports 1000.0 ± 0.0",
                r.architecture, r.n_sections
            ));
        }
        None => failures.push("no saturating cell to check".into()),
    }
    for l in &lines {
        eprintln!("  {l}");
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn scenarios() -> Check {
    let rod = RodParams::default();
    let window = ScenarioSpec::Disturbance {
        disturbance_step: 300,
        disturbance_force: [-10.0, 0.0, 0.0],
        disturbance_duration: 10,
        disturbance_node: rod.n_elements / 2,
    };
    let mut env = ReachEnv::new(rod.clone(), EnvConfig::new(6).with_scenario(window)).unwrap();
    let mut plain = ReachEnv::new(rod.clone(), EnvConfig::new(6)).unwrap();
    env.reset(0);
    plain.reset(0);
    for t in 0..500 {
        let out = env.step(&JointAction::zeros(6)).unwrap();
        plain.step(&JointAction::zeros(6)).unwrap();
        ensure!(
            out.info.disturbance_active == (300..310).contains(&t),
            "disturbance flag wrong at step {t}"
        );
        if t < 300 {
            ensure!(
                env.rod_state() == plain.rod_state(),
                "trajectory diverged before onset at step {t}"
            );
        }
    }
    ensure!(env.rod_state() != plain.rod_state(), "disturbance had no effect");

    let mut env = ReachEnv::new(
        rod.clone(),
        EnvConfig::new(8).with_scenario(ScenarioSpec::default_failure()),
    )
    .unwrap();
    env.reset(0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..1000 {
        let u: Vec<f64> = (0..24).map(|_| rng.random_range(-15.0..15.0)).collect();
        let out = env.step(&JointAction::from_flat(&u)).unwrap();
        ensure!(
            out.info.applied_forces[4] == Vec3::zeros(),
            "failed agent applied force at step {t}"
        );
        ensure!(
            out.info.effort_costs[4] == 0.0,
            "failed agent charged effort at step {t}"
        );
        ensure!(
            out.observation.per_agent[4][4..7] == [0.0; 3],
            "failed agent's own force observed at step {t}"
        );
        ensure!(
            out.observation.global_state[24 + 12..24 + 15] == [0.0; 3],
            "global state leaks failed force"
        );
        if out.done {
            break;
        }
    }
    for n in SECTION_COUNTS {
        ensure!(
            check_scenario_supported(ScenarioKind::ActuatorFailure, n).is_ok() == (n == 8),
            "scenario 3 gating wrong for n = {n}"
        );
    }
    Ok("disturbance window, failure mask and n = 8 gating hold".into())
}

fn main() {
    let checks: [(&str, fn() -> Check); 7] = [
        ("physics", physics),
        ("contract", contract),
        ("numerics", numerics),
        ("communication", communication),
        ("determinism", determinism),
        ("trend", trend),
        ("scenarios", scenarios),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in checks {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
