//! `softarm`: train, evaluate and replay soft-arm reaching controllers.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use softarm::checkpoint::Checkpoint;
use softarm::config::{fingerprint, Profile, RunConfig, RunOverrides};
use softarm::env::{EnvConfig, ScenarioKind};
use softarm::eval::{self, run_episode, EpisodeMetrics, PolicyController, SuiteEntry, SuiteSpec};
use softarm::policy::{ActionMode, Architecture, Policy};
use softarm::report::{self, Format};
use softarm::rod::RodParams;
use softarm::trainer;
use softarm::Error;

#[derive(Parser, Debug)]
#[command(
    name = "softarm",
    version,
    about = "Soft-arm reaching: centralised PPO vs distributed MAPPO"
)]
struct Cli {
    /// Worker threads for rollouts and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one policy and write logs and checkpoints.
    Train {
        config: PathBuf,
        #[arg(long, value_parser = parse_arch)]
        arch: Architecture,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_profile)]
        profile: Option<Profile>,
        /// Run directory (default: <output_dir>/<arch>_n<N>_seed<S>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints over scenario suites and print the table.
    Eval {
        config: PathBuf,
        #[arg(long = "checkpoint", required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated scenarios (names or 1/2/3); defaults to the config.
        #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
        scenario: Vec<ScenarioKind>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Sample actions instead of taking the mean.
        #[arg(long)]
        stochastic: bool,
        /// Report directory (default: <output_dir>/eval).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one episode and print its metrics row.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_scenario)]
        scenario: ScenarioKind,
        /// Episode seed, as logged in the episodes table.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        episode_id: u64,
        /// Config supplying scenario overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stochastic: bool,
        /// Write the per-step trajectory here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    Architecture::parse(s).map_err(|e| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::parse(s).map_err(|e| e.to_string())
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool configured once");
    }
    let result = match cli.command {
        Command::Train {
            config,
            arch,
            n,
            seed,
            profile,
            out,
        } => cmd_train(&config, arch, n, seed, profile, out),
        Command::Eval {
            config,
            checkpoints,
            scenario,
            episodes,
            base_seed,
            stochastic,
            out,
        } => cmd_eval(&config, &checkpoints, scenario, episodes, base_seed, stochastic, out),
        Command::Replay {
            checkpoint,
            scenario,
            seed,
            episode_id,
            config,
            stochastic,
            dump,
        } => cmd_replay(
            &checkpoint,
            scenario,
            seed,
            episode_id,
            config.as_deref(),
            stochastic,
            dump.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}

fn cmd_train(
    config: &Path,
    arch: Architecture,
    n: usize,
    seed: Option<u64>,
    profile: Option<Profile>,
    out: Option<PathBuf>,
) -> softarm::Result<()> {
    let cfg = RunConfig::load(config)?;
    let run = cfg.resolve(&RunOverrides {
        architecture: Some(arch),
        n_sections: Some(n),
        seed,
        profile,
    })?;
    let dir = out.unwrap_or_else(|| run.io.output_dir.join(format!("{arch}_n{n}_seed{}", run.train.seed)));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    eprintln!(
        "training {arch} n={n} seed={} for {} updates into {}",
        run.train.seed,
        run.train.updates,
        dir.display()
    );
    let summary = trainer::train(&run, &dir, |row| {
        eprintln!(
            "update {:>5}  reward {:>9.5}  entropy {:>7.3}  success {:>5.1}%",
            row.update,
            row.mean_reward,
            row.entropy,
            100.0 * row.rollout_success_rate
        );
    })
    .inspect_err(|e| {
        if !e.is_usage() {
            eprintln!("training aborted; partial logs are in {}", dir.display());
        }
    })?;
    println!("{}", summary.final_checkpoint.display());
    Ok(())
}

fn check_env_matches(ck: &Checkpoint, cfg: &RunConfig, path: &Path) -> softarm::Result<()> {
    if ck.rod != cfg.rod {
        return Err(Error::CheckpointMismatch(format!(
            "{}: rod parameters differ from the config",
            path.display()
        )));
    }
    let mut expected = cfg.env.resolve(ck.n_sections, &cfg.rod);
    let mut stored = ck.env.clone();
    expected.scenario = Default::default();
    stored.scenario = Default::default();
    expected.seed = 0;
    stored.seed = 0;
    if expected != stored {
        return Err(Error::CheckpointMismatch(format!(
            "{}: task constants differ from the config",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_eval(
    config: &Path,
    checkpoints: &[PathBuf],
    scenarios: Vec<ScenarioKind>,
    episodes: Option<usize>,
    base_seed: Option<u64>,
    stochastic: bool,
    out: Option<PathBuf>,
) -> softarm::Result<()> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    let mut eval_cfg = cfg.eval.clone();
    if !scenarios.is_empty() {
        eval_cfg.scenarios = scenarios;
    }
    if let Some(k) = episodes {
        eval_cfg.episodes = k;
    }
    if let Some(s) = base_seed {
        eval_cfg.base_seed = s;
    }
    eval_cfg.stochastic |= stochastic;
    eval_cfg.validate()?;

    let mut loaded: Vec<(Checkpoint, Policy)> = Vec::new();
    let mut cells = BTreeSet::new();
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        let policy = ck.to_policy()?;
        if !cfg.eval.n.contains(&ck.n_sections) {
            return Err(Error::CheckpointMismatch(format!(
                "{}: n = {} is not in the config's eval.n {:?}",
                path.display(),
                ck.n_sections,
                cfg.eval.n
            )));
        }
        check_env_matches(&ck, &cfg, path)?;
        if !cells.insert((ck.architecture, ck.n_sections)) {
            return Err(Error::config(format!(
                "two checkpoints for {} n = {}",
                ck.architecture, ck.n_sections
            )));
        }
        loaded.push((ck, policy));
    }
    let entries: Vec<SuiteEntry> = loaded
        .iter()
        .map(|(ck, p)| SuiteEntry {
            policy: p,
            env: ck.env.clone(),
            rod: ck.rod.clone(),
        })
        .collect();
    let spec = SuiteSpec {
        scenarios: eval_cfg.scenarios.clone(),
        episodes: eval_cfg.episodes,
        base_seed: eval_cfg.base_seed,
        mode: if eval_cfg.stochastic {
            ActionMode::Stochastic
        } else {
            ActionMode::Deterministic
        },
        disturbance: eval_cfg.disturbance.clone(),
        failure: eval_cfg.failure.clone(),
    };
    let ck_prints: Vec<&str> = loaded.iter().map(|(ck, _)| ck.fingerprint.as_str()).collect();
    let print = fingerprint(&(&eval_cfg, &cfg.rod, &cfg.env, &ck_prints));
    let result = eval::run_suite(&entries, &spec, &print)?;

    let dir = out.unwrap_or_else(|| cfg.output_dir().join("eval"));
    report::emit_report(
        &dir,
        &print,
        &result.aggregates,
        &result.episodes,
        &[Format::Csv, Format::Json, Format::Markdown],
    )?;
    print!("{}", report::render_markdown(&result.aggregates, &print));
    Ok(())
}

fn cmd_replay(
    checkpoint: &Path,
    scenario: ScenarioKind,
    seed: u64,
    episode_id: u64,
    config: Option<&Path>,
    stochastic: bool,
    dump: Option<&Path>,
) -> softarm::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let policy = ck.to_policy()?;
    softarm::config::check_scenario_supported(scenario, ck.n_sections)?;
    let (eval_cfg, rod): (_, RodParams) = match config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            check_env_matches(&ck, &cfg, checkpoint)?;
            (cfg.eval, cfg.rod)
        }
        None => (Default::default(), ck.rod.clone()),
    };
    let spec = SuiteSpec {
        scenarios: vec![scenario],
        episodes: 1,
        base_seed: 0,
        mode: if stochastic {
            ActionMode::Stochastic
        } else {
            ActionMode::Deterministic
        },
        disturbance: eval_cfg.disturbance,
        failure: eval_cfg.failure,
    };
    let env: EnvConfig = ck.env.clone().with_scenario(eval::scenario_for(scenario, &spec, &rod));
    let controller = PolicyController {
        policy: &policy,
        mode: spec.mode,
    };
    let trace = run_episode(&controller, &rod, &env, seed, dump.is_some())?;
    let row = EpisodeMetrics::from_trace(&trace, episode_id, seed, scenario, ck.n_sections, ck.architecture);
    if let (Some(path), Some(rows)) = (dump, trace.trajectory.as_ref()) {
        report::write_trajectory_csv(path, &ck.fingerprint, rows)?;
    }
    let mut stdout = std::io::stdout();
    stdout
        .write_all(report::episodes_csv_string(&[row])?.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| Error::io("<stdout>", e))
}
