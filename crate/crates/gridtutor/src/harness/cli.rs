//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration problems (bad flags, bad config
//! files, bad checkpoints), 3 transport failures talking to an LLM
//! endpoint, 4 numeric failures during training, 1 anything else.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::gridworld::{
    generate, observe, render, step, test_seeds, write_seed_file, ExplorationMemory, TaskKind,
};
use crate::options::execute_option;
use crate::student::{encode, sample_action, CheckpointError, PolicyParams};
use crate::training::{train, AnnealSchedule, PPOConfig, TrainConfig};

use super::{
    evaluate_policy, run_experiment, teacher_stats, DecisionClassification, ExperimentConfig,
    TeacherSpec,
};

/// Marks an error as a configuration problem for exit-code purposes.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config_err(err: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(ConfigError(err.to_string()))
}

#[derive(Parser)]
#[command(name = "gridtutor", about = "Teacher-guided RL on DoorKey gridworlds", version)]
struct Cli {
    /// TOML file with [ppo], [schedule] and [teacher] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// log filter, e.g. info or gridtutor=debug
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a student policy with an annealed teacher
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out seeds
    Eval(EvalArgs),
    /// Classify a teacher's decisions against the oracle
    TeacherStats(TeacherStatsArgs),
    /// Play one episode and print text frames
    Rollout(RolloutArgs),
    /// Run the full method comparison from a config file
    Experiment(ExperimentArgs),
    /// Write a held-out seed list to a file
    Seeds(SeedsArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 0)]
    run_seed: u64,
    #[arg(long, default_value_t = 4000)]
    iterations: u32,
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
    /// oracle | flawed:<profile>[:naive] | llm
    #[arg(long, default_value = "oracle")]
    teacher: String,
    #[arg(long)]
    resume: bool,
    #[arg(long, default_value_t = 200)]
    checkpoint_every: u32,
    /// stop once rolling training success reaches this rate
    #[arg(long)]
    early_stop: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    task: String,
    /// how many held-out seeds to play
    #[arg(long, default_value_t = 1000)]
    num_seeds: usize,
    /// directory for metrics.json and records.jsonl
    #[arg(long)]
    out: Option<PathBuf>,
    /// sample actions with this seed instead of greedy argmax
    #[arg(long)]
    stochastic: Option<u64>,
}

#[derive(Args)]
struct TeacherStatsArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "oracle")]
    teacher: String,
    #[arg(long, default_value_t = 10_000)]
    decisions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// oracle | random | path to a student checkpoint
    #[arg(long, default_value = "oracle")]
    policy: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file describing the experiment
    #[arg(long)]
    experiment: PathBuf,
    /// override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedsArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    ppo: PPOConfig,
    schedule: AnnealSchedule,
    teacher: Option<TeacherSpec>,
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let raw = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("read {}: {e}", path.display())))?;
    toml::from_str(&raw).map_err(|e| config_err(format!("parse {}: {e}", path.display())))
}

fn parse_task(s: &str) -> Result<TaskKind> {
    s.parse::<TaskKind>().map_err(config_err)
}

fn parse_teacher(s: &str) -> Result<TeacherSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts[0] {
        "oracle" => Ok(TeacherSpec::Oracle),
        "flawed" => {
            if parts.len() < 2 {
                return Err(config_err("flawed teacher needs a profile, e.g. flawed:chatglm_130b"));
            }
            Ok(TeacherSpec::Flawed {
                profile: parts[1].to_string(),
                lava_aware: parts.get(2) != Some(&"naive"),
                seed: 0,
            })
        }
        "llm" => Ok(TeacherSpec::Llm { config: Default::default(), transcript: None }),
        other => Err(config_err(format!("unknown teacher '{other}'"))),
    }
}

pub fn cli_main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp_millis()
        .init();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// Walks the error chain to pick the documented exit category.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<CheckpointError>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
        {
            return 2;
        }
        if cause.downcast_ref::<reqwest::Error>().is_some() {
            return 3;
        }
    }
    if format!("{err:#}").contains("non-finite") {
        return 4;
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let file_cfg = load_file_config(cli.config.as_ref())?;
    match cli.command {
        Command::Train(args) => cmd_train(args, file_cfg),
        Command::Eval(args) => cmd_eval(args),
        Command::TeacherStats(args) => cmd_teacher_stats(args),
        Command::Rollout(args) => cmd_rollout(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Seeds(args) => cmd_seeds(args),
    }
}

fn cmd_train(args: TrainArgs, file_cfg: FileConfig) -> Result<()> {
    let task = parse_task(&args.task)?;
    let spec = match file_cfg.teacher {
        Some(spec) => spec,
        None => parse_teacher(&args.teacher)?,
    };
    file_cfg.ppo.validate().map_err(config_err)?;
    let teacher = spec.build(args.run_seed)?;
    let cfg = TrainConfig {
        task,
        run_seed: args.run_seed,
        iterations: args.iterations,
        checkpoint_every: args.checkpoint_every,
        out_dir: args.out,
        resume: args.resume,
        early_stop_success: args.early_stop,
        early_stop_window: 25,
    };
    let summary = train(&cfg, &teacher, &file_cfg.ppo, &file_cfg.schedule)?;
    println!(
        "trained {} iterations (final {}), last success rate {:.3}, {} teacher queries",
        summary.iterations_run,
        summary.final_iter,
        summary.last_success_rate,
        summary.total_teacher_queries
    );
    println!("params: {}", summary.params_path.display());
    println!("metrics: {}", summary.metrics_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    if args.num_seeds == 0 {
        return Err(config_err("num_seeds must be positive"));
    }
    let params = PolicyParams::load(&args.checkpoint)
        .with_context(|| format!("load {}", args.checkpoint.display()))?;
    let seeds: Vec<u64> = test_seeds(task).into_iter().take(args.num_seeds).collect();
    let metrics = evaluate_policy(&params, task, &seeds, args.stochastic)?;
    println!(
        "{} seeds: success rate {:.3}, mean return {:.4}, mean timesteps {:.2}",
        metrics.records.len(),
        metrics.success_rate,
        metrics.mean_return,
        metrics.mean_timesteps
    );
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
        let mut lines = String::new();
        for record in &metrics.records {
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
        std::fs::write(dir.join("records.jsonl"), lines)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_teacher_stats(args: TeacherStatsArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    if args.decisions == 0 {
        return Err(config_err("decisions must be positive"));
    }
    let mut teacher = parse_teacher(&args.teacher)?.build(args.seed)?;
    let stats = teacher_stats(&mut teacher, task, args.decisions, args.seed)?;
    println!("{} decisions on {}:", stats.total, task.name());
    for class in DecisionClassification::ALL {
        let i = class.index();
        match (stats.expected, stats.sigma) {
            (Some(exp), Some(sig)) => println!(
                "  {:>12}: {:.4} (expected {:.4} ± {:.4})",
                class.name(),
                stats.frequencies[i],
                exp[i],
                3.0 * sig[i]
            ),
            _ => println!("  {:>12}: {:.4}", class.name(), stats.frequencies[i]),
        }
    }
    if let Some(path) = args.out {
        std::fs::write(&path, serde_json::to_string_pretty(&stats)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_rollout(args: RolloutArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    let mut state = generate(task, args.seed).map_err(config_err)?;
    let mut memory = ExplorationMemory::new(&state);
    memory.update(&state);
    println!("{}", render(&state));

    match args.policy.as_str() {
        "oracle" => {
            let mut teacher = crate::teacher::Teacher::Oracle;
            loop {
                let option = teacher.decide(&state, &memory);
                println!("option: {option}");
                let (next, result) = execute_option(&state, &mut memory, option, true);
                state = next;
                println!("{}", render(&state));
                if result.done {
                    println!("outcome: {:?}, steps {}, return {:.4}", result.outcome, state.step_count, result.reward);
                    break;
                }
            }
        }
        policy => {
            let params = if policy == "random" {
                None
            } else {
                Some(
                    PolicyParams::load(std::path::Path::new(policy))
                        .with_context(|| format!("load {policy}"))?,
                )
            };
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            loop {
                let action = match &params {
                    Some(p) => p.forward(&encode(&observe(&state))).greedy(),
                    None => {
                        let uniform = crate::student::ActorCriticOutput {
                            logits: [0.0; crate::student::ACTIONS],
                            value: 0.0,
                        };
                        sample_action(&uniform, &mut rng).0
                    }
                };
                let (next, result) = step(&state, action);
                state = next;
                println!("action: {action:?}");
                println!("{}", render(&state));
                if result.done {
                    println!("outcome: {:?}, steps {}, return {:.4}", result.outcome, state.step_count, result.reward);
                    break;
                }
            }
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.experiment)
        .map_err(|e| config_err(format!("read {}: {e}", args.experiment.display())))?;
    let mut cfg: ExperimentConfig = toml::from_str(&raw)
        .map_err(|e| config_err(format!("parse {}: {e}", args.experiment.display())))?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    cfg.validate().map_err(config_err)?;
    let dir = run_experiment(&cfg)?;
    println!("experiment artifacts in {}", dir.display());
    Ok(())
}

fn cmd_seeds(args: SeedsArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    write_seed_file(task, &args.out)?;
    println!("wrote {} seeds to {}", crate::gridworld::TEST_SEED_COUNT, args.out.display());
    Ok(())
}
