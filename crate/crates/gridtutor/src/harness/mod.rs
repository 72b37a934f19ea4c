//! Evaluation, decision auditing and experiment orchestration.
//!
//! Held-out evaluation plays one episode per seed, greedy by default.
//! Decision auditing replays a teacher's choices against a bounded oracle
//! lookahead and buckets each one as correct, incorrect, inefficient or
//! inconsistent. Experiments run the distilled student, the tabula-rasa
//! baseline and the teacher-as-agent baseline side by side and emit CSV
//! and JSON artifacts that any plotting tool can consume.

mod cli;

pub use cli::cli_main;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::gridworld::{
    describe, generate, observe, step, test_seeds, training_seed, EnvState, ExplorationMemory,
    Outcome, TaskKind,
};
use crate::options::{execute_option, is_executable, OptionId};
use crate::student::{encode, sample_action, PolicyParams};
use crate::teacher::{
    flawed_mixture, oracle_option, ErrorProfile, LlmConfig, LlmTeacher, Teacher,
};
use crate::training::{
    train, AnnealSchedule, PPOConfig, TrainConfig, TrainSummary,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: u32,
    #[serde(rename = "return")]
    pub episode_return: f64,
}

/// Aggregates over one evaluation pass. Failures stay in the means, so
/// mean timesteps mixes successes with 150-step timeouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mean_timesteps: f64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub records: Vec<SeedRecord>,
}

impl EvalMetrics {
    pub fn from_records(records: Vec<SeedRecord>) -> Result<EvalMetrics> {
        if records.is_empty() {
            bail!("cannot aggregate an empty record set");
        }
        let n = records.len() as f64;
        let mean_timesteps = records.iter().map(|r| f64::from(r.steps)).sum::<f64>() / n;
        let mean_return = records.iter().map(|r| r.episode_return).sum::<f64>() / n;
        let wins = records.iter().filter(|r| r.outcome == Outcome::Success).count();
        Ok(EvalMetrics {
            mean_timesteps,
            mean_return,
            success_rate: wins as f64 / n,
            records,
        })
    }
}

/// One greedy (or optionally sampled) episode per seed.
pub fn evaluate_policy(
    params: &PolicyParams,
    task: TaskKind,
    seeds: &[u64],
    sampling: Option<u64>,
) -> Result<EvalMetrics> {
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    let mut rng = sampling.map(ChaCha8Rng::seed_from_u64);
    let mut records = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut state = generate(task, seed).with_context(|| format!("seed {seed}"))?;
        let mut total = 0.0;
        loop {
            let output = params.forward(&encode(&observe(&state)));
            let action = match rng.as_mut() {
                Some(r) => sample_action(&output, r).0,
                None => output.greedy(),
            };
            let (next, result) = step(&state, action);
            state = next;
            total += result.reward;
            if result.done {
                records.push(SeedRecord {
                    seed,
                    outcome: result.outcome,
                    steps: state.step_count,
                    episode_return: total,
                });
                break;
            }
        }
    }
    EvalMetrics::from_records(records)
}

pub fn evaluate_student(checkpoint: &Path, task: TaskKind, seeds: &[u64]) -> Result<EvalMetrics> {
    let params = PolicyParams::load(checkpoint)
        .with_context(|| format!("load checkpoint {}", checkpoint.display()))?;
    evaluate_policy(&params, task, seeds, None)
}

/// The teacher acts alone: it picks an option at every decision point and
/// the option runs to termination. No student is involved.
pub fn evaluate_teacher_agent(
    teacher: &mut Teacher,
    task: TaskKind,
    seeds: &[u64],
) -> Result<EvalMetrics> {
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    let lava_aware = teacher.lava_aware();
    let mut records = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut state = generate(task, seed).with_context(|| format!("seed {seed}"))?;
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        let mut total = 0.0;
        loop {
            let option = teacher.decide(&state, &memory);
            let (next, result) = execute_option(&state, &mut memory, option, lava_aware);
            state = next;
            total += result.reward;
            if result.done {
                records.push(SeedRecord {
                    seed,
                    outcome: result.outcome,
                    steps: state.step_count,
                    episode_return: total,
                });
                break;
            }
        }
    }
    EvalMetrics::from_records(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionClassification {
    Correct,
    Incorrect,
    Inefficient,
    Inconsistent,
}

impl DecisionClassification {
    pub const ALL: [DecisionClassification; 4] = [
        DecisionClassification::Correct,
        DecisionClassification::Incorrect,
        DecisionClassification::Inefficient,
        DecisionClassification::Inconsistent,
    ];

    pub fn index(self) -> usize {
        match self {
            DecisionClassification::Correct => 0,
            DecisionClassification::Incorrect => 1,
            DecisionClassification::Inefficient => 2,
            DecisionClassification::Inconsistent => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecisionClassification::Correct => "correct",
            DecisionClassification::Incorrect => "incorrect",
            DecisionClassification::Inefficient => "inefficient",
            DecisionClassification::Inconsistent => "inconsistent",
        }
    }
}

/// Steps the scripted oracle needs to finish from here, or None if it
/// cannot within the episode's remaining budget. The reference always
/// plans hazard-aware so it measures the ideal completion.
fn oracle_steps_to_success(state: &EnvState, memory: &ExplorationMemory) -> Option<u32> {
    let mut s = state.clone();
    let mut m = memory.clone();
    let start = s.step_count;
    loop {
        let option = oracle_option(&s, &m);
        let (next, result) = execute_option(&s, &mut m, option, true);
        s = next;
        match result.outcome {
            Outcome::Success => return Some(s.step_count - start),
            Outcome::Death | Outcome::Timeout => return None,
            Outcome::Ongoing => {}
        }
    }
}

/// Buckets one decision:
/// inconsistent if it cannot execute at all; incorrect if executing it
/// kills the agent or leaves a state the oracle can no longer finish in
/// budget; inefficient if the completion path through it is strictly
/// longer than the direct oracle completion; correct otherwise.
pub fn classify_decision(
    option: OptionId,
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
) -> DecisionClassification {
    let reference = oracle_steps_to_success(state, memory);
    classify_with_reference(option, state, memory, lava_aware, reference)
}

fn classify_with_reference(
    option: OptionId,
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
    reference: Option<u32>,
) -> DecisionClassification {
    if !is_executable(option, state, memory) {
        return DecisionClassification::Inconsistent;
    }
    let mut post_memory = memory.clone();
    let (post_state, result) = execute_option(state, &mut post_memory, option, lava_aware);
    match result.outcome {
        Outcome::Death => return DecisionClassification::Incorrect,
        Outcome::Success => return DecisionClassification::Correct,
        Outcome::Timeout => {
            return if reference.is_some() {
                DecisionClassification::Incorrect
            } else {
                DecisionClassification::Correct
            };
        }
        Outcome::Ongoing => {}
    }
    let option_steps = post_state.step_count - state.step_count;
    match (reference, oracle_steps_to_success(&post_state, &post_memory)) {
        (Some(direct), Some(through)) => {
            if option_steps + through > direct {
                DecisionClassification::Inefficient
            } else {
                DecisionClassification::Correct
            }
        }
        (Some(_), None) => DecisionClassification::Incorrect,
        // the oracle cannot finish from here either way; the decision
        // made nothing worse
        (None, _) => DecisionClassification::Correct,
    }
}

/// Classification frequencies over sampled teacher-agent decisions. For
/// the flawed teacher the per-state analytic mixture is pushed through
/// the same classifier, giving the expected frequencies and binomial
/// sigmas the empirical counts are compared against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStats {
    pub total: usize,
    pub counts: [usize; 4],
    pub frequencies: [f64; 4],
    pub expected: Option<[f64; 4]>,
    pub sigma: Option<[f64; 4]>,
}

pub fn teacher_stats(
    teacher: &mut Teacher,
    task: TaskKind,
    n_states: usize,
    seed: u64,
) -> Result<ClassStats> {
    if n_states == 0 {
        bail!("teacher stats need at least one decision state");
    }
    let lava_aware = teacher.lava_aware();
    let analytic = matches!(teacher, Teacher::Flawed(_));
    let mut counts = [0usize; 4];
    let mut expected = [0.0f64; 4];
    let mut variance = [0.0f64; 4];
    let mut collected = 0;
    let mut episode = 0u64;
    let mut seen = HashSet::new();
    while collected < n_states {
        let env_seed = training_seed(derive_seed(seed, 0x57a7 ^ episode) >> 1);
        episode += 1;
        let Ok(mut state) = generate(task, env_seed) else { continue };
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        let mut visited = HashSet::new();
        loop {
            if collected >= n_states {
                break;
            }
            // a repeated scene within one episode means the teacher is
            // cycling (its decisions replay per scene); nothing new
            // will happen, and across episodes a replayed decision is
            // not a fresh draw, so only first encounters are counted
            let scene = describe(&state, &memory);
            if !visited.insert(scene.clone()) {
                break;
            }
            let fresh = seen.insert(scene);
            let option = teacher.decide(&state, &memory);
            if fresh {
                let reference = oracle_steps_to_success(&state, &memory);
                if let Teacher::Flawed(f) = &*teacher {
                    let mix = flawed_mixture(&state, &memory, &f.profile, f.lava_aware);
                    for &(option, w) in &mix.entries {
                        let class = classify_with_reference(
                            option, &state, &memory, lava_aware, reference,
                        );
                        expected[class.index()] += w;
                    }
                }
                let class =
                    classify_with_reference(option, &state, &memory, lava_aware, reference);
                counts[class.index()] += 1;
                collected += 1;
            }
            let (next, result) = execute_option(&state, &mut memory, option, lava_aware);
            state = next;
            if result.done {
                break;
            }
        }
    }
    let n = collected as f64;
    let frequencies = counts.map(|c| c as f64 / n);
    let (expected, sigma) = if analytic {
        let means = expected.map(|e| e / n);
        // per-state Bernoulli variances summed, then scaled to frequency
        for c in 0..4 {
            variance[c] = means[c] * (1.0 - means[c]);
        }
        let sigma = variance.map(|v| (v / n).sqrt());
        (Some(means), Some(sigma))
    } else {
        (None, None)
    };
    Ok(ClassStats { total: collected, counts, frequencies, expected, sigma })
}

/// How a teacher is constructed from configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherSpec {
    Oracle,
    Flawed {
        profile: String,
        #[serde(default = "default_true")]
        lava_aware: bool,
        #[serde(default)]
        seed: u64,
    },
    Llm {
        #[serde(default)]
        config: LlmConfig,
        #[serde(default)]
        transcript: Option<PathBuf>,
    },
}

fn default_true() -> bool {
    true
}

impl TeacherSpec {
    /// Builds the teacher; `stream` decorrelates sampling teachers across
    /// experiment repeats.
    pub fn build(&self, stream: u64) -> Result<Teacher> {
        match self {
            TeacherSpec::Oracle => Ok(Teacher::Oracle),
            TeacherSpec::Flawed { profile, lava_aware, seed } => {
                let profile = ErrorProfile::by_name(profile)
                    .with_context(|| format!("unknown teacher profile '{profile}'"))?;
                Ok(Teacher::Flawed(Box::new(crate::teacher::FlawedTeacher::new(
                    profile,
                    *lava_aware,
                    derive_seed(*seed, stream),
                ))))
            }
            TeacherSpec::Llm { config, transcript } => {
                let inner = match transcript {
                    Some(path) => LlmTeacher::with_transcript(config.clone(), path)?,
                    None => LlmTeacher::new(config.clone()),
                };
                Ok(Teacher::Llm(Box::new(inner)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Llm4Teach,
    TabulaRasa,
    TeacherAgent,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Llm4Teach, Method::TabulaRasa, Method::TeacherAgent];

    pub fn name(self) -> &'static str {
        match self {
            Method::Llm4Teach => "llm4teach",
            Method::TabulaRasa => "tabula_rasa",
            Method::TeacherAgent => "teacher_agent",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "llm4teach" | "student" => Ok(Method::Llm4Teach),
            "tabula_rasa" | "scratch" => Ok(Method::TabulaRasa),
            "teacher_agent" | "teacher" => Ok(Method::TeacherAgent),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub teacher: TeacherSpec,
    pub repeat_seeds: Vec<u64>,
    pub iterations: u32,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub ppo: PPOConfig,
    #[serde(default)]
    pub schedule: AnnealSchedule,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: usize,
    #[serde(default)]
    pub early_stop_success: Option<f64>,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u32,
}

fn default_eval_seeds() -> usize {
    1000
}

fn default_checkpoint_every() -> u32 {
    200
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeat_seeds.is_empty() {
            bail!("experiment needs at least one repeat seed");
        }
        if self.iterations == 0 {
            bail!("experiment needs a positive iteration budget");
        }
        if self.eval_seeds == 0 || self.eval_seeds > crate::gridworld::TEST_SEED_COUNT {
            bail!(
                "eval_seeds must be between 1 and {}",
                crate::gridworld::TEST_SEED_COUNT
            );
        }
        self.ppo.validate()
    }

    fn methods(&self) -> Result<Vec<Method>> {
        match &self.methods {
            None => Ok(Method::ALL.to_vec()),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<Method>().map_err(anyhow::Error::msg))
                .collect(),
        }
    }
}

/// λ pinned to zero everywhere: the tabula-rasa pipeline is the same
/// trainer with the teacher never queried.
fn zero_schedule() -> AnnealSchedule {
    AnnealSchedule { lambda0: 0.0, decay: 0.0, plateau: 0.0, switch_iter: 0, cutoff_iter: 0 }
}

/// Runs the selected methods across the repeat seeds. Finished runs
/// (those with an eval.json) are skipped, so a crashed experiment resumes
/// where it stopped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("create {}", cfg.out_dir.display()))?;
    std::fs::write(
        cfg.out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    let eval_seed_list: Vec<u64> =
        test_seeds(cfg.task).into_iter().take(cfg.eval_seeds).collect();

    for method in cfg.methods()? {
        for &repeat in &cfg.repeat_seeds {
            let dir = cfg.out_dir.join(method.name()).join(format!("seed{repeat}"));
            std::fs::create_dir_all(&dir)?;
            let eval_path = dir.join("eval.json");
            if eval_path.exists() {
                log::info!("{} seed {repeat}: already evaluated, skipping", method.name());
                continue;
            }
            let metrics = match method {
                Method::TeacherAgent => {
                    let mut teacher = cfg.teacher.build(repeat)?;
                    evaluate_teacher_agent(&mut teacher, cfg.task, &eval_seed_list)?
                }
                Method::Llm4Teach | Method::TabulaRasa => {
                    let (teacher, schedule) = if method == Method::TabulaRasa {
                        (Teacher::Oracle, zero_schedule())
                    } else {
                        (cfg.teacher.build(repeat)?, cfg.schedule.clone())
                    };
                    let train_cfg = TrainConfig {
                        task: cfg.task,
                        run_seed: repeat,
                        iterations: cfg.iterations,
                        checkpoint_every: cfg.checkpoint_every,
                        out_dir: dir.clone(),
                        resume: true,
                        early_stop_success: cfg.early_stop_success,
                        early_stop_window: 25,
                    };
                    let summary: TrainSummary = train(&train_cfg, &teacher, &cfg.ppo, &schedule)?;
                    if method == Method::TabulaRasa && summary.total_teacher_queries != 0 {
                        bail!("tabula-rasa run issued teacher queries");
                    }
                    evaluate_student(&summary.params_path, cfg.task, &eval_seed_list)?
                }
            };
            log::info!(
                "{} seed {repeat}: success {:.3}, return {:.3}",
                method.name(),
                metrics.success_rate,
                metrics.mean_return
            );
            std::fs::write(&eval_path, serde_json::to_string_pretty(&metrics)?)?;
        }
    }

    write_plot_data(cfg)?;
    write_summary(cfg)?;
    Ok(cfg.out_dir.clone())
}

/// Flat CSV of every method's curve: trained methods contribute their
/// per-iteration training metrics, the teacher-agent baseline a constant
/// line from its final evaluation.
fn write_plot_data(cfg: &ExperimentConfig) -> Result<()> {
    use std::io::Write as _;

    let mut out = std::io::BufWriter::new(std::fs::File::create(
        cfg.out_dir.join("plot_data.csv"),
    )?);
    writeln!(out, "method,repeat,iter,mean_return,success_rate")?;
    for method in cfg.methods()? {
        for &repeat in &cfg.repeat_seeds {
            let dir = cfg.out_dir.join(method.name()).join(format!("seed{repeat}"));
            match method {
                Method::TeacherAgent => {
                    let Ok(raw) = std::fs::read_to_string(dir.join("eval.json")) else {
                        continue;
                    };
                    let metrics: EvalMetrics = serde_json::from_str(&raw)?;
                    for iter in [0, cfg.iterations] {
                        writeln!(
                            out,
                            "{},{repeat},{iter},{},{}",
                            method.name(),
                            metrics.mean_return,
                            metrics.success_rate
                        )?;
                    }
                }
                _ => {
                    let Ok(csv) = std::fs::read_to_string(dir.join("metrics.csv")) else {
                        continue;
                    };
                    for line in csv.lines().skip(1) {
                        let cols: Vec<&str> = line.split(',').collect();
                        if cols.len() < 4 {
                            continue;
                        }
                        writeln!(
                            out,
                            "{},{repeat},{},{},{}",
                            method.name(),
                            cols[0],
                            cols[2],
                            cols[3]
                        )?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn write_summary(cfg: &ExperimentConfig) -> Result<()> {
    let mut summary = serde_json::Map::new();
    for method in cfg.methods()? {
        let mut per_seed = serde_json::Map::new();
        for &repeat in &cfg.repeat_seeds {
            let path = cfg
                .out_dir
                .join(method.name())
                .join(format!("seed{repeat}"))
                .join("eval.json");
            let Ok(raw) = std::fs::read_to_string(&path) else { continue };
            let metrics: EvalMetrics = serde_json::from_str(&raw)?;
            per_seed.insert(
                format!("seed{repeat}"),
                serde_json::json!({
                    "success_rate": metrics.success_rate,
                    "mean_return": metrics.mean_return,
                    "mean_timesteps": metrics.mean_timesteps,
                }),
            );
        }
        summary.insert(method.name().into(), serde_json::Value::Object(per_seed));
    }
    std::fs::write(
        cfg.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(summary))?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests;
