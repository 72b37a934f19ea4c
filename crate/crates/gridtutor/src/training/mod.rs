//! PPO training with annealed teacher distillation.
//!
//! Each iteration collects ten on-policy episodes, attaches a soft teacher
//! instruction to every transition while the anneal weight is nonzero,
//! computes GAE advantages, and runs clipped-surrogate updates with Adam.
//! Everything an iteration consumes is derived from (run seed, iteration),
//! so a run resumed from its trainer state reproduces the uninterrupted
//! run bit for bit.

use std::io::{Read, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::gridworld::{
    generate, observe, step, training_seed, EnvState, ExplorationMemory, Outcome, TaskKind,
};
use crate::student::{
    encode, sample_action, LossCoeffs, LossStats, PolicyParams, Sample, ACTIONS, PARAM_COUNT,
};
use crate::teacher::Teacher;

// rng stream tags so collection and update draws never collide
const STREAM_COLLECT: u64 = 0x636f_6c6c;
const STREAM_UPDATE: u64 = 0x7570_6461;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PPOConfig {
    pub trajectories_per_iter: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PPOConfig {
    fn default() -> PPOConfig {
        PPOConfig {
            trajectories_per_iter: 10,
            epochs: 3,
            minibatch_size: 128,
            learning_rate: 0.001,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.001,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories_per_iter == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            bail!("trajectories, epochs and minibatch size must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            bail!("clip must lie in (0, 1), got {}", self.clip);
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bail!("gamma must lie in (0, 1], got {}", self.gamma);
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            bail!("gae lambda must lie in [0, 1], got {}", self.gae_lambda);
        }
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 {
            bail!("learning rate and grad norm cap must be positive");
        }
        Ok(())
    }

    pub fn loss_coeffs(&self) -> LossCoeffs {
        LossCoeffs {
            clip: self.clip,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

/// Distillation weight schedule: linear decay from `lambda0` clamped at
/// `plateau`, held there from `switch_iter`, and cut to zero at
/// `cutoff_iter` after which the teacher is never queried.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub lambda0: f64,
    pub decay: f64,
    pub plateau: f64,
    pub switch_iter: u32,
    pub cutoff_iter: u32,
}

impl Default for AnnealSchedule {
    fn default() -> AnnealSchedule {
        AnnealSchedule {
            lambda0: 10.0,
            decay: 0.01,
            plateau: 0.1,
            switch_iter: 1000,
            cutoff_iter: 2000,
        }
    }
}

impl AnnealSchedule {
    pub fn lambda_at(&self, iter: u32) -> f64 {
        if iter >= self.cutoff_iter {
            0.0
        } else if iter >= self.switch_iter {
            self.plateau
        } else {
            (self.lambda0 - self.decay * f64::from(iter)).max(self.plateau)
        }
    }
}

/// One environment step as seen during collection. The pre-action state
/// and exploration memory are kept so the teacher can be queried after
/// the fact; advantage and return are filled in by `compute_advantages`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: EnvState,
    pub memory: ExplorationMemory,
    pub encoding: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub old_log_prob: f64,
    pub old_value: f64,
    pub teacher: Option<[f64; ACTIONS]>,
    pub advantage: f64,
    pub return_target: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub episodes: Vec<Vec<Transition>>,
    pub outcomes: Vec<Outcome>,
}

impl RolloutBuffer {
    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn mean_return(&self) -> f64 {
        let total: f64 = self
            .episodes
            .iter()
            .map(|ep| ep.iter().map(|t| t.reward).sum::<f64>())
            .sum();
        total / self.episodes.len() as f64
    }

    pub fn success_rate(&self) -> f64 {
        let wins = self.outcomes.iter().filter(|o| **o == Outcome::Success).count();
        wins as f64 / self.outcomes.len() as f64
    }

    fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }

    fn transitions_mut(&mut self) -> impl Iterator<Item = &mut Transition> {
        self.episodes.iter_mut().flatten()
    }
}

/// Plays the configured number of episodes with the current policy.
/// Environment seeds and action draws derive from (run_seed, iter) only.
pub fn collect_rollouts(
    params: &PolicyParams,
    task: TaskKind,
    run_seed: u64,
    iter: u32,
    cfg: &PPOConfig,
) -> RolloutBuffer {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(run_seed, STREAM_COLLECT), u64::from(iter)));
    let mut buffer = RolloutBuffer::default();
    for episode in 0..cfg.trajectories_per_iter {
        let index = derive_seed(
            run_seed,
            u64::from(iter) * cfg.trajectories_per_iter as u64 + episode as u64,
        );
        let env_seed = training_seed(index >> 1);
        let mut state = generate(task, env_seed)
            .expect("training seed produced no solvable layout within the attempt budget");
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);

        let mut transitions = Vec::new();
        let outcome;
        loop {
            let encoding = encode(&observe(&state));
            let output = params.forward(&encoding);
            let (action, log_prob) = sample_action(&output, &mut rng);
            let (next, result) = step(&state, action);
            transitions.push(Transition {
                state: state.clone(),
                memory: memory.clone(),
                encoding,
                action: action.index(),
                reward: result.reward,
                done: result.done,
                old_log_prob: log_prob,
                old_value: output.value,
                teacher: None,
                advantage: 0.0,
                return_target: 0.0,
            });
            state = next;
            memory.update(&state);
            if result.done {
                outcome = result.outcome;
                break;
            }
        }
        buffer.episodes.push(transitions);
        buffer.outcomes.push(outcome);
    }
    buffer
}

/// Queries the teacher once per transition and stores the soft
/// instruction. Skipped entirely when the anneal weight is zero; returns
/// the number of teacher queries made.
pub fn attach_teacher(buffer: &mut RolloutBuffer, teacher: &Teacher, lambda: f64) -> usize {
    if lambda == 0.0 {
        return 0;
    }
    let lava_aware = teacher.lava_aware();
    let mut queries = 0;
    for t in buffer.transitions_mut() {
        let options = teacher.option_probs(&t.state, &t.memory);
        let instruction =
            crate::teacher::soft_instruction(&options, &t.state, &t.memory, lava_aware);
        t.teacher = Some(instruction.dist.probs);
        queries += 1;
    }
    queries
}

/// Generalized advantage estimation per episode, then optional
/// normalization across the whole buffer.
pub fn compute_advantages(buffer: &mut RolloutBuffer, cfg: &PPOConfig) {
    for episode in &mut buffer.episodes {
        let mut next_advantage = 0.0;
        let mut next_value = 0.0;
        for t in episode.iter_mut().rev() {
            // done masks the bootstrap so nothing leaks past a terminal
            let mask = if t.done { 0.0 } else { 1.0 };
            let delta = t.reward + cfg.gamma * next_value * mask - t.old_value;
            t.advantage = delta + cfg.gamma * cfg.gae_lambda * mask * next_advantage;
            t.return_target = t.advantage + t.old_value;
            next_advantage = t.advantage;
            next_value = t.old_value;
        }
    }
    if cfg.normalize_advantages {
        let n = buffer.total_transitions() as f64;
        let mean = buffer.transitions().map(|t| t.advantage).sum::<f64>() / n;
        let var = buffer.transitions().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for t in buffer.transitions_mut() {
            t.advantage = (t.advantage - mean) / (std + 1e-8);
        }
    }
}

fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Adam with bias correction; moments live in the trainer state so a
/// resumed run continues the same trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: vec![0.0; PARAM_COUNT],
            v: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grad: &[f64]) {
        self.step_count += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step_count as i32);
        let data = params.as_mut_slice();
        for i in 0..data.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    pub mean_grad_norm: f64,
}

/// Shuffled-minibatch PPO epochs over the buffer.
pub fn ppo_update(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    lambda: f64,
    cfg: &PPOConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    let transitions: Vec<&Transition> = buffer.transitions().collect();
    let coeffs = cfg.loss_coeffs();
    let mut stats = UpdateStats::default();
    let mut indices: Vec<usize> = (0..transitions.len()).collect();
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size) {
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .map(|&i| {
                    let t = transitions[i];
                    Sample {
                        encoding: &t.encoding,
                        action: t.action,
                        advantage: t.advantage,
                        return_target: t.return_target,
                        old_log_prob: t.old_log_prob,
                        teacher: t.teacher,
                    }
                })
                .collect();
            let (loss, mut grad) = params
                .loss_grad(&batch, lambda, &coeffs)
                .context("minibatch gradient failed")?;
            let norm = clip_gradient(&mut grad, cfg.max_grad_norm);
            optimizer.step(params, &grad);
            stats.loss.total += loss.total;
            stats.loss.policy += loss.policy;
            stats.loss.value += loss.value;
            stats.loss.entropy += loss.entropy;
            stats.loss.distill += loss.distill;
            stats.mean_grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let n = stats.minibatches.max(1) as f64;
    stats.loss.total /= n;
    stats.loss.policy /= n;
    stats.loss.value /= n;
    stats.loss.entropy /= n;
    stats.loss.distill /= n;
    stats.mean_grad_norm /= n;
    Ok(stats)
}

const TRAINER_MAGIC: &[u8; 4] = b"GTTR";
const TRAINER_VERSION: u32 = 1;

/// Everything needed to continue a run: parameters, Adam moments and the
/// next iteration index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub next_iter: u32,
}

impl TrainerState {
    pub fn fresh(init_seed: u64, learning_rate: f64) -> TrainerState {
        TrainerState {
            params: PolicyParams::seeded(init_seed),
            optimizer: Adam::new(learning_rate),
            next_iter: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("create {}", path.display()))?,
        );
        file.write_all(TRAINER_MAGIC)?;
        file.write_all(&TRAINER_VERSION.to_le_bytes())?;
        file.write_all(&self.next_iter.to_le_bytes())?;
        file.write_all(&self.optimizer.step_count.to_le_bytes())?;
        file.write_all(&self.optimizer.learning_rate.to_le_bytes())?;
        file.write_all(&(PARAM_COUNT as u64).to_le_bytes())?;
        for slice in [self.params.as_slice(), &self.optimizer.m, &self.optimizer.v] {
            for v in slice {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainerState> {
        let mut file = std::io::BufReader::new(
            std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?,
        );
        let mut word = [0u8; 4];
        file.read_exact(&mut word)?;
        if &word != TRAINER_MAGIC {
            bail!("not a trainer state file");
        }
        file.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != TRAINER_VERSION {
            bail!("unsupported trainer state version {version}");
        }
        file.read_exact(&mut word)?;
        let next_iter = u32::from_le_bytes(word);
        let mut long = [0u8; 8];
        file.read_exact(&mut long)?;
        let step_count = u64::from_le_bytes(long);
        file.read_exact(&mut long)?;
        let learning_rate = f64::from_le_bytes(long);
        file.read_exact(&mut long)?;
        let count = u64::from_le_bytes(long) as usize;
        if count != PARAM_COUNT {
            bail!("trainer state layout mismatch: {count} parameters");
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                file.read_exact(&mut long)?;
                out.push(f64::from_le_bytes(long));
            }
            Ok(out)
        };
        let raw_params = read_vec(count)?;
        let m = read_vec(count)?;
        let v = read_vec(count)?;
        let mut params = PolicyParams::zeros();
        params.as_mut_slice().copy_from_slice(&raw_params);
        let mut optimizer = Adam::new(learning_rate);
        optimizer.step_count = step_count;
        optimizer.m = m;
        optimizer.v = v;
        Ok(TrainerState { params, optimizer, next_iter })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub run_seed: u64,
    pub iterations: u32,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u32,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub resume: bool,
    /// stop once the rolling success rate over `early_stop_window`
    /// iterations reaches this threshold; only iterations with λ = 0
    /// count, so a run never stops while the teacher is still coaching
    #[serde(default)]
    pub early_stop_success: Option<f64>,
    #[serde(default = "default_early_stop_window")]
    pub early_stop_window: u32,
}

fn default_checkpoint_every() -> u32 {
    200
}

fn default_early_stop_window() -> u32 {
    25
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: u32,
    pub lambda: f64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub loss: LossStats,
    pub teacher_queries: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub iterations_run: u32,
    pub final_iter: u32,
    pub params_path: PathBuf,
    pub metrics_path: PathBuf,
    pub total_teacher_queries: usize,
    pub last_success_rate: f64,
    pub stopped_early: bool,
}

pub const METRICS_HEADER: &str =
    "iter,lambda,mean_return,success_rate,loss_total,loss_policy,loss_value,entropy,distill,teacher_queries,wall_ms";

/// Keeps only rows logged before `next_iter`.
fn truncate_metrics(path: &Path, next_iter: u32) -> Result<()> {
    let Ok(raw) = std::fs::read_to_string(path) else {
        return Ok(());
    };
    let kept: Vec<&str> = raw
        .lines()
        .filter(|line| {
            line.split(',')
                .next()
                .and_then(|field| field.parse::<u32>().ok())
                .is_none_or(|iter| iter < next_iter)
        })
        .collect();
    if kept.len() < raw.lines().count() {
        std::fs::write(path, kept.join("\n") + "\n")?;
    }
    Ok(())
}

/// Full training loop. Writes a CSV row per iteration, checkpoints on the
/// configured cadence plus once at the anneal cutoff, and keeps a trainer
/// state file for resumption.
pub fn train(
    cfg: &TrainConfig,
    teacher: &Teacher,
    ppo: &PPOConfig,
    schedule: &AnnealSchedule,
) -> Result<TrainSummary> {
    train_with_observer(cfg, teacher, ppo, schedule, |_| {})
}

pub fn train_with_observer(
    cfg: &TrainConfig,
    teacher: &Teacher,
    ppo: &PPOConfig,
    schedule: &AnnealSchedule,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<TrainSummary> {
    ppo.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("create {}", cfg.out_dir.display()))?;
    let state_path = cfg.out_dir.join("trainer_state.bin");
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let params_path = cfg.out_dir.join("params_final.bin");

    let mut trainer = if cfg.resume && state_path.exists() {
        let loaded = TrainerState::load(&state_path)?;
        log::info!("resuming at iteration {}", loaded.next_iter);
        // An interrupted run may have logged past the checkpoint; those
        // iterations rerun below, so drop their rows before appending.
        truncate_metrics(&metrics_path, loaded.next_iter)?;
        loaded
    } else {
        TrainerState::fresh(derive_seed(cfg.run_seed, 0x1217), ppo.learning_rate)
    };

    let mut metrics = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .with_context(|| format!("open {}", metrics_path.display()))?;
    if metrics.metadata()?.len() == 0 {
        writeln!(metrics, "{METRICS_HEADER}")?;
    }

    let start_iter = trainer.next_iter;
    let mut total_queries = 0;
    let mut last_success = 0.0;
    let mut successes: Vec<f64> = Vec::new();
    let mut stopped_early = false;

    for iter in start_iter..cfg.iterations {
        let clock = Instant::now();
        let lambda = schedule.lambda_at(iter);
        let mut buffer = collect_rollouts(&trainer.params, cfg.task, cfg.run_seed, iter, ppo);
        let queries = attach_teacher(&mut buffer, teacher, lambda);
        total_queries += queries;
        compute_advantages(&mut buffer, ppo);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            derive_seed(cfg.run_seed, STREAM_UPDATE),
            u64::from(iter),
        ));
        let stats = ppo_update(&mut trainer.params, &mut trainer.optimizer, &buffer, lambda, ppo, &mut rng)?;

        let record = IterationRecord {
            iter,
            lambda,
            mean_return: buffer.mean_return(),
            success_rate: buffer.success_rate(),
            loss: stats.loss,
            teacher_queries: queries,
            wall_ms: clock.elapsed().as_millis(),
        };
        writeln!(
            metrics,
            "{},{},{},{},{},{},{},{},{},{},{}",
            record.iter,
            record.lambda,
            record.mean_return,
            record.success_rate,
            record.loss.total,
            record.loss.policy,
            record.loss.value,
            record.loss.entropy,
            record.loss.distill,
            record.teacher_queries,
            record.wall_ms
        )?;
        observer(&record);
        last_success = record.success_rate;
        trainer.next_iter = iter + 1;

        let at_cutoff = iter + 1 == schedule.cutoff_iter;
        let at_cadence = cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0;
        if at_cutoff || at_cadence || iter + 1 == cfg.iterations {
            trainer.save(&state_path)?;
            if at_cutoff {
                trainer
                    .params
                    .save(&cfg.out_dir.join(format!("params_iter{}.bin", iter + 1)))
                    .map_err(anyhow::Error::from)?;
            }
        }

        if let Some(threshold) = cfg.early_stop_success {
            // rollout successes while the teacher still coaches (λ > 0)
            // say little about the standalone policy, so the window only
            // accumulates after the distillation term is gone
            if lambda > 0.0 {
                successes.clear();
            } else {
                successes.push(record.success_rate);
                let window = cfg.early_stop_window as usize;
                if successes.len() >= window {
                    let recent = &successes[successes.len() - window..];
                    if recent.iter().sum::<f64>() / window as f64 >= threshold {
                        stopped_early = true;
                        trainer.save(&state_path)?;
                        break;
                    }
                }
            }
        }
    }

    trainer.save(&state_path)?;
    trainer.params.save(&params_path).map_err(anyhow::Error::from)?;
    metrics.flush()?;
    Ok(TrainSummary {
        iterations_run: trainer.next_iter - start_iter,
        final_iter: trainer.next_iter,
        params_path,
        metrics_path,
        total_teacher_queries: total_queries,
        last_success_rate: last_success,
        stopped_early,
    })
}

/// Mean KL(teacher || student) over a frozen probe set; used to check
/// that distillation actually pulls the policy toward the teacher.
pub fn probe_kl(params: &PolicyParams, teacher: &Teacher, probe: &[(EnvState, ExplorationMemory)]) -> f64 {
    let mut total = 0.0;
    for (state, memory) in probe {
        let options = teacher.option_probs(state, memory);
        let instruction =
            crate::teacher::soft_instruction(&options, state, memory, teacher.lava_aware());
        let out = params.forward(&encode(&observe(state)));
        let log_probs = out.log_probs();
        let mut kl = 0.0;
        for (&t, &lp) in instruction.dist.probs.iter().zip(&log_probs) {
            if t > 0.0 {
                kl += t * (t.ln() - lp);
            }
        }
        total += kl;
    }
    total / probe.len() as f64
}

/// Frozen probe states: fixed-seed layouts advanced a few oracle options
/// so the set mixes exploration, fetch and unlock situations.
pub fn probe_states(task: TaskKind, count: usize) -> Vec<(EnvState, ExplorationMemory)> {
    let mut probe = Vec::with_capacity(count);
    let mut seed = 0u64;
    while probe.len() < count {
        let env_seed = training_seed(derive_seed(0x0098_07e5, seed) >> 1);
        seed += 1;
        let Ok(mut state) = generate(task, env_seed) else { continue };
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        let hops = (seed % 5) as usize;
        let mut dead = false;
        for _ in 0..hops {
            let option = crate::teacher::oracle_option(&state, &memory);
            let (next, result) = crate::options::execute_option(&state, &mut memory, option, true);
            state = next;
            if result.done {
                dead = true;
                break;
            }
        }
        if !dead {
            probe.push((state, memory));
        }
    }
    probe
}
