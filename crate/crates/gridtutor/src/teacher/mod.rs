//! Teachers: per-state option distributions and their soft instructions.
//!
//! A teacher looks at what the agent knows and answers with a probability
//! distribution over the scripted options. Three kinds exist: a scripted
//! oracle (always the task-optimal option), an error-injecting teacher
//! that reproduces measured LLM mistake rates, and a live chat-completion
//! client. The soft instruction projects an option distribution down to
//! primitive actions by mixing each option's current Dirac action.

mod llm;

pub use llm::{
    build_prompt, llm_query, parse_prob_line, parse_response, LlmConfig, LlmTeacher,
    TeacherCache,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::collections::HashMap;

use crate::gridworld::{describe, Action, Color, EnvState, ExplorationMemory};
use crate::options::{astar, is_executable, peek_action, OptionId, Target};

/// Distribution over the 7 primitive actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: [f64; Action::COUNT],
}

impl ActionDistribution {
    pub fn dirac(action: Action) -> ActionDistribution {
        let mut probs = [0.0; Action::COUNT];
        probs[action.index()] = 1.0;
        ActionDistribution { probs }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Distribution over options, plus the mass that resolves to a bare Wait
/// (unparseable or impossible answers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionDistribution {
    pub entries: Vec<(OptionId, f64)>,
    pub wait_mass: f64,
}

impl OptionDistribution {
    pub fn dirac(option: OptionId) -> OptionDistribution {
        OptionDistribution { entries: vec![(option, 1.0)], wait_mass: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.wait_mass + self.entries.iter().map(|(_, p)| p).sum::<f64>()
    }

    /// Most probable option; ties break toward the lower canonical index.
    /// None when the wait mass dominates every entry.
    pub fn argmax(&self) -> Option<OptionId> {
        let mut best: Option<(OptionId, f64)> = None;
        for &(option, p) in &self.entries {
            let better = match best {
                None => true,
                Some((b, bp)) => {
                    p > bp || (p == bp && option.canonical_index() < b.canonical_index())
                }
            };
            if better {
                best = Some((option, p));
            }
        }
        match best {
            Some((option, p)) if p >= self.wait_mass => Some(option),
            _ => None,
        }
    }

    /// Adds `p` to an existing entry or appends a new one.
    fn accumulate(&mut self, option: OptionId, p: f64) {
        if let Some(entry) = self.entries.iter_mut().find(|(o, _)| *o == option) {
            entry.1 += p;
        } else {
            self.entries.push((option, p));
        }
    }
}

/// A soft instruction: the action-level target distribution plus the
/// option-level distribution it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftInstruction {
    pub dist: ActionDistribution,
    pub source_options: OptionDistribution,
}

/// Mixes each option's current Dirac action, weighted by its probability.
/// Options that cannot run in this state contribute their mass to Wait,
/// as does the distribution's own wait mass.
pub fn soft_instruction(
    opt_dist: &OptionDistribution,
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
) -> SoftInstruction {
    let mut probs = [0.0; Action::COUNT];
    probs[Action::Wait.index()] += opt_dist.wait_mass;
    for &(option, p) in &opt_dist.entries {
        if is_executable(option, state, memory) {
            let action = peek_action(option, state, memory, lava_aware);
            probs[action.index()] += p;
        } else {
            probs[Action::Wait.index()] += p;
        }
    }
    SoftInstruction {
        dist: ActionDistribution { probs },
        source_options: opt_dist.clone(),
    }
}

/// Measured correct/mistake rates for an emulated teacher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub p_correct: f64,
    pub p_incorrect: f64,
    pub p_inefficient: f64,
    pub p_inconsistent: f64,
}

impl ErrorProfile {
    /// Normalizes on construction; published rate tables round their rows
    /// so raw sums can be slightly off 1.
    pub fn new(correct: f64, incorrect: f64, inefficient: f64, inconsistent: f64) -> ErrorProfile {
        let sum = correct + incorrect + inefficient + inconsistent;
        assert!(
            (sum - 1.0).abs() < 1e-2,
            "profile rates must sum to ~1, got {sum}"
        );
        ErrorProfile {
            p_correct: correct / sum,
            p_incorrect: incorrect / sum,
            p_inefficient: inefficient / sum,
            p_inconsistent: inconsistent / sum,
        }
    }

    pub fn oracle() -> ErrorProfile {
        ErrorProfile::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn vicuna_7b() -> ErrorProfile {
        ErrorProfile::new(0.441, 0.400, 0.092, 0.0667)
    }

    pub fn chatglm_12b() -> ErrorProfile {
        ErrorProfile::new(0.558, 0.217, 0.025, 0.200)
    }

    pub fn vicuna_13b() -> ErrorProfile {
        ErrorProfile::new(0.584, 0.216, 0.092, 0.108)
    }

    pub fn vicuna_33b() -> ErrorProfile {
        ErrorProfile::new(0.691, 0.025, 0.167, 0.117)
    }

    pub fn chatglm_130b() -> ErrorProfile {
        ErrorProfile::new(0.750, 0.133, 0.042, 0.075)
    }

    pub fn by_name(name: &str) -> Option<ErrorProfile> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "oracle" => Some(ErrorProfile::oracle()),
            "vicuna7b" => Some(ErrorProfile::vicuna_7b()),
            "chatglm12b" => Some(ErrorProfile::chatglm_12b()),
            "vicuna13b" => Some(ErrorProfile::vicuna_13b()),
            "vicuna33b" => Some(ErrorProfile::vicuna_33b()),
            "chatglm130b" => Some(ErrorProfile::chatglm_130b()),
            _ => None,
        }
    }
}

/// The task-optimal option: explore until the exit door and a usable key
/// are both known, fetch the key, walk to the door, open it.
///
/// Total over arbitrary mid-episode states; when nothing sensible exists
/// it returns Explore, which degrades to a single Wait.
pub fn oracle_option(state: &EnvState, memory: &ExplorationMemory) -> OptionId {
    let doors = memory.known_doors(state);
    let door = doors.first().copied();
    if let Some((door_color, _, dx, dy)) = door {
        if state.agent.carrying == Some(door_color) {
            return if state.agent.ahead() == (dx, dy) {
                OptionId::Open(Target::door(door_color))
            } else {
                OptionId::GoTo(Target::door(door_color))
            };
        }
        let matching_key = memory
            .known_keys(state)
            .into_iter()
            .find(|&(c, _, _)| c == door_color);
        if matching_key.is_some() {
            return OptionId::Pickup(Target::key(door_color));
        }
    }
    OptionId::Explore
}

/// Decision mistake categories, in their published reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionCategory {
    Correct,
    Incorrect,
    Inefficient,
    Inconsistent,
}

/// The deterministic option each category maps to in this state; None
/// when the category cannot be realized here (no harmful or wasteful
/// move exists).
pub struct CategoryOptions {
    pub correct: OptionId,
    pub incorrect: Option<OptionId>,
    pub inefficient: Option<OptionId>,
    pub inconsistent: OptionId,
}

/// Walks a lava-blind plan and reports whether it steps onto known lava.
fn plan_crosses_lava(
    state: &EnvState,
    memory: &ExplorationMemory,
    goal: (i32, i32),
) -> bool {
    let blind = |x: i32, y: i32| {
        memory.is_seen(x, y)
            && matches!(
                state.cell(x, y),
                crate::gridworld::Cell::Floor
                    | crate::gridworld::Cell::Lava
                    | crate::gridworld::Cell::Door(_, crate::gridworld::DoorState::Open)
            )
    };
    let Some(plan) = astar(
        state.width,
        state.height,
        (state.agent.x, state.agent.y, state.agent.dir),
        goal,
        blind,
    ) else {
        return false;
    };
    let lava = memory.known_lava(state);
    let (mut x, mut y, mut dir) = (state.agent.x, state.agent.y, state.agent.dir);
    for action in plan {
        match action {
            Action::TurnLeft => dir = dir.left(),
            Action::TurnRight => dir = dir.right(),
            Action::Forward => {
                let (dx, dy) = dir.delta();
                x += dx;
                y += dy;
                if lava.contains(&(x, y)) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// Fixed category-to-option priority mapping.
///
/// incorrect: a go-to whose hazard-blind path crosses known lava (only
/// when this teacher plans hazard-blind), else a wrong-color pickup.
/// inefficient: Explore with nothing left to explore, else Drop of the
/// needed key, else Explore when key and door are already known.
/// inconsistent: Drop while empty-handed, else Open on a door color
/// never observed; one of the two always exists.
pub fn category_options(
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
) -> CategoryOptions {
    let correct = oracle_option(state, memory);
    let known_door_color = memory.known_doors(state).first().map(|&(c, _, _, _)| c);
    let keys = memory.known_keys(state);

    let mut incorrect = None;
    if !lava_aware && !memory.known_lava(state).is_empty() {
        let mut targets: Vec<(usize, Target, (i32, i32))> = keys
            .iter()
            .map(|&(c, x, y)| (Target::key(c), (x, y)))
            .chain(
                memory
                    .known_doors(state)
                    .iter()
                    .map(|&(c, _, x, y)| (Target::door(c), (x, y))),
            )
            .map(|(t, pos)| (OptionId::GoTo(t).canonical_index(), t, pos))
            .collect();
        targets.sort_by_key(|&(i, _, _)| i);
        incorrect = targets
            .into_iter()
            .find(|&(_, _, pos)| plan_crosses_lava(state, memory, pos))
            .map(|(_, t, _)| OptionId::GoTo(t));
    }
    if incorrect.is_none() {
        if let Some(door_color) = known_door_color {
            incorrect = keys
                .iter()
                .find(|&&(c, _, _)| {
                    c != door_color
                        && is_executable(OptionId::Pickup(Target::key(c)), state, memory)
                })
                .map(|&(c, _, _)| OptionId::Pickup(Target::key(c)));
        }
    }

    let carrying_needed = state.agent.carrying.is_some()
        && known_door_color.is_none_or(|c| state.agent.carrying == Some(c));
    let both_known = known_door_color.is_some_and(|c| {
        state.agent.carrying == Some(c) || keys.iter().any(|&(k, _, _)| k == c)
    });
    let inefficient = if !memory.unexplored_remains(state) {
        Some(OptionId::Explore)
    } else if carrying_needed && is_executable(OptionId::Drop, state, memory) {
        Some(OptionId::Drop)
    } else if both_known {
        Some(OptionId::Explore)
    } else {
        None
    };

    let inconsistent = if state.agent.carrying.is_none() {
        OptionId::Drop
    } else {
        let known: Vec<Color> = memory
            .known_doors(state)
            .iter()
            .map(|&(c, _, _, _)| c)
            .collect();
        let color = Color::ALL
            .iter()
            .copied()
            .find(|c| !known.contains(c))
            .expect("at most one door color can be known");
        OptionId::Open(Target::door(color))
    };

    CategoryOptions { correct, incorrect, inefficient, inconsistent }
}

/// Category weights after dropping unrealizable ones, renormalized.
fn category_weights(
    profile: &ErrorProfile,
    cats: &CategoryOptions,
) -> Vec<(DecisionCategory, OptionId, f64)> {
    let mut weights = vec![(DecisionCategory::Correct, cats.correct, profile.p_correct)];
    if let Some(o) = cats.incorrect {
        weights.push((DecisionCategory::Incorrect, o, profile.p_incorrect));
    }
    if let Some(o) = cats.inefficient {
        weights.push((DecisionCategory::Inefficient, o, profile.p_inefficient));
    }
    weights.push((DecisionCategory::Inconsistent, cats.inconsistent, profile.p_inconsistent));
    let total: f64 = weights.iter().map(|(_, _, w)| w).sum();
    for (_, _, w) in &mut weights {
        *w /= total;
    }
    weights
}

/// Samples a mistake category per the profile and emits its option.
pub fn flawed_option(
    state: &EnvState,
    memory: &ExplorationMemory,
    profile: &ErrorProfile,
    lava_aware: bool,
    rng: &mut ChaCha8Rng,
) -> (OptionId, DecisionCategory) {
    let cats = category_options(state, memory, lava_aware);
    let weights = category_weights(profile, &cats);
    let mut draw = rng.gen::<f64>();
    for &(cat, option, w) in &weights {
        draw -= w;
        if draw < 0.0 {
            return (option, cat);
        }
    }
    let &(cat, option, _) = weights.last().unwrap();
    (option, cat)
}

/// The exact mixture `flawed_option` samples from, with duplicate
/// options merged.
pub fn flawed_mixture(
    state: &EnvState,
    memory: &ExplorationMemory,
    profile: &ErrorProfile,
    lava_aware: bool,
) -> OptionDistribution {
    let cats = category_options(state, memory, lava_aware);
    let mut dist = OptionDistribution { entries: Vec::new(), wait_mass: 0.0 };
    for (_, option, w) in category_weights(profile, &cats) {
        dist.accumulate(option, w);
    }
    dist
}

/// The error-rate-emulating teacher: samples per decision, but exposes
/// its analytic mixture for distillation so training sees no extra noise.
///
/// Concrete decisions are cached by scene description, like LLM
/// responses: revisiting a scene replays the earlier choice, so a
/// mistake there repeats instead of washing out.
#[derive(Debug, Clone)]
pub struct FlawedTeacher {
    pub profile: ErrorProfile,
    pub lava_aware: bool,
    rng: ChaCha8Rng,
    decisions: HashMap<String, OptionId>,
}

impl FlawedTeacher {
    pub fn new(profile: ErrorProfile, lava_aware: bool, seed: u64) -> FlawedTeacher {
        FlawedTeacher {
            profile,
            lava_aware,
            rng: ChaCha8Rng::seed_from_u64(seed),
            decisions: HashMap::new(),
        }
    }

    /// One sampled option, sticky per description.
    pub fn decide(&mut self, state: &EnvState, memory: &ExplorationMemory) -> OptionId {
        let scene = describe(state, memory);
        if let Some(&option) = self.decisions.get(&scene) {
            return option;
        }
        let option = flawed_option(state, memory, &self.profile, self.lava_aware, &mut self.rng).0;
        self.decisions.insert(scene, option);
        option
    }
}

pub enum Teacher {
    Oracle,
    Flawed(Box<FlawedTeacher>),
    Llm(Box<LlmTeacher>),
}

impl Teacher {
    pub fn name(&self) -> String {
        match self {
            Teacher::Oracle => "oracle".into(),
            Teacher::Flawed(f) => format!(
                "flawed(c={:.3},{})",
                f.profile.p_correct,
                if f.lava_aware { "aware" } else { "blind" }
            ),
            Teacher::Llm(l) => format!("llm({})", l.config.model),
        }
    }

    /// Whether this teacher's options plan around lava.
    pub fn lava_aware(&self) -> bool {
        match self {
            Teacher::Flawed(f) => f.lava_aware,
            _ => true,
        }
    }

    /// Per-state option distribution: Dirac for the oracle, the analytic
    /// category mixture for the flawed teacher, a sampled histogram for
    /// the LLM.
    pub fn option_probs(
        &self,
        state: &EnvState,
        memory: &ExplorationMemory,
    ) -> OptionDistribution {
        match self {
            Teacher::Oracle => OptionDistribution::dirac(oracle_option(state, memory)),
            Teacher::Flawed(f) => flawed_mixture(state, memory, &f.profile, f.lava_aware),
            Teacher::Llm(l) => l.option_probs(state, memory),
        }
    }

    /// One concrete option choice. The flawed teacher samples its
    /// category here (this is where its mistakes actually happen);
    /// the others take the argmax of their distribution.
    pub fn decide(&mut self, state: &EnvState, memory: &ExplorationMemory) -> OptionId {
        match self {
            Teacher::Oracle => oracle_option(state, memory),
            Teacher::Flawed(f) => f.decide(state, memory),
            Teacher::Llm(l) => l
                .option_probs(state, memory)
                .argmax()
                .unwrap_or(OptionId::Explore),
        }
    }
}
