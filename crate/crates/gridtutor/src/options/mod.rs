//! The five scripted skills the teacher commands: explore, go-to,
//! pickup, drop, open.
//!
//! Options plan over the agent's knowledge (seen cells only), emit one
//! primitive action per step, and terminate on their own predicate, on
//! becoming impossible, or at the hard 100-step cap. Every emitted action
//! is deterministic given (state, memory), i.e. each option is a Dirac
//! policy over the 7 primitive actions.

mod astar;

pub use astar::{astar, uniform_search};

use serde::{Deserialize, Serialize};

use crate::gridworld::{
    self, Action, Cell, Color, Dir, EnvState, ExplorationMemory, StepResult,
};

/// Hard per-option step budget.
pub const MAX_OPTION_STEPS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetKind {
    Key,
    Door,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Key => "key",
            TargetKind::Door => "door",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub color: Color,
}

impl Target {
    pub fn key(color: Color) -> Target {
        Target { kind: TargetKind::Key, color }
    }

    pub fn door(color: Color) -> Target {
        Target { kind: TargetKind::Door, color }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionId {
    Explore,
    GoTo(Target),
    Pickup(Target),
    Drop,
    Open(Target),
}

impl OptionId {
    /// Canonical position used for sorting and distribution indexing:
    /// Explore, GoTo over (key, door) x colors, Pickup likewise, Drop,
    /// Open likewise.
    pub fn canonical_index(self) -> usize {
        let target_slot = |t: Target| t.kind as usize * Color::ALL.len() + t.color.index();
        match self {
            OptionId::Explore => 0,
            OptionId::GoTo(t) => 1 + target_slot(t),
            OptionId::Pickup(t) => 13 + target_slot(t),
            OptionId::Drop => 25,
            OptionId::Open(t) => 26 + target_slot(t),
        }
    }
}

impl std::fmt::Display for OptionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptionId::Explore => write!(f, "explore"),
            OptionId::GoTo(t) => write!(f, "go to the {} {}", t.color, t.kind.name()),
            OptionId::Pickup(t) => write!(f, "pick up the {} {}", t.color, t.kind.name()),
            OptionId::Drop => write!(f, "drop"),
            OptionId::Open(t) => write!(f, "open the {} {}", t.color, t.kind.name()),
        }
    }
}

/// Where the target object is, if the agent has seen it.
fn find_target(target: Target, state: &EnvState, memory: &ExplorationMemory) -> Option<(i32, i32)> {
    match target.kind {
        TargetKind::Key => memory
            .known_keys(state)
            .into_iter()
            .find(|&(c, _, _)| c == target.color)
            .map(|(_, x, y)| (x, y)),
        TargetKind::Door => memory
            .known_doors(state)
            .into_iter()
            .find(|&(c, _, _, _)| c == target.color)
            .map(|(_, _, x, y)| (x, y)),
    }
}

/// Nearest seen free floor cell adjacent to the agent, by (y, x) order.
/// This is where a carried key gets parked before picking up another.
fn free_adjacent_floor(state: &EnvState, memory: &ExplorationMemory) -> Option<(i32, i32)> {
    let mut cells: Vec<(i32, i32)> = Dir::ALL
        .iter()
        .map(|d| {
            let (dx, dy) = d.delta();
            (state.agent.x + dx, state.agent.y + dy)
        })
        .filter(|&(x, y)| {
            state.in_bounds(x, y) && memory.is_seen(x, y) && state.cell(x, y) == Cell::Floor
        })
        .collect();
    cells.sort_by_key(|&(x, y)| (y, x));
    cells.into_iter().next()
}

/// Passability for plans over known cells. Lava-naive planning (the
/// hazard-blind teacher mode) walks straight through lava.
fn known_passable<'a>(
    state: &'a EnvState,
    memory: &'a ExplorationMemory,
    lava_aware: bool,
) -> impl Fn(i32, i32) -> bool + 'a {
    move |x, y| {
        if !memory.is_seen(x, y) {
            return false;
        }
        match state.cell(x, y) {
            Cell::Floor => true,
            Cell::Door(_, gridworld::DoorState::Open) => true,
            Cell::Lava => !lava_aware,
            _ => false,
        }
    }
}

/// True when `option` makes behavioral sense in this knowledge state.
/// Execution may still fizzle mid-flight (paths can vanish); that ends
/// the option rather than failing here.
pub fn is_executable(option: OptionId, state: &EnvState, memory: &ExplorationMemory) -> bool {
    match option {
        // exploring a fully known room is wasteful (one Wait) but never
        // violates behavioral logic
        OptionId::Explore => true,
        OptionId::GoTo(t) => find_target(t, state, memory).is_some(),
        OptionId::Pickup(t) => {
            t.kind == TargetKind::Key
                && find_target(t, state, memory).is_some()
                && (state.agent.carrying.is_none()
                    || free_adjacent_floor(state, memory).is_some())
        }
        OptionId::Drop => {
            state.agent.carrying.is_some() && free_adjacent_floor(state, memory).is_some()
        }
        OptionId::Open(t) => t.kind == TargetKind::Door && find_target(t, state, memory).is_some(),
    }
}

/// Every option that can be named in this knowledge state, in canonical
/// order: the teacher's menu of K choices.
pub fn available_options(state: &EnvState, memory: &ExplorationMemory) -> Vec<OptionId> {
    let mut options = Vec::new();
    if memory.unexplored_remains(state) {
        options.push(OptionId::Explore);
    }
    let keys = memory.known_keys(state);
    let doors = memory.known_doors(state);
    for &(color, _, _) in &keys {
        options.push(OptionId::GoTo(Target::key(color)));
    }
    for &(color, _, _, _) in &doors {
        options.push(OptionId::GoTo(Target::door(color)));
    }
    for &(color, _, _) in &keys {
        options.push(OptionId::Pickup(Target::key(color)));
    }
    if state.agent.carrying.is_some() {
        options.push(OptionId::Drop);
    }
    for &(color, _, _, _) in &doors {
        options.push(OptionId::Open(Target::door(color)));
    }
    options
}

/// Minimal turn toward an adjacent cell; 180-degree turns go right.
fn turn_toward(current: Dir, from: (i32, i32), to: (i32, i32)) -> Action {
    let want = match (to.0 - from.0, to.1 - from.1) {
        (0, -1) => Dir::North,
        (1, 0) => Dir::East,
        (0, 1) => Dir::South,
        (-1, 0) => Dir::West,
        _ => unreachable!("turn_toward requires an adjacent cell"),
    };
    match (want.index() + 4 - current.index()) % 4 {
        1 | 2 => Action::TurnRight,
        3 => Action::TurnLeft,
        _ => unreachable!("already facing the target"),
    }
}

/// A running option: the id plus its step counter and planning mode.
#[derive(Debug, Clone)]
pub struct OptionState {
    pub option: OptionId,
    pub steps_taken: u32,
    /// When false, plans treat lava as ordinary floor. Used by the
    /// hazard-blind flawed teacher; everything else keeps it true.
    pub lava_aware: bool,
}

impl OptionState {
    pub fn new(option: OptionId) -> OptionState {
        OptionState { option, steps_taken: 0, lava_aware: true }
    }

    pub fn lava_naive(option: OptionId) -> OptionState {
        OptionState { option, steps_taken: 0, lava_aware: false }
    }

    /// Emits the next primitive action and whether the option is finished
    /// (either its own predicate or the 100-step cap). An option that has
    /// nothing left to do or became impossible yields (Wait, true).
    pub fn step(&mut self, state: &EnvState, memory: &ExplorationMemory) -> (Action, bool) {
        self.steps_taken += 1;
        let (action, done) = decide(self.option, state, memory, self.lava_aware);
        (action, done || self.steps_taken >= MAX_OPTION_STEPS)
    }
}

/// The next action of `option` without any option bookkeeping; this is
/// the Dirac distribution a soft instruction mixes over.
pub fn peek_action(
    option: OptionId,
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
) -> Action {
    decide(option, state, memory, lava_aware).0
}

fn decide(
    option: OptionId,
    state: &EnvState,
    memory: &ExplorationMemory,
    lava_aware: bool,
) -> (Action, bool) {
    let agent = state.agent;
    let pose = (agent.x, agent.y, agent.dir);
    let passable = known_passable(state, memory, lava_aware);
    match option {
        OptionId::Explore => {
            if !memory.unexplored_remains(state) {
                return (Action::Wait, true);
            }
            // head for the cheapest pose that faces a never-seen cell;
            // facing guarantees the view reveals it
            let plan = uniform_search(state.width, state.height, pose, &passable, |x, y, d| {
                let (dx, dy) = d.delta();
                let (ax, ay) = (x + dx, y + dy);
                state.in_bounds(ax, ay) && !memory.is_seen(ax, ay)
            });
            match plan {
                Some(p) if !p.is_empty() => (p[0], false),
                _ => (Action::Wait, true),
            }
        }
        OptionId::GoTo(t) => {
            let Some(goal) = find_target(t, state, memory) else {
                return (Action::Wait, true);
            };
            if agent.ahead() == goal {
                return (Action::Wait, true);
            }
            match astar(state.width, state.height, pose, goal, &passable) {
                Some(p) if p.len() == 1 => (p[0], true),
                Some(p) if !p.is_empty() => (p[0], false),
                _ => (Action::Wait, true),
            }
        }
        OptionId::Pickup(t) => {
            if t.kind != TargetKind::Key || agent.carrying == Some(t.color) {
                return (Action::Wait, true);
            }
            if agent.carrying.is_some() {
                // park the current key first
                let Some(cell) = free_adjacent_floor(state, memory) else {
                    return (Action::Wait, true);
                };
                if agent.ahead() == cell {
                    return (Action::Drop, false);
                }
                return (turn_toward(agent.dir, (agent.x, agent.y), cell), false);
            }
            let Some(goal) = find_target(t, state, memory) else {
                return (Action::Wait, true);
            };
            if agent.ahead() == goal {
                return (Action::Pickup, true);
            }
            match astar(state.width, state.height, pose, goal, &passable) {
                Some(p) if !p.is_empty() => (p[0], false),
                _ => (Action::Wait, true),
            }
        }
        OptionId::Drop => {
            if agent.carrying.is_none() {
                return (Action::Wait, true);
            }
            let Some(cell) = free_adjacent_floor(state, memory) else {
                return (Action::Wait, true);
            };
            if agent.ahead() == cell {
                (Action::Drop, true)
            } else {
                (turn_toward(agent.dir, (agent.x, agent.y), cell), false)
            }
        }
        OptionId::Open(t) => {
            let (ax, ay) = agent.ahead();
            if t.kind == TargetKind::Door
                && state.in_bounds(ax, ay)
                && matches!(state.cell(ax, ay), Cell::Door(c, _) if c == t.color)
            {
                (Action::Toggle, true)
            } else {
                (Action::Wait, true)
            }
        }
    }
}

/// Runs one option to completion (or episode end), stepping the
/// environment and the memory. Always takes at least one env step, so a
/// fizzled option costs exactly one Wait.
pub fn execute_option(
    state: &EnvState,
    memory: &mut ExplorationMemory,
    option: OptionId,
    lava_aware: bool,
) -> (EnvState, StepResult) {
    let mut opt = if lava_aware {
        OptionState::new(option)
    } else {
        OptionState::lava_naive(option)
    };
    let mut current = state.clone();
    loop {
        let (action, terminated) = opt.step(&current, memory);
        let (next, result) = gridworld::step(&current, action);
        memory.update(&next);
        current = next;
        if result.done || terminated {
            return (current, result);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate, AgentPose, DoorState, Outcome, TaskKind};

    fn fresh(task: TaskKind, seed: u64) -> (EnvState, ExplorationMemory) {
        let state = generate(task, seed).unwrap();
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        (state, memory)
    }

    /// Open room with a red key straight ahead and the door lurking
    /// behind the agent (unseen at start).
    fn key_ahead_room() -> (EnvState, ExplorationMemory) {
        let mut grid = vec![Cell::Floor; 81];
        for i in 0..9 {
            grid[i] = Cell::Wall;
            grid[72 + i] = Cell::Wall;
            grid[9 * i] = Cell::Wall;
            grid[9 * i + 8] = Cell::Wall;
        }
        let mut state = EnvState {
            width: 9,
            height: 9,
            grid,
            agent: AgentPose { x: 4, y: 6, dir: Dir::North, carrying: None },
            step_count: 0,
            max_steps: gridworld::MAX_STEPS,
            task: TaskKind::SimpleDoorKey,
            seed: 0,
        };
        state.set_cell(4, 2, Cell::Key(Color::Red));
        state.set_cell(4, 8, Cell::Door(Color::Red, DoorState::Locked));
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        (state, memory)
    }

    #[test]
    fn available_options_initial_view() {
        let (state, memory) = key_ahead_room();
        let options = available_options(&state, &memory);
        assert_eq!(
            options,
            vec![
                OptionId::Explore,
                OptionId::GoTo(Target::key(Color::Red)),
                OptionId::Pickup(Target::key(Color::Red)),
            ]
        );
    }

    #[test]
    fn canonical_index_is_injective_and_sorted() {
        let (state, memory) = key_ahead_room();
        let options = available_options(&state, &memory);
        let indices: Vec<_> = options.iter().map(|o| o.canonical_index()).collect();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(indices, sorted);
    }

    #[test]
    fn goto_terminates_adjacent_and_facing() {
        let (state, memory) = key_ahead_room();
        // key 4 cells ahead: 3 forwards, the last one terminating
        let mut opt = OptionState::new(OptionId::GoTo(Target::key(Color::Red)));
        let (a1, t1) = opt.step(&state, &memory);
        assert_eq!((a1, t1), (Action::Forward, false));
        let (s1, _) = gridworld::step(&state, a1);
        let (a2, t2) = opt.step(&s1, &memory);
        assert_eq!((a2, t2), (Action::Forward, false));
        let (s2, _) = gridworld::step(&s1, a2);
        let (a3, t3) = opt.step(&s2, &memory);
        assert_eq!((a3, t3), (Action::Forward, true));
        let (s3, _) = gridworld::step(&s2, a3);
        assert_eq!(s3.agent.ahead(), (4, 2));
    }

    #[test]
    fn pickup_drops_current_key_first() {
        let (mut state, mut memory) = key_ahead_room();
        state.agent.carrying = Some(Color::Blue);
        memory.update(&state);
        assert!(is_executable(
            OptionId::Pickup(Target::key(Color::Red)),
            &state,
            &memory
        ));
        let (end, _) = execute_option(
            &state,
            &mut memory,
            OptionId::Pickup(Target::key(Color::Red)),
            true,
        );
        assert_eq!(end.agent.carrying, Some(Color::Red));
        // the blue key is parked somewhere on the floor
        let blue_on_grid = end.grid.contains(&Cell::Key(Color::Blue));
        assert!(blue_on_grid);
    }

    #[test]
    fn drop_without_carrying_is_unexecutable() {
        let (state, memory) = key_ahead_room();
        assert!(!is_executable(OptionId::Drop, &state, &memory));
        let mut opt = OptionState::new(OptionId::Drop);
        assert_eq!(opt.step(&state, &memory), (Action::Wait, true));
    }

    #[test]
    fn goto_unobserved_door_is_unexecutable() {
        let (state, memory) = key_ahead_room();
        assert!(!is_executable(
            OptionId::GoTo(Target::door(Color::Red)),
            &state,
            &memory
        ));
    }

    #[test]
    fn open_is_single_toggle_when_facing() {
        let (mut state, mut memory) = key_ahead_room();
        state.agent = AgentPose { x: 4, y: 7, dir: Dir::South, carrying: Some(Color::Red) };
        memory.update(&state);
        let mut opt = OptionState::new(OptionId::Open(Target::door(Color::Red)));
        assert_eq!(opt.step(&state, &memory), (Action::Toggle, true));
    }

    #[test]
    fn option_cap_forces_termination() {
        let (state, memory) = key_ahead_room();
        let mut opt = OptionState::new(OptionId::Explore);
        opt.steps_taken = MAX_OPTION_STEPS - 1;
        let (_, terminated) = opt.step(&state, &memory);
        assert!(terminated);
    }

    #[test]
    fn explore_sees_every_reachable_cell_within_cap() {
        for seed in [0, 1, 2, 3, 4, 5, 6, 7] {
            let (state, mut memory) = fresh(TaskKind::SimpleDoorKey, seed);
            let mut current = state;
            let mut steps = 0u32;
            while memory.unexplored_remains(&current) {
                let before = current.step_count;
                let (next, res) = execute_option(&current, &mut memory, OptionId::Explore, true);
                steps += next.step_count - before;
                assert!(!res.done, "explore must not end the episode");
                current = next;
                assert!(steps <= MAX_OPTION_STEPS, "seed {seed}: {steps} steps");
            }
            // closure reached: no reachable cell borders unseen space
            assert!(!memory.unexplored_remains(&current));
        }
    }

    #[test]
    fn oracle_pipeline_smoke() {
        // explore, pick up the key, walk to the door, open it
        for seed in 0..25u64 {
            let (state, mut memory) = fresh(TaskKind::SimpleDoorKey, seed);
            let mut current = state;
            while memory.unexplored_remains(&current) {
                let (next, res) = execute_option(&current, &mut memory, OptionId::Explore, true);
                assert!(!res.done);
                current = next;
            }
            let color = current.door_color();
            let (after_pickup, _) = execute_option(
                &current,
                &mut memory,
                OptionId::Pickup(Target::key(color)),
                true,
            );
            assert_eq!(after_pickup.agent.carrying, Some(color), "seed {seed}");
            let (at_door, _) = execute_option(
                &after_pickup,
                &mut memory,
                OptionId::GoTo(Target::door(color)),
                true,
            );
            let (done, res) =
                execute_option(&at_door, &mut memory, OptionId::Open(Target::door(color)), true);
            assert_eq!(res.outcome, Outcome::Success, "seed {seed}");
            assert!(done.is_terminal());
        }
    }

    #[test]
    fn lava_naive_plans_through_lava() {
        // straight line to the key is blocked by lava; the naive planner
        // walks in anyway, the aware one detours
        let (mut state, _) = key_ahead_room();
        state.task = TaskKind::LavaDoorKey;
        state.set_cell(4, 4, Cell::Lava);
        state.set_cell(3, 4, Cell::Lava);
        state.set_cell(5, 4, Cell::Lava);
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        // make the whole room known so both planners see the lava
        let mut probe = state.clone();
        for y in 1..8 {
            for x in 1..8 {
                if state.cell(x, y).walkable() {
                    for dir in Dir::ALL {
                        probe.agent = AgentPose { x, y, dir, carrying: None };
                        memory.update(&probe);
                    }
                }
            }
        }
        let naive = peek_action(OptionId::GoTo(Target::key(Color::Red)), &state, &memory, false);
        assert_eq!(naive, Action::Forward);
        let (_, res) = execute_option(
            &state,
            &mut memory.clone(),
            OptionId::GoTo(Target::key(Color::Red)),
            false,
        );
        assert_eq!(res.outcome, Outcome::Death);
        assert!(res.done);
        let (_, res_aware) = execute_option(
            &state,
            &mut memory.clone(),
            OptionId::GoTo(Target::key(Color::Red)),
            true,
        );
        assert_eq!(res_aware.outcome, Outcome::Ongoing);
    }

    #[test]
    fn option_actions_are_dirac() {
        // peek_action is a function, so each option's distribution puts
        // all mass on one action; spot-check consistency across calls
        let (state, memory) = fresh(TaskKind::ColoredDoorKey, 12);
        for option in available_options(&state, &memory) {
            let a = peek_action(option, &state, &memory, true);
            let b = peek_action(option, &state, &memory, true);
            assert_eq!(a, b);
        }
    }
}
