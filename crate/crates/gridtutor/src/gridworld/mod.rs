//! Seeded, partially observable DoorKey gridworlds.
//!
//! Three procedurally generated tasks share one simulator: `SimpleDoorKey`
//! (one key, one exit door), `LavaDoorKey` (hazard cells that kill on
//! contact) and `ColoredDoorKey` (several keys, only the color-matched one
//! unlocks the door). The episode succeeds the moment the exit door opens;
//! success reward is `1 - 0.9 * step_count / max_steps`, everything else
//! pays zero.
//!
//! `EnvState` is a plain value: stepping consumes nothing and mutates
//! nothing shared, so independent episodes can run side by side.

mod describe;
mod generate;
mod seeds;

pub use describe::{describe, render};
pub use generate::{generate, solvable_by_bfs, GenerateError};
pub use seeds::{test_seeds, training_seed, write_seed_file, TEST_SEED_COUNT};

use serde::{Deserialize, Serialize};

/// Key/door colors in their fixed encoding and tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Grey,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
        Color::Grey,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
            Color::Grey => "grey",
        }
    }
}

impl std::fmt::Display for Color {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoorState {
    Locked,
    Closed,
    Open,
}

impl DoorState {
    pub fn name(self) -> &'static str {
        match self {
            DoorState::Locked => "locked",
            DoorState::Closed => "closed",
            DoorState::Open => "open",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Floor,
    Wall,
    Lava,
    Key(Color),
    Door(Color, DoorState),
}

impl Cell {
    /// True if the agent may stand here.
    pub fn walkable(self) -> bool {
        matches!(self, Cell::Floor | Cell::Door(_, DoorState::Open))
    }

    /// True if sight propagates through this cell.
    pub fn transparent(self) -> bool {
        !matches!(self, Cell::Wall | Cell::Door(_, DoorState::Locked | DoorState::Closed))
    }
}

/// Facing direction; the declared order (N < E < S < W) is also the
/// planner's tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    /// (dx, dy) with y growing downward.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (0, -1),
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
        }
    }

    pub fn left(self) -> Dir {
        match self {
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
            Dir::East => Dir::North,
        }
    }

    pub fn right(self) -> Dir {
        match self {
            Dir::North => Dir::East,
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::North => "north",
            Dir::East => "east",
            Dir::South => "south",
            Dir::West => "west",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    pub dir: Dir,
    /// Key currently carried, if any.
    pub carrying: Option<Color>,
}

impl AgentPose {
    /// Position of the cell directly ahead.
    pub fn ahead(&self) -> (i32, i32) {
        let (dx, dy) = self.dir.delta();
        (self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    SimpleDoorKey,
    LavaDoorKey,
    ColoredDoorKey,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::SimpleDoorKey,
        TaskKind::LavaDoorKey,
        TaskKind::ColoredDoorKey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SimpleDoorKey => "SimpleDoorKey",
            TaskKind::LavaDoorKey => "LavaDoorKey",
            TaskKind::ColoredDoorKey => "ColoredDoorKey",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "simpledoorkey" | "simple" => Ok(TaskKind::SimpleDoorKey),
            "lavadoorkey" | "lava" => Ok(TaskKind::LavaDoorKey),
            "coloreddoorkey" | "colored" => Ok(TaskKind::ColoredDoorKey),
            _ => Err(format!("unknown task '{s}'")),
        }
    }
}

/// Episode cap shared by all tasks.
pub const MAX_STEPS: u32 = 150;

/// Primitive actions in their frozen index order 0..6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Wait = 6,
}

impl Action {
    pub const COUNT: usize = 7;
    pub const ALL: [Action; 7] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Wait,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

/// Full simulator state. A pure value; `step` returns the successor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub width: i32,
    pub height: i32,
    /// Row-major cells, index `y * width + x`.
    pub grid: Vec<Cell>,
    pub agent: AgentPose,
    pub step_count: u32,
    pub max_steps: u32,
    pub task: TaskKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Success,
    Timeout,
    Death,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

impl EnvState {
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && x < self.width && y >= 0 && y < self.height
    }

    pub fn cell(&self, x: i32, y: i32) -> Cell {
        debug_assert!(self.in_bounds(x, y));
        self.grid[(y * self.width + x) as usize]
    }

    pub fn set_cell(&mut self, x: i32, y: i32, cell: Cell) {
        debug_assert!(self.in_bounds(x, y));
        self.grid[(y * self.width + x) as usize] = cell;
    }

    /// The unique exit door's position.
    pub fn door_pos(&self) -> (i32, i32) {
        for y in 0..self.height {
            for x in 0..self.width {
                if matches!(self.cell(x, y), Cell::Door(..)) {
                    return (x, y);
                }
            }
        }
        unreachable!("generated state always contains exactly one door")
    }

    pub fn door_color(&self) -> Color {
        let (x, y) = self.door_pos();
        match self.cell(x, y) {
            Cell::Door(c, _) => c,
            _ => unreachable!(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.step_count >= self.max_steps
            || matches!(
                self.cell(self.door_pos().0, self.door_pos().1),
                Cell::Door(_, DoorState::Open)
            )
    }
}

/// Advances the episode by one action.
///
/// Invalid actions are silent no-ops that still consume a step. Walking
/// into lava terminates with `Outcome::Death` before the move is recorded,
/// so the agent never occupies a lava cell.
pub fn step(state: &EnvState, action: Action) -> (EnvState, StepResult) {
    debug_assert!(!state.is_terminal(), "step on a terminal state");
    let mut next = state.clone();
    next.step_count += 1;

    let mut outcome = Outcome::Ongoing;
    match action {
        Action::TurnLeft => next.agent.dir = next.agent.dir.left(),
        Action::TurnRight => next.agent.dir = next.agent.dir.right(),
        Action::Forward => {
            let (tx, ty) = next.agent.ahead();
            if next.in_bounds(tx, ty) {
                match next.cell(tx, ty) {
                    Cell::Lava => outcome = Outcome::Death,
                    c if c.walkable() => {
                        next.agent.x = tx;
                        next.agent.y = ty;
                    }
                    _ => {}
                }
            }
        }
        Action::Pickup => {
            let (tx, ty) = next.agent.ahead();
            if next.agent.carrying.is_none() && next.in_bounds(tx, ty) {
                if let Cell::Key(color) = next.cell(tx, ty) {
                    next.set_cell(tx, ty, Cell::Floor);
                    next.agent.carrying = Some(color);
                }
            }
        }
        Action::Drop => {
            let (tx, ty) = next.agent.ahead();
            if let Some(color) = next.agent.carrying {
                if next.in_bounds(tx, ty) && next.cell(tx, ty) == Cell::Floor {
                    next.set_cell(tx, ty, Cell::Key(color));
                    next.agent.carrying = None;
                }
            }
        }
        Action::Toggle => {
            let (tx, ty) = next.agent.ahead();
            if next.in_bounds(tx, ty) {
                if let Cell::Door(color, door_state) = next.cell(tx, ty) {
                    let opens = match door_state {
                        DoorState::Closed => true,
                        DoorState::Locked => next.agent.carrying == Some(color),
                        DoorState::Open => false,
                    };
                    if opens {
                        next.set_cell(tx, ty, Cell::Door(color, DoorState::Open));
                        outcome = Outcome::Success;
                    }
                }
            }
        }
        Action::Wait => {}
    }

    if outcome == Outcome::Ongoing && next.step_count >= next.max_steps {
        outcome = Outcome::Timeout;
    }

    let reward = match outcome {
        Outcome::Success => 1.0 - 0.9 * (f64::from(next.step_count) / f64::from(next.max_steps)),
        _ => 0.0,
    };
    let result = StepResult {
        reward,
        done: outcome != Outcome::Ongoing,
        outcome,
    };
    (next, result)
}

/// Cell kinds as seen through an observation, including the occluded
/// marker. Index order is frozen for the one-hot encoding (8 slots, the
/// last two reserved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum ObsKind {
    Unseen = 0,
    Floor = 1,
    Wall = 2,
    Lava = 3,
    Key = 4,
    Door = 5,
}

pub const OBS_KIND_SLOTS: usize = 8;

/// One observed cell: kind, color (keys/doors), door state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsCell {
    pub kind: ObsKind,
    pub color: Option<Color>,
    pub door_state: Option<DoorState>,
}

impl ObsCell {
    pub const UNSEEN: ObsCell = ObsCell {
        kind: ObsKind::Unseen,
        color: None,
        door_state: None,
    };

    fn from_cell(cell: Cell) -> ObsCell {
        match cell {
            Cell::Floor => ObsCell { kind: ObsKind::Floor, color: None, door_state: None },
            Cell::Wall => ObsCell { kind: ObsKind::Wall, color: None, door_state: None },
            Cell::Lava => ObsCell { kind: ObsKind::Lava, color: None, door_state: None },
            Cell::Key(c) => ObsCell { kind: ObsKind::Key, color: Some(c), door_state: None },
            Cell::Door(c, s) => ObsCell { kind: ObsKind::Door, color: Some(c), door_state: Some(s) },
        }
    }
}

pub const VIEW_SIZE: usize = 7;
/// Agent cell inside the view window: center of the bottom row, facing up.
pub const VIEW_AGENT: (usize, usize) = (3, 6);

/// Egocentric 7x7 observation; `view[vy][vx]`, unseen cells marked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub view: [[ObsCell; VIEW_SIZE]; VIEW_SIZE],
    pub carrying: Option<Color>,
}

/// World position of view cell `(vx, vy)` for the given pose.
fn view_to_world(agent: &AgentPose, vx: usize, vy: usize) -> (i32, i32) {
    let forward = VIEW_AGENT.1 as i32 - vy as i32;
    let right = vx as i32 - VIEW_AGENT.0 as i32;
    let (fx, fy) = agent.dir.delta();
    let (rx, ry) = agent.dir.right().delta();
    (agent.x + forward * fx + right * rx, agent.y + forward * fy + right * ry)
}

/// Renders the agent's egocentric view.
///
/// Visibility is a flood fill inside the 7x7 window: a cell is visible
/// when it is reachable from the agent cell through transparent cells
/// (everything except walls and unopened doors). Out-of-window paths do
/// not count; out-of-bounds cells are unseen.
pub fn observe(state: &EnvState) -> Observation {
    let mut visible = [[false; VIEW_SIZE]; VIEW_SIZE];
    let mut queue = std::collections::VecDeque::new();
    visible[VIEW_AGENT.1][VIEW_AGENT.0] = true;
    queue.push_back(VIEW_AGENT);

    while let Some((vx, vy)) = queue.pop_front() {
        let (wx, wy) = view_to_world(&state.agent, vx, vy);
        if !state.in_bounds(wx, wy) || !state.cell(wx, wy).transparent() {
            continue; // visible but does not propagate sight
        }
        let neighbors = [
            (vx.wrapping_sub(1), vy),
            (vx + 1, vy),
            (vx, vy.wrapping_sub(1)),
            (vx, vy + 1),
        ];
        for (nx, ny) in neighbors {
            if nx < VIEW_SIZE && ny < VIEW_SIZE && !visible[ny][nx] {
                visible[ny][nx] = true;
                queue.push_back((nx, ny));
            }
        }
    }

    let mut view = [[ObsCell::UNSEEN; VIEW_SIZE]; VIEW_SIZE];
    for vy in 0..VIEW_SIZE {
        for vx in 0..VIEW_SIZE {
            if !visible[vy][vx] {
                continue;
            }
            let (wx, wy) = view_to_world(&state.agent, vx, vy);
            if state.in_bounds(wx, wy) {
                view[vy][vx] = ObsCell::from_cell(state.cell(wx, wy));
            }
        }
    }
    Observation {
        view,
        carrying: state.agent.carrying,
    }
}

/// Which grid cells the agent has seen so far this episode, plus nothing
/// else: contents are read from the live grid (every mutation happens in
/// the agent's view, so seen cells are never stale).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationMemory {
    width: i32,
    height: i32,
    seen: Vec<bool>,
}

impl ExplorationMemory {
    pub fn new(state: &EnvState) -> ExplorationMemory {
        ExplorationMemory {
            width: state.width,
            height: state.height,
            seen: vec![false; (state.width * state.height) as usize],
        }
    }

    /// Marks every cell visible in the current state. Bits only flip
    /// false -> true.
    pub fn update(&mut self, state: &EnvState) {
        debug_assert_eq!((self.width, self.height), (state.width, state.height));
        let obs = observe(state);
        for vy in 0..VIEW_SIZE {
            for vx in 0..VIEW_SIZE {
                if obs.view[vy][vx].kind != ObsKind::Unseen {
                    let (wx, wy) = view_to_world(&state.agent, vx, vy);
                    if state.in_bounds(wx, wy) {
                        self.seen[(wy * self.width + wx) as usize] = true;
                    }
                }
            }
        }
    }

    pub fn is_seen(&self, x: i32, y: i32) -> bool {
        if x < 0 || x >= self.width || y < 0 || y >= self.height {
            return false;
        }
        self.seen[(y * self.width + x) as usize]
    }

    pub fn seen_count(&self) -> usize {
        self.seen.iter().filter(|&&b| b).count()
    }

    /// Known keys as `(color, x, y)`, sorted by color order then (y, x).
    pub fn known_keys(&self, state: &EnvState) -> Vec<(Color, i32, i32)> {
        let mut keys = Vec::new();
        for y in 0..state.height {
            for x in 0..state.width {
                if self.is_seen(x, y) {
                    if let Cell::Key(c) = state.cell(x, y) {
                        keys.push((c, x, y));
                    }
                }
            }
        }
        keys.sort_by_key(|&(c, x, y)| (c.index(), y, x));
        keys
    }

    /// Known doors as `(color, state, x, y)`, sorted by color then (y, x).
    pub fn known_doors(&self, state: &EnvState) -> Vec<(Color, DoorState, i32, i32)> {
        let mut doors = Vec::new();
        for y in 0..state.height {
            for x in 0..state.width {
                if self.is_seen(x, y) {
                    if let Cell::Door(c, s) = state.cell(x, y) {
                        doors.push((c, s, x, y));
                    }
                }
            }
        }
        doors.sort_by_key(|&(c, _, x, y)| (c.index(), y, x));
        doors
    }

    /// Known lava cells sorted by (y, x).
    pub fn known_lava(&self, state: &EnvState) -> Vec<(i32, i32)> {
        let mut lava = Vec::new();
        for y in 0..state.height {
            for x in 0..state.width {
                if self.is_seen(x, y) && state.cell(x, y) == Cell::Lava {
                    lava.push((x, y));
                }
            }
        }
        lava.sort_by_key(|&(x, y)| (y, x));
        lava
    }

    /// True while some cell reachable through known walkable cells still
    /// has an unseen in-bounds neighbor.
    pub fn unexplored_remains(&self, state: &EnvState) -> bool {
        let mut stack = vec![(state.agent.x, state.agent.y)];
        let mut visited = vec![false; (state.width * state.height) as usize];
        visited[(state.agent.y * state.width + state.agent.x) as usize] = true;
        while let Some((x, y)) = stack.pop() {
            for (dx, dy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
                let (nx, ny) = (x + dx, y + dy);
                if !state.in_bounds(nx, ny) {
                    continue;
                }
                if !self.is_seen(nx, ny) {
                    return true;
                }
                let idx = (ny * state.width + nx) as usize;
                if !visited[idx] && state.cell(nx, ny).walkable() {
                    visited[idx] = true;
                    stack.push((nx, ny));
                }
            }
        }
        false
    }
}
