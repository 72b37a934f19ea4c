//! Procedural room generation and the BFS solvability oracle.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{AgentPose, Cell, Color, Dir, DoorState, EnvState, TaskKind, MAX_STEPS};

#[derive(Debug, Error)]
pub enum GenerateError {
    /// 1000 rejection-sampling attempts all produced unsolvable layouts;
    /// this signals a generator bug, not bad luck.
    #[error("no solvable {task:?} layout found for seed {seed} in {attempts} attempts")]
    Unsolvable { task: TaskKind, seed: u64, attempts: u32 },
}

const MAX_ATTEMPTS: u32 = 1000;

fn task_stream(task: TaskKind) -> u64 {
    match task {
        TaskKind::SimpleDoorKey => 1,
        TaskKind::LavaDoorKey => 2,
        TaskKind::ColoredDoorKey => 3,
    }
}

/// Builds a solvable room as a deterministic function of (task, seed).
///
/// Interior size is uniform on 5x5..10x10; the border is wall except one
/// locked exit door on a non-corner border cell. Rejected layouts keep
/// drawing from the same rng stream, so retries stay reproducible.
pub fn generate(task: TaskKind, seed: u64) -> Result<EnvState, GenerateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, task_stream(task)));
    for _ in 0..MAX_ATTEMPTS {
        let state = generate_attempt(task, seed, &mut rng);
        if solvable_by_bfs(&state) {
            return Ok(state);
        }
    }
    Err(GenerateError::Unsolvable { task, seed, attempts: MAX_ATTEMPTS })
}

fn generate_attempt(task: TaskKind, seed: u64, rng: &mut ChaCha8Rng) -> EnvState {
    let iw = rng.gen_range(5..=10);
    let ih = rng.gen_range(5..=10);
    let (width, height) = (iw + 2, ih + 2);

    let mut grid = vec![Cell::Floor; (width * height) as usize];
    for x in 0..width {
        grid[x as usize] = Cell::Wall;
        grid[((height - 1) * width + x) as usize] = Cell::Wall;
    }
    for y in 0..height {
        grid[(y * width) as usize] = Cell::Wall;
        grid[(y * width + width - 1) as usize] = Cell::Wall;
    }

    // exit door on a non-corner border cell
    let door_color = Color::ALL[rng.gen_range(0..Color::ALL.len())];
    let (dx, dy) = match rng.gen_range(0..4) {
        0 => (rng.gen_range(1..width - 1), 0),
        1 => (width - 1, rng.gen_range(1..height - 1)),
        2 => (rng.gen_range(1..width - 1), height - 1),
        _ => (0, rng.gen_range(1..height - 1)),
    };
    grid[(dy * width + dx) as usize] = Cell::Door(door_color, DoorState::Locked);

    let mut open_cells: Vec<(i32, i32)> = (1..height - 1)
        .flat_map(|y| (1..width - 1).map(move |x| (x, y)))
        .collect();
    let take_cell = |rng: &mut ChaCha8Rng, cells: &mut Vec<(i32, i32)>| {
        cells.swap_remove(rng.gen_range(0..cells.len()))
    };

    let key_colors: Vec<Color> = match task {
        TaskKind::SimpleDoorKey | TaskKind::LavaDoorKey => vec![door_color],
        TaskKind::ColoredDoorKey => {
            let mut others: Vec<Color> =
                Color::ALL.iter().copied().filter(|&c| c != door_color).collect();
            others.shuffle(rng);
            let extra = rng.gen_range(1..=2);
            let mut colors = vec![door_color];
            colors.extend(others.into_iter().take(extra));
            colors.shuffle(rng);
            colors
        }
    };
    for color in key_colors {
        let (x, y) = take_cell(rng, &mut open_cells);
        grid[(y * width + x) as usize] = Cell::Key(color);
    }

    let (ax, ay) = take_cell(rng, &mut open_cells);
    let agent = AgentPose {
        x: ax,
        y: ay,
        dir: Dir::ALL[rng.gen_range(0..4)],
        carrying: None,
    };

    if task == TaskKind::LavaDoorKey {
        let lava_count = rng.gen_range(1..=4).min(open_cells.len());
        for _ in 0..lava_count {
            let (x, y) = take_cell(rng, &mut open_cells);
            grid[(y * width + x) as usize] = Cell::Lava;
        }
    }

    EnvState {
        width,
        height,
        grid,
        agent,
        step_count: 0,
        max_steps: MAX_STEPS,
        task,
        seed,
    }
}

/// Flood fill over plain floor. `freed` treats one key cell as floor,
/// modelling the state after that key was picked up.
fn floor_region(state: &EnvState, freed: Option<(i32, i32)>) -> Vec<bool> {
    let mut region = vec![false; (state.width * state.height) as usize];
    let start = (state.agent.x, state.agent.y);
    region[(start.1 * state.width + start.0) as usize] = true;
    let mut stack = vec![start];
    while let Some((x, y)) = stack.pop() {
        for (ddx, ddy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
            let (nx, ny) = (x + ddx, y + ddy);
            if !state.in_bounds(nx, ny) {
                continue;
            }
            let idx = (ny * state.width + nx) as usize;
            if region[idx] {
                continue;
            }
            let passable = state.cell(nx, ny) == Cell::Floor || freed == Some((nx, ny));
            if passable {
                region[idx] = true;
                stack.push((nx, ny));
            }
        }
    }
    region
}

/// Success-plan oracle, independent of the option machinery.
///
/// Treats lava, keys and the locked door as obstacles and checks the two
/// subgoals in order: reach a cell adjacent to the door-colored key, then
/// (with that key cell freed) reach the cell adjacent to the door.
pub fn solvable_by_bfs(state: &EnvState) -> bool {
    let door_color = state.door_color();
    let (dx, dy) = state.door_pos();
    let key_pos = (0..state.height)
        .flat_map(|y| (0..state.width).map(move |x| (x, y)))
        .find(|&(x, y)| state.cell(x, y) == Cell::Key(door_color));
    let Some((kx, ky)) = key_pos else {
        return state.agent.carrying == Some(door_color) && {
            // degenerate mid-episode state: key already carried
            let region = floor_region(state, None);
            adjacent_reached(state, &region, dx, dy)
        };
    };

    let phase1 = floor_region(state, None);
    if !adjacent_reached(state, &phase1, kx, ky) {
        return false;
    }
    let phase2 = floor_region(state, Some((kx, ky)));
    adjacent_reached(state, &phase2, dx, dy)
}

fn adjacent_reached(state: &EnvState, region: &[bool], x: i32, y: i32) -> bool {
    [(0, -1), (1, 0), (0, 1), (-1, 0)].iter().any(|&(ddx, ddy)| {
        let (nx, ny) = (x + ddx, y + ddy);
        state.in_bounds(nx, ny) && region[(ny * state.width + nx) as usize]
    })
}
