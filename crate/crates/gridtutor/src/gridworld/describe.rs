//! Canonical text views of the environment.
//!
//! `describe` narrates exactly what the agent has learned so far this
//! episode, in a fixed order with fixed phrasing, so two states carrying
//! identical knowledge produce byte-identical strings. Teacher answers
//! are cached on that string.

use std::fmt::Write;

use super::{Cell, Dir, DoorState, EnvState, ExplorationMemory};

fn agent_char(dir: Dir) -> char {
    match dir {
        Dir::North => '^',
        Dir::East => '>',
        Dir::South => 'v',
        Dir::West => '<',
    }
}

/// One map character per cell. Keys print uppercase when a door of the
/// same color is in `known_doors`, so a matching key stands out.
fn cell_char(cell: Cell, door_colors: &[super::Color]) -> char {
    match cell {
        Cell::Floor => '.',
        Cell::Wall => '#',
        Cell::Lava => '~',
        Cell::Key(c) => {
            if door_colors.contains(&c) {
                'K'
            } else {
                'k'
            }
        }
        Cell::Door(_, DoorState::Open) => 'd',
        Cell::Door(_, _) => 'D',
    }
}

/// Everything the agent knows, as canonical sentences plus a known-map
/// sketch ('?' marks cells never seen).
pub fn describe(state: &EnvState, memory: &ExplorationMemory) -> String {
    let keys = memory.known_keys(state);
    let doors = memory.known_doors(state);
    let lava = memory.known_lava(state);
    let door_colors: Vec<_> = doors.iter().map(|&(c, _, _, _)| c).collect();

    let mut text = String::new();
    writeln!(text, "Task: {}.", state.task.name()).unwrap();
    writeln!(
        text,
        "You are at ({}, {}), facing {}.",
        state.agent.x,
        state.agent.y,
        state.agent.dir.name()
    )
    .unwrap();
    match state.agent.carrying {
        Some(color) => writeln!(text, "You held a {color} key.").unwrap(),
        None => writeln!(text, "You held nothing.").unwrap(),
    }
    for (color, x, y) in &keys {
        writeln!(text, "You saw a {color} key at ({x}, {y}).").unwrap();
    }
    for (color, door_state, x, y) in &doors {
        writeln!(text, "You saw a {} {color} door at ({x}, {y}).", door_state.name()).unwrap();
    }
    for (x, y) in &lava {
        writeln!(text, "You saw lava at ({x}, {y}).").unwrap();
    }
    if memory.unexplored_remains(state) {
        writeln!(text, "Unexplored area remains.").unwrap();
    } else {
        writeln!(text, "The area is fully explored.").unwrap();
    }

    writeln!(text, "Known map:").unwrap();
    for y in 0..state.height {
        for x in 0..state.width {
            let ch = if (x, y) == (state.agent.x, state.agent.y) {
                agent_char(state.agent.dir)
            } else if memory.is_seen(x, y) {
                cell_char(state.cell(x, y), &door_colors)
            } else {
                '?'
            };
            text.push(ch);
        }
        text.push('\n');
    }
    text
}

/// Full-knowledge map for debugging and episode dumps, with a legend
/// naming each key and door.
pub fn render(state: &EnvState) -> String {
    let door_colors = vec![state.door_color()];
    let mut text = String::new();
    for y in 0..state.height {
        for x in 0..state.width {
            let ch = if (x, y) == (state.agent.x, state.agent.y) {
                agent_char(state.agent.dir)
            } else {
                cell_char(state.cell(x, y), &door_colors)
            };
            text.push(ch);
        }
        text.push('\n');
    }
    for y in 0..state.height {
        for x in 0..state.width {
            match state.cell(x, y) {
                Cell::Key(c) => {
                    let ch = cell_char(state.cell(x, y), &door_colors);
                    writeln!(text, "{ch} = {c} key at ({x}, {y})").unwrap();
                }
                Cell::Door(c, s) => {
                    let ch = cell_char(state.cell(x, y), &door_colors);
                    writeln!(text, "{ch} = {} {c} door at ({x}, {y})", s.name()).unwrap();
                }
                _ => {}
            }
        }
    }
    if let Some(color) = state.agent.carrying {
        writeln!(text, "carrying a {color} key").unwrap();
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate, observe, AgentPose, Color, ObsKind, TaskKind};

    fn seen_everything(state: &EnvState) -> ExplorationMemory {
        let mut memory = ExplorationMemory::new(state);
        // mark views from every walkable pose; independent of the option
        // machinery
        let mut probe = state.clone();
        for y in 0..state.height {
            for x in 0..state.width {
                if state.cell(x, y).walkable() || (x, y) == (state.agent.x, state.agent.y) {
                    for dir in Dir::ALL {
                        probe.agent = AgentPose { x, y, dir, carrying: state.agent.carrying };
                        memory.update(&probe);
                    }
                }
            }
        }
        memory
    }

    #[test]
    fn phrasing_covers_seen_and_held() {
        let mut state = generate(TaskKind::SimpleDoorKey, 3).unwrap();
        // force a red key into view knowledge and a blue key into hand
        let (kx, ky) = (0..state.height)
            .flat_map(|y| (0..state.width).map(move |x| (x, y)))
            .find(|&(x, y)| matches!(state.cell(x, y), Cell::Key(_)))
            .unwrap();
        state.set_cell(kx, ky, Cell::Key(Color::Red));
        state.agent.carrying = Some(Color::Blue);
        let memory = seen_everything(&state);
        let text = describe(&state, &memory);
        assert!(text.contains("saw a red key"), "{text}");
        assert!(text.contains("held a blue key"), "{text}");
    }

    #[test]
    fn fresh_state_reports_unexplored() {
        let state = generate(TaskKind::SimpleDoorKey, 11).unwrap();
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        let text = describe(&state, &memory);
        assert!(text.contains("Unexplored area remains."), "{text}");
        // nothing outside the initial view may be narrated
        let obs = observe(&state);
        let seen_keys = memory.known_keys(&state).len();
        let keys_in_view = obs
            .view
            .iter()
            .flatten()
            .filter(|c| c.kind == ObsKind::Key)
            .count();
        assert_eq!(seen_keys, keys_in_view);
    }

    #[test]
    fn identical_knowledge_identical_text() {
        let state = generate(TaskKind::ColoredDoorKey, 5).unwrap();
        let mut m1 = ExplorationMemory::new(&state);
        m1.update(&state);
        let mut m2 = ExplorationMemory::new(&state);
        m2.update(&state);
        // different grids, same knowledge: mutate an unseen cell
        let mut other = state.clone();
        let hidden = (0..state.height)
            .flat_map(|y| (0..state.width).map(move |x| (x, y)))
            .find(|&(x, y)| !m1.is_seen(x, y) && state.cell(x, y) == Cell::Floor);
        if let Some((hx, hy)) = hidden {
            other.set_cell(hx, hy, Cell::Lava);
        }
        assert_eq!(describe(&state, &m1), describe(&other, &m2));
    }

    #[test]
    fn fully_explored_room_says_so() {
        let state = generate(TaskKind::SimpleDoorKey, 9).unwrap();
        let memory = seen_everything(&state);
        let text = describe(&state, &memory);
        assert!(text.contains("The area is fully explored."), "{text}");
    }

    #[test]
    fn render_marks_matching_key_uppercase() {
        let state = generate(TaskKind::ColoredDoorKey, 21).unwrap();
        let text = render(&state);
        assert!(text.contains('K'), "{text}");
        assert!(text.contains('D'), "{text}");
    }
}
