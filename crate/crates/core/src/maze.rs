//! Gridworld mazes from ASCII layouts.
//!
//! `#` is a wall, `S` the start, `G` the absorbing goal, `d` a deceptive
//! cell that pays a small reward on every step spent in it, and `.` open
//! floor. Actions are `N, S, E, W`; moving into a wall or off the grid
//! leaves the agent in place.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{DecisionProcess, State};

pub const MAZE_ACTIONS: [&str; 4] = ["N", "S", "E", "W"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSpec {
    pub layout: Vec<String>,
    /// Paid on the step that enters the goal.
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    /// Paid on every step taken from a deceptive cell.
    #[serde(default = "default_deceptive_reward")]
    pub deceptive_reward: f64,
    /// Paid on every other non-goal step.
    #[serde(default)]
    pub step_reward: f64,
}

fn default_goal_reward() -> f64 {
    1.0
}

fn default_deceptive_reward() -> f64 {
    0.1
}

impl MazeSpec {
    pub fn new(layout: &[&str]) -> Self {
        Self {
            layout: layout.iter().map(|s| s.to_string()).collect(),
            goal_reward: default_goal_reward(),
            deceptive_reward: default_deceptive_reward(),
            step_reward: 0.0,
        }
    }
}

/// The layout the optimizer experiments use: the deceptive cell sits two
/// steps below the start, the goal twelve steps away around a wall. At
/// `γ = 0.9` plain ES settles in the pocket.
pub const DECEPTIVE_MAZE: [&str; 5] = [
    "S.#.G",
    "..#.#",
    "d.#..",
    "..#..",
    ".....",
];

/// Discount rate the deceptive maze is tuned for.
pub const DECEPTIVE_GAMMA: f64 = 0.9;

pub fn deceptive_maze() -> MazeSpec {
    MazeSpec {
        deceptive_reward: 0.02,
        ..MazeSpec::new(&DECEPTIVE_MAZE)
    }
}

pub fn build_maze(spec: &MazeSpec) -> Result<DecisionProcess> {
    let rows: Vec<Vec<char>> = spec.layout.iter().map(|r| r.chars().collect()).collect();
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::InvalidProcess("empty maze layout".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidProcess("maze layout is not rectangular".into()));
    }
    let mut index = vec![vec![None; width]; rows.len()];
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let (mut start, mut goal) = (None, None);
    let mut deceptive = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, &ch) in row.iter().enumerate() {
            match ch {
                '#' => continue,
                '.' | 'S' | 'G' | 'd' => {}
                other => {
                    return Err(Error::InvalidProcess(format!(
                        "unknown maze cell {other:?} at ({r}, {c})"
                    )))
                }
            }
            let s = positions.len();
            index[r][c] = Some(s);
            positions.push((r, c));
            labels.push(format!("{ch}({r},{c})"));
            match ch {
                'S' if start.replace(s).is_some() => {
                    return Err(Error::InvalidProcess("maze has two starts".into()))
                }
                'G' if goal.replace(s).is_some() => {
                    return Err(Error::InvalidProcess("maze has two goals".into()))
                }
                'd' => deceptive.push(s),
                _ => {}
            }
        }
    }
    let start = start.ok_or_else(|| Error::InvalidProcess("maze has no start".into()))?;
    let goal = goal.ok_or_else(|| Error::InvalidProcess("maze has no goal".into()))?;
    let n = positions.len();
    let step = |s: State, a: usize| -> State {
        let (r, c) = positions[s];
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr as usize >= rows.len() || nc as usize >= width {
            return s;
        }
        index[nr as usize][nc as usize].unwrap_or(s)
    };
    let mut transition = vec![vec![vec![0.0; n]; 4]; n];
    let mut reward = vec![vec![0.0; 4]; n];
    for s in 0..n {
        for a in 0..4 {
            let next = if s == goal { goal } else { step(s, a) };
            transition[s][a][next] = 1.0;
            reward[s][a] = if s == goal {
                0.0
            } else if next == goal {
                spec.goal_reward
            } else if deceptive.contains(&s) {
                spec.deceptive_reward
            } else {
                spec.step_reward
            };
        }
    }
    let mut initial = vec![0.0; n];
    initial[start] = 1.0;
    let mut process = DecisionProcess::new(
        "maze",
        labels,
        MAZE_ACTIONS.iter().map(|s| s.to_string()).collect(),
        initial,
        transition,
        reward,
    )?
    .with_positions(positions.clone());

    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(s) = queue.pop_front() {
        for a in 0..4 {
            let t = step(s, a);
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    if !seen[goal] {
        process.push_warning("goal unreachable from start".into());
    }
    Ok(process)
}
