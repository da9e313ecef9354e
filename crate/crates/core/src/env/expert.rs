//! Shortest-path expert and subtask success checks.

use std::collections::VecDeque;

use super::agent::{step, Action, AgentState, Heading};
use super::render::{render, Observation, RenderConfig};
use super::task::Task;
use super::world::{GridWorld, Pos};
use crate::error::{Error, Result};

/// Chebyshev radius within which a subgoal counts as reached.
pub const SUCCESS_RADIUS: i32 = 1;

pub fn check_subtask_success(world: &GridWorld, state: &AgentState, subgoal: usize) -> Result<bool> {
    let obj = world.object(subgoal)?;
    Ok(state.pos.chebyshev(obj.pos) <= SUCCESS_RADIUS)
}

const MOVES: [Action; 3] = [Action::Forward, Action::Left, Action::Right];

/// Breadth-first search over (cell, heading) for the fewest movement actions
/// that bring the agent within the success radius of `goal`. The returned
/// list does not include the terminating stop.
pub fn shortest_path(world: &GridWorld, from: &AgentState, goal: Pos) -> Option<Vec<Action>> {
    let w = world.width();
    let key = |p: Pos, h: Heading| ((p.y as usize * w + p.x as usize) * 4) + h.index();
    let total = world.width() * world.height() * 4;
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; total];
    let mut visited = vec![false; total];
    let start = key(from.pos, from.heading);
    visited[start] = true;
    let mut queue = VecDeque::from([(from.pos, from.heading)]);
    let mut found = None;
    while let Some((p, h)) = queue.pop_front() {
        if p.chebyshev(goal) <= SUCCESS_RADIUS {
            found = Some(key(p, h));
            break;
        }
        let probe = AgentState::new(p, h);
        for a in MOVES {
            let n = step(world, &probe, a);
            let k = key(n.pos, n.heading);
            if !visited[k] {
                visited[k] = true;
                parent[k] = Some((key(p, h), a));
                queue.push_back((n.pos, n.heading));
            }
        }
    }
    let mut k = found?;
    let mut actions = Vec::new();
    while k != start {
        let (prev, a) = parent[k].expect("bfs parent chain");
        actions.push(a);
        k = prev;
    }
    actions.reverse();
    Some(actions)
}

/// Expert demonstration: each action paired with the observation rendered
/// before it executes.
#[derive(Debug, Clone)]
pub struct ExpertTrajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    /// State before each action.
    pub states: Vec<AgentState>,
    /// Action count per subgoal segment, stop included.
    pub segment_lengths: Vec<usize>,
    pub final_state: AgentState,
}

impl ExpertTrajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Index of the subgoal each action belongs to.
    pub fn segment_of(&self, step_index: usize) -> usize {
        let mut acc = 0;
        for (i, &n) in self.segment_lengths.iter().enumerate() {
            acc += n;
            if step_index < acc {
                return i;
            }
        }
        self.segment_lengths.len().saturating_sub(1)
    }
}

/// Action sequences only, without rendering.
pub fn expert_actions(world: &GridWorld, start: &AgentState, subgoals: &[usize]) -> Result<Vec<Vec<Action>>> {
    let mut state = *start;
    let mut segments = Vec::with_capacity(subgoals.len());
    for &g in subgoals {
        let goal = world.object(g)?.pos;
        let mut seg = shortest_path(world, &state, goal).ok_or(Error::UnreachableGoal {
            subgoal: g,
            x: state.pos.x,
            y: state.pos.y,
        })?;
        seg.push(Action::Stop);
        for &a in &seg {
            state = step(world, &state, a);
        }
        segments.push(seg);
    }
    Ok(segments)
}

pub fn expert_trajectory(world: &GridWorld, task: &Task, render_cfg: &RenderConfig) -> Result<ExpertTrajectory> {
    let segments = expert_actions(world, &task.start, &task.subgoals)?;
    let mut state = task.start;
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut states = Vec::new();
    for seg in &segments {
        for &a in seg {
            observations.push(render(world, &state, render_cfg));
            states.push(state);
            actions.push(a);
            state = step(world, &state, a);
        }
    }
    Ok(ExpertTrajectory {
        observations,
        actions,
        states,
        segment_lengths: segments.iter().map(Vec::len).collect(),
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::world::tests::open_world;
    use crate::env::world::{Color, ObjectKind};

    #[test]
    fn object_four_ahead_takes_three_forwards() {
        // within radius 1 after three moves
        let w = open_world(12, 12, &[(Color::Red, ObjectKind::Chest, Pos::new(5, 2))]);
        let s = AgentState::new(Pos::new(5, 6), Heading::N);
        let segs = expert_actions(&w, &s, &[0]).unwrap();
        assert_eq!(segs[0], vec![Action::Forward, Action::Forward, Action::Forward, Action::Stop]);
    }

    #[test]
    fn object_three_ahead_takes_two_forwards() {
        let w = open_world(12, 12, &[(Color::Red, ObjectKind::Chest, Pos::new(5, 3))]);
        let s = AgentState::new(Pos::new(5, 6), Heading::N);
        let segs = expert_actions(&w, &s, &[0]).unwrap();
        assert_eq!(segs[0], vec![Action::Forward, Action::Forward, Action::Stop]);
    }

    #[test]
    fn goal_at_start_is_single_stop() {
        let w = open_world(8, 8, &[(Color::Red, ObjectKind::Chest, Pos::new(3, 3))]);
        let s = AgentState::new(Pos::new(3, 3), Heading::E);
        assert_eq!(expert_actions(&w, &s, &[0]).unwrap()[0], vec![Action::Stop]);
    }

    #[test]
    fn success_radius() {
        let w = open_world(10, 10, &[(Color::Blue, ObjectKind::Box, Pos::new(4, 4))]);
        let at = |x, y| AgentState::new(Pos::new(x, y), Heading::N);
        assert!(check_subtask_success(&w, &at(5, 5), 0).unwrap());
        assert!(check_subtask_success(&w, &at(4, 4), 0).unwrap());
        assert!(!check_subtask_success(&w, &at(6, 4), 0).unwrap());
        assert!(matches!(check_subtask_success(&w, &at(6, 4), 3), Err(Error::UnknownSubgoal(3))));
    }
}
