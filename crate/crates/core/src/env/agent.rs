use serde::{Deserialize, Serialize};

use super::world::{GridWorld, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn left(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Heading {
        Self::from_index(self.index() + 1)
    }

    /// Unit step on the grid (`y` grows southwards).
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Forward,
    Left,
    Right,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::Left, Action::Right, Action::Stop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Pos,
    pub heading: Heading,
    pub steps_taken: u32,
    pub stops_emitted: u32,
}

impl AgentState {
    pub fn new(pos: Pos, heading: Heading) -> Self {
        Self {
            pos,
            heading,
            steps_taken: 0,
            stops_emitted: 0,
        }
    }

    pub fn ahead(&self) -> Pos {
        let (dx, dy) = self.heading.delta();
        Pos::new(self.pos.x + dx, self.pos.y + dy)
    }
}

/// Applies one action. Blocked forward moves leave the position unchanged;
/// every action counts as a step.
pub fn step(world: &GridWorld, state: &AgentState, action: Action) -> AgentState {
    let mut next = *state;
    next.steps_taken += 1;
    match action {
        Action::Forward => {
            let target = state.ahead();
            if world.is_floor(target) {
                next.pos = target;
            }
        }
        Action::Left => next.heading = state.heading.left(),
        Action::Right => next.heading = state.heading.right(),
        Action::Stop => next.stops_emitted += 1,
    }
    next
}

/// Replays `actions` from `start`, returning every visited state (start included).
pub fn replay(world: &GridWorld, start: &AgentState, actions: &[Action]) -> Vec<AgentState> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(*start);
    let mut s = *start;
    for &a in actions {
        s = step(world, &s, a);
        states.push(s);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::world::tests::open_world;

    #[test]
    fn forward_moves_north() {
        let w = open_world(8, 8, &[]);
        let s = AgentState::new(Pos::new(3, 3), Heading::N);
        let n = step(&w, &s, Action::Forward);
        assert_eq!(n.pos, Pos::new(3, 2));
        assert_eq!(n.steps_taken, 1);
    }

    #[test]
    fn left_from_north_is_west() {
        let w = open_world(8, 8, &[]);
        let s = AgentState::new(Pos::new(3, 3), Heading::N);
        let n = step(&w, &s, Action::Left);
        assert_eq!(n.heading, Heading::W);
        assert_eq!(n.pos, s.pos);
    }

    #[test]
    fn blocked_forward_is_noop_but_counts() {
        let w = open_world(8, 8, &[]);
        let s = AgentState::new(Pos::new(1, 1), Heading::N);
        let n = step(&w, &s, Action::Forward);
        assert_eq!(n.pos, s.pos);
        assert_eq!(n.steps_taken, 1);
    }

    #[test]
    fn stop_counts_stops() {
        let w = open_world(8, 8, &[]);
        let s = AgentState::new(Pos::new(2, 2), Heading::E);
        let n = step(&w, &s, Action::Stop);
        assert_eq!((n.pos, n.heading, n.stops_emitted), (s.pos, s.heading, 1));
    }

    #[test]
    fn turning_cycles() {
        for h in Heading::ALL {
            assert_eq!(h.left().left().left().left(), h);
            assert_eq!(h.left().right(), h);
        }
    }
}
