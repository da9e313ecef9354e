use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState, ExpertTrajectory};

/// A chunk of at most `k` expert actions with the state it starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    /// 0-based index of the first action in the trajectory.
    pub start: usize,
    pub actions: Vec<Action>,
    /// Stops emitted before `start`.
    pub stop_count: usize,
    /// Trajectory steps whose front views form the history, oldest first.
    pub history: Vec<usize>,
    pub state: AgentState,
}

/// Splits a trajectory into consecutive chunks of `k` actions; the last one
/// holds the remainder.
pub fn slice_trajectory(traj: &ExpertTrajectory, k: usize) -> Vec<Slice> {
    assert!(k > 0, "chunk size must be positive");
    let n = traj.actions.len();
    (0..n)
        .step_by(k)
        .map(|t| Slice {
            start: t,
            actions: traj.actions[t..(t + k).min(n)].to_vec(),
            stop_count: traj.actions[..t].iter().filter(|a| **a == Action::Stop).count(),
            history: (0..t).collect(),
            state: traj.states[t],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Heading, Observation, Pos};

    fn fake(n: usize) -> ExpertTrajectory {
        let s = AgentState::new(Pos::new(1, 1), Heading::N);
        ExpertTrajectory {
            observations: Vec::<Observation>::new(),
            actions: (0..n).map(|i| if i % 4 == 3 { Action::Stop } else { Action::Left }).collect(),
            states: vec![s; n],
            segment_lengths: vec![n],
            final_state: s,
        }
    }

    #[test]
    fn twelve_actions_make_three_slices() {
        let slices = slice_trajectory(&fake(12), 5);
        let starts: Vec<usize> = slices.iter().map(|s| s.start + 1).collect();
        assert_eq!(starts, vec![1, 6, 11]);
        let lens: Vec<usize> = slices.iter().map(|s| s.actions.len()).collect();
        assert_eq!(lens, vec![5, 5, 2]);
        assert_eq!(slices[1].stop_count, 1);
        assert_eq!(slices[2].history, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn exact_multiple() {
        assert_eq!(slice_trajectory(&fake(5), 5).len(), 1);
    }
}
