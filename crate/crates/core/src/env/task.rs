use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{AgentState, Heading};
use super::expert::expert_actions;
use super::world::{generate_world, GridWorld, WorldConfig};
use crate::error::{Error, Result};

pub const MAX_SUBGOALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub instruction: Vec<String>,
    pub subgoals: Vec<usize>,
    pub start: AgentState,
    /// Per-subtask action budget.
    pub budgets: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub min_subgoals: usize,
    pub max_subgoals: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            min_subgoals: 1,
            max_subgoals: MAX_SUBGOALS,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_subgoals == 0 || self.min_subgoals > self.max_subgoals || self.max_subgoals > MAX_SUBGOALS {
            return Err(Error::InvalidConfig(format!(
                "subgoal range must satisfy 1 <= min <= max <= {MAX_SUBGOALS}"
            )));
        }
        Ok(())
    }
}

/// "go to the <color> <type>[ then <color> <type>]*"
pub fn instruction_for(world: &GridWorld, subgoals: &[usize]) -> Result<Vec<String>> {
    let mut words: Vec<String> = ["go", "to", "the"].iter().map(|s| s.to_string()).collect();
    for (i, &g) in subgoals.iter().enumerate() {
        let o = world.object(g)?;
        if i > 0 {
            words.push("then".into());
        }
        words.push(o.color.name().into());
        words.push(o.kind.name().into());
    }
    Ok(words)
}

/// Budget rule: twice the expert segment length plus ten.
pub fn action_budget(expert_segment_len: usize) -> u32 {
    (2 * expert_segment_len + 10) as u32
}

pub fn generate_task(world: &GridWorld, rng: &mut impl Rng, cfg: &TaskConfig) -> Result<Task> {
    cfg.validate()?;
    let n_objects = world.objects().len();
    let hi = cfg.max_subgoals.min(n_objects);
    if hi < cfg.min_subgoals {
        return Err(Error::InvalidConfig(format!(
            "world has {n_objects} objects but task needs {}",
            cfg.min_subgoals
        )));
    }
    let n = rng.random_range(cfg.min_subgoals..=hi);
    let mut ids: Vec<usize> = (0..n_objects).collect();
    ids.shuffle(rng);
    let subgoals: Vec<usize> = ids[..n].to_vec();
    let floor = world.floor_cells();
    let pos = floor[rng.random_range(0..floor.len())];
    let heading = Heading::from_index(rng.random_range(0..4));
    let start = AgentState::new(pos, heading);
    let segments = expert_actions(world, &start, &subgoals)?;
    Ok(Task {
        instruction: instruction_for(world, &subgoals)?,
        budgets: segments.iter().map(|s| action_budget(s.len())).collect(),
        subgoals,
        start,
    })
}

/// One world plus one task, both derived from `seed`.
pub fn generate_episode(seed: u64, world_cfg: &WorldConfig, task_cfg: &TaskConfig) -> Result<(GridWorld, Task)> {
    let world = generate_world(seed, world_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a5c_0e11_d00d_f00d);
    let task = generate_task(&world, &mut rng, task_cfg)?;
    Ok((world, task))
}
