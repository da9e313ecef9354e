//! Expert trajectories to supervised samples.

mod annotate;
mod augment;
mod dataset;
mod sample;
mod slice;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use annotate::annotate_textual;
pub use augment::{augment, remove_pair, subsample_history, trim_first_two, SUBSAMPLE_MIN_FRAMES, TRIM_MIN_FRAMES};
pub use dataset::{dataset_bytes, load_dataset, serialize_dataset, DatasetHeader, Expected, DATASET_FORMAT_VERSION};
pub use sample::{Augmentation, TrainingSample};
pub use slice::{slice_trajectory, Slice};

use crate::codec::Codec;
use crate::env::{
    expert_trajectory, generate_episode, render, step, Action, ExpertTrajectory, GridWorld, Image, RenderConfig, Task,
    TaskConfig, WorldConfig,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub world: WorldConfig,
    pub task: TaskConfig,
    pub render: RenderConfig,
    pub episodes: usize,
    pub seed: u64,
    /// Actions per slice.
    pub k: usize,
    /// Most recent history frames kept per sample.
    pub history_store: usize,
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            task: TaskConfig::default(),
            render: RenderConfig::default(),
            episodes: 200,
            seed: 1,
            k: 5,
            history_store: 20,
            augment: true,
        }
    }
}

/// A generated world, its task and the expert demonstration.
#[derive(Debug, Clone)]
pub struct Episode {
    pub id: usize,
    pub seed: u64,
    pub world: GridWorld,
    pub task: Task,
    pub trajectory: ExpertTrajectory,
}

/// Seed of the `i`-th episode drawn from `base`.
pub fn episode_seed(base: u64, i: usize) -> u64 {
    let mut z = base.wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `count` episodes; seeds whose world cannot be generated are skipped.
pub fn generate_episodes(
    base_seed: u64,
    count: usize,
    world: &WorldConfig,
    task: &TaskConfig,
    render_cfg: &RenderConfig,
) -> Result<Vec<Episode>> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count {
        if i >= 4 * count + 16 {
            return Err(Error::GenerationFailure {
                attempts: i,
                reason: format!("only {} of {count} episodes could be generated", out.len()),
            });
        }
        let seed = episode_seed(base_seed, i);
        i += 1;
        let Ok((world, task)) = generate_episode(seed, world, task) else {
            continue;
        };
        let trajectory = expert_trajectory(&world, &task, render_cfg)?;
        out.push(Episode {
            id: out.len(),
            seed,
            world,
            task,
            trajectory,
        });
    }
    Ok(out)
}

/// All rendered views of the given episodes, in order.
pub fn episode_images(episodes: &[Episode]) -> Vec<Image> {
    episodes
        .iter()
        .flat_map(|e| e.trajectory.observations.iter())
        .flat_map(|o| [o.left.clone(), o.front.clone(), o.right.clone()])
        .collect()
}

/// Replays the chunk from the slice state, renders the front view and
/// encodes it. Forward moves into walls count as replay failures.
pub fn extract_visual_target(
    slice: &Slice,
    world: &GridWorld,
    codec: &Codec,
    render_cfg: &RenderConfig,
) -> Result<Vec<u16>> {
    let mut s = slice.state;
    for (i, &a) in slice.actions.iter().enumerate() {
        let next = step(world, &s, a);
        if a == Action::Forward && next.pos == s.pos {
            return Err(Error::ReplayFailure(format!(
                "forward at chunk position {i} from ({}, {}) is blocked",
                s.pos.x, s.pos.y
            )));
        }
        s = next;
    }
    let obs = render(world, &s, render_cfg);
    Ok(codec.encode(&obs.front)?.flatten(codec.num_scales()))
}

/// Slices, annotates and encodes every episode; augmentation variants follow
/// their source sample.
pub fn build_samples(episodes: &[Episode], codec: &Codec, cfg: &DataConfig) -> Result<Vec<TrainingSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa5a5_5a5a_0f0f_f0f0);
    let s = codec.num_scales();
    let mut out = Vec::new();
    for ep in episodes {
        let views: Vec<[Vec<u16>; 3]> = ep
            .trajectory
            .observations
            .iter()
            .map(|o| -> Result<[Vec<u16>; 3]> {
                Ok([
                    codec.encode(&o.left)?.flatten(s),
                    codec.encode(&o.front)?.flatten(s),
                    codec.encode(&o.right)?.flatten(s),
                ])
            })
            .collect::<Result<_>>()?;
        for slice in slice_trajectory(&ep.trajectory, cfg.k) {
            let keep = slice.history.len().saturating_sub(cfg.history_store);
            let sample = TrainingSample {
                episode: ep.id,
                start: slice.start,
                state: slice.state,
                instruction: ep.task.instruction.clone(),
                history: slice.history[keep..].iter().map(|&i| views[i][1].clone()).collect(),
                current: views[slice.start].clone(),
                stop_count: slice.stop_count,
                text: annotate_textual(&slice, &ep.world, &ep.task, &cfg.render)?,
                visual: extract_visual_target(&slice, &ep.world, codec, &cfg.render)?,
                actions: slice.actions.clone(),
                augmentation: None,
            };
            let extra = if cfg.augment { augment(&sample, &mut rng) } else { Vec::new() };
            out.push(sample);
            out.extend(extra);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub original: usize,
    pub subsampled: usize,
    pub trimmed: usize,
    pub episodes: usize,
    pub action_histogram: BTreeMap<String, usize>,
    pub chunk_length_histogram: BTreeMap<usize, usize>,
    pub history_length_histogram: BTreeMap<usize, usize>,
    pub mean_text_words: f64,
}

pub fn dataset_stats(samples: &[TrainingSample]) -> DatasetStats {
    let mut st = DatasetStats {
        records: samples.len(),
        ..Default::default()
    };
    let mut episodes = std::collections::BTreeSet::new();
    let mut words = 0usize;
    for s in samples {
        episodes.insert(s.episode);
        match s.augmentation {
            None => st.original += 1,
            Some(Augmentation::Subsample) => st.subsampled += 1,
            Some(Augmentation::Trim { .. }) => st.trimmed += 1,
        }
        for a in &s.actions {
            *st.action_histogram.entry(a.name().to_string()).or_default() += 1;
        }
        *st.chunk_length_histogram.entry(s.actions.len()).or_default() += 1;
        *st.history_length_histogram.entry(s.history.len()).or_default() += 1;
        words += s.text.len();
    }
    st.episodes = episodes.len();
    st.mean_text_words = if samples.is_empty() { 0.0 } else { words as f64 / samples.len() as f64 };
    st
}
