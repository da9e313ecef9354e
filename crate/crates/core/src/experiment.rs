//! Presets and scripted experiment matrices shared by the CLI and the acceptance suite.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{train_codec, Codec, CodecConfig};
use crate::data::{build_samples, episode_images, generate_episodes, DataConfig, Episode, TrainingSample};
use crate::env::{RenderConfig, TaskConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, metrics, ApsMeasurement, MetricSummary, ModelPolicy};
use crate::gating::{mode_set_name, GatingSignals};
use crate::hash::sha256_hex;
use crate::model::{checkpoint_bytes, Model, OptimizerConfig};
use crate::trainer::{init_model, train, MetricsRow, ModelSpec, Recipe, SequenceConfig, TrainConfig, TrainOutcome};
use crate::vocab::Vocabulary;

/// Base seed of held-out evaluation episodes; disjoint from training seeds by construction.
pub const EVAL_SEED_OFFSET: u64 = 0x0e7a_1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub data: DataConfig,
    pub codec: CodecConfig,
    pub train: TrainConfig,
    pub eval_episodes: usize,
}

impl Preset {
    /// `desk` is the experiment scale; `smoke` is for quick checks.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}; expected desk or smoke"))),
        }
    }

    pub fn desk() -> Self {
        let world = WorldConfig {
            width: 9,
            height: 9,
            rooms: 2,
            objects: 3,
            ..WorldConfig::default()
        };
        let sequence = SequenceConfig {
            history_cap: 4,
            hist_prefix: 2,
            obs_prefix: 4,
            vcot_prefix: 4,
            context: 256,
            ..SequenceConfig::default()
        };
        Self {
            name: "desk".into(),
            data: DataConfig {
                world,
                task: TaskConfig {
                    min_subgoals: 1,
                    max_subgoals: 2,
                },
                render: RenderConfig::default(),
                episodes: 400,
                seed: 1,
                k: 5,
                history_store: 8,
                augment: true,
            },
            codec: CodecConfig::default(),
            train: TrainConfig {
                steps: Some(2000),
                batch_size: 8,
                optimizer: OptimizerConfig {
                    warmup_steps: 30,
                    ..OptimizerConfig::adam(3e-3)
                },
                early_stop: false,
                model: ModelSpec {
                    d_model: 48,
                    n_layers: 2,
                    n_heads: 4,
                    ..ModelSpec::default()
                },
                sequence,
                ..TrainConfig::default()
            },
            eval_episodes: 200,
        }
    }

    pub fn smoke() -> Self {
        let mut p = Self::desk();
        p.name = "smoke".into();
        p.data.episodes = 24;
        p.codec.epochs = 4;
        p.train.steps = Some(6);
        p.train.batch_size = 4;
        p.train.model.d_model = 16;
        p.train.model.n_layers = 1;
        p.train.model.n_heads = 2;
        p.eval_episodes = 6;
        p
    }
}

/// Codec, vocabulary, training samples and held-out episodes of a preset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub codec: Codec,
    pub codec_hash: String,
    pub vocab: Vocabulary,
    pub samples: Vec<TrainingSample>,
    pub eval: Vec<Episode>,
}

pub fn prepare(preset: &Preset) -> Result<Prepared> {
    let d = &preset.data;
    let episodes = generate_episodes(d.seed, d.episodes, &d.world, &d.task, &d.render)?;
    let images = episode_images(&episodes);
    let (codec, _) = train_codec(&images, &preset.codec)?;
    let samples = build_samples(&episodes, &codec, d)?;
    let eval = generate_episodes(d.seed.wrapping_add(EVAL_SEED_OFFSET), preset.eval_episodes, &d.world, &d.task, &d.render)?;
    Ok(Prepared {
        codec_hash: codec.hash()?,
        vocab: Vocabulary::new(codec.codebook_size()),
        codec,
        samples,
        eval,
    })
}

/// One training configuration of an experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub recipe: Recipe,
    pub modes: Vec<GatingSignals>,
    pub vcot_prefix: Option<usize>,
    /// Modes evaluated on the trained checkpoint.
    pub eval_modes: Vec<GatingSignals>,
}

impl RunSpec {
    fn new(label: &str, recipe: Recipe, modes: &[GatingSignals], eval_modes: &[GatingSignals]) -> Self {
        Self {
            label: label.into(),
            recipe,
            modes: modes.to_vec(),
            vcot_prefix: None,
            eval_modes: eval_modes.to_vec(),
        }
    }
}

pub const EXPERIMENTS: [&str; 5] = ["mode-combos", "alignment-ablation", "explicit-implicit", "efficiency", "var-scale"];

pub fn experiment_matrix(name: &str) -> Result<Vec<RunSpec>> {
    use GatingSignals as G;
    let nc = [G::NON_COT];
    let a = Recipe::Aligned;
    Ok(match name {
        "mode-combos" => vec![
            RunSpec::new("non-cot", a, &[G::NON_COT], &nc),
            RunSpec::new("non-cot+t-cot", a, &[G::NON_COT, G::TEXTUAL], &nc),
            RunSpec::new("non-cot+v-cot", a, &[G::NON_COT, G::VISUAL], &nc),
            RunSpec::new("non-cot+mm-cot", a, &[G::NON_COT, G::MULTIMODAL], &nc),
            RunSpec::new("all", a, &G::ALL, &nc),
        ],
        "alignment-ablation" => vec![
            RunSpec::new("without-alignment", Recipe::Mixture, &G::ALL, &nc),
            RunSpec::new("with-alignment", a, &G::ALL, &nc),
        ],
        "explicit-implicit" => [G::TEXTUAL, G::VISUAL, G::MULTIMODAL]
            .iter()
            .map(|&m| RunSpec::new(&format!("non-cot+{}", m.name()), a, &[G::NON_COT, m], &[G::NON_COT, m]))
            .collect(),
        "efficiency" => vec![RunSpec::new("all", a, &G::ALL, &[G::NON_COT, G::MULTIMODAL])],
        "var-scale" => (1..=4)
            .map(|s| RunSpec {
                vcot_prefix: Some(s),
                ..RunSpec::new(&format!("scale-{s}"), a, &G::ALL, &nc)
            })
            .collect(),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown experiment {other:?}; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    })
}

impl RunSpec {
    pub fn train_config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.recipe = self.recipe;
        cfg.modes = self.modes.clone();
        cfg.seed = seed;
        if let Some(s) = self.vcot_prefix {
            cfg.sequence.vcot_prefix = s;
        }
        cfg
    }
}

/// One aggregate result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub label: String,
    pub recipe: Recipe,
    pub mode_set: String,
    pub seed: u64,
    pub eval_mode: String,
    /// "implicit" when decoding without traces, "explicit" otherwise.
    pub inference: String,
    pub checkpoint_hash: String,
    pub summary: MetricSummary,
    pub aps: ApsMeasurement,
    pub train_seconds: f64,
    pub iterations: usize,
}

pub const RECORD_HEADER: &str = "experiment,label,recipe,mode_set,seed,eval_mode,inference,checkpoint_hash,episodes,sr,isr,csr,cgt,aps,aps_total,tokens_per_action,train_seconds,iterations";

impl RunRecord {
    pub fn csv(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.2},{}",
            self.experiment,
            self.label,
            match self.recipe {
                Recipe::Mixture => "mixture",
                Recipe::Aligned => "aligned",
            },
            self.mode_set,
            self.seed,
            self.eval_mode,
            self.inference,
            self.checkpoint_hash,
            s.episodes,
            s.sr,
            s.isr,
            s.csr,
            s.cgt,
            self.aps.aps,
            self.aps.aps_total,
            self.aps.tokens_per_action,
            self.train_seconds,
            self.iterations
        )
    }
}

pub fn checkpoint_hash(model: &Model<f32>, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<String> {
    let meta = serde_json::to_value(cfg)?;
    Ok(sha256_hex(&checkpoint_bytes(model, vocab, &meta)))
}

/// Trains one configuration from scratch.
pub fn train_run(
    prepared: &Prepared,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<(TrainOutcome<f32>, f64)> {
    let t0 = Instant::now();
    let model = init_model::<f32>(cfg, &prepared.vocab)?;
    let out = train(model, &prepared.samples, &prepared.vocab, cfg, progress)?;
    Ok((out, t0.elapsed().as_secs_f64()))
}

pub fn eval_run(
    prepared: &Prepared,
    model: &Model<f32>,
    sequence: &SequenceConfig,
    render: &RenderConfig,
    mode: GatingSignals,
    episodes: &[Episode],
) -> Result<(MetricSummary, ApsMeasurement)> {
    let mut policy = ModelPolicy::new(model, &prepared.vocab, sequence, mode);
    let reports = evaluate(&mut policy, episodes, &prepared.codec, render, sequence.max_actions)?;
    Ok((metrics(&reports)?, ApsMeasurement::from_reports(&reports)))
}

/// Runs every configuration of `name` once per seed.
pub fn run_experiment(
    name: &str,
    preset: &Preset,
    prepared: &Prepared,
    seeds: &[u64],
    on_record: &mut dyn FnMut(&RunRecord),
) -> Result<Vec<RunRecord>> {
    let matrix = experiment_matrix(name)?;
    let mut records = Vec::new();
    for spec in &matrix {
        for &seed in seeds {
            let cfg = spec.train_config(&preset.train, seed);
            let (out, secs) = train_run(prepared, &cfg, &mut |_| {})?;
            let hash = checkpoint_hash(&out.model, &prepared.vocab, &cfg)?;
            for &mode in &spec.eval_modes {
                let (summary, aps) = eval_run(prepared, &out.model, &cfg.sequence, &preset.data.render, mode, &prepared.eval)?;
                let r = RunRecord {
                    experiment: name.into(),
                    label: spec.label.clone(),
                    recipe: spec.recipe,
                    mode_set: mode_set_name(&spec.modes),
                    seed,
                    eval_mode: mode.name().into(),
                    inference: if mode.is_cot() { "explicit" } else { "implicit" }.into(),
                    checkpoint_hash: hash.clone(),
                    summary,
                    aps,
                    train_seconds: secs,
                    iterations: out.iterations,
                };
                on_record(&r);
                records.push(r);
            }
        }
    }
    Ok(records)
}
