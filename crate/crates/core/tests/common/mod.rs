#![allow(dead_code)]

use std::sync::OnceLock;

use latentnav::experiment::{prepare, Preset, Prepared};
use latentnav::gating::GatingSignals;
use latentnav::model::OptimizerConfig;
use latentnav::trainer::{ModelSpec, Recipe, TrainConfig};

/// Small shared fixture: codec, vocabulary, samples and held-out episodes.
pub fn smoke() -> &'static (Preset, Prepared) {
    static CELL: OnceLock<(Preset, Prepared)> = OnceLock::new();
    CELL.get_or_init(|| {
        let preset = Preset::smoke();
        let prepared = prepare(&preset).expect("smoke preset prepares");
        (preset, prepared)
    })
}

pub fn tiny_train(recipe: Recipe, modes: &[GatingSignals], steps: usize) -> TrainConfig {
    let (preset, _) = smoke();
    TrainConfig {
        recipe,
        modes: modes.to_vec(),
        steps: Some(steps),
        batch_size: 2,
        early_stop: false,
        optimizer: OptimizerConfig {
            warmup_steps: 5,
            ..OptimizerConfig::adam(3e-3)
        },
        model: ModelSpec {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ..ModelSpec::default()
        },
        ..preset.train.clone()
    }
}

/// Mean response cross-entropy through `loss_ce`: row `i` predicts token `i + 1`.
pub fn response_ce<F: latentnav::model::Scalar>(
    model: &latentnav::model::Model<F>,
    seq: &latentnav::trainer::TokenSequence,
) -> F {
    use latentnav::model::{loss_ce, Target};
    let n = seq.tokens.len();
    let logits = model.logits(&seq.tokens[..n - 1]).unwrap();
    let targets: Vec<Target<F>> = seq.tokens[1..].iter().map(|&t| Target::Hard(t)).collect();
    loss_ce(&logits, &targets, &seq.loss_mask[1..]).unwrap()
}
