//! Mixture and aligned training recipes.

mod sequence;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sequence::{
    build_query, build_response, build_sequence, validate_sequence, QueryParts, Segments, SequenceConfig, TokenSequence,
};

use crate::data::TrainingSample;
use crate::error::{Error, Result};
use crate::gating::GatingSignals;
use crate::model::{cross_entropy, softmax_row, Gradients, Model, ModelConfig, RowTarget, Optimizer, OptimizerConfig, Scalar, Target};
use crate::vocab::Vocabulary;

pub const TRAIN_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Mixture,
    Aligned,
}

/// Model hyperparameters; vocabulary size and context come from elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub init_std: f64,
    pub head_init_std: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let c = ModelConfig::new(1);
        Self {
            d_model: c.d_model,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            ff_mult: c.ff_mult,
            init_std: c.init_std,
            head_init_std: c.head_init_std,
        }
    }
}

impl ModelSpec {
    pub fn config(&self, vocab_size: usize, context: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            context,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ff_mult: self.ff_mult,
            init_std: self.init_std,
            head_init_std: self.head_init_std,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub config_version: u32,
    pub recipe: Recipe,
    pub modes: Vec<GatingSignals>,
    pub optimizer: OptimizerConfig,
    pub lambda_align: f64,
    /// Passes over the dataset; ignored when `steps` is set.
    pub epochs: usize,
    /// Iteration budget.
    pub steps: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    /// Also supervise CoT-mode actions with hard targets (aligned recipe).
    pub cot_action_hard: bool,
    pub early_stop: bool,
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    pub model: ModelSpec,
    pub sequence: SequenceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            config_version: TRAIN_CONFIG_VERSION,
            recipe: Recipe::Aligned,
            modes: GatingSignals::ALL.to_vec(),
            optimizer: OptimizerConfig::default(),
            lambda_align: 1.0,
            epochs: 4,
            steps: None,
            batch_size: 8,
            seed: 0,
            cot_action_hard: false,
            early_stop: true,
            early_stop_window: 200,
            early_stop_tol: 1e-4,
            model: ModelSpec::default(),
            sequence: SequenceConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.config_version != TRAIN_CONFIG_VERSION {
            return Err(Error::Version {
                what: "train config".into(),
                found: self.config_version,
            });
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("at least one mode must be enabled".into()));
        }
        if !(self.lambda_align >= 0.0) {
            return Err(Error::InvalidConfig("lambda_align must be non-negative".into()));
        }
        if self.recipe == Recipe::Aligned && !self.modes.contains(&GatingSignals::NON_COT) {
            return Err(Error::InvalidConfig("the aligned recipe needs the non-cot mode".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        self.sequence.validate()
    }

    pub fn cot_modes(&self) -> Vec<GatingSignals> {
        self.modes.iter().copied().filter(|m| m.is_cot()).collect()
    }

    pub fn total_steps(&self, dataset_len: usize) -> usize {
        self.steps
            .unwrap_or_else(|| self.epochs * dataset_len.div_ceil(self.batch_size))
            .max(1)
    }
}

/// Per-position distributions over the four action tokens, detached from the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargets(pub Vec<[f64; 4]>);

impl SoftTargets {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Loss and gradient of one sequence under per-row targets. Rows index the
/// logits that predict the token at the same list position.
pub fn sequence_loss_grad<F: Scalar>(
    model: &Model<F>,
    tokens: &[u32],
    rows: &[usize],
    targets: &[RowTarget<F>],
    grads: &mut Gradients<F>,
) -> Result<F> {
    let fwd = model.forward(tokens, rows)?;
    let (loss, dl) = cross_entropy(&fwd.logits, targets)?;
    model.backward_into(&fwd, &dl, grads);
    Ok(loss)
}

/// Rows predicting every response token, each with weight `1/n`.
pub fn response_targets<F: Scalar>(seq: &TokenSequence) -> (Vec<usize>, Vec<RowTarget<F>>) {
    let pos: Vec<usize> = (0..seq.tokens.len()).filter(|&i| seq.loss_mask[i]).collect();
    let w = F::one() / F::lit(pos.len() as f64);
    let rows = pos.iter().map(|&p| p - 1).collect();
    let targets = pos
        .iter()
        .map(|&p| RowTarget {
            target: Target::Hard(seq.tokens[p]),
            weight: w,
        })
        .collect();
    (rows, targets)
}

/// Hard cross-entropy of `seq`'s response, averaged over positions.
pub fn response_loss_grad<F: Scalar>(model: &Model<F>, seq: &TokenSequence, grads: &mut Gradients<F>) -> Result<F> {
    let (rows, targets) = response_targets(seq);
    sequence_loss_grad(model, &seq.tokens, &rows, &targets, grads)
}

/// Non-CoT action distributions restricted to the action tokens and renormalized.
pub fn soft_targets<F: Scalar>(
    model: &Model<F>,
    sample: &TrainingSample,
    vocab: &Vocabulary,
    cfg: &SequenceConfig,
) -> Result<SoftTargets> {
    let seq = build_sequence(sample, GatingSignals::NON_COT, vocab, cfg)?;
    let rows: Vec<usize> = TokenSequence::rows_for(seq.segments.actions.clone()).collect();
    let fwd = model.forward(&seq.tokens, &rows)?;
    Ok(SoftTargets(restricted_action_probs(&fwd.logits, vocab)))
}

fn restricted_action_probs<F: Scalar>(logits: &Array2<F>, vocab: &Vocabulary) -> Vec<[f64; 4]> {
    let ids = vocab.action_ids();
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let sub: Vec<f64> = ids.iter().map(|&i| row[i as usize].f64()).collect();
            let p = softmax_row(ndarray::ArrayView1::from(&sub));
            [p[0], p[1], p[2], p[3]]
        })
        .collect()
}

fn soft_target<F: Scalar>(p: &[f64; 4], vocab: &Vocabulary, weight: F) -> RowTarget<F> {
    let ids = vocab.action_ids();
    RowTarget {
        target: Target::Soft(ids.iter().zip(p).map(|(&i, &q)| (i, F::lit(q))).collect()),
        weight,
    }
}

/// Sum over the CoT modes of the mean soft cross-entropy at action positions.
pub fn align_loss<F: Scalar>(cot_action_logits: &[&Array2<F>], soft: &SoftTargets, vocab: &Vocabulary) -> Result<F> {
    let mut total = F::zero();
    for logits in cot_action_logits {
        if logits.nrows() != soft.len() {
            return Err(Error::PositionMismatch(format!(
                "{} action rows against {} soft targets",
                logits.nrows(),
                soft.len()
            )));
        }
        let w = F::one() / F::lit(soft.len() as f64);
        let targets: Vec<RowTarget<F>> = soft.0.iter().map(|p| soft_target(p, vocab, w)).collect();
        total += cross_entropy(logits, &targets)?.0;
    }
    Ok(total)
}

/// Loss terms of the joint CoT phase for one sample and mode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JointTerms {
    pub align: f64,
    pub cot: f64,
    pub hard_actions: f64,
    /// KL(soft targets ‖ restricted CoT-mode action distribution), mean over positions.
    pub kl: f64,
}

/// Joint objective for one CoT mode with teacher forcing; accumulates
/// `scale ×` its gradient into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss_grad<F: Scalar>(
    model: &Model<F>,
    sample: &TrainingSample,
    mode: GatingSignals,
    soft: &SoftTargets,
    lambda_align: f64,
    cot_action_hard: bool,
    vocab: &Vocabulary,
    cfg: &SequenceConfig,
    scale: F,
    grads: &mut Gradients<F>,
) -> Result<JointTerms> {
    let seq = build_sequence(sample, mode, vocab, cfg)?;
    let trace: Vec<usize> = seq
        .segments
        .text
        .iter()
        .chain(seq.segments.visual.iter())
        .flat_map(|r| r.clone())
        .collect();
    let actions: Vec<usize> = seq.segments.actions.clone().collect();
    if actions.len() != soft.len() {
        return Err(Error::PositionMismatch(format!(
            "{} action positions against {} soft targets",
            actions.len(),
            soft.len()
        )));
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let wt = scale / F::lit(trace.len() as f64);
    for &p in &trace {
        rows.push(p - 1);
        targets.push(RowTarget {
            target: Target::Hard(seq.tokens[p]),
            weight: wt,
        });
    }
    // zero-weight terms are dropped so that λ = 0 is exactly trace-only supervision
    let with_align = lambda_align > 0.0;
    if with_align {
        let wa = scale * F::lit(lambda_align) / F::lit(actions.len() as f64);
        for (&p, q) in actions.iter().zip(&soft.0) {
            rows.push(p - 1);
            targets.push(soft_target(q, vocab, wa));
        }
    }
    let hard_start = rows.len();
    if cot_action_hard {
        let hard: Vec<usize> = actions.iter().copied().chain([seq.segments.eos]).collect();
        let wh = scale / F::lit(hard.len() as f64);
        for &p in &hard {
            rows.push(p - 1);
            targets.push(RowTarget {
                target: Target::Hard(seq.tokens[p]),
                weight: wh,
            });
        }
    }
    let fwd = model.forward(&seq.tokens, &rows)?;
    let (_, dl) = cross_entropy(&fwd.logits, &targets)?;
    model.backward_into(&fwd, &dl, grads);

    // unscaled terms for logging
    let nt = trace.len();
    let na = actions.len();
    let sub = |range: std::ops::Range<usize>| fwd.logits.slice(ndarray::s![range, ..]).to_owned();
    let unit = |ts: &[RowTarget<F>], n: usize| -> Vec<RowTarget<F>> {
        ts.iter()
            .map(|t| RowTarget {
                target: t.target.clone(),
                weight: F::one() / F::lit(n as f64),
            })
            .collect()
    };
    let cot = cross_entropy(&sub(0..nt), &unit(&targets[..nt], nt))?.0.f64();
    let action_logits = if with_align {
        sub(nt..nt + na)
    } else {
        let action_rows: Vec<usize> = actions.iter().map(|p| p - 1).collect();
        model.forward(&seq.tokens, &action_rows)?.logits
    };
    let align = align_loss(&[&action_logits], soft, vocab)?.f64();
    let hard_actions = if cot_action_hard {
        let n = na + 1;
        cross_entropy(&sub(hard_start..hard_start + n), &unit(&targets[hard_start..], n))?.0.f64()
    } else {
        0.0
    };
    let q = restricted_action_probs(&action_logits, vocab);
    let kl = soft
        .0
        .iter()
        .zip(&q)
        .map(|(p, q)| p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>())
        .sum::<f64>()
        / na as f64;
    Ok(JointTerms {
        align,
        cot,
        hard_actions,
        kl,
    })
}

/// One row of the training metrics log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    /// Mean response loss per mode name (mixture) or the non-CoT phase loss (aligned).
    pub mode_loss: BTreeMap<String, f64>,
    pub l_align: Option<f64>,
    pub l_cot: Option<f64>,
    pub l_joint: Option<f64>,
    pub kl: Option<f64>,
    pub grad_norm: f64,
}

pub const METRICS_HEADER: &str = "step,lr,loss_non_cot,loss_t_cot,loss_v_cot,loss_mm_cot,l_align,l_cot,l_joint,kl,grad_norm";

impl MetricsRow {
    pub fn csv(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let m = |name: &str| o(self.mode_loss.get(name).copied());
        format!(
            "{},{:.6},{},{},{},{},{},{},{},{},{:.6}",
            self.step,
            self.lr,
            m("non-cot"),
            m("t-cot"),
            m("v-cot"),
            m("mm-cot"),
            o(self.l_align),
            o(self.l_cot),
            o(self.l_joint),
            o(self.kl),
            self.grad_norm
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Scalar> {
    pub model: Model<F>,
    pub log: Vec<MetricsRow>,
    pub iterations: usize,
    /// Optimizer steps taken by the non-CoT phase (aligned) or all steps (mixture).
    pub phase_one_steps: usize,
    /// Optimizer steps taken by the joint CoT phase.
    pub phase_two_steps: usize,
    pub stopped_early: bool,
    /// Mode sampled for each mixture example, in order.
    pub sampled_modes: Vec<GatingSignals>,
}

fn check_finite(step: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            detail: format!("{what} is {v}"),
        })
    }
}

/// Yields batches of sample indices from per-epoch shuffles.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Batcher {
    fn new(n: usize, batch: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.min(n),
        }
    }

    fn next(&mut self, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn window_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// True when every series improved by less than `tol` between the last two windows.
fn converged(series: &[&[f64]], window: usize, tol: f64) -> bool {
    series.iter().all(|s| {
        let n = s.len();
        n >= 2 * window && window_mean(&s[n - 2 * window..n - window]) - window_mean(&s[n - window..]) < tol
    })
}

/// Fresh model for `cfg`.
pub fn init_model<F: Scalar>(cfg: &TrainConfig, vocab: &Vocabulary) -> Result<Model<F>> {
    Model::new(cfg.model.config(vocab.len(), cfg.sequence.context, cfg.seed))
}

/// Trains with the configured recipe. `progress` is called after each iteration.
pub fn train<F: Scalar>(
    model: Model<F>,
    data: &[TrainingSample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset".into()));
    }
    match cfg.recipe {
        Recipe::Mixture => train_mixture(model, data, vocab, cfg, progress),
        Recipe::Aligned => train_aligned(model, data, vocab, cfg, progress),
    }
}

/// Joint data-mixture training: each example draws one enabled mode uniformly.
pub fn train_mixture<F: Scalar>(
    mut model: Model<F>,
    data: &[TrainingSample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome<F>> {
    let total = cfg.total_steps(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d69_7874);
    let mut opt = Optimizer::new(cfg.optimizer, model.num_params(), total);
    let mut batcher = Batcher::new(data.len(), cfg.batch_size);
    let mut log = Vec::new();
    let mut sampled_modes = Vec::new();
    let mut losses = Vec::new();
    let mut stopped_early = false;
    for step in 0..total {
        let idx = batcher.next(&mut rng);
        let mut grads = Gradients::zeros(model.num_params());
        let scale = F::one() / F::lit(idx.len() as f64);
        let mut per_mode: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut batch_loss = 0.0;
        for &i in &idx {
            let mode = cfg.modes[rng.random_range(0..cfg.modes.len())];
            sampled_modes.push(mode);
            let seq = build_sequence(&data[i], mode, vocab, &cfg.sequence)?;
            let mut g = Gradients::zeros(model.num_params());
            let loss = response_loss_grad(&model, &seq, &mut g)?.f64();
            check_finite(step, "loss", loss)?;
            g.scale(scale);
            grads.add(&g);
            let e = per_mode.entry(mode.name().to_string()).or_default();
            e.0 += loss;
            e.1 += 1;
            batch_loss += loss / idx.len() as f64;
        }
        let lr = opt.schedule.at(opt.steps);
        let grad_norm = opt.step(&mut model, &grads);
        check_finite(step, "gradient norm", grad_norm)?;
        let row = MetricsRow {
            step,
            lr,
            mode_loss: per_mode.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
            grad_norm,
            ..Default::default()
        };
        progress(&row);
        log.push(row);
        losses.push(batch_loss);
        if cfg.early_stop && converged(&[&losses], cfg.early_stop_window, cfg.early_stop_tol) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        iterations: log.len(),
        phase_one_steps: opt.steps,
        phase_two_steps: 0,
        log,
        stopped_early,
        sampled_modes,
    })
}

/// Aligned joint training: per iteration one non-CoT step, then one step on
/// the joint objective of the enabled CoT modes against detached soft targets.
pub fn train_aligned<F: Scalar>(
    mut model: Model<F>,
    data: &[TrainingSample],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome<F>> {
    let total = cfg.total_steps(data.len());
    let cot_modes = cfg.cot_modes();
    let steps_per_iter = if cot_modes.is_empty() { 1 } else { 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x616c_6967);
    let mut opt = Optimizer::new(cfg.optimizer, model.num_params(), total * steps_per_iter);
    let mut batcher = Batcher::new(data.len(), cfg.batch_size);
    let mut log = Vec::new();
    let (mut phase_one, mut phase_two) = (0, 0);
    let (mut l_non, mut l_joint) = (Vec::new(), Vec::new());
    let mut stopped_early = false;
    let n = model.num_params();
    for step in 0..total {
        let idx = batcher.next(&mut rng);
        let scale = F::one() / F::lit(idx.len() as f64);

        // (i) non-CoT step
        let mut grads = Gradients::zeros(n);
        let mut loss_non = 0.0;
        for &i in &idx {
            let seq = build_sequence(&data[i], GatingSignals::NON_COT, vocab, &cfg.sequence)?;
            let mut g = Gradients::zeros(n);
            let loss = response_loss_grad(&model, &seq, &mut g)?.f64();
            check_finite(step, "non-cot loss", loss)?;
            g.scale(scale);
            grads.add(&g);
            loss_non += loss / idx.len() as f64;
        }
        let lr = opt.schedule.at(opt.steps);
        let mut grad_norm = opt.step(&mut model, &grads);
        phase_one += 1;

        let mut row = MetricsRow {
            step,
            lr,
            mode_loss: BTreeMap::from([("non-cot".to_string(), loss_non)]),
            grad_norm,
            ..Default::default()
        };

        if !cot_modes.is_empty() {
            // (ii) soft targets from the updated parameters, (iii)+(iv) joint step
            let mut grads = Gradients::zeros(n);
            let (mut align, mut cot, mut kl) = (0.0, 0.0, 0.0);
            let mut mode_sums: BTreeMap<String, f64> = BTreeMap::new();
            for &i in &idx {
                let soft = soft_targets(&model, &data[i], vocab, &cfg.sequence)?;
                for &mode in &cot_modes {
                    let t = joint_loss_grad(
                        &model,
                        &data[i],
                        mode,
                        &soft,
                        cfg.lambda_align,
                        cfg.cot_action_hard,
                        vocab,
                        &cfg.sequence,
                        scale,
                        &mut grads,
                    )?;
                    let b = idx.len() as f64;
                    align += t.align / b;
                    cot += t.cot / b;
                    kl += t.kl / (b * cot_modes.len() as f64);
                    *mode_sums.entry(mode.name().to_string()).or_default() += (t.cot + t.align) / b;
                }
            }
            let joint = cfg.lambda_align * align + cot;
            check_finite(step, "joint loss", joint)?;
            grad_norm = opt.step(&mut model, &grads);
            phase_two += 1;
            row.mode_loss.extend(mode_sums);
            row.l_align = Some(align);
            row.l_cot = Some(cot);
            row.l_joint = Some(joint);
            row.kl = Some(kl);
            row.grad_norm = grad_norm;
            l_joint.push(joint);
        }
        check_finite(step, "gradient norm", grad_norm)?;
        progress(&row);
        log.push(row);
        l_non.push(loss_non);
        let series: Vec<&[f64]> = if cot_modes.is_empty() { vec![&l_non] } else { vec![&l_non, &l_joint] };
        if cfg.early_stop && converged(&series, cfg.early_stop_window, cfg.early_stop_tol) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        iterations: log.len(),
        phase_one_steps: phase_one,
        phase_two_steps: phase_two,
        log,
        stopped_early,
        sampled_modes: Vec::new(),
    })
}
