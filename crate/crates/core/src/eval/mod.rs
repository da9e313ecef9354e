//! Online multi-stage evaluation, metric suite and throughput measurement.

mod metrics;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use metrics::{metrics, MetricSummary};

use crate::codec::Codec;
use crate::data::Episode;
use crate::env::{check_subtask_success, render, render_view, step, Action, RenderConfig};
use crate::error::{Error, Result};
use crate::gating::GatingSignals;
use crate::model::{decode_greedy, DecodeOptions, Model, Scalar};
use crate::trainer::{build_query, QueryParts, SequenceConfig};
use crate::vocab::{Vocabulary, MAX_STOP_COUNT};

/// Everything a policy may see at one decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub instruction: &'a [String],
    /// Encoded front views of every earlier step, oldest first.
    pub history: &'a [Vec<u16>],
    /// Encoded left, front and right views.
    pub current: [&'a [u16]; 3],
    /// Subtasks concluded so far.
    pub stop_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decision {
    pub actions: Vec<Action>,
    pub generated_tokens: usize,
    /// Words inside the textual trace, delimiters excluded.
    pub text_tokens: usize,
    /// Set when the response could not be parsed into actions.
    pub failure: Option<String>,
}

pub trait Policy {
    fn mode(&self) -> GatingSignals;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision>;
    /// Called before each episode.
    fn reset(&mut self, _episode: &Episode) {}
}

/// The trained model decoding greedily in a fixed mode.
pub struct ModelPolicy<'a, F: Scalar> {
    pub model: &'a Model<F>,
    pub vocab: &'a Vocabulary,
    pub sequence: &'a SequenceConfig,
    pub mode: GatingSignals,
    pub decode: DecodeOptions,
}

impl<'a, F: Scalar> ModelPolicy<'a, F> {
    pub fn new(model: &'a Model<F>, vocab: &'a Vocabulary, sequence: &'a SequenceConfig, mode: GatingSignals) -> Self {
        Self {
            model,
            vocab,
            sequence,
            mode,
            decode: DecodeOptions::default(),
        }
    }
}

impl<F: Scalar> Policy for ModelPolicy<'_, F> {
    fn mode(&self) -> GatingSignals {
        self.mode
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        let grammar = self.sequence.grammar(self.mode);
        let parts = QueryParts {
            instruction: ctx.instruction,
            history: ctx.history,
            current: ctx.current,
            stop_count: ctx.stop_count.min(MAX_STOP_COUNT),
        };
        let reserve = grammar.max_len().min(self.sequence.context / 2);
        let (query, _) = build_query(&parts, self.mode, self.vocab, self.sequence, reserve)?;
        let out = match decode_greedy(self.model, self.vocab, &query, &grammar, self.decode) {
            Ok(o) => o,
            Err(e @ Error::GrammarViolation { .. }) => {
                return Ok(Decision {
                    failure: Some(e.to_string()),
                    ..Default::default()
                })
            }
            Err(e) => return Err(e),
        };
        match grammar.parse(&out.response, self.vocab) {
            Ok(p) => Ok(Decision {
                actions: p.actions,
                generated_tokens: out.generated,
                text_tokens: p.text.map_or(0, |t| t.len()),
                failure: None,
            }),
            Err(e) => Ok(Decision {
                generated_tokens: out.generated,
                failure: Some(e.to_string()),
                ..Default::default()
            }),
        }
    }
}

/// Replays the episode's expert actions in chunks of `k`.
pub struct OraclePolicy {
    pub k: usize,
    actions: Vec<Action>,
    cursor: usize,
}

impl OraclePolicy {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            actions: Vec::new(),
            cursor: 0,
        }
    }
}

impl Policy for OraclePolicy {
    fn mode(&self) -> GatingSignals {
        GatingSignals::NON_COT
    }

    fn reset(&mut self, episode: &Episode) {
        self.actions = episode.trajectory.actions.clone();
        self.cursor = 0;
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Decision> {
        let end = (self.cursor + self.k).min(self.actions.len());
        let actions = self.actions[self.cursor..end].to_vec();
        self.cursor = end;
        Ok(Decision {
            generated_tokens: actions.len() + 1,
            actions,
            ..Default::default()
        })
    }
}

/// Emits a single stop at every decision.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopPolicy;

impl Policy for StopPolicy {
    fn mode(&self) -> GatingSignals {
        GatingSignals::NON_COT
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Decision> {
        Ok(Decision {
            actions: vec![Action::Stop],
            generated_tokens: 2,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskOutcome {
    pub success: bool,
    pub agent_len: usize,
    pub expert_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub task_id: usize,
    pub mode: String,
    pub subtasks: Vec<SubtaskOutcome>,
    pub n_act: usize,
    /// Seconds spent in the policy.
    pub t_nav: f64,
    /// Seconds including rendering and observation encoding.
    pub t_nav_total: f64,
    pub generated_tokens: usize,
    pub text_tokens: usize,
    pub decisions: usize,
    pub grammar_failures: usize,
}

impl EpisodeReport {
    pub fn success(&self) -> bool {
        self.subtasks.iter().all(|s| s.success)
    }
}

/// Runs `policy` on one episode until every subtask is concluded.
///
/// A stop verifies the current subtask and moves on to the next one; the
/// rest of the chunk keeps executing. Running out of budget fails the
/// subtask and drops the rest of the chunk. Unparseable responses cost one
/// budget unit.
pub fn run_episode(
    policy: &mut dyn Policy,
    episode: &Episode,
    codec: &Codec,
    render_cfg: &RenderConfig,
    k: usize,
) -> Result<EpisodeReport> {
    let started = Instant::now();
    let mut model_time = Duration::ZERO;
    let world = &episode.world;
    let task = &episode.task;
    let m = task.subgoals.len();
    let scales = codec.num_scales();
    let encode = |img: &crate::env::Image| -> Result<Vec<u16>> { Ok(codec.encode(img)?.flatten(scales)) };

    policy.reset(episode);
    let mut report = EpisodeReport {
        task_id: episode.id,
        mode: policy.mode().name().into(),
        subtasks: Vec::with_capacity(m),
        n_act: 0,
        t_nav: 0.0,
        t_nav_total: 0.0,
        generated_tokens: 0,
        text_tokens: 0,
        decisions: 0,
        grammar_failures: 0,
    };
    let mut state = task.start;
    let mut history: Vec<Vec<u16>> = Vec::new();
    let mut budget = task.budgets.first().copied().unwrap_or(0);
    let mut agent_len = 0usize;
    let conclude = |report: &mut EpisodeReport, success: bool, agent_len: &mut usize, budget: &mut u32| {
        let j = report.subtasks.len();
        report.subtasks.push(SubtaskOutcome {
            success,
            agent_len: *agent_len,
            expert_len: episode.trajectory.segment_lengths[j],
        });
        *agent_len = 0;
        *budget = task.budgets.get(j + 1).copied().unwrap_or(0);
    };

    while report.subtasks.len() < m {
        let obs = render(world, &state, render_cfg);
        let current = [encode(&obs.left)?, encode(&obs.front)?, encode(&obs.right)?];
        let ctx = DecisionContext {
            instruction: &task.instruction,
            history: &history,
            current: [&current[0], &current[1], &current[2]],
            stop_count: report.subtasks.len(),
        };
        let t0 = Instant::now();
        let decision = policy.decide(&ctx)?;
        model_time += t0.elapsed();
        report.decisions += 1;
        report.generated_tokens += decision.generated_tokens;
        report.text_tokens += decision.text_tokens;
        if decision.failure.is_some() || decision.actions.is_empty() {
            report.grammar_failures += 1;
            budget -= 1;
            if budget == 0 {
                conclude(&mut report, false, &mut agent_len, &mut budget);
            }
            continue;
        }
        let mut front = current[1].clone();
        let n = decision.actions.len().min(k);
        for (i, &a) in decision.actions[..n].iter().enumerate() {
            history.push(front);
            state = step(world, &state, a);
            report.n_act += 1;
            agent_len += 1;
            budget -= 1;
            if a == Action::Stop {
                let j = report.subtasks.len();
                let ok = check_subtask_success(world, &state, task.subgoals[j])?;
                conclude(&mut report, ok, &mut agent_len, &mut budget);
                if report.subtasks.len() == m {
                    break;
                }
            } else if budget == 0 {
                conclude(&mut report, false, &mut agent_len, &mut budget);
                break;
            }
            front = if i + 1 < n {
                encode(&render_view(world, state.pos, state.heading, render_cfg))?
            } else {
                Vec::new()
            };
        }
    }
    report.t_nav = model_time.as_secs_f64();
    report.t_nav_total = started.elapsed().as_secs_f64();
    Ok(report)
}

pub fn evaluate(
    policy: &mut dyn Policy,
    episodes: &[Episode],
    codec: &Codec,
    render_cfg: &RenderConfig,
    k: usize,
) -> Result<Vec<EpisodeReport>> {
    episodes
        .iter()
        .map(|e| run_episode(policy, e, codec, render_cfg, k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApsMeasurement {
    /// Actions per second of policy time.
    pub aps: f64,
    /// Actions per second including rendering and encoding.
    pub aps_total: f64,
    pub tokens_per_action: f64,
    /// Mean textual-trace words per decision.
    pub text_per_decision: f64,
    pub n_act: usize,
    pub generated_tokens: usize,
}

impl ApsMeasurement {
    pub fn from_reports(reports: &[EpisodeReport]) -> Self {
        let n: usize = reports.iter().map(|r| r.n_act).sum();
        let tok: usize = reports.iter().map(|r| r.generated_tokens).sum();
        let t: f64 = reports.iter().map(|r| r.t_nav).sum();
        let tt: f64 = reports.iter().map(|r| r.t_nav_total).sum();
        let decisions: usize = reports.iter().map(|r| r.decisions).sum();
        let text: usize = reports.iter().map(|r| r.text_tokens).sum();
        let rate = |t: f64| if n == 0 || t <= 0.0 { 0.0 } else { n as f64 / t };
        Self {
            aps: rate(t),
            aps_total: rate(tt),
            tokens_per_action: if n == 0 { 0.0 } else { tok as f64 / n as f64 },
            text_per_decision: if decisions == 0 { 0.0 } else { text as f64 / decisions as f64 },
            n_act: n,
            generated_tokens: tok,
        }
    }
}

/// Throughput over `episodes` after one discarded warm-up episode.
pub fn measure_aps(
    policy: &mut dyn Policy,
    episodes: &[Episode],
    codec: &Codec,
    render_cfg: &RenderConfig,
    k: usize,
) -> Result<(ApsMeasurement, Vec<EpisodeReport>)> {
    let first = episodes.first().ok_or_else(|| Error::EmptyInput("task set".into()))?;
    run_episode(policy, first, codec, render_cfg, k)?;
    let reports = evaluate(policy, episodes, codec, render_cfg, k)?;
    Ok((ApsMeasurement::from_reports(&reports), reports))
}

pub fn write_reports_jsonl(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut out = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: &str = "mode,episodes,sr,isr,csr,cgt,aps,aps_total,tokens_per_action";

pub fn summary_csv_row(mode: &str, s: &MetricSummary, aps: &ApsMeasurement) -> String {
    format!(
        "{mode},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4}",
        s.episodes, s.sr, s.isr, s.csr, s.cgt, aps.aps, aps.aps_total, aps.tokens_per_action
    )
}

pub fn write_summary_csv(path: &Path, rows: &[(String, MetricSummary, ApsMeasurement)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = format!("{SUMMARY_HEADER}\n");
    for (mode, m, a) in rows {
        s.push_str(&summary_csv_row(mode, m, a));
        s.push('\n');
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}
