use serde::{Deserialize, Serialize};

use crate::codec::ScaleSchedule;
use crate::data::TrainingSample;
use crate::env::Action;
use crate::error::{Error, Result};
use crate::gating::GatingSignals;
use crate::grammar::ResponseGrammar;
use crate::vocab::{TokenId, Vocabulary, EOS, HIST_CLOSE, HIST_OPEN, NAV, OBS_CLOSE, OBS_OPEN, THINK_CLOSE, THINK_OPEN};

/// How samples are laid out as token sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    pub schedule: ScaleSchedule,
    /// Most recent history frames placed in the query.
    pub history_cap: usize,
    /// Scales per history frame.
    pub hist_prefix: usize,
    /// Scales per current view.
    pub obs_prefix: usize,
    /// Scales in the visual trace.
    pub vcot_prefix: usize,
    pub context: usize,
    /// Actions per response (k).
    pub max_actions: usize,
    pub max_text_words: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            schedule: ScaleSchedule::default(),
            history_cap: 10,
            hist_prefix: 4,
            obs_prefix: 4,
            vcot_prefix: 4,
            context: 512,
            max_actions: 5,
            max_text_words: 64,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        for p in [self.hist_prefix, self.obs_prefix, self.vcot_prefix] {
            self.schedule.check_prefix(p)?;
        }
        if self.max_actions == 0 {
            return Err(Error::InvalidConfig("max_actions must be positive".into()));
        }
        Ok(())
    }

    pub fn visual_len(&self) -> usize {
        self.schedule.token_count(self.vcot_prefix)
    }

    pub fn grammar(&self, mode: GatingSignals) -> ResponseGrammar {
        ResponseGrammar {
            mode,
            visual_len: self.visual_len(),
            max_actions: self.max_actions,
            max_words: self.max_text_words,
        }
    }
}

/// Inputs of one decision.
#[derive(Debug, Clone, Copy)]
pub struct QueryParts<'a> {
    pub instruction: &'a [String],
    /// Full-pyramid front views, oldest first.
    pub history: &'a [Vec<u16>],
    pub current: [&'a [u16]; 3],
    pub stop_count: usize,
}

impl<'a> QueryParts<'a> {
    pub fn from_sample(s: &'a TrainingSample) -> Self {
        Self {
            instruction: &s.instruction,
            history: &s.history,
            current: [&s.current[0], &s.current[1], &s.current[2]],
            stop_count: s.stop_count,
        }
    }
}

/// Response token ranges within a [`TokenSequence`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Segments {
    /// `<think> … </think>`.
    pub text: Option<std::ops::Range<usize>>,
    pub visual: Option<std::ops::Range<usize>>,
    pub actions: std::ops::Range<usize>,
    pub eos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<TokenId>,
    /// True on supervised response positions.
    pub loss_mask: Vec<bool>,
    pub query_len: usize,
    pub segments: Segments,
    /// History frames that made it into the query.
    pub history_used: usize,
}

impl TokenSequence {
    /// Logit rows that predict positions `range`.
    pub fn rows_for(range: std::ops::Range<usize>) -> std::ops::Range<usize> {
        range.start - 1..range.end - 1
    }
}

fn prefix_of<'a>(tokens: &'a [u16], schedule: &ScaleSchedule, prefix: usize) -> Result<&'a [u16]> {
    let n = schedule.token_count(prefix);
    tokens.get(..n).ok_or_else(|| Error::ShapeMismatch {
        expected: format!("at least {n} latent indices"),
        got: format!("{}", tokens.len()),
    })
}

/// Query tokens with at most `history_cap` frames, dropping the oldest until
/// `reserve` more tokens fit in the context.
pub fn build_query(
    parts: &QueryParts<'_>,
    mode: GatingSignals,
    vocab: &Vocabulary,
    cfg: &SequenceConfig,
    reserve: usize,
) -> Result<(Vec<TokenId>, usize)> {
    let per_frame = cfg.schedule.token_count(cfg.hist_prefix);
    let fixed = 1 + parts.instruction.len() + 2 + 2 + 3 * cfg.schedule.token_count(cfg.obs_prefix) + 1 + 2;
    let mut frames = parts.history.len().min(cfg.history_cap);
    while frames > 0 && fixed + frames * per_frame + reserve > cfg.context {
        frames -= 1;
    }
    let len = fixed + frames * per_frame;
    if len + reserve > cfg.context {
        return Err(Error::ContextOverflow {
            len: len + reserve,
            context: cfg.context,
        });
    }
    let mut q = Vec::with_capacity(len);
    q.push(NAV);
    q.extend(vocab.words(parts.instruction)?);
    q.push(HIST_OPEN);
    for frame in &parts.history[parts.history.len() - frames..] {
        q.extend(vocab.latents(prefix_of(frame, &cfg.schedule, cfg.hist_prefix)?)?);
    }
    q.push(HIST_CLOSE);
    q.push(OBS_OPEN);
    for view in parts.current {
        q.extend(vocab.latents(prefix_of(view, &cfg.schedule, cfg.obs_prefix)?)?);
    }
    q.push(OBS_CLOSE);
    q.push(vocab.stop_count(parts.stop_count));
    q.extend(vocab.gating(mode));
    debug_assert_eq!(q.len(), len);
    Ok((q, frames))
}

/// Response tokens for `mode`: optional traces, the actions, then EOS.
pub fn build_response(
    sample: &TrainingSample,
    mode: GatingSignals,
    vocab: &Vocabulary,
    cfg: &SequenceConfig,
) -> Result<(Vec<TokenId>, Segments)> {
    if sample.actions.is_empty() || sample.actions.len() > cfg.max_actions {
        return Err(Error::malformed(
            "sample",
            format!("{} actions, expected 1..={}", sample.actions.len(), cfg.max_actions),
        ));
    }
    let mut r = Vec::new();
    let mut seg = Segments::default();
    if mode.textual {
        let start = r.len();
        r.push(THINK_OPEN);
        r.extend(vocab.words(&sample.text)?);
        r.push(THINK_CLOSE);
        seg.text = Some(start..r.len());
    }
    if mode.visual {
        let start = r.len();
        r.extend(vocab.latents(prefix_of(&sample.visual, &cfg.schedule, cfg.vcot_prefix)?)?);
        seg.visual = Some(start..r.len());
    }
    let start = r.len();
    r.extend(sample.actions.iter().map(|&a| vocab.action(a)));
    seg.actions = start..r.len();
    seg.eos = r.len();
    r.push(EOS);
    Ok((r, seg))
}

fn shift(r: &std::ops::Range<usize>, by: usize) -> std::ops::Range<usize> {
    r.start + by..r.end + by
}

pub fn build_sequence(
    sample: &TrainingSample,
    mode: GatingSignals,
    vocab: &Vocabulary,
    cfg: &SequenceConfig,
) -> Result<TokenSequence> {
    let (response, seg) = build_response(sample, mode, vocab, cfg)?;
    let (query, history_used) = build_query(&QueryParts::from_sample(sample), mode, vocab, cfg, response.len())?;
    let q = query.len();
    let mut tokens = query;
    tokens.extend(&response);
    let mut loss_mask = vec![false; q];
    loss_mask.extend(std::iter::repeat_n(true, response.len()));
    Ok(TokenSequence {
        tokens,
        loss_mask,
        query_len: q,
        segments: Segments {
            text: seg.text.as_ref().map(|r| shift(r, q)),
            visual: seg.visual.as_ref().map(|r| shift(r, q)),
            actions: shift(&seg.actions, q),
            eos: seg.eos + q,
        },
        history_used,
    })
}

/// Checks a built sequence against the response grammar of `mode`.
pub fn validate_sequence(seq: &TokenSequence, mode: GatingSignals, vocab: &Vocabulary, cfg: &SequenceConfig) -> Result<Vec<Action>> {
    let gate = vocab.gating(mode);
    if seq.query_len < 2 || seq.tokens[seq.query_len - 2..seq.query_len] != gate {
        return Err(Error::GrammarViolation {
            mode: mode.name().into(),
            detail: "query does not end with the mode's gating tokens".into(),
        });
    }
    if seq.loss_mask[..seq.query_len].iter().any(|m| *m) {
        return Err(Error::GrammarViolation {
            mode: mode.name().into(),
            detail: "loss mask covers query positions".into(),
        });
    }
    let parsed = cfg.grammar(mode).parse(&seq.tokens[seq.query_len..], vocab)?;
    Ok(parsed.actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AgentState, Heading, Pos};

    pub(crate) fn sample(history: usize) -> TrainingSample {
        let v: Vec<u16> = (0..30).map(|i| (i % 7) as u16).collect();
        TrainingSample {
            episode: 0,
            start: 5,
            state: AgentState::new(Pos::new(1, 1), Heading::N),
            instruction: vec!["go".into(), "to".into(), "the".into(), "red".into(), "chest".into()],
            history: vec![v.clone(); history],
            current: [v.clone(), v.clone(), v.clone()],
            stop_count: 1,
            text: vec!["plan".into(), "red".into(), "chest".into()],
            visual: v,
            actions: vec![Action::Forward, Action::Left, Action::Stop],
            augmentation: None,
        }
    }

    #[test]
    fn mode_layouts() {
        let vocab = Vocabulary::new(64);
        let cfg = SequenceConfig::default();
        let s = sample(3);
        let plain = build_sequence(&s, GatingSignals::NON_COT, &vocab, &cfg).unwrap();
        assert_eq!(plain.tokens.len() - plain.query_len, 4);
        assert!(!plain.tokens[plain.query_len..].contains(&THINK_OPEN));
        let mm = build_sequence(&s, GatingSignals::MULTIMODAL, &vocab, &cfg).unwrap();
        assert_eq!(mm.tokens[mm.query_len], THINK_OPEN);
        assert_eq!(mm.segments.visual.as_ref().unwrap().len(), 30);
        assert_eq!(mm.segments.text.as_ref().unwrap().len(), 5);
        let vis = build_sequence(&s, GatingSignals::VISUAL, &vocab, &cfg).unwrap();
        assert_eq!(vis.tokens.len() - vis.query_len, 30 + 4);
        for m in GatingSignals::ALL {
            let seq = build_sequence(&s, m, &vocab, &cfg).unwrap();
            assert_eq!(validate_sequence(&seq, m, &vocab, &cfg).unwrap(), s.actions);
        }
    }

    #[test]
    fn oldest_history_is_dropped_on_overflow() {
        let vocab = Vocabulary::new(64);
        let cfg = SequenceConfig {
            context: 300,
            ..SequenceConfig::default()
        };
        let mut s = sample(14);
        s.history[13][0] = 42;
        let seq = build_sequence(&s, GatingSignals::MULTIMODAL, &vocab, &cfg).unwrap();
        assert!(seq.tokens.len() <= cfg.context);
        assert!(seq.history_used < 10 && seq.history_used > 0);
        // the newest frame survives, directly before the closing delimiter
        let close = seq.tokens.iter().position(|&t| t == HIST_CLOSE).unwrap();
        assert_eq!(seq.tokens[close - 30], vocab.latent(42).unwrap());
        let tiny = SequenceConfig { context: 50, ..cfg };
        assert!(matches!(
            build_sequence(&s, GatingSignals::NON_COT, &vocab, &tiny),
            Err(Error::ContextOverflow { .. })
        ));
    }
}
