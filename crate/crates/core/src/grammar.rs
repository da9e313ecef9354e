//! Response grammar for each gating pair.
//!
//! ```text
//! (0,0)  actions EOS
//! (1,0)  <think> words </think> actions EOS
//! (0,1)  latents{V} actions EOS
//! (1,1)  <think> words </think> latents{V} actions EOS
//! ```
//! with `1..=k` actions and exactly `V` latent tokens.

use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::gating::GatingSignals;
use crate::vocab::{TokenId, TokenKind, Vocabulary, EOS, THINK_CLOSE, THINK_OPEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseGrammar {
    pub mode: GatingSignals,
    /// Latent tokens in a visual trace.
    pub visual_len: usize,
    /// Maximum actions per response (k).
    pub max_actions: usize,
    /// Maximum words inside a textual trace.
    pub max_words: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    Text { words: usize },
    Visual { latents: usize },
    Actions { count: usize },
    Done,
}

/// Parsed response segments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    pub text: Option<Vec<TokenId>>,
    pub latents: Option<Vec<u16>>,
    pub actions: Vec<Action>,
}

impl ResponseGrammar {
    pub fn new(mode: GatingSignals, visual_len: usize, max_actions: usize) -> Self {
        Self {
            mode,
            visual_len,
            max_actions,
            max_words: 64,
        }
    }

    fn after_text(&self) -> Phase {
        if self.mode.visual {
            Phase::Visual { latents: 0 }
        } else {
            Phase::Actions { count: 0 }
        }
    }

    fn violation(&self, detail: String) -> Error {
        Error::GrammarViolation {
            mode: self.mode.name().into(),
            detail,
        }
    }

    pub fn is_allowed(&self, phase: Phase, id: TokenId, vocab: &Vocabulary) -> bool {
        let kind = match vocab.kind(id) {
            Ok(k) => k,
            Err(_) => return false,
        };
        match phase {
            Phase::Start if self.mode.textual => id == THINK_OPEN,
            Phase::Start if self.mode.visual => kind == TokenKind::Latent,
            Phase::Start => kind == TokenKind::Action,
            Phase::Text { words } => {
                (kind == TokenKind::Word && words < self.max_words) || (id == THINK_CLOSE && words > 0)
            }
            Phase::Visual { .. } => kind == TokenKind::Latent,
            Phase::Actions { count } => {
                (kind == TokenKind::Action && count < self.max_actions) || (id == EOS && count > 0)
            }
            Phase::Done => false,
        }
    }

    /// Advances the grammar by one token.
    pub fn advance(&self, phase: Phase, id: TokenId, vocab: &Vocabulary) -> Result<Phase> {
        if !self.is_allowed(phase, id, vocab) {
            let tok = vocab.token_str(id).unwrap_or("<invalid>");
            return Err(self.violation(format!("token '{tok}' not allowed in {phase:?}")));
        }
        Ok(match phase {
            Phase::Start if self.mode.textual => Phase::Text { words: 0 },
            Phase::Start if self.mode.visual => self.visual_step(1),
            Phase::Start => Phase::Actions { count: 1 },
            Phase::Text { words } => {
                if id == THINK_CLOSE {
                    self.after_text()
                } else {
                    Phase::Text { words: words + 1 }
                }
            }
            Phase::Visual { latents } => self.visual_step(latents + 1),
            Phase::Actions { count } => {
                if id == EOS {
                    Phase::Done
                } else {
                    Phase::Actions { count: count + 1 }
                }
            }
            Phase::Done => unreachable!("nothing is allowed after EOS"),
        })
    }

    fn visual_step(&self, latents: usize) -> Phase {
        if latents == self.visual_len {
            Phase::Actions { count: 0 }
        } else {
            Phase::Visual { latents }
        }
    }

    /// Phase after consuming `tokens` from the start.
    pub fn phase_of(&self, tokens: &[TokenId], vocab: &Vocabulary) -> Result<Phase> {
        let mut phase = Phase::Start;
        for &t in tokens {
            phase = self.advance(phase, t, vocab)?;
        }
        Ok(phase)
    }

    /// Checks a complete response and splits it into segments.
    pub fn parse(&self, tokens: &[TokenId], vocab: &Vocabulary) -> Result<ParsedResponse> {
        let phase = self.phase_of(tokens, vocab)?;
        if phase != Phase::Done {
            return Err(self.violation(format!("response ended in {phase:?}")));
        }
        let mut out = ParsedResponse::default();
        let mut rest = tokens;
        if self.mode.textual {
            let close = rest.iter().position(|&t| t == THINK_CLOSE).expect("validated");
            out.text = Some(rest[1..close].to_vec());
            rest = &rest[close + 1..];
        }
        if self.mode.visual {
            out.latents = Some(
                rest[..self.visual_len]
                    .iter()
                    .map(|&t| vocab.to_latent(t).expect("validated"))
                    .collect(),
            );
            rest = &rest[self.visual_len..];
        }
        out.actions = rest[..rest.len() - 1]
            .iter()
            .map(|&t| vocab.to_action(t).expect("validated"))
            .collect();
        Ok(out)
    }

    /// Longest response this grammar accepts.
    pub fn max_len(&self) -> usize {
        let text = if self.mode.textual { self.max_words + 2 } else { 0 };
        let visual = if self.mode.visual { self.visual_len } else { 0 };
        text + visual + self.max_actions + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_each_mode_layout() {
        let v = Vocabulary::new(16);
        let f = v.action(Action::Forward);
        let lat = v.latent(3).unwrap();
        let go = v.word("go").unwrap();
        let g = ResponseGrammar::new(GatingSignals::NON_COT, 2, 5);
        assert_eq!(g.parse(&[f, f, EOS], &v).unwrap().actions, vec![Action::Forward; 2]);
        assert!(g.parse(&[EOS], &v).is_err());
        let g = ResponseGrammar::new(GatingSignals::MULTIMODAL, 2, 5);
        let p = g.parse(&[THINK_OPEN, go, THINK_CLOSE, lat, lat, f, EOS], &v).unwrap();
        assert_eq!(p.text, Some(vec![go]));
        assert_eq!(p.latents, Some(vec![3, 3]));
        assert!(g.parse(&[THINK_OPEN, go, THINK_CLOSE, lat, f, EOS], &v).is_err());
        let g = ResponseGrammar::new(GatingSignals::VISUAL, 2, 1);
        assert!(g.parse(&[lat, lat, f, f, EOS], &v).is_err());
    }
}
