//! Unified token vocabulary.
//!
//! Ids are laid out in contiguous ranges: system, gating, action, words,
//! latent. The latent range has one id per codebook entry.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::{Action, Color, ObjectKind, RoomKind};
use crate::error::{Error, Result};
use crate::gating::GatingSignals;
use crate::hash::sha256_hex;

pub type TokenId = u32;

pub const VOCAB_FORMAT_VERSION: u32 = 1;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const NAV: TokenId = 3;
pub const THINK_OPEN: TokenId = 4;
pub const THINK_CLOSE: TokenId = 5;
pub const OBS_OPEN: TokenId = 6;
pub const OBS_CLOSE: TokenId = 7;
pub const HIST_OPEN: TokenId = 8;
pub const HIST_CLOSE: TokenId = 9;

const SYSTEM: [&str; 10] = [
    "<pad>", "<bos>", "<eos>", "<nav>", "<think>", "</think>", "<obs>", "</obs>", "<hist>", "</hist>",
];
const GATING: [&str; 4] = ["<textual_think>", "<no_textual_think>", "<visual_think>", "<no_visual_think>"];
const ACTIONS: [&str; 4] = ["<|forward|>", "<|left|>", "<|right|>", "<|stop|>"];

pub const GATING_START: TokenId = SYSTEM.len() as TokenId;
pub const ACTION_START: TokenId = GATING_START + GATING.len() as TokenId;
pub const WORD_START: TokenId = ACTION_START + ACTIONS.len() as TokenId;

pub const MAX_STOP_COUNT: usize = 4;
pub const MAX_WORDS: usize = 160;

pub const NUMBER_WORDS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];

const TEMPLATE_WORDS: [&str; 24] = [
    "go", "to", "the", "then", "in", "plan", "progress", "action", "imagine", "done", "target", "distance",
    "visible", "hidden", "approach", "forward", "left", "right", "stop", "see", "ahead", "wall", "floor", "many",
];

/// Word list in id order.
pub fn word_list() -> Vec<String> {
    let mut w: Vec<String> = TEMPLATE_WORDS.iter().map(|s| s.to_string()).collect();
    w.extend(NUMBER_WORDS.iter().map(|s| s.to_string()));
    w.extend(Color::ALL.iter().map(|c| c.name().to_string()));
    w.extend(ObjectKind::ALL.iter().map(|k| k.name().to_string()));
    w.extend(RoomKind::ALL.iter().map(|r| r.name().to_string()));
    w.extend((0..=MAX_STOP_COUNT).map(|n| format!("stop-count-{n}")));
    w
}

pub fn number_word(n: usize) -> &'static str {
    NUMBER_WORDS.get(n).copied().unwrap_or("many")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    System,
    Gating,
    Action,
    Word,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    num_words: usize,
    num_latents: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    num_words: usize,
    num_latents: usize,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Standard vocabulary with `num_latents` latent ids.
    pub fn new(num_latents: usize) -> Self {
        Self::from_parts(word_list(), num_latents).expect("built-in word list is valid")
    }

    fn from_parts(words: Vec<String>, num_latents: usize) -> Result<Self> {
        if words.len() > MAX_WORDS {
            return Err(Error::InvalidConfig(format!("{} words exceed {MAX_WORDS}", words.len())));
        }
        let mut tokens: Vec<String> = SYSTEM.iter().chain(&GATING).chain(&ACTIONS).map(|s| s.to_string()).collect();
        let num_words = words.len();
        tokens.extend(words);
        tokens.extend((1..=num_latents).map(|i| format!("<|{i}|>")));
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::malformed("vocabulary", format!("duplicate token '{t}'")));
            }
        }
        Ok(Self {
            tokens,
            index,
            num_words,
            num_latents,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_latents(&self) -> usize {
        self.num_latents
    }

    pub fn latent_start(&self) -> TokenId {
        WORD_START + self.num_words as TokenId
    }

    pub fn kind(&self, id: TokenId) -> Result<TokenKind> {
        let i = id as usize;
        if i >= self.len() {
            return Err(Error::UnknownToken { id, size: self.len() });
        }
        Ok(if id < GATING_START {
            TokenKind::System
        } else if id < ACTION_START {
            TokenKind::Gating
        } else if id < WORD_START {
            TokenKind::Action
        } else if id < self.latent_start() {
            TokenKind::Word
        } else {
            TokenKind::Latent
        })
    }

    pub fn token_str(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::UnknownToken { id, size: self.len() })
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn word(&self, w: &str) -> Result<TokenId> {
        match self.id(w) {
            Some(id) if self.kind(id)? == TokenKind::Word => Ok(id),
            _ => Err(Error::UnknownWord(w.to_string())),
        }
    }

    pub fn words(&self, ws: &[impl AsRef<str>]) -> Result<Vec<TokenId>> {
        ws.iter().map(|w| self.word(w.as_ref())).collect()
    }

    pub fn action(&self, a: Action) -> TokenId {
        ACTION_START + a.index() as TokenId
    }

    pub fn to_action(&self, id: TokenId) -> Option<Action> {
        (ACTION_START..WORD_START).contains(&id).then(|| Action::ALL[(id - ACTION_START) as usize])
    }

    pub fn action_ids(&self) -> [TokenId; 4] {
        Action::ALL.map(|a| self.action(a))
    }

    pub fn latent(&self, index: u16) -> Result<TokenId> {
        if index as usize >= self.num_latents {
            return Err(Error::UnknownToken {
                id: index as u32,
                size: self.num_latents,
            });
        }
        Ok(self.latent_start() + index as TokenId)
    }

    pub fn to_latent(&self, id: TokenId) -> Option<u16> {
        let s = self.latent_start();
        (id >= s && ((id - s) as usize) < self.num_latents).then(|| (id - s) as u16)
    }

    pub fn latents(&self, indices: &[u16]) -> Result<Vec<TokenId>> {
        indices.iter().map(|&i| self.latent(i)).collect()
    }

    /// The two gating tokens that end a query.
    pub fn gating(&self, g: GatingSignals) -> [TokenId; 2] {
        [
            GATING_START + if g.textual { 0 } else { 1 },
            GATING_START + if g.visual { 2 } else { 3 },
        ]
    }

    pub fn stop_count(&self, n: usize) -> TokenId {
        self.word(&format!("stop-count-{}", n.min(MAX_STOP_COUNT))).expect("stop-count words exist")
    }

    pub fn decode_string(&self, ids: &[TokenId]) -> Result<String> {
        Ok(ids.iter().map(|&i| self.token_str(i)).collect::<Result<Vec<_>>>()?.join(" "))
    }

    pub fn encode_string(&self, s: &str) -> Result<Vec<TokenId>> {
        s.split_whitespace()
            .map(|t| self.id(t).ok_or_else(|| Error::UnknownWord(t.to_string())))
            .collect()
    }

    /// Human-readable manifest, stable across runs.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&Manifest {
            version: VOCAB_FORMAT_VERSION,
            num_words: self.num_words,
            num_latents: self.num_latents,
            tokens: self.tokens.clone(),
        })
        .expect("manifest serializes")
    }

    pub fn from_manifest_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        if m.version != VOCAB_FORMAT_VERSION {
            return Err(Error::Version {
                what: "vocabulary".into(),
                found: m.version,
            });
        }
        let fixed = SYSTEM.len() + GATING.len() + ACTIONS.len();
        if m.tokens.len() != fixed + m.num_words + m.num_latents {
            return Err(Error::malformed("vocabulary", "token count does not match ranges"));
        }
        let words = m.tokens[fixed..fixed + m.num_words].to_vec();
        let v = Self::from_parts(words, m.num_latents)?;
        if v.tokens != m.tokens {
            return Err(Error::malformed("vocabulary", "fixed ranges differ from this build"));
        }
        Ok(v)
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.manifest_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_disjoint_and_exhaustive() {
        let v = Vocabulary::new(64);
        let mut counts = HashMap::new();
        for id in 0..v.len() as TokenId {
            *counts.entry(v.kind(id).unwrap()).or_insert(0) += 1;
        }
        assert_eq!(counts[&TokenKind::System], 10);
        assert_eq!(counts[&TokenKind::Gating], 4);
        assert_eq!(counts[&TokenKind::Action], 4);
        assert_eq!(counts[&TokenKind::Latent], 64);
        assert!(counts[&TokenKind::Word] <= MAX_WORDS);
        assert!(v.kind(v.len() as TokenId).is_err());
    }

    #[test]
    fn string_round_trip() {
        let v = Vocabulary::new(64);
        for id in 0..v.len() as TokenId {
            assert_eq!(v.id(v.token_str(id).unwrap()), Some(id));
        }
        assert_eq!(v.token_str(v.latent(0).unwrap()).unwrap(), "<|1|>");
        assert_eq!(v.token_str(v.latent(63).unwrap()).unwrap(), "<|64|>");
        assert!(v.latent(64).is_err());
    }

    #[test]
    fn actions_biject() {
        let v = Vocabulary::new(8);
        for a in Action::ALL {
            assert_eq!(v.to_action(v.action(a)), Some(a));
        }
        assert_eq!(v.to_action(EOS), None);
    }

    #[test]
    fn manifest_round_trip() {
        let v = Vocabulary::new(64);
        let back = Vocabulary::from_manifest_json(&v.manifest_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert_ne!(Vocabulary::new(32).hash(), v.hash());
    }

    #[test]
    fn gating_tokens() {
        let v = Vocabulary::new(8);
        let [t, vis] = v.gating(GatingSignals::VISUAL);
        assert_eq!(v.token_str(t).unwrap(), "<no_textual_think>");
        assert_eq!(v.token_str(vis).unwrap(), "<visual_think>");
    }
}
