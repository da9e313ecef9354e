use super::{Model, Scalar};
use crate::error::{Error, Result};
use crate::grammar::{Phase, ResponseGrammar};
use crate::vocab::{TokenId, Vocabulary, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Mask logits to tokens the grammar allows.
    pub constrained: bool,
    /// Generation budget; `None` uses the grammar's maximum length.
    pub max_new_tokens: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            constrained: true,
            max_new_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    pub response: Vec<TokenId>,
    pub generated: usize,
    /// Budget or context ran out before EOS.
    pub truncated: bool,
}

/// Greedy argmax decoding; ties go to the lowest token id.
pub fn decode_greedy<F: Scalar>(
    model: &Model<F>,
    vocab: &Vocabulary,
    query: &[TokenId],
    grammar: &ResponseGrammar,
    opts: DecodeOptions,
) -> Result<DecodeOutput> {
    let gate = vocab.gating(grammar.mode);
    if query.len() < 2 || query[query.len() - 2..] != gate {
        return Err(Error::malformed("query", format!("must end with the gating tokens of {}", grammar.mode)));
    }
    let budget = opts.max_new_tokens.unwrap_or_else(|| grammar.max_len());
    let mut seq = query.to_vec();
    let mut phase = Phase::Start;
    let mut response = Vec::new();
    let mut truncated = true;
    while response.len() < budget && seq.len() < model.config.context {
        let last = seq.len() - 1;
        let fwd = model.forward(&seq, &[last])?;
        let row = fwd.logits.row(0);
        let mut best: Option<(TokenId, F)> = None;
        for (id, &l) in row.iter().enumerate() {
            let id = id as TokenId;
            if opts.constrained && !grammar.is_allowed(phase, id, vocab) {
                continue;
            }
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((id, l));
            }
        }
        let (tok, _) = best.ok_or_else(|| Error::GrammarViolation {
            mode: grammar.mode.name().into(),
            detail: format!("no token allowed in {phase:?}"),
        })?;
        if opts.constrained {
            phase = grammar.advance(phase, tok, vocab)?;
        }
        response.push(tok);
        seq.push(tok);
        if tok == EOS {
            truncated = false;
            break;
        }
    }
    Ok(DecodeOutput {
        generated: response.len(),
        response,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::super::ModelConfig;
    use super::*;
    use crate::gating::GatingSignals;
    use crate::vocab::NAV;

    #[test]
    fn constrained_decode_follows_each_mode_grammar() {
        let vocab = Vocabulary::new(16);
        let model = Model::<f64>::new(ModelConfig {
            context: 128,
            d_model: 16,
            n_heads: 2,
            ..ModelConfig::new(vocab.len())
        })
        .unwrap();
        for mode in GatingSignals::ALL {
            let g = ResponseGrammar::new(mode, 5, 5);
            let mut q = vec![NAV];
            q.extend(vocab.gating(mode));
            let out = decode_greedy(&model, &vocab, &q, &g, DecodeOptions::default()).unwrap();
            let parsed = g.parse(&out.response, &vocab).unwrap();
            assert_eq!(parsed.latents.map(|l| l.len()), mode.visual.then_some(5));
            assert_eq!(parsed.text.is_some(), mode.textual);
            // deterministic
            let again = decode_greedy(&model, &vocab, &q, &g, DecodeOptions::default()).unwrap();
            assert_eq!(out, again);
        }
    }

    #[test]
    fn query_must_end_with_gating_tokens() {
        let vocab = Vocabulary::new(4);
        let model = Model::<f64>::new(ModelConfig {
            context: 16,
            d_model: 8,
            n_heads: 2,
            ..ModelConfig::new(vocab.len())
        })
        .unwrap();
        let g = ResponseGrammar::new(GatingSignals::NON_COT, 0, 5);
        assert!(decode_greedy(&model, &vocab, &[NAV], &g, DecodeOptions::default()).is_err());
    }
}
