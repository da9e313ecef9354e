//! Tiny decoder-only transformer with hand-written reverse mode.
//!
//! Pre-norm blocks (fused QKV causal attention, GELU feed-forward), learned
//! positions, a final layer norm and an untied output head. All parameters
//! live in one flat buffer described by a [`Layout`].

mod checkpoint;
mod decode;
mod loss;
mod optim;
mod transformer;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, checkpoint_bytes, parse_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use decode::{decode_greedy, DecodeOptions, DecodeOutput};
pub use loss::{cross_entropy, entropy, loss_ce, softmax_row, RowTarget, Target};
pub use optim::{LrSchedule, Optimizer, OptimizerConfig, OptimizerKind};
pub use transformer::{Forward, Gradients};

pub trait Scalar:
    Float + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + AddAssign + SubAssign + MulAssign + DivAssign + Sum + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub init_std: f64,
    /// Output head init std; kept small so the initial distribution is near uniform.
    pub head_init_std: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            context: 512,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            ff_mult: 4,
            init_std: 0.02,
            head_init_std: 0.002,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.context == 0 || self.n_layers == 0 || self.ff_mult == 0 {
            return Err(Error::InvalidConfig("model sizes must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "width {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !(self.init_std >= 0.0 && self.head_init_std >= 0.0) {
            return Err(Error::InvalidConfig("init std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn d_ff(&self) -> usize {
        self.ff_mult * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    pub(crate) tok_emb: usize,
    pub(crate) pos_emb: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub(crate) head_w: usize,
    pub(crate) head_b: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (v, c, d, f) = (cfg.vocab_size, cfg.context, cfg.d_model, cfg.d_ff());
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec { name, shape, offset: total };
            total += spec.len();
            let off = spec.offset;
            tensors.push(spec);
            off
        };
        let tok_emb = add("tok_emb".into(), vec![v, d]);
        let pos_emb = add("pos_emb".into(), vec![c, d]);
        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: add(p("ln1.gain"), vec![d]),
                ln1_b: add(p("ln1.bias"), vec![d]),
                qkv_w: add(p("attn.qkv.weight"), vec![d, 3 * d]),
                qkv_b: add(p("attn.qkv.bias"), vec![3 * d]),
                proj_w: add(p("attn.proj.weight"), vec![d, d]),
                proj_b: add(p("attn.proj.bias"), vec![d]),
                ln2_g: add(p("ln2.gain"), vec![d]),
                ln2_b: add(p("ln2.bias"), vec![d]),
                ff1_w: add(p("ff.in.weight"), vec![d, f]),
                ff1_b: add(p("ff.in.bias"), vec![f]),
                ff2_w: add(p("ff.out.weight"), vec![f, d]),
                ff2_b: add(p("ff.out.bias"), vec![d]),
            });
        }
        let lnf_g = add("lnf.gain".into(), vec![d]);
        let lnf_b = add("lnf.bias".into(), vec![d]);
        let head_w = add("head.weight".into(), vec![d, v]);
        let head_b = add("head.bias".into(), vec![v]);
        Self {
            tensors,
            total,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
        }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Model parameters plus their layout.
#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub config: ModelConfig,
    pub params: Vec<F>,
    pub layout: Layout,
}

impl<F: Scalar> Model<F> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![F::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        // residual-branch outputs are scaled down with depth
        let resid_std = config.init_std / ((2 * config.n_layers) as f64).sqrt();
        for t in &layout.tensors {
            let std = if t.name.ends_with("gain") || t.name.ends_with("bias") {
                None
            } else if t.name == "head.weight" {
                Some(config.head_init_std)
            } else if t.name.ends_with("proj.weight") || t.name.ends_with("ff.out.weight") {
                Some(resid_std)
            } else {
                Some(config.init_std)
            };
            let slot = &mut params[t.range()];
            match std {
                Some(s) if s > 0.0 => {
                    let normal = Normal::new(0.0, s).expect("valid std");
                    for p in slot.iter_mut() {
                        *p = F::lit(normal.sample(&mut rng));
                    }
                }
                Some(_) => {}
                None if t.name.ends_with("gain") => slot.fill(F::one()),
                None => {}
            }
        }
        Ok(Self { config, params, layout })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Same parameters in another precision.
    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            config: self.config,
            params: self.params.iter().map(|p| G::lit(p.f64())).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("token sequence".into()));
        }
        if tokens.len() > self.config.context {
            return Err(Error::ContextOverflow {
                len: tokens.len(),
                context: self.config.context,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::UnknownToken {
                id: bad,
                size: self.config.vocab_size,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let cfg = ModelConfig::new(100);
        let layout = Layout::new(&cfg);
        let mut off = 0;
        for t in &layout.tensors {
            assert_eq!(t.offset, off);
            off += t.len();
        }
        assert_eq!(off, layout.total);
        assert_eq!(layout.tensors.len(), 2 + 12 * cfg.n_layers + 4);
    }

    #[test]
    fn init_is_deterministic_and_cast_preserves_values() {
        let cfg = ModelConfig::new(50);
        let a = Model::<f64>::new(cfg).unwrap();
        let b = Model::<f64>::new(cfg).unwrap();
        assert_eq!(a.params, b.params);
        let c: Model<f32> = a.cast();
        assert_eq!(c.params[7], a.params[7] as f32);
        assert!(Model::<f64>::new(ModelConfig { n_heads: 3, ..cfg }).is_err());
    }
}
