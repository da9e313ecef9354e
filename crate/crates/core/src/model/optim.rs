use serde::{Deserialize, Serialize};

use super::{Gradients, Model, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Heavy-ball momentum.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Momentum for SGD, first-moment decay for Adam.
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this; 0 disables.
    pub clip_norm: f64,
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of `lr`.
    pub final_lr_frac: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr: 0.1,
            momentum: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            warmup_steps: 50,
            final_lr_frac: 0.05,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            ..Self::default()
        }
    }
}

/// Linear warmup followed by cosine decay over `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
    pub final_frac: f64,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.base * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let t = ((step - self.warmup) as f64 / span as f64).min(1.0);
        let lo = self.base * self.final_frac;
        lo + 0.5 * (self.base - lo) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// SGD or Adam behind one stepping interface, with global-norm clipping.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    pub config: OptimizerConfig,
    pub schedule: LrSchedule,
    velocity: Vec<F>,
    second: Vec<F>,
    pub steps: usize,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(config: OptimizerConfig, num_params: usize, total_steps: usize) -> Self {
        Self {
            schedule: LrSchedule {
                base: config.lr,
                warmup: config.warmup_steps,
                total: total_steps,
                final_frac: config.final_lr_frac,
            },
            config,
            velocity: vec![F::zero(); num_params],
            second: match config.kind {
                OptimizerKind::Sgd => Vec::new(),
                OptimizerKind::Adam => vec![F::zero(); num_params],
            },
            steps: 0,
        }
    }

    /// Applies one update and returns the pre-clip gradient norm.
    pub fn step(&mut self, model: &mut Model<F>, grads: &Gradients<F>) -> f64 {
        let norm = grads.norm().f64();
        let clip = if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            self.config.clip_norm / norm
        } else {
            1.0
        };
        let lr = self.schedule.at(self.steps);
        let mu = F::lit(self.config.momentum);
        let c = F::lit(clip);
        match self.config.kind {
            OptimizerKind::Sgd => {
                let lr = F::lit(lr);
                for ((p, v), g) in model.params.iter_mut().zip(&mut self.velocity).zip(&grads.0) {
                    *v = mu * *v + c * *g;
                    *p -= lr * *v;
                }
            }
            OptimizerKind::Adam => {
                let t = (self.steps + 1) as i32;
                let b2 = F::lit(self.config.beta2);
                let eps = F::lit(self.config.eps);
                let step = F::lit(lr * (1.0 - self.config.beta2.powi(t)).sqrt() / (1.0 - self.config.momentum.powi(t)));
                for (((p, m), v), g) in model
                    .params
                    .iter_mut()
                    .zip(&mut self.velocity)
                    .zip(&mut self.second)
                    .zip(&grads.0)
                {
                    let g = c * *g;
                    *m = mu * *m + (F::one() - mu) * g;
                    *v = b2 * *v + (F::one() - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps);
                }
            }
        }
        self.steps += 1;
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = LrSchedule {
            base: 1.0,
            warmup: 10,
            total: 110,
            final_frac: 0.0,
        };
        assert!((s.at(0) - 0.1).abs() < 1e-12);
        assert!((s.at(10) - 1.0).abs() < 1e-12);
        assert!((s.at(60) - 0.5).abs() < 1e-12);
        assert!(s.at(110).abs() < 1e-12);
        assert!(s.at(500).abs() < 1e-12);
    }
}
