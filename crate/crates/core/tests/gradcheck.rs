use latentnav::model::{cross_entropy, Model, ModelConfig, RowTarget, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss_and_grad(model: &Model<f64>, tokens: &[u32], rows: &[usize], targets: &[RowTarget<f64>]) -> (f64, Vec<f64>) {
    let fwd = model.forward(tokens, rows).unwrap();
    let (loss, dl) = cross_entropy(&fwd.logits, targets).unwrap();
    (loss, model.backward(&fwd, &dl).0)
}

fn loss_only(model: &Model<f64>, tokens: &[u32], rows: &[usize], targets: &[RowTarget<f64>]) -> f64 {
    let fwd = model.forward(tokens, rows).unwrap();
    cross_entropy(&fwd.logits, targets).unwrap().0
}

#[test]
fn small_model_matches_central_differences() {
    let cfg = ModelConfig {
        context: 24,
        d_model: 32,
        n_heads: 4,
        init_std: 0.2,
        head_init_std: 0.2,
        seed: 4,
        ..ModelConfig::new(40)
    };
    let mut model = Model::<f64>::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // non-trivial layer norm parameters
    for t in model.layout.tensors.clone() {
        if t.name.contains("ln") {
            for p in &mut model.params[t.range()] {
                *p += rng.random_range(-0.3..0.3);
            }
        }
    }
    let tokens: Vec<u32> = (0..12).map(|_| rng.random_range(0..40)).collect();
    let rows = vec![3, 7, 8, 11];
    let targets = vec![
        RowTarget { target: Target::Hard(5), weight: 0.25 },
        RowTarget { target: Target::Soft(vec![(1, 0.3), (2, 0.7)]), weight: 0.5 },
        RowTarget { target: Target::Hard(39), weight: 1.0 },
        RowTarget { target: Target::Hard(0), weight: 0.25 },
    ];
    let (_, grad) = loss_and_grad(&model, &tokens, &rows, &targets);
    let eps = 1e-4;
    for t in model.layout.tensors.clone() {
        let (mut num2, mut den2) = (0.0, 0.0);
        for _ in 0..12 {
            let i = t.offset + rng.random_range(0..t.len());
            let orig = model.params[i];
            model.params[i] = orig + eps;
            let lp = loss_only(&model, &tokens, &rows, &targets);
            model.params[i] = orig - eps;
            let lm = loss_only(&model, &tokens, &rows, &targets);
            model.params[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            num2 += (fd - grad[i]).powi(2);
            den2 += fd.abs().max(grad[i].abs()).powi(2);
        }
        let rel = if den2 == 0.0 { 0.0 } else { (num2 / den2).sqrt() };
        assert!(rel < 1e-4, "{}: relative error {rel:e}", t.name);
    }
}
