mod common;

use latentnav::gating::GatingSignals as G;
use latentnav::model::{entropy, Gradients, Model, RowTarget, Target};
use latentnav::trainer::{
    align_loss, build_sequence, init_model, joint_loss_grad, response_loss_grad, sequence_loss_grad, soft_targets, train,
    Recipe, SoftTargets,
};
use latentnav::experiment::checkpoint_hash;
use latentnav::vocab::Vocabulary;
use latentnav::Error;
use ndarray::Array2;

use common::{response_ce, smoke, tiny_train};

#[test]
fn mixture_samples_modes_uniformly() {
    let (_, p) = smoke();
    let mut cfg = tiny_train(Recipe::Mixture, &G::ALL, 10_000);
    cfg.batch_size = 1;
    cfg.optimizer.lr = 1e-6;
    let data = &p.samples[..4];
    let out = train(init_model::<f32>(&cfg, &p.vocab).unwrap(), data, &p.vocab, &cfg, &mut |_| {}).unwrap();
    assert_eq!(out.sampled_modes.len(), 10_000);
    for m in G::ALL {
        let f = out.sampled_modes.iter().filter(|&&x| x == m).count() as f64 / 10_000.0;
        assert!((f - 0.25).abs() < 0.02, "{m}: {f}");
    }
}

#[test]
fn single_sample_is_memorized() {
    let (_, p) = smoke();
    let mut cfg = tiny_train(Recipe::Mixture, &[G::NON_COT], 500);
    cfg.batch_size = 1;
    cfg.model.d_model = 32;
    cfg.model.n_heads = 4;
    let data = &p.samples[..1];
    let out = train(init_model::<f32>(&cfg, &p.vocab).unwrap(), data, &p.vocab, &cfg, &mut |_| {}).unwrap();
    let seq = build_sequence(&data[0], G::NON_COT, &p.vocab, &cfg.sequence).unwrap();
    let loss = response_ce(&out.model, &seq);
    assert!(loss < 0.05, "final loss {loss}");
}

#[test]
fn single_mode_mixture_loss_has_no_hidden_terms() {
    let (_, p) = smoke();
    let mut cfg = tiny_train(Recipe::Mixture, &[G::VISUAL], 1);
    cfg.batch_size = 1;
    let model = init_model::<f32>(&cfg, &p.vocab).unwrap();
    let data = &p.samples[..1];
    let seq = build_sequence(&data[0], G::VISUAL, &p.vocab, &cfg.sequence).unwrap();
    let expected = response_ce(&model, &seq);
    let out = train(model, data, &p.vocab, &cfg, &mut |_| {}).unwrap();
    let logged = out.log[0].mode_loss["v-cot"];
    assert!((logged - expected as f64).abs() < 1e-5, "{logged} vs {expected}");
}

#[test]
fn aligned_takes_one_step_per_phase() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 7);
    let out = train(init_model::<f32>(&cfg, &p.vocab).unwrap(), &p.samples, &p.vocab, &cfg, &mut |_| {}).unwrap();
    assert_eq!(out.iterations, 7);
    assert_eq!(out.phase_one_steps, 7);
    assert_eq!(out.phase_two_steps, 7);
    assert!(out.log.iter().all(|r| r.kl.is_some() && r.l_align.is_some()));

    let plain = tiny_train(Recipe::Aligned, &[G::NON_COT], 7);
    let out = train(init_model::<f32>(&plain, &p.vocab).unwrap(), &p.samples, &p.vocab, &plain, &mut |_| {}).unwrap();
    assert_eq!((out.phase_one_steps, out.phase_two_steps), (7, 0));
}

#[test]
fn aligned_recipe_requires_non_cot() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &[G::TEXTUAL], 1);
    let model = init_model::<f32>(&tiny_train(Recipe::Aligned, &G::ALL, 1), &p.vocab).unwrap();
    assert!(matches!(
        train(model, &p.samples, &p.vocab, &cfg, &mut |_| {}),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn same_seed_same_checkpoint() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 3);
    let run = || {
        let out = train(init_model::<f32>(&cfg, &p.vocab).unwrap(), &p.samples, &p.vocab, &cfg, &mut |_| {}).unwrap();
        checkpoint_hash(&out.model, &p.vocab, &cfg).unwrap()
    };
    assert_eq!(run(), run());
    let mut other = cfg.clone();
    other.seed += 1;
    let out = train(init_model::<f32>(&other, &p.vocab).unwrap(), &p.samples, &p.vocab, &other, &mut |_| {}).unwrap();
    assert_ne!(run(), checkpoint_hash(&out.model, &p.vocab, &other).unwrap());
}

/// Logits that put `probs` on the action tokens and nothing elsewhere.
fn action_logits(vocab: &Vocabulary, probs: &[[f64; 4]]) -> Array2<f64> {
    let ids = vocab.action_ids();
    let mut l = Array2::from_elem((probs.len(), vocab.len()), -1e9);
    for (r, p) in probs.iter().enumerate() {
        for (i, &q) in p.iter().enumerate() {
            l[[r, ids[i] as usize]] = if q > 0.0 { q.ln() } else { -1e9 };
        }
    }
    l
}

#[test]
fn align_loss_closed_forms() {
    let vocab = Vocabulary::new(8);
    let p = [[0.1, 0.2, 0.3, 0.4], [0.7, 0.1, 0.1, 0.1]];
    let soft = SoftTargets(p.to_vec());
    let l = action_logits(&vocab, &p);
    let h: f64 = p.iter().map(|r| entropy(r)).sum::<f64>() / 2.0;
    let total: f64 = align_loss(&[&l, &l, &l], &soft, &vocab).unwrap();
    assert!((total - 3.0 * h).abs() < 1e-9);

    let one_hot = SoftTargets(vec![[0.0, 0.0, 1.0, 0.0]]);
    let l = action_logits(&vocab, &[[0.0, 0.0, 1.0, 0.0]]);
    assert!(align_loss(&[&l], &one_hot, &vocab).unwrap().abs() < 1e-9);

    let half = SoftTargets(vec![[0.5, 0.5, 0.0, 0.0]]);
    let l = action_logits(&vocab, &[[0.5, 0.5, 0.0, 0.0]]);
    let v: f64 = align_loss(&[&l], &half, &vocab).unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-9);

    // mismatched positions are rejected
    let two = action_logits(&vocab, &p);
    assert!(matches!(align_loss(&[&two], &half, &vocab), Err(Error::PositionMismatch(_))));
}

#[test]
fn alignment_is_bounded_below_by_entropy() {
    let vocab = Vocabulary::new(8);
    let p = [[0.25, 0.25, 0.4, 0.1]];
    let soft = SoftTargets(p.to_vec());
    let other = action_logits(&vocab, &[[0.6, 0.2, 0.1, 0.1]]);
    let exact = action_logits(&vocab, &p);
    let l: f64 = align_loss(&[&other, &exact, &exact], &soft, &vocab).unwrap();
    assert!(l > 3.0 * entropy(&p[0]));
}

#[test]
fn soft_targets_are_distributions() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 1);
    let model = init_model::<f64>(&cfg, &p.vocab).unwrap();
    for s in &p.samples[..10] {
        let t = soft_targets(&model, s, &p.vocab, &cfg.sequence).unwrap();
        assert_eq!(t.len(), s.actions.len());
        for row in &t.0 {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

/// Trace-only reference for the joint phase.
fn trace_only(model: &Model<f64>, sample: &latentnav::data::TrainingSample, mode: latentnav::gating::GatingSignals, seq_cfg: &latentnav::trainer::SequenceConfig, vocab: &Vocabulary) -> Gradients<f64> {
    let seq = build_sequence(sample, mode, vocab, seq_cfg).unwrap();
    let trace: Vec<usize> = seq.segments.text.iter().chain(seq.segments.visual.iter()).flat_map(|r| r.clone()).collect();
    let w = 1.0 / trace.len() as f64;
    let rows: Vec<usize> = trace.iter().map(|p| p - 1).collect();
    let targets: Vec<RowTarget<f64>> = trace.iter().map(|&p| RowTarget { target: Target::Hard(seq.tokens[p]), weight: w }).collect();
    let mut g = Gradients::zeros(model.num_params());
    sequence_loss_grad(model, &seq.tokens, &rows, &targets, &mut g).unwrap();
    g
}

#[test]
fn zero_lambda_is_trace_only_supervision() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 1);
    let model = init_model::<f64>(&cfg, &p.vocab).unwrap();
    for s in &p.samples[..3] {
        let soft = soft_targets(&model, s, &p.vocab, &cfg.sequence).unwrap();
        for mode in G::COT {
            let mut g = Gradients::zeros(model.num_params());
            joint_loss_grad(&model, s, mode, &soft, 0.0, false, &p.vocab, &cfg.sequence, 1.0, &mut g).unwrap();
            assert_eq!(g.0, trace_only(&model, s, mode, &cfg.sequence, &p.vocab).0);
        }
    }
}

#[test]
fn non_cot_phase_is_plain_response_loss() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 1);
    let model = init_model::<f64>(&cfg, &p.vocab).unwrap();
    let seq = build_sequence(&p.samples[0], G::NON_COT, &p.vocab, &cfg.sequence).unwrap();
    let mut g = Gradients::zeros(model.num_params());
    let l = response_loss_grad(&model, &seq, &mut g).unwrap();
    let direct = response_ce(&model, &seq);
    assert!((l - direct).abs() < 1e-12);
}
