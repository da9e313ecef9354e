mod common;

use latentnav::eval::{
    measure_aps, metrics, run_episode, Decision, DecisionContext, EpisodeReport, ModelPolicy, OraclePolicy, Policy,
    StopPolicy, SubtaskOutcome,
};
use latentnav::gating::GatingSignals as G;
use latentnav::trainer::{init_model, Recipe};
use latentnav::Error;
use proptest::prelude::*;

use common::{smoke, tiny_train};

pub fn report(subtasks: &[(bool, usize, usize)]) -> EpisodeReport {
    EpisodeReport {
        task_id: 0,
        mode: "non-cot".into(),
        subtasks: subtasks
            .iter()
            .map(|&(success, agent_len, expert_len)| SubtaskOutcome {
                success,
                agent_len,
                expert_len,
            })
            .collect(),
        n_act: subtasks.iter().map(|s| s.1).sum(),
        t_nav: 1.0,
        t_nav_total: 1.0,
        generated_tokens: 0,
        text_tokens: 0,
        decisions: 0,
        grammar_failures: 0,
    }
}

#[test]
fn hand_computed_metrics() {
    let m = metrics(&[report(&[(true, 4, 4), (true, 6, 6)])]).unwrap();
    assert_eq!((m.sr, m.isr, m.csr, m.cgt), (1.0, 1.0, 1.0, 1.0));

    let m = metrics(&[report(&[(false, 9, 4), (true, 6, 6)])]).unwrap();
    assert_eq!((m.sr, m.isr, m.csr, m.cgt), (0.0, 0.5, 0.0, 0.0));

    let m = metrics(&[report(&[(true, 3, 3), (true, 5, 5)]), report(&[(false, 9, 4), (true, 6, 6)])]).unwrap();
    assert_eq!((m.sr, m.isr, m.csr), (0.5, 0.75, 0.5));
}

#[test]
fn longer_paths_lower_cgt() {
    let m = metrics(&[report(&[(true, 8, 4)])]).unwrap();
    assert_eq!(m.csr, 1.0);
    assert_eq!(m.cgt, 0.5);
}

#[test]
fn no_reports_is_an_error() {
    assert!(matches!(metrics(&[]), Err(Error::EmptyInput(_))));
}

proptest! {
    #[test]
    fn metric_identities(eps in prop::collection::vec(prop::collection::vec((any::<bool>(), 0usize..30, 1usize..20), 1..5), 1..8)) {
        let reports: Vec<EpisodeReport> = eps.iter().map(|e| report(e)).collect();
        let m = metrics(&reports).unwrap();
        prop_assert!(m.sr <= m.csr + 1e-12);
        prop_assert!(m.csr <= m.isr + 1e-12);
        prop_assert!(m.cgt <= m.csr + 1e-12);
    }
}

#[test]
fn isr_weights_episodes_equally() {
    // one short success, one long failure
    let m = metrics(&[report(&[(true, 2, 2)]), report(&[(false, 9, 4); 4])]).unwrap();
    assert_eq!((m.isr, m.csr), (0.5, 0.5));
}

#[test]
fn oracle_replay_is_perfect() {
    let (preset, p) = smoke();
    let mut oracle = OraclePolicy::new(5);
    for ep in &p.eval {
        let r = run_episode(&mut oracle, ep, &p.codec, &preset.data.render, 5).unwrap();
        assert!(r.success());
        for (s, &n) in r.subtasks.iter().zip(&ep.trajectory.segment_lengths) {
            assert_eq!(s.agent_len, n);
        }
        assert_eq!(r.n_act, r.subtasks.iter().map(|s| s.agent_len).sum::<usize>());
    }
}

#[test]
fn immediate_stop_fails_distant_goals() {
    let (preset, p) = smoke();
    let far: Vec<_> = p
        .eval
        .iter()
        .filter(|e| e.trajectory.segment_lengths.iter().all(|&n| n > 1))
        .cloned()
        .collect();
    assert!(!far.is_empty());
    let mut stop = StopPolicy;
    for ep in &far {
        let r = run_episode(&mut stop, ep, &p.codec, &preset.data.render, 5).unwrap();
        // the first subtask can never succeed from a stop at the start
        assert!(!r.subtasks[0].success);
        assert!(!r.success());
    }
}

#[test]
fn generated_tokens_follow_grammar_arithmetic() {
    let (_, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 1);
    let model = init_model::<f32>(&cfg, &p.vocab).unwrap();
    let k = cfg.sequence.max_actions;
    for mode in [G::VISUAL, G::NON_COT] {
        let mut policy = ModelPolicy::new(&model, &p.vocab, &cfg.sequence, mode);
        for s in &p.samples[..5] {
            let ctx = DecisionContext {
                instruction: &s.instruction,
                history: &s.history,
                current: [&s.current[0], &s.current[1], &s.current[2]],
                stop_count: s.stop_count,
            };
            let d = policy.decide(&ctx).unwrap();
            assert!(d.failure.is_none());
            let n = d.actions.len();
            assert!((1..=k).contains(&n));
            if mode == G::VISUAL {
                assert_eq!(d.generated_tokens, 30 + n + 1);
            } else {
                assert!(d.generated_tokens <= k + 1);
            }
        }
    }
}

struct Mute;

impl Policy for Mute {
    fn mode(&self) -> latentnav::gating::GatingSignals {
        G::MULTIMODAL
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> latentnav::Result<Decision> {
        Ok(Decision {
            failure: Some("no parse".into()),
            ..Default::default()
        })
    }
}

#[test]
fn unparseable_responses_exhaust_budgets_with_zero_aps() {
    let (preset, p) = smoke();
    let (aps, reports) = measure_aps(&mut Mute, &p.eval[..2], &p.codec, &preset.data.render, 5).unwrap();
    assert_eq!(aps.aps, 0.0);
    assert_eq!(aps.n_act, 0);
    for (r, ep) in reports.iter().zip(&p.eval) {
        assert_eq!(r.grammar_failures as u32, ep.task.budgets.iter().sum::<u32>());
        assert!(!r.success());
    }
}

#[test]
fn aps_is_stable_when_the_task_set_doubles() {
    let (preset, p) = smoke();
    let cfg = tiny_train(Recipe::Aligned, &G::ALL, 1);
    let model = init_model::<f32>(&cfg, &p.vocab).unwrap();
    let mut policy = ModelPolicy::new(&model, &p.vocab, &cfg.sequence, G::NON_COT);
    let once = p.eval.clone();
    let twice: Vec<_> = once.iter().chain(once.iter()).cloned().collect();
    let (a, _) = measure_aps(&mut policy, &once, &p.codec, &preset.data.render, 5).unwrap();
    let (b, _) = measure_aps(&mut policy, &twice, &p.codec, &preset.data.render, 5).unwrap();
    let ratio = a.aps / b.aps;
    assert!((0.8..1.25).contains(&ratio), "{} vs {}", a.aps, b.aps);
}
