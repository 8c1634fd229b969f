use ccg_core::abduction::{AbcConfig, FixedNoise, PriorAbductor, Temperature};
use ccg_core::envsim::{FidelityLevel, Scheduler};
use ccg_core::pipeline::*;
use ccg_core::policy::{PolicyTables, PromptSlots};
use ccg_core::rng::{derived, seeded};
use ccg_core::textmetrics::extract_facts;
use ccg_core::Error;
use proptest::prelude::*;

fn slots_strategy() -> impl Strategy<Value = PromptSlots> {
    (
        proptest::option::of(0usize..2),
        proptest::option::of(3u32..=10),
        proptest::option::of(2u32..=10),
        proptest::option::of(5u32..=10),
    )
        .prop_map(|(s, u, l, d)| PromptSlots {
            scheduler: s.map(Scheduler::from_index),
            num_ues: u,
            load_mbps: l,
            duration_s: d,
        })
}

proptest! {
    #[test]
    fn prompt_roundtrip(slots in slots_strategy(), seed in any::<u64>()) {
        let p = render_prompt(&slots, seed).unwrap();
        prop_assert_eq!(parse_prompt(&p.text).unwrap(), slots);
        prop_assert_eq!(render_prompt(&slots, seed).unwrap(), p.clone());
        prop_assert_eq!(PromptSpec::from_text(&p.text).unwrap().slots, slots);
    }
}

#[test]
fn phrasing_varies_with_the_style_seed() {
    let slots = PromptSlots::full(Scheduler::Rr, 4, 3, 7);
    let texts: std::collections::HashSet<String> = (0..16).map(|s| render_prompt(&slots, s).unwrap().text).collect();
    assert!(texts.len() > 1);
    for s in 0..16 {
        assert_eq!(parse_prompt(&render_prompt(&slots, s).unwrap().text).unwrap(), slots);
    }
}

#[test]
fn parse_errors() {
    assert!(matches!(parse_prompt("run with 50 users"), Err(Error::Parse { .. })));
    assert!(parse_prompt("hello there").is_err());
    let partial = PromptSlots {
        scheduler: None,
        ..PromptSlots::full(Scheduler::Pf, 5, 5, 5)
    };
    assert_eq!(parse_prompt(&render_prompt(&partial, 3).unwrap().text).unwrap().scheduler, None);
    assert!(render_prompt(&PromptSlots::full(Scheduler::Pf, 11, 5, 5), 0).is_err());
}

#[test]
fn edit_rules() {
    let x = render_prompt(&PromptSlots::full(Scheduler::Rr, 4, 5, 7), 9).unwrap();
    let to_pf = edit_prompt(
        &x,
        &EditSpec {
            scheduler: Some(Scheduler::Pf),
            ..EditSpec::default()
        },
    )
    .unwrap();
    assert_eq!(to_pf.slots, PromptSlots { scheduler: Some(Scheduler::Pf), ..x.slots });
    assert!(is_admissible_edit(&x, &to_pf));

    let rephrase = edit_prompt(&x, &EditSpec { style_seed: Some(10), ..EditSpec::default() }).unwrap();
    assert_eq!(rephrase.slots, x.slots);

    assert!(edit_prompt(&x, &EditSpec { load_mbps: Some(11), ..EditSpec::default() }).is_err());
    let three = EditSpec {
        scheduler: Some(Scheduler::Pf),
        num_ues: Some(6),
        load_mbps: Some(3),
        ..EditSpec::default()
    };
    assert!(edit_prompt(&x, &three).is_err());
    assert!(edit_prompt(&x, &EditSpec::default()).is_err());
}

fn dataset(n: usize, seed: u64) -> (PolicyTables, Dataset) {
    let t = PolicyTables::default();
    let d = generate_dataset(n, &t, &DatasetConfig::default(), &mut seeded(seed)).unwrap();
    (t, d)
}

#[test]
fn identity_replay_is_exact_on_300_records() {
    let (t, d) = dataset(300, 5);
    assert_eq!(d.records.len(), 300);
    for (r, h) in d.records.iter().zip(&d.hidden) {
        assert_eq!(r.episode.prompt.slots, r.prompt().slots);
        assert!(is_admissible_edit(r.prompt(), &r.cf_prompt));
        let same = true_counterfactual(&t, &r.episode, h, r.prompt(), &mut seeded(0)).unwrap();
        assert_eq!(same.action, r.episode.action);
        assert_eq!(same.action_tokens, r.episode.action_tokens);
        assert_eq!(same.kpis, r.episode.kpis);
        assert_eq!(same.report, r.episode.report);
        let facts = extract_facts(&t.vocabulary, &r.episode.report).unwrap();
        assert_eq!(facts.scheduler, r.episode.action.scheduler);
    }
}

#[test]
fn dataset_is_deterministic_and_roundtrips() {
    let (_, a) = dataset(8, 3);
    let (_, b) = dataset(8, 3);
    assert_eq!(a, b);
    let mut buf = Vec::new();
    write_dataset(&a.records, &mut buf).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), a.records);
    let mut buf = Vec::new();
    write_hidden_noise(&a.hidden, &mut buf).unwrap();
    assert_eq!(read_hidden_noise(buf.as_slice()).unwrap(), a.hidden);
    assert!(generate_dataset(0, &PolicyTables::default(), &DatasetConfig::default(), &mut seeded(1)).is_err());
}

#[test]
fn counterfactual_paths_never_read_the_hidden_noise() {
    let (t, d) = dataset(6, 8);
    let abc = AbcConfig {
        candidates: 16,
        temperature: Temperature::MedianDistance,
        fidelity: FidelityLevel::Q2,
    };
    for (i, r) in d.records.iter().enumerate() {
        // A tripwire stands in for the real record: reading it panics.
        let wire = HiddenNoiseRecord::tripwire(r.id.clone());
        let mut rng = derived(1, "tripwire", i as u64);
        let cg = run_cg(&t, &r.episode, &r.cf_prompt, &abc, FidelityLevel::Q2, &mut rng).unwrap();
        let sig = run_sig(&t, &r.cf_prompt, FidelityLevel::Q2, &mut rng).unwrap();
        assert!(wire.is_tripwire());
        assert_eq!(cg.action.scheduler, r.true_cf.action.scheduler);
        assert!(sig.report.len() == r.true_cf.report.len());
    }
    let wire = HiddenNoiseRecord::tripwire("x");
    let r = &d.records[0];
    let hit = std::panic::catch_unwind(|| true_counterfactual(&t, &r.episode, &wire, &r.cf_prompt, &mut seeded(0)));
    assert!(hit.is_err());
}

#[test]
fn cg_consistency_and_oracle() {
    let (t, d) = dataset(20, 12);
    for (i, (r, h)) in d.records.iter().zip(&d.hidden).enumerate() {
        let mut rng = derived(2, "cg", i as u64);
        let cg = run_cg(&t, &r.episode, r.prompt(), &PriorAbductor, FidelityLevel::Q2, &mut rng).unwrap();
        assert_eq!(cg.action, r.episode.action);
        let oracle = FixedNoise(h.reveal().clone());
        let exact = run_cg(&t, &r.episode, r.prompt(), &oracle, FidelityLevel::Q4, &mut rng).unwrap();
        assert_eq!(exact.kpis, r.episode.kpis);
        assert_eq!(exact.report, r.episode.report);
        let again = run_cg(&t, &r.episode, &r.cf_prompt, &PriorAbductor, FidelityLevel::Q2, &mut derived(3, "cg", 0)).unwrap();
        let twice = run_cg(&t, &r.episode, &r.cf_prompt, &PriorAbductor, FidelityLevel::Q2, &mut derived(3, "cg", 0)).unwrap();
        assert_eq!(again, twice);
    }
}

#[test]
fn interventional_scheduler_follows_the_prompt() {
    let t = PolicyTables::default();
    let x = render_prompt(&PromptSlots { scheduler: Some(Scheduler::Rr), ..PromptSlots::default() }, 1).unwrap();
    let hits = (0..200)
        .filter(|&s| {
            let r = run_ig(&t, &x, &mut derived(4, "ig", s)).unwrap();
            extract_facts(&t.vocabulary, &r.report).unwrap().scheduler == Scheduler::Rr
        })
        .count();
    assert!(hits >= 170, "{hits}/200");
    assert_eq!(run_ig(&t, &x, &mut seeded(9)).unwrap(), run_ig(&t, &x, &mut seeded(9)).unwrap());
    assert_eq!(
        run_sig(&t, &x, FidelityLevel::Q2, &mut seeded(9)).unwrap(),
        run_sig(&t, &x, FidelityLevel::Q2, &mut seeded(9)).unwrap()
    );
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

#[test]
fn twin_series_are_smoother_than_real_ones() {
    let t = PolicyTables::default();
    let x = render_prompt(&PromptSlots::full(Scheduler::Pf, 5, 4, 6), 0).unwrap();
    let (mut sig_var, mut ig_var) = (0.0, 0.0);
    for s in 0..50 {
        // same seed: same placement and shadowing, fidelity differs
        let sig = run_sig(&t, &x, FidelityLevel::Q2, &mut derived(6, "smooth", s)).unwrap();
        let ig = run_ig(&t, &x, &mut derived(6, "smooth", s)).unwrap();
        sig_var += sig.kpis.throughput_mbps.iter().map(|u| variance(u)).sum::<f64>();
        ig_var += ig.kpis.throughput_mbps.iter().map(|u| variance(u)).sum::<f64>();
    }
    assert!(sig_var <= ig_var, "{sig_var} > {ig_var}");
}

#[test]
fn true_counterfactual_differs_from_a_fresh_run() {
    let (t, d) = dataset(20, 21);
    let differing = d
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| run_ig(&t, &r.cf_prompt, &mut derived(7, "ig", *i as u64)).unwrap().report != r.true_cf.report)
        .count();
    assert!(differing >= 1);
}

#[test]
fn sampler_draws_depend_only_on_their_rng() {
    let (t, d) = dataset(3, 30);
    let r = &d.records[0];
    let s = CgSampler::new(&t, &r.episode, &r.cf_prompt, &PriorAbductor, FidelityLevel::Q2, &mut seeded(1)).unwrap();
    let a = s.draw(&mut seeded(77)).unwrap();
    let _ = s.draw(&mut seeded(78)).unwrap();
    assert_eq!(s.draw(&mut seeded(77)).unwrap(), a);
    assert_eq!(s.twin(), FidelityLevel::Q2);
}
