use ccg_core::abduction::{
    abc_posterior_sample, generate_training_triplets, posterior_sample, read_triplets_jsonl,
    summarize_pair, train_amortized_posterior, write_triplets_jsonl, AbcConfig, NpeConfig,
    PosteriorModel, TrainingTriplet,
};
use ccg_core::envsim::{run_environment, sample_exogenous_prior, FidelityLevel, KpiSeries, MAX_UES};
use ccg_core::rng::seeded;

fn mae(a: &KpiSeries, b: &KpiSeries) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for ue in 0..a.num_ues() {
        for k in 0..a.num_windows() {
            s += (a.throughput_mbps[ue][k] - b.throughput_mbps[ue][k]).abs();
            n += 1.0;
        }
    }
    s / n
}

fn small_cfg(epochs: usize) -> NpeConfig {
    NpeConfig {
        hidden: vec![32, 32, 32],
        epochs,
        ..Default::default()
    }
}

#[test]
fn triplets_are_deterministic_and_roundtrip() {
    let a = generate_training_triplets(20, FidelityLevel::Q2, &mut seeded(4)).unwrap();
    let b = generate_training_triplets(20, FidelityLevel::Q2, &mut seeded(4)).unwrap();
    assert_eq!(a, b);
    for t in &a {
        assert_eq!(t.kpis, run_environment(&t.action, &t.noise, FidelityLevel::Q2).unwrap());
    }
    let mut buf = Vec::new();
    write_triplets_jsonl(&a, &mut buf).unwrap();
    assert_eq!(read_triplets_jsonl(buf.as_slice()).unwrap(), a);
}

/// Chi-square against the uniform UE-count prior on {3..10}; 7 degrees of
/// freedom, 0.999 quantile 24.32.
#[test]
fn ue_count_histogram_is_uniform() {
    let data = generate_training_triplets(10_000, FidelityLevel::Q1, &mut seeded(8)).unwrap();
    let mut counts = [0f64; 8];
    for t in &data {
        counts[(t.action.num_ues - 3) as usize] += 1.0;
    }
    let e = 10_000.0 / 8.0;
    let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
    assert!(chi2 < 24.322, "chi2 {chi2}");
}

#[test]
fn nll_gradient_matches_finite_differences() {
    let data = generate_training_triplets(8, FidelityLevel::Q2, &mut seeded(6)).unwrap();
    let mut model = PosteriorModel::new(&[16, 16, 16], &mut seeded(7));
    let (_, grad) = model.loss_and_gradient(&data).unwrap();
    let n = model.net().num_params();
    let h = 1e-5;
    let mut rng = seeded(9);
    let mut checked = 0;
    while checked < 10 {
        let i = rand::Rng::random_range(&mut rng, 0..n);
        if grad[i].abs() < 1e-6 {
            continue;
        }
        let p = model.net().param(i);
        model.net_mut().set_param(i, p + h);
        let up = model.loss(&data).unwrap();
        model.net_mut().set_param(i, p - h);
        let dn = model.loss(&data).unwrap();
        model.net_mut().set_param(i, p);
        let fd = (up - dn) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
        assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd} (rel {rel})", grad[i]);
        checked += 1;
    }
}

#[test]
fn zero_shadow_dataset_is_learned() {
    let mut data = generate_training_triplets(1000, FidelityLevel::Q2, &mut seeded(10)).unwrap();
    for t in &mut data {
        t.noise.shadow_db = vec![0.0; MAX_UES];
        t.kpis = run_environment(&t.action, &t.noise, FidelityLevel::Q2).unwrap();
    }
    let (model, report) = train_amortized_posterior(&data, &NpeConfig::default(), &mut seeded(11)).unwrap();
    assert!(report.epoch_losses.last().unwrap() <= &report.epoch_losses[0]);
    let t = &data[0];
    let f = summarize_pair(&t.action, &t.kpis).unwrap();
    let (mean, std) = model.predict(&f, t.action.num_ues as usize, t.noise.placement_seed);
    for (m, s) in mean.iter().zip(&std) {
        assert!(m.abs() < 0.5, "mean {m}");
        assert!(*s < 8.0, "std {s}");
    }
}

#[test]
fn overfitting_one_triplet_decreases_loss() {
    let data = generate_training_triplets(1, FidelityLevel::Q2, &mut seeded(12)).unwrap();
    let (_, report) = train_amortized_posterior(&data, &small_cfg(60), &mut seeded(13)).unwrap();
    let l = &report.epoch_losses;
    for w in l[10..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{l:?}");
    }
}

#[test]
fn degenerate_std_hook_returns_the_mean() {
    let data = generate_training_triplets(50, FidelityLevel::Q2, &mut seeded(14)).unwrap();
    let (mut model, _) = train_amortized_posterior(&data, &small_cfg(2), &mut seeded(15)).unwrap();
    model.std_scale = 0.0;
    let t = &data[3];
    let u = posterior_sample(&model, &t.action, &t.kpis, &mut seeded(16)).unwrap();
    let f = summarize_pair(&t.action, &t.kpis).unwrap();
    let n = t.action.num_ues as usize;
    let (mean, _) = model.predict(&f, n, u.placement_seed);
    assert_eq!(&u.shadow_db[..n], &mean[..]);
    assert_eq!(u, posterior_sample(&model, &t.action, &t.kpis, &mut seeded(16)).unwrap());
}

#[test]
fn model_json_roundtrip_and_version_check() {
    let model = PosteriorModel::new(&[8, 8, 8], &mut seeded(1));
    let back = PosteriorModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    let mut v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    v["version"] = 99.into();
    assert!(PosteriorModel::from_json(&v.to_string()).is_err());
}

fn recovery_cases() -> Vec<TrainingTriplet> {
    generate_training_triplets(50, FidelityLevel::Q2, &mut seeded(300)).unwrap()
}

#[test]
fn posterior_beats_prior_on_recovery_and_simulated_mae() {
    let train = generate_training_triplets(3000, FidelityLevel::Q2, &mut seeded(200)).unwrap();
    let (model, report) = train_amortized_posterior(&train, &NpeConfig::default(), &mut seeded(201)).unwrap();
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);

    let cases = recovery_cases();
    let (mut post_err, mut prior_err, mut post_mae, mut prior_mae, mut mean_std) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0.0;
    for (i, t) in cases.iter().enumerate() {
        let n = t.action.num_ues as usize;
        let f = summarize_pair(&t.action, &t.kpis).unwrap();
        let (mean, std) = model.predict(&f, n, t.noise.placement_seed);
        let prior = sample_exogenous_prior(&mut seeded(1000 + i as u64));
        for ue in 0..n {
            post_err += (mean[ue] - t.noise.shadow_db[ue]).abs();
            prior_err += (prior.shadow_db[ue] - t.noise.shadow_db[ue]).abs();
            mean_std += std[ue];
            count += 1.0;
        }
        let mut r = seeded(2000 + i as u64);
        let u = posterior_sample(&model, &t.action, &t.kpis, &mut r).unwrap();
        post_mae += mae(&run_environment(&t.action, &u, FidelityLevel::Q2).unwrap(), &t.kpis);
        prior_mae += mae(&run_environment(&t.action, &prior, FidelityLevel::Q2).unwrap(), &t.kpis);
    }
    assert!(post_err < prior_err, "shadow error {post_err} vs prior {prior_err}");
    assert!(post_mae < prior_mae, "MAE {post_mae} vs prior {prior_mae}");
    assert!(mean_std / count <= 8.0, "mean predicted std {}", mean_std / count);
}

#[test]
fn abc_beats_prior_on_simulated_mae() {
    let cfg = AbcConfig {
        candidates: 128,
        ..Default::default()
    };
    let (mut abc_mae, mut prior_mae) = (0.0, 0.0);
    for (i, t) in recovery_cases().iter().enumerate() {
        let mut r = seeded(3000 + i as u64);
        let u = abc_posterior_sample(&t.action, &t.kpis, &cfg, &mut r).unwrap();
        let p = sample_exogenous_prior(&mut r);
        abc_mae += mae(&run_environment(&t.action, &u, FidelityLevel::Q2).unwrap(), &t.kpis);
        prior_mae += mae(&run_environment(&t.action, &p, FidelityLevel::Q2).unwrap(), &t.kpis);
    }
    assert!(abc_mae < prior_mae, "{abc_mae} vs {prior_mae}");
}
