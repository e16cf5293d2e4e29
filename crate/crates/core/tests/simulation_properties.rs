use pusurvive::simulation::{generate, DgpConfig};

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic two-sample p-value from the Kolmogorov distribution.
fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn ks_oracle_sanity() {
    let a: Vec<f64> = (0..1000).map(f64::from).collect();
    let b: Vec<f64> = (500..1500).map(f64::from).collect();
    assert!((ks_statistic(&a, &b) - 0.5).abs() < 1e-12);
    assert!(ks_p_value(0.5, 1000, 1000) < 1e-10);
    assert!(ks_p_value(0.0, 1000, 1000) > 0.999);
}

#[test]
fn labeled_and_unlabeled_strata_follow_their_sources() {
    for seed in 0..10 {
        let sim = generate(&DgpConfig {
            seed: 900 + seed,
            ..DgpConfig::default()
        })
        .unwrap();
        let t_labeled: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| g.selected && g.record.label)
            .map(|g| g.record.survival_time.unwrap())
            .collect();
        let t_d1_events: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| g.in_d1 && g.y_true)
            .map(|g| g.record.survival_time.unwrap())
            .collect();
        let c_labeled: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| g.selected && g.record.label)
            .map(|g| g.record.censoring_time.unwrap())
            .collect();
        let c_d1_events: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| g.in_d1 && g.y_true)
            .map(|g| g.record.censoring_time.unwrap())
            .collect();
        let c_unlabeled: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| g.selected && !g.record.label)
            .map(|g| g.record.censoring_time.unwrap())
            .collect();
        let c_d2: Vec<f64> = sim
            .truth
            .iter()
            .filter(|g| !g.in_d1)
            .map(|g| g.record.censoring_time.unwrap())
            .collect();
        for (name, a, b) in [
            ("t | s=1", &t_labeled, &t_d1_events),
            ("c | s=1", &c_labeled, &c_d1_events),
            ("c | s=0", &c_unlabeled, &c_d2),
        ] {
            let p = ks_p_value(ks_statistic(a, b), a.len(), b.len());
            assert!(p > 0.01, "seed {seed} {name}: p = {p}");
        }
        assert!(sim
            .truth
            .iter()
            .filter(|g| g.selected && g.record.label)
            .all(|g| g.record.survival_time < g.record.censoring_time));
    }
}

#[test]
fn labeled_times_differ_from_unconditional_times() {
    // the KS oracle must be able to see a real difference
    let sim = generate(&DgpConfig {
        seed: 5,
        ..DgpConfig::default()
    })
    .unwrap();
    let t_labeled: Vec<f64> = sim
        .truth
        .iter()
        .filter(|g| g.selected && g.record.label)
        .map(|g| g.record.survival_time.unwrap())
        .collect();
    let t_all: Vec<f64> = sim.truth.iter().map(|g| g.record.survival_time.unwrap()).collect();
    assert!(ks_p_value(ks_statistic(&t_labeled, &t_all), t_labeled.len(), t_all.len()) < 1e-6);
}
