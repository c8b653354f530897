use coevolve::dynamics::{image_update_once, run_trajectory, text_update_once, InitSpec, RunSpec, TrainingConfig};
use coevolve::experiments::fit_decay_rate;
use coevolve::model::SystemState;
use coevolve::sampling::derive_stream;
use coevolve::theory::{diversity_floor, image_rate_approx};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mean_and_se(rows: &[Vec<f64>], t: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[t]).sum::<f64>() / n;
    let v = rows.iter().map(|r| (r[t] - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn one_image_update_has_wishart_covariance() {
    // d = 1: (N − 1)·σ'² / σ² ~ χ²(N − 1); Kolmogorov–Smirnov at α = 0.01
    let n = 20;
    let reps = 4000;
    let state = SystemState::circle(vec![1.0], 1, 2.0).unwrap();
    let mut rng = derive_stream(31, 0, 2);
    let mut stats: Vec<f64> = (0..reps)
        .map(|_| {
            let c = image_update_once(&state, n, &mut rng).unwrap();
            (n - 1) as f64 * c[0].cov.get(0, 0) / 2.0
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let law = ChiSquared::new((n - 1) as f64).unwrap();
    let m = reps as f64;
    let ks = stats
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / m.sqrt(), "KS statistic {ks}");
}

#[test]
fn frozen_image_diversity_respects_floor() {
    let n = 100;
    let steps = 150;
    let spec = RunSpec::plain(TrainingConfig::constant(n, steps, 1, 0, 2, InitSpec::uniform(5, 1.0)));
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|r| run_trajectory(&spec, 17, r).unwrap().records.iter().map(|x| x.h).collect())
        .collect();
    let h0 = rows[0][0];
    for t in 0..=steps {
        let (m, se) = mean_and_se(&rows, t);
        let floor = diversity_floor(h0, n, t);
        assert!(m >= floor * (1.0 - 3.0 * se) - 1e-12, "t = {t}: {m} < {floor}");
    }
}

#[test]
fn frozen_text_single_component_decays_at_predicted_rate() {
    let steps = 200;
    let spec = RunSpec::plain(TrainingConfig::constant(1000, steps, 0, 1, 2, InitSpec::uniform(1, 1.0)));
    let runs = 100;
    let mut mean = vec![0.0; steps + 1];
    for r in 0..runs {
        let tr = run_trajectory(&spec, 23, r).unwrap();
        for (m, rec) in mean.iter_mut().zip(&tr.records) {
            *m += rec.per_text[0].d / runs as f64;
        }
    }
    let rate = fit_decay_rate(&mean, 10, steps);
    let predicted = image_rate_approx(2, 1000, 1.0);
    assert!((rate - predicted).abs() <= 5e-4, "rate {rate}, predicted {predicted}");
}

#[test]
fn text_probabilities_form_a_martingale() {
    let state = SystemState::circle(vec![0.1, 0.2, 0.3, 0.4], 2, 1.0).unwrap();
    let mut rng = derive_stream(41, 0, 1);
    let reps = 4000;
    let rows: Vec<Vec<f64>> = (0..reps)
        .map(|_| text_update_once(&state, 50, &mut rng).unwrap().probs().to_vec())
        .collect();
    for (i, p) in state.text.probs().iter().enumerate() {
        let (m, se) = mean_and_se(&rows, i);
        assert!((m - p).abs() <= 4.0 * se, "coordinate {i}: {m} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mass_is_conserved(seed in any::<u64>(), k in 1usize..7, m in 0usize..3, nt in 0usize..3, det in any::<bool>()) {
        let mut cfg = TrainingConfig::constant(40, 5, m, nt, 2, InitSpec::uniform(k, 0.7));
        cfg.deterministic_counts = det;
        let tr = run_trajectory(&RunSpec::plain(cfg), seed, 0).unwrap();
        prop_assert!(tr.outcome.aborted.is_none());
        prop_assert_eq!(tr.records.len(), 6);
        prop_assert!(tr.outcome.counters.renorm_warnings == 0);
    }

    #[test]
    fn one_hot_is_absorbing(seed in any::<u64>(), k in 2usize..6, hot in 0usize..6) {
        let hot = hot % k;
        let mut p = vec![0.0; k];
        p[hot] = 1.0;
        let state = SystemState::circle(p.clone(), 2, 1.0).unwrap();
        let mut rng = derive_stream(seed, 0, 1);
        let next = text_update_once(&state, 30, &mut rng).unwrap();
        prop_assert_eq!(next.probs(), &p[..]);
    }
}
