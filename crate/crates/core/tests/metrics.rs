mod common;

use chrono::Duration;
use common::{config_for, held_out_slots, short_memory_spec, small_spec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use windscen::metrics::{
    compare_representations, energy_score, evaluation_slots, integrated_distance, rank_scatter, reliability,
    rmse_by_horizon, score_triple, variogram_score,
};
use windscen::pipeline::train;
use windscen::stats::{ks_statistic, ks_two_sample};
use windscen::synth::{generate_feed, NoiseFamily, SpatialCorrelation};

/// `n` draws of a bivariate normal with unit variances and correlation `rho`.
fn bivariate(rng: &mut ChaCha8Rng, n: usize, rho: f64, shift: f64) -> Vec<f64> {
    let c = (1.0 - rho * rho).sqrt();
    (0..n)
        .flat_map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [a + shift, rho * a + c * b + shift]
        })
        .collect()
}

#[test]
fn energy_score_prefers_the_generating_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (trials, s) = (2000, 200);
    let mut truth = 0.0;
    let mut independent = 0.0;
    let mut shifted = 0.0;
    for _ in 0..trials {
        let x = bivariate(&mut rng, 1, 0.8, 0.0);
        truth += energy_score(&x, &bivariate(&mut rng, s, 0.8, 0.0)).unwrap();
        independent += energy_score(&x, &bivariate(&mut rng, s, 0.0, 0.0)).unwrap();
        shifted += energy_score(&x, &bivariate(&mut rng, s, 0.8, 0.3)).unwrap();
    }
    assert!(truth < independent, "{truth} {independent}");
    assert!(truth < shifted, "{truth} {shifted}");
}

proptest! {
    #[test]
    fn scores_are_nonnegative_and_vanish_on_the_realization(
        d in 1usize..6,
        s in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
        let scen: Vec<f64> = (0..d * s).map(|_| rng.random_range(-50.0..50.0)).collect();
        let t = score_triple(&x, &scen, 0.5).unwrap();
        prop_assert!(t.energy >= 0.0 && t.integrated_distance >= 0.0 && t.variogram >= 0.0);
        let same: Vec<f64> = x.iter().cycle().take(d * s).copied().collect();
        let z = score_triple(&x, &same, 0.5).unwrap();
        prop_assert_eq!(z.energy, 0.0);
        prop_assert_eq!(z.integrated_distance, 0.0);
        prop_assert_eq!(z.variogram, 0.0);
    }

    #[test]
    fn variogram_ignores_component_order(d in 2usize..6, s in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..100.0)).collect();
        let scen: Vec<f64> = (0..d * s).map(|_| rng.random_range(0.0..100.0)).collect();
        let mut perm: Vec<usize> = (0..d).collect();
        perm.rotate_left(1);
        perm.swap(0, d - 1);
        let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
        let sp: Vec<f64> = scen.chunks(d).flat_map(|r| perm.iter().map(|&i| r[i]).collect::<Vec<_>>()).collect();
        let a = variogram_score(&x, &scen, 0.5).unwrap();
        let b = variogram_score(&xp, &sp, 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        let e = energy_score(&x, &scen).unwrap();
        prop_assert!((energy_score(&xp, &sp).unwrap() - e).abs() <= 1e-9 * e.max(1.0));
        prop_assert_eq!(integrated_distance(&x, &scen).unwrap() >= 0.0, true);
    }
}

#[test]
fn ecdf_beats_the_normal_on_heavy_tailed_errors() {
    let mut spec = short_memory_spec(2, 2, 41);
    spec.nwp.family = NoiseFamily::ScaledT { nu: 3.0 };
    spec.nwp.bias_sd = 0.05;
    spec.nwp.jitter_base = 0.2;
    let days = 36;
    let (panel, _) = generate_feed(&spec, Duration::days(90 + days)).unwrap();
    let mut cfg = config_for(2, 10);
    cfg.metrics.eval_days = days as u32;
    let bundle = train(&panel, &cfg).unwrap();
    let slots = held_out_slots(&panel, days);
    for w in 0..2 {
        let c = reliability(&bundle, &panel, w, 1, &slots, &cfg.metrics.levels).unwrap();
        assert!(
            c.max_deviation() < c.gaussian_max_deviation(),
            "farm {w}: ecdf {} normal {}",
            c.max_deviation(),
            c.gaussian_max_deviation()
        );
    }
}

/// 4000 issue slots one hour apart, after 90 days of training.
fn hourly_pair(rho: f64, seed: u64) -> windscen::metrics::RankScatter {
    let mut spec = short_memory_spec(2, 1, seed);
    spec.spatial = SpatialCorrelation::Uniform { rho };
    spec.neighbors = 0;
    let hours = 4000;
    let (panel, _) = generate_feed(&spec, Duration::days(90) + Duration::hours(hours + 1)).unwrap();
    let mut cfg = config_for(1, 10);
    cfg.windows.train_end = Some(panel.start() + Duration::days(90));
    let bundle = train(&panel, &cfg).unwrap();
    let first = 90 * 288;
    let slots: Vec<usize> = (0..hours as usize).map(|i| first + 12 * i).collect();
    rank_scatter(&bundle, &panel, (0, 1), (1, 1), &slots, 40_000, seed).unwrap()
}

#[test]
fn independent_farms_have_no_rank_correlation() {
    let r = hourly_pair(0.0, 51);
    assert!(r.real.len() >= 3990);
    assert!(r.rho.abs() <= 0.05, "{}", r.rho);
}

#[test]
fn correlated_pair_margins_match_model_samples() {
    let r = hourly_pair(0.6, 52);
    assert!(r.rho > 0.3, "{}", r.rho);
    for pick in [|p: &(f64, f64)| p.0, |p: &(f64, f64)| p.1] {
        let real: Vec<f64> = r.real.iter().map(pick).collect();
        let sampled: Vec<f64> = r.sampled.iter().map(pick).collect();
        let ks = ks_two_sample(&real, &sampled);
        assert!(ks <= 0.03, "{ks}");
    }
    // sampled ranks are uniform by construction
    let sampled: Vec<f64> = r.sampled.iter().map(|p| p.0).collect();
    assert!(ks_statistic(&sampled, |x| x.clamp(0.0, 1.0)) <= 1.63 / (sampled.len() as f64).sqrt());
}

#[test]
fn identical_pair_lies_on_the_diagonal() {
    let (panel, _) = generate_feed(&short_memory_spec(2, 2, 6), Duration::days(60)).unwrap();
    let mut cfg = config_for(2, 10);
    cfg.windows.residual_days = 45;
    let bundle = train(&panel, &cfg).unwrap();
    let slots = held_out_slots(&panel, 6);
    let r = rank_scatter(&bundle, &panel, (1, 2), (1, 2), &slots, 500, 1).unwrap();
    assert!(r.real.iter().all(|(a, b)| a == b));
    assert!(r.rho > 1.0 - 1e-9);
    assert!(r.sampled.iter().all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn model_beats_raw_nwp_when_errors_persist() {
    let (panel, _) = generate_feed(&small_spec(3, 6, 14), Duration::days(60)).unwrap();
    let mut cfg = config_for(6, 10);
    cfg.windows.residual_days = 45;
    let bundle = train(&panel, &cfg).unwrap();
    let (start, end) = cfg.evaluation_window(panel.end());
    let slots = evaluation_slots(&panel, start, end, 15).unwrap();
    for r in rmse_by_horizon(&bundle, &panel, &slots).unwrap() {
        assert!(r.n > 0);
        assert!(r.model <= r.nwp, "horizon {}: model {} nwp {}", r.tau, r.model, r.nwp);
    }
}

#[test]
fn single_farm_modes_coincide() {
    let (panel, _) = generate_feed(&small_spec(1, 6, 15), Duration::days(40)).unwrap();
    let mut cfg = config_for(6, 50);
    cfg.windows.residual_days = 30;
    cfg.metrics.scenarios = 50;
    cfg.metrics.eval_days = 1;
    let cmp = compare_representations(&panel, &cfg).unwrap();
    let (a, b) = (cmp.per_farm_total, cmp.aggregate_only_total);
    for (x, y) in [
        (a.energy, b.energy),
        (a.integrated_distance, b.integrated_distance),
        (a.variogram, b.variogram),
    ] {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} {y}");
    }
}

#[test]
fn both_representations_score_a_one_day_window() {
    let (panel, _) = generate_feed(&small_spec(3, 6, 16), Duration::days(40)).unwrap();
    let mut cfg = config_for(6, 60);
    cfg.windows.residual_days = 30;
    cfg.metrics.scenarios = 60;
    cfg.metrics.eval_days = 1;
    let cmp = compare_representations(&panel, &cfg).unwrap();
    assert!(cmp.issues.len() >= 90);
    assert!(cmp.per_farm_total.is_finite() && cmp.aggregate_only_total.is_finite());
    assert!(cmp.issues.iter().all(|i| i.per_farm.is_finite() && i.aggregate_only.is_finite()));
    let n = cmp.issues.len() as f64;
    assert!((cmp.per_farm_mean.energy * n - cmp.per_farm_total.energy).abs() <= 1e-9 * cmp.per_farm_total.energy);
}
