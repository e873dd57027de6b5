use portdim::comoments::{build_comoments, CoMomentSet};
use portdim::gld::{
    interior_minimize, local_minimize, multistart, project_simplex, sample_uniform_simplex, BarrierOptions, GldConfig,
    LocalOptions, HISTOGRAM_BINS,
};
use portdim::retsim::{ks_critical_1pct, ks_statistic, sample_meta_gaussian, MarginSpec, MarginTarget, MetaGaussianSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn universe(n: usize, rho: f64, t: usize, seed: u64) -> CoMomentSet {
    let spec = MetaGaussianSpec::homogeneous(n, MarginSpec::Moments(MarginTarget::symmetric(6.0)), rho).unwrap();
    build_comoments(&sample_meta_gaussian(&spec, t, seed).unwrap()).unwrap()
}

#[test]
fn two_asset_sampler_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let xs: Vec<f64> = (0..100_000).map(|_| sample_uniform_simplex(2, &mut rng).unwrap().as_slice()[0]).collect();
    let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
    assert!(d < ks_critical_1pct(xs.len()), "KS {d}");
}

#[test]
fn sampler_mean_is_the_barycenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4;
    let mut mean = vec![0.0; n];
    let draws = 100_000;
    for _ in 0..draws {
        let w = sample_uniform_simplex(n, &mut rng).unwrap();
        for (m, x) in mean.iter_mut().zip(w.as_slice()) {
            *m += x / draws as f64;
        }
    }
    for m in mean {
        assert!((m - 0.25).abs() < 0.005);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_satisfies_kkt(v in proptest::collection::vec(-3.0f64..3.0, 1..8), seed in 0u64..10_000) {
        let p = project_simplex(&v).unwrap();
        let p = p.as_slice();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let w = sample_uniform_simplex(v.len(), &mut rng).unwrap();
            let ip: f64 = v.iter().zip(p).zip(w.as_slice()).map(|((vi, pi), wi)| (vi - pi) * (wi - pi)).sum();
            prop_assert!(ip <= 1e-9);
        }
        let again = project_simplex(p).unwrap();
        for (a, b) in again.as_slice().iter().zip(p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn nested_budgets_never_worsen_the_best() {
    let c = universe(4, -0.2, 20_000, 1);
    let base = GldConfig { n_sim: 6, n_iter: 60, polish: false, parallel: false, seed: 5, ..GldConfig::default() };
    let small = multistart(&c, &base).unwrap();
    let more_paths = multistart(&c, &GldConfig { n_sim: 12, ..base.clone() }).unwrap();
    let longer = multistart(&c, &GldConfig { n_iter: 120, ..base.clone() }).unwrap();
    assert!(more_paths.best_kurtosis <= small.best_kurtosis);
    assert!(longer.best_kurtosis <= small.best_kurtosis);
    assert_eq!(&more_paths.path_best[..6], &small.path_best[..]);
    for (a, b) in longer.path_best.iter().zip(&small.path_best) {
        assert!(a <= b);
    }
}

#[test]
fn result_is_consistent_and_reproducible() {
    let c = universe(4, -0.2, 20_000, 2);
    let cfg = GldConfig { n_sim: 20, n_iter: 200, trace_paths: 3, trace_every: 7, ..GldConfig::default() };
    let a = multistart(&c, &cfg).unwrap();
    let b = multistart(&c, &GldConfig { parallel: false, ..cfg.clone() }).unwrap();
    assert_eq!(a, b);

    let min_path = a.path_best.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(a.gld_kurtosis, min_path);
    let first = a.path_best.iter().position(|&v| v == min_path).unwrap();
    assert_eq!(a.gld_weights.as_slice(), &a.path_best_weights[first][..]);
    assert!(a.best_kurtosis <= a.gld_kurtosis);
    assert!((a.best_kurtosis - c.portfolio_kurtosis(a.best_weights.as_slice()).unwrap()).abs() < 1e-12);

    assert_eq!(a.final_histograms.len(), 4);
    for h in &a.final_histograms {
        assert_eq!(h.len(), HISTOGRAM_BINS);
        assert_eq!(h.iter().sum::<u64>(), 20);
    }
    assert_eq!(a.traces.len(), 3);
    for t in &a.traces {
        for w in &t.weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
        for (w, v) in t.weights.iter().zip(&t.values) {
            assert!((c.portfolio_kurtosis(w).unwrap() - v).abs() < 1e-12);
        }
    }
}

#[test]
fn local_solvers_reach_a_kkt_point() {
    let c = universe(5, -0.2, 50_000, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let start = sample_uniform_simplex(5, &mut rng).unwrap();
        let s0 = c.portfolio_kurtosis(start.as_slice()).unwrap();
        let pg = local_minimize(&c, start.as_slice(), &LocalOptions::default()).unwrap();
        assert!(pg.converged && pg.value <= s0);
        assert!(pg.stationarity <= 1e-8);
        let ip = interior_minimize(&c, start.as_slice(), &BarrierOptions::default()).unwrap();
        assert!(ip.value <= s0);
        assert!(ip.stationarity <= 1e-6, "{}", ip.stationarity);
    }
}
