use portdim::bbsolve::{
    alpha_floor, bisect, bound_lp1, bound_lp2, bound_milp, bound_milp_with, solve, BbConfig, BbStatus, BoundMode, SimplexCell,
};
use portdim::comoments::{build_comoments, CoMomentSet};
use portdim::gld::sample_uniform_simplex;
use portdim::retsim::{sample_meta_gaussian, MarginSpec, MarginTarget, MetaGaussianSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn universe(n: usize, rho: f64, t: usize, seed: u64) -> CoMomentSet {
    let spec = MetaGaussianSpec::homogeneous(n, MarginSpec::Moments(MarginTarget::symmetric(6.0)), rho).unwrap();
    build_comoments(&sample_meta_gaussian(&spec, t, seed).unwrap()).unwrap()
}

/// All points of the 3-simplex grid with spacing `step`.
fn grid3(step: f64) -> Vec<[f64; 3]> {
    let m = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    for i in 0..=m {
        for j in 0..=(m - i) {
            let (a, b) = (i as f64 / m as f64, j as f64 / m as f64);
            out.push([a, b, (1.0 - a - b).max(0.0)]);
        }
    }
    out
}

fn h(c: &CoMomentSet, w: &[f64]) -> f64 {
    1.0 / c.portfolio_kurtosis(w).unwrap()
}

#[test]
fn three_asset_run_matches_grid_and_fathoms_soundly() {
    let c = universe(3, -0.2, 100_000, 7);
    let cfg = BbConfig { record_cells: true, ..BbConfig::default() };
    let r = solve(&c, &cfg).unwrap();
    assert_eq!(r.status, BbStatus::Optimal);
    let rho = cfg.rho_tol;

    let grid = grid3(0.005);
    let grid_best = grid.iter().map(|w| h(&c, w)).fold(f64::NEG_INFINITY, f64::max);
    assert!(r.incumbent_value >= (1.0 - rho) * grid_best, "{} vs grid {}", r.incumbent_value, grid_best);
    assert!((r.kurtosis - c.portfolio_kurtosis(r.incumbent.as_slice()).unwrap()).abs() < 1e-12);

    // bounds
    for pair in r.lb_history.windows(2) {
        assert!(pair[1] >= pair[0]);
    }
    for pair in r.ub_history.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    for (lb, ub) in r.lb_history.iter().zip(&r.ub_history) {
        assert!(lb <= ub);
    }
    assert!((1.0 - rho) * r.upper_bound() <= r.lower_bound());
    assert!(r.upper_bound() >= grid_best * (1.0 - 1e-12));

    // every fathomed cell only held points that could not beat the incumbent by more than rho
    let mut vol = 0.0;
    for fc in &r.fathomed {
        vol += fc.cell.volume();
        assert!((1.0 - rho) * fc.cell.upper_bound <= fc.lower_bound);
    }
    assert!(r.live.is_empty());
    let root = SimplexCell::standard(3).volume();
    assert!((vol - root).abs() <= 1e-9 * root, "fathomed volume {vol} vs {root}");
    assert_eq!(r.fathomed.len(), r.cells_fathomed);
    for w in &grid {
        let owner = r
            .fathomed
            .iter()
            .find(|fc| fc.cell.contains(w, 1e-12))
            .unwrap_or_else(|| panic!("grid point {w:?} not covered"));
        assert!(h(&c, w) <= owner.cell.upper_bound * (1.0 + 1e-9));
        assert!((1.0 - rho) * h(&c, w) <= owner.lower_bound * (1.0 + 1e-9));
    }
}

#[test]
fn serial_and_parallel_runs_agree() {
    let c = universe(3, -0.2, 20_000, 3);
    let a = solve(&c, &BbConfig { parallel: false, ..BbConfig::default() }).unwrap();
    let b = solve(&c, &BbConfig { parallel: true, ..BbConfig::default() }).unwrap();
    let again = solve(&c, &BbConfig { parallel: true, ..BbConfig::default() }).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, again);
}

#[test]
fn random_cells_respect_bound_ordering() {
    let c = universe(3, -0.2, 20_000, 5);
    let alpha = alpha_floor(&c, 0.999).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut id = 1;
    for _ in 0..40 {
        let mut cell = SimplexCell::standard(3);
        let depth = rng.random_range(0..8);
        for _ in 0..depth {
            let (a, b) = bisect(&cell, id).unwrap();
            id += 2;
            cell = if rng.random::<bool>() { a } else { b };
        }
        let l1 = bound_lp1(&cell, &c, alpha).unwrap().upper_bound;
        let l2 = bound_lp2(&cell, &c, alpha, 1).unwrap().upper_bound;
        let l4 = bound_lp2(&cell, &c, alpha, 4).unwrap().upper_bound;
        let plain = bound_milp(&cell, &c, alpha).unwrap().upper_bound;
        let mi = bound_milp_with(&cell, &c, alpha, Some(1), 24).unwrap().upper_bound;
        let slack = 1e-9 * l1;
        assert!(plain <= l1 + slack, "{plain} {l1}");
        assert!(mi <= l2 + slack && l4 <= l2 + slack && l2 <= l1 + slack, "{mi} {l4} {l2} {l1}");
        // all valid overestimators of h on the cell
        for _ in 0..50 {
            let lam = sample_uniform_simplex(3, &mut rng).unwrap();
            let mut w = [0.0; 3];
            for (v, l) in cell.vertices.iter().zip(lam.as_slice()) {
                for k in 0..3 {
                    w[k] += l * v[k];
                }
            }
            assert!(h(&c, &w) <= mi * (1.0 + 1e-9));
        }
    }
}

#[test]
fn alpha_is_below_every_fourth_moment() {
    for (n, seed) in [(3, 1), (5, 2)] {
        let c = universe(n, -0.1, 20_000, seed);
        let alpha = alpha_floor(&c, 0.999).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let w = sample_uniform_simplex(n, &mut rng).unwrap();
            assert!(alpha <= c.portfolio_moments(w.as_slice()).unwrap().mu4);
        }
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            assert!(alpha <= c.portfolio_moments(&e).unwrap().mu4);
        }
    }
}

#[test]
fn every_bound_mode_reaches_the_same_optimum() {
    let c = universe(3, -0.2, 20_000, 9);
    let mut values = Vec::new();
    for mode in [BoundMode::Lp1, BoundMode::Lp2, BoundMode::Milp] {
        let r = solve(&c, &BbConfig { bound_mode: mode, ..BbConfig::default() }).unwrap();
        assert_eq!(r.status, BbStatus::Optimal);
        values.push(r.incumbent_value);
    }
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in values {
        assert!(v >= (1.0 - 1e-3) * best);
    }
}

#[test]
fn iteration_limit_is_reported() {
    let c = universe(4, -0.2, 20_000, 2);
    let r = solve(&c, &BbConfig { max_iterations: 5, ..BbConfig::default() }).unwrap();
    assert_eq!(r.status, BbStatus::IterationLimit);
    assert_eq!(r.iterations, 5);
    assert!(r.lower_bound() <= r.upper_bound());
}

#[test]
fn single_asset_and_invalid_configs() {
    let c = universe(2, 0.0, 5_000, 4).select(&[0]).unwrap();
    let r = solve(&c, &BbConfig::default()).unwrap();
    assert_eq!(r.incumbent.as_slice(), &[1.0]);
    let bad = BbConfig { rho_tol: 1.0, ..BbConfig::default() };
    assert!(solve(&c, &bad).is_err());
}
