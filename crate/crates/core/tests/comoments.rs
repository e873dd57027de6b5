use portdim::comoments::{build_comoments, unique_element_counts, CoMomentSet, ReturnSample};
use portdim::gld::sample_uniform_simplex;
use portdim::retsim::{sample_meta_gaussian, MarginSpec, MarginTarget, MetaGaussianSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sample(n: usize, t: usize, seed: u64) -> ReturnSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(n * t);
    for _ in 0..t {
        let common: f64 = rng.random::<f64>() - 0.5;
        for j in 0..n {
            let e: f64 = rng.random::<f64>() - 0.5;
            // skewed and fat-tailed on purpose
            v.push(e + 0.4 * common + 0.3 * e * e * (j as f64 + 1.0) + 0.1 * e.powi(3));
        }
    }
    ReturnSample::with_default_names(v, n).unwrap()
}

fn nig_sample(n: usize, t: usize, seed: u64) -> ReturnSample {
    let spec = MetaGaussianSpec::homogeneous(n, MarginSpec::Moments(MarginTarget::symmetric(6.0)), -0.2).unwrap();
    sample_meta_gaussian(&spec, t, seed).unwrap()
}

/// Naive dense tensors with 1/T normalization.
struct Dense {
    n: usize,
    m2: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
}

fn dense(s: &ReturnSample) -> Dense {
    let n = s.n_assets();
    let t = s.n_obs() as f64;
    let mean: Vec<f64> = (0..n).map(|j| s.column(j).iter().sum::<f64>() / t).collect();
    let mut m2 = vec![0.0; n * n];
    let mut m3 = vec![0.0; n * n * n];
    let mut m4 = vec![0.0; n * n * n * n];
    for row in s.rows() {
        let x: Vec<f64> = row.iter().zip(&mean).map(|(a, m)| a - m).collect();
        for i in 0..n {
            for j in 0..n {
                m2[i * n + j] += x[i] * x[j];
                for k in 0..n {
                    m3[(i * n + j) * n + k] += x[i] * x[j] * x[k];
                    for l in 0..n {
                        m4[((i * n + j) * n + k) * n + l] += x[i] * x[j] * x[k] * x[l];
                    }
                }
            }
        }
    }
    for v in m2.iter_mut().chain(m3.iter_mut()).chain(m4.iter_mut()) {
        *v /= t;
    }
    Dense { n, m2, m3, m4 }
}

impl Dense {
    fn mu3(&self, w: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.m3[(i * n + j) * n + k] * w[i] * w[j] * w[k];
                }
            }
        }
        s
    }
    fn mu4(&self, w: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.m4[((i * n + j) * n + k) * n + l] * w[i] * w[j] * w[k] * w[l];
                    }
                }
            }
        }
        s
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn unique_storage_matches_dense_tensors() {
    for n in 1..=4 {
        for &t in &[5usize, 137, 1000] {
            let s = random_sample(n, t, (n * 1000 + t) as u64);
            let c = build_comoments(&s).unwrap();
            let d = dense(&s);
            for i in 0..n {
                for j in 0..n {
                    assert!(rel_close(c.cov(i, j), d.m2[i * n + j], 1e-12));
                    for k in 0..n {
                        assert!(rel_close(c.s(i, j, k), d.m3[(i * n + j) * n + k], 1e-12) || (c.s(i, j, k) - d.m3[(i * n + j) * n + k]).abs() < 1e-14);
                        for l in 0..n {
                            let e = d.m4[((i * n + j) * n + k) * n + l];
                            assert!(rel_close(c.k(i, j, k, l), e, 1e-12));
                        }
                    }
                }
            }
            // Kronecker block layout
            let b3 = c.m3_block();
            let b4 = c.m4_block();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        assert_eq!(b3[i * n * n + j * n + k], c.s(i, j, k));
                        for l in 0..n {
                            assert_eq!(b4[i * n * n * n + j * n * n + k * n + l], c.k(i, j, k, l));
                        }
                    }
                }
            }
            let w = vec![1.0 / n as f64; n];
            let m = c.portfolio_moments(&w).unwrap();
            assert!(rel_close(m.mu4, d.mu4(&w), 1e-12));
            assert!((m.mu3 - d.mu3(&w)).abs() <= 1e-12 * d.mu4(&w).sqrt().powf(1.5));
        }
    }
}

#[test]
fn unique_counts_table() {
    let table = [(2, 4, 5), (3, 10, 15), (4, 20, 35), (10, 220, 715), (50, 22100, 292825), (100, 171700, 4421275)];
    for (n, m3, m4) in table {
        assert_eq!(unique_element_counts(n), (m3, m4), "n = {n}");
    }
}

fn fd_grad(f: impl Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    let mut x = w.to_vec();
    for i in 0..w.len() {
        let h = 1e-5 * w[i].abs().max(1e-2);
        x[i] = w[i] + h;
        let up = f(&x);
        x[i] = w[i] - h;
        let dn = f(&x);
        x[i] = w[i];
        out[i] = (up - dn) / (2.0 * h);
    }
    out
}

fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

#[test]
fn derivatives_match_finite_differences() {
    let s = nig_sample(4, 20_000, 11);
    let c = build_comoments(&s).unwrap();
    let n = c.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mu3 = |w: &[f64]| c.portfolio_moments(w).unwrap().mu3;
    let mu4 = |w: &[f64]| c.portfolio_moments(w).unwrap().mu4;
    let kurt = |w: &[f64]| c.portfolio_kurtosis(w).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = sample_uniform_simplex(n, &mut rng).unwrap().into_inner();
        let d = c.moment_derivatives(&w).unwrap();
        let checks = [
            vec_rel_err(&d.grad_mu3, &fd_grad(mu3, &w)),
            vec_rel_err(&d.grad_mu4, &fd_grad(mu4, &w)),
            vec_rel_err(&c.kurtosis_gradient(&w).unwrap(), &fd_grad(kurt, &w)),
        ];
        for e in checks {
            worst = worst.max(e);
        }
        for i in 0..n {
            let row3 = fd_grad(|x: &[f64]| c.moment_derivatives(x).unwrap().grad_mu3[i], &w);
            let row4 = fd_grad(|x: &[f64]| c.moment_derivatives(x).unwrap().grad_mu4[i], &w);
            worst = worst.max(vec_rel_err(&d.hess_mu3[i * n..(i + 1) * n], &row3));
            worst = worst.max(vec_rel_err(&d.hess_mu4[i * n..(i + 1) * n], &row4));
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn euler_identities() {
    let s = nig_sample(5, 5_000, 3);
    let c = build_comoments(&s).unwrap();
    let n = c.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let w = sample_uniform_simplex(n, &mut rng).unwrap().into_inner();
        let m = c.portfolio_moments(&w).unwrap();
        let d = c.moment_derivatives(&w).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let scale3 = m.variance.powf(1.5);
        assert!((dot(&w, &d.grad_mu3) - 3.0 * m.mu3).abs() <= 1e-10 * scale3);
        assert!((dot(&w, &d.grad_mu4) - 4.0 * m.mu4).abs() <= 1e-10 * m.mu4);
        for i in 0..n {
            let hw4 = dot(&d.hess_mu4[i * n..(i + 1) * n], &w);
            assert!((hw4 - 3.0 * d.grad_mu4[i]).abs() <= 1e-10 * m.mu4);
            let hw3 = dot(&d.hess_mu3[i * n..(i + 1) * n], &w);
            assert!((hw3 - 2.0 * d.grad_mu3[i]).abs() <= 1e-10 * scale3);
            for j in 0..n {
                assert!((d.hess_mu3[i * n + j] - d.hess_mu3[j * n + i]).abs() <= 1e-12 * scale3);
                assert!((d.hess_mu4[i * n + j] - d.hess_mu4[j * n + i]).abs() <= 1e-12 * m.mu4);
            }
        }
        let gk = c.kurtosis_gradient(&w).unwrap();
        let k = c.portfolio_kurtosis(&w).unwrap();
        assert!(dot(&w, &gk).abs() <= 1e-9 * k);
    }
}

fn small_set() -> CoMomentSet {
    build_comoments(&random_sample(4, 400, 8)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kurtosis_is_scale_invariant(raw in proptest::collection::vec(0.01f64..1.0, 4), t in 0.1f64..50.0) {
        let c = small_set();
        let scaled: Vec<f64> = raw.iter().map(|x| x * t).collect();
        let a = c.portfolio_kurtosis(&raw).unwrap();
        let b = c.portfolio_kurtosis(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
        prop_assert!(a >= 1.0);
    }

    #[test]
    fn moments_follow_asset_permutations(seed in 0u64..1000, w in proptest::collection::vec(0.01f64..1.0, 3)) {
        let s = random_sample(3, 200, seed);
        let c = build_comoments(&s).unwrap();
        let perm = [2usize, 0, 1];
        let ps = s.select_columns(&perm).unwrap();
        let pc = build_comoments(&ps).unwrap();
        let pw: Vec<f64> = perm.iter().map(|&j| w[j]).collect();
        let a = c.portfolio_moments(&w).unwrap();
        let b = pc.portfolio_moments(&pw).unwrap();
        prop_assert!((a.mu4 - b.mu4).abs() <= 1e-12 * a.mu4);
        prop_assert!((a.variance - b.variance).abs() <= 1e-12 * a.variance);
    }

    #[test]
    fn skewness_flips_under_negation(seed in 0u64..1000) {
        let s = random_sample(2, 300, seed);
        let a = build_comoments(&s).unwrap();
        let b = build_comoments(&s.negated()).unwrap();
        let w = [0.3, 0.7];
        let sa = a.portfolio_skewness(&w).unwrap();
        let sb = b.portfolio_skewness(&w).unwrap();
        prop_assert!((sa + sb).abs() <= 1e-10 * sa.abs().max(1.0));
        prop_assert!((a.portfolio_kurtosis(&w).unwrap() - b.portfolio_kurtosis(&w).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn translation_does_not_change_moments() {
    let s = random_sample(3, 500, 1);
    let shifted: Vec<f64> = s.values().iter().enumerate().map(|(i, v)| v + 10.0 * (i % 3) as f64).collect();
    let t = ReturnSample::with_default_names(shifted, 3).unwrap();
    let a = build_comoments(&s).unwrap();
    let b = build_comoments(&t).unwrap();
    let w = [0.2, 0.5, 0.3];
    let (ma, mb) = (a.portfolio_moments(&w).unwrap(), b.portfolio_moments(&w).unwrap());
    assert!((ma.mu4 - mb.mu4).abs() < 1e-9 * ma.mu4);
}
