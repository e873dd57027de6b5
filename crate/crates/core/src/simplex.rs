//! Geometry of the weight simplex.

use rand::RngCore;

use crate::comoments::Weights;
use crate::error::{Error, Result};
use crate::rng::open_uniform;

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` by the sort-threshold rule.
pub fn project_simplex(v: &[f64]) -> Result<Weights> {
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector to project"));
    }
    let mut out = vec![0.0; v.len()];
    project_into(v, &mut out, &mut Vec::with_capacity(v.len()));
    Ok(Weights::from_feasible(out))
}

/// Allocation-free projection; `sorted` is scratch space.
pub(crate) fn project_into(v: &[f64], out: &mut [f64], sorted: &mut Vec<f64>) {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
    // Remove the last rounding residue from the sum.
    let s: f64 = out.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    }
}

/// Uniform draw on the simplex from the spacings of sorted uniforms.
pub fn sample_uniform_simplex<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Result<Weights> {
    if n == 0 {
        return Err(Error::InvalidInput("simplex dimension must be at least 1".into()));
    }
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| open_uniform(rng)).collect();
    cuts.sort_unstable_by(f64::total_cmp);
    let mut w = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &c in &cuts {
        w.push(c - prev);
        prev = c;
    }
    w.push(1.0 - prev);
    Ok(Weights::from_feasible(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    #[test]
    fn projection_examples() {
        let p = project_simplex(&[0.2, 0.3, 0.5]).unwrap();
        assert!(p.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(project_simplex(&[2.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0]);
        let p = project_simplex(&[0.6, 0.6]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!(project_simplex(&[f64::NAN, 1.0]).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn projection_kkt_audit() {
        let mut rng = substream(3, Domain::Test, 0);
        for _ in 0..50 {
            let v: Vec<f64> = (0..6).map(|_| 4.0 * open_uniform(&mut rng) - 2.0).collect();
            let p = project_simplex(&v).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
            for _ in 0..100 {
                let w = sample_uniform_simplex(6, &mut rng).unwrap();
                let ip: f64 = (0..6).map(|i| (v[i] - p[i]) * (w[i] - p[i])).sum();
                assert!(ip <= 1e-9);
            }
        }
    }

    #[test]
    fn uniform_sampling() {
        let mut rng = substream(5, Domain::Test, 1);
        let n = 4;
        let draws = 100_000;
        let mut mean = vec![0.0; n];
        for _ in 0..draws {
            let w = sample_uniform_simplex(n, &mut rng).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (m, x) in mean.iter_mut().zip(w.iter()) {
                *m += x / draws as f64;
            }
        }
        assert!(mean.iter().all(|m| (m - 0.25).abs() < 0.005));
        assert_eq!(sample_uniform_simplex(1, &mut rng).unwrap().as_slice(), &[1.0]);
    }
}
