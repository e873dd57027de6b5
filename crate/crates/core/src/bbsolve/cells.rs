//! Simplicial cells of the weight simplex and their subdivisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edges shorter than this make a cell degenerate.
pub const MIN_EDGE: f64 = 1e-12;
/// Largest vertex count accepted by [`barycentric_subdivide`].
pub const MAX_BARYCENTRIC_VERTICES: usize = 6;

/// An n-simplex inside the weight simplex, given by its `n + 1` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexCell {
    pub vertices: Vec<Vec<f64>>,
    pub upper_bound: f64,
    pub depth: usize,
    pub id: usize,
}

impl SimplexCell {
    /// The whole weight simplex over `n` assets.
    pub fn standard(n: usize) -> Self {
        let vertices = (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            })
            .collect();
        Self { vertices, upper_bound: f64::INFINITY, depth: 0, id: 0 }
    }

    pub fn from_vertices(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 || vertices.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("a cell needs n vertices of dimension n".into()));
        }
        Ok(Self { vertices, upper_bound: f64::INFINITY, depth: 0, id: 0 })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        barycenter_of(self.vertices.iter())
    }

    /// Squared edge lengths `(d, e, |v_d - v_e|^2)` in lexicographic order.
    fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.vertices.len();
        (0..m).flat_map(move |d| {
            (d + 1..m).map(move |e| (d, e, dist2(&self.vertices[d], &self.vertices[e])))
        })
    }

    pub fn max_edge(&self) -> f64 {
        self.edges().map(|(_, _, l)| l).fold(0.0, f64::max).sqrt()
    }

    pub fn min_edge(&self) -> f64 {
        self.edges().map(|(_, _, l)| l).fold(f64::INFINITY, f64::min).sqrt()
    }

    /// Longest edge; ties go to the lexicographically smallest pair.
    pub fn longest_edge(&self) -> (usize, usize) {
        let mut best = (0, 1, -1.0);
        for (d, e, l) in self.edges() {
            if l > best.2 * (1.0 + 1e-12) {
                best = (d, e, l);
            }
        }
        (best.0, best.1)
    }

    /// `n`-dimensional volume of the cell (for `n + 1` vertices).
    pub fn volume(&self) -> f64 {
        let m = self.vertices.len();
        if m < 2 {
            return 1.0;
        }
        let k = m - 1;
        let edges: Vec<Vec<f64>> = (1..m)
            .map(|i| self.vertices[i].iter().zip(&self.vertices[0]).map(|(a, b)| a - b).collect())
            .collect();
        let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| dot(&edges[i], &edges[j]));
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        gram.determinant().max(0.0).sqrt() / fact
    }

    /// Whether `w` lies in the cell, with barycentric coordinates >= -tol.
    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        match self.barycentric_coordinates(w) {
            Some(l) => l.iter().all(|&x| x >= -tol),
            None => false,
        }
    }

    /// Barycentric coordinates of `w` (which must lie on the simplex plane).
    pub fn barycentric_coordinates(&self, w: &[f64]) -> Option<Vec<f64>> {
        let n = self.vertices.len();
        // Vertices are points of R^n on the plane sum = 1, so V lambda = w is square.
        let v = nalgebra::DMatrix::from_fn(n, n, |i, j| self.vertices[j][i]);
        let rhs = nalgebra::DVector::from_column_slice(w);
        v.lu().solve(&rhs).map(|l| l.iter().copied().collect())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn barycenter_of<'a>(pts: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for p in pts {
        if out.is_empty() {
            out = vec![0.0; p.len()];
        }
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
        count += 1;
    }
    out.iter_mut().for_each(|x| *x /= count as f64);
    out
}

/// Splits `cell` at the midpoint of a longest edge `(v_d, v_e)`: the first
/// child replaces `v_d`, the second `v_e`. Children get ids `next_id` and
/// `next_id + 1` and inherit the parent's upper bound.
pub fn bisect(cell: &SimplexCell, next_id: usize) -> Result<(SimplexCell, SimplexCell)> {
    if cell.n_vertices() < 2 {
        return Err(Error::DegenerateCell("a single point cannot be bisected".into()));
    }
    let min = cell.min_edge();
    if min < MIN_EDGE {
        return Err(Error::DegenerateCell(format!("shortest edge {min:e} below {MIN_EDGE:e}")));
    }
    let (d, e) = cell.longest_edge();
    let mid: Vec<f64> = cell.vertices[d].iter().zip(&cell.vertices[e]).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut a = cell.clone();
    a.vertices[d] = mid.clone();
    a.depth += 1;
    a.id = next_id;
    let mut b = cell.clone();
    b.vertices[e] = mid;
    b.depth += 1;
    b.id = next_id + 1;
    Ok((a, b))
}

/// Points of the full barycentric subdivision of a cell with `m` vertices:
/// the barycenter of every nonempty vertex subset, indexed by bit mask - 1.
pub(crate) fn subdivision_points(cell: &SimplexCell) -> Vec<Vec<f64>> {
    let m = cell.n_vertices();
    (1usize..(1 << m))
        .map(|mask| barycenter_of((0..m).filter(|i| mask >> i & 1 == 1).map(|i| &cell.vertices[i])))
        .collect()
}

/// For every permutation of the vertices, the masks of its prefix sets; each
/// such chain spans one simplex of the barycentric subdivision.
pub(crate) fn subdivision_chains(m: usize) -> Vec<Vec<usize>> {
    let mut perms = Vec::new();
    let mut p: Vec<usize> = (0..m).collect();
    permutations(&mut p, 0, &mut perms);
    perms
        .into_iter()
        .map(|perm| {
            let mut mask = 0usize;
            perm.iter()
                .map(|&i| {
                    mask |= 1 << i;
                    mask
                })
                .collect()
        })
        .collect()
}

fn permutations(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, out);
        p.swap(k, i);
    }
}

/// Full barycentric subdivision into `m!` cells for a cell with `m` vertices.
pub fn barycentric_subdivide(cell: &SimplexCell) -> Result<Vec<SimplexCell>> {
    let m = cell.n_vertices();
    if m > MAX_BARYCENTRIC_VERTICES {
        return Err(Error::InvalidInput(format!(
            "barycentric subdivision of a cell with {m} vertices exceeds the limit of {MAX_BARYCENTRIC_VERTICES}"
        )));
    }
    let points = subdivision_points(cell);
    Ok(subdivision_chains(m)
        .into_iter()
        .enumerate()
        .map(|(j, chain)| SimplexCell {
            vertices: chain.iter().map(|&mask| points[mask - 1].clone()).collect(),
            upper_bound: cell.upper_bound,
            depth: cell.depth + 1,
            id: j,
        })
        .collect())
}

/// Points where first-order cuts of the denominator are placed: the vertices,
/// and for `n_c >= 2` also `(j/n_c) v_i + (1 - j/n_c) barycenter`.
pub fn cut_points(cell: &SimplexCell, n_c: usize) -> Vec<Vec<f64>> {
    let mut pts = cell.vertices.clone();
    if n_c >= 2 {
        let c = cell.barycenter();
        for v in &cell.vertices {
            for j in 1..n_c {
                let t = j as f64 / n_c as f64;
                pts.push(v.iter().zip(&c).map(|(a, b)| t * a + (1.0 - t) * b).collect());
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_simplex_bisection_tie_break() {
        let s = SimplexCell::standard(3);
        assert_eq!(s.longest_edge(), (0, 1));
        let (a, b) = bisect(&s, 1).unwrap();
        assert_eq!(a.vertices[0], vec![0.5, 0.5, 0.0]);
        assert_eq!(b.vertices[1], vec![0.5, 0.5, 0.0]);
        assert_eq!(a.vertices[1], s.vertices[1]);
        assert_eq!(b.vertices[0], s.vertices[0]);
        assert_eq!((a.id, b.id, a.depth), (1, 2, 1));
        assert!((a.volume() + b.volume() - s.volume()).abs() < 1e-15);
        assert!(a.max_edge() <= s.max_edge() && b.max_edge() <= s.max_edge());
    }

    #[test]
    fn nested_bisections_shrink() {
        let s = SimplexCell::standard(3);
        let mut c = s.clone();
        for k in 0..20 {
            let (a, _) = bisect(&c, k).unwrap();
            assert!(a.max_edge() <= c.max_edge() + 1e-15);
            c = a;
        }
        assert!(c.max_edge() < 0.01 * s.max_edge());
    }

    #[test]
    fn degenerate_rejected() {
        let c = SimplexCell::from_vertices(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(bisect(&c, 0), Err(Error::DegenerateCell(_))));
    }

    #[test]
    fn barycentric_counts_and_volumes() {
        for (n, count) in [(2, 2), (3, 6), (4, 24)] {
            let s = SimplexCell::standard(n);
            let parts = barycentric_subdivide(&s).unwrap();
            assert_eq!(parts.len(), count);
            let total: f64 = parts.iter().map(|p| p.volume()).sum();
            assert!((total - s.volume()).abs() < 1e-10);
            // Every subdivision simplex has positive volume.
            assert!(parts.iter().all(|p| p.volume() > 1e-6 * s.volume()));
        }
        assert!(barycentric_subdivide(&SimplexCell::standard(7)).is_err());
        let seg = barycentric_subdivide(&SimplexCell::standard(2)).unwrap();
        assert!(seg.iter().all(|p| p.vertices.contains(&vec![0.5, 0.5])));
    }

    #[test]
    fn cut_point_layout() {
        let s = SimplexCell::standard(3);
        assert_eq!(cut_points(&s, 1), s.vertices);
        let p = cut_points(&s, 2);
        assert_eq!(p.len(), 6);
        let third = 1.0 / 3.0;
        let mid = [0.5 + 0.5 * third, 0.5 * third, 0.5 * third];
        assert!(p[3].iter().zip(mid).all(|(a, b)| (a - b).abs() < 1e-15));
        for q in cut_points(&s, 4) {
            assert!(s.contains(&q, 1e-12));
        }
    }

    #[test]
    fn volume_of_standard_simplices() {
        // sqrt(n) / (n-1)! for the standard simplex in R^n.
        assert!((SimplexCell::standard(2).volume() - 2f64.sqrt()).abs() < 1e-14);
        assert!((SimplexCell::standard(3).volume() - 3f64.sqrt() / 2.0).abs() < 1e-14);
    }
}
