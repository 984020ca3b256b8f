//! Small-dimensional convex geometry on finite point sets: affine hulls,
//! facet enumeration, face location and Euclidean projections.
//!
//! Everything here works on flat `f64` buffers of row-major points, which is
//! how jump sets are stored.

use nalgebra::DMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Orthonormal description of the affine hull of a point set.
#[derive(Debug, Clone)]
pub struct AffineHull {
    pub origin: Vec<f64>,
    /// `k` orthonormal directions, each of length `d`.
    pub basis: Vec<Vec<f64>>,
}

impl AffineHull {
    pub fn of(points: &[f64], dim: usize, tol: f64) -> Self {
        let n = points.len() / dim;
        assert!(n > 0, "affine hull of an empty set");
        let origin = points[..dim].to_vec();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 1..n {
            let mut w: Vec<f64> = (0..dim).map(|j| points[i * dim + j] - origin[j]).collect();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let len = norm(&w);
            if len > tol {
                w.iter_mut().for_each(|x| *x /= len);
                basis.push(w);
                if basis.len() == dim {
                    break;
                }
            }
        }
        AffineHull { origin, basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.basis.iter().map(|b| dot(&c, b)).collect()
    }

    /// Distance from `x` to the affine hull.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let y = self.coords(x);
        let back = self.point(&y);
        dist(&back, x)
    }

    /// Maps hull coordinates back to a point of R^d.
    pub fn point(&self, y: &[f64]) -> Vec<f64> {
        let mut p = self.origin.clone();
        for (c, b) in y.iter().zip(&self.basis) {
            p.iter_mut().zip(b).for_each(|(x, v)| *x += c * v);
        }
        p
    }

    /// Maps a direction in hull coordinates to R^d.
    pub fn direction(&self, w: &[f64]) -> Vec<f64> {
        let d = self.origin.len();
        let mut v = vec![0.0; d];
        for (c, b) in w.iter().zip(&self.basis) {
            v.iter_mut().zip(b).for_each(|(x, e)| *x += c * e);
        }
        v
    }
}

/// Half-space `normal · y <= offset` in hull coordinates; `normal` is a unit vector.
#[derive(Debug, Clone)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Facet {
    fn slack(&self, y: &[f64]) -> f64 {
        self.offset - dot(&self.normal, y)
    }
}

/// Where a point sits relative to a polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    /// Relative interior.
    Interior,
    /// On the relative boundary; carries the indices of the generating points
    /// spanning the minimal face that contains the query.
    Boundary(Vec<usize>),
    Outside,
}

/// Convex hull of a finite point set, described by its affine hull and facets.
#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    points: Vec<f64>,
    hull: AffineHull,
    /// Generating points expressed in hull coordinates.
    local: Vec<Vec<f64>>,
    facets: Vec<Facet>,
    scale: f64,
}

impl Polytope {
    pub fn new(points: &[f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut scale = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(dist(&points[i * dim..(i + 1) * dim], &points[j * dim..(j + 1) * dim]));
            }
        }
        let scale = scale.max(1.0);
        let hull = AffineHull::of(points, dim, 1e-12 * scale);
        let local: Vec<Vec<f64>> = (0..n).map(|i| hull.coords(&points[i * dim..(i + 1) * dim])).collect();
        let facets = enumerate_facets(&local, hull.rank(), 1e-10 * scale);
        Polytope {
            dim,
            points: points.to_vec(),
            hull,
            local,
            facets,
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hull(&self) -> &AffineHull {
        &self.hull
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn n_points(&self) -> usize {
        self.local.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Barycenter of the generating points; lies in the relative interior.
    pub fn centroid(&self) -> Vec<f64> {
        let n = self.n_points() as f64;
        let mut c = vec![0.0; self.dim];
        for i in 0..self.n_points() {
            c.iter_mut().zip(self.point(i)).for_each(|(a, b)| *a += b / n);
        }
        c
    }

    /// Locates `x` with an absolute tolerance `tol` (scaled by the polytope diameter when > 1).
    pub fn locate(&self, x: &[f64], tol: f64) -> Location {
        let tol = tol * self.scale;
        if self.hull.residual(x) > tol {
            return Location::Outside;
        }
        let y = self.hull.coords(x);
        if self.hull.rank() == 0 {
            // single point: it is its own relative interior
            return Location::Interior;
        }
        let mut tight = Vec::new();
        for (k, f) in self.facets.iter().enumerate() {
            let s = f.slack(&y);
            if s < -tol {
                return Location::Outside;
            }
            if s <= tol {
                tight.push(k);
            }
        }
        if tight.is_empty() {
            return Location::Interior;
        }
        let face = (0..self.n_points())
            .filter(|&i| {
                tight
                    .iter()
                    .all(|&k| self.facets[k].slack(&self.local[i]).abs() <= tol)
            })
            .collect();
        Location::Boundary(face)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.locate(x, tol) != Location::Outside
    }

    pub fn in_relative_interior(&self, x: &[f64], tol: f64) -> bool {
        self.locate(x, tol) == Location::Interior
    }

    /// Facets of the copy shrunk towards `center` by `factor` (in (0, 1]).
    pub fn shrunk_facets(&self, center: &[f64], factor: f64) -> Vec<Facet> {
        let c = self.hull.coords(center);
        self.facets
            .iter()
            .map(|f| {
                let ac = dot(&f.normal, &c);
                Facet {
                    normal: f.normal.clone(),
                    offset: ac + factor * (f.offset - ac),
                }
            })
            .collect()
    }

    /// Euclidean projection onto the polytope shrunk towards `center` by `factor`.
    pub fn project_shrunk(&self, x: &[f64], center: &[f64], factor: f64) -> Vec<f64> {
        let facets = self.shrunk_facets(center, factor);
        let y = self.hull.coords(x);
        if self.hull.residual(x) <= 1e-14 * self.scale && facets.iter().all(|f| f.slack(&y) >= 0.0) {
            return x.to_vec();
        }
        let p = project_halfspaces(&y, &facets, 1e-14 * self.scale);
        self.hull.point(&p)
    }
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // rightmost index that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Facets of the convex hull of full-dimensional points in `k` dimensions.
fn enumerate_facets(points: &[Vec<f64>], k: usize, tol: f64) -> Vec<Facet> {
    let n = points.len();
    let mut out: Vec<Facet> = Vec::new();
    match k {
        0 => {}
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            out.push(Facet { normal: vec![1.0], offset: hi });
            out.push(Facet { normal: vec![-1.0], offset: -lo });
        }
        _ => {
            combinations(n, k, |sub| {
                let p0 = &points[sub[0]];
                let m = DMatrix::from_fn(k - 1, k, |r, c| points[sub[r + 1]][c] - p0[c]);
                // normal = null vector of the (k-1) x k difference matrix
                let svd = m.transpose().svd(true, false);
                let u = match svd.u {
                    Some(u) => u,
                    None => return,
                };
                let sv = &svd.singular_values;
                if sv.iter().any(|&s| s <= tol) {
                    return; // degenerate subset
                }
                // columns of u span the range of m^T; the complement is the normal
                let mut normal = vec![0.0; k];
                // start from a generic vector and remove its range component
                for (e, slot) in normal.iter_mut().enumerate() {
                    *slot = 1.0 + 0.1 * e as f64;
                }
                for _ in 0..2 {
                    for c in 0..u.ncols() {
                        let col: Vec<f64> = u.column(c).iter().copied().collect();
                        let proj = dot(&normal, &col);
                        normal.iter_mut().zip(&col).for_each(|(a, b)| *a -= proj * b);
                    }
                }
                let mut len = norm(&normal);
                if len < 1e-8 {
                    // generic vector happened to be in range; retry with a basis sweep
                    let mut best = normal.clone();
                    for e in 0..k {
                        let mut cand = vec![0.0; k];
                        cand[e] = 1.0;
                        for c in 0..u.ncols() {
                            let col: Vec<f64> = u.column(c).iter().copied().collect();
                            let proj = dot(&cand, &col);
                            cand.iter_mut().zip(&col).for_each(|(a, b)| *a -= proj * b);
                        }
                        if norm(&cand) > norm(&best) {
                            best = cand;
                        }
                    }
                    normal = best;
                    len = norm(&normal);
                }
                normal.iter_mut().for_each(|x| *x /= len);
                let offset = dot(&normal, p0);
                let (mut above, mut below) = (false, false);
                for p in points {
                    let s = dot(&normal, p) - offset;
                    if s > tol {
                        above = true;
                    } else if s < -tol {
                        below = true;
                    }
                }
                let facet = match (above, below) {
                    (false, true) => Facet { normal, offset },
                    (true, false) => Facet {
                        normal: normal.iter().map(|x| -x).collect(),
                        offset: -offset,
                    },
                    _ => return,
                };
                let dup = out.iter().any(|f| {
                    (f.offset - facet.offset).abs() <= tol
                        && f.normal.iter().zip(&facet.normal).all(|(a, b)| (a - b).abs() <= 1e-9)
                });
                if !dup {
                    out.push(facet);
                }
            });
        }
    }
    out
}

/// Projection onto the intersection of half-spaces by Dykstra's algorithm.
pub(crate) fn project_halfspaces(x: &[f64], facets: &[Facet], tol: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    if facets.iter().all(|f| f.slack(&y) >= 0.0) {
        return y;
    }
    let k = x.len();
    let mut incr = vec![vec![0.0; k]; facets.len()];
    for _ in 0..10_000 {
        let mut change = 0.0_f64;
        for (f, p) in facets.iter().zip(incr.iter_mut()) {
            let z: Vec<f64> = y.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let s = f.slack(&z);
            let proj: Vec<f64> = if s >= 0.0 {
                z.clone()
            } else {
                z.iter().zip(&f.normal).map(|(a, n)| a + s * n).collect()
            };
            for i in 0..k {
                p[i] = z[i] - proj[i];
                change = change.max((proj[i] - y[i]).abs());
            }
            y = proj;
        }
        if change <= tol {
            break;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_hull_locates_points() {
        let p = Polytope::new(&[-1.0, 1.0], 1);
        assert_eq!(p.locate(&[0.5], 1e-9), Location::Interior);
        assert_eq!(p.locate(&[1.0], 1e-9), Location::Boundary(vec![1]));
        assert_eq!(p.locate(&[1.5], 1e-9), Location::Outside);
    }

    #[test]
    fn diamond_faces() {
        // conv{±e1, ±e2}
        let pts = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let p = Polytope::new(&pts, 2);
        assert_eq!(p.facets().len(), 4);
        assert_eq!(p.locate(&[0.1, 0.2], 1e-9), Location::Interior);
        // edge between e1 and e2
        assert_eq!(p.locate(&[0.5, 0.5], 1e-9), Location::Boundary(vec![0, 2]));
        // vertex
        assert_eq!(p.locate(&[0.0, -1.0], 1e-9), Location::Boundary(vec![3]));
        assert_eq!(p.locate(&[0.6, 0.6], 1e-9), Location::Outside);
    }

    #[test]
    fn lower_dimensional_hull() {
        // collinear points in the plane
        let pts = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let p = Polytope::new(&pts, 2);
        assert_eq!(p.hull().rank(), 1);
        assert_eq!(p.locate(&[1.5, 1.5], 1e-9), Location::Interior);
        assert_eq!(p.locate(&[1.5, 1.4], 1e-9), Location::Outside);
        assert_eq!(p.locate(&[2.0, 2.0], 1e-9), Location::Boundary(vec![2]));
    }

    #[test]
    fn projection_lands_on_shrunk_hull() {
        let pts = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let p = Polytope::new(&pts, 2);
        let q = p.project_shrunk(&[2.0, 2.0], &[0.0, 0.0], 1.0);
        assert!((q[0] - 0.5).abs() < 1e-9 && (q[1] - 0.5).abs() < 1e-9, "{q:?}");
        let inside = p.project_shrunk(&[0.1, -0.2], &[0.0, 0.0], 1.0);
        assert_eq!(inside, vec![0.1, -0.2]);
    }

    #[test]
    fn combinations_enumerates_all_subsets() {
        let mut seen = Vec::new();
        combinations(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen.first().unwrap(), &vec![0, 1]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3]);
    }
}
