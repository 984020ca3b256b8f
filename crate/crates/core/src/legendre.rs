//! Log-moment generating functions of local jump laws and their
//! Legendre–Fenchel transforms.
//!
//! For a point `(s, u)` the jump law has log-weights `f(s, u, δ)`; the
//! Lagrangian is `L(v) = log Σ_δ exp((v, δ) + f(δ))` and the rate density is
//! `L*(v*) = sup_v {(v, v*) − L(v)}`. `L*` is finite exactly on the convex
//! hull of the support. In its relative interior the supremum is attained at
//! the unique `λ*` with `∇L(λ*) = v*` and is found by damped Newton; on a
//! proper face `F` the supremum equals the transform of the face-restricted
//! Lagrangian, which is again solved by Newton in the affine hull of `F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, AffineHull, Location, Polytope};
use crate::model::{cartesian, linspace, ChainSpec, Mode};

/// Jump law at a single point: supported jumps and their log-weights.
#[derive(Debug, Clone)]
pub struct LocalLaw {
    dim: usize,
    n_jumps: usize,
    /// Indices into the chain's jump set.
    support: Vec<usize>,
    points: Vec<f64>,
    logw: Vec<f64>,
    full_support: bool,
}

impl LocalLaw {
    pub fn at(spec: &ChainSpec, s: f64, u: &[f64], mode: Mode) -> Self {
        let n = spec.jumps().len();
        let mut f = vec![0.0; n];
        spec.log_weights(s, u, mode, &mut f);
        Self::from_log_weights(spec.jumps().points(), spec.dim(), &f)
    }

    /// Builds a law from jump coordinates (row-major) and log-weights; `-∞`
    /// entries are dropped from the support.
    pub fn from_log_weights(points: &[f64], dim: usize, logw: &[f64]) -> Self {
        let n_jumps = logw.len();
        let support: Vec<usize> = (0..n_jumps).filter(|&i| logw[i] > f64::NEG_INFINITY).collect();
        let pts = support
            .iter()
            .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
            .collect();
        let lw = support.iter().map(|&i| logw[i]).collect();
        LocalLaw {
            dim,
            n_jumps,
            full_support: support.len() == n_jumps,
            support,
            points: pts,
            logw: lw,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn exponents(&self, v: &[f64]) -> Vec<f64> {
        (0..self.support.len())
            .map(|i| geometry::dot(v, self.point(i)) + self.logw[i])
            .collect()
    }

    /// `log Σ exp((v,δ) + f(δ))`, max-shifted; `-∞` for an empty support.
    pub fn log_mgf(&self, v: &[f64]) -> f64 {
        log_sum_exp(&self.exponents(v))
    }

    /// Tilted probabilities over the support.
    fn tilted_support(&self, v: &[f64]) -> Vec<f64> {
        let e = self.exponents(v);
        let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    }

    /// Tilted probabilities indexed by the full jump set (zero off the support).
    pub fn tilted(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Numerical("empty support".into()));
        }
        let p = self.tilted_support(v);
        let mut out = vec![0.0; self.n_jumps];
        for (k, &i) in self.support.iter().enumerate() {
            out[i] = p[k];
        }
        Ok(out)
    }

    /// `∇L(v)`: mean jump under the tilted law.
    pub fn grad(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Numerical("empty support".into()));
        }
        let p = self.tilted_support(v);
        let mut g = vec![0.0; self.dim];
        for (k, pk) in p.iter().enumerate() {
            g.iter_mut().zip(self.point(k)).for_each(|(a, b)| *a += pk * b);
        }
        Ok(g)
    }

    /// `∇²L(v)`: covariance of the jump under the tilted law (row-major d×d).
    pub fn hess(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mean = self.grad(v)?;
        let p = self.tilted_support(v);
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        for (k, pk) in p.iter().enumerate() {
            let x = self.point(k);
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += pk * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        Ok(h)
    }

    fn polytope(&self, jumps_hull: Option<&Polytope>) -> Polytope {
        match jumps_hull {
            Some(p) if self.full_support => p.clone(),
            _ => Polytope::new(&self.points, self.dim),
        }
    }

    /// `L*(v*)` with boundary handling; see the module docs.
    pub fn conjugate(&self, vstar: &[f64], opts: &LegendreOptions) -> Result<LegendrePoint> {
        self.conjugate_with_hull(vstar, opts, None)
    }

    pub(crate) fn conjugate_with_hull(
        &self,
        vstar: &[f64],
        opts: &LegendreOptions,
        jumps_hull: Option<&Polytope>,
    ) -> Result<LegendrePoint> {
        if self.is_empty() {
            return Ok(LegendrePoint::infinite(BoundaryFlag::OutsideDomain));
        }
        let hull = self.polytope(jumps_hull);
        match hull.locate(vstar, opts.boundary_tol) {
            Location::Outside => Ok(LegendrePoint::infinite(BoundaryFlag::OutsideDomain)),
            Location::Interior => {
                let all: Vec<usize> = (0..self.support.len()).collect();
                let sol = self.solve_on(&all, vstar, opts)?;
                Ok(LegendrePoint {
                    value: sol.value,
                    dual: Some(sol.dual),
                    residual: sol.residual,
                    flag: BoundaryFlag::Interior,
                    iterations: sol.iterations,
                })
            }
            Location::Boundary(face) => {
                let sol = self.solve_on(&face, vstar, opts)?;
                Ok(LegendrePoint {
                    value: sol.value,
                    dual: None,
                    residual: sol.residual,
                    flag: BoundaryFlag::RelativeBoundary,
                    iterations: sol.iterations,
                })
            }
        }
    }

    /// Newton on the transform of the Lagrangian restricted to `subset`
    /// (indices into the support), in the affine hull of those jumps.
    fn solve_on(&self, subset: &[usize], vstar: &[f64], opts: &LegendreOptions) -> Result<Solution> {
        let pts: Vec<f64> = subset.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        let logw: Vec<f64> = subset.iter().map(|&i| self.logw[i]).collect();
        let hull = AffineHull::of(&pts, self.dim, 1e-12);
        let k = hull.rank();
        if k == 0 {
            return Ok(Solution {
                value: -logw[0],
                dual: vec![0.0; self.dim],
                residual: geometry::dist(&pts[..self.dim], vstar),
                iterations: 0,
            });
        }
        let ys: Vec<Vec<f64>> = (0..subset.len())
            .map(|i| hull.coords(&pts[i * self.dim..(i + 1) * self.dim]))
            .collect();
        let ystar = hull.coords(vstar);
        let (w, value, residual, iterations) = newton_dual(&ys, &logw, &ystar, opts)?;
        Ok(Solution {
            value,
            dual: hull.direction(&w),
            residual,
            iterations,
        })
    }

    /// `inf { Σ μ(δ)(log μ(δ) − f(δ)) : μ ∈ simplex, Σ μ(δ) δ = v* }` by brute
    /// force over a simplex grid of spacing `step`; `+∞` when infeasible.
    ///
    /// `d+1` affinely independent jumps absorb the mean constraint exactly;
    /// the remaining weights run over the grid.
    pub fn entropy_rate(&self, vstar: &[f64], step: f64) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let hull = AffineHull::of(&self.points, self.dim, 1e-12);
        if hull.residual(vstar) > 1e-9 {
            return f64::INFINITY;
        }
        let k = hull.rank();
        let n = self.support.len();
        let ys: Vec<Vec<f64>> = (0..n).map(|i| hull.coords(self.point(i))).collect();
        let ystar = hull.coords(vstar);
        // greedy choice of an affinely independent basis
        let mut basis = vec![0usize];
        for i in 1..n {
            if basis.len() == k + 1 {
                break;
            }
            let mut cand = basis.clone();
            cand.push(i);
            if affinely_independent(&cand, &ys) {
                basis = cand;
            }
        }
        let free: Vec<usize> = (0..n).filter(|i| !basis.contains(i)).collect();
        let m = DMatrix::from_fn(k + 1, k + 1, |r, c| if r < k { ys[basis[c]][r] } else { 1.0 });
        let lu = m.lu();
        let steps = (1.0 / step).round().max(1.0) as usize;
        let mut best = f64::INFINITY;
        let mut mu_free = vec![0usize; free.len()];
        let objective = |mu: f64, f: f64| if mu > 0.0 { mu * (mu.ln() - f) } else { 0.0 };
        loop {
            let weights: Vec<f64> = mu_free.iter().map(|&c| c as f64 / steps as f64).collect();
            let mut rhs = DVector::zeros(k + 1);
            for r in 0..k {
                rhs[r] = ystar[r] - free.iter().zip(&weights).map(|(&i, w)| w * ys[i][r]).sum::<f64>();
            }
            rhs[k] = 1.0 - weights.iter().sum::<f64>();
            if let Some(mb) = lu.solve(&rhs) {
                if mb.iter().all(|&x| x >= -1e-12) {
                    let mut val = 0.0;
                    for (j, &b) in basis.iter().enumerate() {
                        val += objective(mb[j].max(0.0), self.logw[b]);
                    }
                    for (w, &i) in weights.iter().zip(&free) {
                        val += objective(*w, self.logw[i]);
                    }
                    best = best.min(val);
                }
            }
            // next grid point with Σ counts <= steps
            let mut j = 0;
            loop {
                if j == mu_free.len() {
                    return best;
                }
                mu_free[j] += 1;
                if mu_free.iter().sum::<usize>() <= steps {
                    break;
                }
                mu_free[j] = 0;
                j += 1;
            }
        }
    }

    /// `max_{v ∈ grid} (v, v*) − L(v)` over a Cartesian grid with about
    /// `n_grid` points in `bounds`; a lower bound on `L*(v*)`.
    pub fn oracle_grid(&self, vstar: &[f64], bounds: &[(f64, f64)], n_grid: usize) -> GridOracle {
        let d = self.dim;
        let per_axis = ((n_grid as f64).powf(1.0 / d as f64).round() as usize).max(2);
        let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| linspace(lo, hi, per_axis)).collect();
        let mut best = f64::NEG_INFINITY;
        let mut arg = vec![0.0; d];
        let mut idx = vec![0usize; d];
        let mut v = vec![0.0; d];
        let mut arg_idx = idx.clone();
        loop {
            for a in 0..d {
                v[a] = axes[a][idx[a]];
            }
            let val = geometry::dot(&v, vstar) - self.log_mgf(&v);
            if val > best {
                best = val;
                arg.copy_from_slice(&v);
                arg_idx.copy_from_slice(&idx);
            }
            let mut a = 0;
            loop {
                if a == d {
                    let on_edge = arg_idx.iter().any(|&i| i == 0 || i == per_axis - 1);
                    return GridOracle {
                        value: best,
                        argmax: arg,
                        on_edge,
                    };
                }
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

fn affinely_independent(idx: &[usize], ys: &[Vec<f64>]) -> bool {
    let pts: Vec<f64> = idx.iter().flat_map(|&i| ys[i].iter().copied()).collect();
    let k = ys[0].len().max(1);
    if ys[0].is_empty() {
        return idx.len() == 1;
    }
    AffineHull::of(&pts, k, 1e-12).rank() == idx.len() - 1
}

struct Solution {
    value: f64,
    dual: Vec<f64>,
    residual: f64,
    iterations: usize,
}

pub(crate) fn log_sum_exp(e: &[f64]) -> f64 {
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + e.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Damped Newton for `min_w LSE(w·y_i + f_i) − w·y*` on full-rank points.
/// Returns `(w, value, residual, iterations)` where `value = −min`.
fn newton_dual(ys: &[Vec<f64>], logw: &[f64], ystar: &[f64], opts: &LegendreOptions) -> Result<(Vec<f64>, f64, f64, usize)> {
    let k = ystar.len();
    let objective = |w: &[f64]| {
        let e: Vec<f64> = ys.iter().zip(logw).map(|(y, f)| geometry::dot(w, y) + f).collect();
        log_sum_exp(&e) - geometry::dot(w, ystar)
    };
    let moments = |w: &[f64]| {
        let e: Vec<f64> = ys.iter().zip(logw).map(|(y, f)| geometry::dot(w, y) + f).collect();
        let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        let mut mean = vec![0.0; k];
        for (pi, y) in p.iter().zip(ys) {
            mean.iter_mut().zip(y).for_each(|(a, b)| *a += pi * b);
        }
        let mut cov = DMatrix::<f64>::zeros(k, k);
        for (pi, y) in p.iter().zip(ys) {
            for a in 0..k {
                for b in 0..k {
                    cov[(a, b)] += pi * (y[a] - mean[a]) * (y[b] - mean[b]);
                }
            }
        }
        let g: Vec<f64> = mean.iter().zip(ystar).map(|(a, b)| a - b).collect();
        (g, cov)
    };

    let mut w = vec![0.0; k];
    let mut fval = objective(&w);
    let (mut g, mut h) = moments(&w);
    let mut gnorm = geometry::norm(&g);
    for it in 0..opts.max_iter {
        if gnorm <= opts.tol {
            return Ok((w, -fval, gnorm, it));
        }
        let rhs = DVector::from_iterator(k, g.iter().map(|x| -x));
        let dir = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let mut hr = h.clone();
                let ridge = 1e-12 * (1.0 + h.diagonal().amax());
                for a in 0..k {
                    hr[(a, a)] += ridge;
                }
                match hr.lu().solve(&rhs) {
                    Some(x) => x,
                    None => rhs.clone(),
                }
            }
        };
        let dir: Vec<f64> = dir.iter().copied().collect();
        let slope = geometry::dot(&g, &dir);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-16 {
            let cand: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let fc = objective(&cand);
            let (gc, hc) = moments(&cand);
            let gcn = geometry::norm(&gc);
            if fc <= fval + 1e-4 * t * slope || (gcn < gnorm && fc <= fval + 1e-12 * (1.0 + fval.abs())) {
                w = cand;
                fval = fc;
                g = gc;
                h = hc;
                gnorm = gcn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gnorm <= opts.tol {
        return Ok((w, -fval, gnorm, opts.max_iter));
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: gnorm,
    })
}

/// Solver settings for [`legendre_transform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreOptions {
    /// Stop when `‖∇L(λ) − v*‖` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance of the interior / boundary / outside classification of `v*`.
    pub boundary_tol: f64,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        LegendreOptions {
            tol: 1e-10,
            max_iter: 100,
            boundary_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryFlag {
    Interior,
    RelativeBoundary,
    OutsideDomain,
}

impl std::fmt::Display for BoundaryFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryFlag::Interior => "interior",
            BoundaryFlag::RelativeBoundary => "relative-boundary",
            BoundaryFlag::OutsideDomain => "outside-domain",
        })
    }
}

/// `L*(s, u, v*)` together with its maximizer and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint {
    pub value: f64,
    /// `λ*` with `∇L(λ*) = v*`; `None` when the supremum is not attained.
    pub dual: Option<Vec<f64>>,
    /// `‖∇L(λ*) − v*‖` (of the face problem on the relative boundary).
    pub residual: f64,
    pub flag: BoundaryFlag,
    pub iterations: usize,
}

impl LegendrePoint {
    fn infinite(flag: BoundaryFlag) -> Self {
        LegendrePoint {
            value: f64::INFINITY,
            dual: None,
            residual: f64::NAN,
            flag,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOracle {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// The best grid point sits on the edge of the box: the box may not
    /// contain the maximizer, or the supremum is unbounded.
    pub on_edge: bool,
}

/// Exponentially tilted jump law `ν^v(δ) ∝ exp((v,δ) + f(s,u,δ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMeasure {
    /// One probability per jump of the chain's jump set.
    pub probs: Vec<f64>,
    pub tilt: Vec<f64>,
    pub s: f64,
    pub u: Vec<f64>,
}

impl TiltedMeasure {
    pub fn mean(&self, spec: &ChainSpec) -> Vec<f64> {
        let d = spec.dim();
        let mut m = vec![0.0; d];
        for (i, p) in self.probs.iter().enumerate() {
            m.iter_mut().zip(spec.jumps().point(i)).for_each(|(a, b)| *a += p * b);
        }
        m
    }
}

pub fn log_mgf(spec: &ChainSpec, s: f64, u: &[f64], v: &[f64], mode: Mode) -> f64 {
    LocalLaw::at(spec, s, u, mode).log_mgf(v)
}

pub fn mgf_grad(spec: &ChainSpec, s: f64, u: &[f64], v: &[f64], mode: Mode) -> Result<Vec<f64>> {
    LocalLaw::at(spec, s, u, mode).grad(v)
}

pub fn mgf_hess(spec: &ChainSpec, s: f64, u: &[f64], v: &[f64], mode: Mode) -> Result<Vec<f64>> {
    LocalLaw::at(spec, s, u, mode).hess(v)
}

pub fn tilted_measure(spec: &ChainSpec, s: f64, u: &[f64], v: &[f64], mode: Mode) -> Result<TiltedMeasure> {
    let law = LocalLaw::at(spec, s, u, mode);
    Ok(TiltedMeasure {
        probs: law.tilted(v)?,
        tilt: v.to_vec(),
        s,
        u: u.to_vec(),
    })
}

pub fn legendre_transform(
    spec: &ChainSpec,
    s: f64,
    u: &[f64],
    vstar: &[f64],
    mode: Mode,
    opts: &LegendreOptions,
) -> Result<LegendrePoint> {
    LocalLaw::at(spec, s, u, mode).conjugate_with_hull(vstar, opts, Some(spec.jumps().hull()))
}

pub fn legendre_oracle_grid(
    spec: &ChainSpec,
    s: f64,
    u: &[f64],
    vstar: &[f64],
    mode: Mode,
    bounds: &[(f64, f64)],
    n_grid: usize,
) -> GridOracle {
    LocalLaw::at(spec, s, u, mode).oracle_grid(vstar, bounds, n_grid)
}

pub fn entropy_rate(spec: &ChainSpec, s: f64, u: &[f64], vstar: &[f64], mode: Mode, step: f64) -> f64 {
    LocalLaw::at(spec, s, u, mode).entropy_rate(vstar, step)
}

/// Product grid over the `(s', u')` ball of radius `r` used by the
/// regularized quantities. Points outside `Λ` are dropped.
pub fn regularization_grid(spec: &ChainSpec, s: f64, u: &[f64], r: f64, step: f64) -> Vec<(f64, Vec<f64>)> {
    let n = ((2.0 * r / step).ceil() as usize).max(1) + 1;
    let s_lo = (s - r).max(0.0);
    let s_axis = linspace(s_lo, s + r, n);
    let u_axes: Vec<Vec<f64>> = u.iter().map(|&c| linspace(c - r, c + r, n)).collect();
    let us: Vec<Vec<f64>> = cartesian(&u_axes)
        .into_iter()
        .filter(|p| geometry::dist(p, u) <= r * (1.0 + 1e-12) && spec.domain().contains(p))
        .collect();
    let mut out = Vec::with_capacity(s_axis.len() * us.len());
    for &sp in &s_axis {
        for up in &us {
            out.push((sp, up.clone()));
        }
    }
    out
}

/// `L^(r)(s,u,v) = sup_{|s'−s|≤r, |u'−u|≤r} L(s',u',v)` on a grid of spacing `step`.
pub fn reg_lagrangian(spec: &ChainSpec, s: f64, u: &[f64], v: &[f64], r: f64, step: f64, mode: Mode) -> f64 {
    if r <= 0.0 {
        return log_mgf(spec, s, u, v, mode);
    }
    regularization_grid(spec, s, u, r, step)
        .iter()
        .map(|(sp, up)| log_mgf(spec, *sp, up, v, mode))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `L^(r)*(s,u,v*) = inf_{|s'−s|≤r, |u'−u|≤r} L*(s',u',v*)` on a grid of spacing `step`.
pub fn reg_legendre(
    spec: &ChainSpec,
    s: f64,
    u: &[f64],
    vstar: &[f64],
    r: f64,
    step: f64,
    mode: Mode,
    opts: &LegendreOptions,
) -> Result<f64> {
    if r <= 0.0 {
        return Ok(legendre_transform(spec, s, u, vstar, mode, opts)?.value);
    }
    let mut best = f64::INFINITY;
    for (sp, up) in regularization_grid(spec, s, u, r, step) {
        best = best.min(legendre_transform(spec, sp, &up, vstar, mode, opts)?.value);
    }
    Ok(best)
}

/// Sequence of `L^(r)*` values along decreasing radii, as a stand-in for `lim_{r↓0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl Envelope {
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap_or(&f64::NAN)
    }
}

pub fn envelope_lagrangian(
    spec: &ChainSpec,
    s: f64,
    u: &[f64],
    vstar: &[f64],
    radii: &[f64],
    step: f64,
    mode: Mode,
    opts: &LegendreOptions,
) -> Result<Envelope> {
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        // keep the grid at least 4 points across the ball
        let st = step.min(r / 2.0);
        values.push(reg_legendre(spec, s, u, vstar, r, st, mode, opts)?);
    }
    Ok(Envelope {
        radii: radii.to_vec(),
        values,
    })
}

/// `sup_v (v, v*) − L^(r)(s,u,v)`: the transform of the regularized Lagrangian.
///
/// The objective is concave; one dimension uses golden-section search on an
/// expanding bracket, higher dimensions a shrinking compass search.
pub fn legendre_of_reg_lagrangian(
    spec: &ChainSpec,
    s: f64,
    u: &[f64],
    vstar: &[f64],
    r: f64,
    step: f64,
    mode: Mode,
) -> f64 {
    let grid = if r > 0.0 {
        regularization_grid(spec, s, u, r, step)
    } else {
        vec![(s, u.to_vec())]
    };
    let laws: Vec<LocalLaw> = grid.iter().map(|(sp, up)| LocalLaw::at(spec, *sp, up, mode)).collect();
    let objective = |v: &[f64]| {
        let lr = laws.iter().map(|l| l.log_mgf(v)).fold(f64::NEG_INFINITY, f64::max);
        geometry::dot(v, vstar) - lr
    };
    let d = spec.dim();
    let start = vec![0.0; d];
    if d == 1 {
        let f = |x: f64| objective(&[x]);
        golden_max(f, 0.0)
    } else {
        compass_max(objective, start)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, x0: f64) -> f64 {
    // bracket: walk uphill with growing steps
    let mut step = 0.5;
    let (mut a, mut b) = (x0 - step, x0 + step);
    let fx0 = f(x0);
    if !fx0.is_finite() && fx0 > 0.0 {
        return f64::INFINITY;
    }
    let mut expansions = 0;
    while f(a) > fx0 && expansions < 60 {
        step *= 2.0;
        a = x0 - step;
        expansions += 1;
    }
    step = 0.5;
    expansions = 0;
    while f(b) > fx0 && expansions < 60 {
        step *= 2.0;
        b = x0 + step;
        expansions += 1;
    }
    if expansions >= 60 {
        return f64::INFINITY;
    }
    // the maximizer may sit on the other side of x0; bracket is [a, b]
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(fx0)
}

fn compass_max(f: impl Fn(&[f64]) -> f64, mut x: Vec<f64>) -> f64 {
    let d = x.len();
    let mut fx = f(&x);
    let mut h = 1.0;
    let mut iter = 0;
    while h > 1e-11 && iter < 200_000 {
        iter += 1;
        let mut improved = false;
        for a in 0..d {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[a] += sign * h;
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if improved {
            h *= 2.0;
            if h > 1e6 {
                return f64::INFINITY;
            }
        } else {
            h *= 0.5;
        }
    }
    fx
}
