//! Piecewise-linear paths, their admissibility classes, the action functional
//! and constrained action minimization.

use crate::error::{Error, Result};
use crate::geometry::{self, Location, Polytope};
use crate::legendre::{LegendreOptions, LocalLaw};
use crate::model::{ChainSpec, Mode};

/// Piecewise-linear path through `knots` at strictly increasing `times`
/// starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    times: Vec<f64>,
    /// Row-major `(n + 1) × d`.
    knots: Vec<f64>,
}

impl Path {
    pub fn new(times: Vec<f64>, knots: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != knots.len() {
            return Err(Error::invalid("a path needs at least two knots and one time per knot"));
        }
        let dim = knots[0].len();
        if dim == 0 || knots.iter().any(|k| k.len() != dim) {
            return Err(Error::invalid("all knots must have the same positive dimension"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid("path times must start at 0"));
        }
        if let Some(i) = (1..times.len()).find(|&i| !(times[i] > times[i - 1]) || !times[i].is_finite()) {
            return Err(Error::invalid(format!("path times must be strictly increasing (row {i})")));
        }
        if knots.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("knots must be finite"));
        }
        Ok(Path {
            dim,
            times,
            knots: knots.into_iter().flatten().collect(),
        })
    }

    pub(crate) fn from_flat(dim: usize, times: Vec<f64>, knots: Vec<f64>) -> Self {
        Path { dim, times, knots }
    }

    /// Straight line from `start` to `end` on `n` equal segments of `[0, horizon]`.
    pub fn straight(start: &[f64], end: &[f64], horizon: f64, n: usize) -> Result<Self> {
        let times = uniform_times(horizon, n)?;
        let knots = times
            .iter()
            .map(|t| start.iter().zip(end).map(|(a, b)| a + (b - a) * t / horizon).collect())
            .collect();
        Path::new(times, knots)
    }

    pub fn constant(x: &[f64], horizon: f64, n: usize) -> Result<Self> {
        Self::straight(x, x, horizon, n)
    }

    /// Samples `f` on the grid `times`.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let knots = times.iter().map(|&t| f(t)).collect();
        Path::new(times, knots)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn knot(&self, i: usize) -> &[f64] {
        &self.knots[i * self.dim..(i + 1) * self.dim]
    }

    pub fn knots(&self) -> Vec<Vec<f64>> {
        (0..self.times.len()).map(|i| self.knot(i).to_vec()).collect()
    }

    /// Writes the value at `t` (clamped to `[0, T]`) into `out` without allocating.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n_segments();
        let d = self.dim;
        if t <= 0.0 {
            out.copy_from_slice(self.knot(0));
            return;
        }
        if t >= self.horizon() {
            out.copy_from_slice(self.knot(n));
            return;
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        for a in 0..d {
            let (p, q) = (self.knots[i * d + a], self.knots[(i + 1) * d + a]);
            out[a] = if w == 0.0 { p } else { p + w * (q - p) };
        }
    }

    /// Velocity on segment `i` (between knots `i` and `i + 1`).
    pub fn velocity(&self, i: usize) -> Vec<f64> {
        let h = self.times[i + 1] - self.times[i];
        self.knot(i + 1).iter().zip(self.knot(i)).map(|(b, a)| (b - a) / h).collect()
    }

    /// Value at `t`, clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.n_segments();
        if t <= 0.0 {
            return self.knot(0).to_vec();
        }
        if t >= self.horizon() {
            return self.knot(n).to_vec();
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        if w == 0.0 {
            return self.knot(i).to_vec();
        }
        self.knot(i).iter().zip(self.knot(i + 1)).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// Same path with every segment split in two.
    pub fn bisected(&self) -> Path {
        let n = self.n_segments();
        let mut times = Vec::with_capacity(2 * n + 1);
        let mut knots = Vec::with_capacity((2 * n + 1) * self.dim);
        for i in 0..n {
            times.push(self.times[i]);
            knots.extend_from_slice(self.knot(i));
            times.push(0.5 * (self.times[i] + self.times[i + 1]));
            knots.extend(self.knot(i).iter().zip(self.knot(i + 1)).map(|(a, b)| 0.5 * (a + b)));
        }
        times.push(self.horizon());
        knots.extend_from_slice(self.knot(n));
        Path::from_flat(self.dim, times, knots)
    }

    /// Same path on a grid with every segment split into `k` equal parts.
    pub fn subdivided(&self, k: usize) -> Path {
        let k = k.max(1);
        let n = self.n_segments();
        let mut times = Vec::with_capacity(k * n + 1);
        let mut knots = Vec::with_capacity((k * n + 1) * self.dim);
        for i in 0..n {
            for j in 0..k {
                let w = j as f64 / k as f64;
                times.push(self.times[i] + w * (self.times[i + 1] - self.times[i]));
                knots.extend(self.knot(i).iter().zip(self.knot(i + 1)).map(|(a, b)| a + w * (b - a)));
            }
        }
        times.push(self.horizon());
        knots.extend_from_slice(self.knot(n));
        Path::from_flat(self.dim, times, knots)
    }

    /// `sup_t |self(t) − other(t)|` over the common time range, exact for
    /// piecewise-linear paths: the distance is convex between consecutive
    /// breakpoints of the merged grid.
    pub fn sup_distance(&self, other: &Path) -> f64 {
        let end = self.horizon().min(other.horizon());
        merged_grid(&self.times, &other.times, end)
            .into_iter()
            .map(|t| geometry::dist(&self.eval(t), &other.eval(t)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn merged_grid(a: &[f64], b: &[f64], end: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = a.iter().chain(b).copied().filter(|&t| t <= end).collect();
    grid.push(end);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn uniform_times(horizon: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(horizon > 0.0) {
        return Err(Error::invalid("need n >= 1 segments and a positive horizon"));
    }
    let mut t: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    t[n] = horizon;
    Ok(t)
}

/// Membership of a path in the path classes used by the rate function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admissibility {
    /// Every chord velocity lies in `conv Δ`.
    pub e: bool,
    /// Every chord velocity lies in the interior of `conv Δ`.
    pub e_interior: bool,
    /// Knots in `Λ`, velocities in `D_φ(t)` for almost every `t`.
    pub d_closed: bool,
    /// Knots in `int Λ`, velocities in `conv Δ`.
    pub d_interior: bool,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.e || self.d_closed
    }

    pub fn label(&self) -> &'static str {
        match (self.d_interior, self.d_closed, self.e_interior, self.e) {
            (true, _, true, _) => "D°∩E°",
            (true, _, _, _) => "D°",
            (_, true, _, _) => "D̄",
            (_, _, true, _) => "E°",
            (_, _, _, true) => "E",
            _ => "inadmissible",
        }
    }
}

/// Classifies `path`; `tol` is the hull-membership tolerance.
///
/// For piecewise-linear paths every chord velocity over a pair of grid times
/// is a time-weighted average of segment velocities, so the chord tests reduce
/// to segment tests. A segment contributes to `D_φ(t)` on a set of positive
/// measure only if it lies in `∂Λ`, which is decided at its midpoint.
pub fn admissibility(path: &Path, spec: &ChainSpec, tol: f64) -> Admissibility {
    let hull = spec.jumps().hull();
    let domain = spec.domain();
    let n = path.n_segments();
    let locs: Vec<Location> = (0..n).map(|i| hull.locate(&path.velocity(i), tol)).collect();
    let e = locs.iter().all(|l| *l != Location::Outside);
    let e_interior = locs.iter().all(|l| *l == Location::Interior);
    let knots_in = (0..=n).all(|i| domain.contains(path.knot(i)));
    let knots_interior = (0..=n).all(|i| domain.in_interior(path.knot(i)));
    let d_interior = knots_interior && e;
    let d_closed = knots_in
        && e
        && (0..n).all(|i| {
            let mid: Vec<f64> = path.knot(i).iter().zip(path.knot(i + 1)).map(|(a, b)| 0.5 * (a + b)).collect();
            if domain.in_interior(&mid) {
                return true;
            }
            let allowed = domain.allowed_jumps_limit(&mid, spec.jumps());
            let pts: Vec<f64> = (0..allowed.len())
                .filter(|&k| allowed[k])
                .flat_map(|k| spec.jumps().point(k).iter().copied())
                .collect();
            !pts.is_empty() && Polytope::new(&pts, spec.dim()).contains(&path.velocity(i), tol)
        });
    Admissibility {
        e,
        e_interior,
        d_closed,
        d_interior,
    }
}

/// Quadrature settings for [`action`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOptions {
    pub mode: Mode,
    /// Bisect all segments until successive sums differ by less than `quad_tol`.
    pub refine: bool,
    pub quad_tol: f64,
    pub max_bisections: usize,
    pub legendre: LegendreOptions,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            mode: Mode::Limit,
            refine: false,
            quad_tol: 1e-8,
            max_bisections: 10,
            legendre: LegendreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionValue {
    /// Nats; `+∞` iff some segment costs `+∞`.
    pub value: f64,
    pub scheme: &'static str,
    /// `h_i · L*(t_i, φ(t_i), v_i)` per segment of the evaluated grid.
    pub segments: Vec<f64>,
    /// Bound on `|sum − integral|` from the Lipschitz constants of the rate field.
    pub error_bound: f64,
    pub bisections: usize,
}

/// Left-endpoint sum `Σ h_i L*(t_i, φ(t_i), v_i)` of the path's cost.
pub fn action(path: &Path, spec: &ChainSpec, opts: &ActionOptions) -> Result<ActionValue> {
    let mut current = path.clone();
    let mut value = left_sum(&current, spec, opts.mode, &opts.legendre)?;
    let mut bisections = 0;
    if opts.refine && value.0.is_finite() {
        while bisections < opts.max_bisections {
            let finer = current.bisected();
            let next = left_sum(&finer, spec, opts.mode, &opts.legendre)?;
            bisections += 1;
            let diff = (next.0 - value.0).abs();
            current = finer;
            value = next;
            if diff < opts.quad_tol {
                break;
            }
        }
    }
    Ok(ActionValue {
        value: value.0,
        scheme: "left-endpoint",
        segments: value.1,
        error_bound: quadrature_bound(&current, spec),
        bisections,
    })
}

fn left_sum(path: &Path, spec: &ChainSpec, mode: Mode, opts: &LegendreOptions) -> Result<(f64, Vec<f64>)> {
    let hull = spec.jumps().hull();
    let mut parts = Vec::with_capacity(path.n_segments());
    for i in 0..path.n_segments() {
        let h = path.times[i + 1] - path.times[i];
        let law = LocalLaw::at(spec, path.times[i], path.knot(i), mode);
        let lp = law
            .conjugate_with_hull(&path.velocity(i), opts, Some(hull))
            .map_err(|e| e.at_segment(i))?;
        parts.push(h * lp.value);
    }
    Ok((parts.iter().sum(), parts))
}

/// `Σ (θ + ϑ(S)·c_Δ) h_i² / 2` with `S` the bounding box of the knots and
/// `c_Δ = max(diam Δ, max |δ|)` bounding the speed.
fn quadrature_bound(path: &Path, spec: &ChainSpec) -> f64 {
    let d = path.dim;
    let region: Vec<(f64, f64)> = (0..d)
        .map(|a| {
            (0..path.times.len())
                .map(|i| path.knot(i)[a])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        })
        .collect();
    let c = spec.field().constants(&region);
    let speed = spec.jumps().diameter().max(spec.jumps().max_norm());
    let lip = c.theta + c.vartheta * speed;
    if lip == 0.0 {
        return 0.0;
    }
    (0..path.n_segments())
        .map(|i| (path.times[i + 1] - path.times[i]).powi(2) / 2.0)
        .sum::<f64>()
        * lip
}

const SPACE_STEP: f64 = 1e-6;

/// Action value and its gradient with respect to every knot, row-major.
///
/// Knot `j` enters segment `j` through the velocity and segment `j + 1`
/// through both the base point and the velocity, so
/// `∂A/∂φ_j = λ_j − λ_{j+1} + h_{j+1} ∂_u L*(t_j, φ_j, v_{j+1})` with
/// `∂_u L* = −∂_u L(·, λ*)` evaluated by central differences.
fn value_and_gradient(
    path: &Path,
    spec: &ChainSpec,
    mode: Mode,
    opts: &LegendreOptions,
    need_grad: &[bool],
) -> Result<(f64, Vec<f64>)> {
    let d = path.dim;
    let n = path.n_segments();
    let hull = spec.jumps().hull();
    let homogeneous = spec.field().is_homogeneous();
    let mut total = 0.0;
    let mut grad = vec![0.0; (n + 1) * d];
    for i in 0..n {
        let h = path.times[i + 1] - path.times[i];
        let s = path.times[i];
        let u = path.knot(i);
        let v = path.velocity(i);
        let law = LocalLaw::at(spec, s, u, mode);
        let lp = law.conjugate_with_hull(&v, opts, Some(hull)).map_err(|e| e.at_segment(i))?;
        total += h * lp.value;
        if !lp.value.is_finite() {
            return Ok((f64::INFINITY, grad));
        }
        let lambda = lp.dual.ok_or_else(|| {
            Error::Numerical("velocity on the hull boundary; restrict to the relative interior".into()).at_segment(i)
        })?;
        for a in 0..d {
            grad[(i + 1) * d + a] += lambda[a];
            grad[i * d + a] -= lambda[a];
        }
        if homogeneous || !need_grad[i] {
            continue;
        }
        let margin = spec.domain().boundary_distance(u);
        let step = SPACE_STEP.min(0.5 * margin);
        if step <= 0.0 {
            return Err(Error::Numerical("space derivative requested on the domain boundary".into()).at_segment(i));
        }
        let mut up = u.to_vec();
        for a in 0..d {
            up[a] = u[a] + step;
            let lp_plus = LocalLaw::at(spec, s, &up, mode).log_mgf(&lambda);
            up[a] = u[a] - step;
            let lp_minus = LocalLaw::at(spec, s, &up, mode).log_mgf(&lambda);
            up[a] = u[a];
            grad[i * d + a] -= h * (lp_plus - lp_minus) / (2.0 * step);
        }
    }
    Ok((total, grad))
}

/// Gradient of the left-endpoint action with respect to each knot
/// (entry `j` for knot `j`, including both endpoints).
pub fn action_gradient(path: &Path, spec: &ChainSpec, mode: Mode) -> Result<Vec<Vec<f64>>> {
    let need = vec![true; path.n_segments()];
    let (value, g) = value_and_gradient(path, spec, mode, &LegendreOptions::default(), &need)?;
    if !value.is_finite() {
        return Err(Error::Numerical("action is infinite; no gradient".into()));
    }
    Ok(g.chunks(path.dim).map(|c| c.to_vec()).collect())
}

/// Projected-gradient settings shared by [`minimize_action`] and [`ball_infimum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when the norm of the gradient mapping drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Velocities are kept in `conv Δ` shrunk by `1 − shrink` about its centroid.
    pub shrink: f64,
    /// Free knots keep at least this distance from `∂Λ`.
    pub margin: f64,
    pub mode: Mode,
    pub legendre: LegendreOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-8,
            max_iter: 20_000,
            shrink: 1e-6,
            margin: 1e-9,
            mode: Mode::Limit,
            legendre: LegendreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub path: Path,
    pub action: ActionValue,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// False when the iteration cap was hit; the best iterate is still returned.
    pub converged: bool,
}

/// Minimizes the action over paths from `start` to `end` on `n_segments`
/// equal segments of `[0, T]`, starting from the straight chord.
pub fn minimize_action(spec: &ChainSpec, start: &[f64], end: &[f64], n_segments: usize, opts: &MinimizeOptions) -> Result<Minimized> {
    let d = spec.dim();
    if start.len() != d || end.len() != d {
        return Err(Error::invalid("endpoints must match the model dimension"));
    }
    if !spec.domain().contains(start) || !spec.domain().contains(end) {
        return Err(Error::invalid("endpoints must lie in the domain"));
    }
    let chord = Path::straight(start, end, spec.horizon(), n_segments)?;
    if !spec.jumps().hull().contains(&chord.velocity(0), 1e-12) {
        return Err(Error::invalid("endpoints are not connectable: chord velocity lies outside conv Δ"));
    }
    let n = n_segments;
    let mut free = vec![true; n + 1];
    free[0] = false;
    free[n] = false;
    let problem = Problem {
        spec,
        times: chord.times.clone(),
        free,
        ball: None,
        opts,
    };
    let (path, iterations, gradient_norm, converged) = problem.solve(chord.knots.clone())?;
    let action = action(&path, spec, &ActionOptions { mode: opts.mode, legendre: opts.legendre, ..Default::default() })?;
    Ok(Minimized {
        path,
        action,
        iterations,
        gradient_norm,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallInfimum {
    /// `+∞` when no admissible path from `φ₀` stays in the ball.
    pub value: f64,
    pub path: Option<Path>,
    /// Some knot of the minimizer sits on the ball's boundary.
    pub active: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Constraint set for [`ball_infimum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallOptions {
    /// Closed ball over `D̄` paths, or open ball over `D°` paths.
    pub closed: bool,
    /// Each center segment is split into this many path segments.
    pub subdivide: usize,
    pub minimize: MinimizeOptions,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions {
            closed: true,
            subdivide: 1,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// `inf { I(ψ) : ψ(0) = φ₀, sup_t |ψ(t) − center(t)| ≤ ρ }`.
///
/// Paths share the (refined) grid of the center, so the distance between
/// the two is maximal at grid times and the ball becomes one Euclidean
/// constraint per knot. The open ball uses radius `ρ(1 − 10⁻⁶)` and keeps
/// knots strictly inside `Λ`.
pub fn ball_infimum(spec: &ChainSpec, center: &Path, rho: f64, opts: &BallOptions) -> Result<BallInfimum> {
    if !(rho > 0.0) {
        return Err(Error::invalid("ball radius must be positive"));
    }
    if center.dim() != spec.dim() {
        return Err(Error::invalid("center dimension does not match the model"));
    }
    let grid = center.subdivided(opts.subdivide);
    let radius = if opts.closed { rho } else { rho * (1.0 - 1e-6) };
    let phi0 = spec.phi0();
    let infeasible = BallInfimum {
        value: f64::INFINITY,
        path: None,
        active: false,
        iterations: 0,
        converged: true,
    };
    if geometry::dist(phi0, grid.knot(0)) > radius {
        return Ok(infeasible);
    }
    let mut mopts = opts.minimize;
    if opts.closed {
        mopts.margin = 0.0;
    } else if mopts.margin <= 0.0 {
        mopts.margin = 1e-9;
    }
    let n = grid.n_segments();
    let mut free = vec![true; n + 1];
    free[0] = false;
    let mut x0 = grid.knots.clone();
    x0[..spec.dim()].copy_from_slice(phi0);
    let problem = Problem {
        spec,
        times: grid.times.clone(),
        free,
        ball: Some((grid.knots.clone(), radius)),
        opts: &mopts,
    };
    let start = problem.project(&x0);
    if problem.violation(&start) > 1e-9 {
        return Ok(infeasible);
    }
    let (path, iterations, _, converged) = problem.solve(start)?;
    let value = action(&path, spec, &ActionOptions { mode: mopts.mode, legendre: mopts.legendre, ..Default::default() })?.value;
    let active = (1..=n).any(|i| geometry::dist(path.knot(i), grid.knot(i)) >= radius * (1.0 - 1e-6));
    Ok(BallInfimum {
        value,
        path: Some(path),
        active,
        iterations,
        converged,
    })
}

/// Knot-space problem: pinned knots, per-segment velocity polytopes, domain
/// margin and optional per-knot balls.
struct Problem<'a> {
    spec: &'a ChainSpec,
    times: Vec<f64>,
    free: Vec<bool>,
    ball: Option<(Vec<f64>, f64)>,
    opts: &'a MinimizeOptions,
}

impl Problem<'_> {
    fn d(&self) -> usize {
        self.spec.dim()
    }

    fn n(&self) -> usize {
        self.times.len() - 1
    }

    fn path(&self, x: &[f64]) -> Path {
        Path::from_flat(self.d(), self.times.clone(), x.to_vec())
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let need: Vec<bool> = (0..self.n()).map(|i| self.free[i]).collect();
        let (v, mut g) = value_and_gradient(&self.path(x), self.spec, self.opts.mode, &self.opts.legendre, &need)?;
        let d = self.d();
        for (i, f) in self.free.iter().enumerate() {
            if !f {
                g[i * d..(i + 1) * d].fill(0.0);
            }
        }
        Ok((v, g))
    }

    /// Projects segment velocities of one parity class onto the shrunk hull.
    fn project_segments(&self, x: &mut [f64], parity: usize) {
        let d = self.d();
        let hull = self.spec.jumps().hull();
        let centroid = hull.centroid();
        let factor = 1.0 - self.opts.shrink;
        for i in (parity..self.n()).step_by(2) {
            let (fa, fb) = (self.free[i], self.free[i + 1]);
            if !fa && !fb {
                continue;
            }
            let h = self.times[i + 1] - self.times[i];
            let a = x[i * d..(i + 1) * d].to_vec();
            let b = x[(i + 1) * d..(i + 2) * d].to_vec();
            let v: Vec<f64> = b.iter().zip(&a).map(|(q, p)| (q - p) / h).collect();
            let pv = hull.project_shrunk(&v, &centroid, factor);
            if pv == v {
                continue;
            }
            for k in 0..d {
                let delta = h * pv[k];
                match (fa, fb) {
                    (true, true) => {
                        let m = 0.5 * (a[k] + b[k]);
                        x[i * d + k] = m - 0.5 * delta;
                        x[(i + 1) * d + k] = m + 0.5 * delta;
                    }
                    (false, true) => x[(i + 1) * d + k] = a[k] + delta,
                    (true, false) => x[i * d + k] = b[k] - delta,
                    (false, false) => unreachable!(),
                }
            }
        }
    }

    fn project_domain(&self, x: &mut [f64]) {
        let d = self.d();
        for i in 0..=self.n() {
            if self.free[i] {
                let p = self.spec.domain().project_inside(&x[i * d..(i + 1) * d], self.opts.margin);
                x[i * d..(i + 1) * d].copy_from_slice(&p);
            }
        }
    }

    fn project_balls(&self, x: &mut [f64]) {
        let Some((centers, r)) = &self.ball else { return };
        let d = self.d();
        for i in 0..=self.n() {
            if !self.free[i] {
                continue;
            }
            let c = &centers[i * d..(i + 1) * d];
            let dist = geometry::dist(&x[i * d..(i + 1) * d], c);
            if dist > *r {
                for k in 0..d {
                    x[i * d + k] = c[k] + (x[i * d + k] - c[k]) * r / dist;
                }
            }
        }
    }

    /// Dykstra's algorithm over the constraint families.
    fn project(&self, x0: &[f64]) -> Vec<f64> {
        let sets = if self.ball.is_some() { 4 } else { 3 };
        let len = x0.len();
        let mut x = x0.to_vec();
        let mut incr = vec![vec![0.0; len]; sets];
        let scale = 1.0 + x0.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        for _ in 0..5000 {
            let mut change = 0.0_f64;
            for (k, p) in incr.iter_mut().enumerate() {
                let y: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
                let mut z = y.clone();
                match k {
                    0 => self.project_segments(&mut z, 0),
                    1 => self.project_segments(&mut z, 1),
                    2 => self.project_domain(&mut z),
                    _ => self.project_balls(&mut z),
                }
                for j in 0..len {
                    p[j] = y[j] - z[j];
                    change = change.max((z[j] - x[j]).abs());
                }
                x = z;
            }
            if change <= 1e-15 * scale {
                break;
            }
        }
        x
    }

    /// Largest constraint violation of `x`.
    fn violation(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let hull = self.spec.jumps().hull();
        let mut worst = 0.0_f64;
        for i in 0..self.n() {
            let h = self.times[i + 1] - self.times[i];
            let v: Vec<f64> = (0..d).map(|k| (x[(i + 1) * d + k] - x[i * d + k]) / h).collect();
            let p = hull.project_shrunk(&v, &hull.centroid(), 1.0);
            worst = worst.max(h * geometry::dist(&p, &v));
        }
        for i in 0..=self.n() {
            let xi = &x[i * d..(i + 1) * d];
            if !self.spec.domain().contains(xi) {
                worst = worst.max(geometry::dist(xi, &self.spec.domain().project_inside(xi, 0.0)));
            }
            if let Some((centers, r)) = &self.ball {
                worst = worst.max(geometry::dist(xi, &centers[i * d..(i + 1) * d]) - r);
            }
        }
        worst
    }

    /// Projected gradient descent with backtracking on the step length.
    fn solve(&self, x0: Vec<f64>) -> Result<(Path, usize, f64, bool)> {
        let mut x = x0;
        if !self.free.iter().any(|&f| f) {
            return Ok((self.path(&x), 0, 0.0, true));
        }
        let (mut fx, mut g) = self.evaluate(&x)?;
        if !fx.is_finite() {
            return Err(Error::Numerical("starting path has infinite action".into()));
        }
        let hmin = self.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut t = hmin;
        let mut gnorm = f64::INFINITY;
        for it in 0..self.opts.max_iter {
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                let cand = self.project(&trial);
                let step: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
                let sq = geometry::dot(&step, &step);
                gnorm = sq.sqrt() / t;
                if gnorm <= self.opts.tol {
                    return Ok((self.path(&x), it, gnorm, true));
                }
                let (fc, gc) = match self.evaluate(&cand) {
                    Ok(r) => r,
                    Err(_) => (f64::INFINITY, Vec::new()),
                };
                let model = fx + geometry::dot(&g, &step) + sq / (2.0 * t);
                if fc.is_finite() && fc <= model + 1e-15 * fx.abs() {
                    let stalled = fx - fc <= 1e-15 * (1.0 + fx.abs()) && sq.sqrt() <= 1e-14 * (1.0 + geometry::norm(&x));
                    x = cand;
                    fx = fc;
                    g = gc;
                    accepted = true;
                    if stalled {
                        return Ok((self.path(&x), it + 1, gnorm, true));
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Ok((self.path(&x), it, gnorm, false));
            }
            t *= 2.0;
        }
        Ok((self.path(&x), self.opts.max_iter, gnorm, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CurieWeiss, ExternalField, SymmetricWalk};

    fn walk_rate(v: f64) -> f64 {
        (1.0 + v) / 2.0 * (1.0 + v).ln() + (1.0 - v) / 2.0 * (1.0 - v).ln()
    }

    fn walk() -> ChainSpec {
        SymmetricWalk::spec(1).unwrap()
    }

    #[test]
    fn path_validation() {
        assert!(Path::new(vec![0.0, 1.0, 1.0], vec![vec![0.0]; 3]).is_err());
        assert!(Path::new(vec![0.0, 2.0, 1.0], vec![vec![0.0]; 3]).is_err());
        assert!(Path::new(vec![0.1, 1.0], vec![vec![0.0]; 2]).is_err());
        assert!(Path::new(vec![0.0, 1.0], vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn evaluation_interpolates_knots() {
        let p = Path::new(vec![0.0, 0.5, 2.0], vec![vec![0.0], vec![1.0], vec![-2.0]]).unwrap();
        assert_eq!(p.eval(0.5), vec![1.0]);
        assert_eq!(p.eval(0.25), vec![0.5]);
        assert_eq!(p.eval(1.25), vec![-0.5]);
        assert_eq!(p.eval(2.0), vec![-2.0]);
        assert_eq!(p.velocity(1), vec![-2.0]);
        let q = p.bisected();
        assert_eq!(q.n_segments(), 4);
        assert_eq!(q.eval(1.25), vec![-0.5]);
    }

    #[test]
    fn sup_distance_uses_all_breakpoints() {
        let a = Path::new(vec![0.0, 1.0], vec![vec![0.0], vec![0.0]]).unwrap();
        let b = Path::new(vec![0.0, 0.3, 1.0], vec![vec![0.0], vec![0.7], vec![0.0]]).unwrap();
        assert!((a.sup_distance(&b) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn admissibility_examples() {
        let spec = walk();
        let cls = |v: f64| admissibility(&Path::straight(&[0.0], &[v], 1.0, 4).unwrap(), &spec, 1e-9);
        let a = cls(0.5);
        assert!(a.e && a.e_interior && a.d_interior && a.d_closed);
        let a = cls(1.0);
        assert!(a.e && !a.e_interior);
        let a = cls(1.5);
        assert!(!a.e && !a.is_admissible());
        assert_eq!(a.label(), "inadmissible");
    }

    #[test]
    fn boundary_segments_need_allowed_velocities() {
        let cw = CurieWeiss::spec(1.0, ExternalField::zero(), 100).unwrap();
        let stay = Path::constant(&[1.0], 1.0, 2).unwrap();
        let a = admissibility(&stay, &cw, 1e-9);
        assert!(a.d_closed && !a.d_interior);
        // leaving m = 1 downwards is fine, the segment is not on the boundary
        let down = Path::straight(&[1.0], &[0.5], 1.0, 2).unwrap();
        assert!(admissibility(&down, &cw, 1e-9).d_closed);
    }

    #[test]
    fn straight_line_action_of_walk() {
        let spec = walk();
        let p = Path::straight(&[0.0], &[0.5], 1.0, 10).unwrap();
        let a = action(&p, &spec, &ActionOptions::default()).unwrap();
        assert!((a.value - walk_rate(0.5)).abs() < 1e-12);
        assert!((a.value - 0.130812).abs() < 1e-6);
        assert_eq!(a.error_bound, 0.0);
        assert_eq!(a.segments.len(), 10);
        let fast = Path::straight(&[0.0], &[1.5], 1.0, 3).unwrap();
        assert_eq!(action(&fast, &spec, &ActionOptions::default()).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn constant_path_at_fixed_point_is_free() {
        let cw = CurieWeiss::spec(1.0, ExternalField::zero(), 100).unwrap();
        let p = Path::constant(&[0.0], 2.0, 8).unwrap();
        assert!(action(&p, &cw, &ActionOptions::default()).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn refinement_is_exact_for_homogeneous_models() {
        let spec = walk();
        let p = Path::new(vec![0.0, 0.4, 1.0], vec![vec![0.0], vec![0.3], vec![0.1]]).unwrap();
        let a = action(&p, &spec, &ActionOptions::default()).unwrap();
        let opts = ActionOptions { refine: true, max_bisections: 3, ..Default::default() };
        let r = action(&p, &spec, &opts).unwrap();
        assert!((a.value - r.value).abs() < 1e-14);
    }

    #[test]
    fn refinement_stays_inside_error_bound() {
        let cw = CurieWeiss::spec(1.5, ExternalField::sine(0.2, 1.0), 100).unwrap();
        let p = Path::new(vec![0.0, 0.5, 1.0], vec![vec![0.1], vec![0.4], vec![0.2]]).unwrap();
        let a = action(&p, &cw, &ActionOptions::default()).unwrap();
        let fine = action(&p.bisected(), &cw, &ActionOptions::default()).unwrap();
        assert!((a.value - fine.value).abs() <= a.error_bound);
    }

    #[test]
    fn gradient_telescopes_on_a_straight_walk_path() {
        let spec = walk();
        let p = Path::straight(&[0.0], &[0.5], 1.0, 2).unwrap();
        let g = action_gradient(&p, &spec, Mode::Limit).unwrap();
        assert!(g[1][0].abs() < 1e-12);
        assert!((g[2][0] - 0.5f64.atanh()).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cw = CurieWeiss::spec(1.3, ExternalField::sine(0.2, 1.5), 100).unwrap();
        let p = Path::new(vec![0.0, 0.3, 0.7, 1.0], vec![vec![0.1], vec![0.25], vec![-0.05], vec![0.2]]).unwrap();
        let g = action_gradient(&p, &cw, Mode::Limit).unwrap();
        let opts = ActionOptions::default();
        for j in 0..=3 {
            let h = 1e-6;
            let shift = |dx: f64| {
                let mut k = p.knots();
                k[j][0] += dx;
                action(&Path::new(p.times().to_vec(), k).unwrap(), &cw, &opts).unwrap().value
            };
            let fd = (shift(h) - shift(-h)) / (2.0 * h);
            assert!((fd - g[j][0]).abs() <= 1e-5 * (1.0 + fd.abs()), "knot {j}: {fd} vs {}", g[j][0]);
        }
    }

    #[test]
    fn gradient_rejects_boundary_velocities() {
        let spec = walk();
        let p = Path::straight(&[0.0], &[1.0], 1.0, 2).unwrap();
        assert!(action_gradient(&p, &spec, Mode::Limit).is_err());
    }

    #[test]
    fn homogeneous_minimizer_is_the_chord() {
        let spec = SymmetricWalk::spec(2).unwrap();
        let m = minimize_action(&spec, &[0.0, 0.0], &[0.3, -0.2], 8, &MinimizeOptions::default()).unwrap();
        let chord = Path::straight(&[0.0, 0.0], &[0.3, -0.2], 1.0, 8).unwrap();
        assert!(m.path.sup_distance(&chord) < 1e-4);
        assert!(m.converged);
    }

    #[test]
    fn equal_endpoints_give_zero() {
        let spec = walk();
        let m = minimize_action(&spec, &[0.2], &[0.2], 5, &MinimizeOptions::default()).unwrap();
        assert!(m.action.value.abs() < 1e-14);
    }

    #[test]
    fn unreachable_endpoints_are_rejected() {
        let spec = walk();
        assert!(minimize_action(&spec, &[0.0], &[1.5], 5, &MinimizeOptions::default()).is_err());
    }

    #[test]
    fn minimizer_improves_on_the_chord() {
        let cw = CurieWeiss::spec(1.5, ExternalField::zero(), 100)
            .unwrap()
            .with_horizon(2.0)
            .unwrap();
        let m = minimize_action(&cw, &[0.1], &[0.6], 16, &MinimizeOptions::default()).unwrap();
        let chord = action(&Path::straight(&[0.1], &[0.6], 2.0, 16).unwrap(), &cw, &ActionOptions::default()).unwrap();
        assert!(m.action.value <= chord.value + 1e-12);
        assert!(m.action.value > 0.0);
    }

    #[test]
    fn ball_infimum_for_walk() {
        let spec = walk();
        let center = Path::straight(&[0.0], &[0.5], 1.0, 1).unwrap();
        let b = ball_infimum(&spec, &center, 0.05, &BallOptions::default()).unwrap();
        assert!(b.value >= walk_rate(0.45) - 1e-9 && b.value <= walk_rate(0.5) + 1e-12, "{}", b.value);
        assert!((b.value - walk_rate(0.45)).abs() < 1e-7);
        assert!(b.active);
        let wide = ball_infimum(&spec, &center, 1.0, &BallOptions::default()).unwrap();
        assert!(wide.value.abs() < 1e-10);
    }

    #[test]
    fn ball_infimum_infeasible_when_start_outside() {
        let spec = walk();
        let center = Path::straight(&[0.5], &[0.5], 1.0, 1).unwrap();
        let b = ball_infimum(&spec, &center, 0.1, &BallOptions::default()).unwrap();
        assert_eq!(b.value, f64::INFINITY);
    }
}
