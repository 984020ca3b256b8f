//! Chain definitions: jump sets, convex state domains, rate fields and the
//! [`ChainSpec`] tying them to a lattice scale, horizon and start point.
//!
//! A chain on the rescaled lattice `ε Z^d ∩ Λ` moves from `x` to `x + ε δ`
//! with probability `g_ε(εk, x, δ) = exp f_ε(εk, x, δ)` at step `k`, where
//! `f_ε = f⁽⁰⁾_ε + ε f⁽¹⁾_ε` and `f_ε → f` as `ε → 0`. Rate fields provide the
//! three log-weight families; [`Mode`] selects which one a computation uses.

mod builtin;
mod config;

pub use builtin::{CurieWeiss, DriftWalk, ExternalField, SymmetricWalk};
pub use config::ModelConfig;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{self, Polytope};

/// Finite set of integer lattice displacements whose convex hull is full-dimensional.
#[derive(Debug, Clone)]
pub struct JumpSet {
    dim: usize,
    vectors: Vec<i64>,
    points: Vec<f64>,
    hull: Polytope,
    diameter: f64,
    max_norm: f64,
}

impl JumpSet {
    pub fn new(dim: usize, vectors: &[Vec<i64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("jump set dimension must be at least 1"));
        }
        if vectors.is_empty() {
            return Err(Error::invalid("jump set is empty"));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::invalid(format!("jump #{i} has length {} (expected {dim})", v.len())));
            }
            if vectors[..i].contains(v) {
                return Err(Error::invalid(format!("duplicate jump {v:?}")));
            }
        }
        let flat: Vec<i64> = vectors.iter().flatten().copied().collect();
        let points: Vec<f64> = flat.iter().map(|&c| c as f64).collect();
        let hull = Polytope::new(&points, dim);
        if hull.hull().rank() != dim {
            return Err(Error::invalid(format!(
                "convex hull of the jumps has affine dimension {} < {dim}",
                hull.hull().rank()
            )));
        }
        let n = vectors.len();
        let mut diameter = 0.0_f64;
        let mut max_norm = 0.0_f64;
        for i in 0..n {
            max_norm = max_norm.max(geometry::norm(&points[i * dim..(i + 1) * dim]));
            for j in 0..n {
                diameter = diameter.max(geometry::dist(
                    &points[i * dim..(i + 1) * dim],
                    &points[j * dim..(j + 1) * dim],
                ));
            }
        }
        Ok(JumpSet {
            dim,
            vectors: flat,
            points,
            hull,
            diameter,
            max_norm,
        })
    }

    /// `{±e_1, …, ±e_d}`.
    pub fn unit(dim: usize) -> Result<Self> {
        let mut v = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for sign in [-1, 1] {
                let mut e = vec![0; dim];
                e[i] = sign;
                v.push(e);
            }
        }
        JumpSet::new(dim, &v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[i64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// All jumps as a row-major `f64` buffer.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `conv Δ`, the set of attainable macroscopic velocities.
    pub fn hull(&self) -> &Polytope {
        &self.hull
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Largest jump length; bounds the speed of any admissible path.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }
}

/// Convex state space `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Whole { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : a_i · x <= b_i}`.
    HalfSpaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

const MEMBERSHIP_TOL: f64 = 1e-12;

impl Domain {
    pub fn whole(dim: usize) -> Self {
        Domain::Whole { dim }
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("box bounds must be non-empty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::invalid("box needs lo < hi in every coordinate"));
        }
        Ok(Domain::Box { lo, hi })
    }

    pub fn half_spaces(normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(Error::invalid("need one offset per half-space normal"));
        }
        let d = normals[0].len();
        if d == 0 || normals.iter().any(|a| a.len() != d || geometry::norm(a) == 0.0) {
            return Err(Error::invalid("half-space normals must be non-zero vectors of equal length"));
        }
        Ok(Domain::HalfSpaces { normals, offsets })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Whole { dim } => *dim,
            Domain::Box { lo, .. } => lo.len(),
            Domain::HalfSpaces { normals, .. } => normals[0].len(),
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, Domain::Whole { .. })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole { .. } => x.iter().all(|c| c.is_finite()),
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(&c, (&l, &h))| {
                c >= l - MEMBERSHIP_TOL * (1.0 + l.abs()) && c <= h + MEMBERSHIP_TOL * (1.0 + h.abs())
            }),
            Domain::HalfSpaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(a, &b)| geometry::dot(a, x) <= b + MEMBERSHIP_TOL * (1.0 + b.abs())),
        }
    }

    /// `dist(x, Λ^c)`: zero outside and on the boundary.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let d = match self {
            Domain::Whole { .. } => f64::INFINITY,
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&c, (&l, &h))| (c - l).min(h - c))
                .fold(f64::INFINITY, f64::min),
            Domain::HalfSpaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(a, &b)| (b - geometry::dot(a, x)) / geometry::norm(a))
                .fold(f64::INFINITY, f64::min),
        };
        d.max(0.0)
    }

    pub fn in_interior(&self, x: &[f64]) -> bool {
        self.contains(x) && self.boundary_distance(x) > MEMBERSHIP_TOL
    }

    /// `x ∈ Λ^(δ,ε)`, i.e. `x ∈ Λ` and `x + εδ ∈ Λ`.
    pub fn allows_jump(&self, x: &[f64], eps: f64, delta: &[f64]) -> bool {
        if !self.contains(x) {
            return false;
        }
        let y: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + eps * b).collect();
        self.contains(&y)
    }

    /// `x ∈ int_ε Λ`: every jump from `x` stays in `Λ`.
    pub fn in_eps_interior(&self, x: &[f64], eps: f64, jumps: &JumpSet) -> bool {
        (0..jumps.len()).all(|i| self.allows_jump(x, eps, jumps.point(i)))
    }

    /// Jumps allowed at `x` for the chain at scale `eps`.
    pub fn allowed_jumps(&self, x: &[f64], eps: f64, jumps: &JumpSet) -> Vec<bool> {
        (0..jumps.len()).map(|i| self.allows_jump(x, eps, jumps.point(i))).collect()
    }

    /// Jumps allowed at `x` in the small-`ε` limit: `x ∈ Λ^(δ)`, i.e. some
    /// positive step along `δ` stays in `Λ`. Only constraints active at `x` matter.
    pub fn allowed_jumps_limit(&self, x: &[f64], jumps: &JumpSet) -> Vec<bool> {
        if !self.contains(x) {
            return vec![false; jumps.len()];
        }
        let tol = 1e-12;
        (0..jumps.len())
            .map(|i| {
                let delta = jumps.point(i);
                match self {
                    Domain::Whole { .. } => true,
                    Domain::Box { lo, hi } => x.iter().zip(delta).zip(lo.iter().zip(hi)).all(
                        |((&c, &dc), (&l, &h))| {
                            !((c - l).abs() <= tol * (1.0 + l.abs()) && dc < 0.0
                                || (h - c).abs() <= tol * (1.0 + h.abs()) && dc > 0.0)
                        },
                    ),
                    Domain::HalfSpaces { normals, offsets } => normals.iter().zip(offsets).all(|(a, &b)| {
                        let active = (b - geometry::dot(a, x)).abs() <= tol * (1.0 + b.abs());
                        !active || geometry::dot(a, delta) <= 0.0
                    }),
                }
            })
            .collect()
    }

    /// Pulls `x` into `{y ∈ Λ : dist(y, Λ^c) >= margin}`.
    pub fn project_inside(&self, x: &[f64], margin: f64) -> Vec<f64> {
        match self {
            Domain::Whole { .. } => x.to_vec(),
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&c, (&l, &h))| {
                    let (a, b) = (l + margin, h - margin);
                    if a > b {
                        0.5 * (l + h)
                    } else {
                        c.clamp(a, b)
                    }
                })
                .collect(),
            Domain::HalfSpaces { normals, offsets } => {
                let facets: Vec<geometry::Facet> = normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, &b)| {
                        let n = geometry::norm(a);
                        geometry::Facet {
                            normal: a.iter().map(|c| c / n).collect(),
                            offset: b / n - margin,
                        }
                    })
                    .collect();
                geometry::project_halfspaces(x, &facets, 1e-14)
            }
        }
    }
}

/// Which log-weight family a computation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// `f_ε = f⁽⁰⁾_ε + ε f⁽¹⁾_ε`: the actual jump law of the chain at scale ε.
    Finite,
    /// `f⁽⁰⁾_ε` alone.
    Leading,
    /// The `ε → 0` limit `f`.
    Limit,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Finite => "finite",
            Mode::Leading => "leading",
            Mode::Limit => "limit",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite" => Ok(Mode::Finite),
            "leading" => Ok(Mode::Leading),
            "limit" => Ok(Mode::Limit),
            other => Err(Error::invalid(format!("unknown mode '{other}'"))),
        }
    }
}

/// Regularity constants of a rate field on a compact region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConstants {
    /// Time-Lipschitz constant of `f⁽⁰⁾`.
    pub theta: f64,
    /// Space-Lipschitz constant of `f⁽⁰⁾` on the region.
    pub vartheta: f64,
    /// Bound on `|f⁽¹⁾|` on the region.
    pub k: f64,
    /// Lower bound on every jump weight on the region.
    pub floor: f64,
}

/// Axis-aligned compact region `Π [lo_i, hi_i]`.
pub type Region = [(f64, f64)];

/// Log-weight evaluators of a chain.
///
/// Implementations fill `out[i]` with the value for jump `i` of the chain's
/// jump set; `-∞` marks forbidden jumps. Callers only pass points of `Λ`.
pub trait RateField: Send + Sync + fmt::Debug {
    fn leading(&self, s: f64, x: &[f64], eps: f64, out: &mut [f64]);

    fn correction(&self, _s: f64, _x: &[f64], _eps: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn limit(&self, s: f64, x: &[f64], out: &mut [f64]);

    /// Declared regularity constants on a compact region inside `int Λ`.
    fn constants(&self, region: &Region) -> FieldConstants;

    /// Largest lattice scale for which the declared hypotheses hold.
    fn eps_max(&self) -> f64 {
        f64::INFINITY
    }

    /// True when `f` does not depend on `s` or `x`.
    fn is_homogeneous(&self) -> bool {
        false
    }
}

/// Complete chain definition.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    id: String,
    epsilon: f64,
    horizon: f64,
    phi0: Vec<f64>,
    jumps: Arc<JumpSet>,
    domain: Domain,
    field: Arc<dyn RateField>,
    initial: InitialLaw,
}

/// Law of the first microscopic state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialLaw {
    /// Uniform over lattice points of `Λ` within `ε√d` of `φ₀`.
    #[default]
    Ball,
    /// Started exactly at `φ₀`, which must be a lattice point.
    Point,
}

impl ChainSpec {
    pub fn new(
        id: impl Into<String>,
        jumps: JumpSet,
        domain: Domain,
        field: Arc<dyn RateField>,
        epsilon: f64,
        horizon: f64,
        phi0: Vec<f64>,
    ) -> Result<Self> {
        if domain.dim() != jumps.dim() {
            return Err(Error::invalid("domain and jump set dimensions differ"));
        }
        let spec = ChainSpec {
            id: id.into(),
            epsilon,
            horizon,
            phi0,
            jumps: Arc::new(jumps),
            domain,
            field,
            initial: InitialLaw::Ball,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.epsilon > self.field.eps_max() {
            return Err(Error::invalid(format!(
                "epsilon {} exceeds the model's validity bound {}",
                self.epsilon,
                self.field.eps_max()
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.phi0.len() != self.dim() {
            return Err(Error::invalid("start point has the wrong dimension"));
        }
        if !self.domain.contains(&self.phi0) {
            return Err(Error::invalid("start point lies outside the domain"));
        }
        if self.macro_steps() < 1 {
            return Err(Error::invalid("horizon shorter than one microscopic step"));
        }
        if self.initial_support().is_empty() {
            return Err(Error::invalid(match self.initial {
                InitialLaw::Ball => "no lattice point of the domain near the start point",
                InitialLaw::Point => "point start requires a lattice point of the domain",
            }));
        }
        Ok(())
    }

    /// Replaces any of scale, horizon and start point, validating once.
    pub fn reconfigured(&self, epsilon: Option<f64>, horizon: Option<f64>, phi0: Option<Vec<f64>>) -> Result<Self> {
        let mut s = self.clone();
        if let Some(e) = epsilon {
            s.epsilon = e;
        }
        if let Some(h) = horizon {
            s.horizon = h;
        }
        if let Some(p) = phi0 {
            s.phi0 = p;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.validate()?;
        Ok(s)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.horizon = horizon;
        s.validate()?;
        Ok(s)
    }

    pub fn with_initial_law(&self, initial: InitialLaw) -> Result<Self> {
        let mut s = self.clone();
        s.initial = initial;
        s.validate()?;
        Ok(s)
    }

    pub fn initial_law(&self) -> InitialLaw {
        self.initial
    }

    pub fn with_phi0(&self, phi0: Vec<f64>) -> Result<Self> {
        let mut s = self.clone();
        s.phi0 = phi0;
        s.validate()?;
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.jumps.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    pub fn jumps(&self) -> &JumpSet {
        &self.jumps
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn field(&self) -> &dyn RateField {
        self.field.as_ref()
    }

    /// `[T/ε]`.
    pub fn macro_steps(&self) -> usize {
        (self.horizon / self.epsilon + 1e-9).floor() as usize
    }

    /// Number of simulated transitions: `[T/ε]`, plus one when `T/ε` is not an
    /// integer so that the interpolated path is defined at `T`.
    pub fn simulated_steps(&self) -> usize {
        let k = self.macro_steps();
        let frac = self.horizon / self.epsilon - k as f64;
        if frac > 1e-9 {
            k + 1
        } else {
            k
        }
    }

    /// Support of the initial law in integer lattice coordinates; each point
    /// carries equal mass.
    pub fn initial_support(&self) -> Vec<Vec<i64>> {
        let d = self.dim();
        if self.initial == InitialLaw::Point {
            let k: Vec<f64> = self.phi0.iter().map(|c| (c / self.epsilon).round()).collect();
            let on_lattice = k
                .iter()
                .zip(&self.phi0)
                .all(|(a, c)| (a * self.epsilon - c).abs() <= 1e-9 * self.epsilon);
            return if on_lattice && self.domain.contains(&self.phi0) {
                vec![k.iter().map(|&a| a as i64).collect()]
            } else {
                Vec::new()
            };
        }
        let radius = (d as f64).sqrt();
        let centre: Vec<f64> = self.phi0.iter().map(|c| c / self.epsilon).collect();
        let lo: Vec<i64> = centre.iter().map(|c| (c - radius - 1e-9).ceil() as i64).collect();
        let hi: Vec<i64> = centre.iter().map(|c| (c + radius + 1e-9).floor() as i64).collect();
        let mut out = Vec::new();
        let mut cur = lo.clone();
        loop {
            let x: Vec<f64> = cur.iter().map(|&c| c as f64 * self.epsilon).collect();
            let r = cur
                .iter()
                .zip(&centre)
                .map(|(&c, z)| (c as f64 - z).powi(2))
                .sum::<f64>()
                .sqrt();
            if r <= radius + 1e-9 && self.domain.contains(&x) {
                out.push(cur.clone());
            }
            let mut i = 0;
            loop {
                if i == d {
                    return out;
                }
                if cur[i] < hi[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = lo[i];
                i += 1;
            }
        }
    }

    /// Log-weights of all jumps at `(s, x)`; `-∞` everywhere outside `Λ`.
    pub fn log_weights(&self, s: f64, x: &[f64], mode: Mode, out: &mut [f64]) {
        if !self.domain.contains(x) {
            out.fill(f64::NEG_INFINITY);
            return;
        }
        match mode {
            Mode::Leading => self.field.leading(s, x, self.epsilon, out),
            Mode::Limit => self.field.limit(s, x, out),
            Mode::Finite => {
                self.field.leading(s, x, self.epsilon, out);
                let mut stack = [0.0; 16];
                let mut heap = Vec::new();
                let corr: &mut [f64] = if out.len() <= 16 {
                    &mut stack[..out.len()]
                } else {
                    heap.resize(out.len(), 0.0);
                    &mut heap
                };
                self.field.correction(s, x, self.epsilon, corr);
                for (o, c) in out.iter_mut().zip(corr.iter()) {
                    if o.is_finite() {
                        *o += self.epsilon * c;
                    }
                }
            }
        }
    }

    /// Transition probabilities `g_ε(s, x, ·)`.
    pub fn weights(&self, s: f64, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.jumps.len()];
        self.log_weights(s, x, Mode::Finite, &mut w);
        w.iter_mut().for_each(|v| *v = v.exp());
        w
    }
}

/// Outcome of [`normalization_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationReport {
    pub max_deviation: f64,
    /// Index of the sample point attaining the maximum.
    pub worst: usize,
    pub passed: bool,
}

pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest `|Σ_δ g_ε(s,x,δ) − 1|` over the sample points.
pub fn normalization_check(spec: &ChainSpec, points: &[(f64, Vec<f64>)]) -> Result<NormalizationReport> {
    let mut worst = 0;
    let mut max_dev = 0.0_f64;
    for (i, (s, x)) in points.iter().enumerate() {
        if *s < 0.0 || x.len() != spec.dim() || !spec.domain().contains(x) {
            return Err(Error::OutsideDomain { index: i });
        }
        let dev = (spec.weights(*s, x).iter().sum::<f64>() - 1.0).abs();
        if dev > max_dev || i == 0 {
            max_dev = dev;
            worst = i;
        }
    }
    Ok(NormalizationReport {
        max_deviation: max_dev,
        worst,
        passed: max_dev <= NORMALIZATION_TOL,
    })
}

/// Grid for [`hypothesis_probe`].
#[derive(Debug, Clone)]
pub struct ProbePlan {
    /// Compact box that must lie inside `int Λ`.
    pub region: Vec<(f64, f64)>,
    pub s_grid: Vec<f64>,
    pub points_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub estimated: FieldConstants,
    pub declared: FieldConstants,
    /// Estimates within 1% of the declared constants and the floor respected.
    pub consistent: bool,
}

/// Finite-difference audit of the declared regularity constants.
pub fn hypothesis_probe(spec: &ChainSpec, plan: &ProbePlan) -> Result<ProbeReport> {
    let d = spec.dim();
    if plan.region.len() != d || plan.points_per_axis < 2 || plan.s_grid.is_empty() {
        return Err(Error::invalid("probe plan needs a d-dimensional box, >= 2 points per axis and an s grid"));
    }
    let axes: Vec<Vec<f64>> = plan
        .region
        .iter()
        .map(|&(lo, hi)| linspace(lo, hi, plan.points_per_axis))
        .collect();
    let grid = cartesian(&axes);
    for x in &grid {
        if !spec.domain().in_interior(x) {
            return Err(Error::invalid("probe region is not inside the interior of the domain"));
        }
    }
    let n = spec.jumps().len();
    let eps = spec.epsilon();
    let field = spec.field();
    let eval = |s: f64, x: &[f64]| {
        let mut f0 = vec![0.0; n];
        field.leading(s, x, eps, &mut f0);
        f0
    };
    let mut theta = 0.0_f64;
    let mut vartheta = 0.0_f64;
    let mut k = 0.0_f64;
    let mut floor = f64::INFINITY;
    let mut f1 = vec![0.0; n];
    for x in &grid {
        let rows: Vec<Vec<f64>> = plan.s_grid.iter().map(|&s| eval(s, x)).collect();
        for (row, &s) in rows.iter().zip(&plan.s_grid) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("forbidden jump inside the probe region at s={s}, x={x:?}")));
            }
            let w = spec.weights(s, x);
            floor = floor.min(w.iter().copied().fold(f64::INFINITY, f64::min));
            field.correction(s, x, eps, &mut f1);
            k = k.max(f1.iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        for (pair, sp) in rows.windows(2).zip(plan.s_grid.windows(2)) {
            let ds = (sp[1] - sp[0]).abs();
            if ds > 0.0 {
                for j in 0..n {
                    theta = theta.max((pair[1][j] - pair[0][j]).abs() / ds);
                }
            }
        }
        for axis in 0..d {
            let step = axes[axis][1] - axes[axis][0];
            let mut y = x.clone();
            y[axis] += step;
            if y[axis] > plan.region[axis].1 + 1e-12 {
                continue;
            }
            for &s in &plan.s_grid {
                let (a, b) = (eval(s, x), eval(s, &y));
                for j in 0..n {
                    vartheta = vartheta.max((b[j] - a[j]).abs() / step);
                }
            }
        }
    }
    let estimated = FieldConstants { theta, vartheta, k, floor };
    let declared = field.constants(&plan.region);
    let within = |est: f64, dec: f64| est <= dec * 1.01 + 1e-12;
    let consistent = within(theta, declared.theta)
        && within(vartheta, declared.vartheta)
        && within(k, declared.k)
        && floor >= declared.floor;
    Ok(ProbeReport {
        estimated,
        declared,
        consistent,
    })
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_set_rejects_degenerate_input() {
        assert!(JumpSet::new(1, &[]).is_err());
        assert!(JumpSet::new(1, &[vec![1], vec![1]]).is_err());
        // collinear jumps in the plane
        assert!(JumpSet::new(2, &[vec![1, 1], vec![-1, -1]]).is_err());
        assert!(JumpSet::new(2, &[vec![1, 0], vec![0, 1], vec![-1, -1]]).is_ok());
    }

    #[test]
    fn unit_jumps_have_expected_geometry() {
        let j = JumpSet::unit(2).unwrap();
        assert_eq!(j.len(), 4);
        assert!((j.diameter() - 2.0).abs() < 1e-15);
        assert_eq!(j.max_norm(), 1.0);
    }

    #[test]
    fn eps_interior_matches_definition() {
        let jumps = JumpSet::new(1, &[vec![-2], vec![0], vec![2]]).unwrap();
        let dom = Domain::cube(vec![-1.0], vec![1.0]).unwrap();
        assert!(dom.in_eps_interior(&[0.98], 0.01, &jumps));
        assert!(!dom.in_eps_interior(&[0.99], 0.01, &jumps));
        assert!(dom.allows_jump(&[0.99], 0.01, &[-2.0]));
        assert_eq!(dom.allowed_jumps(&[1.0], 0.01, &jumps), vec![true, true, false]);
    }

    #[test]
    fn eps_interior_shrinks_with_eps() {
        let jumps = JumpSet::unit(2).unwrap();
        let dom = Domain::half_spaces(vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]], vec![1.0, 0.0, 0.0]).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [i as f64 / 20.0, j as f64 / 20.0];
                for (big, small) in [(0.1, 0.05), (0.05, 0.01), (0.2, 0.001)] {
                    if dom.in_eps_interior(&x, big, &jumps) {
                        assert!(dom.in_eps_interior(&x, small, &jumps), "{x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn allowed_jumps_stabilise_as_eps_shrinks() {
        let jumps = JumpSet::new(1, &[vec![-2], vec![0], vec![2]]).unwrap();
        let dom = Domain::cube(vec![-1.0], vec![1.0]).unwrap();
        for x in [-1.0, -0.5, 0.0, 0.7, 1.0] {
            let limit = dom.allowed_jumps_limit(&[x], &jumps);
            assert_eq!(dom.allowed_jumps(&[x], 1e-6, &jumps), limit, "x={x}");
        }
        assert_eq!(dom.allowed_jumps_limit(&[1.0], &jumps), vec![true, true, false]);
    }

    #[test]
    fn boundary_distance_vanishes_on_the_boundary() {
        let dom = Domain::cube(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(dom.boundary_distance(&[1.0]), 0.0);
        assert_eq!(dom.boundary_distance(&[2.0]), 0.0);
        assert!((dom.boundary_distance(&[0.25]) - 0.75).abs() < 1e-15);
        let hs = Domain::half_spaces(vec![vec![3.0, 4.0]], vec![5.0]).unwrap();
        assert!((hs.boundary_distance(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(!hs.in_interior(&[0.6, 0.8]) && hs.contains(&[0.6, 0.8]));
    }

    #[test]
    fn initial_support_is_the_eps_sqrt_d_ball() {
        let spec = SymmetricWalk::spec(2).unwrap();
        let pts = spec.initial_support();
        // integer points within distance sqrt(2) of the origin
        assert_eq!(pts.len(), 9);
        let spec1 = SymmetricWalk::spec(1).unwrap();
        assert_eq!(spec1.initial_support(), vec![vec![-1], vec![0], vec![1]]);
        let point = spec1.with_initial_law(InitialLaw::Point).unwrap();
        assert_eq!(point.initial_support(), vec![vec![0]]);
        assert!(point.with_phi0(vec![0.005]).is_err());
    }

    #[test]
    fn simulated_steps_cover_fractional_horizon() {
        let spec = SymmetricWalk::spec(1).unwrap().with_epsilon(0.3).unwrap();
        assert_eq!(spec.macro_steps(), 3);
        assert_eq!(spec.simulated_steps(), 4);
        let spec = spec.with_epsilon(0.25).unwrap();
        assert_eq!(spec.simulated_steps(), 4);
        assert!(spec.with_epsilon(2.0).is_err());
    }

    #[test]
    fn normalization_rejects_points_outside() {
        let spec = CurieWeiss::spec(1.5, ExternalField::zero(), 100).unwrap();
        let pts = vec![(0.0, vec![0.3]), (0.0, vec![1.5])];
        match normalization_check(&spec, &pts) {
            Err(Error::OutsideDomain { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[derive(Debug)]
    struct Broken;
    impl RateField for Broken {
        fn leading(&self, _s: f64, _x: &[f64], _eps: f64, out: &mut [f64]) {
            out[0] = 0.5_f64.ln();
            out[1] = 0.6_f64.ln();
        }
        fn limit(&self, s: f64, x: &[f64], out: &mut [f64]) {
            self.leading(s, x, 0.0, out)
        }
        fn constants(&self, _region: &Region) -> FieldConstants {
            FieldConstants { theta: 0.0, vartheta: 0.0, k: 0.0, floor: 0.5 }
        }
    }

    #[test]
    fn broken_field_fails_normalization() {
        let spec = ChainSpec::new(
            "broken",
            JumpSet::unit(1).unwrap(),
            Domain::whole(1),
            Arc::new(Broken),
            0.1,
            1.0,
            vec![0.0],
        )
        .unwrap();
        let r = normalization_check(&spec, &[(0.0, vec![0.3])]).unwrap();
        assert!((r.max_deviation - 0.1).abs() < 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn symmetric_walk_normalizes_exactly() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let r = normalization_check(&spec, &[(0.0, vec![0.0]), (3.5, vec![-12.25])]).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn builtins_normalize_on_a_grid() {
        let specs = vec![
            SymmetricWalk::spec(2).unwrap(),
            CurieWeiss::spec(1.5, ExternalField::sine(0.2, 1.0), 50).unwrap(),
            CurieWeiss::spec(0.7, ExternalField::constant(-0.3), 20).unwrap(),
            DriftWalk::spec(0.3, 2.0).unwrap(),
        ];
        for spec in &specs {
            let d = spec.dim();
            let axis = linspace(-1.0, 1.0, 41);
            let pts: Vec<Vec<f64>> = cartesian(&vec![axis; d]);
            for s in [0.0, 0.37, 2.0] {
                for x in &pts {
                    let w = spec.weights(s, x);
                    assert!(w.iter().all(|&g| g >= 0.0));
                    assert!((w.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL, "{} at {x:?}", spec.id());
                    let allowed = spec.domain().allowed_jumps(x, spec.epsilon(), spec.jumps());
                    for (g, ok) in w.iter().zip(allowed) {
                        if !ok {
                            assert_eq!(*g, 0.0, "{} at {x:?}", spec.id());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn probe_time_homogeneous_walk() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let plan = ProbePlan {
            region: vec![(-1.0, 1.0)],
            s_grid: linspace(0.0, 2.0, 11),
            points_per_axis: 9,
        };
        let r = hypothesis_probe(&spec, &plan).unwrap();
        assert_eq!(r.estimated.theta, 0.0);
        assert_eq!(r.estimated.vartheta, 0.0);
        assert!(r.consistent);
    }

    #[test]
    fn probe_curie_weiss_respects_declared_constants() {
        let spec = CurieWeiss::spec(1.0, ExternalField::sine(0.2, 1.0), 200).unwrap();
        let plan = ProbePlan {
            region: vec![(-0.8, 0.8)],
            s_grid: linspace(0.0, 6.3, 64),
            points_per_axis: 33,
        };
        let r = hypothesis_probe(&spec, &plan).unwrap();
        assert!(r.estimated.theta > 0.0);
        assert!(r.consistent, "{r:?}");
    }

    #[test]
    fn probe_rejects_region_touching_boundary() {
        let spec = CurieWeiss::spec(1.0, ExternalField::zero(), 100).unwrap();
        let plan = ProbePlan {
            region: vec![(-1.0, 0.5)],
            s_grid: vec![0.0],
            points_per_axis: 5,
        };
        assert!(hypothesis_probe(&spec, &plan).is_err());
    }
}
