//! Microscopic simulation and tube probabilities.
//!
//! Replica `r` of a run seeded with `seed` draws from its own ChaCha8 stream
//! `(seed, r)`, and replicas are reduced in fixed-size chunks in index order,
//! so estimates do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::action::{merged_grid, Path};
use crate::error::{Error, Result};
use crate::legendre::{BoundaryFlag, LegendreOptions, LocalLaw, TiltedMeasure};
use crate::model::{ChainSpec, Mode};

/// Replicas per reduction chunk.
const CHUNK: usize = 4096;

/// Default bound on `|Δ|^K` for exhaustive enumeration.
pub const DEFAULT_CAP: u128 = 1 << 20;

/// Random stream of replica `replica` in a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Microscopic states `X(0), …, X(K)` in integer lattice coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model_id: String,
    pub seed: u64,
    pub replica: u64,
    pub epsilon: f64,
    pub horizon: f64,
    dim: usize,
    states: Vec<i64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of transitions `K`.
    pub fn n_steps(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    pub fn state(&self, k: usize) -> &[i64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// `X(k)` in macroscopic units.
    pub fn position(&self, k: usize) -> Vec<f64> {
        self.state(k).iter().map(|&c| c as f64 * self.epsilon).collect()
    }

    /// Jump index sequence relative to `spec`'s jump set.
    pub fn increments_valid(&self, spec: &ChainSpec) -> bool {
        (0..self.n_steps()).all(|k| {
            let inc: Vec<i64> = self.state(k + 1).iter().zip(self.state(k)).map(|(b, a)| b - a).collect();
            (0..spec.jumps().len()).any(|i| spec.jumps().vector(i) == inc.as_slice())
        })
    }

    /// `Y_ε` as a path: knots at `kε` and at `T` when `T/ε` is fractional.
    pub fn linear_path(&self) -> Path {
        let k_max = self.n_steps();
        let mut times = Vec::with_capacity(k_max + 1);
        let mut knots = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let t = k as f64 * self.epsilon;
            if t >= self.horizon - 1e-12 * self.horizon {
                times.push(self.horizon);
                knots.push(interpolate(self, InterpMode::Linear, self.horizon));
                break;
            }
            times.push(t);
            knots.push(self.position(k));
        }
        if *times.last().unwrap() < self.horizon {
            times.push(self.horizon);
            knots.push(interpolate(self, InterpMode::Linear, self.horizon));
        }
        Path::new(times, knots).expect("trajectory grid is increasing")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    /// `Y_ε(t) = X([t/ε]) + (t/ε − [t/ε])(X([t/ε]+1) − X([t/ε]))`.
    Linear,
    /// `Z_ε(t) = X([t/ε])`.
    Step,
}

/// Macroscopic path of `traj` at time `t`, clamped to the simulated range.
pub fn interpolate(traj: &Trajectory, mode: InterpMode, t: f64) -> Vec<f64> {
    let x = t / traj.epsilon;
    let k_max = traj.n_steps();
    // snap values within rounding of an integer so knots are reproduced exactly
    let near = x.round();
    let x = if (x - near).abs() <= 1e-9 * x.abs().max(1.0) { near } else { x };
    let k = (x.floor().max(0.0) as usize).min(k_max);
    let frac = (x - k as f64).clamp(0.0, 1.0);
    let a = traj.position(k);
    if mode == InterpMode::Step || frac == 0.0 || k == k_max {
        return a;
    }
    let b = traj.position(k + 1);
    a.iter().zip(&b).map(|(p, q)| p + frac * (q - p)).collect()
}

/// Samples one trajectory of `spec` (replica 0 of `seed`).
pub fn sample_chain(spec: &ChainSpec, seed: u64) -> Result<Trajectory> {
    sample_replica(spec, seed, 0)
}

pub fn sample_replica(spec: &ChainSpec, seed: u64, replica: u64) -> Result<Trajectory> {
    let mut kernel = Kernel::new(spec, None);
    let mut rng = replica_rng(seed, replica);
    let support = spec.initial_support();
    let mut x = support[rng.gen_range(0..support.len())].clone();
    let steps = spec.simulated_steps();
    let mut states = Vec::with_capacity((steps + 1) * spec.dim());
    states.extend_from_slice(&x);
    for k in 0..steps {
        let j = kernel.draw(k, &x, &mut rng)?.0;
        for (c, dj) in x.iter_mut().zip(spec.jumps().vector(j)) {
            *c += dj;
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        model_id: spec.id().to_string(),
        seed,
        replica,
        epsilon: spec.epsilon(),
        horizon: spec.horizon(),
        dim: spec.dim(),
        states,
    })
}

/// Step law used by every sampler: the chain's own law, or the per-segment
/// frozen tilted laws of a schedule. `draw` returns the sampled jump and the
/// log likelihood ratio `log g_ε(δ) − log ν(δ)` of the step.
pub(crate) struct Kernel<'a> {
    spec: &'a ChainSpec,
    schedule: Option<&'a TiltSchedule>,
    logw: Vec<f64>,
    probs: Vec<f64>,
    pos: Vec<f64>,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(spec: &'a ChainSpec, schedule: Option<&'a TiltSchedule>) -> Self {
        let n = spec.jumps().len();
        Kernel {
            spec,
            schedule,
            logw: vec![0.0; n],
            probs: vec![0.0; n],
            pos: vec![0.0; spec.dim()],
        }
    }

    /// Fills the true log-weights and the proposal probabilities for step `k` from `x`.
    pub(crate) fn prepare(&mut self, k: usize, x: &[i64]) -> Result<()> {
        let eps = self.spec.epsilon();
        for (p, &c) in self.pos.iter_mut().zip(x) {
            *p = c as f64 * eps;
        }
        let s = k as f64 * eps;
        self.spec.log_weights(s, &self.pos, Mode::Finite, &mut self.logw);
        match self.schedule {
            None => {
                for (p, l) in self.probs.iter_mut().zip(&self.logw) {
                    *p = l.exp();
                }
                if self.probs.iter().all(|&p| p == 0.0) {
                    return Err(Error::Numerical(format!("state at step {k} has no allowed jump")));
                }
            }
            Some(sched) => self.probs.copy_from_slice(&sched.measures[sched.segment_at(s)].probs),
        }
        Ok(())
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn log_ratio(&self, j: usize) -> f64 {
        if self.schedule.is_none() {
            return 0.0;
        }
        self.logw[j] - self.probs[j].ln()
    }

    fn draw(&mut self, k: usize, x: &[i64], rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
        self.prepare(k, x)?;
        let total: f64 = self.probs.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut cum = 0.0;
        let mut pick = None;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                pick = Some(j);
                if u < cum {
                    break;
                }
            }
        }
        let j = pick.expect("proposal has positive mass");
        Ok((j, self.log_ratio(j)))
    }
}

/// Incremental test of `sup_t |Y(t) − center(t)| < ρ`.
///
/// Each microscopic segment is checked at its end and at every center
/// breakpoint inside it; with both functions piecewise linear the distance
/// is convex between these points, so the test is exact.
pub(crate) struct Tube<'a> {
    center: &'a Path,
    rho2: f64,
    eps: f64,
    horizon: f64,
    c: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> Tube<'a> {
    pub(crate) fn new(center: &'a Path, rho: f64, spec: &ChainSpec) -> Result<Self> {
        if center.dim() != spec.dim() {
            return Err(Error::invalid("tube center dimension does not match the model"));
        }
        if center.horizon() < spec.horizon() * (1.0 - 1e-12) {
            return Err(Error::invalid("tube center must cover [0, T]"));
        }
        if !(rho > 0.0) {
            return Err(Error::invalid("tube radius must be positive"));
        }
        Ok(Tube {
            center,
            rho2: rho * rho,
            eps: spec.epsilon(),
            horizon: spec.horizon(),
            c: vec![0.0; spec.dim()],
            y: vec![0.0; spec.dim()],
        })
    }

    fn inside_at(&mut self, t: f64) -> bool {
        self.center.eval_into(t, &mut self.c);
        let d2: f64 = self.y.iter().zip(&self.c).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 < self.rho2
    }

    pub(crate) fn start(&mut self, x0: &[i64]) -> bool {
        for (y, &c) in self.y.iter_mut().zip(x0) {
            *y = c as f64 * self.eps;
        }
        self.inside_at(0.0)
    }

    /// Checks the piece of `Y` between steps `k` and `k + 1`.
    pub(crate) fn segment(&mut self, k: usize, from: &[i64], to: &[i64]) -> bool {
        let t0 = k as f64 * self.eps;
        if t0 >= self.horizon {
            return true;
        }
        let t_end = ((k + 1) as f64 * self.eps).min(self.horizon);
        let times = self.center.times();
        let first = times.partition_point(|&t| t <= t0);
        let mut i = first;
        while i < times.len() && times[i] < t_end {
            let w = (times[i] - t0) / self.eps;
            self.set_y(from, to, w);
            if !self.inside_at(times[i]) {
                return false;
            }
            i += 1;
        }
        self.set_y(from, to, (t_end - t0) / self.eps);
        self.inside_at(t_end)
    }

    fn set_y(&mut self, from: &[i64], to: &[i64], w: f64) {
        for ((y, &a), &b) in self.y.iter_mut().zip(from).zip(to) {
            let (p, q) = (a as f64 * self.eps, b as f64 * self.eps);
            *y = if w >= 1.0 { q } else { p + w * (q - p) };
        }
    }
}

/// Tube membership of a sampled trajectory.
pub fn in_tube(traj: &Trajectory, spec: &ChainSpec, center: &Path, rho: f64) -> Result<bool> {
    let mut tube = Tube::new(center, rho, spec)?;
    if !tube.start(traj.state(0)) {
        return Ok(false);
    }
    for k in 0..traj.n_steps() {
        if !tube.segment(k, traj.state(k), traj.state(k + 1)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Direct,
    Tilted,
    Exhaustive,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Direct => "direct",
            Estimator::Tilted => "tilted",
            Estimator::Exhaustive => "exhaustive",
        })
    }
}

/// Likelihood-ratio statistics over replicas that ended inside the tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub mean: f64,
    pub max: f64,
    /// `(Σ w)² / Σ w²`.
    pub ess: f64,
    /// Replicas that drew a step the true law forbids (weight 0).
    pub zero_weight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeEstimate {
    pub p_hat: f64,
    pub std_error: f64,
    /// 95% interval: Wilson score for direct sampling, normal otherwise.
    pub ci: (f64, f64),
    pub n_samples: u64,
    pub estimator: Estimator,
    pub weights: Option<WeightStats>,
}

impl TubeEstimate {
    /// Effective sample size: the weight ESS when tilted, `n` otherwise.
    pub fn ess(&self) -> f64 {
        match &self.weights {
            Some(w) => w.ess,
            None => self.n_samples as f64,
        }
    }
}

const Z95: f64 = 1.959_963_984_540_054;

fn wilson(hits: u64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fraction of `n_samples` replicas whose `Y_ε` stays within `ρ` of `center`.
pub fn tube_probability_mc(spec: &ChainSpec, center: &Path, rho: f64, n_samples: u64, seed: u64) -> Result<TubeEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    Tube::new(center, rho, spec)?;
    let chunks = chunk_ranges(n_samples);
    let counts: Vec<Result<u64>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut kernel = Kernel::new(spec, None);
            let mut tube = Tube::new(center, rho, spec)?;
            let mut hits = 0;
            for r in lo..hi {
                let (inside, _) = run_replica(spec, &mut kernel, &mut tube, seed, r)?;
                hits += inside as u64;
            }
            Ok(hits)
        })
        .collect();
    let mut hits = 0;
    for c in counts {
        hits += c?;
    }
    let p = hits as f64 / n_samples as f64;
    Ok(TubeEstimate {
        p_hat: p,
        std_error: (p * (1.0 - p) / n_samples as f64).sqrt(),
        ci: wilson(hits, n_samples),
        n_samples,
        estimator: Estimator::Direct,
        weights: None,
    })
}

fn chunk_ranges(n: u64) -> Vec<(u64, u64)> {
    (0..n.div_ceil(CHUNK as u64))
        .map(|c| (c * CHUNK as u64, ((c + 1) * CHUNK as u64).min(n)))
        .collect()
}

/// Runs replica `r`; returns tube membership and the accumulated log likelihood ratio.
fn run_replica(spec: &ChainSpec, kernel: &mut Kernel, tube: &mut Tube, seed: u64, r: u64) -> Result<(bool, f64)> {
    let mut rng = replica_rng(seed, r);
    let support = spec.initial_support();
    let mut x = support[rng.gen_range(0..support.len())].clone();
    if !tube.start(&x) {
        return Ok((false, 0.0));
    }
    let mut next = x.clone();
    let mut logw = 0.0;
    for k in 0..spec.simulated_steps() {
        let (j, lr) = kernel.draw(k, &x, &mut rng)?;
        logw += lr;
        if logw == f64::NEG_INFINITY {
            return Ok((false, logw));
        }
        for ((n, &c), dj) in next.iter_mut().zip(&x).zip(spec.jumps().vector(j)) {
            *n = c + dj;
        }
        if !tube.segment(k, &x, &next) {
            return Ok((false, logw));
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok((true, logw))
}

/// Frozen tilted laws along a reference path, one per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSchedule {
    pub reference: Path,
    /// `λ*_i` solving `∇L_ε(t_{i−1}, ψ(t_{i−1}), λ) = v_i`.
    pub duals: Vec<Vec<f64>>,
    pub measures: Vec<TiltedMeasure>,
    /// `|E_{ν_i} δ − v_i|` per segment.
    pub mean_residuals: Vec<f64>,
}

impl TiltSchedule {
    fn segment_at(&self, s: f64) -> usize {
        let t = self.reference.times();
        (t.partition_point(|&x| x <= s).max(1) - 1).min(t.len() - 2)
    }

    /// `T · max_i tr Cov_{ν_i}(δ)`: variance proxy of the tilted walk.
    pub fn variance_proxy(&self, spec: &ChainSpec) -> f64 {
        let max_tr = self
            .measures
            .iter()
            .map(|m| {
                let mean = m.mean(spec);
                m.probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * crate::geometry::dist(spec.jumps().point(i), &mean).powi(2))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        self.reference.horizon() * max_tr
    }
}

/// Chebyshev lower bound `1 − εT(diam Δ)²(ρ − ε√d)⁻²` on the probability
/// that the tilted walk stays within `ρ` of its reference; `None` when
/// `ρ ≤ ε√d`.
pub fn chebyshev_bound(spec: &ChainSpec, rho: f64) -> Option<f64> {
    let gap = rho - spec.epsilon() * (spec.dim() as f64).sqrt();
    if gap <= 0.0 {
        return None;
    }
    let diam = spec.jumps().diameter();
    Some(1.0 - spec.epsilon() * spec.horizon() * diam * diam / (gap * gap))
}

/// Radius above which the Chebyshev bound is informative:
/// `√(2εT)·diam Δ + ε√d`.
pub fn chebyshev_radius(spec: &ChainSpec) -> f64 {
    (2.0 * spec.epsilon() * spec.horizon()).sqrt() * spec.jumps().diameter()
        + spec.epsilon() * (spec.dim() as f64).sqrt()
}

/// Tilts the chain's finite-`ε` law so that its mean on each segment equals
/// the reference velocity.
pub fn make_tilt_schedule(spec: &ChainSpec, reference: &Path) -> Result<TiltSchedule> {
    if reference.dim() != spec.dim() {
        return Err(Error::invalid("reference dimension does not match the model"));
    }
    let opts = LegendreOptions::default();
    let mut duals = Vec::new();
    let mut measures = Vec::new();
    let mut residuals = Vec::new();
    for i in 0..reference.n_segments() {
        let s = reference.times()[i];
        let u = reference.knot(i);
        let v = reference.velocity(i);
        let law = LocalLaw::at(spec, s, u, Mode::Finite);
        let lp = law
            .conjugate_with_hull(&v, &opts, Some(spec.jumps().hull()))
            .map_err(|e| e.at_segment(i))?;
        if lp.flag != BoundaryFlag::Interior {
            return Err(Error::Numerical(format!(
                "reference velocity {v:?} is {} of the jump hull; tilting needs the relative interior",
                lp.flag
            ))
            .at_segment(i));
        }
        let lambda = lp.dual.expect("interior point has a dual");
        let m = TiltedMeasure {
            probs: law.tilted(&lambda)?,
            tilt: lambda.clone(),
            s,
            u: u.to_vec(),
        };
        let mean = m.mean(spec);
        let res = crate::geometry::dist(&mean, &v);
        if res > 1e-9 {
            return Err(Error::Numerical(format!("tilted mean misses the velocity by {res:.3e}")).at_segment(i));
        }
        duals.push(lambda);
        measures.push(m);
        residuals.push(res);
    }
    Ok(TiltSchedule {
        reference: reference.clone(),
        duals,
        measures,
        mean_residuals: residuals,
    })
}

/// Importance-sampling estimate of the tube probability: steps are drawn
/// from the schedule's frozen tilted laws and weighted by the exact ratio of
/// the true law at the current state and time to the proposal.
pub fn tube_probability_tilted(
    spec: &ChainSpec,
    center: &Path,
    rho: f64,
    schedule: &TiltSchedule,
    n_samples: u64,
    seed: u64,
) -> Result<TubeEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if schedule.reference.horizon() < spec.horizon() * (1.0 - 1e-12) {
        return Err(Error::invalid("tilt reference must cover [0, T]"));
    }
    Tube::new(center, rho, spec)?;
    let parts: Vec<Result<(f64, f64, f64, u64)>> = chunk_ranges(n_samples)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut kernel = Kernel::new(spec, Some(schedule));
            let mut tube = Tube::new(center, rho, spec)?;
            let (mut sum, mut sum2, mut max, mut zeros) = (0.0, 0.0, 0.0_f64, 0);
            for r in lo..hi {
                let (inside, logw) = run_replica(spec, &mut kernel, &mut tube, seed, r)?;
                if logw == f64::NEG_INFINITY {
                    zeros += 1;
                }
                if inside {
                    let w = logw.exp();
                    sum += w;
                    sum2 += w * w;
                    max = max.max(w);
                }
            }
            Ok((sum, sum2, max, zeros))
        })
        .collect();
    let (mut sum, mut sum2, mut max, mut zeros) = (0.0, 0.0, 0.0_f64, 0);
    for p in parts {
        let (a, b, c, z) = p?;
        sum += a;
        sum2 += b;
        max = max.max(c);
        zeros += z;
    }
    let n = n_samples as f64;
    let p = sum / n;
    let var = if n_samples > 1 { ((sum2 / n - p * p) * n / (n - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / n).sqrt();
    Ok(TubeEstimate {
        p_hat: p,
        std_error: se,
        ci: ((p - Z95 * se).max(0.0), p + Z95 * se),
        n_samples,
        estimator: Estimator::Tilted,
        weights: Some(WeightStats {
            mean: p,
            max,
            ess: if sum2 > 0.0 { sum * sum / sum2 } else { 0.0 },
            zero_weight: zeros,
        }),
    })
}

/// Exact sums over all step sequences and initial points.
struct Enumeration<'a> {
    spec: &'a ChainSpec,
    kernel: Kernel<'a>,
    tube: Tube<'a>,
    steps: usize,
    /// `Σ P(path) 1{in tube}`.
    exact: f64,
    /// `Σ Q(path) (dP/dQ)(path) 1{in tube}` when a schedule is given.
    tilted: f64,
}

impl Enumeration<'_> {
    fn walk(&mut self, k: usize, x: &[i64], p_true: f64, q_prop: f64, ratio: f64) -> Result<()> {
        if k == self.steps {
            self.exact += p_true;
            self.tilted += q_prop * ratio;
            return Ok(());
        }
        self.kernel.prepare(k, x)?;
        let n = self.spec.jumps().len();
        let g: Vec<f64> = self.kernel.logw.iter().map(|l| l.exp()).collect();
        let q: Vec<f64> = self.kernel.probs().to_vec();
        let lr: Vec<f64> = (0..n).map(|j| self.kernel.log_ratio(j)).collect();
        let tilted = self.kernel.schedule.is_some();
        let mut next = x.to_vec();
        for j in 0..n {
            if g[j] == 0.0 {
                continue;
            }
            for ((y, &c), dj) in next.iter_mut().zip(x).zip(self.spec.jumps().vector(j)) {
                *y = c + dj;
            }
            if !self.tube.segment(k, x, &next) {
                continue;
            }
            let (qj, rj) = if tilted { (q[j], lr[j].exp()) } else { (g[j], 1.0) };
            self.walk(k + 1, &next.clone(), p_true * g[j], q_prop * qj, ratio * rj)?;
        }
        Ok(())
    }
}

fn enumerate(
    spec: &ChainSpec,
    center: &Path,
    rho: f64,
    schedule: Option<&TiltSchedule>,
    cap: u128,
) -> Result<(f64, f64)> {
    let steps = spec.simulated_steps();
    let required = (spec.jumps().len() as u128).checked_pow(steps as u32).unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    let support = spec.initial_support();
    let mut e = Enumeration {
        spec,
        kernel: Kernel::new(spec, schedule),
        tube: Tube::new(center, rho, spec)?,
        steps,
        exact: 0.0,
        tilted: 0.0,
    };
    let w0 = 1.0 / support.len() as f64;
    for x0 in &support {
        if e.tube.start(x0) {
            e.walk(0, x0, w0, w0, 1.0)?;
        }
    }
    Ok((e.exact, e.tilted))
}

/// Exact tube probability by enumerating all `|Δ|^K` step sequences from
/// every initial point; branches leaving the tube are pruned.
pub fn exhaustive_tube_probability(spec: &ChainSpec, center: &Path, rho: f64, cap: u128) -> Result<TubeEstimate> {
    let (p, _) = enumerate(spec, center, rho, None, cap)?;
    Ok(TubeEstimate {
        p_hat: p,
        std_error: 0.0,
        ci: (p, p),
        n_samples: 0,
        estimator: Estimator::Exhaustive,
        weights: None,
    })
}

/// `E_Q[(dP/dQ) 1{in tube}]` for the tilted sampler, computed exactly by
/// enumeration, together with the exact tube probability.
pub fn exhaustive_tilted_expectation(
    spec: &ChainSpec,
    center: &Path,
    rho: f64,
    schedule: &TiltSchedule,
    cap: u128,
) -> Result<(f64, f64)> {
    let (exact, tilted) = enumerate(spec, center, rho, Some(schedule), cap)?;
    Ok((tilted, exact))
}

/// Upper bound `exp(d n (log(ρ/η) + 2))` on the size of an `η`-covering of
/// a `ρ`-tube sampled at `n` times.
pub fn covering_count(rho: f64, eta: f64, n: usize, d: usize) -> Result<f64> {
    if !(eta > 0.0) || !(rho > 2.0 * eta) {
        return Err(Error::invalid(format!("covering needs rho > 2 eta, got rho={rho}, eta={eta}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::invalid("covering needs n >= 1 and d >= 1"));
    }
    Ok(((d * n) as f64 * ((rho / eta).ln() + 2.0)).exp())
}

/// Explicit covering: at each knot time of `center`, the points of the
/// Cartesian lattice of spacing `η/√d` within `ρ` of the center.
#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    pub times: Vec<f64>,
    pub eta: f64,
    pub points: Vec<Vec<Vec<f64>>>,
}

impl Covering {
    pub fn new(center: &Path, rho: f64, eta: f64) -> Result<Self> {
        covering_count(rho, eta, 1, center.dim())?;
        let d = center.dim();
        let h = eta / (d as f64).sqrt();
        let points = (0..=center.n_segments())
            .map(|i| {
                let c = center.knot(i);
                let axes: Vec<Vec<f64>> = c
                    .iter()
                    .map(|&ci| {
                        let lo = ((ci - rho) / h).ceil() as i64;
                        let hi = ((ci + rho) / h).floor() as i64;
                        (lo..=hi).map(|k| k as f64 * h).collect()
                    })
                    .collect();
                crate::model::cartesian(&axes)
                    .into_iter()
                    .filter(|p| crate::geometry::dist(p, c) <= rho)
                    .collect()
            })
            .collect();
        Ok(Covering {
            times: center.times().to_vec(),
            eta,
            points,
        })
    }

    pub fn size(&self) -> f64 {
        self.points.iter().map(|p| p.len() as f64).product()
    }

    /// `path` is within `η` of some lattice point at every covering time.
    pub fn covers(&self, path: &Path) -> bool {
        self.times.iter().zip(&self.points).all(|(&t, pts)| {
            let y = path.eval(t);
            pts.iter().any(|p| crate::geometry::dist(p, &y) <= self.eta)
        })
    }
}

/// Sup-distance between a trajectory's `Y_ε` and `center`, on the merged grid.
pub fn sup_distance(traj: &Trajectory, center: &Path) -> f64 {
    let y = traj.linear_path();
    let end = y.horizon().min(center.horizon());
    merged_grid(y.times(), center.times(), end)
        .into_iter()
        .map(|t| crate::geometry::dist(&y.eval(t), &center.eval(t)))
        .fold(0.0, f64::max)
}
