//! Numerical checks of the large deviation bounds and of the limit objects.

use rayon::prelude::*;

use crate::action::{ball_infimum, BallOptions, Path};
use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::legendre::{legendre_of_reg_lagrangian, reg_legendre, LegendreOptions, LocalLaw};
use crate::model::{ChainSpec, Mode};
use crate::simulate::{
    covering_count, make_tilt_schedule, tube_probability_mc, tube_probability_tilted, Estimator, TubeEstimate,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub estimate: TubeEstimate,
    /// `−ε log p̂`; `+∞` when `p̂ = 0`.
    pub neg_eps_log_p: f64,
    pub i_ball: f64,
    /// `−ε log p̂ − I_ball`; NaN when both sides are infinite.
    pub gap: f64,
    /// `p̂ = 0` or `I_ball = +∞`: the row carries no rate information.
    pub degenerate: bool,
    /// `−ε log p̂` minus the covering entropy `ε d n (log(ρ/η) + 2)`, when requested.
    pub corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub model_id: String,
    pub rho: f64,
    pub center: Path,
    /// Closed-ball infimum over `D̄` paths: the upper-bound rate.
    pub i_ball_closed: f64,
    /// Open-ball infimum over `D°` paths: the lower-bound rate.
    pub i_ball_open: f64,
    /// Rows in order of decreasing `ε`.
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub ball: BallOptions,
    /// `η` of the covering correction column; `None` leaves it out.
    pub correction_eta: Option<f64>,
    /// Force direct sampling even when a tilt reference is available.
    pub direct_only: bool,
}

/// Estimates `P(sup |Y_ε − center| < ρ)` for each `ε` and compares
/// `−ε log p̂` with the ball infimum of the action.
///
/// The ball infimum uses the limit rate function and is computed once; rows
/// use the tilted sampler with the minimizer as reference and fall back to
/// direct sampling when no usable reference exists.
pub fn ldp_sweep(
    base: &ChainSpec,
    epsilons: &[f64],
    center: &Path,
    rho: f64,
    budget: u64,
    seed: u64,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if epsilons.is_empty() {
        return Err(Error::invalid("need at least one epsilon"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("epsilon list must be strictly decreasing"));
    }
    let closed = ball_infimum(base, center, rho, &BallOptions { closed: true, ..opts.ball })?;
    let open = ball_infimum(base, center, rho, &BallOptions { closed: false, ..opts.ball })?;
    let specs: Vec<ChainSpec> = epsilons.iter().map(|&e| base.with_epsilon(e)).collect::<Result<_>>()?;
    let rows: Vec<Result<SweepRow>> = specs
        .par_iter()
        .map(|spec| {
            let schedule = match (&closed.path, opts.direct_only) {
                (Some(p), false) => make_tilt_schedule(spec, p).ok(),
                _ => None,
            };
            let estimate = match &schedule {
                Some(s) => tube_probability_tilted(spec, center, rho, s, budget, seed)?,
                None => tube_probability_mc(spec, center, rho, budget, seed)?,
            };
            let eps = spec.epsilon();
            let nel = if estimate.p_hat > 0.0 { -eps * estimate.p_hat.ln() } else { f64::INFINITY };
            let gap = nel - closed.value;
            let corrected = match opts.correction_eta {
                Some(eta) => Some(nel - eps * covering_count(rho, eta, center.n_segments(), spec.dim())?.ln()),
                None => None,
            };
            Ok(SweepRow {
                epsilon: eps,
                neg_eps_log_p: nel,
                i_ball: closed.value,
                gap,
                degenerate: !nel.is_finite() || !closed.value.is_finite(),
                corrected,
                estimate,
            })
        })
        .collect();
    Ok(SweepReport {
        model_id: base.id().to_string(),
        rho,
        center: center.clone(),
        i_ball_closed: closed.value,
        i_ball_open: open.value,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

impl SweepReport {
    /// `|gap|` is nonincreasing over the last `halvings` steps of the sweep.
    pub fn gap_trend_ok(&self, halvings: usize) -> bool {
        let gaps: Vec<f64> = self.rows.iter().map(|r| r.gap.abs()).collect();
        if gaps.len() < halvings + 1 {
            return false;
        }
        gaps[gaps.len() - halvings - 1..].windows(2).all(|w| w[1] <= w[0])
    }

    pub fn uses(&self, estimator: Estimator) -> bool {
        self.rows.iter().any(|r| r.estimate.estimator == estimator)
    }
}

/// Where the Lagrangians are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePlan {
    /// `(s, u)` points inside `int Λ`.
    pub points: Vec<(f64, Vec<f64>)>,
    pub v_grid: Vec<Vec<f64>>,
    /// Points of `ri(conv Δ)`; entries within `ri_margin` of the hull's
    /// boundary (relative to the shrink about the centroid) are skipped.
    pub vstar_grid: Vec<Vec<f64>>,
    pub ri_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub epsilons: Vec<f64>,
    /// `sup |L_ε − L|` per `ε`.
    pub lagrangian: Vec<f64>,
    /// `sup |L*_ε − L*|` per `ε`.
    pub legendre: Vec<f64>,
    /// Least-squares slope of `sup |L_ε − L|` against `ε`.
    pub slope: f64,
    pub vstar_used: usize,
}

impl ConvergenceTable {
    /// Both columns are nonincreasing in the order given, up to `tol`.
    pub fn monotone(&self, tol: f64) -> bool {
        let mono = |c: &[f64]| c.windows(2).all(|w| w[1] <= w[0] + tol);
        mono(&self.lagrangian) && mono(&self.legendre)
    }
}

/// Sampled sup-norm distances between finite-`ε` and limit Lagrangians and
/// their transforms, for each spec of `family` (typically `ε` halving).
pub fn convergence_check_lagrangian(family: &[ChainSpec], plan: &ConvergencePlan) -> Result<ConvergenceTable> {
    let Some(first) = family.first() else {
        return Err(Error::invalid("empty model family"));
    };
    for (i, (_, u)) in plan.points.iter().enumerate() {
        if !first.domain().in_interior(u) {
            return Err(Error::OutsideDomain { index: i });
        }
    }
    let hull = first.jumps().hull();
    let centroid = hull.centroid();
    let factor = 1.0 - plan.ri_margin;
    let vstars: Vec<&Vec<f64>> = plan
        .vstar_grid
        .iter()
        .filter(|v| {
            // keep v* when it lies inside the hull shrunk by the margin
            let pulled: Vec<f64> = v.iter().zip(&centroid).map(|(a, c)| c + (a - c) / factor).collect();
            hull.locate(&pulled, 1e-12) == Location::Interior
        })
        .collect();
    let opts = LegendreOptions::default();
    let mut lag = Vec::new();
    let mut leg = Vec::new();
    for spec in family {
        let mut sup_l = 0.0_f64;
        let mut sup_ls = 0.0_f64;
        for (s, u) in &plan.points {
            let fin = LocalLaw::at(spec, *s, u, Mode::Finite);
            let lim = LocalLaw::at(spec, *s, u, Mode::Limit);
            for v in &plan.v_grid {
                sup_l = sup_l.max((fin.log_mgf(v) - lim.log_mgf(v)).abs());
            }
            for v in &vstars {
                let a = fin.conjugate(v, &opts)?.value;
                let b = lim.conjugate(v, &opts)?.value;
                sup_ls = sup_ls.max((a - b).abs());
            }
        }
        lag.push(sup_l);
        leg.push(sup_ls);
    }
    let eps: Vec<f64> = family.iter().map(|s| s.epsilon()).collect();
    let sxx: f64 = eps.iter().map(|e| e * e).sum();
    let sxy: f64 = eps.iter().zip(&lag).map(|(e, l)| e * l).sum();
    Ok(ConvergenceTable {
        epsilons: eps,
        lagrangian: lag,
        legendre: leg,
        slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        vstar_used: vstars.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyRow {
    pub s: f64,
    pub u: Vec<f64>,
    pub vstar: Vec<f64>,
    /// Transform of the regularized Lagrangian.
    pub transform_of_reg: f64,
    /// Regularized transform.
    pub reg_of_transform: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyReport {
    pub r: f64,
    pub grid_step: f64,
    pub rows: Vec<ConjugacyRow>,
    pub max_discrepancy: f64,
}

/// Compares `(L^(r))*` with `L^(r)*` at `(s, u, v*)` test points.
pub fn conjugacy_check(
    spec: &ChainSpec,
    r: f64,
    grid_step: f64,
    points: &[(f64, Vec<f64>, Vec<f64>)],
    mode: Mode,
) -> Result<ConjugacyReport> {
    let opts = LegendreOptions::default();
    let rows: Vec<Result<ConjugacyRow>> = points
        .par_iter()
        .map(|(s, u, v)| {
            Ok(ConjugacyRow {
                s: *s,
                u: u.clone(),
                vstar: v.clone(),
                transform_of_reg: legendre_of_reg_lagrangian(spec, *s, u, v, r, grid_step, mode),
                reg_of_transform: reg_legendre(spec, *s, u, v, r, grid_step, mode, &opts)?,
            })
        })
        .collect();
    let rows: Vec<ConjugacyRow> = rows.into_iter().collect::<Result<_>>()?;
    let max_discrepancy = rows
        .iter()
        .map(|r| (r.transform_of_reg - r.reg_of_transform).abs())
        .fold(0.0, f64::max);
    Ok(ConjugacyReport {
        r,
        grid_step,
        rows,
        max_discrepancy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub dist: f64,
    pub value: f64,
    pub product: f64,
}

/// `L*(s, u_k, v*)` along points approaching `∂Λ`, with `dist(u_k, Λ^c)`
/// and their product.
pub fn boundary_cost_probe(spec: &ChainSpec, s: f64, vstar: &[f64], approach: &[Vec<f64>], mode: Mode) -> Result<Vec<BoundaryRow>> {
    if spec.domain().is_whole() {
        return Err(Error::invalid("the domain has no boundary to approach"));
    }
    let opts = LegendreOptions::default();
    approach
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if !spec.domain().in_interior(u) {
                return Err(Error::OutsideDomain { index: i });
            }
            let dist = spec.domain().boundary_distance(u);
            let value = LocalLaw::at(spec, s, u, mode).conjugate(vstar, &opts)?.value;
            Ok(BoundaryRow {
                dist,
                value,
                product: dist * value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linspace, CurieWeiss, DriftWalk, ExternalField, SymmetricWalk};

    #[test]
    fn huge_tube_gives_zero_gap() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let center = Path::straight(&[0.0], &[0.5], 1.0, 1).unwrap();
        let r = ldp_sweep(&spec, &[0.05, 0.025], &center, 5.0, 200, 1, &SweepOptions::default()).unwrap();
        for row in &r.rows {
            assert_eq!(row.estimate.p_hat, 1.0);
            assert_eq!(row.i_ball, 0.0);
            assert_eq!(row.gap, 0.0);
        }
    }

    #[test]
    fn inadmissible_center_is_flagged() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let center = Path::straight(&[0.0], &[3.0], 1.0, 1).unwrap();
        let r = ldp_sweep(&spec, &[0.1, 0.05], &center, 0.2, 500, 3, &SweepOptions::default()).unwrap();
        assert_eq!(r.i_ball_closed, f64::INFINITY);
        for row in &r.rows {
            assert_eq!(row.estimate.p_hat, 0.0);
            assert!(row.degenerate);
            assert!(row.gap.is_nan());
        }
    }

    #[test]
    fn sweep_rejects_increasing_eps() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let center = Path::constant(&[0.0], 1.0, 1).unwrap();
        assert!(ldp_sweep(&spec, &[0.01, 0.02], &center, 0.1, 10, 1, &SweepOptions::default()).is_err());
    }

    fn plan() -> ConvergencePlan {
        ConvergencePlan {
            points: vec![(0.0, vec![0.0]), (0.5, vec![0.3])],
            v_grid: linspace(-2.0, 2.0, 21).into_iter().map(|v| vec![v]).collect(),
            vstar_grid: linspace(-1.0, 1.0, 21).into_iter().map(|v| vec![v]).collect(),
            ri_margin: 0.05,
        }
    }

    #[test]
    fn no_correction_means_no_gap() {
        let fam: Vec<ChainSpec> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&e| SymmetricWalk::spec(1).unwrap().with_epsilon(e).unwrap())
            .collect();
        let t = convergence_check_lagrangian(&fam, &plan()).unwrap();
        assert!(t.lagrangian.iter().chain(&t.legendre).all(|&x| x == 0.0));
        assert_eq!(t.vstar_used, 19);
    }

    #[test]
    fn correction_gap_scales_linearly() {
        let fam: Vec<ChainSpec> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&e| DriftWalk::spec(0.2, 1.0).unwrap().with_epsilon(e).unwrap())
            .collect();
        let t = convergence_check_lagrangian(&fam, &plan()).unwrap();
        assert!(t.monotone(1e-12));
        let k = fam[0].field().constants(&[(-1.0, 1.0)]).k;
        assert!(t.slope > 0.0 && t.slope <= k * 1.01, "slope {} vs K {k}", t.slope);
    }

    #[test]
    fn conjugacy_on_homogeneous_model_is_exact() {
        let spec = SymmetricWalk::spec(1).unwrap();
        let pts = vec![(0.0, vec![0.0], vec![0.3]), (1.0, vec![0.5], vec![-0.6])];
        let rep = conjugacy_check(&spec, 0.05, 0.01, &pts, Mode::Limit).unwrap();
        assert!(rep.max_discrepancy < 1e-9);
        let rep0 = conjugacy_check(&spec, 0.0, 0.01, &pts, Mode::Limit).unwrap();
        assert!(rep0.max_discrepancy < 1e-9);
    }

    #[test]
    fn boundary_probe() {
        let spec = SymmetricWalk::spec(1).unwrap();
        assert!(boundary_cost_probe(&spec, 0.0, &[0.0], &[vec![0.5]], Mode::Limit).is_err());
        let cw = CurieWeiss::spec(1.0, ExternalField::zero(), 100).unwrap();
        let approach: Vec<Vec<f64>> = (1..=20).map(|k| vec![1.0 - 0.5f64.powi(k)]).collect();
        let rows = boundary_cost_probe(&cw, 0.0, &[0.0], &approach, Mode::Limit).unwrap();
        assert!(rows.iter().all(|r| r.value < 1.0));
        assert!(rows.last().unwrap().product < 1e-6);
        let rows = boundary_cost_probe(&cw, 0.0, &[2.0], &approach, Mode::Limit).unwrap();
        assert!(rows.windows(2).all(|w| w[1].value > w[0].value));
        assert!(rows.last().unwrap().product < rows[0].product);
    }
}
