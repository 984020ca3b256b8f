//! Built-in chains: the symmetric nearest-neighbour walk, lazy Glauber
//! dynamics of the Curie–Weiss magnetization, and a biased walk whose jump
//! law carries an explicit `O(ε)` correction.

use std::sync::Arc;

use super::{ChainSpec, Domain, FieldConstants, JumpSet, RateField, Region};
use crate::error::{Error, Result};

/// Walk on `ε Z^d` with jumps `±e_i`, each with probability `1/(2d)`.
#[derive(Debug, Clone)]
pub struct SymmetricWalk {
    dim: usize,
}

impl SymmetricWalk {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("symmetric walk needs d >= 1"));
        }
        Ok(SymmetricWalk { dim })
    }

    /// `Λ = R^d`, `φ₀ = 0`, `ε = 0.01`, `T = 1`.
    pub fn spec(dim: usize) -> Result<ChainSpec> {
        let field = SymmetricWalk::new(dim)?;
        ChainSpec::new(
            format!("symmetric_walk(d={dim})"),
            JumpSet::unit(dim)?,
            Domain::whole(dim),
            Arc::new(field),
            0.01,
            1.0,
            vec![0.0; dim],
        )
    }

    fn log_weight(&self) -> f64 {
        -((2 * self.dim) as f64).ln()
    }
}

impl RateField for SymmetricWalk {
    fn leading(&self, _s: f64, _x: &[f64], _eps: f64, out: &mut [f64]) {
        out.fill(self.log_weight());
    }

    fn limit(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(self.log_weight());
    }

    fn constants(&self, _region: &Region) -> FieldConstants {
        FieldConstants {
            theta: 0.0,
            vartheta: 0.0,
            k: 0.0,
            floor: 1.0 / (2 * self.dim) as f64,
        }
    }

    fn is_homogeneous(&self) -> bool {
        true
    }
}

/// External field `h(s) = offset + amplitude · sin(frequency · s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalField {
    pub offset: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl ExternalField {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(h: f64) -> Self {
        ExternalField {
            offset: h,
            amplitude: 0.0,
            frequency: 0.0,
        }
    }

    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        ExternalField {
            offset: 0.0,
            amplitude,
            frequency,
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        self.offset + self.amplitude * (self.frequency * s).sin()
    }

    fn sup_abs(&self) -> f64 {
        self.offset.abs() + self.amplitude.abs()
    }

    fn lipschitz(&self) -> f64 {
        (self.amplitude * self.frequency).abs()
    }

    fn is_constant(&self) -> bool {
        self.amplitude == 0.0 || self.frequency == 0.0
    }
}

/// Lazy single-spin-flip Glauber dynamics of the Curie–Weiss model, seen
/// through the magnetization `m ∈ [-1, 1]` of `N = 1/ε` spins.
///
/// Jumps are `{-2, 0, +2}` (in that order). With `a = β(m + h(s))`:
/// `g(+2) = (1-m)/2 · e^a / (2 cosh a)`, `g(-2) = (1+m)/2 · e^{-a} / (2 cosh a)`,
/// and the lazy step takes the remaining mass.
#[derive(Debug, Clone)]
pub struct CurieWeiss {
    beta: f64,
    field: ExternalField,
}

const CW_DOWN: usize = 0;
const CW_STAY: usize = 1;
const CW_UP: usize = 2;

impl CurieWeiss {
    pub fn new(beta: f64, field: ExternalField) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta must be finite and non-negative"));
        }
        if ![field.offset, field.amplitude, field.frequency].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("external field parameters must be finite"));
        }
        Ok(CurieWeiss { beta, field })
    }

    /// `ε = 1/lattice_size_hint`, `Λ = [-1, 1]`, `φ₀ = 0`, `T = 1`.
    pub fn spec(beta: f64, field: ExternalField, lattice_size_hint: usize) -> Result<ChainSpec> {
        if lattice_size_hint == 0 {
            return Err(Error::invalid("lattice size must be positive"));
        }
        let cw = CurieWeiss::new(beta, field)?;
        ChainSpec::new(
            format!("curie_weiss(beta={beta})"),
            JumpSet::new(1, &[vec![-2], vec![0], vec![2]])?,
            Domain::cube(vec![-1.0], vec![1.0])?,
            Arc::new(cw),
            1.0 / lattice_size_hint as f64,
            1.0,
            vec![0.0],
        )
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Jump probabilities `(down, stay, up)` without lattice masking.
    fn raw(&self, s: f64, m: f64) -> (f64, f64, f64) {
        let t = (self.beta * (m + self.field.at(s))).tanh();
        let up = (1.0 - m).max(0.0) * (1.0 + t) / 4.0;
        let down = (1.0 + m).max(0.0) * (1.0 - t) / 4.0;
        let stay = 0.5 * (1.0 + m * t);
        (down, stay, up)
    }

    fn write_log(out: &mut [f64], down: f64, stay: f64, up: f64) {
        out[CW_DOWN] = down.ln();
        out[CW_STAY] = stay.ln();
        out[CW_UP] = up.ln();
    }
}

impl RateField for CurieWeiss {
    fn leading(&self, s: f64, x: &[f64], eps: f64, out: &mut [f64]) {
        let m = x[0];
        let (mut down, mut stay, mut up) = self.raw(s, m);
        let tol = 1e-12;
        let up_ok = m + 2.0 * eps <= 1.0 + tol;
        let down_ok = m - 2.0 * eps >= -1.0 - tol;
        if !up_ok {
            up = 0.0;
        }
        if !down_ok {
            down = 0.0;
        }
        if !(up_ok && down_ok) {
            stay = 1.0 - up - down;
        }
        Self::write_log(out, down, stay, up);
    }

    fn limit(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let (down, stay, up) = self.raw(s, x[0]);
        Self::write_log(out, down, stay, up);
    }

    fn constants(&self, region: &Region) -> FieldConstants {
        let a = region[0].0.abs().max(region[0].1.abs()).min(1.0);
        let b = self.beta;
        let hmax = self.field.sup_abs();
        let t_max = (b * (1.0 + hmax)).tanh();
        FieldConstants {
            theta: 2.0 * b * self.field.lipschitz(),
            vartheta: (1.0 / (1.0 - a) + 2.0 * b).max((1.0 + b) / (1.0 - t_max)),
            k: 0.0,
            floor: ((1.0 - a) * (1.0 - t_max) / 4.0).min((1.0 - a * (b * (a + hmax)).tanh()) / 2.0),
        }
    }

    fn eps_max(&self) -> f64 {
        0.5
    }

    fn is_homogeneous(&self) -> bool {
        false
    }
}

impl CurieWeiss {
    pub fn is_time_homogeneous(&self) -> bool {
        self.field.is_constant()
    }
}

/// Walk on `ε Z` with `g_ε(±1) = (1 ± (drift + ε·correction)) / 2`.
///
/// Splits as `f⁽⁰⁾ = log((1 ± drift)/2)` plus a bounded `f⁽¹⁾`, which makes
/// it the reference model for `ε → 0` convergence of the Lagrangians.
#[derive(Debug, Clone)]
pub struct DriftWalk {
    drift: f64,
    correction: f64,
}

impl DriftWalk {
    pub fn new(drift: f64, correction: f64) -> Result<Self> {
        if !(drift.abs() < 1.0) || !correction.is_finite() {
            return Err(Error::invalid("drift walk needs |drift| < 1 and a finite correction"));
        }
        Ok(DriftWalk { drift, correction })
    }

    /// `Λ = R`, `φ₀ = 0`, `ε = 0.01` (or the validity bound if smaller), `T = 1`.
    pub fn spec(drift: f64, correction: f64) -> Result<ChainSpec> {
        let field = DriftWalk::new(drift, correction)?;
        let eps = 0.01_f64.min(field.eps_max());
        ChainSpec::new(
            format!("drift_walk(drift={drift},correction={correction})"),
            JumpSet::unit(1)?,
            Domain::whole(1),
            Arc::new(field),
            eps,
            1.0,
            vec![0.0],
        )
    }
}

impl RateField for DriftWalk {
    fn leading(&self, s: f64, x: &[f64], _eps: f64, out: &mut [f64]) {
        self.limit(s, x, out);
    }

    fn correction(&self, _s: f64, _x: &[f64], eps: f64, out: &mut [f64]) {
        let a = self.drift;
        let b = self.correction;
        for (slot, sign) in out.iter_mut().zip([-1.0, 1.0]) {
            *slot = if eps == 0.0 {
                sign * b / (1.0 + sign * a)
            } else {
                ((1.0 + sign * (a + eps * b)).ln() - (1.0 + sign * a).ln()) / eps
            };
        }
    }

    fn limit(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = ((1.0 - self.drift) / 2.0).ln();
        out[1] = ((1.0 + self.drift) / 2.0).ln();
    }

    fn constants(&self, _region: &Region) -> FieldConstants {
        let margin = 1.0 - self.drift.abs();
        FieldConstants {
            theta: 0.0,
            vartheta: 0.0,
            k: 2.0 * self.correction.abs() / margin,
            floor: margin / 4.0,
        }
    }

    fn eps_max(&self) -> f64 {
        if self.correction == 0.0 {
            f64::INFINITY
        } else {
            (1.0 - self.drift.abs()) / (2.0 * self.correction.abs())
        }
    }

    fn is_homogeneous(&self) -> bool {
        true
    }
}
