//! Module homomorphisms on the process module.
//!
//! Every operator variant sits behind the `Operator` trait so that checks and
//! suites are written once against trait objects. `MultOp` is the pointwise
//! multiplication operator with closed-form algebra (composition, inversion,
//! exponentiation, exact operator norm); `ModOp` wraps an arbitrary map with
//! probe-based norm estimation only. One-parameter families s -> V(s) sit
//! behind `OperatorFamily`, with a multiplicative fast path for per-atom
//! row evaluation.

use crate::error::{Error, Result};
use crate::grid::{same_grid, TimeGrid};
use crate::measure::{same_space, ProbSpace, RScalar};
use crate::process::Process;
use std::sync::Arc;

/// Exponents above this raise `Error::Overflow` instead of saturating.
pub const EXP_GUARD: f64 = 700.0;

/// A continuous module homomorphism on the process module.
pub trait Operator: Send + Sync {
    fn apply(&self, y: &Process) -> Result<Process>;

    /// Multiplication-operator view, when this operator is one.
    fn as_mult(&self) -> Option<&MultOp> {
        None
    }

    /// An a.s.-bound certificate eta with ||Ty|| <= eta * ||y||, when known.
    fn norm_certificate(&self) -> Option<RScalar> {
        self.as_mult().map(|m| m.op_norm())
    }
}

pub type OpHandle = Arc<dyn Operator>;

/// Pointwise multiplication by a tabulated m(t, omega).
#[derive(Debug, Clone)]
pub struct MultOp {
    space: Arc<ProbSpace>,
    grid: Arc<TimeGrid>,
    multiplier: Vec<f64>,
}

impl MultOp {
    pub fn new(space: Arc<ProbSpace>, grid: Arc<TimeGrid>, multiplier: Vec<f64>) -> Result<Self> {
        if multiplier.len() != space.len() * grid.len() {
            return Err(Error::InvalidArgument("multiplier does not match space x grid".into()));
        }
        if let Some(i) = multiplier.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { atom: i / grid.len(), index: i % grid.len() });
        }
        Ok(MultOp { space, grid, multiplier })
    }

    pub fn from_fn(
        space: Arc<ProbSpace>,
        grid: Arc<TimeGrid>,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let mut multiplier = Vec::with_capacity(space.len() * grid.len());
        for atom in 0..space.len() {
            for &t in grid.nodes() {
                multiplier.push(f(atom, t));
            }
        }
        MultOp::new(space, grid, multiplier)
    }

    /// Multiplier built from the atom value of an L0 scalar and the node time.
    pub fn from_tz(
        space: Arc<ProbSpace>,
        grid: Arc<TimeGrid>,
        z: &RScalar,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        MultOp::from_fn(space, grid, |atom, t| f(z.value(atom), t))
    }

    pub fn identity(space: Arc<ProbSpace>, grid: Arc<TimeGrid>) -> Self {
        let n = space.len() * grid.len();
        MultOp { space, grid, multiplier: vec![1.0; n] }
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    pub fn row(&self, atom: usize) -> &[f64] {
        let n = self.grid.len();
        &self.multiplier[atom * n..(atom + 1) * n]
    }

    fn check_compatible(&self, other: &MultOp) -> Result<()> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Composition of multiplication operators: pointwise multiplier product.
    pub fn compose(&self, other: &MultOp) -> Result<MultOp> {
        self.check_compatible(other)?;
        let multiplier = self
            .multiplier
            .iter()
            .zip(other.multiplier.iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier })
    }

    pub fn scale(&self, c: f64) -> MultOp {
        MultOp {
            space: self.space.clone(),
            grid: self.grid.clone(),
            multiplier: self.multiplier.iter().map(|&v| c * v).collect(),
        }
    }

    pub fn add_mult(&self, other: &MultOp) -> Result<MultOp> {
        self.check_compatible(other)?;
        let multiplier = self
            .multiplier
            .iter()
            .zip(other.multiplier.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier })
    }

    /// Pointwise exponential of `scale * m`; the operator-series exponential
    /// collapses to this for multiplication operators.
    pub fn exp(&self, scale: f64) -> Result<MultOp> {
        let n = self.grid.len();
        let mut multiplier = Vec::with_capacity(self.multiplier.len());
        for (i, &m) in self.multiplier.iter().enumerate() {
            let e = scale * m;
            if e > EXP_GUARD {
                return Err(Error::Overflow { atom: i / n, value: e, limit: EXP_GUARD });
            }
            multiplier.push(e.exp());
        }
        Ok(MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier })
    }

    /// Pointwise exponential with a per-atom L0 scale.
    pub fn exp_scaled(&self, scale: &RScalar) -> Result<MultOp> {
        if !same_space(&self.space, scale.space()) {
            return Err(Error::SpaceMismatch);
        }
        let n = self.grid.len();
        let mut multiplier = Vec::with_capacity(self.multiplier.len());
        for (i, &m) in self.multiplier.iter().enumerate() {
            let e = scale.value(i / n) * m;
            if e > EXP_GUARD {
                return Err(Error::Overflow { atom: i / n, value: e, limit: EXP_GUARD });
            }
            multiplier.push(e.exp());
        }
        Ok(MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier })
    }

    /// Per-atom module action: multiplier scaled by xi(omega).
    pub fn scalar_action(&self, xi: &RScalar) -> Result<MultOp> {
        if !same_space(&self.space, xi.space()) {
            return Err(Error::SpaceMismatch);
        }
        let n = self.grid.len();
        let multiplier = self
            .multiplier
            .iter()
            .enumerate()
            .map(|(i, &m)| xi.value(i / n) * m)
            .collect();
        Ok(MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier })
    }

    /// Pointwise reciprocal together with the per-atom condition
    /// max|m| * max|1/m|. Errors on any exactly-zero entry.
    pub fn invert(&self) -> Result<(MultOp, RScalar)> {
        let n = self.grid.len();
        if let Some(i) = self.multiplier.iter().position(|&m| m == 0.0) {
            return Err(Error::SingularMultiplier { atom: i / n, node: i % n });
        }
        let multiplier: Vec<f64> = self.multiplier.iter().map(|&m| 1.0 / m).collect();
        let cond: Vec<f64> = (0..self.space.len())
            .map(|atom| {
                let fwd = self.row(atom).iter().fold(0.0f64, |a, &m| a.max(m.abs()));
                let bwd = multiplier[atom * n..(atom + 1) * n]
                    .iter()
                    .fold(0.0f64, |a, &m| a.max(m.abs()));
                fwd * bwd
            })
            .collect();
        let condition = RScalar::new(self.space.clone(), cond)?;
        Ok((MultOp { space: self.space.clone(), grid: self.grid.clone(), multiplier }, condition))
    }

    /// Exact operator norm on the truncated module: per atom, max |m| over nodes.
    pub fn op_norm(&self) -> RScalar {
        let values = (0..self.space.len())
            .map(|atom| self.row(atom).iter().fold(0.0f64, |a, &m| a.max(m.abs())))
            .collect();
        RScalar::new(self.space.clone(), values).expect("finite multiplier")
    }
}

impl Operator for MultOp {
    fn apply(&self, y: &Process) -> Result<Process> {
        if !same_space(&self.space, y.space()) {
            return Err(Error::SpaceMismatch);
        }
        if !same_grid(&self.grid, y.grid()) {
            return Err(Error::GridMismatch);
        }
        let values = self.multiplier.iter().zip(y.values().iter()).map(|(&m, &v)| m * v).collect();
        Process::new(self.space.clone(), self.grid.clone(), values)
    }

    fn as_mult(&self) -> Option<&MultOp> {
        Some(self)
    }
}

/// A general module homomorphism given by an arbitrary map, with an optional
/// a.s.-bound certificate. Norms are only probe-estimated.
pub struct ModOp {
    map: Arc<dyn Fn(&Process) -> Result<Process> + Send + Sync>,
    certificate: Option<RScalar>,
}

impl ModOp {
    pub fn from_fn(map: impl Fn(&Process) -> Result<Process> + Send + Sync + 'static) -> Self {
        ModOp { map: Arc::new(map), certificate: None }
    }

    pub fn with_certificate(mut self, eta: RScalar) -> Self {
        self.certificate = Some(eta);
        self
    }
}

impl Operator for ModOp {
    fn apply(&self, y: &Process) -> Result<Process> {
        (self.map)(y)
    }

    fn norm_certificate(&self) -> Option<RScalar> {
        self.certificate.clone()
    }
}

/// Composition a after b as a trait object; collapses to multiplier product
/// when both sides are multiplication operators.
pub fn compose(a: &OpHandle, b: &OpHandle) -> OpHandle {
    if let (Some(ma), Some(mb)) = (a.as_mult(), b.as_mult()) {
        if let Ok(m) = ma.compose(mb) {
            return Arc::new(m);
        }
    }
    let a = a.clone();
    let b = b.clone();
    Arc::new(ModOp::from_fn(move |y| a.apply(&b.apply(y)?)))
}

/// Probe-based lower bound for the operator norm: probes are rescaled per
/// atom to unit norm, then the per-atom max of ||T probe|| is taken. Exact
/// for multiplication operators when the probes include a bump at the
/// argmax node of |m|.
pub fn op_norm_probe(op: &dyn Operator, probes: &[Process]) -> Result<RScalar> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let mut best: Option<RScalar> = None;
    for probe in probes {
        let norm = probe.l0_norm();
        let xi = norm.map(|n| if n > 0.0 { 1.0 / n } else { 0.0 });
        let scaled = probe.scalar_action(&xi)?;
        let image = op.apply(&scaled)?.l0_norm();
        best = Some(match best {
            None => image,
            Some(b) => b.zip(&image, f64::max)?,
        });
    }
    Ok(best.expect("nonempty probe set"))
}

/// A one-parameter family s -> V(s) of module homomorphisms.
pub trait OperatorFamily: Send + Sync {
    fn space(&self) -> &Arc<ProbSpace>;
    fn grid(&self) -> &Arc<TimeGrid>;
    fn at(&self, s: f64) -> Result<OpHandle>;

    /// Fills `buf` with the multiplier row of V(s) for one atom and reports
    /// `true`, when the family is multiplicative. Default: not available.
    fn mult_row(&self, _s: f64, _atom: usize, _buf: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}

/// The family s -> exp(s * rate) applied after a fixed multiplication factor:
/// multiplier exp(s * rate(t, omega)) * factor(t, omega).
pub struct ExpMultFamily {
    rate: MultOp,
    factor: MultOp,
}

impl ExpMultFamily {
    pub fn new(rate: MultOp, factor: MultOp) -> Result<Self> {
        rate.check_compatible(&factor)?;
        Ok(ExpMultFamily { rate, factor })
    }

    pub fn rate(&self) -> &MultOp {
        &self.rate
    }

    pub fn factor(&self) -> &MultOp {
        &self.factor
    }

    pub fn mult_at(&self, s: f64) -> Result<MultOp> {
        self.rate.exp(s)?.compose(&self.factor)
    }
}

impl OperatorFamily for ExpMultFamily {
    fn space(&self) -> &Arc<ProbSpace> {
        self.rate.space()
    }

    fn grid(&self) -> &Arc<TimeGrid> {
        self.rate.grid()
    }

    fn at(&self, s: f64) -> Result<OpHandle> {
        Ok(Arc::new(self.mult_at(s)?))
    }

    fn mult_row(&self, s: f64, atom: usize, buf: &mut [f64]) -> Result<bool> {
        let rate = self.rate.row(atom);
        let factor = self.factor.row(atom);
        for ((out, &r), &f) in buf.iter_mut().zip(rate.iter()).zip(factor.iter()) {
            let e = s * r;
            if e > EXP_GUARD {
                return Err(Error::Overflow { atom, value: e, limit: EXP_GUARD });
            }
            *out = e.exp() * f;
        }
        Ok(true)
    }
}

/// The constant family s -> T.
pub struct ConstantFamily {
    op: OpHandle,
    space: Arc<ProbSpace>,
    grid: Arc<TimeGrid>,
}

impl ConstantFamily {
    pub fn new(op: OpHandle, space: Arc<ProbSpace>, grid: Arc<TimeGrid>) -> Self {
        ConstantFamily { op, space, grid }
    }
}

impl OperatorFamily for ConstantFamily {
    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn at(&self, _s: f64) -> Result<OpHandle> {
        Ok(self.op.clone())
    }

    fn mult_row(&self, _s: f64, atom: usize, buf: &mut [f64]) -> Result<bool> {
        match self.op.as_mult() {
            Some(m) => {
                buf.copy_from_slice(m.row(atom));
                Ok(true)
            }
            None => Ok(false),
        }
    }
}
