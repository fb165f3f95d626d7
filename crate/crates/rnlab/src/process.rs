//! Elements of the discretized process module B^2 truncated to [0, t_max].
//!
//! A `Process` tabulates one real per (atom, time node); the L0-norm is the
//! per-atom square root of the split-at-1 quadrature of the squared values.

use crate::error::{Error, Result};
use crate::grid::{same_grid, TimeGrid};
use crate::measure::{same_space, ProbSpace, RScalar};
use crate::util::neumaier_sum;
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Process {
    space: Arc<ProbSpace>,
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl Process {
    pub fn new(space: Arc<ProbSpace>, grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() * grid.len() {
            return Err(Error::InvalidArgument(format!(
                "value count {} does not match {} atoms x {} nodes",
                values.len(),
                space.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { atom: i / grid.len(), index: i % grid.len() });
        }
        Ok(Process { space, grid, values })
    }

    pub fn from_fn(
        space: Arc<ProbSpace>,
        grid: Arc<TimeGrid>,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(space.len() * grid.len());
        for atom in 0..space.len() {
            for &t in grid.nodes() {
                values.push(f(atom, t));
            }
        }
        Process::new(space, grid, values)
    }

    pub fn zero(space: Arc<ProbSpace>, grid: Arc<TimeGrid>) -> Self {
        let n = space.len() * grid.len();
        Process { space, grid, values: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, atom: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[atom * n..(atom + 1) * n]
    }

    pub fn check_compatible(&self, other: &Process) -> Result<()> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn zip(&self, other: &Process, f: impl Fn(f64, f64) -> f64) -> Result<Process> {
        self.check_compatible(other)?;
        let values =
            self.values.iter().zip(other.values.iter()).map(|(&a, &b)| f(a, b)).collect();
        Ok(Process { space: self.space.clone(), grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &Process) -> Result<Process> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Process) -> Result<Process> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Process {
        Process {
            space: self.space.clone(),
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }

    /// Module action of an L0 scalar: per-(atom, node) product.
    pub fn scalar_action(&self, xi: &RScalar) -> Result<Process> {
        if !same_space(&self.space, xi.space()) {
            return Err(Error::SpaceMismatch);
        }
        let n = self.grid.len();
        let mut values = self.values.clone();
        for (atom, chunk) in values.chunks_mut(n).enumerate() {
            let c = xi.value(atom);
            for v in chunk {
                *v *= c;
            }
        }
        Ok(Process { space: self.space.clone(), grid: self.grid.clone(), values })
    }

    /// The L0-norm: per atom, sqrt of the quadrature of the squared row.
    /// Rows are rescaled by their max magnitude so that squares cannot overflow.
    pub fn l0_norm(&self) -> RScalar {
        let w = self.grid.weights();
        let values: Vec<f64> = (0..self.space.len())
            .map(|atom| {
                let row = self.row(atom);
                let m = row.iter().fold(0.0f64, |acc, &y| acc.max(y.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                let s = neumaier_sum(row.iter().zip(w.iter()).map(|(&y, &wj)| {
                    let r = y / m;
                    wj * r * r
                }));
                m * s.max(0.0).sqrt()
            })
            .collect();
        RScalar::new(self.space.clone(), values).expect("norm values are finite")
    }
}

/// Writes a process as CSV: rows are time nodes, columns are atoms.
pub fn write_process_csv<W: Write>(p: &Process, out: &mut W) -> Result<()> {
    write!(out, "t")?;
    for atom in p.space().atoms() {
        write!(out, ",{}", atom.label)?;
    }
    writeln!(out)?;
    for (j, &t) in p.grid().nodes().iter().enumerate() {
        write!(out, "{t}")?;
        for atom in 0..p.space().len() {
            write!(out, ",{}", p.row(atom)[j])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Per-atom relative residual: ||diff|| / max(1, max_i ||refs_i||).
/// The unit guard keeps residuals absolute near zero and relative at scale.
pub fn relative_residual(diff: &Process, refs: &[&Process]) -> RScalar {
    let num = diff.l0_norm();
    let mut scale = vec![1.0f64; diff.space().len()];
    for r in refs {
        for (slot, &n) in scale.iter_mut().zip(r.l0_norm().values()) {
            *slot = slot.max(n);
        }
    }
    let values = num.values().iter().zip(scale.iter()).map(|(&n, &s)| n / s).collect();
    RScalar::new(diff.space().clone(), values).expect("finite residual")
}

/// A pair (z, Az): an element of the graph-norm module [D(A)].
#[derive(Debug, Clone)]
pub struct GraphElement {
    z: Process,
    az: Process,
}

impl GraphElement {
    pub fn new(z: Process, az: Process) -> Result<Self> {
        z.check_compatible(&az)?;
        Ok(GraphElement { z, az })
    }

    pub fn z(&self) -> &Process {
        &self.z
    }

    pub fn az(&self) -> &Process {
        &self.az
    }

    /// Graph L0-norm: ||z|| + ||Az|| per atom.
    pub fn graph_norm(&self) -> RScalar {
        self.z.l0_norm().add(&self.az.l0_norm()).expect("components share a space")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::make_space;

    fn setup() -> (Arc<ProbSpace>, Arc<TimeGrid>) {
        let space = make_space(vec![("w1".into(), 0.5), ("w2".into(), 0.5)]).unwrap();
        let grid = TimeGrid::uniform(2.0, 64, 63).unwrap();
        (space, grid)
    }

    #[test]
    fn norm_of_unit_indicator_is_one() {
        let (space, grid) = setup();
        let y = Process::from_fn(space, grid, |_, t| if t <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        for &n in y.l0_norm().values() {
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_of_ramp_is_inv_sqrt3() {
        let (space, grid) = setup();
        let y = Process::from_fn(space, grid, |_, t| if t <= 1.0 { t } else { 0.0 }).unwrap();
        let expect = (1.0f64 / 3.0).sqrt();
        for &n in y.l0_norm().values() {
            assert!((n - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_of_zero_is_zero() {
        let (space, grid) = setup();
        let y = Process::zero(space, grid);
        assert!(y.l0_norm().values().iter().all(|&n| n == 0.0));
    }

    #[test]
    fn scalar_action_identity_and_zero() {
        let (space, grid) = setup();
        let y = Process::from_fn(space.clone(), grid, |a, t| (a as f64 + 1.0) * t.sin()).unwrap();
        let one = RScalar::constant(space.clone(), 1.0);
        assert_eq!(y.scalar_action(&one).unwrap().values(), y.values());
        let zero = RScalar::constant(space, 0.0);
        assert!(y.scalar_action(&zero).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_action_scales_norm_exactly() {
        let (space, grid) = setup();
        let y = Process::from_fn(space.clone(), grid, |a, t| (t - a as f64).cos()).unwrap();
        let xi = RScalar::new(space, vec![-2.5, 0.75]).unwrap();
        let lhs = y.scalar_action(&xi).unwrap().l0_norm();
        let rhs = y.l0_norm().mul(&xi.abs()).unwrap();
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn graph_norm_decomposes() {
        let (space, grid) = setup();
        let z =
            Process::from_fn(space.clone(), grid.clone(), |_, t| if t <= 1.0 { 1.0 } else { 0.0 })
                .unwrap();
        let az = Process::zero(space, grid);
        let g = GraphElement::new(z.clone(), az).unwrap();
        for (a, b) in g.graph_norm().values().iter().zip(z.l0_norm().values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_atom_graph_norm_example() {
        // z_t = 1 on [0,1] with Az_t = t there: graph norm 1 + 1/sqrt(3).
        let space = make_space(vec![("w".into(), 1.0)]).unwrap();
        let grid = TimeGrid::uniform(2.0, 64, 63).unwrap();
        let z = Process::from_fn(space.clone(), grid.clone(), |_, t| {
            if t <= 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let az =
            Process::from_fn(space, grid, |_, t| if t <= 1.0 { t } else { 0.0 }).unwrap();
        let g = GraphElement::new(z, az).unwrap();
        let expect = 1.0 + (1.0f64 / 3.0).sqrt();
        assert!((g.graph_norm().value(0) - expect).abs() < 1e-14);
    }

    #[test]
    fn mismatched_grid_rejected() {
        let (space, grid) = setup();
        let other = TimeGrid::uniform(2.0, 32, 31).unwrap();
        let a = Process::zero(space.clone(), grid);
        let b = Process::zero(space, other);
        assert!(matches!(a.add(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn rejects_non_finite_values() {
        let (space, grid) = setup();
        let n = space.len() * grid.len();
        let mut vals = vec![0.0; n];
        vals[3] = f64::NAN;
        assert!(matches!(Process::new(space, grid, vals), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn csv_round_shape() {
        let (space, grid) = setup();
        let y = Process::from_fn(space, grid, |a, t| a as f64 + t).unwrap();
        let mut buf = Vec::new();
        write_process_csv(&y, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,w1,w2");
        assert_eq!(lines.count(), y.grid().len());
    }
}
