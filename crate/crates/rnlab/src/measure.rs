//! Finite probability spaces and L0 random scalars.
//!
//! A `ProbSpace` is an ordered list of atoms with strictly positive
//! probabilities summing to one; it is the discretized base (Omega, F, P).
//! An `RScalar` is an element of L0(F, R): one finite real per atom, with the
//! complete-lattice operations realized as per-atom max/min.

use crate::error::{Error, Result};
use crate::util::neumaier_sum;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub label: String,
    pub prob: f64,
}

#[derive(Debug, PartialEq)]
pub struct ProbSpace {
    atoms: Vec<Atom>,
}

impl ProbSpace {
    /// Validates and builds a finite probability space. Atom order is preserved.
    pub fn new(atoms: Vec<(String, f64)>) -> Result<Arc<Self>> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("space needs at least one atom".into()));
        }
        for (label, prob) in &atoms {
            if !(*prob > 0.0) || !prob.is_finite() {
                return Err(Error::NonPositiveProb { label: label.clone(), prob: *prob });
            }
        }
        let sum = neumaier_sum(atoms.iter().map(|(_, p)| *p));
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::ProbSumMismatch { sum, tol: PROB_SUM_TOL });
        }
        for (i, (label, _)) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Arc::new(ProbSpace {
            atoms: atoms.into_iter().map(|(label, prob)| Atom { label, prob }).collect(),
        }))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn prob(&self, atom: usize) -> f64 {
        self.atoms[atom].prob
    }

    pub fn label(&self, atom: usize) -> &str {
        &self.atoms[atom].label
    }

    pub fn labels(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.label.clone()).collect()
    }
}

/// Two space handles denote the same base when they are the same allocation
/// or structurally equal.
pub fn same_space(a: &Arc<ProbSpace>, b: &Arc<ProbSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `make_space` builds a space from (label, prob) pairs.
pub fn make_space(atoms: Vec<(String, f64)>) -> Result<Arc<ProbSpace>> {
    ProbSpace::new(atoms)
}

/// Atomization of a standard Gaussian by probabilists' Gauss-Hermite
/// nodes/weights: the returned `RScalar` holds the nodes (the values of Z per
/// atom) and the space probabilities are the weights. Moments E[Z^k] match the
/// standard normal exactly for k <= 2n-1.
pub fn gauss_hermite_space(n: usize) -> Result<(Arc<ProbSpace>, RScalar)> {
    if n == 0 {
        return Err(Error::InvalidArgument("gauss_hermite_space needs n >= 1".into()));
    }
    let (nodes, weights) = gauss_hermite_rule(n);
    let atoms: Vec<(String, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (format!("gh{i:02}"), w))
        .collect();
    let space = ProbSpace::new(atoms)?;
    let z = RScalar::new(space.clone(), nodes)?;
    Ok((space, z))
}

/// Golub-Welsch on the Jacobi matrix of the N(0,1) orthonormal recurrence
/// (zero diagonal, off-diagonal sqrt(k)). Nodes are sorted ascending and
/// symmetrized about zero; weights are renormalized to sum to one.
fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = eig.eigenvectors[(0, i)];
            (node, w * w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // Symmetry cleanup: pair +-x exactly, zero the middle node of odd rules.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total = neumaier_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

/// An element of L0(F, R) on a finite space: one finite real per atom.
#[derive(Debug, Clone)]
pub struct RScalar {
    space: Arc<ProbSpace>,
    values: Vec<f64>,
}

impl RScalar {
    pub fn new(space: Arc<ProbSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidArgument(format!(
                "value count {} does not match atom count {}",
                values.len(),
                space.len()
            )));
        }
        if let Some(atom) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { atom, index: 0 });
        }
        Ok(RScalar { space, values })
    }

    pub fn constant(space: Arc<ProbSpace>, value: f64) -> Self {
        let n = space.len();
        RScalar { space, values: vec![value; n] }
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, atom: usize) -> f64 {
        self.values[atom]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RScalar {
        RScalar {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &RScalar, f: impl Fn(f64, f64) -> f64) -> Result<RScalar> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(RScalar {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &RScalar) -> Result<RScalar> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RScalar) -> Result<RScalar> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RScalar) -> Result<RScalar> {
        self.zip(other, |a, b| a * b)
    }

    pub fn abs(&self) -> RScalar {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> RScalar {
        self.map(|v| c * v)
    }

    /// Expectation sum(p_i x_i) over atoms in a fixed order.
    pub fn expectation(&self) -> f64 {
        neumaier_sum(
            self.values
                .iter()
                .zip(self.space.atoms().iter())
                .map(|(&v, a)| v * a.prob),
        )
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-atom supremum of a nonempty finite family.
pub fn rs_sup(family: &[RScalar]) -> Result<RScalar> {
    fold_family(family, f64::max)
}

/// Per-atom infimum of a nonempty finite family.
pub fn rs_inf(family: &[RScalar]) -> Result<RScalar> {
    fold_family(family, f64::min)
}

fn fold_family(family: &[RScalar], op: impl Fn(f64, f64) -> f64 + Copy) -> Result<RScalar> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    let mut acc = first.clone();
    for item in &family[1..] {
        acc = acc.zip(item, op)?;
    }
    Ok(acc)
}

/// Per atom, 1 if f > g else 0 (the indicator I_{[f>g]}).
pub fn indicator_gt(f: &RScalar, g: &RScalar) -> Result<RScalar> {
    f.zip(g, |a, b| if a > b { 1.0 } else { 0.0 })
}

/// The (eps, lambda)-neighborhood test for convergence in probability.
///
/// Returns `(converged, tail_index)` where `tail_index` is the smallest index
/// from which every term satisfies P{ |seq_k - limit| < eps } > lambda. When
/// the final term already fails, the test reports `(false, seq.len())`.
pub fn converges_in_prob(
    seq: &[RScalar],
    limit: &RScalar,
    eps: f64,
    lam: f64,
) -> Result<(bool, usize)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if !(lam > 0.0 && lam < 1.0) {
        return Err(Error::InvalidArgument("lambda must lie in (0,1)".into()));
    }
    let mut tail = 0usize;
    for (k, term) in seq.iter().enumerate() {
        let dev = term.sub(limit)?.abs();
        let mass = neumaier_sum(
            dev.values()
                .iter()
                .zip(limit.space().atoms().iter())
                .filter(|(&d, _)| d < eps)
                .map(|(_, a)| a.prob),
        );
        if !(mass > lam) {
            tail = k + 1;
        }
    }
    Ok((tail < seq.len() || seq.is_empty(), tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom() -> Arc<ProbSpace> {
        make_space(vec![("w1".into(), 0.5), ("w2".into(), 0.5)]).unwrap()
    }

    #[test]
    fn make_space_point_mass() {
        let s = make_space(vec![("w1".into(), 1.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.label(0), "w1");
    }

    #[test]
    fn make_space_preserves_order() {
        let s = make_space(vec![("b".into(), 0.3), ("a".into(), 0.7)]).unwrap();
        assert_eq!(s.label(0), "b");
        assert_eq!(s.label(1), "a");
    }

    #[test]
    fn make_space_rejects_bad_sum() {
        let err = make_space(vec![("w1".into(), 0.3), ("w2".into(), 0.8)]).unwrap_err();
        assert!(matches!(err, Error::ProbSumMismatch { .. }));
    }

    #[test]
    fn make_space_rejects_nonpositive_prob() {
        let err = make_space(vec![("w1".into(), 0.0), ("w2".into(), 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveProb { .. }));
    }

    #[test]
    fn make_space_rejects_duplicate_labels() {
        let err = make_space(vec![("w".into(), 0.5), ("w".into(), 0.5)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateLabel(_)));
    }

    #[test]
    fn gauss_hermite_n1_is_mean_node() {
        let (space, z) = gauss_hermite_space(1).unwrap();
        assert_eq!(space.len(), 1);
        assert_eq!(z.value(0), 0.0);
        assert_eq!(space.prob(0), 1.0);
    }

    #[test]
    fn gauss_hermite_n2_is_symmetric_coin() {
        // Hand-derived from the moment system E[Z]=0, E[Z^2]=1, E[Z^3]=0.
        let (space, z) = gauss_hermite_space(2).unwrap();
        assert!((z.value(0) + 1.0).abs() < 1e-14);
        assert!((z.value(1) - 1.0).abs() < 1e-14);
        assert!((space.prob(0) - 0.5).abs() < 1e-14);
        assert!((space.prob(1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauss_hermite_n16_matches_normal_moments() {
        let (_, z) = gauss_hermite_space(16).unwrap();
        assert!(z.expectation().abs() < 1e-12);
        assert!((z.map(|v| v * v).expectation() - 1.0).abs() < 1e-10);
        assert!((z.map(|v| v.powi(4)).expectation() - 3.0).abs() < 1e-10);
        assert!(z.map(|v| v.powi(5)).expectation().abs() < 1e-9);
    }

    #[test]
    fn sup_singleton_and_coordinatewise() {
        let s = two_atom();
        let a = RScalar::new(s.clone(), vec![1.0, 5.0]).unwrap();
        let b = RScalar::new(s.clone(), vec![4.0, 2.0]).unwrap();
        let sup1 = rs_sup(std::slice::from_ref(&a)).unwrap();
        assert_eq!(sup1.values(), a.values());
        let sup = rs_sup(&[a.clone(), b]).unwrap();
        assert_eq!(sup.values(), &[4.0, 5.0]);
        let lattice = rs_sup(&[a.clone(), a.scale(-1.0)]).unwrap();
        assert_eq!(lattice.values(), a.abs().values());
    }

    #[test]
    fn sup_of_empty_family_errors() {
        assert!(matches!(rs_sup(&[]), Err(Error::EmptyFamily)));
    }

    #[test]
    fn sup_space_mismatch_errors() {
        let a = RScalar::constant(two_atom(), 1.0);
        let b = RScalar::constant(make_space(vec![("x".into(), 1.0)]).unwrap(), 1.0);
        assert!(matches!(rs_sup(&[a, b]), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn indicator_partition() {
        let s = two_atom();
        let f = RScalar::new(s.clone(), vec![2.0, 1.0]).unwrap();
        let g = RScalar::new(s.clone(), vec![0.0, 1.0]).unwrap();
        let gt = indicator_gt(&f, &g).unwrap();
        assert_eq!(gt.values(), &[1.0, 0.0]);
        let same = indicator_gt(&f, &f).unwrap();
        assert_eq!(same.values(), &[0.0, 0.0]);
        // I_{[f>g]} + I_{[f<=g]} = 1 per atom.
        let le = indicator_gt(&f, &g).unwrap().map(|v| 1.0 - v);
        let one = gt.add(&le).unwrap();
        assert_eq!(one.values(), &[1.0, 1.0]);
    }

    #[test]
    fn convergence_of_reciprocal_sequence() {
        let s = two_atom();
        let limit = RScalar::constant(s.clone(), 0.0);
        let seq: Vec<RScalar> =
            (1..=50).map(|k| RScalar::constant(s.clone(), 1.0 / k as f64)).collect();
        let (ok, tail) = converges_in_prob(&seq, &limit, 0.1, 0.5).unwrap();
        assert!(ok);
        assert_eq!(tail, 10); // ceil(1/eps): terms 1/1..1/10 fail the strict bound
    }

    #[test]
    fn convergence_identity_sequence_has_zero_tail() {
        let s = two_atom();
        let limit = RScalar::new(s.clone(), vec![3.0, -1.0]).unwrap();
        let seq = vec![limit.clone(); 5];
        let (ok, tail) = converges_in_prob(&seq, &limit, 1e-9, 0.99).unwrap();
        assert!(ok);
        assert_eq!(tail, 0);
    }

    #[test]
    fn convergence_fails_when_mass_insufficient() {
        // Mass within eps is 0.5 which is not > 0.6.
        let s = two_atom();
        let limit = RScalar::constant(s.clone(), 0.0);
        let seq = vec![RScalar::new(s.clone(), vec![0.0, 1.0]).unwrap(); 4];
        let (ok, tail) = converges_in_prob(&seq, &limit, 0.5, 0.6).unwrap();
        assert!(!ok);
        assert_eq!(tail, 4);
    }

    #[test]
    fn single_atom_convergence_is_scalar_convergence() {
        let s = make_space(vec![("w".into(), 1.0)]).unwrap();
        let limit = RScalar::constant(s.clone(), 2.0);
        let seq: Vec<RScalar> =
            (0..20).map(|k| RScalar::constant(s.clone(), 2.0 + 0.5f64.powi(k))).collect();
        let (ok, tail) = converges_in_prob(&seq, &limit, 1e-3, 0.5).unwrap();
        let scalar_tail = (0..20).rev().take_while(|&k| 0.5f64.powi(k) < 1e-3).count();
        assert!(ok);
        assert_eq!(tail, 20 - scalar_tail);
    }
}
