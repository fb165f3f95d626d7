//! Time grids on [0, t_max] with quadrature weights split at t = 1.
//!
//! Every grid carries a node at exactly 1.0 and its quadrature panels never
//! straddle that point, so integrands with a jump at 1 (the I_[0,1] multiplier
//! region boundary) are integrated side by side. The stored value at the split
//! node always represents the closed-interval [0,1] side; the quadrature of
//! the (1, t_max] side never reads it. With at least five nodes after the
//! split the leading right panel is integrated from a quadratic extrapolation
//! through the first, third and fifth right nodes, which keeps composite
//! Simpson order and makes piecewise-constant jumps at 1 integrate exactly.

use crate::error::{Error, Result};
use std::sync::Arc;

#[derive(Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    split: usize,
}

impl TimeGrid {
    /// Builds a grid from explicit nodes; computes and validates quadrature weights.
    pub fn new(nodes: Vec<f64>) -> Result<Arc<Self>> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid("need at least 3 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid("first node must be 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        let last = *nodes.last().unwrap();
        if !(last > 1.0) {
            return Err(Error::InvalidGrid("t_max must exceed 1".into()));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("nodes must be finite".into()));
        }
        let split = nodes
            .iter()
            .position(|&t| t == 1.0)
            .ok_or_else(|| Error::InvalidGrid("1.0 must be a node".into()))?;
        let weights = quadrature_weights(&nodes, split)?;
        Ok(Arc::new(TimeGrid { nodes, weights, split }))
    }

    /// Uniform spacing on each side of 1: `left_panels` panels on [0,1] and
    /// `right_nodes` nodes strictly inside (1, t_max].
    pub fn uniform(t_max: f64, left_panels: usize, right_nodes: usize) -> Result<Arc<Self>> {
        if left_panels < 2 {
            return Err(Error::InvalidGrid("need at least 2 panels on [0,1]".into()));
        }
        if right_nodes < 5 {
            return Err(Error::InvalidGrid("need at least 5 nodes after t=1".into()));
        }
        if !(t_max > 1.0) {
            return Err(Error::InvalidGrid("t_max must exceed 1".into()));
        }
        let mut nodes = Vec::with_capacity(left_panels + 1 + right_nodes);
        for j in 0..=left_panels {
            nodes.push(j as f64 / left_panels as f64);
        }
        for j in 1..=right_nodes {
            let t = 1.0 + (t_max - 1.0) * (j as f64 / right_nodes as f64);
            nodes.push(t);
        }
        *nodes.last_mut().unwrap() = t_max;
        Self::new(nodes)
    }

    /// Uniform grid hitting a total node budget, with panels split between the
    /// two sides proportionally to their lengths.
    pub fn with_node_budget(t_max: f64, n_nodes: usize) -> Result<Arc<Self>> {
        if n_nodes < 16 {
            return Err(Error::InvalidGrid("node budget below 16".into()));
        }
        let mut left_panels = ((n_nodes - 1) as f64 / t_max).round() as usize;
        left_panels = left_panels.clamp(2, n_nodes - 6);
        if left_panels % 2 == 1 {
            left_panels += 1;
        }
        let right_nodes = n_nodes - 1 - left_panels;
        Self::uniform(t_max, left_panels, right_nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Quadrature weights: integral of a tabulated function over [0, t_max]
    /// is the weighted sum of its node values. All weights are positive.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the node at exactly 1.0.
    pub fn split(&self) -> usize {
        self.split
    }

    pub fn t_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
}

pub fn same_grid(a: &Arc<TimeGrid>, b: &Arc<TimeGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Weights of the quadratic through three abscissae integrated over [alpha, beta].
fn quad_weights_over(x: [f64; 3], alpha: f64, beta: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    let m3 = (beta * beta * beta - alpha * alpha * alpha) / 3.0;
    let m2 = (beta * beta - alpha * alpha) / 2.0;
    let m1 = beta - alpha;
    for i in 0..3 {
        let (a, b) = match i {
            0 => (x[1], x[2]),
            1 => (x[0], x[2]),
            _ => (x[0], x[1]),
        };
        let den = (x[i] - a) * (x[i] - b);
        w[i] = (m3 - (a + b) * m2 + a * b * m1) / den;
    }
    w
}

/// Composite pairwise-quadratic weights over a node chain; a trailing odd
/// panel is integrated from the quadratic through the last three nodes.
fn composite_weights(nodes: &[f64], w: &mut [f64]) {
    let m = nodes.len() - 1;
    if m == 0 {
        return;
    }
    if nodes.len() == 2 {
        let h = nodes[1] - nodes[0];
        w[0] += 0.5 * h;
        w[1] += 0.5 * h;
        return;
    }
    let mut i = 0;
    while i + 2 <= m {
        let ws = quad_weights_over([nodes[i], nodes[i + 1], nodes[i + 2]], nodes[i], nodes[i + 2]);
        w[i] += ws[0];
        w[i + 1] += ws[1];
        w[i + 2] += ws[2];
        i += 2;
    }
    if i < m {
        let ws =
            quad_weights_over([nodes[m - 2], nodes[m - 1], nodes[m]], nodes[m - 1], nodes[m]);
        w[m - 2] += ws[0];
        w[m - 1] += ws[1];
        w[m] += ws[2];
    }
}

fn quadrature_weights(nodes: &[f64], split: usize) -> Result<Vec<f64>> {
    let mut w = vec![0.0; nodes.len()];
    composite_weights(&nodes[..=split], &mut w[..=split]);
    let right = &nodes[split + 1..];
    if right.len() >= 5 {
        // Leading panel (1, right[0]] from the extrapolated quadratic.
        let ws = quad_weights_over([right[0], right[2], right[4]], 1.0, right[0]);
        w[split + 1] += ws[0];
        w[split + 3] += ws[1];
        w[split + 5] += ws[2];
        composite_weights(right, &mut w[split + 1..]);
    } else if !right.is_empty() {
        // Short tails fall back to a trapezoid chain that reads the split node.
        let mut prev = 1.0;
        let mut prev_idx = split;
        for (k, &t) in right.iter().enumerate() {
            let h = t - prev;
            w[prev_idx] += 0.5 * h;
            w[split + 1 + k] += 0.5 * h;
            prev = t;
            prev_idx = split + 1 + k;
        }
    }
    if let Some(i) = w.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidGrid(format!(
            "quadrature weight at node {i} (t={}) is not positive",
            nodes[i]
        )));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::neumaier_sum;

    #[test]
    fn uniform_grid_weights_sum_to_t_max() {
        let g = TimeGrid::uniform(2.0, 64, 63).unwrap();
        let total = neumaier_sum(g.weights().iter().copied());
        assert!((total - 2.0).abs() < 1e-12);
        assert_eq!(g.node(g.split()), 1.0);
    }

    #[test]
    fn node_budget_is_exact_for_flagship_shape() {
        let g = TimeGrid::with_node_budget(2.0, 512).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.node(g.split()), 1.0);
        assert_eq!(g.t_max(), 2.0);
    }

    #[test]
    fn quadrature_is_exact_on_quadratics_per_side() {
        let g = TimeGrid::uniform(2.0, 32, 31).unwrap();
        // f(t) = t^2 on the whole of [0,2]: integral 8/3.
        let total = neumaier_sum(
            g.nodes().iter().zip(g.weights().iter()).map(|(&t, &w)| w * t * t),
        );
        assert!((total - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jump_at_one_integrates_exactly() {
        let g = TimeGrid::uniform(2.0, 32, 31).unwrap();
        // I_[0,1](t) with the closed-interval value at the split node.
        let total = neumaier_sum(g.nodes().iter().zip(g.weights().iter()).map(
            |(&t, &w)| {
                if t <= 1.0 {
                    w
                } else {
                    0.0
                }
            },
        ));
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_grid_without_split_node() {
        let err = TimeGrid::new(vec![0.0, 0.5, 0.99, 1.5, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
    }

    #[test]
    fn rejects_non_increasing_nodes() {
        let err = TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
    }

    #[test]
    fn all_weights_positive_on_odd_sides() {
        let g = TimeGrid::uniform(2.0, 33, 32).unwrap();
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let total = neumaier_sum(g.weights().iter().copied());
        assert!((total - 2.0).abs() < 1e-12);
    }
}
