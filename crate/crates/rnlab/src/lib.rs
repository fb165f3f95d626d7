//! Numerical laboratory for C-semigroups of module homomorphisms on random
//! normed modules over finite probability spaces.
//!
//! The crate instantiates the discretized process module B^2 truncated to
//! [0, t_max] over a finite atomization of (Omega, F, P), builds C-semigroups
//! of multiplication operators, and verifies the identities of C-semigroup
//! theory (semigroup axioms, generator recovery, the locally a.s. bounded
//! battery, C-existence families and the associated abstract Cauchy problem)
//! as machine-checkable residuals with refinement studies.

pub mod calculus;
pub mod error;
pub mod grid;
pub mod measure;
pub mod operator;
pub mod process;
mod util;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use measure::{
    converges_in_prob, gauss_hermite_space, indicator_gt, make_space, rs_inf, rs_sup, ProbSpace,
    RScalar,
};
pub use operator::{MultOp, ModOp, OpHandle, Operator, OperatorFamily};
pub use process::{GraphElement, Process};
