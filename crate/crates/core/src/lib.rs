//! Level-set decay estimates, plus a radial test bed for integral functionals
//! whose coefficient degenerates as |u| grows.
//!
//! The crate is split along the lines of the computation:
//!
//! * [`exponents`]: Sobolev/Hölder conjugates and the map from problem data
//!   `(n, p, alpha, r)` to decay exponents and regularity regimes.
//! * [`lemma`]: the decay lemma itself. Case classification, explicit
//!   envelope constants, envelope evaluation and checks on tabulated
//!   functions, plus the fast geometric recursion.
//! * [`counterexamples`]: closed-form functions that satisfy the doubling
//!   inequality but not the full hypothesis.
//! * [`marcinkiewicz`]: distribution functions, weak-norm estimates and
//!   tail fits.
//! * [`variational`]: a radial discretization of the functional, a descent
//!   minimizer and the regularity experiment.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counterexamples;
pub mod error;
pub mod exponents;
pub mod lemma;
pub mod marcinkiewicz;
pub mod variational;

pub use error::{Error, Result};
