//! Two-layer dual finite volume element schemes of orders 2, 3 and 4 on
//! triangular meshes, for scalar elliptic problems and plane linear
//! elasticity, with a stability analyzer and verification tools.

// `!(x > 0.0)` is used on purpose so that NaN counts as failing.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod conservation;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod refelem;
pub mod sparse;
pub mod solver;
pub mod stability;
pub mod verify;
