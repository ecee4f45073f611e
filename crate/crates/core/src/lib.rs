//! Deep graph convolution from first principles.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every piece of the
//! numerical engine:
//!
//! - [`graph`]: validated CSR graphs, the renormalized propagation operator
//!   and its Laplacian, DropEdge sampling.
//! - [`dense`], [`tape`], [`optim`], [`linalg`]: dense `f64` matrices, a
//!   reverse-mode gradient tape with the operator set the models need, Adam
//!   with per-group L2 decay, and small dense eigen/singular value routines.
//! - [`models`]: GCN, GCN with residual, DropEdge-GCN, APPNP, GCNII and
//!   GCNII* forward passes; [`gradcheck`] compares their backward pass with
//!   finite differences.
//! - [`spectral`]: numerical checks of lazy-walk convergence, the Cheeger
//!   style bound and polynomial filter recovery.
//!
//! The `std` feature only switches on runtime SIMD detection in the GEMM
//! kernel; results are identical either way.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod dense;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod tape;

pub use dense::Matrix;
pub use graph::{CsrGraph, GraphError, PropKind, PropMatrix};
pub use models::{Model, ModelConfig, ModelKind, ModelParams};
pub use optim::{Adam, AdamConfig, Param, ParamGroup};
pub use tape::{Tape, TensorError, Var};
