//! Nonvariational finite element methods for fully nonlinear elliptic
//! equations `F(D²u) = f`, built on a finite element Hessian.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod fespace;
pub mod mesh;
pub mod nonlinear;
pub mod nvfem;
pub mod problems;
pub mod quadrature;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
