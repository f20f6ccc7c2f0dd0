//! Adaptive approximation laboratory: refinement of triangular meshes,
//! Lagrange spaces, quasi-interpolation, smoothness functionals, greedy
//! partitions and an adaptive finite element loop for elliptic problems.

pub mod adaptive;
pub mod catalog;
pub mod checks;
pub mod elliptic;
pub mod error;
pub mod fe;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod quasi;
pub mod report;
pub mod smoothness;

pub use error::{ApxError, Result};
pub use fe::{FeFunction, FeSpace, ScalarField};
pub use mesh::{Forest, Gamma, Partition, Rule};
