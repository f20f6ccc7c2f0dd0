//! Lagrange spaces, quadrature-based assembly, projections and best approximation.

pub mod assemble;
pub mod best;
pub mod field;
pub mod integrate;
pub mod nodal;
pub mod project;
pub mod space;

pub use assemble::{assemble_gram, assemble_load, Form};
pub use best::{best_approx_error, best_h1, default_p0, BestApprox};
pub use field::{Analytic, FeFunction, FnField, ScalarField};
pub use integrate::{default_order, error_norm, NormKind};
pub use nodal::NodalSet;
pub use project::{project_poly_edge, project_poly_element, EdgePoly, LocalPoly};
pub use space::{FeSpace, SpaceKind};
