//! Partitions of polygonal domains, refinement rules, completion and overlay.

pub mod admissibility;
pub mod domain;
pub mod forest;
pub mod io;
pub mod locate;
pub mod partition;

pub use admissibility::{admissibility_report, support_extension, support_extensions, AdmissibilityReport};
pub use domain::{by_name, l_shape, unit_square, Domain, Gamma};
pub use forest::{ElemId, Forest, Rule, VertId};
pub use io::{mesh_io, mesh_load, to_text};
pub use partition::{ActiveMesh, CompletionLedger, CompletionStep, Partition};
