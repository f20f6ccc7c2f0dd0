//! Support extensions and admissibility constants of a partition.

use super::{ElemId, Gamma, Partition};
use crate::error::{ApxError, Result};
use crate::fe::nodal::NodalSet;
use crate::geometry::diameter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport {
    /// Largest number of elements in the support of one nodal basis function.
    pub finite_support_c: usize,
    /// Largest diam σ / diam τ over related pairs σ ∼ τ.
    pub gradedness_ratio: f64,
    /// Largest number of elements related to one element.
    pub local_finiteness: usize,
}

/// For every element position, the sorted positions of related elements
/// (sharing the support of some nodal basis function).
pub fn relations(nodal: &NodalSet, n_elems: usize) -> Vec<Vec<usize>> {
    let supports = nodal.supports();
    let mut rel: Vec<Vec<usize>> = vec![Vec::new(); n_elems];
    for s in &supports {
        for &t in s {
            rel[t].extend_from_slice(s);
        }
    }
    for r in rel.iter_mut() {
        r.sort_unstable();
        r.dedup();
    }
    rel
}

/// Elements σ of `p` with σ ∼ τ for the degree-`m` nodal basis.
pub fn support_extension(p: &Partition, tau: ElemId, m: usize) -> Result<Vec<ElemId>> {
    let pos = p.active().binary_search(&tau).map_err(|_| ApxError::UnknownElement(tau))?;
    let nodal = NodalSet::build(p.forest(), p.active(), m, &Gamma::None);
    let supports = nodal.supports();
    let mut out: Vec<ElemId> = supports
        .iter()
        .filter(|s| s.contains(&pos))
        .flat_map(|s| s.iter().map(|&i| p.active()[i]))
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Support extensions of every element of `p`, as forest ids, in active order.
pub fn support_extensions(p: &Partition, m: usize) -> Vec<Vec<ElemId>> {
    let nodal = NodalSet::build(p.forest(), p.active(), m, &Gamma::None);
    relations(&nodal, p.len())
        .into_iter()
        .map(|r| r.into_iter().map(|i| p.active()[i]).collect())
        .collect()
}

/// Exact admissibility maxima over `p` for the degree-`m` nodal set.
pub fn admissibility_report(p: &Partition, m: usize) -> AdmissibilityReport {
    let nodal = NodalSet::build(p.forest(), p.active(), m, &Gamma::None);
    let supports = nodal.supports();
    let rel = relations(&nodal, p.len());
    let diams: Vec<f64> = {
        let d = p.forest().read();
        p.active().iter().map(|&e| diameter(&d.coords(e))).collect()
    };
    let mut grad = 1.0f64;
    for (t, r) in rel.iter().enumerate() {
        for &s in r {
            grad = grad.max(diams[s] / diams[t]);
        }
    }
    AdmissibilityReport {
        finite_support_c: supports.iter().map(|s| s.len()).max().unwrap_or(1).max(1),
        gradedness_ratio: grad,
        local_finiteness: rel.iter().map(|r| r.len()).max().unwrap_or(1).max(1),
    }
}
