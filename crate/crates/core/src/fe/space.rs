//! Continuous Lagrange and discontinuous polynomial spaces on element sets.

use super::nodal::NodalSet;
use crate::geometry::{Affine, Point};
use crate::mesh::{locate::Locator, ElemId, Forest, Gamma, Partition};
use crate::poly::{lagrange, LagrangeBasis};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Continuous { m: usize },
    Discontinuous { d: usize },
}

#[derive(Debug)]
pub struct FeSpace {
    pub forest: Arc<Forest>,
    pub partition: Option<Partition>,
    pub ids: Vec<ElemId>,
    pub coords: Vec<[Point; 3]>,
    pub affine: Vec<Affine>,
    pub index: HashMap<ElemId, usize>,
    pub kind: SpaceKind,
    pub basis: Arc<LagrangeBasis>,
    pub gamma: Gamma,
    pub nodal: Option<NodalSet>,
    /// Dof of each nodal-set member (None when masked).
    pub node_dof: Vec<Option<usize>>,
    pub ndofs: usize,
    /// Physical location of each dof.
    pub dof_points: Vec<Point>,
    entry_ptr: Vec<usize>,
    entries: Vec<(usize, f64)>,
    ancestors: OnceLock<Arc<HashSet<ElemId>>>,
    locator: OnceLock<Locator>,
}

impl FeSpace {
    /// Continuous degree-`m` Lagrange space on a partition, zero on `gamma`.
    pub fn continuous(p: &Partition, m: usize, gamma: Gamma) -> Self {
        let mut s = Self::continuous_on(p.forest().clone(), p.active(), m, gamma);
        s.partition = Some(p.clone());
        s
    }

    /// Discontinuous degree-`d` space on a partition.
    pub fn discontinuous(p: &Partition, d: usize) -> Self {
        let mut s = Self::discontinuous_on(p.forest().clone(), p.active(), d);
        s.partition = Some(p.clone());
        s
    }

    /// Continuous space on an arbitrary (admissible) element set of the forest.
    pub fn continuous_on(forest: Arc<Forest>, ids: &[ElemId], m: usize, gamma: Gamma) -> Self {
        let nodal = NodalSet::build(&forest, ids, m, &gamma);
        let mut node_dof = vec![None; nodal.len()];
        let mut dof_points = Vec::new();
        for (i, p) in nodal.points.iter().enumerate() {
            if !nodal.on_gamma[i] {
                node_dof[i] = Some(dof_points.len());
                dof_points.push(*p);
            }
        }
        let mut entry_ptr = vec![0];
        let mut entries = Vec::new();
        for loc in &nodal.local {
            for n in loc {
                for (node, w) in n.expansion() {
                    if let Some(dof) = node_dof[node] {
                        entries.push((dof, w));
                    }
                }
                entry_ptr.push(entries.len());
            }
        }
        let ndofs = dof_points.len();
        let mut s = Self::skeleton(forest, ids, SpaceKind::Continuous { m }, gamma);
        s.nodal = Some(nodal);
        s.node_dof = node_dof;
        s.ndofs = ndofs;
        s.dof_points = dof_points;
        s.entry_ptr = entry_ptr;
        s.entries = entries;
        s
    }

    pub fn discontinuous_on(forest: Arc<Forest>, ids: &[ElemId], d: usize) -> Self {
        let mut s = Self::skeleton(forest, ids, SpaceKind::Discontinuous { d }, Gamma::None);
        let nloc = s.basis.len();
        s.ndofs = ids.len() * nloc;
        s.entry_ptr = (0..=s.ndofs).collect();
        s.entries = (0..s.ndofs).map(|i| (i, 1.0)).collect();
        s.dof_points = (0..ids.len())
            .flat_map(|e| {
                let a = s.affine[e];
                let nodes = s.basis.nodes.clone();
                nodes.into_iter().map(move |r| a.map(r))
            })
            .collect();
        s
    }

    fn skeleton(forest: Arc<Forest>, ids: &[ElemId], kind: SpaceKind, gamma: Gamma) -> Self {
        let coords: Vec<[Point; 3]> = {
            let d = forest.read();
            ids.iter().map(|&e| d.coords(e)).collect()
        };
        let affine = coords.iter().map(Affine::new).collect();
        let index = ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let degree = match kind {
            SpaceKind::Continuous { m } => m,
            SpaceKind::Discontinuous { d } => d,
        };
        FeSpace {
            forest,
            partition: None,
            ids: ids.to_vec(),
            coords,
            affine,
            index,
            kind,
            basis: lagrange(degree),
            gamma,
            nodal: None,
            node_dof: vec![],
            ndofs: 0,
            dof_points: vec![],
            entry_ptr: vec![],
            entries: vec![],
            ancestors: OnceLock::new(),
            locator: OnceLock::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn num_elements(&self) -> usize {
        self.ids.len()
    }

    pub fn nloc(&self) -> usize {
        self.basis.len()
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, SpaceKind::Continuous { .. })
    }

    /// Dof expansion of local node `k` of element `e`.
    pub fn expansion(&self, e: usize, k: usize) -> &[(usize, f64)] {
        let i = e * self.nloc() + k;
        &self.entries[self.entry_ptr[i]..self.entry_ptr[i + 1]]
    }

    /// Sorted unique dofs active on element `e`.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.nloc())
            .flat_map(|k| self.expansion(e, k).iter().map(|x| x.0))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Local nodal values on element `e` from global coefficients.
    pub fn local_values(&self, e: usize, coeffs: &[f64]) -> Vec<f64> {
        (0..self.nloc())
            .map(|k| self.expansion(e, k).iter().map(|(d, w)| w * coeffs[*d]).sum())
            .collect()
    }

    /// Strict ancestors of the space's elements, used to resolve integration cells.
    pub fn strict_ancestors(&self) -> Arc<HashSet<ElemId>> {
        self.ancestors
            .get_or_init(|| {
                let d = self.forest.read();
                let mut s = HashSet::new();
                for &e in &self.ids {
                    let mut x = e;
                    while let Some(p) = d.parent(x) {
                        if !s.insert(p) {
                            break;
                        }
                        x = p;
                    }
                }
                Arc::new(s)
            })
            .clone()
    }

    /// Element of the space that is an ancestor-or-self of forest element `cell`.
    pub fn owner_of(&self, cell: ElemId) -> Option<usize> {
        if let Some(&i) = self.index.get(&cell) {
            return Some(i);
        }
        let d = self.forest.read();
        let mut x = cell;
        while let Some(p) = d.parent(x) {
            if let Some(&i) = self.index.get(&p) {
                return Some(i);
            }
            x = p;
        }
        None
    }

    pub fn locate(&self, x: Point) -> Option<usize> {
        self.locator.get_or_init(|| Locator::new(&self.coords)).locate(x)
    }

    pub fn total_area(&self) -> f64 {
        self.affine.iter().map(|a| 0.5 * a.det.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, Rule};

    #[test]
    fn dimensions() {
        let p = Partition::initial(unit_square(Rule::Nvb)).uniform(2);
        let v = FeSpace::continuous(&p, 2, Gamma::None);
        assert_eq!(v.ndofs, v.nodal.as_ref().unwrap().len());
        let w = FeSpace::continuous(&p, 2, Gamma::All);
        let on = w.nodal.as_ref().unwrap().on_gamma.iter().filter(|x| **x).count();
        assert_eq!(w.ndofs, v.ndofs - on);
        let dg = FeSpace::discontinuous(&p, 1);
        assert_eq!(dg.ndofs, p.len() * 3);
        let d0 = FeSpace::discontinuous(&p, 0);
        assert_eq!(d0.ndofs, p.len());
    }
}
