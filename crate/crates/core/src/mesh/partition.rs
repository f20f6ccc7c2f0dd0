//! Partitions: immutable sets of active leaves over a shared refinement forest.

use super::forest::{ElemId, Forest, ForestData, Rule, VertId};
use crate::error::{ApxError, Result};
use crate::geometry::{area, Point};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, OnceLock};

/// Flat snapshot of the active elements of a partition.
#[derive(Debug)]
pub struct ActiveMesh {
    pub ids: Vec<ElemId>,
    pub verts: Vec<[VertId; 3]>,
    pub coords: Vec<[Point; 3]>,
    pub gens: Vec<u32>,
    pub index: HashMap<ElemId, usize>,
}

impl ActiveMesh {
    pub fn from_ids(forest: &Forest, ids: &[ElemId]) -> Self {
        let d = forest.read();
        let verts = ids.iter().map(|&e| d.element(e).vertices).collect();
        let coords = ids.iter().map(|&e| d.coords(e)).collect();
        let gens = ids.iter().map(|&e| d.generation(e)).collect();
        let index = ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        ActiveMesh {
            ids: ids.to_vec(),
            verts,
            coords,
            gens,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Counts recorded by one refine/complete call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletionStep {
    pub marked: usize,
    pub before: usize,
    pub after: usize,
}

/// Running record of marked sets versus partition growth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompletionLedger {
    pub initial: usize,
    pub marked: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl CompletionLedger {
    pub fn new(initial: usize) -> Self {
        CompletionLedger {
            initial,
            marked: vec![],
            sizes: vec![],
        }
    }

    pub fn record(&mut self, step: CompletionStep) {
        self.marked.push(step.marked);
        self.sizes.push(step.after);
    }

    pub fn total_marked(&self) -> usize {
        self.marked.iter().sum()
    }

    /// (#P_k - #P_0) / max(1, sum of marked counts).
    pub fn ratio(&self) -> f64 {
        let last = self.sizes.last().copied().unwrap_or(self.initial);
        (last as f64 - self.initial as f64) / (self.total_marked().max(1) as f64)
    }
}

#[derive(Debug)]
struct Inner {
    forest: Arc<Forest>,
    active: Vec<ElemId>,
    conforming: bool,
    mesh: OnceLock<Arc<ActiveMesh>>,
    strict_ancestors: OnceLock<Arc<HashSet<ElemId>>>,
}

#[derive(Debug, Clone)]
pub struct Partition(Arc<Inner>);

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0.forest, &other.0.forest) && self.0.active == other.0.active
    }
}

impl Partition {
    /// The initial triangulation of a forest.
    pub fn initial(forest: Arc<Forest>) -> Self {
        let active = forest.roots().to_vec();
        Self::from_active(forest, active)
    }

    /// Partition from an explicit leaf set (sorted internally; conformity audited).
    pub fn from_active(forest: Arc<Forest>, mut active: Vec<ElemId>) -> Self {
        active.sort_unstable();
        active.dedup();
        let conforming = {
            let d = forest.read();
            count_hanging(&d, &active) == 0
        };
        Partition(Arc::new(Inner {
            forest,
            active,
            conforming,
            mesh: OnceLock::new(),
            strict_ancestors: OnceLock::new(),
        }))
    }

    pub fn forest(&self) -> &Arc<Forest> {
        &self.0.forest
    }

    pub fn rule(&self) -> Rule {
        self.0.forest.rule
    }

    pub fn active(&self) -> &[ElemId] {
        &self.0.active
    }

    pub fn len(&self) -> usize {
        self.0.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.active.is_empty()
    }

    pub fn is_conforming(&self) -> bool {
        self.0.conforming
    }

    pub fn contains(&self, e: ElemId) -> bool {
        self.0.active.binary_search(&e).is_ok()
    }

    pub fn same_forest(&self, other: &Partition) -> bool {
        Arc::ptr_eq(&self.0.forest, &other.0.forest)
    }

    pub fn mesh(&self) -> Arc<ActiveMesh> {
        self.0
            .mesh
            .get_or_init(|| Arc::new(ActiveMesh::from_ids(&self.0.forest, &self.0.active)))
            .clone()
    }

    /// Elements of the forest that are strict ancestors of some active element.
    pub fn strict_ancestors(&self) -> Arc<HashSet<ElemId>> {
        self.0
            .strict_ancestors
            .get_or_init(|| {
                let d = self.0.forest.read();
                let mut s = HashSet::new();
                for &e in &self.0.active {
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

    pub fn total_area(&self) -> f64 {
        self.mesh().coords.iter().map(area).sum()
    }

    pub fn max_generation(&self) -> u32 {
        self.mesh().gens.iter().copied().max().unwrap_or(0)
    }

    pub fn lambda(&self) -> f64 {
        self.rule().lambda()
    }

    fn check_marked(&self, marked: &[ElemId]) -> Result<()> {
        for &e in marked {
            if !self.contains(e) {
                return Err(ApxError::UnknownElement(e));
            }
        }
        Ok(())
    }

    /// Refines every marked element at least once, then restores admissibility:
    /// conformity for NVB, one hanging vertex per edge and generation gap <= 1 for RED.
    pub fn refine(&self, marked: &[ElemId]) -> Result<Partition> {
        Ok(self.refine_counted(marked)?.0)
    }

    /// As `refine`, returning the ledger step.
    pub fn refine_counted(&self, marked: &[ElemId]) -> Result<(Partition, CompletionStep)> {
        self.check_marked(marked)?;
        if marked.is_empty() {
            let step = CompletionStep {
                marked: 0,
                before: self.len(),
                after: self.len(),
            };
            return Ok((self.clone(), step));
        }
        let active = closure(&self.0.forest, &self.0.active, marked);
        let p = Partition::from_active(self.0.forest.clone(), active);
        let step = CompletionStep {
            marked: marked.len(),
            before: self.len(),
            after: p.len(),
        };
        Ok((p, step))
    }

    /// Refinement under an explicitly requested rule (must match the forest's rule).
    pub fn refine_with(&self, marked: &[ElemId], rule: Rule) -> Result<Partition> {
        if rule != self.rule() {
            return Err(ApxError::RuleMismatch {
                expected: self.rule(),
                got: rule,
            });
        }
        self.refine(marked)
    }

    /// Newest-vertex-bisection completion: bisects the marked elements and
    /// everything needed to remove hanging vertices.
    pub fn complete(&self, marked: &[ElemId]) -> Result<(Partition, CompletionStep)> {
        if self.rule() != Rule::Nvb {
            return Err(ApxError::RuleMismatch {
                expected: Rule::Nvb,
                got: self.rule(),
            });
        }
        if !self.is_conforming() {
            return Err(ApxError::NonConforming);
        }
        self.refine_counted(marked)
    }

    /// One full generation: every active element refined once.
    pub fn uniform_refine(&self) -> Partition {
        let all = self.0.active.clone();
        self.refine(&all).expect("active elements are valid marks")
    }

    /// Uniform refinement applied `k` times.
    pub fn uniform(&self, k: usize) -> Partition {
        let mut p = self.clone();
        for _ in 0..k {
            p = p.uniform_refine();
        }
        p
    }

    /// Common refinement of two partitions over the same forest.
    pub fn overlay(&self, other: &Partition) -> Result<Partition> {
        if !self.same_forest(other) {
            return Err(ApxError::MismatchedRoots);
        }
        let pa = self.strict_ancestors();
        let qa = other.strict_ancestors();
        let mut leaves: Vec<ElemId> = self
            .active()
            .iter()
            .filter(|e| !qa.contains(e))
            .chain(other.active().iter().filter(|e| !pa.contains(e)))
            .copied()
            .collect();
        leaves.sort_unstable();
        leaves.dedup();
        let active = closure(&self.0.forest, &leaves, &[]);
        Ok(Partition::from_active(self.0.forest.clone(), active))
    }

    /// Audit: every edge is shared by at most two elements with matching
    /// endpoints and no vertex lies inside another element's edge.
    pub fn conformity_audit(&self) -> bool {
        let mesh = self.mesh();
        let mut edges: HashMap<(VertId, VertId), usize> = HashMap::new();
        for v in &mesh.verts {
            for s in 0..3 {
                let a = v[s];
                let b = v[(s + 1) % 3];
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if edges.values().any(|&c| c > 2) {
            return false;
        }
        let d = self.0.forest.read();
        count_hanging(&d, &self.0.active) == 0
    }

    /// Number of hanging vertices (vertices interior to some active element edge).
    pub fn hanging_count(&self) -> usize {
        let d = self.0.forest.read();
        count_hanging(&d, &self.0.active)
    }
}

fn count_hanging(d: &ForestData, active: &[ElemId]) -> usize {
    let used: HashSet<VertId> = active.iter().flat_map(|&e| d.element(e).vertices).collect();
    let mut hanging = HashSet::new();
    for &e in active {
        let v = d.element(e).vertices;
        for s in 0..3 {
            if let Some(m) = d.midpoint_of(v[s], v[(s + 1) % 3]) {
                if used.contains(&m) {
                    hanging.insert(m);
                }
            }
        }
    }
    hanging.len()
}

/// Work-queue refinement closure.
struct Closure<'a> {
    d: &'a mut ForestData,
    rule: Rule,
    active: HashSet<ElemId>,
    used: HashMap<VertId, u32>,
    edges: HashMap<(VertId, VertId), Vec<ElemId>>,
    queue: Vec<ElemId>,
}

fn ekey(a: VertId, b: VertId) -> (VertId, VertId) {
    (a.min(b), a.max(b))
}

impl Closure<'_> {
    fn add(&mut self, e: ElemId) {
        let v = self.d.element(e).vertices;
        self.active.insert(e);
        for s in 0..3 {
            let c = self.used.entry(v[s]).or_default();
            *c += 1;
            if *c == 1 {
                self.vertex_appeared(v[s]);
            }
            self.edges.entry(ekey(v[s], v[(s + 1) % 3])).or_default().push(e);
        }
        self.queue.push(e);
    }

    fn remove(&mut self, e: ElemId) {
        let v = self.d.element(e).vertices;
        self.active.remove(&e);
        for s in 0..3 {
            if let Some(c) = self.used.get_mut(&v[s]) {
                *c -= 1;
                if *c == 0 {
                    self.used.remove(&v[s]);
                }
            }
            if let Some(list) = self.edges.get_mut(&ekey(v[s], v[(s + 1) % 3])) {
                list.retain(|&x| x != e);
            }
        }
    }

    fn is_used(&self, v: VertId) -> bool {
        self.used.contains_key(&v)
    }

    /// A new vertex can invalidate elements owning the edge it bisects
    /// (and, for RED, the coarse edge containing that edge).
    fn vertex_appeared(&mut self, m: VertId) {
        if let Some((a, b)) = self.d.bisected_edge(m) {
            if let Some(list) = self.edges.get(&(a, b)) {
                self.queue.extend(list.iter().copied());
            }
            if self.rule == Rule::Red {
                for (x, y) in [(a, b), (b, a)] {
                    if let Some((p, q)) = self.d.bisected_edge(x) {
                        if y == p || y == q {
                            if let Some(list) = self.edges.get(&(p, q)) {
                                self.queue.extend(list.iter().copied());
                            }
                        }
                    }
                }
            }
        }
    }

    fn needs_refinement(&self, e: ElemId) -> bool {
        let v = self.d.element(e).vertices;
        for s in 0..3 {
            let (a, b) = (v[s], v[(s + 1) % 3]);
            if let Some(m) = self.d.midpoint_of(a, b) {
                if self.is_used(m) {
                    match self.rule {
                        Rule::Nvb => return true,
                        Rule::Red => {
                            let deep = |x: VertId| self.d.midpoint_of(x, m).is_some_and(|q| self.is_used(q));
                            if deep(a) || deep(b) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn split(&mut self, e: ElemId) {
        self.remove(e);
        let kids = self.d.refine_element(e, self.rule);
        for c in kids {
            self.add(c);
        }
    }

    fn run(&mut self) {
        while let Some(e) = self.queue.pop() {
            if self.active.contains(&e) && self.needs_refinement(e) {
                self.split(e);
            }
        }
    }
}

fn closure(forest: &Forest, active: &[ElemId], marked: &[ElemId]) -> Vec<ElemId> {
    let mut d = forest.write();
    let mut c = Closure {
        d: &mut d,
        rule: forest.rule,
        active: HashSet::with_capacity(active.len() * 2),
        used: HashMap::new(),
        edges: HashMap::new(),
        queue: Vec::new(),
    };
    for &e in active {
        c.add(e);
    }
    c.queue.clear();
    c.queue.extend(active.iter().copied());
    let mut sorted = marked.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for e in sorted {
        if c.active.contains(&e) {
            c.split(e);
        }
    }
    c.run();
    let mut out: Vec<ElemId> = c.active.into_iter().collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::domain::{l_shape, unit_square};

    #[test]
    fn empty_marking_is_identity() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        assert_eq!(p.refine(&[]).unwrap(), p);
    }

    #[test]
    fn uniform_counts() {
        let p = Partition::initial(unit_square(Rule::Red));
        assert_eq!(p.uniform_refine().len(), 8);
        let q = Partition::initial(unit_square(Rule::Nvb));
        assert_eq!(q.uniform_refine().len(), 4);
        let mut r = q.clone();
        for j in 1..=6 {
            r = r.uniform_refine();
            assert_eq!(r.len(), 2 << j);
            assert!(r.conformity_audit());
            let m = r.mesh();
            let max_area = m.coords.iter().map(area).fold(0.0, f64::max);
            assert!((max_area - 0.5 / (1u64 << j) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn nvb_completion_is_conforming() {
        let mut p = Partition::initial(l_shape(Rule::Nvb));
        for _ in 0..12 {
            let m = p.mesh();
            // Mark the element touching the reentrant corner with largest id.
            let e = m
                .ids
                .iter()
                .zip(&m.coords)
                .filter(|(_, c)| c.iter().any(|x| x[0] == 0.0 && x[1] == 0.0))
                .map(|(e, _)| *e)
                .max()
                .unwrap();
            p = p.refine(&[e]).unwrap();
            assert!(p.conformity_audit());
            assert!((p.total_area() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn red_refinement_keeps_gap_one() {
        let mut p = Partition::initial(unit_square(Rule::Red));
        for _ in 0..5 {
            let m = p.mesh();
            let e = m
                .ids
                .iter()
                .zip(&m.coords)
                .filter(|(_, c)| c.iter().any(|x| x[0] == 0.0 && x[1] == 0.0))
                .map(|(e, _)| *e)
                .min()
                .unwrap();
            p = p.refine(&[e]).unwrap();
            assert!((p.total_area() - 1.0).abs() < 1e-12);
        }
        assert!(!p.is_conforming());
        // Generation gap across any edge is at most one.
        let d = p.forest().read();
        let mesh = p.mesh();
        let used: HashSet<VertId> = mesh.verts.iter().flatten().copied().collect();
        for v in &mesh.verts {
            for s in 0..3 {
                if let Some(m) = d.midpoint_of(v[s], v[(s + 1) % 3]) {
                    if used.contains(&m) {
                        for x in [v[s], v[(s + 1) % 3]] {
                            assert!(d.midpoint_of(x, m).map_or(true, |q| !used.contains(&q)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn overlay_laws() {
        let p0 = Partition::initial(unit_square(Rule::Nvb));
        let p = p0.refine(&[0]).unwrap().uniform_refine();
        let q = p0.refine(&[1]).unwrap();
        assert_eq!(p.overlay(&p).unwrap(), p);
        assert_eq!(p0.overlay(&q).unwrap(), q);
        let pq = p.overlay(&q).unwrap();
        assert_eq!(pq, q.overlay(&p).unwrap());
        assert!(pq.len() <= p.len() + q.len() - p0.len());
        let other = Partition::initial(unit_square(Rule::Nvb));
        assert!(matches!(p.overlay(&other), Err(ApxError::MismatchedRoots)));
    }

    #[test]
    fn errors() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        assert!(matches!(p.refine(&[99]), Err(ApxError::UnknownElement(99))));
        assert!(p.refine_with(&[0], Rule::Red).is_err());
        let r = Partition::initial(unit_square(Rule::Red));
        assert!(r.complete(&[0]).is_err());
    }
}
