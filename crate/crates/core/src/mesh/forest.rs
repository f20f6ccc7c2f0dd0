//! Append-only refinement forest shared by all partitions derived from one initial mesh.

use super::domain::Domain;
use crate::geometry::{dist, midpoint, signed_area, Point};
use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::collections::HashMap;

pub type ElemId = u32;
pub type VertId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Newest vertex bisection: two children of half the area.
    Nvb,
    /// Red refinement: four similar children of a quarter of the area.
    Red,
}

impl Rule {
    pub fn children(self) -> usize {
        match self {
            Rule::Nvb => 2,
            Rule::Red => 4,
        }
    }

    /// Diameter reduction factor per generation.
    pub fn lambda(self) -> f64 {
        match self {
            Rule::Nvb => std::f64::consts::SQRT_2,
            Rule::Red => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Nvb => "nvb",
            Rule::Red => "red",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElementRecord {
    /// Counter-clockwise; slot 0 is opposite the refinement edge.
    pub vertices: [VertId; 3],
    pub generation: u32,
    pub parent: Option<ElemId>,
    pub first_child: Option<ElemId>,
    pub root: ElemId,
}

#[derive(Debug, Default)]
pub struct ForestData {
    pub vertices: Vec<Point>,
    pub elements: Vec<ElementRecord>,
    midpoints: HashMap<(VertId, VertId), VertId>,
    /// For a midpoint vertex, the edge it bisects.
    bisected: HashMap<VertId, (VertId, VertId)>,
}

fn key(a: VertId, b: VertId) -> (VertId, VertId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ForestData {
    pub fn element(&self, e: ElemId) -> &ElementRecord {
        &self.elements[e as usize]
    }

    pub fn coords(&self, e: ElemId) -> [Point; 3] {
        let v = self.elements[e as usize].vertices;
        [
            self.vertices[v[0] as usize],
            self.vertices[v[1] as usize],
            self.vertices[v[2] as usize],
        ]
    }

    pub fn vertex(&self, v: VertId) -> Point {
        self.vertices[v as usize]
    }

    pub fn midpoint_of(&self, a: VertId, b: VertId) -> Option<VertId> {
        self.midpoints.get(&key(a, b)).copied()
    }

    /// The edge bisected by vertex `m`, if `m` was created as a midpoint.
    pub fn bisected_edge(&self, m: VertId) -> Option<(VertId, VertId)> {
        self.bisected.get(&m).copied()
    }

    pub fn children(&self, e: ElemId, rule: Rule) -> Option<std::ops::Range<ElemId>> {
        self.elements[e as usize]
            .first_child
            .map(|c| c..c + rule.children() as ElemId)
    }

    pub fn generation(&self, e: ElemId) -> u32 {
        self.elements[e as usize].generation
    }

    pub fn parent(&self, e: ElemId) -> Option<ElemId> {
        self.elements[e as usize].parent
    }

    /// Ancestor-or-self of `e` at generation `g` (requires g <= generation(e)).
    pub fn ancestor_at(&self, mut e: ElemId, g: u32) -> ElemId {
        while self.generation(e) > g {
            e = self.parent(e).expect("ancestor above root");
        }
        e
    }

    /// Whether `a` is an ancestor-or-self of `e`.
    pub fn is_ancestor_or_self(&self, a: ElemId, e: ElemId) -> bool {
        let ga = self.generation(a);
        self.generation(e) >= ga && self.ancestor_at(e, ga) == a
    }

    fn mid(&mut self, a: VertId, b: VertId) -> VertId {
        let k = key(a, b);
        if let Some(&m) = self.midpoints.get(&k) {
            return m;
        }
        let p = midpoint(self.vertices[k.0 as usize], self.vertices[k.1 as usize]);
        let id = self.vertices.len() as VertId;
        self.vertices.push(p);
        self.midpoints.insert(k, id);
        self.bisected.insert(id, k);
        id
    }

    pub(crate) fn register_midpoint(&mut self, a: VertId, b: VertId, m: VertId) {
        self.midpoints.insert(key(a, b), m);
        self.bisected.insert(m, key(a, b));
    }

    /// Children of `e`, created on first request.
    pub fn refine_element(&mut self, e: ElemId, rule: Rule) -> std::ops::Range<ElemId> {
        if let Some(r) = self.children(e, rule) {
            return r;
        }
        let rec = self.elements[e as usize].clone();
        let [v0, v1, v2] = rec.vertices;
        let kids: Vec<[VertId; 3]> = match rule {
            Rule::Nvb => {
                let m = self.mid(v1, v2);
                vec![[m, v0, v1], [m, v2, v0]]
            }
            Rule::Red => {
                let m12 = self.mid(v1, v2);
                let m20 = self.mid(v2, v0);
                let m01 = self.mid(v0, v1);
                vec![[v0, m01, m20], [m01, v1, m12], [m20, m12, v2], [m12, m20, m01]]
            }
        };
        let first = self.elements.len() as ElemId;
        for vs in kids {
            self.elements.push(ElementRecord {
                vertices: vs,
                generation: rec.generation + 1,
                parent: Some(e),
                first_child: None,
                root: rec.root,
            });
        }
        self.elements[e as usize].first_child = Some(first);
        first..first + rule.children() as ElemId
    }

    /// Generation-`g` descendants of `e` (ancestor if `e` is finer), in tree order.
    pub fn descendants_at(&mut self, e: ElemId, g: u32, rule: Rule) -> Vec<ElemId> {
        let ge = self.generation(e);
        if ge >= g {
            return vec![self.ancestor_at(e, g)];
        }
        let mut out = Vec::new();
        let mut stack = vec![e];
        while let Some(x) = stack.pop() {
            if self.generation(x) == g {
                out.push(x);
            } else {
                let r = self.refine_element(x, rule);
                for c in r.rev() {
                    stack.push(c);
                }
            }
        }
        out
    }
}

/// Refinement forest: the initial triangulation and every element ever created from it.
#[derive(Debug)]
pub struct Forest {
    pub rule: Rule,
    pub domain: Domain,
    roots: Vec<ElemId>,
    data: RwLock<ForestData>,
}

impl Forest {
    /// Builds a forest from an initial triangulation. Triangles are oriented
    /// counter-clockwise and rotated so the refinement edge is the longest edge,
    /// ties broken by the lexicographically lowest vertex-id pair.
    pub fn new(domain_name: &str, vertices: Vec<Point>, triangles: Vec<[VertId; 3]>, rule: Rule) -> Self {
        let mut elements = Vec::with_capacity(triangles.len());
        for (i, t) in triangles.iter().enumerate() {
            let mut t = *t;
            let c = [
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            ];
            if signed_area(&c) < 0.0 {
                t.swap(1, 2);
            }
            let slot = refinement_slot(&vertices, &t);
            let t = [t[slot], t[(slot + 1) % 3], t[(slot + 2) % 3]];
            elements.push(ElementRecord {
                vertices: t,
                generation: 0,
                parent: None,
                first_child: None,
                root: i as ElemId,
            });
        }
        let roots: Vec<ElemId> = (0..elements.len() as ElemId).collect();
        let domain = Domain::from_triangulation(domain_name, &vertices, &elements);
        Forest {
            rule,
            domain,
            roots,
            data: RwLock::new(ForestData {
                vertices,
                elements,
                midpoints: HashMap::new(),
                bisected: HashMap::new(),
            }),
        }
    }

    /// Rebuilds a forest from stored records (used by the mesh loader).
    pub(crate) fn from_records(
        domain_name: &str,
        vertices: Vec<Point>,
        elements: Vec<ElementRecord>,
        rule: Rule,
    ) -> Self {
        let roots: Vec<ElemId> = elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.parent.is_none())
            .map(|(i, _)| i as ElemId)
            .collect();
        let root_records: Vec<ElementRecord> = roots.iter().map(|&r| elements[r as usize].clone()).collect();
        let domain = Domain::from_triangulation(domain_name, &vertices, &root_records);
        let mut data = ForestData {
            vertices,
            elements,
            midpoints: HashMap::new(),
            bisected: HashMap::new(),
        };
        let n = data.elements.len();
        for e in 0..n {
            if let Some(c) = data.elements[e].first_child {
                let [v0, v1, v2] = data.elements[e].vertices;
                match rule {
                    Rule::Nvb => {
                        let m = data.elements[c as usize].vertices[0];
                        data.register_midpoint(v1, v2, m);
                    }
                    Rule::Red => {
                        let c0 = data.elements[c as usize].vertices;
                        let c1 = data.elements[c as usize + 1].vertices;
                        data.register_midpoint(v0, v1, c0[1]);
                        data.register_midpoint(v2, v0, c0[2]);
                        data.register_midpoint(v1, v2, c1[2]);
                    }
                }
            }
        }
        Forest {
            rule,
            domain,
            roots,
            data: RwLock::new(data),
        }
    }

    pub fn roots(&self) -> &[ElemId] {
        &self.roots
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ForestData> {
        self.data.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, ForestData> {
        self.data.write()
    }

    pub fn num_elements(&self) -> usize {
        self.read().elements.len()
    }

    pub fn coords(&self, e: ElemId) -> [Point; 3] {
        self.read().coords(e)
    }

    /// Children of `e`, created if needed.
    pub fn children(&self, e: ElemId) -> Vec<ElemId> {
        if let Some(r) = self.read().children(e, self.rule) {
            return r.collect();
        }
        self.write().refine_element(e, self.rule).collect()
    }

    pub fn descendants_at(&self, e: ElemId, g: u32) -> Vec<ElemId> {
        {
            // Fast path when the subtree already exists.
            let d = self.read();
            if let Some(v) = existing_descendants(&d, e, g, self.rule) {
                return v;
            }
        }
        self.write().descendants_at(e, g, self.rule)
    }
}

fn existing_descendants(d: &ForestData, e: ElemId, g: u32, rule: Rule) -> Option<Vec<ElemId>> {
    if d.generation(e) >= g {
        return Some(vec![d.ancestor_at(e, g)]);
    }
    let mut out = Vec::new();
    let mut stack = vec![e];
    while let Some(x) = stack.pop() {
        if d.generation(x) == g {
            out.push(x);
        } else {
            let r = d.children(x, rule)?;
            for c in r.rev() {
                stack.push(c);
            }
        }
    }
    Some(out)
}

/// Slot of the vertex opposite the longest edge (ties: lowest sorted vertex-id pair).
fn refinement_slot(vertices: &[Point], t: &[VertId; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    let mut best_pair = (VertId::MAX, VertId::MAX);
    for s in 0..3 {
        let a = t[(s + 1) % 3];
        let b = t[(s + 2) % 3];
        let len = dist(vertices[a as usize], vertices[b as usize]);
        let pair = key(a, b);
        let tol = 1e-12 * len.max(best_len).max(1e-300);
        if len > best_len + tol || ((len - best_len).abs() <= tol && pair < best_pair) {
            best = s;
            best_len = len;
            best_pair = pair;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::area;

    fn square(rule: Rule) -> Forest {
        Forest::new(
            "unit_square",
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            rule,
        )
    }

    #[test]
    fn refinement_edge_is_longest() {
        let f = square(Rule::Nvb);
        let d = f.read();
        for e in f.roots() {
            let v = d.element(*e).vertices;
            assert!(v[1..].contains(&0) && v[1..].contains(&2));
        }
    }

    #[test]
    fn nvb_children_halve_area() {
        let f = square(Rule::Nvb);
        let kids = f.children(0);
        assert_eq!(kids.len(), 2);
        let pa = area(&f.coords(0));
        for k in kids {
            let c = f.coords(k);
            assert!(signed_area(&c) > 0.0);
            assert_eq!(area(&c), pa / 2.0);
        }
    }

    #[test]
    fn red_children_quarter_area() {
        let f = square(Rule::Red);
        let kids = f.children(1);
        assert_eq!(kids.len(), 4);
        let pa = area(&f.coords(1));
        for k in kids {
            let c = f.coords(k);
            assert!(signed_area(&c) > 0.0);
            assert_eq!(area(&c), pa / 4.0);
        }
    }

    #[test]
    fn children_memoized() {
        let f = square(Rule::Nvb);
        assert_eq!(f.children(0), f.children(0));
        let d = f.descendants_at(0, 3);
        assert_eq!(d.len(), 8);
        assert_eq!(f.descendants_at(0, 3), d);
    }
}
