//! Lagrange nodal sets with hanging-node constraints.
//!
//! Candidate points are identified combinatorially: vertices by id, edge
//! lattice points by (edge, rational position), interior points by element.
//! Points on a sub-edge of a coarse edge carrying a hanging midpoint are
//! re-expressed on the coarse edge, so both sides agree on their keys.

use crate::geometry::Point;
use crate::mesh::{Domain, ElemId, Forest, Gamma, VertId};
use crate::poly::{lagrange, lagrange_1d, NodeKind};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    V(VertId),
    /// Point on edge (a, b), a < b, at parameter num/den from a.
    E(VertId, VertId, i64, i64),
    I(u32, u32),
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn reduce(n: i64, d: i64) -> (i64, i64) {
    let g = gcd(n, d).max(1);
    (n / g, d / g)
}

/// Value of a local Lagrange node expressed through nodal-set members.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalNode {
    Node(usize),
    Constrained(Vec<(usize, f64)>),
}

impl LocalNode {
    pub fn expansion(&self) -> Vec<(usize, f64)> {
        match self {
            LocalNode::Node(i) => vec![(*i, 1.0)],
            LocalNode::Constrained(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodalSet {
    pub degree: usize,
    /// Members of the nodal set.
    pub points: Vec<Point>,
    /// Element positions having the node as a local Lagrange node.
    pub owners: Vec<Vec<usize>>,
    pub on_gamma: Vec<bool>,
    /// Per element, per local Lagrange node.
    pub local: Vec<Vec<LocalNode>>,
    /// Candidate points excluded from the nodal set (hanging).
    pub excluded: usize,
}

impl NodalSet {
    /// Nodal set of degree `m` over the given elements of `forest`.
    pub fn build(forest: &Forest, elems: &[ElemId], m: usize, gamma: &Gamma) -> Self {
        assert!(m >= 1);
        let d = forest.read();
        let basis = lagrange(m);
        let verts: Vec<[VertId; 3]> = elems.iter().map(|&e| d.element(e).vertices).collect();
        let used: HashSet<VertId> = verts.iter().flatten().copied().collect();
        let mut hang_of: HashMap<VertId, (VertId, VertId)> = HashMap::new();
        let mut coarse: HashSet<(VertId, VertId)> = HashSet::new();
        for v in &verts {
            for s in 0..3 {
                let (a, b) = (v[s], v[(s + 1) % 3]);
                if let Some(mid) = d.midpoint_of(a, b) {
                    if used.contains(&mid) {
                        let k = (a.min(b), a.max(b));
                        hang_of.insert(mid, k);
                        coarse.insert(k);
                    }
                }
            }
        }
        let mm = m as i64;
        let canon_vertex = |v: VertId| -> Key {
            match hang_of.get(&v) {
                Some(&(a, b)) => Key::E(a, b, 1, 2),
                None => Key::V(v),
            }
        };
        // Edge point between x and y, `s` steps of 1/m from x.
        let canon_edge = |x: VertId, y: VertId, s: i64| -> Key {
            let (lo, hi, t) = if x < y { (x, y, s) } else { (y, x, mm - s) };
            let sub = hang_of
                .get(&lo)
                .filter(|(a, b)| hi == *a || hi == *b)
                .or_else(|| hang_of.get(&hi).filter(|(a, b)| lo == *a || lo == *b));
            if let Some(&(a, b)) = sub {
                let pos = |v: VertId| -> i64 {
                    if v == a {
                        0
                    } else if v == b {
                        2 * mm
                    } else {
                        mm
                    }
                };
                let (pl, ph) = (pos(lo), pos(hi));
                let num = pl + t * (ph - pl) / mm;
                let (n, dd) = reduce(num, 2 * mm);
                return Key::E(a, b, n, dd);
            }
            let (n, dd) = reduce(t, mm);
            Key::E(lo, hi, n, dd)
        };

        let mut keys: Vec<Key> = Vec::new();
        let mut kpoints: Vec<Point> = Vec::new();
        let mut kowners: Vec<Vec<usize>> = Vec::new();
        let mut lookup: HashMap<Key, usize> = HashMap::new();
        let mut elem_cands: Vec<Vec<usize>> = Vec::with_capacity(elems.len());
        for (ei, &e) in elems.iter().enumerate() {
            let v = verts[ei];
            let c = d.coords(e);
            let mut list = Vec::with_capacity(basis.len());
            for (k, kind) in basis.kinds.iter().enumerate() {
                let key = match *kind {
                    NodeKind::Vertex(i) => canon_vertex(v[i]),
                    NodeKind::Edge { a, b, s } => canon_edge(v[a], v[b], s as i64),
                    NodeKind::Interior => Key::I(e, k as u32),
                };
                let id = *lookup.entry(key).or_insert_with(|| {
                    keys.push(key);
                    let l = basis.lattice[k];
                    let p = [
                        (l[0] as f64 * c[0][0] + l[1] as f64 * c[1][0] + l[2] as f64 * c[2][0]) / m as f64,
                        (l[0] as f64 * c[0][1] + l[1] as f64 * c[1][1] + l[2] as f64 * c[2][1]) / m as f64,
                    ];
                    kpoints.push(p);
                    kowners.push(Vec::new());
                    keys.len() - 1
                });
                kowners[id].push(ei);
                list.push(id);
            }
            elem_cands.push(list);
        }

        let is_nodal = |k: &Key| match *k {
            Key::E(a, b, n, dd) if coarse.contains(&(a, b)) => (n * mm) % dd == 0,
            _ => true,
        };
        let mut node_of = vec![usize::MAX; keys.len()];
        let mut points = Vec::new();
        let mut owners = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if is_nodal(k) {
                node_of[i] = points.len();
                points.push(kpoints[i]);
                owners.push(kowners[i].clone());
            }
        }
        let excluded = keys.len() - points.len();

        // Constraint expansions by 1D interpolation along the coarse edge.
        let mut memo: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        fn resolve(
            c: usize,
            keys: &[Key],
            node_of: &[usize],
            lookup: &HashMap<Key, usize>,
            memo: &mut HashMap<usize, Vec<(usize, f64)>>,
            canon: &dyn Fn(VertId) -> Key,
            m: usize,
        ) -> Vec<(usize, f64)> {
            if node_of[c] != usize::MAX {
                return vec![(node_of[c], 1.0)];
            }
            if let Some(v) = memo.get(&c) {
                return v.clone();
            }
            let Key::E(a, b, n, dd) = keys[c] else {
                unreachable!("only edge points can hang")
            };
            let t = n as f64 / dd as f64;
            let w = lagrange_1d(m, t);
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for (k, wk) in w.iter().enumerate() {
                if wk.abs() < 1e-15 {
                    continue;
                }
                let key = if k == 0 {
                    canon(a)
                } else if k == m {
                    canon(b)
                } else {
                    let (p, q) = reduce(k as i64, m as i64);
                    Key::E(a, b, p, q)
                };
                let mc = *lookup.get(&key).expect("coarse-edge node present");
                for (node, x) in resolve(mc, keys, node_of, lookup, memo, canon, m) {
                    *acc.entry(node).or_default() += wk * x;
                }
            }
            let mut out: Vec<(usize, f64)> = acc.into_iter().filter(|(_, x)| x.abs() > 1e-15).collect();
            out.sort_by_key(|x| x.0);
            memo.insert(c, out.clone());
            out
        }
        let local: Vec<Vec<LocalNode>> = elem_cands
            .iter()
            .map(|list| {
                list.iter()
                    .map(|&c| {
                        if node_of[c] != usize::MAX {
                            LocalNode::Node(node_of[c])
                        } else {
                            LocalNode::Constrained(resolve(c, &keys, &node_of, &lookup, &mut memo, &canon_vertex, m))
                        }
                    })
                    .collect()
            })
            .collect();
        let on_gamma = points.iter().map(|p| gamma.contains(&forest.domain, *p)).collect();
        NodalSet {
            degree: m,
            points,
            owners,
            on_gamma,
            local,
            excluded,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nodes whose basis function does not vanish on element `e`.
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.local[e]
            .iter()
            .flat_map(|n| n.expansion().into_iter().map(|x| x.0))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Elements on which each node's basis function does not vanish.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.len()];
        for e in 0..self.local.len() {
            for z in self.element_nodes(e) {
                s[z].push(e);
            }
        }
        s
    }
}

/// Helper for callers that only hold a domain reference.
pub fn on_gamma(gamma: &Gamma, domain: &Domain, p: Point) -> bool {
    gamma.contains(domain, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, Partition, Rule};

    #[test]
    fn two_triangle_counts() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        let f = p.forest();
        assert_eq!(NodalSet::build(f, p.active(), 1, &Gamma::None).len(), 4);
        assert_eq!(NodalSet::build(f, p.active(), 2, &Gamma::None).len(), 9);
        assert_eq!(NodalSet::build(f, p.active(), 3, &Gamma::None).len(), 16);
        let masked = NodalSet::build(f, p.active(), 2, &Gamma::All);
        assert_eq!(masked.on_gamma.iter().filter(|x| **x).count(), 8);
    }

    #[test]
    fn hanging_midpoint_excluded_for_linear() {
        let p = Partition::initial(unit_square(Rule::Red)).refine(&[0]).unwrap();
        assert_eq!(p.hanging_count(), 1);
        let n1 = NodalSet::build(p.forest(), p.active(), 1, &Gamma::None);
        // 4 corners + 2 boundary midpoints; the diagonal midpoint hangs.
        assert_eq!(n1.len(), 6);
        assert_eq!(n1.excluded, 1);
        let hang = [0.5, 0.5];
        assert!(!n1.points.contains(&hang));
        // Fine elements touching the hanging point see both coarse-edge endpoints.
        for (e, l) in n1.local.iter().enumerate() {
            assert_eq!(l.len(), 3);
            assert!((3..=4).contains(&n1.element_nodes(e).len()));
        }
        let n2 = NodalSet::build(p.forest(), p.active(), 2, &Gamma::None);
        assert!(n2.points.contains(&hang));
        // Quarter points on the diagonal are constrained.
        assert_eq!(n2.excluded, 2);
    }
}
