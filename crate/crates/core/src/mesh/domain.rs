//! Polygonal domains described by their initial triangulation.

use super::forest::{ElementRecord, Forest, Rule, VertId};
use crate::geometry::{area, contains, on_segment, segments_cross, Point};
use std::collections::HashMap;
use std::sync::Arc;

/// A boundary face of the initial triangulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub vertices: (VertId, VertId),
    pub a: Point,
    pub b: Point,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    /// Boundary faces of the initial triangulation, sorted by vertex-id pair.
    pub faces: Vec<Face>,
    pub root_triangles: Vec<[Point; 3]>,
    pub area: f64,
    pub diameter: f64,
}

impl Domain {
    pub(crate) fn from_triangulation(name: &str, vertices: &[Point], roots: &[ElementRecord]) -> Self {
        let mut count: HashMap<(VertId, VertId), usize> = HashMap::new();
        for r in roots {
            for s in 0..3 {
                let a = r.vertices[s];
                let b = r.vertices[(s + 1) % 3];
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut faces: Vec<Face> = count
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(k, _)| Face {
                vertices: k,
                a: vertices[k.0 as usize],
                b: vertices[k.1 as usize],
            })
            .collect();
        faces.sort_by_key(|f| f.vertices);
        let root_triangles: Vec<[Point; 3]> = roots
            .iter()
            .map(|r| {
                [
                    vertices[r.vertices[0] as usize],
                    vertices[r.vertices[1] as usize],
                    vertices[r.vertices[2] as usize],
                ]
            })
            .collect();
        let total: f64 = root_triangles.iter().map(area).sum();
        let pts: Vec<Point> = root_triangles.iter().flatten().copied().collect();
        let mut diameter: f64 = 0.0;
        for p in &pts {
            for q in &pts {
                diameter = diameter.max(crate::geometry::dist(*p, *q));
            }
        }
        Domain {
            name: name.to_string(),
            faces,
            root_triangles,
            area: total,
            diameter,
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.root_triangles.iter().any(|t| contains(t, x, 1e-12))
    }

    /// Whether the closed segment pq lies in the closed domain.
    pub fn contains_segment(&self, p: Point, q: Point) -> bool {
        self.contains(p)
            && self.contains(q)
            && !self.faces.iter().any(|f| segments_cross(p, q, f.a, f.b))
    }

    pub fn on_boundary(&self, x: Point) -> bool {
        self.faces.iter().any(|f| on_segment(x, f.a, f.b, 1e-12))
    }
}

/// Selection of boundary faces carrying homogeneous Dirichlet conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum Gamma {
    None,
    All,
    /// Indices into `Domain::faces`.
    Faces(Vec<usize>),
}

impl Gamma {
    pub fn segments(&self, d: &Domain) -> Vec<(Point, Point)> {
        match self {
            Gamma::None => vec![],
            Gamma::All => d.faces.iter().map(|f| (f.a, f.b)).collect(),
            Gamma::Faces(ix) => ix.iter().map(|&i| (d.faces[i].a, d.faces[i].b)).collect(),
        }
    }

    /// Whether `x` lies on the closure of the Dirichlet piece.
    pub fn contains(&self, d: &Domain, x: Point) -> bool {
        match self {
            Gamma::None => false,
            _ => self.segments(d).iter().any(|(a, b)| on_segment(x, *a, *b, 1e-11)),
        }
    }

    /// Whether the segment ab lies inside the Dirichlet piece.
    pub fn contains_face(&self, d: &Domain, a: Point, b: Point) -> bool {
        match self {
            Gamma::None => false,
            _ => self
                .segments(d)
                .iter()
                .any(|(p, q)| on_segment(a, *p, *q, 1e-11) && on_segment(b, *p, *q, 1e-11)),
        }
    }
}

/// Unit square (0,1)^2 split by the diagonal from (0,0) to (1,1).
pub fn unit_square(rule: Rule) -> Arc<Forest> {
    Arc::new(Forest::new(
        "unit_square",
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
        rule,
    ))
}

/// L-shaped domain (-1,1)^2 minus [0,1)x(-1,0], six triangles, reentrant corner at the origin.
pub fn l_shape(rule: Rule) -> Arc<Forest> {
    let v = vec![
        [-1.0, -1.0],
        [0.0, -1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [-1.0, 1.0],
        [0.0, 1.0],
        [1.0, 1.0],
    ];
    let t = vec![[0, 1, 3], [0, 3, 2], [2, 3, 6], [2, 6, 5], [3, 4, 7], [3, 7, 6]];
    Arc::new(Forest::new("l_shape", v, t, rule))
}

pub fn by_name(name: &str, rule: Rule) -> Option<Arc<Forest>> {
    match name {
        "unit_square" => Some(unit_square(rule)),
        "l_shape" => Some(l_shape(rule)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_boundary() {
        let f = unit_square(Rule::Nvb);
        assert_eq!(f.domain.faces.len(), 4);
        assert!((f.domain.area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l_shape_geometry() {
        let f = l_shape(Rule::Nvb);
        assert_eq!(f.domain.faces.len(), 8);
        assert!((f.domain.area - 3.0).abs() < 1e-15);
        assert!(f.domain.contains([0.5, 0.5]));
        assert!(!f.domain.contains([0.5, -0.5]));
        // Segment around the reentrant corner leaves the domain.
        assert!(!f.domain.contains_segment([0.5, 0.1], [-0.1, -0.5]));
        assert!(f.domain.contains_segment([0.5, 0.1], [-0.5, 0.1]));
    }

    #[test]
    fn gamma_membership() {
        let f = unit_square(Rule::Nvb);
        assert!(Gamma::All.contains(&f.domain, [0.5, 0.0]));
        assert!(!Gamma::All.contains(&f.domain, [0.5, 0.5]));
        assert!(!Gamma::None.contains(&f.domain, [0.5, 0.0]));
    }
}
