//! Elementwise and edgewise L2 projections onto polynomials.

use super::field::ScalarField;
use super::integrate::for_each_point;
use super::space::FeSpace;
use crate::error::{ApxError, Result};
use crate::mesh::ElemId;
use std::collections::HashSet;
use crate::geometry::{Affine, Point};
use crate::poly::{eval_monomial_grads, eval_monomials, poly_dim};
use crate::quadrature::{edge_rule, triangle_rule};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Polynomial on an element, in monomials of the element's reference coordinates.
#[derive(Debug, Clone)]
pub struct LocalPoly {
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub affine: Affine,
}

impl LocalPoly {
    pub fn eval(&self, x: Point) -> f64 {
        let r = self.affine.inverse(x);
        self.eval_ref(r)
    }

    pub fn eval_ref(&self, r: Point) -> f64 {
        let mut m = [0.0; 15];
        let n = self.coeffs.len();
        eval_monomials(self.degree, r, &mut m[..n]);
        (0..n).map(|i| m[i] * self.coeffs[i]).sum()
    }

    pub fn grad(&self, x: Point) -> [f64; 2] {
        let r = self.affine.inverse(x);
        let mut g = [[0.0; 2]; 15];
        let n = self.coeffs.len();
        eval_monomial_grads(self.degree, r, &mut g[..n]);
        let mut s = [0.0; 2];
        for i in 0..n {
            s[0] += g[i][0] * self.coeffs[i];
            s[1] += g[i][1] * self.coeffs[i];
        }
        self.affine.grad(s)
    }

    pub fn add(&self, other: &LocalPoly) -> LocalPoly {
        assert_eq!(self.degree, other.degree);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        LocalPoly {
            degree: self.degree,
            coeffs,
            affine: self.affine,
        }
    }
}

/// Weighted least-squares solver matrix R^{-1} Q^T diag(sqrt w) for a fixed rule.
fn pseudo_inverse(vand: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut a = vand.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        for j in 0..a.ncols() {
            a[(i, j)] *= s;
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let qt = qr.q().transpose();
    let mut out = r.solve_upper_triangular(&qt).expect("full-rank Vandermonde");
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        for k in 0..out.nrows() {
            out[(k, i)] *= s;
        }
    }
    out
}

/// Cached projector for triangles: coefficients = P * values at rule points.
pub struct TriProjector {
    pub degree: usize,
    pub order: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub vand: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
}

pub fn tri_projector(degree: usize, order: usize) -> Arc<TriProjector> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<TriProjector>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry((degree, order))
        .or_insert_with(|| {
            let q = triangle_rule(order.max(2 * degree));
            let n = poly_dim(degree);
            let mut vand = DMatrix::zeros(q.points.len(), n);
            let mut row = [0.0; 15];
            for (i, p) in q.points.iter().enumerate() {
                eval_monomials(degree, *p, &mut row[..n]);
                for j in 0..n {
                    vand[(i, j)] = row[j];
                }
            }
            let pinv = pseudo_inverse(&vand, &q.weights);
            Arc::new(TriProjector {
                degree,
                order,
                points: q.points.clone(),
                weights: q.weights.clone(),
                vand,
                pinv,
            })
        })
        .clone()
}

/// L2(τ) projection of `u` onto polynomials of degree `d`, by quadrature of order `order`.
pub fn project_poly_element(u: &ScalarField, coords: &[Point; 3], d: usize, order: usize) -> LocalPoly {
    let a = Affine::new(coords);
    project_fn(|x| u.value(x), &a, d, order)
}

/// Projection of an arbitrary function given by point evaluation.
pub fn project_fn(f: impl Fn(Point) -> f64, a: &Affine, d: usize, order: usize) -> LocalPoly {
    let pr = tri_projector(d, order);
    let vals = DVector::from_iterator(pr.points.len(), pr.points.iter().map(|r| f(a.map(*r))));
    let c = &pr.pinv * vals;
    LocalPoly {
        degree: d,
        coeffs: c.iter().copied().collect(),
        affine: *a,
    }
}

/// Weighted point samples of a field on one element, in reference coordinates.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub refs: Vec<Point>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

/// Samples `u` on element `e` of `space`, splitting into resolution cells when needed.
/// Weights are physical measures.
pub fn element_samples(
    space: &FeSpace,
    e: usize,
    u: &ScalarField,
    sets: &[Arc<HashSet<ElemId>>],
    order: usize,
) -> Samples {
    let a = space.affine[e];
    let mut s = Samples::default();
    for_each_point(space, e, u, sets, order, |x, w, cf| {
        s.refs.push(a.inverse(x));
        s.weights.push(w);
        s.values.push(cf.value(x));
    });
    s
}

/// Weighted least-squares fit in reference monomials of degree `d`.
pub fn fit_samples(a: &Affine, d: usize, s: &Samples, weights: &[f64]) -> Result<LocalPoly> {
    let n = poly_dim(d);
    let mut m = DMatrix::zeros(s.refs.len(), n);
    let mut rhs = DVector::zeros(s.refs.len());
    let mut row = [0.0; 15];
    for (i, r) in s.refs.iter().enumerate() {
        let sw = weights[i].sqrt();
        eval_monomials(d, *r, &mut row[..n]);
        for j in 0..n {
            m[(i, j)] = sw * row[j];
        }
        rhs[i] = sw * s.values[i];
    }
    let qr = m.qr();
    let qtb = qr.q().transpose() * rhs;
    let c = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| ApxError::SingularLocal(format!("degree {d} fit on {} samples", s.refs.len())))?;
    Ok(LocalPoly {
        degree: d,
        coeffs: c.iter().copied().collect(),
        affine: *a,
    })
}

/// L2 projection of `u` onto degree-`d` polynomials on element `e` of `space`.
pub fn project_in_space(
    space: &FeSpace,
    e: usize,
    u: &ScalarField,
    sets: &[Arc<HashSet<ElemId>>],
    d: usize,
    order: usize,
) -> Result<LocalPoly> {
    let id = space.ids[e];
    if sets.iter().all(|s| !s.contains(&id)) {
        let cf = u.on_cell(id);
        return Ok(project_fn(|x| cf.value(x), &space.affine[e], d, order));
    }
    let s = element_samples(space, e, u, sets, order.max(2 * d));
    fit_samples(&space.affine[e], d, &s, &s.weights)
}

/// Polynomial on an edge from `a` to `b` in the parameter s in [0,1].
#[derive(Debug, Clone)]
pub struct EdgePoly {
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub a: Point,
    pub b: Point,
}

impl EdgePoly {
    pub fn eval_param(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

pub struct EdgeProjector {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub pinv: DMatrix<f64>,
}

pub fn edge_projector(degree: usize, order: usize) -> Arc<EdgeProjector> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<EdgeProjector>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry((degree, order))
        .or_insert_with(|| {
            let q = edge_rule(order.max(2 * degree));
            let mut vand = DMatrix::zeros(q.points.len(), degree + 1);
            for (i, s) in q.points.iter().enumerate() {
                for j in 0..=degree {
                    vand[(i, j)] = s.powi(j as i32);
                }
            }
            Arc::new(EdgeProjector {
                points: q.points.clone(),
                weights: q.weights.clone(),
                pinv: pseudo_inverse(&vand, &q.weights),
            })
        })
        .clone()
}

/// L2(e) projection onto polynomials of degree `k` along the edge ab.
pub fn project_poly_edge(u: impl Fn(Point) -> f64, a: Point, b: Point, k: usize, order: usize) -> EdgePoly {
    let pr = edge_projector(k, order);
    let vals = DVector::from_iterator(
        pr.points.len(),
        pr.points
            .iter()
            .map(|s| u([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])])),
    );
    let c = &pr.pinv * vals;
    EdgePoly {
        degree: k,
        coeffs: c.iter().copied().collect(),
        a,
        b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn mean_of_x_squared() {
        let u = ScalarField::from_fn("x2", |x| x[0] * x[0]);
        let p = project_poly_element(&u, &REF, 0, 6);
        assert!((p.coeffs[0] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn fixes_polynomials_and_idempotent() {
        let t = [[0.2, 0.1], [1.3, 0.4], [0.1, 0.9]];
        let u = ScalarField::from_fn("p", |x| 1.0 + x[0] - 2.0 * x[1] * x[0] + x[1] * x[1] * x[1]);
        let p = project_poly_element(&u, &t, 3, 8);
        for r in [[0.1, 0.2], [0.5, 0.3]] {
            let x = p.affine.map(r);
            assert!((p.eval(x) - u.value(x)).abs() < 1e-12);
        }
        let w = ScalarField::from_fn("s", |x| (3.0 * x[0]).sin() * x[1].exp());
        let p1 = project_poly_element(&w, &t, 2, 10);
        let q = p1.clone();
        let p2 = project_fn(|x| q.eval(x), &p1.affine, 2, 10);
        for (a, b) in p1.coeffs.iter().zip(&p2.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_projection() {
        let e = project_poly_edge(|x| x[0] * x[0], [0.0, 0.0], [1.0, 0.0], 0, 4);
        assert!((e.coeffs[0] - 1.0 / 3.0).abs() < 1e-14);
        let f = project_poly_edge(|x| 1.0 + 2.0 * x[1], [0.0, 0.0], [0.0, 2.0], 1, 4);
        assert!((f.eval_param(0.5) - 3.0).abs() < 1e-13);
    }
}
