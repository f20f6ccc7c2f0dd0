//! Elementwise assembly of Gram matrices and load vectors.

use super::field::ScalarField;
use super::integrate::for_each_point;
use super::space::FeSpace;
use crate::error::{ApxError, Result};
use crate::geometry::Point;
use crate::linalg::CsrMatrix;
use crate::quadrature::triangle_rule;
use rayon::prelude::*;

/// Local basis data at the quadrature points of one element.
pub struct ElementData {
    pub x: Vec<Point>,
    pub w: Vec<f64>,
    pub phi: Vec<[f64; 15]>,
    pub grad: Vec<[[f64; 2]; 15]>,
    pub hess: Vec<[[[f64; 2]; 2]; 15]>,
}

pub fn element_data(space: &FeSpace, e: usize, order: usize, hessians: bool) -> ElementData {
    let q = triangle_rule(order);
    let a = &space.affine[e];
    let n = space.nloc();
    let jac = a.det.abs();
    let mut d = ElementData {
        x: Vec::with_capacity(q.points.len()),
        w: Vec::with_capacity(q.points.len()),
        phi: Vec::with_capacity(q.points.len()),
        grad: Vec::with_capacity(q.points.len()),
        hess: Vec::new(),
    };
    for (r, w) in q.points.iter().zip(&q.weights) {
        let mut phi = [0.0; 15];
        let mut g = [[0.0; 2]; 15];
        space.basis.eval(*r, &mut phi[..n]);
        space.basis.eval_grad(*r, &mut g[..n]);
        for gk in g.iter_mut().take(n) {
            *gk = a.grad(*gk);
        }
        if hessians {
            let mut h = [[[0.0; 2]; 2]; 15];
            space.basis.eval_hessian(*r, &mut h[..n]);
            for hk in h.iter_mut().take(n) {
                *hk = a.hessian(*hk);
            }
            d.hess.push(h);
        }
        d.x.push(a.map(*r));
        d.w.push(w * jac);
        d.phi.push(phi);
        d.grad.push(g);
    }
    d
}

/// Assembles a global matrix from local matrices (row-major, nloc x nloc,
/// in the local Lagrange basis) over the given elements.
pub fn assemble_local<F>(space: &FeSpace, order: usize, elems: &[usize], local: F) -> CsrMatrix
where
    F: Fn(usize, &ElementData) -> Vec<f64> + Sync,
{
    let n = space.nloc();
    let trip: Vec<(usize, usize, f64)> = elems
        .par_iter()
        .with_min_len(32)
        .flat_map_iter(|&e| {
            let d = element_data(space, e, order, false);
            let a = local(e, &d);
            let mut out = Vec::new();
            for k in 0..n {
                for l in 0..n {
                    let v = a[k * n + l];
                    if v == 0.0 {
                        continue;
                    }
                    for &(i, wi) in space.expansion(e, k) {
                        for &(j, wj) in space.expansion(e, l) {
                            out.push((i, j, wi * wj * v));
                        }
                    }
                }
            }
            out
        })
        .collect();
    CsrMatrix::from_triplets(space.ndofs, space.ndofs, trip)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Mass,
    Stiffness,
    /// Mass plus stiffness.
    H1,
}

/// Gram matrix of the space's basis for the given form.
pub fn assemble_gram(space: &FeSpace, form: Form, order: usize) -> Result<CsrMatrix> {
    let m = space.degree();
    let need = match form {
        Form::Mass | Form::H1 => 2 * m,
        Form::Stiffness => 2 * m.saturating_sub(1),
    };
    if order < need {
        return Err(ApxError::InvalidArgument(format!(
            "quadrature order {order} below the {need} required for exact Gram entries"
        )));
    }
    let elems: Vec<usize> = (0..space.num_elements()).collect();
    Ok(assemble_gram_on(space, form, order, &elems))
}

pub fn assemble_gram_on(space: &FeSpace, form: Form, order: usize, elems: &[usize]) -> CsrMatrix {
    let n = space.nloc();
    assemble_local(space, order, elems, |_, d| {
        let mut a = vec![0.0; n * n];
        for q in 0..d.w.len() {
            for k in 0..n {
                for l in 0..n {
                    let mut v = 0.0;
                    if form != Form::Stiffness {
                        v += d.phi[q][k] * d.phi[q][l];
                    }
                    if form != Form::Mass {
                        v += d.grad[q][k][0] * d.grad[q][l][0] + d.grad[q][k][1] * d.grad[q][l][1];
                    }
                    a[k * n + l] += d.w[q] * v;
                }
            }
        }
        a
    })
}

/// Load vector (u, phi_i) over the given elements; `h1` adds (grad u, grad phi_i).
pub fn assemble_load(space: &FeSpace, u: &ScalarField, order: usize, elems: &[usize], h1: bool) -> Vec<f64> {
    let n = space.nloc();
    let sets = u.resolution_sets(&space.forest);
    let locals: Vec<(usize, Vec<f64>)> = elems
        .par_iter()
        .with_min_len(16)
        .map(|&e| {
            let mut b = vec![0.0; n];
            let a = space.affine[e];
            let mut phi = [0.0; 15];
            let mut g = [[0.0; 2]; 15];
            for_each_point(space, e, u, &sets, order, |x, w, cf| {
                let r = a.inverse(x);
                space.basis.eval(r, &mut phi[..n]);
                let val = cf.value(x);
                for k in 0..n {
                    b[k] += w * val * phi[k];
                }
                if h1 {
                    space.basis.eval_grad(r, &mut g[..n]);
                    let gu = cf.gradient(x).unwrap_or([f64::NAN; 2]);
                    for k in 0..n {
                        let gk = a.grad(g[k]);
                        b[k] += w * (gu[0] * gk[0] + gu[1] * gk[1]);
                    }
                }
            });
            (e, b)
        })
        .collect();
    let mut out = vec![0.0; space.ndofs];
    for (e, b) in locals {
        for k in 0..n {
            for &(i, wi) in space.expansion(e, k) {
                out[i] += wi * b[k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::space::FeSpace;
    use crate::mesh::{Forest, Gamma, Partition, Rule};
    use std::sync::Arc;

    fn single() -> Partition {
        Partition::initial(Arc::new(Forest::new(
            "tri",
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            Rule::Nvb,
        )))
    }

    #[test]
    fn linear_mass_matrix() {
        let v = FeSpace::continuous(&single(), 1, Gamma::None);
        let m = assemble_gram(&v, Form::Mass, 2).unwrap();
        let area = 1.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * area / 12.0;
                assert!((m.get(i, j) - e).abs() < 1e-15);
            }
        }
        for s in m.row_sums() {
            assert!((s - area / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let p = Partition::initial(crate::mesh::l_shape(Rule::Red)).uniform(1);
        let p = p.refine(&[p.active()[0]]).unwrap();
        for m in 1..=3 {
            let v = FeSpace::continuous(&p, m, Gamma::None);
            let a = assemble_gram(&v, Form::Stiffness, 2 * m).unwrap();
            assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
            assert!(a.is_symmetric(1e-14));
        }
    }

    #[test]
    fn low_order_rejected() {
        let v = FeSpace::continuous(&single(), 2, Gamma::None);
        assert!(assemble_gram(&v, Form::Mass, 2).is_err());
    }
}
