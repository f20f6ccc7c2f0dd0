//! Integration over space elements, split into cells that resolve finite element fields.

use super::field::{CellField, FeFunction, ScalarField};
use super::space::FeSpace;
use crate::geometry::{Affine, Point};
use crate::mesh::{ElemId, Forest};
use crate::quadrature::triangle_rule;
use rayon::prelude::*;
use std::collections::HashSet;
use std::sync::Arc;

/// Descendants of `base` that are not strict ancestors of any element in `sets`.
pub fn cells_for(forest: &Forest, base: ElemId, sets: &[Arc<HashSet<ElemId>>]) -> Vec<ElemId> {
    if sets.iter().all(|s| !s.contains(&base)) {
        return vec![base];
    }
    let d = forest.read();
    let mut out = Vec::new();
    let mut stack = vec![base];
    while let Some(x) = stack.pop() {
        match d.children(x, forest.rule) {
            Some(kids) if sets.iter().any(|s| s.contains(&x)) => {
                for c in kids.rev() {
                    stack.push(c);
                }
            }
            _ => out.push(x),
        }
    }
    out
}

/// Calls `f(x, w, cell_field)` at every quadrature point of element `e`,
/// with weights scaled to physical measure.
pub fn for_each_point(
    space: &FeSpace,
    e: usize,
    u: &ScalarField,
    sets: &[Arc<HashSet<ElemId>>],
    order: usize,
    mut f: impl FnMut(Point, f64, &CellField),
) {
    let q = triangle_rule(order);
    for cell in cells_for(&space.forest, space.ids[e], sets) {
        let a = if cell == space.ids[e] {
            space.affine[e]
        } else {
            Affine::new(&space.forest.coords(cell))
        };
        let cf = u.on_cell(cell);
        let jac = a.det.abs();
        for (r, w) in q.points.iter().zip(&q.weights) {
            f(a.map(*r), w * jac, &cf);
        }
    }
}

/// Norm used when measuring errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// L^p with p in (0, inf]; `f64::INFINITY` for the sup norm.
    Lp(f64),
    /// Full H1 norm (L2 plus gradient).
    H1,
    /// H1 seminorm.
    H1Semi,
}

/// Per-element contributions of ||u - v|| on the given elements: the integral of
/// |e|^p for finite p, the sampled maximum for p = inf, squared values for H1.
pub fn element_errors(
    space: &FeSpace,
    u: &ScalarField,
    v: Option<&FeFunction>,
    kind: NormKind,
    order: usize,
    elems: &[usize],
) -> Vec<f64> {
    let sets = u.resolution_sets(&space.forest);
    elems
        .par_iter()
        .with_min_len(16)
        .map(|&e| {
            let lv = v.map(|v| v.local_values(e));
            let mut acc = 0.0f64;
            for_each_point(space, e, u, &sets, order, |x, w, cf| {
                let vv = match (v, &lv) {
                    (Some(v), Some(lv)) => v.eval_with(e, lv, x),
                    _ => 0.0,
                };
                match kind {
                    NormKind::Lp(p) if p.is_infinite() => acc = acc.max((cf.value(x) - vv).abs()),
                    NormKind::Lp(p) => acc += w * (cf.value(x) - vv).abs().powf(p),
                    NormKind::H1 | NormKind::H1Semi => {
                        let gu = cf.gradient(x).unwrap_or([f64::NAN; 2]);
                        let gv = match (v, &lv) {
                            (Some(v), Some(lv)) => v.grad_with(e, lv, x),
                            _ => [0.0; 2],
                        };
                        let g2 = (gu[0] - gv[0]).powi(2) + (gu[1] - gv[1]).powi(2);
                        let l2 = if kind == NormKind::H1 { (cf.value(x) - vv).powi(2) } else { 0.0 };
                        acc += w * (g2 + l2);
                    }
                }
            });
            acc
        })
        .collect()
}

/// Aggregates per-element contributions into a norm value.
pub fn aggregate(kind: NormKind, parts: &[f64]) -> f64 {
    match kind {
        NormKind::Lp(p) if p.is_infinite() => parts.iter().copied().fold(0.0, f64::max),
        NormKind::Lp(p) => parts.iter().sum::<f64>().powf(1.0 / p),
        NormKind::H1 | NormKind::H1Semi => parts.iter().sum::<f64>().sqrt(),
    }
}

/// ||u - v|| over the given elements (all elements when `elems` is None).
pub fn error_norm(
    space: &FeSpace,
    u: &ScalarField,
    v: Option<&FeFunction>,
    kind: NormKind,
    order: usize,
    elems: Option<&[usize]>,
) -> f64 {
    let all: Vec<usize>;
    let elems = match elems {
        Some(e) => e,
        None => {
            all = (0..space.num_elements()).collect();
            &all
        }
    };
    aggregate(kind, &element_errors(space, u, v, kind, order, elems))
}

/// Default quadrature order for integrals involving fields on a degree-m space.
pub fn default_order(m: usize) -> usize {
    2 * m + 2
}
