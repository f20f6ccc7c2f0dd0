//! Quasi-interpolation: dual basis, Q_P, local near-best polynomials, Q̃_P, Scott-Zhang.

use crate::error::{ApxError, Result};
use crate::fe::field::{FeFunction, ScalarField};
use crate::fe::nodal::LocalNode;
use crate::fe::project::{element_samples, fit_samples, project_in_space, project_poly_edge, LocalPoly, Samples};
use crate::fe::space::FeSpace;
use crate::geometry::{on_segment, Affine};
use crate::quadrature::triangle_rule;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// Local node index of every owned nodal-set member: (node, element, local index).
fn owned_slots(v: &FeSpace) -> Vec<(usize, usize, usize)> {
    let nodal = v.nodal.as_ref().expect("continuous space");
    let mut out = Vec::new();
    for (e, loc) in nodal.local.iter().enumerate() {
        for (k, n) in loc.iter().enumerate() {
            if let LocalNode::Node(z) = n {
                out.push((*z, e, k));
            }
        }
    }
    out
}

/// Reference Lagrange mass matrix and its inverse.
fn reference_mass(v: &FeSpace) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = v.nloc();
    let q = triangle_rule(2 * v.degree() + 2);
    let mut m = DMatrix::zeros(n, n);
    let mut phi = [0.0; 15];
    for (r, w) in q.points.iter().zip(&q.weights) {
        v.basis.eval(*r, &mut phi[..n]);
        for k in 0..n {
            for l in 0..n {
                m[(k, l)] += w * phi[k] * phi[l];
            }
        }
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| ApxError::SingularLocal("reference Lagrange mass matrix".into()))?;
    Ok((m, inv))
}

/// Dual functionals of the nodal basis: on each owning element, the local
/// dual of the Lagrange basis, averaged over owners.
#[derive(Debug, Clone)]
pub struct DualBasis {
    pub space: Arc<FeSpace>,
    /// Inverse reference mass matrix; divide by |det| for a physical element.
    pub inv_mass: DMatrix<f64>,
    /// Number of owning elements per node.
    pub counts: Vec<usize>,
    slots: Vec<(usize, usize, usize)>,
}

impl DualBasis {
    pub fn new(v: &Arc<FeSpace>) -> Result<Self> {
        let nodal = v
            .nodal
            .as_ref()
            .ok_or_else(|| ApxError::InvalidArgument("dual basis requires a continuous space".into()))?;
        let (_, inv_mass) = reference_mass(v)?;
        let counts = nodal.owners.iter().map(|o| o.len()).collect::<Vec<_>>();
        if let Some(z) = counts.iter().position(|&c| c == 0) {
            return Err(ApxError::SingularLocal(format!("node {z} has no owning element")));
        }
        Ok(DualBasis {
            space: v.clone(),
            inv_mass,
            counts,
            slots: owned_slots(v),
        })
    }

    /// Largest deviation of the matrix of pairings <dual_z, phi_z'> from the
    /// identity, with every pairing integrated by quadrature.
    pub fn gram_deviation(&self) -> f64 {
        let v = &self.space;
        let nodal = v.nodal.as_ref().unwrap();
        let n = v.nloc();
        let q = triangle_rule(2 * v.degree() + 2);
        let mut gram: HashMap<(usize, usize), f64> = HashMap::new();
        let mut phi = [0.0; 15];
        for &(z, e, k) in &self.slots {
            let jac = v.affine[e].det.abs();
            // integrals of eta_k against each local Lagrange function
            let mut pair = vec![0.0; n];
            for (r, w) in q.points.iter().zip(&q.weights) {
                v.basis.eval(*r, &mut phi[..n]);
                let eta: f64 = (0..n).map(|j| self.inv_mass[(k, j)] / jac * phi[j]).sum();
                for l in 0..n {
                    pair[l] += w * jac * eta * phi[l];
                }
            }
            for (l, node) in nodal.local[e].iter().enumerate() {
                for (z2, wt) in node.expansion() {
                    *gram.entry((z, z2)).or_insert(0.0) += wt * pair[l] / self.counts[z] as f64;
                }
            }
        }
        let mut dev = 0.0f64;
        for z in 0..nodal.len() {
            let d = gram.get(&(z, z)).copied().unwrap_or(0.0);
            dev = dev.max((d - 1.0).abs());
        }
        for ((a, b), val) in gram {
            if a != b {
                dev = dev.max(val.abs());
            }
        }
        dev
    }

    /// Assembles sum_z c_z phi_z from per-element local polynomials, with c_z
    /// the average over owners of the local polynomial at z.
    fn assemble_from_local(&self, local: &[LocalPoly]) -> FeFunction {
        let v = &self.space;
        let nodal = v.nodal.as_ref().unwrap();
        let mut sums = vec![0.0; nodal.len()];
        for &(z, e, k) in &self.slots {
            sums[z] += local[e].eval_ref(v.basis.nodes[k]);
        }
        let mut coeffs = vec![0.0; v.ndofs];
        for (z, s) in sums.iter().enumerate() {
            if let Some(d) = v.node_dof[z] {
                coeffs[d] = s / self.counts[z] as f64;
            }
        }
        FeFunction::new(v.clone(), coeffs)
    }
}

fn default_order(v: &FeSpace) -> usize {
    2 * v.degree() + 4
}

/// Elementwise L2 projections onto polynomials of the space degree.
fn local_projections(v: &FeSpace, u: &ScalarField) -> Result<Vec<LocalPoly>> {
    let sets = u.resolution_sets(&v.forest);
    (0..v.num_elements())
        .into_par_iter()
        .with_min_len(32)
        .map(|e| project_in_space(v, e, u, &sets, v.degree(), default_order(v)))
        .collect()
}

/// Q_P u = sum_z <u, dual_z> phi_z.
pub fn q_interp(v: &Arc<FeSpace>, u: &ScalarField) -> Result<FeFunction> {
    let db = DualBasis::new(v)?;
    Ok(db.assemble_from_local(&local_projections(v, u)?))
}

/// Convergence record of the local L^{p0} fit.
#[derive(Debug, Clone, Copy)]
pub struct IrlsInfo {
    pub iterations: usize,
    /// Final value of the sampled objective sum w |r|^{p0}.
    pub objective: f64,
    pub converged: bool,
}

const IRLS_MAX_ITER: usize = 50;
const IRLS_STAGNATION: f64 = 1e-10;

fn lp_objective(p: &LocalPoly, s: &Samples, p0: f64) -> f64 {
    s.refs
        .iter()
        .zip(&s.weights)
        .zip(&s.values)
        .map(|((r, w), v)| w * (v - p.eval_ref(*r)).abs().powf(p0))
        .sum()
}

/// Near-best L^{p0} polynomial fit of degree `m` to weighted samples, by damped
/// iteratively reweighted least squares started from the L2 fit.
pub fn fit_lp(a: &Affine, m: usize, s: &Samples, p0: f64) -> Result<(LocalPoly, IrlsInfo)> {
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(ApxError::InvalidArgument(format!("local exponent p0 = {p0} must be in (0, inf)")));
    }
    let mut cur = fit_samples(a, m, s, &s.weights)?;
    if p0 == 2.0 {
        let objective = lp_objective(&cur, s, 2.0);
        return Ok((cur, IrlsInfo { iterations: 0, objective, converged: true }));
    }
    let resid = |p: &LocalPoly| -> Vec<f64> { s.refs.iter().zip(&s.values).map(|(r, v)| v - p.eval_ref(*r)).collect() };
    let scale = resid(&cur).iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if scale == 0.0 {
        return Ok((cur, IrlsInfo { iterations: 0, objective: 0.0, converged: true }));
    }
    let eps = 1e-8 * scale;
    let mut obj = lp_objective(&cur, s, p0);
    let mut converged = false;
    let mut it = 0;
    while it < IRLS_MAX_ITER {
        it += 1;
        let r = resid(&cur);
        let w: Vec<f64> = s.weights.iter().zip(&r).map(|(w, r)| w * (r.abs() + eps).powf(p0 - 2.0)).collect();
        let next = fit_samples(a, m, s, &w)?;
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-3 {
            let trial = LocalPoly {
                degree: m,
                coeffs: cur.coeffs.iter().zip(&next.coeffs).map(|(c, n)| c + step * (n - c)).collect(),
                affine: *a,
            };
            let o = lp_objective(&trial, s, p0);
            if o <= obj {
                accepted = Some((trial, o));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, o)) => {
                let rel = (obj - o) / obj.max(f64::MIN_POSITIVE);
                cur = trial;
                obj = o;
                if rel < IRLS_STAGNATION {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok((cur, IrlsInfo { iterations: it, objective: obj, converged }))
}

/// Local near-best approximation of `u` on element `e` from degree-`m` polynomials in L^{p0}.
pub fn local_poly_approx(v: &FeSpace, e: usize, u: &ScalarField, p0: f64, m: usize) -> Result<(LocalPoly, IrlsInfo)> {
    let sets = u.resolution_sets(&v.forest);
    let s = element_samples(v, e, u, &sets, 2 * m + 4);
    fit_lp(&v.affine[e], m, &s, p0)
}

/// Broken operator: Π_{p0,τ} applied on every element, at the space degree.
pub fn broken_poly(v: &FeSpace, u: &ScalarField, p0: f64) -> Result<Vec<LocalPoly>> {
    if p0 == 2.0 {
        return local_projections(v, u);
    }
    let sets = u.resolution_sets(&v.forest);
    (0..v.num_elements())
        .into_par_iter()
        .with_min_len(16)
        .map(|e| {
            let s = element_samples(v, e, u, &sets, default_order(v));
            fit_lp(&v.affine[e], v.degree(), &s, p0).map(|x| x.0)
        })
        .collect()
}

/// Broken operator as a member of a discontinuous space.
pub fn broken_fe(v: &Arc<FeSpace>, u: &ScalarField, p0: f64) -> Result<FeFunction> {
    if v.is_continuous() {
        return Err(ApxError::InvalidArgument("broken projection targets a discontinuous space".into()));
    }
    let local = broken_poly(v, u, p0)?;
    let n = v.nloc();
    let mut coeffs = vec![0.0; v.ndofs];
    for (e, lp) in local.iter().enumerate() {
        for k in 0..n {
            coeffs[e * n + k] = lp.eval_ref(v.basis.nodes[k]);
        }
    }
    Ok(FeFunction::new(v.clone(), coeffs))
}

/// Q̃_P u = Q_P Π_P u.
pub fn q_tilde(v: &Arc<FeSpace>, u: &ScalarField, p0: f64) -> Result<FeFunction> {
    let db = DualBasis::new(v)?;
    Ok(db.assemble_from_local(&broken_poly(v, u, p0)?))
}

/// Scott-Zhang interpolation into a (possibly masked) continuous space.
/// Each node averages over one face: the lowest-id interior face containing
/// it, a boundary face when no interior face contains it, or its element for
/// interior lattice points.
pub fn scott_zhang(v: &Arc<FeSpace>, u: &ScalarField) -> Result<FeFunction> {
    if !u.has_gradient() {
        return Err(ApxError::MissingGradient(u.name()));
    }
    let nodal = v.nodal.as_ref().ok_or_else(|| ApxError::InvalidArgument("Scott-Zhang requires a continuous space".into()))?;
    let m = v.degree();
    let order = 2 * m + 4;
    let domain = &v.forest.domain;
    let coeffs_by_node: Vec<Option<f64>> = (0..nodal.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|z| {
            let dof = v.node_dof[z]?;
            let _ = dof;
            let x = nodal.points[z];
            let mut best: Option<(bool, usize, usize)> = None;
            for &e in &nodal.owners[z] {
                let c = v.coords[e];
                for k in 0..3 {
                    let (a, b) = (c[(k + 1) % 3], c[(k + 2) % 3]);
                    if !on_segment(x, a, b, 1e-12) {
                        continue;
                    }
                    let boundary = domain.on_boundary(crate::geometry::midpoint(a, b));
                    let key = (boundary, v.ids[e] as usize, k);
                    if best.map_or(true, |b| key < b) {
                        best = Some(key);
                    }
                }
            }
            let val = match best {
                Some((_, id, k)) => {
                    let e = v.index[&(id as u32)];
                    let c = v.coords[e];
                    let (a, b) = (c[(k + 1) % 3], c[(k + 2) % 3]);
                    let ep = project_poly_edge(|p| u.value(p), a, b, m, order);
                    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                    let s = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / len2;
                    ep.eval_param(s)
                }
                None => {
                    let e = nodal.owners[z][0];
                    let sets = u.resolution_sets(&v.forest);
                    let lp = project_in_space(v, e, u, &sets, m, order).ok()?;
                    lp.eval(x)
                }
            };
            Some(val)
        })
        .collect();
    let mut coeffs = vec![0.0; v.ndofs];
    for (z, c) in coeffs_by_node.iter().enumerate() {
        if let (Some(d), Some(c)) = (v.node_dof[z], c) {
            coeffs[d] = *c;
        }
    }
    Ok(FeFunction::new(v.clone(), coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{l_shape, unit_square, Gamma, Partition, Rule};
    use crate::quadrature::triangle_rule;

    fn random_member(v: &Arc<FeSpace>, seed: f64) -> FeFunction {
        FeFunction::new(v.clone(), (0..v.ndofs).map(|i| ((i as f64 + seed) * 1.37).sin()).collect())
    }

    fn hanging_mesh() -> Partition {
        let p = Partition::initial(unit_square(Rule::Red));
        let first = p.active()[0];
        p.refine(&[first]).unwrap()
    }

    #[test]
    fn dual_basis_biorthogonal() {
        for p in [Partition::initial(unit_square(Rule::Nvb)), hanging_mesh()] {
            for m in 1..=3 {
                let v = Arc::new(FeSpace::continuous(&p, m, Gamma::None));
                let db = DualBasis::new(&v).unwrap();
                assert!(db.gram_deviation() < 1e-10, "m={m}");
            }
        }
    }

    #[test]
    fn operators_reproduce_members() {
        let p = hanging_mesh().uniform(1);
        for m in 1..=2 {
            let v = Arc::new(FeSpace::continuous(&p, m, Gamma::None));
            let w = random_member(&v, 0.3);
            let u: ScalarField = w.clone().into();
            for out in [q_interp(&v, &u).unwrap(), q_tilde(&v, &u, 1.0).unwrap()] {
                for (a, b) in out.coeffs.iter().zip(&w.coeffs) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn constants_reproduced() {
        let p = Partition::initial(l_shape(Rule::Nvb)).uniform(2);
        let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::None));
        let one = ScalarField::from_fn("one", |_| 1.0);
        let q = q_interp(&v, &one).unwrap();
        assert!(q.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn l2_fit_matches_projection() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        let v = FeSpace::discontinuous(&p, 2);
        let u = ScalarField::from_fn("e", |x| (x[0] * 2.0).exp() * x[1]);
        let (a, _) = local_poly_approx(&v, 0, &u, 2.0, 2).unwrap();
        let b = project_in_space(&v, 0, &u, &[], 2, 8).unwrap();
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn lp_fit_shift_invariant() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        let v = FeSpace::discontinuous(&p, 1);
        let u = ScalarField::from_fn("ramp", |x| (4.0 * (x[0] - 0.5)).clamp(-1.0, 1.0));
        let shifted = ScalarField::from_fn("ramp+l", |x| (4.0 * (x[0] - 0.5)).clamp(-1.0, 1.0) + 2.0 - x[1]);
        let (a, _) = local_poly_approx(&v, 0, &u, 1.0, 1).unwrap();
        let (b, _) = local_poly_approx(&v, 0, &shifted, 1.0, 1).unwrap();
        let r = [0.3, 0.3];
        let x = v.affine[0].map(r);
        assert!((b.eval(x) - a.eval(x) - (2.0 - x[1])).abs() < 1e-8);
    }

    #[test]
    fn l1_fit_near_best_against_grid_search() {
        // Reference: brute-force minimum of the sampled L1 error over affine polynomials.
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let a = Affine::new(&t);
        let f = |x: [f64; 2]| (5.0 * (x[0] - 0.4)).clamp(0.0, 1.0);
        let q = triangle_rule(8);
        let s = Samples {
            refs: q.points.clone(),
            weights: q.weights.clone(),
            values: q.points.iter().map(|r| f(*r)).collect(),
        };
        let (fit, info) = fit_lp(&a, 1, &s, 1.0).unwrap();
        assert!(info.objective.is_finite());
        let err = |c: [f64; 3]| -> f64 {
            let mut tot = 0.0;
            for i in 0..200 {
                let r = [(i % 20) as f64 / 20.0 + 0.025, (i / 20) as f64 / 20.0 + 0.025];
                if r[0] + r[1] > 1.0 {
                    continue;
                }
                tot += (f(r) - c[0] - c[1] * r[0] - c[2] * r[1]).abs();
            }
            tot
        };
        let mut best = f64::INFINITY;
        for i in 0..21 {
            for j in 0..21 {
                for k in 0..21 {
                    let c = [-0.5 + i as f64 * 0.1, -1.0 + j as f64 * 0.25, -1.0 + k as f64 * 0.1];
                    best = best.min(err(c));
                }
            }
        }
        let mine = err([fit.coeffs[0], fit.coeffs[1], fit.coeffs[2]]);
        assert!(mine <= 10.0 * best, "{mine} vs {best}");
    }

    #[test]
    fn scott_zhang_respects_mask_and_reproduces() {
        let p = hanging_mesh().uniform(1);
        let v = Arc::new(FeSpace::continuous(&p, 2, Gamma::All));
        let w = random_member(&v, 1.1);
        let u: ScalarField = w.clone().into();
        let s = scott_zhang(&v, &u).unwrap();
        for (a, b) in s.coeffs.iter().zip(&w.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        let no_grad = ScalarField::from_fn("ng", |x| x[0]);
        assert!(matches!(scott_zhang(&v, &no_grad), Err(ApxError::MissingGradient(_))));
    }
}
