//! Second-order elliptic problems: assembly, Galerkin solve, residual
//! estimator, oscillation, total error and the adaptive loop.

use crate::catalog::{cutoff_corner, cutoff_corner_load, smooth_sine, Cutoff};
use crate::error::{ApxError, Result};
use crate::fe::assemble::assemble_local;
use crate::fe::field::{FeFunction, FnField, ScalarField};
use crate::fe::integrate::{error_norm, NormKind};
use crate::fe::project::{edge_projector, tri_projector};
use crate::fe::space::FeSpace;
use crate::geometry::{diameter, dist, Point};
use crate::linalg::{bicgstab, cg, CsrMatrix, SolveInfo};
use crate::mesh::{l_shape, unit_square, Forest, Gamma, Partition, Rule};
use crate::poly::poly_dim;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::sync::Arc;

/// -a_ij ∂_i∂_j u + b_k ∂_k u + c u = f with homogeneous Dirichlet data on Γ
/// and natural conditions on the rest of the boundary.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub name: String,
    pub domain: String,
    /// Symmetric diffusion matrix entries; gradients are required.
    pub a: [[ScalarField; 2]; 2],
    pub b: [ScalarField; 2],
    pub c: ScalarField,
    pub f: ScalarField,
    pub gamma: Gamma,
    pub exact: Option<ScalarField>,
}

fn constant(name: &str, v: f64) -> ScalarField {
    FnField::new(name, move |_| v).with_grad(|_| [0.0; 2]).field()
}

impl EllipticProblem {
    /// -Δu = f with the given load and exact solution, Dirichlet on the whole boundary.
    pub fn poisson(name: &str, domain: &str, f: ScalarField, exact: Option<ScalarField>) -> Self {
        EllipticProblem {
            name: name.into(),
            domain: domain.into(),
            a: [
                [constant("one", 1.0), constant("zero", 0.0)],
                [constant("zero", 0.0), constant("one", 1.0)],
            ],
            b: [constant("zero", 0.0), constant("zero", 0.0)],
            c: constant("zero", 0.0),
            f,
            gamma: Gamma::All,
            exact,
        }
    }

    /// Initial forest for the problem's domain.
    pub fn forest(&self, rule: Rule) -> Arc<Forest> {
        match self.domain.as_str() {
            "l_shape" => l_shape(rule),
            _ => unit_square(rule),
        }
    }

    /// Smallest eigenvalue of the diffusion matrix at `x`.
    pub fn min_diffusion(&self, x: Point) -> f64 {
        let (a, b, d) = (self.a[0][0].value(x), self.a[0][1].value(x), self.a[1][1].value(x));
        0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
    }
}

/// Names of the built-in elliptic problems.
pub const PROBLEM_NAMES: [&str; 3] = ["poisson_square", "poisson_lshape", "poisson_polynomial"];

/// Built-in problem by name.
pub fn problem(name: &str) -> Option<EllipticProblem> {
    match name {
        "poisson_square" => {
            let f = FnField::new("2pi^2 sin sin", |x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()).field();
            Some(EllipticProblem::poisson(name, "unit_square", f, Some(smooth_sine())))
        }
        "poisson_lshape" => {
            let c = lshape_cutoff();
            Some(EllipticProblem::poisson(name, "l_shape", cutoff_corner_load(c), Some(cutoff_corner(c))))
        }
        "poisson_polynomial" => {
            let u = FnField::new("xy(1-x)(1-y)", |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]))
                .with_grad(|x| [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), (1.0 - 2.0 * x[1]) * x[0] * (1.0 - x[0])])
                .field();
            let f = FnField::new("2y(1-y)+2x(1-x)", |x| 2.0 * x[1] * (1.0 - x[1]) + 2.0 * x[0] * (1.0 - x[0])).field();
            Some(EllipticProblem::poisson(name, "unit_square", f, Some(u)))
        }
        _ => None,
    }
}

/// Cutoff used by the L-shape problem.
pub fn lshape_cutoff() -> Cutoff {
    Cutoff { r0: 0.25, r1: 0.75 }
}

/// Assembled Galerkin system.
#[derive(Debug, Clone)]
pub struct System {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub symmetric: bool,
}

struct PointCoeffs {
    a: [[f64; 2]; 2],
    /// b_k + ∂_i a_ik
    drift: [f64; 2],
    b: [f64; 2],
    c: f64,
}

fn coeffs_at(prob: &EllipticProblem, x: Point) -> Result<PointCoeffs> {
    let mut a = [[0.0; 2]; 2];
    let mut div = [0.0; 2];
    for i in 0..2 {
        for k in 0..2 {
            a[i][k] = prob.a[i][k].value(x);
            let g = prob.a[i][k]
                .gradient(x)
                .ok_or_else(|| ApxError::MissingGradient(prob.a[i][k].name()))?;
            div[k] += g[i];
        }
    }
    let b = [prob.b[0].value(x), prob.b[1].value(x)];
    Ok(PointCoeffs {
        a,
        drift: [b[0] + div[0], b[1] + div[1]],
        b,
        c: prob.c.value(x),
    })
}

/// Quadrature order used for problem integrals on a degree-m space.
pub fn problem_order(m: usize) -> usize {
    2 * m + 2
}

/// Assembles a(u, v) = ∫ a_ij ∂_j u ∂_i v + (b_k + ∂_i a_ik) ∂_k u v + c u v and the load.
pub fn assemble_system(prob: &EllipticProblem, v: &FeSpace) -> Result<System> {
    if !v.is_continuous() {
        return Err(ApxError::InvalidArgument("elliptic problems need a continuous space".into()));
    }
    for row in &prob.a {
        for a in row {
            if !a.has_gradient() {
                return Err(ApxError::MissingGradient(a.name()));
            }
        }
    }
    let n = v.nloc();
    let order = problem_order(v.degree());
    let elems: Vec<usize> = (0..v.num_elements()).collect();
    let matrix = assemble_local(v, order, &elems, |_, d| {
        let mut k = vec![0.0; n * n];
        for q in 0..d.w.len() {
            let pc = coeffs_at(prob, d.x[q]).expect("gradients checked");
            for r in 0..n {
                let gr = d.grad[q][r];
                for s in 0..n {
                    let gs = d.grad[q][s];
                    let mut val = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            val += pc.a[i][j] * gs[j] * gr[i];
                        }
                    }
                    val += (pc.drift[0] * gs[0] + pc.drift[1] * gs[1]) * d.phi[q][r];
                    val += pc.c * d.phi[q][s] * d.phi[q][r];
                    k[r * n + s] += d.w[q] * val;
                }
            }
        }
        k
    });
    let rhs = crate::fe::assemble::assemble_load(v, &prob.f, order, &elems, false);
    let symmetric = matrix.is_symmetric(1e-12 * matrix.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())));
    Ok(System { matrix, rhs, symmetric })
}

/// Relative residual target of the Galerkin solve.
pub const SOLVER_TOL: f64 = 1e-10;

/// Solves the system: preconditioned CG when symmetric (with a Ritz estimate of
/// the smallest eigenvalue), BiCGSTAB otherwise.
pub fn galerkin_solve(sys: &System, v: &Arc<FeSpace>) -> Result<(FeFunction, SolveInfo)> {
    let n = sys.rhs.len();
    let mut x = vec![0.0; n];
    let max_iter = 20 * n + 1000;
    let info = if sys.symmetric {
        cg(&sys.matrix, &sys.rhs, &mut x, SOLVER_TOL, max_iter)?
    } else {
        bicgstab(&sys.matrix, &sys.rhs, &mut x, SOLVER_TOL, max_iter)?
    };
    Ok((FeFunction::new(v.clone(), x), info))
}

/// Residual contributions of one edge.
#[derive(Debug, Clone, Copy)]
pub struct EdgeTerm {
    /// Element positions on either side (second is None on the boundary).
    pub elems: (usize, Option<usize>),
    /// h_e ‖r_e‖²
    pub eta2: f64,
    /// h_e ‖(1 - Π_e) r_e‖²
    pub osc2: f64,
}

#[derive(Debug, Clone)]
pub struct EstimatorBreakdown {
    /// h_τ² ‖r_τ‖² per element.
    pub elem_eta2: Vec<f64>,
    /// h_τ² ‖(1 - Π_τ) r_τ‖² per element.
    pub elem_osc2: Vec<f64>,
    pub edges: Vec<EdgeTerm>,
    pub eta2: f64,
    pub osc2: f64,
    pub d: usize,
}

impl EstimatorBreakdown {
    pub fn eta(&self) -> f64 {
        self.eta2.sqrt()
    }

    pub fn osc(&self) -> f64 {
        self.osc2.sqrt()
    }

    /// Per-element indicators with each edge term split evenly between its elements.
    pub fn element_shares(&self) -> Vec<f64> {
        let mut s = self.elem_eta2.clone();
        for e in &self.edges {
            match e.elems.1 {
                Some(o) => {
                    s[e.elems.0] += 0.5 * e.eta2;
                    s[o] += 0.5 * e.eta2;
                }
                None => s[e.elems.0] += e.eta2,
            }
        }
        s
    }
}

/// Element residual f - T v at a point.
fn element_residual(pc: &PointCoeffs, f: f64, val: f64, g: [f64; 2], h: [[f64; 2]; 2]) -> f64 {
    let mut r = f - pc.c * val - pc.b[0] * g[0] - pc.b[1] * g[1];
    for i in 0..2 {
        for j in 0..2 {
            r += pc.a[i][j] * h[i][j];
        }
    }
    r
}

fn flux(prob: &EllipticProblem, x: Point, g: [f64; 2], n: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += prob.a[i][j].value(x) * g[j] * n[i];
        }
    }
    s
}

enum EdgeKind {
    Interior(usize),
    Neumann,
}

/// Edges of `space` carrying residual terms, each listed once from the finer side.
fn residual_edges(space: &FeSpace, gamma: &Gamma) -> Vec<(usize, usize, EdgeKind)> {
    let forest = &space.forest;
    let d = forest.read();
    let verts: Vec<[u32; 3]> = space.ids.iter().map(|&e| d.element(e).vertices).collect();
    let mut by_edge: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    let mut active: HashSet<u32> = HashSet::new();
    for (e, v) in verts.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(e);
            active.insert(v[k]);
        }
    }
    let mut out = Vec::new();
    for (e, v) in verts.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
            let key = (a.min(b), a.max(b));
            let sharers = &by_edge[&key];
            if sharers.len() == 2 {
                let o = if sharers[0] == e { sharers[1] } else { sharers[0] };
                if e < o {
                    out.push((e, k, EdgeKind::Interior(o)));
                }
                continue;
            }
            if let Some(mv) = d.midpoint_of(key.0, key.1) {
                if active.contains(&mv) {
                    continue;
                }
            }
            let c = space.coords[e];
            let (pa, pb) = (c[(k + 1) % 3], c[(k + 2) % 3]);
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            if forest.domain.on_boundary(mid) && forest.domain.on_boundary(pa) && forest.domain.on_boundary(pb) {
                if !gamma.contains_face(&forest.domain, pa, pb) {
                    out.push((e, k, EdgeKind::Neumann));
                }
                continue;
            }
            let n = outward_normal(&c, k);
            let eps = 1e-7 * dist(pa, pb);
            if let Some(o) = space.locate([mid[0] + eps * n[0], mid[1] + eps * n[1]]) {
                if o != e {
                    out.push((e, k, EdgeKind::Interior(o)));
                }
            }
        }
    }
    out
}

/// Unit normal of local edge k pointing away from the opposite vertex.
fn outward_normal(c: &[Point; 3], k: usize) -> [f64; 2] {
    let (a, b, o) = (c[(k + 1) % 3], c[(k + 2) % 3], c[k]);
    let t = [b[0] - a[0], b[1] - a[1]];
    let l = t[0].hypot(t[1]);
    let mut n = [t[1] / l, -t[0] / l];
    if (o[0] - a[0]) * n[0] + (o[1] - a[1]) * n[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// Residual estimator and oscillation (degree d for elements, d + 1 for edges).
pub fn estimator(prob: &EllipticProblem, v: &FeFunction, d: usize) -> Result<EstimatorBreakdown> {
    let space = &v.space;
    let m = space.degree();
    let nloc = space.nloc();
    let order = problem_order(m).max(2 * d);
    let tp = tri_projector(d, order);
    let elem: Vec<(f64, f64)> = (0..space.num_elements())
        .into_par_iter()
        .with_min_len(32)
        .map(|e| -> Result<(f64, f64)> {
            let a = space.affine[e];
            let lv = v.local_values(e);
            let h = diameter(&space.coords[e]);
            let jac = a.det.abs();
            let mut phi = [0.0; 15];
            let mut g = [[0.0; 2]; 15];
            let mut hs = [[[0.0; 2]; 2]; 15];
            let mut vals = DVector::zeros(tp.points.len());
            for (i, r) in tp.points.iter().enumerate() {
                let x = a.map(*r);
                space.basis.eval(*r, &mut phi[..nloc]);
                space.basis.eval_grad(*r, &mut g[..nloc]);
                space.basis.eval_hessian(*r, &mut hs[..nloc]);
                let mut val = 0.0;
                let mut gr = [0.0; 2];
                let mut hr = [[0.0; 2]; 2];
                for k in 0..nloc {
                    val += lv[k] * phi[k];
                    gr[0] += lv[k] * g[k][0];
                    gr[1] += lv[k] * g[k][1];
                    for p in 0..2 {
                        for q in 0..2 {
                            hr[p][q] += lv[k] * hs[k][p][q];
                        }
                    }
                }
                let pc = coeffs_at(prob, x)?;
                vals[i] = element_residual(&pc, prob.f.value(x), val, a.grad(gr), a.hessian(hr));
            }
            let coef = &tp.pinv * &vals;
            let fit = &tp.vand * coef;
            let mut eta2 = 0.0;
            let mut osc2 = 0.0;
            for i in 0..tp.points.len() {
                let w = tp.weights[i] * jac;
                eta2 += w * vals[i] * vals[i];
                osc2 += w * (vals[i] - fit[i]).powi(2);
            }
            Ok((h * h * eta2, h * h * osc2.min(eta2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ep = edge_projector(d + 1, order);
    let edges: Vec<EdgeTerm> = residual_edges(space, &prob.gamma)
        .into_par_iter()
        .with_min_len(64)
        .map(|(e, k, kind)| {
            let c = space.coords[e];
            let (pa, pb) = (c[(k + 1) % 3], c[(k + 2) % 3]);
            let n = outward_normal(&c, k);
            let lv = v.local_values(e);
            let lo = match kind {
                EdgeKind::Interior(o) => Some((o, v.local_values(o))),
                EdgeKind::Neumann => None,
            };
            let len = dist(pa, pb);
            let vals = DVector::from_iterator(
                ep.points.len(),
                ep.points.iter().map(|s| {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    let mut j = flux(prob, x, v.grad_with(e, &lv, x), n);
                    if let Some((o, lvo)) = &lo {
                        j -= flux(prob, x, v.grad_with(*o, lvo, x), n);
                    }
                    j
                }),
            );
            let coef = &ep.pinv * &vals;
            let mut eta2 = 0.0;
            let mut osc2 = 0.0;
            for (i, s) in ep.points.iter().enumerate() {
                let fit: f64 = coef.iter().rev().fold(0.0, |acc, c| acc * s + c);
                let w = ep.weights[i] * len;
                eta2 += w * vals[i] * vals[i];
                osc2 += w * (vals[i] - fit).powi(2);
            }
            EdgeTerm {
                elems: (e, lo.map(|x| x.0)),
                eta2: len * eta2,
                osc2: len * osc2.min(eta2),
            }
        })
        .collect();
    let elem_eta2: Vec<f64> = elem.iter().map(|x| x.0).collect();
    let elem_osc2: Vec<f64> = elem.iter().map(|x| x.1).collect();
    let eta2 = elem_eta2.iter().sum::<f64>() + edges.iter().map(|e| e.eta2).sum::<f64>();
    let osc2 = elem_osc2.iter().sum::<f64>() + edges.iter().map(|e| e.osc2).sum::<f64>();
    Ok(EstimatorBreakdown {
        elem_eta2,
        elem_osc2,
        edges,
        eta2,
        osc2,
        d,
    })
}

/// Oscillation part only.
pub fn oscillation(prob: &EllipticProblem, v: &FeFunction, d: usize) -> Result<f64> {
    Ok(estimator(prob, v, d)?.osc())
}

/// ‖u - v‖_{H¹} against the exact solution.
pub fn energy_error(prob: &EllipticProblem, v: &FeFunction) -> Result<f64> {
    let u = prob.exact.as_ref().ok_or(ApxError::MissingExactSolution)?;
    Ok(error_norm(&v.space, u, Some(v), NormKind::H1, problem_order(v.space.degree()) + 2, None))
}

/// ρ_d = (‖u - v‖²_{H¹} + osc_d²)^{1/2}.
pub fn total_error(prob: &EllipticProblem, v: &FeFunction, d: usize) -> Result<f64> {
    let e = energy_error(prob, v)?;
    let o = oscillation(prob, v, d)?;
    Ok((e * e + o * o).sqrt())
}

/// Sampled best approximation error of a coefficient from discontinuous degree-k polynomials.
#[derive(Debug, Clone, Copy)]
pub struct CoeffError {
    /// max_τ |τ|^{θ/2} ‖g - Π_τ g‖_{∞,τ} sampled on 66 interior points per element.
    pub sampled: f64,
    /// 1 + Lebesgue constant of the L2 projection: sampled / inflation ≤ true best error.
    pub inflation: f64,
}

/// Strictly interior points of the order-13 barycentric lattice (66 points),
/// so coefficients that jump across element edges are sampled from one side.
pub fn sample_grid() -> Vec<Point> {
    let n = 13;
    let mut out = Vec::with_capacity(66);
    for i in 1..n {
        for j in 1..n - i {
            out.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    out
}

/// Numerical L∞ operator norm of the degree-k L2 projection on a triangle.
pub fn projection_lebesgue_constant(k: usize) -> f64 {
    let q = crate::quadrature::triangle_rule(2 * k + 16);
    let n = poly_dim(k);
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut row = [0.0; 15];
    let rows: Vec<Vec<f64>> = q
        .points
        .iter()
        .map(|p| {
            crate::poly::eval_monomials(k, *p, &mut row[..n]);
            row[..n].to_vec()
        })
        .collect();
    for (r, w) in rows.iter().zip(&q.weights) {
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] += w * r[i] * r[j];
            }
        }
    }
    let inv = gram.try_inverse().expect("monomial Gram is invertible");
    let mut best = 0.0f64;
    for x in sample_grid() {
        crate::poly::eval_monomials(k, x, &mut row[..n]);
        let mx = DVector::from_row_slice(&row[..n]);
        let kx: DVector<f64> = &inv * mx;
        let l1: f64 = rows
            .iter()
            .zip(&q.weights)
            .map(|(r, w)| w * r.iter().zip(kx.iter()).map(|(a, b)| a * b).sum::<f64>().abs())
            .sum();
        best = best.max(l1);
    }
    best
}

/// E(g, S̄^k_P)_{L^∞_θ} surrogate.
pub fn coeff_class_error(g: &ScalarField, p: &Partition, k: usize, theta: f64) -> CoeffError {
    let v = FeSpace::discontinuous(p, k);
    let grid = sample_grid();
    let sampled = (0..v.num_elements())
        .into_par_iter()
        .with_min_len(32)
        .map(|e| {
            let a = v.affine[e];
            let proj = crate::fe::project::project_fn(|x| g.value(x), &a, k, 2 * k + 8);
            let err = grid
                .iter()
                .map(|r| (g.value(a.map(*r)) - proj.eval_ref(*r)).abs())
                .fold(0.0, f64::max);
            (0.5 * a.det.abs()).powf(theta / 2.0) * err
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    CoeffError {
        sampled,
        inflation: 1.0 + projection_lebesgue_constant(k),
    }
}

/// One row of the adaptive loop trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfemRow {
    pub iter: usize,
    pub n: usize,
    pub eta: f64,
    pub osc: f64,
    /// NaN when no exact solution is known.
    pub energy_err: f64,
    pub rho_d: f64,
    pub min_ritz: f64,
}

#[derive(Debug, Clone)]
pub struct AfemTrace {
    pub rows: Vec<AfemRow>,
    pub theta: f64,
    pub m: usize,
    pub d: usize,
    pub final_partition: Partition,
    /// Partition of each solve, aligned with `rows`.
    pub partitions: Vec<Partition>,
    pub completion: crate::mesh::CompletionLedger,
}

impl AfemTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,N,eta,osc,energy_err,rho_d,theta_D,m,d\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
                r.iter, r.n, r.eta, r.osc, r.energy_err, r.rho_d, self.theta, self.m, self.d
            ));
        }
        s
    }
}

/// Outcome of an adaptive run; `failure` holds the error that stopped it early.
#[derive(Debug)]
pub struct AfemRun {
    pub trace: AfemTrace,
    pub failure: Option<ApxError>,
}

/// Dörfler marking: the smallest set, taken in decreasing indicator order with
/// ties broken by element id, whose share reaches θ of the total.
pub fn dorfler_mark(shares: &[f64], ids: &[u32], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| shares[b].total_cmp(&shares[a]).then(ids[a].cmp(&ids[b])));
    if theta >= 1.0 {
        return order;
    }
    let total: f64 = shares.iter().sum();
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= theta * total {
            break;
        }
        acc += shares[i];
        out.push(i);
    }
    out
}

/// Settings of the adaptive loop.
#[derive(Debug, Clone, Copy)]
pub struct AfemSettings {
    pub m: usize,
    pub d: usize,
    pub theta: f64,
    pub max_iter: usize,
    pub max_cells: usize,
}

impl AfemSettings {
    pub fn new(m: usize) -> Self {
        AfemSettings {
            m,
            d: m.saturating_sub(2),
            theta: 0.5,
            max_iter: 20,
            max_cells: 200_000,
        }
    }
}

/// SOLVE, ESTIMATE, MARK, REFINE starting from `p0`.
pub fn afem_loop(prob: &EllipticProblem, p0: &Partition, s: &AfemSettings) -> AfemRun {
    let mut p = p0.clone();
    let mut rows = Vec::new();
    let mut partitions = Vec::new();
    let mut ledger = crate::mesh::CompletionLedger::new(p0.len());
    let mut failure = None;
    let mut iter = 0;
    loop {
        let step = || -> Result<(AfemRow, Vec<f64>)> {
            let v = Arc::new(FeSpace::continuous(&p, s.m, prob.gamma.clone()));
            let sys = assemble_system(prob, &v)?;
            let (uh, info) = galerkin_solve(&sys, &v)?;
            let est = estimator(prob, &uh, s.d)?;
            let energy = match prob.exact {
                Some(_) => energy_error(prob, &uh)?,
                None => f64::NAN,
            };
            let row = AfemRow {
                iter,
                n: p.len(),
                eta: est.eta(),
                osc: est.osc(),
                energy_err: energy,
                rho_d: (energy * energy + est.osc2).sqrt(),
                min_ritz: info.min_ritz,
            };
            Ok((row, est.element_shares()))
        };
        let (row, shares) = match step() {
            Ok(x) => x,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        rows.push(row);
        partitions.push(p.clone());
        if iter >= s.max_iter || p.len() >= s.max_cells {
            break;
        }
        let marked: Vec<u32> = dorfler_mark(&shares, p.active(), s.theta)
            .into_iter()
            .map(|i| p.active()[i])
            .collect();
        match p.refine_counted(&marked) {
            Ok((next, st)) => {
                ledger.record(st);
                p = next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        iter += 1;
    }
    AfemRun {
        trace: AfemTrace {
            rows,
            theta: s.theta,
            m: s.m,
            d: s.d,
            final_partition: p,
            partitions,
            completion: ledger,
        },
        failure,
    }
}

/// Nodal interpolant of a field in a continuous space (values at dof points).
pub fn nodal_interpolant(v: &Arc<FeSpace>, u: &ScalarField) -> FeFunction {
    let coeffs = v.dof_points.iter().map(|x| u.value(*x)).collect();
    FeFunction::new(v.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(name: &str, p: &Partition, m: usize) -> (EllipticProblem, FeFunction) {
        let prob = problem(name).unwrap();
        let v = Arc::new(FeSpace::continuous(p, m, prob.gamma.clone()));
        let sys = assemble_system(&prob, &v).unwrap();
        let (u, _) = galerkin_solve(&sys, &v).unwrap();
        (prob, u)
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let mut prob = problem("poisson_square").unwrap();
        prob.f = constant("zero", 0.0);
        let p = Partition::initial(unit_square(Rule::Nvb)).uniform(3);
        let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::All));
        let sys = assemble_system(&prob, &v).unwrap();
        let (u, _) = galerkin_solve(&sys, &v).unwrap();
        assert!(u.coeffs.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn one_unknown_closed_form() {
        let p = Partition::initial(unit_square(Rule::Nvb)).uniform(2);
        let mut prob = problem("poisson_square").unwrap();
        prob.f = constant("one", 1.0);
        let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::All));
        assert_eq!(v.ndofs, 1);
        let sys = assemble_system(&prob, &v).unwrap();
        let (u, _) = galerkin_solve(&sys, &v).unwrap();
        let expect = sys.rhs[0] / sys.matrix.get(0, 0);
        assert!((u.coeffs[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn polynomial_solution_has_zero_estimator() {
        let p = Partition::initial(unit_square(Rule::Nvb)).uniform(2);
        let (prob, _) = solve("poisson_polynomial", &p, 4);
        let v = Arc::new(FeSpace::continuous(&p, 4, Gamma::All));
        let ui = nodal_interpolant(&v, prob.exact.as_ref().unwrap());
        let est = estimator(&prob, &ui, 2).unwrap();
        assert!(est.eta() < 1e-10, "{}", est.eta());
    }

    #[test]
    fn affine_function_has_no_jumps() {
        let p = Partition::initial(l_shape(Rule::Red)).uniform(1);
        let p = p.refine(&[p.active()[3]]).unwrap();
        let mut prob = problem("poisson_square").unwrap();
        prob.f = constant("zero", 0.0);
        prob.gamma = Gamma::None;
        let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::None));
        let w = nodal_interpolant(&v, &ScalarField::from_fn("aff", |x| 1.0 + 2.0 * x[0] - x[1]));
        let est = estimator(&prob, &w, 0).unwrap();
        for e in &est.edges {
            if e.elems.1.is_some() {
                assert!(e.eta2 < 1e-24);
            }
        }
        assert!(est.elem_eta2.iter().all(|x| *x < 1e-24));
    }

    #[test]
    fn oscillation_bounded_and_decomposition_exact() {
        let p = Partition::initial(l_shape(Rule::Nvb)).uniform(4);
        let (prob, u) = solve("poisson_lshape", &p, 1);
        let est = estimator(&prob, &u, 0).unwrap();
        for (o, e) in est.elem_osc2.iter().zip(&est.elem_eta2) {
            assert!(o <= e);
        }
        for t in &est.edges {
            assert!(t.osc2 <= t.eta2);
        }
        let sum = est.elem_eta2.iter().sum::<f64>() + est.edges.iter().map(|e| e.eta2).sum::<f64>();
        assert!((sum - est.eta2).abs() <= 1e-14 * est.eta2);
        let shares: f64 = est.element_shares().iter().sum();
        assert!((shares - est.eta2).abs() <= 1e-12 * est.eta2);
    }

    #[test]
    fn dorfler_ties_by_id() {
        let m = dorfler_mark(&[1.0, 2.0, 2.0, 0.5], &[10, 7, 3, 1], 0.5);
        assert_eq!(m, vec![2, 1]);
        assert_eq!(dorfler_mark(&[1.0, 1.0], &[0, 1], 1.0).len(), 2);
    }

    #[test]
    fn afem_zero_iterations() {
        let prob = problem("poisson_lshape").unwrap();
        let p0 = Partition::initial(prob.forest(Rule::Nvb));
        let mut s = AfemSettings::new(1);
        s.max_iter = 0;
        let run = afem_loop(&prob, &p0, &s);
        assert!(run.failure.is_none());
        assert_eq!(run.trace.rows.len(), 1);
        assert!(run.trace.to_csv().starts_with("iter,N,eta,osc,energy_err,rho_d,theta_D,m,d\n"));
    }

    #[test]
    fn coefficient_errors() {
        let p = Partition::initial(l_shape(Rule::Red)).uniform(2);
        let aligned = crate::catalog::checkerboard(4, 10.0, 0.0);
        assert!(coeff_class_error(&aligned, &p, 0, 0.0).sampled < 1e-12);
        let shifted = crate::catalog::checkerboard(4, 10.0, 0.1);
        assert!(coeff_class_error(&shifted, &p, 0, 0.0).sampled > 1.0);
        let lin = ScalarField::from_fn("l", |x| x[0] - 3.0 * x[1]);
        assert!(coeff_class_error(&lin, &p, 1, 0.0).sampled < 1e-12);
        let c = coeff_class_error(&lin, &p, 0, 0.0);
        assert!(c.inflation >= 2.0);
    }
}
