//! Smoothness functionals: moduli of smoothness, Besov and multilevel
//! approximation seminorms, weighted norms and K-functional upper bounds.

use crate::error::{ApxError, Result};
use crate::fe::best::{best_approx_error, default_p0};
use crate::fe::field::{FeFunction, ScalarField};
use crate::fe::integrate::{element_errors, NormKind};
use crate::fe::space::FeSpace;
use crate::geometry::{contains, Point};
use crate::mesh::{Domain, ElemId, Gamma, Partition};
use crate::quadrature::triangle_rule;
use crate::quasi;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashSet;
use std::sync::Arc;

/// Number of sampled shift directions in the modulus of smoothness.
pub const MODULUS_DIRECTIONS: usize = 16;
/// Number of sampled shift magnitudes in the modulus of smoothness.
pub const MODULUS_MAGNITUDES: usize = 8;

/// Result of an ℓ^q aggregation over levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormValue {
    pub value: f64,
    /// Last level included.
    pub truncation_j: usize,
    /// True when some level used a near-best surrogate instead of an exact best approximation.
    pub surrogate: bool,
    pub q: f64,
    /// (level, weighted contribution) pairs.
    pub detail: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

/// ℓ^q quasi-norm of a sequence.
pub fn lq_norm(values: impl IntoIterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.into_iter().fold(0.0, f64::max)
    } else {
        values.into_iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

impl SeminormValue {
    pub fn from_detail(detail: Vec<(usize, f64)>, q: f64, surrogate: bool) -> Self {
        let value = lq_norm(detail.iter().map(|d| d.1), q);
        SeminormValue {
            value,
            truncation_j: detail.last().map_or(0, |d| d.0),
            surrogate,
            q,
            detail,
            warning: None,
        }
    }

    /// Aggregates the stored detail again.
    pub fn recompute(&self) -> f64 {
        lq_norm(self.detail.iter().map(|d| d.1), self.q)
    }
}

/// Integration region for moduli of smoothness: a union of triangles, and
/// the rule deciding when a segment stays inside it.
#[derive(Debug, Clone)]
pub struct Region {
    pub triangles: Vec<[Point; 3]>,
    domain: Option<Domain>,
    points: Vec<(Point, f64)>,
}

impl Region {
    /// The whole domain, integrated on `levels` uniform refinements of the roots.
    pub fn domain(p0: &Partition, levels: usize) -> Self {
        Self::on_partition(&p0.uniform(levels))
    }

    /// The whole domain, integrated on the active elements of `p`.
    pub fn on_partition(p: &Partition) -> Self {
        let d = p.forest().read();
        let tris = p.active().iter().map(|&e| d.coords(e)).collect();
        drop(d);
        Self::build(tris, Some(p.forest().domain.clone()))
    }

    pub fn triangles(tris: Vec<[Point; 3]>) -> Self {
        Self::build(tris, None)
    }

    fn build(triangles: Vec<[Point; 3]>, domain: Option<Domain>) -> Self {
        let q = triangle_rule(6);
        let mut points = Vec::new();
        for t in &triangles {
            let a = crate::geometry::Affine::new(t);
            for (r, w) in q.points.iter().zip(&q.weights) {
                points.push((a.map(*r), w * a.det.abs()));
            }
        }
        Region {
            triangles,
            domain,
            points,
        }
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(crate::geometry::area).sum()
    }

    fn inside(&self, x: Point) -> bool {
        self.triangles.iter().any(|t| contains(t, x, 1e-12))
    }

    /// Whether the segment from x to y lies in the region.
    pub fn contains_segment(&self, x: Point, y: Point) -> bool {
        if let Some(d) = &self.domain {
            return d.contains_segment(x, y);
        }
        if self.triangles.len() == 1 {
            let t = &self.triangles[0];
            return contains(t, x, 1e-12) && contains(t, y, 1e-12);
        }
        (0..=16).all(|k| {
            let s = k as f64 / 16.0;
            self.inside([x[0] + s * (y[0] - x[0]), x[1] + s * (y[1] - x[1])])
        })
    }
}

fn binomial(r: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (r - i) as f64 / (i + 1) as f64)
}

/// ‖Δ_h^r u‖_{L^p(G_{rh})} for one shift h.
pub fn difference_norm(u: &ScalarField, r: usize, h: Point, p: f64, g: &Region) -> f64 {
    let coef: Vec<f64> = (0..=r)
        .map(|k| if (r - k) % 2 == 0 { 1.0 } else { -1.0 } * binomial(r, k))
        .collect();
    let mut acc = 0.0f64;
    for (x, w) in &g.points {
        let end = [x[0] + r as f64 * h[0], x[1] + r as f64 * h[1]];
        if !g.contains_segment(*x, end) {
            continue;
        }
        let d: f64 = (0..=r)
            .map(|k| coef[k] * u.value([x[0] + k as f64 * h[0], x[1] + k as f64 * h[1]]))
            .sum();
        if p.is_infinite() {
            acc = acc.max(d.abs());
        } else {
            acc += w * d.abs().powf(p);
        }
    }
    if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}

/// Sampled shifts with |h| ≤ t: 16 jittered directions times 8 magnitudes up to t.
pub fn sample_shifts(t: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(MODULUS_DIRECTIONS * MODULUS_MAGNITUDES);
    for i in 0..MODULUS_DIRECTIONS {
        let jitter: f64 = rng.gen_range(0.0..0.1);
        let ang = 2.0 * std::f64::consts::PI * (i as f64 + jitter) / MODULUS_DIRECTIONS as f64;
        for j in 1..=MODULUS_MAGNITUDES {
            let s = t * j as f64 / MODULUS_MAGNITUDES as f64;
            out.push([s * ang.cos(), s * ang.sin()]);
        }
    }
    out
}

/// ω_r(u, t, G)_p, the supremum over sampled shifts.
pub fn modulus(u: &ScalarField, r: usize, t: f64, p: f64, g: &Region, seed: u64) -> f64 {
    sample_shifts(t, seed)
        .par_iter()
        .map(|h| difference_norm(u, r, *h, p, g))
        .reduce(|| 0.0, f64::max)
}

/// Besov seminorm by ℓ^q aggregation of λ^{jα} ω_r(u, λ^{-j})_p, j = 0..=levels.
#[allow(clippy::too_many_arguments)]
pub fn besov_seminorm(
    u: &ScalarField,
    alpha: f64,
    p: f64,
    q: f64,
    r: usize,
    lambda: f64,
    levels: usize,
    g: &Region,
    seed: u64,
) -> SeminormValue {
    let detail = (0..=levels)
        .map(|j| {
            let t = lambda.powi(-(j as i32));
            (j, lambda.powf(j as f64 * alpha) * modulus(u, r, t, p, g, seed))
        })
        .collect();
    let mut s = SeminormValue::from_detail(detail, q, false);
    let bound = alpha - (1.0 / p - 1.0).max(0.0);
    if (r as f64) <= bound {
        s.warning = Some(format!(
            "difference order {r} does not exceed {bound}: the seminorm only sees polynomials"
        ));
    }
    s
}

/// Uniform refinement chain P_0, P_1, ... with degree-m continuous spaces.
#[derive(Debug, Clone)]
pub struct UniformChain {
    pub levels: Vec<Partition>,
    pub spaces: Vec<Arc<FeSpace>>,
    pub lambda: f64,
}

impl UniformChain {
    pub fn new(p0: &Partition, m: usize, depth: usize) -> Self {
        let mut levels = vec![p0.clone()];
        for _ in 0..depth {
            let next = levels.last().unwrap().uniform_refine();
            levels.push(next);
        }
        let spaces = levels
            .iter()
            .map(|p| Arc::new(FeSpace::continuous(p, m, Gamma::None)))
            .collect();
        UniformChain {
            levels,
            spaces,
            lambda: p0.lambda(),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Element positions of `space` lying inside the region given by forest elements
/// `g`; None when some element of the space straddles the region boundary.
pub fn aligned_positions(space: &FeSpace, g: &[ElemId]) -> Option<Vec<usize>> {
    let set: HashSet<ElemId> = g.iter().copied().collect();
    let d = space.forest.read();
    let mut out = Vec::new();
    for (i, &e) in space.ids.iter().enumerate() {
        let mut x = Some(e);
        let mut inside = false;
        while let Some(y) = x {
            if set.contains(&y) {
                inside = true;
                break;
            }
            x = d.parent(y);
        }
        if inside {
            out.push(i);
        } else if g.iter().any(|&r| d.is_ancestor_or_self(e, r)) {
            return None;
        }
    }
    Some(out)
}

/// Multilevel seminorm |u|_{A^α_{p,q}(G)} from best errors on a uniform chain.
/// `g` lists forest elements forming G (None for the whole domain); levels
/// on which G is not a union of elements are skipped.
pub fn multilevel_seminorm(
    u: &ScalarField,
    alpha: f64,
    p: f64,
    q: f64,
    chain: &UniformChain,
    g: Option<&[ElemId]>,
) -> Result<SeminormValue> {
    let mut detail = Vec::new();
    let mut surrogate = false;
    for (j, v) in chain.spaces.iter().enumerate() {
        let pos = match g {
            None => None,
            Some(g) => match aligned_positions(v, g) {
                Some(pos) => Some(pos),
                None => continue,
            },
        };
        let b = best_approx_error(u, v, p, pos.as_deref())?;
        surrogate |= b.surrogate;
        detail.push((j, chain.lambda.powf(j as f64 * alpha) * b.error));
    }
    Ok(SeminormValue::from_detail(detail, q, surrogate))
}

/// Relative depth of the local chains used for seminorms on support extensions.
pub const LOCAL_CHAIN_DEPTH: usize = 3;

/// Local multilevel seminorm on G, a set of forest elements of an admissible
/// partition. Levels run from the finest generation j0 in G to j0 + depth;
/// level j uses the generation-j descendants of G.
pub fn local_multilevel_seminorm(
    u: &ScalarField,
    alpha: f64,
    p: f64,
    q: f64,
    m: usize,
    p_ref: &Partition,
    g: &[ElemId],
    depth: usize,
) -> Result<SeminormValue> {
    if g.is_empty() {
        return Err(ApxError::EmptyRegion);
    }
    let forest = p_ref.forest().clone();
    let lambda = p_ref.lambda();
    let j0 = {
        let d = forest.read();
        g.iter().map(|&e| d.generation(e)).max().unwrap()
    };
    let mut detail = Vec::new();
    let mut surrogate = false;
    for j in j0..=j0 + depth as u32 {
        let mut ids: Vec<ElemId> = g.iter().flat_map(|&e| forest.descendants_at(e, j)).collect();
        ids.sort_unstable();
        let v = Arc::new(FeSpace::continuous_on(forest.clone(), &ids, m, Gamma::None));
        let err = if p == 2.0 {
            best_approx_error(u, &v, 2.0, None)?.error
        } else {
            surrogate = true;
            let w = quasi::q_tilde(&v, u, default_p0(p))?;
            let all: Vec<usize> = (0..v.num_elements()).collect();
            crate::fe::integrate::aggregate(
                NormKind::Lp(p),
                &element_errors(&v, u, Some(&w), NormKind::Lp(p), 2 * m + 2, &all),
            )
        };
        detail.push((j as usize, lambda.powf(j as f64 * alpha) * err));
    }
    Ok(SeminormValue::from_detail(detail, q, surrogate))
}

/// ‖u - v‖_{L^p_θ}: elementwise L^p norms weighted by |τ|^{θ/2}.
pub fn weighted_error(space: &FeSpace, u: &ScalarField, v: Option<&FeFunction>, theta: f64, p: f64) -> f64 {
    let all: Vec<usize> = (0..space.num_elements()).collect();
    let parts = element_errors(space, u, v, NormKind::Lp(p), 2 * space.degree() + 4, &all);
    let areas: Vec<f64> = space.affine.iter().map(|a| 0.5 * a.det.abs()).collect();
    if p.is_infinite() {
        parts
            .iter()
            .zip(&areas)
            .map(|(e, a)| a.powf(theta / 2.0) * e)
            .fold(0.0, f64::max)
    } else {
        parts
            .iter()
            .zip(&areas)
            .map(|(e, a)| a.powf(theta * p / 2.0) * e)
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// ‖u‖_{L^p_θ} over the elements of `partition`.
pub fn weighted_norm(u: &ScalarField, partition: &Partition, theta: f64, p: f64) -> f64 {
    let v = FeSpace::discontinuous(partition, 0);
    weighted_error(&v, u, None, theta, p)
}

/// Candidate table for the discrete K-functional bound.
#[derive(Debug, Clone)]
pub struct KFunctional {
    /// E(u, S_j)_{L^p} per level.
    pub errors: Vec<f64>,
    /// |u_j|_{A^α_{p,p}} of the level-j approximant.
    pub seminorms: Vec<f64>,
}

impl KFunctional {
    /// min_j E(u, S_j) + t |u_j|.
    pub fn eval(&self, t: f64) -> f64 {
        self.errors
            .iter()
            .zip(&self.seminorms)
            .map(|(e, s)| e + t * s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds the K-functional candidates from the chain's (near-)best approximants.
pub fn k_functional_upper(u: &ScalarField, alpha: f64, p: f64, chain: &UniformChain) -> Result<KFunctional> {
    let mut errors = Vec::new();
    let mut seminorms = Vec::new();
    for (j, v) in chain.spaces.iter().enumerate() {
        let b = best_approx_error(u, v, p, None)?;
        let uj: ScalarField = b.approximant.into();
        let mut terms = Vec::new();
        for i in 0..j {
            let e = best_approx_error(&uj, &chain.spaces[i], p, None)?.error;
            terms.push(chain.lambda.powf(i as f64 * alpha) * e);
        }
        errors.push(b.error);
        seminorms.push(lq_norm(terms, p));
    }
    Ok(KFunctional { errors, seminorms })
}

/// Largest ratio inf_{P_m} ‖u - v‖_{L^2(τ)} / ω_{m+1}(u, diam τ, τ)_2 over
/// `count` random shape-regular triangles inside the unit square.
pub fn whitney_constant(u: &ScalarField, m: usize, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let c = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
        let s = rng.gen_range(0.05..0.2);
        let rot: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let t: [Point; 3] = std::array::from_fn(|k| {
            let a = rot + k as f64 * std::f64::consts::TAU / 3.0 + rng.gen_range(-0.4..0.4);
            [c[0] + s * a.cos(), c[1] + s * a.sin()]
        });
        let area = crate::geometry::signed_area(&t);
        let diam = crate::geometry::diameter(&t);
        if area.abs() < 0.1 * diam * diam {
            continue;
        }
        let t = if area < 0.0 { [t[0], t[2], t[1]] } else { t };
        done += 1;
        let a = crate::geometry::Affine::new(&t);
        let proj = crate::fe::project::project_fn(|x| u.value(x), &a, m, 2 * m + 6);
        let q = triangle_rule(2 * m + 6);
        let best: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(r, w)| {
                let x = a.map(*r);
                w * a.det.abs() * (u.value(x) - proj.eval(x)).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let om = modulus(u, m + 1, diam, 2.0, &Region::triangles(vec![t]), seed);
        if om > 0.0 {
            worst = worst.max(best / om);
        }
    }
    worst
}
