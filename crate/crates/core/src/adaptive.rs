//! Distance functions, greedy thresholding partitions, error budget curves
//! and rate fitting.

use crate::elliptic::{assemble_system, energy_error, galerkin_solve, oscillation, EllipticProblem};
use crate::error::{ApxError, Result};
use crate::fe::best::default_p0;
use crate::fe::integrate::{element_errors, error_norm, NormKind};
use crate::fe::{best_approx_error, best_h1, FeFunction, FeSpace, ScalarField};
use crate::mesh::{support_extensions, CompletionLedger, ElemId, Gamma, Partition};
use crate::quasi;
use crate::smoothness::{local_multilevel_seminorm, lq_norm, weighted_error, LOCAL_CHAIN_DEPTH};
use parking_lot::Mutex;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// ρ(u, v, P).
#[derive(Debug, Clone)]
pub enum DistanceFunction {
    /// ‖u - v‖_{H¹}
    Energy,
    /// ‖u - v‖_{L^p}
    Lp(f64),
    /// ‖u - v‖_{L^p_θ}, elementwise weights |τ|^{θ/2}; approximants are discontinuous.
    WeightedLp { p: f64, theta: f64 },
    /// (‖u - v‖²_{H¹} + osc_d(v)²)^{1/2} for the given problem.
    TotalError { problem: Arc<EllipticProblem>, d: usize },
}

impl DistanceFunction {
    pub fn tag(&self) -> String {
        match self {
            DistanceFunction::Energy => "h1".into(),
            DistanceFunction::Lp(p) => format!("lp({p})"),
            DistanceFunction::WeightedLp { p, theta } => format!("weighted_lp({p},{theta})"),
            DistanceFunction::TotalError { problem, d } => format!("total_error({d},{})", problem.name),
        }
    }
}

/// Evaluates ρ(u, v, P) with P the partition of `v`. An infinite value is
/// returned as `f64::INFINITY`, never as an error.
pub fn eval_distance(rho: &DistanceFunction, u: &ScalarField, v: &FeFunction) -> Result<f64> {
    let order = 2 * v.space.degree() + 4;
    Ok(match rho {
        DistanceFunction::Energy => error_norm(&v.space, u, Some(v), NormKind::H1, order, None),
        DistanceFunction::Lp(p) => error_norm(&v.space, u, Some(v), NormKind::Lp(*p), order, None),
        DistanceFunction::WeightedLp { p, theta } => weighted_error(&v.space, u, Some(v), *theta, *p),
        DistanceFunction::TotalError { problem, d } => {
            let e = error_norm(&v.space, u, Some(v), NormKind::H1, order, None);
            let o = oscillation(problem, v, *d)?;
            (e * e + o * o).sqrt()
        }
    })
}

/// E(u, S_P)_ρ computed from the (near-)best member of the degree-`m` space:
/// H¹ and L² projections, Q̃ for other L^p, elementwise fits for weighted
/// distances and the Galerkin solution for the total error.
/// The flag is true when the value is a surrogate.
pub fn best_distance(rho: &DistanceFunction, u: &ScalarField, p: &Partition, m: usize) -> Result<(f64, bool)> {
    match rho {
        DistanceFunction::Energy => {
            let v = Arc::new(FeSpace::continuous(p, m, Gamma::None));
            Ok((best_h1(u, &v)?.error, false))
        }
        DistanceFunction::Lp(q) => {
            let v = Arc::new(FeSpace::continuous(p, m, Gamma::None));
            let b = best_approx_error(u, &v, *q, None)?;
            Ok((b.error, b.surrogate))
        }
        DistanceFunction::WeightedLp { p: q, theta } => {
            let v = Arc::new(FeSpace::discontinuous(p, m));
            let w = quasi::broken_fe(&v, u, default_p0(*q))?;
            Ok((weighted_error(&v, u, Some(&w), *theta, *q), *q != 2.0))
        }
        DistanceFunction::TotalError { problem, d } => {
            let v = Arc::new(FeSpace::continuous(p, m, problem.gamma.clone()));
            let sys = assemble_system(problem, &v)?;
            let (uh, _) = galerkin_solve(&sys, &v)?;
            let e = if problem.exact.is_some() {
                energy_error(problem, &uh)?
            } else {
                error_norm(&v, u, Some(&uh), NormKind::H1, 2 * m + 4, None)
            };
            let o = oscillation(problem, &uh, *d)?;
            Ok(((e * e + o * o).sqrt(), false))
        }
    }
}

/// Element indicators e(τ, P) driving the greedy generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    /// |τ|^{pδ} |u|^p_{X(τ̂)} with X = A^α_{x_p,x_q} the local multilevel
    /// seminorm on the support extension τ̂.
    LocalSeminorm {
        alpha: f64,
        x_p: f64,
        x_q: f64,
        delta: f64,
        p: f64,
        m: usize,
    },
    /// |τ|^{θ·r/2} ‖u - w‖^r on τ, where w is Q̃u (or the elementwise fit when
    /// `broken`) of degree m and r is the norm exponent (2 for H¹ kinds).
    InterpError { norm: NormKind, m: usize, theta: f64, broken: bool },
}

impl Indicator {
    pub fn backend(&self) -> &'static str {
        match self {
            Indicator::LocalSeminorm { .. } => "local_seminorm",
            Indicator::InterpError { .. } => "interp_error",
        }
    }

    /// Whether values are near-best surrogates rather than exact.
    pub fn surrogate(&self) -> bool {
        match self {
            Indicator::LocalSeminorm { x_p, .. } => *x_p != 2.0,
            Indicator::InterpError { .. } => true,
        }
    }

    /// Indicator values for every active element of `p`, in active order.
    pub fn evaluate(&self, u: &ScalarField, p: &Partition, cache: &IndicatorCache) -> Result<Vec<f64>> {
        let areas: Vec<f64> = {
            let d = p.forest().read();
            p.active().iter().map(|&e| crate::geometry::area(&d.coords(e))).collect()
        };
        match *self {
            Indicator::LocalSeminorm {
                alpha,
                x_p,
                x_q,
                delta,
                p: pp,
                m,
            } => {
                let exts = support_extensions(p, m);
                let missing: Vec<Vec<ElemId>> = {
                    let map = cache.map.lock();
                    let mut miss: Vec<Vec<ElemId>> = exts.iter().filter(|k| !map.contains_key(*k)).cloned().collect();
                    miss.sort_unstable();
                    miss.dedup();
                    miss
                };
                let vals = missing
                    .par_iter()
                    .map(|g| Ok(local_multilevel_seminorm(u, alpha, x_p, x_q, m, p, g, LOCAL_CHAIN_DEPTH)?.value))
                    .collect::<Result<Vec<f64>>>()?;
                let mut map = cache.map.lock();
                for (k, v) in missing.into_iter().zip(vals) {
                    map.insert(k, v);
                }
                Ok(exts
                    .iter()
                    .zip(&areas)
                    .map(|(k, a)| a.powf(pp * delta) * map[k].powf(pp))
                    .collect())
            }
            Indicator::InterpError { norm, m, theta, broken } => {
                let r = match norm {
                    NormKind::Lp(r) => r,
                    NormKind::H1 | NormKind::H1Semi => 2.0,
                };
                let (space, w) = if broken {
                    let v = Arc::new(FeSpace::discontinuous(p, m));
                    let w = quasi::broken_fe(&v, u, default_p0(r))?;
                    (v, w)
                } else {
                    let v = Arc::new(FeSpace::continuous(p, m, Gamma::None));
                    let w = quasi::q_tilde(&v, u, default_p0(r))?;
                    (v, w)
                };
                let all: Vec<usize> = (0..space.num_elements()).collect();
                let parts = element_errors(&space, u, Some(&w), norm, 2 * m + 4, &all);
                let expo = if r.is_infinite() { theta / 2.0 } else { theta * r / 2.0 };
                Ok(parts.iter().zip(&areas).map(|(e, a)| a.powf(expo) * e).collect())
            }
        }
    }
}

/// Memo of local seminorms keyed by the sorted ids of τ̂. Valid for one
/// field, one indicator and one forest.
#[derive(Debug, Default)]
pub struct IndicatorCache {
    map: Mutex<HashMap<Vec<ElemId>, f64>>,
}

impl IndicatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Limits of one greedy run.
#[derive(Debug, Clone, Copy)]
pub struct GreedyLimits {
    /// Maximum number of refinement rounds.
    pub cap: usize,
    /// Rounds stop with an iteration-cap error once the partition exceeds this size.
    pub max_cells: usize,
}

impl Default for GreedyLimits {
    fn default() -> Self {
        GreedyLimits {
            cap: 60,
            max_cells: 400_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub partition: Partition,
    pub ledger: CompletionLedger,
    /// max_τ e(τ, P) on the output, which is ≤ ε.
    pub max_indicator: f64,
}

/// Refines every element whose indicator exceeds ε until none does.
pub fn greedy_partition(
    u: &ScalarField,
    ind: &Indicator,
    eps: f64,
    p0: &Partition,
    cache: &IndicatorCache,
    limits: GreedyLimits,
) -> Result<GreedyResult> {
    if !(eps > 0.0) {
        return Err(ApxError::InvalidArgument(format!("greedy threshold must be positive, got {eps}")));
    }
    let mut p = p0.clone();
    let mut ledger = CompletionLedger::new(p0.len());
    loop {
        let e = ind.evaluate(u, &p, cache)?;
        let marked: Vec<ElemId> = e
            .iter()
            .zip(p.active())
            .filter(|(v, _)| **v > eps)
            .map(|(_, &id)| id)
            .collect();
        if marked.is_empty() {
            let max_indicator = e.iter().copied().fold(0.0, f64::max);
            return Ok(GreedyResult {
                partition: p,
                ledger,
                max_indicator,
            });
        }
        if ledger.marked.len() >= limits.cap || p.len() > limits.max_cells {
            return Err(ApxError::IterationCap {
                cap: limits.cap,
                marked: ledger.marked,
                sizes: ledger.sizes,
            });
        }
        let (next, step) = p.refine_counted(&marked)?;
        ledger.record(step);
        p = next;
    }
}

/// Geometric threshold sequence ε_k = start·factor^k.
#[derive(Debug, Clone, Copy)]
pub struct EpsSchedule {
    /// None: the largest indicator on P₀.
    pub start: Option<f64>,
    pub factor: f64,
    pub steps: usize,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule {
            start: None,
            factor: 0.5,
            steps: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub n: usize,
    pub error: f64,
    /// Threshold that produced the sample (NaN for uniform refinements).
    pub epsilon: f64,
    pub surrogate: bool,
}

/// Error against cell count. The envelope is an upper bound on the true
/// best error with the given budget, since only greedy partitions are searched.
#[derive(Debug, Clone)]
pub struct BudgetCurve {
    pub samples: Vec<CurveSample>,
    pub backend: String,
    /// Completion ledgers of the greedy runs, one per sample.
    pub ledgers: Vec<CompletionLedger>,
    /// Set when the schedule stopped early at the cell limit.
    pub truncated: bool,
}

impl BudgetCurve {
    /// (N, min error over samples with N' ≤ N), one entry per distinct N.
    pub fn envelope(&self) -> Vec<(usize, f64)> {
        let mut s: Vec<(usize, f64)> = self.samples.iter().map(|s| (s.n, s.error)).collect();
        s.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut best = f64::INFINITY;
        for (n, e) in s {
            best = best.min(e);
            match out.last_mut() {
                Some(last) if last.0 == n => last.1 = best,
                _ => out.push((n, best)),
            }
        }
        out
    }

    pub fn surrogate(&self) -> bool {
        self.samples.iter().any(|s| s.surrogate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,error,epsilon,surrogate\n");
        for r in &self.samples {
            s.push_str(&format!("{},{:.12e},{:.12e},{}\n", r.n, r.error, r.epsilon, r.surrogate));
        }
        s
    }
}

/// Runs the greedy generator for every ε of the schedule, sequentially on the
/// forest of `p0`, and evaluates E(u, S_P)_ρ on each output.
pub fn budget_curve(
    u: &ScalarField,
    rho: &DistanceFunction,
    ind: &Indicator,
    m: usize,
    schedule: EpsSchedule,
    p0: &Partition,
    limits: GreedyLimits,
) -> Result<BudgetCurve> {
    let cache = IndicatorCache::new();
    let start = match schedule.start {
        Some(s) => s,
        None => ind.evaluate(u, p0, &cache)?.into_iter().fold(0.0, f64::max),
    };
    let mut samples = Vec::new();
    let mut ledgers = Vec::new();
    let mut truncated = false;
    for k in 0..schedule.steps {
        let eps = start * schedule.factor.powi(k as i32);
        if eps <= 0.0 {
            break;
        }
        let g = match greedy_partition(u, ind, eps, p0, &cache, limits) {
            Ok(g) => g,
            Err(ApxError::IterationCap { .. }) if !samples.is_empty() => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (error, surrogate) = best_distance(rho, u, &g.partition, m)?;
        samples.push(CurveSample {
            n: g.partition.len(),
            error,
            epsilon: eps,
            surrogate: surrogate || ind.surrogate(),
        });
        ledgers.push(g.ledger);
    }
    Ok(BudgetCurve {
        samples,
        backend: ind.backend().to_string(),
        ledgers,
        truncated,
    })
}

/// E(u, S_P)_ρ along uniform refinements P₀, P₁, ... (levels given by `levels`).
pub fn uniform_curve(
    u: &ScalarField,
    rho: &DistanceFunction,
    m: usize,
    p0: &Partition,
    levels: impl IntoIterator<Item = usize>,
) -> Result<BudgetCurve> {
    let mut samples = Vec::new();
    for l in levels {
        let p = p0.uniform(l);
        let (error, surrogate) = best_distance(rho, u, &p, m)?;
        samples.push(CurveSample {
            n: p.len(),
            error,
            epsilon: f64::NAN,
            surrogate,
        });
    }
    Ok(BudgetCurve {
        samples,
        backend: "uniform".into(),
        ledgers: vec![],
        truncated: false,
    })
}

/// Fitted decay rate of a budget curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// s in E ≈ c N^{-s}.
    pub s: f64,
    pub n_lo: usize,
    pub n_hi: usize,
    /// RMS of the residuals of the log-log fit.
    pub rms: f64,
    pub backend: String,
    pub surrogate: bool,
}

impl RateReport {
    pub fn to_csv(&self) -> String {
        format!("s,N_lo,N_hi,rms,backend\n{:.12e},{},{},{:.12e},{}\n", self.s, self.n_lo, self.n_hi, self.rms, self.backend)
    }
}

/// Least-squares line through (x, y): (slope, intercept, rms residual).
pub fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Points of the envelope used by a fit: N inside the window and positive error.
pub fn fit_points(curve: &BudgetCurve, window: Option<(usize, usize)>) -> Vec<(usize, f64)> {
    let (lo, hi) = window.unwrap_or((0, usize::MAX));
    curve
        .envelope()
        .into_iter()
        .filter(|&(n, e)| n >= lo && n <= hi && e > 0.0)
        .collect()
}

/// Least-squares slope of log E against log N over the envelope points in `window`.
pub fn fit_rate(curve: &BudgetCurve, window: Option<(usize, usize)>) -> Result<RateReport> {
    let pts = fit_points(curve, window);
    if pts.len() < 4 {
        return Err(ApxError::DegenerateWindow(format!("{} usable points, need 4", pts.len())));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).collect();
    let (slope, _, rms) = line_fit(&logs);
    if !slope.is_finite() {
        return Err(ApxError::DegenerateWindow("non-finite slope".into()));
    }
    Ok(RateReport {
        s: -slope,
        n_lo: pts[0].0,
        n_hi: pts[pts.len() - 1].0,
        rms,
        backend: curve.backend.clone(),
        surrogate: curve.surrogate(),
    })
}

/// ‖(2^{ks} E_k)_k‖_{ℓ^q} with E_k read off the envelope at the budget
/// N = 2^k·n0, for every k whose budget lies inside the curve's range.
pub fn approx_class_seminorm(curve: &BudgetCurve, s: f64, q: f64, n0: usize) -> f64 {
    let env = curve.envelope();
    let Some(&(n_max, _)) = env.last() else {
        return 0.0;
    };
    let mut terms = Vec::new();
    let mut k = 0i32;
    loop {
        let budget = n0 as f64 * 2f64.powi(k);
        if budget > n_max as f64 {
            break;
        }
        if let Some(&(_, e)) = env.iter().rev().find(|(n, _)| *n as f64 <= budget) {
            terms.push(2f64.powf(k as f64 * s) * e);
        }
        k += 1;
    }
    lq_norm(terms, q)
}
