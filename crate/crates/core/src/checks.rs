//! Invariant suites shared by the `check` command and the test targets.

use crate::catalog::{fe_native, lshape_corner, smooth_sine};
use crate::elliptic::{afem_loop, estimator, problem, AfemSettings};
use crate::error::Result;
use crate::fe::project::project_poly_element;
use crate::fe::{FeFunction, FeSpace, ScalarField};
use crate::geometry::area;
use crate::mesh::{l_shape, unit_square, Gamma, Partition, Rule};
use crate::quasi::{local_poly_approx, q_interp, q_tilde, DualBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured quantity against its tolerance.
    pub detail: String,
}

impl CheckResult {
    fn bound(name: &'static str, worst: f64, tol: f64) -> Self {
        CheckResult {
            name,
            passed: worst <= tol,
            detail: format!("worst {worst:.3e} (tolerance {tol:.1e})"),
        }
    }
}

/// Partition obtained by refining random subsets of the active elements.
pub fn random_partition(p0: &Partition, rounds: usize, frac: f64, rng: &mut ChaCha8Rng) -> Partition {
    let mut p = p0.clone();
    for _ in 0..rounds {
        let marked: Vec<_> = p.active().iter().copied().filter(|_| rng.gen_bool(frac)).collect();
        p = p.refine(&marked).expect("active ids are valid marks");
    }
    p
}

fn sample_partitions(seed: u64) -> Vec<Partition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for rule in [Rule::Nvb, Rule::Red] {
        for forest in [unit_square(rule), l_shape(rule)] {
            let p0 = Partition::initial(forest);
            for _ in 0..3 {
                let rounds = rng.gen_range(1..5);
                out.push(random_partition(&p0, rounds, 0.3, &mut rng));
            }
        }
    }
    out
}

/// Element areas sum to the domain area.
pub fn measure_conservation(seed: u64) -> CheckResult {
    let worst = sample_partitions(seed)
        .iter()
        .map(|p| {
            let total = p.forest().domain.area;
            (p.total_area() - total).abs() / total
        })
        .fold(0.0, f64::max);
    CheckResult::bound("measure conservation", worst, 1e-12)
}

/// Every child has exactly 1/2 (bisection) or 1/4 (red) of its parent's area.
pub fn child_areas(seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    for p in sample_partitions(seed) {
        let forest = p.forest();
        let k = p.rule().children() as f64;
        for e in 0..forest.num_elements() as u32 {
            let kids = forest.children(e);
            if kids.is_empty() {
                continue;
            }
            let a = area(&forest.coords(e));
            for c in kids {
                worst = worst.max((area(&forest.coords(c)) - a / k).abs() / a);
            }
        }
    }
    CheckResult::bound("child area ratio", worst, 1e-14)
}

/// NVB completions of random markings are conforming.
pub fn completion_conformity(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0usize;
    for forest in [unit_square(Rule::Nvb), l_shape(Rule::Nvb)] {
        let mut p = Partition::initial(forest);
        for _ in 0..8 {
            let marked: Vec<_> = p.active().iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
            p = p.complete(&marked).expect("conforming input").0;
            if !p.conformity_audit() {
                bad += 1;
            }
        }
    }
    CheckResult {
        name: "completion conformity",
        passed: bad == 0,
        detail: format!("{bad} non-conforming completions"),
    }
}

/// #(P ⊕ Q) ≤ #P + #Q on `pairs` random pairs over a shared forest.
pub fn overlay_cardinality(seed: u64, pairs: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0usize;
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let rule = if i % 2 == 0 { Rule::Nvb } else { Rule::Red };
        let p0 = Partition::initial(l_shape(rule));
        let a = random_partition(&p0, rng.gen_range(1..5), 0.3, &mut rng);
        let b = random_partition(&p0, rng.gen_range(1..5), 0.3, &mut rng);
        let o = a.overlay(&b).expect("shared forest");
        let ratio = o.len() as f64 / (a.len() + b.len()) as f64;
        worst = worst.max(ratio);
        if o.len() > a.len() + b.len() {
            bad += 1;
        }
    }
    CheckResult {
        name: "overlay cardinality",
        passed: bad == 0,
        detail: format!("{bad} violations, worst #(P+Q)/(#P+#Q) = {worst:.3}"),
    }
}

fn sample_spaces(seed: u64) -> Vec<Arc<FeSpace>> {
    let parts = sample_partitions(seed);
    let mut out = Vec::new();
    for (i, p) in parts.iter().enumerate().filter(|(i, _)| i % 3 == 0) {
        for m in 1..=3 {
            let gamma = if i % 2 == 0 { Gamma::None } else { Gamma::All };
            out.push(Arc::new(FeSpace::continuous(p, m, gamma)));
        }
    }
    out
}

/// Dual functionals against the nodal basis give the identity.
pub fn biorthogonality(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for v in sample_spaces(seed) {
        worst = worst.max(DualBasis::new(&v)?.gram_deviation());
    }
    Ok(CheckResult::bound("biorthogonality", worst, 1e-10))
}

/// Nodal basis functions sum to one on unmasked spaces.
pub fn partition_of_unity(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    for v in sample_spaces(seed).into_iter().filter(|v| v.gamma == Gamma::None) {
        let one = FeFunction::new(v.clone(), vec![1.0; v.ndofs]);
        for e in 0..v.num_elements() {
            let c = v.coords[e];
            let (s, t) = (rng.gen::<f64>(), rng.gen::<f64>());
            let (s, t) = if s + t > 1.0 { (1.0 - s, 1.0 - t) } else { (s, t) };
            let x = [
                c[0][0] + s * (c[1][0] - c[0][0]) + t * (c[2][0] - c[0][0]),
                c[0][1] + s * (c[1][1] - c[0][1]) + t * (c[2][1] - c[0][1]),
            ];
            worst = worst.max((one.eval_in(e, x) - 1.0).abs());
        }
    }
    CheckResult::bound("partition of unity", worst, 1e-12)
}

/// Q_P v = v and Q̃_P v = v for random members v.
pub fn reproduction(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for (i, rule) in [Rule::Nvb, Rule::Red].into_iter().enumerate() {
        let p0 = Partition::initial(l_shape(rule));
        for m in 1..=3 {
            let v = fe_native(&p0, 2, m, seed + i as u64 * 10 + m as u64);
            let scale = v.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            let field: ScalarField = v.clone().into();
            let q = q_interp(&v.space, &field)?;
            let qt = q_tilde(&v.space, &field, 0.5)?;
            for w in [q, qt] {
                let d = w.coeffs.iter().zip(&v.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(d / scale);
            }
        }
    }
    Ok(CheckResult::bound("quasi-interpolant reproduction", worst, 1e-10))
}

/// The L^2 local fit equals the L^2 projection.
pub fn local_l2_fit(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let fields = [smooth_sine(), lshape_corner()];
    for (k, p) in sample_partitions(seed).iter().enumerate().step_by(4) {
        let u = &fields[k % 2];
        for m in 0..=2 {
            let v = FeSpace::discontinuous(p, m);
            for e in (0..v.num_elements()).step_by(7) {
                let (fit, _) = local_poly_approx(&v, e, u, 2.0, m)?;
                let proj = project_poly_element(u, &v.coords[e], m, 2 * m + 4);
                for x in [[0.2, 0.2], [0.6, 0.1], [0.1, 0.7]] {
                    let d = (fit.eval_ref(x) - proj.eval_ref(x)).abs();
                    worst = worst.max(d / (1.0 + proj.eval_ref(x).abs()));
                }
            }
        }
    }
    Ok(CheckResult::bound("local L2 fit is the projection", worst, 1e-10))
}

/// osc ≤ η termwise along short adaptive runs of the built-in problems.
pub fn oscillation_bound() -> Result<CheckResult> {
    let mut bad = 0usize;
    let mut terms = 0usize;
    for name in crate::elliptic::PROBLEM_NAMES {
        let prob = problem(name).expect("built-in problem");
        let p0 = Partition::initial(prob.forest(Rule::Nvb)).uniform(1);
        let mut s = AfemSettings::new(1);
        s.max_iter = 4;
        let run = afem_loop(&prob, &p0, &s);
        if let Some(e) = run.failure {
            return Err(e);
        }
        let p = run.trace.final_partition;
        let v = Arc::new(FeSpace::continuous(&p, 1, prob.gamma.clone()));
        let sys = crate::elliptic::assemble_system(&prob, &v)?;
        let (uh, _) = crate::elliptic::galerkin_solve(&sys, &v)?;
        let est = estimator(&prob, &uh, 0)?;
        for (o, e) in est.elem_osc2.iter().zip(&est.elem_eta2) {
            terms += 1;
            bad += usize::from(o > e);
        }
        for t in &est.edges {
            terms += 1;
            bad += usize::from(t.osc2 > t.eta2);
        }
    }
    Ok(CheckResult {
        name: "oscillation below estimator",
        passed: bad == 0,
        detail: format!("{bad} of {terms} terms violate osc <= eta"),
    })
}

/// All structural checks.
pub fn structural_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        measure_conservation(seed),
        child_areas(seed),
        completion_conformity(seed),
        overlay_cardinality(seed, 100),
        biorthogonality(seed)?,
        partition_of_unity(seed),
        reproduction(seed)?,
        local_l2_fit(seed)?,
        oscillation_bound()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in structural_suite(7).unwrap() {
            println!("{}: {}", c.name, c.detail);
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
