use apxlab_core::adaptive::line_fit;
use apxlab_core::elliptic::*;
use apxlab_core::fe::FeSpace;
use apxlab_core::mesh::{unit_square, Partition, Rule};
use apxlab_core::ScalarField;
use std::sync::Arc;

fn solve(prob: &EllipticProblem, p: &Partition, m: usize) -> (System, apxlab_core::FeFunction) {
    let v = Arc::new(FeSpace::continuous(p, m, prob.gamma.clone()));
    let sys = assemble_system(prob, &v).unwrap();
    let (u, _) = galerkin_solve(&sys, &v).unwrap();
    (sys, u)
}

fn slope(pts: &[(usize, f64)]) -> f64 {
    let l: Vec<(f64, f64)> = pts.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).collect();
    -line_fit(&l).0
}

#[test]
fn smooth_poisson_uniform_energy_rate() {
    let prob = problem("poisson_square").unwrap();
    let p0 = Partition::initial(unit_square(Rule::Nvb));
    let mut pts = vec![];
    let mut osc = vec![];
    let mut eta = vec![];
    for l in [4, 6, 8, 10] {
        let p = p0.uniform(l);
        let (_, u) = solve(&prob, &p, 1);
        pts.push((p.len(), energy_error(&prob, &u).unwrap()));
        let est = estimator(&prob, &u, 0).unwrap();
        osc.push((p.len(), est.osc()));
        eta.push((p.len(), est.eta()));
    }
    let s = slope(&pts);
    assert!((s - 0.5).abs() < 0.05, "energy rate {s}");
    assert!(slope(&osc) > slope(&eta) + 0.3);
}

#[test]
fn galerkin_reproduces_polynomial_solution() {
    let prob = problem("poisson_polynomial").unwrap();
    let p = Partition::initial(unit_square(Rule::Red)).uniform(1);
    let (sys, u) = solve(&prob, &p, 4);
    let exact = nodal_interpolant(&u.space, prob.exact.as_ref().unwrap());
    let d = u.coeffs.iter().zip(&exact.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-8, "{d}");
    let mut r = vec![0.0; sys.rhs.len()];
    sys.matrix.matvec(&exact.coeffs, &mut r);
    let scale = sys.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for (a, b) in r.iter().zip(&sys.rhs) {
        assert!((a - b).abs() <= 1e-8 * scale);
    }
}

#[test]
fn interpolated_exact_solution_residual_decays() {
    let prob = problem("poisson_square").unwrap();
    let p0 = Partition::initial(unit_square(Rule::Nvb));
    let mut pts = vec![];
    for l in [2, 4, 6, 8] {
        let p = p0.uniform(l);
        let v = Arc::new(FeSpace::continuous(&p, 2, prob.gamma.clone()));
        let sys = assemble_system(&prob, &v).unwrap();
        let ui = nodal_interpolant(&v, prob.exact.as_ref().unwrap());
        let mut r = vec![0.0; sys.rhs.len()];
        sys.matrix.matvec(&ui.coeffs, &mut r);
        let res = r.iter().zip(&sys.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pts.push((p.len(), res));
    }
    assert!(slope(&pts) >= 0.5, "{pts:?}");
}

#[test]
fn reliability_constant_is_stable() {
    let prob = problem("poisson_lshape").unwrap();
    let p0 = Partition::initial(prob.forest(Rule::Nvb)).uniform(2);
    let mut s = AfemSettings::new(1);
    s.max_iter = 14;
    let run = afem_loop(&prob, &p0, &s);
    assert!(run.failure.is_none());
    let rows = &run.trace.rows[run.trace.rows.len() - 6..];
    let c: Vec<f64> = rows.iter().map(|r| r.energy_err / r.eta).collect();
    let mid = c.iter().sum::<f64>() / c.len() as f64;
    for x in &c {
        assert!((x - mid).abs() <= 0.2 * mid, "{c:?}");
    }
    assert!(rows.iter().all(|r| r.min_ritz > 0.0));
}

#[test]
fn lipschitz_coefficient_error_decays_like_h() {
    let g = ScalarField::from_fn("lip", |x| (x[0] - 0.3).abs() + x[1] * x[1]);
    let p0 = Partition::initial(unit_square(Rule::Red));
    let e: Vec<(usize, f64)> = (1..5)
        .map(|l| {
            let p = p0.uniform(l);
            (p.len(), coeff_class_error(&g, &p, 0, 0.0).sampled)
        })
        .collect();
    let s = slope(&e);
    assert!((s - 0.5).abs() < 0.1, "{e:?}");
}

#[test]
fn full_marking_is_uniform_refinement() {
    let prob = problem("poisson_square").unwrap();
    let p0 = Partition::initial(unit_square(Rule::Nvb));
    let mut s = AfemSettings::new(1);
    s.theta = 1.0;
    s.max_iter = 3;
    let run = afem_loop(&prob, &p0, &s);
    assert_eq!(run.trace.final_partition, p0.uniform(3));
}
