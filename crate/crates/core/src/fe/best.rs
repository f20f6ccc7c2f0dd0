//! Best approximation from finite element spaces.

use super::assemble::{assemble_gram_on, assemble_load, Form};
use super::field::{FeFunction, ScalarField};
use super::integrate::{default_order, error_norm, NormKind};
use super::space::FeSpace;
use crate::error::{ApxError, Result};
use crate::linalg::{cg, CsrMatrix};
use crate::quasi;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct BestApprox {
    pub error: f64,
    /// True when the value is a near-best surrogate rather than the exact minimum.
    pub surrogate: bool,
    pub approximant: FeFunction,
}

/// Local exponent used for near-best surrogates in L^p.
pub fn default_p0(p: f64) -> f64 {
    if p >= 2.0 {
        2.0
    } else {
        p.min(1.0) / 2.0
    }
}

/// Keeps the rows and columns listed in `keep`.
fn restrict(a: &CsrMatrix, keep: &[usize], n: usize) -> CsrMatrix {
    let mut pos = vec![usize::MAX; n];
    for (i, &k) in keep.iter().enumerate() {
        pos[k] = i;
    }
    let mut trip = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        for (j, v) in a.row(k) {
            if pos[j] != usize::MAX {
                trip.push((i, pos[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(keep.len(), keep.len(), trip)
}

/// Solves the normal equations of `form` restricted to the elements `elems`.
fn normal_equations(u: &ScalarField, v: &Arc<FeSpace>, form: Form, elems: &[usize]) -> Result<FeFunction> {
    let order = default_order(v.degree());
    let a = assemble_gram_on(v, form, order, elems);
    let b = assemble_load(v, u, order, elems, form == Form::H1);
    let mut keep: Vec<usize> = elems.iter().flat_map(|&e| v.element_dofs(e)).collect();
    keep.sort_unstable();
    keep.dedup();
    let ar = restrict(&a, &keep, v.ndofs);
    let br: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
    let mut x = vec![0.0; keep.len()];
    cg(&ar, &br, &mut x, 1e-13, 20 * keep.len() + 200)?;
    let mut coeffs = vec![0.0; v.ndofs];
    for (i, &k) in keep.iter().enumerate() {
        coeffs[k] = x[i];
    }
    Ok(FeFunction::new(v.clone(), coeffs))
}

fn region(v: &FeSpace, g: Option<&[usize]>) -> Result<Vec<usize>> {
    let elems: Vec<usize> = match g {
        Some(g) => g.to_vec(),
        None => (0..v.num_elements()).collect(),
    };
    if elems.is_empty() {
        return Err(ApxError::EmptyRegion);
    }
    Ok(elems)
}

/// E(u, S_V)_{L^p(G)} for G a set of element positions of `v` (all when None).
/// Exact for p = 2; near-best surrogate otherwise.
pub fn best_approx_error(u: &ScalarField, v: &Arc<FeSpace>, p: f64, g: Option<&[usize]>) -> Result<BestApprox> {
    let elems = region(v, g)?;
    let order = default_order(v.degree());
    if p == 2.0 {
        let w = normal_equations(u, v, Form::Mass, &elems)?;
        let error = error_norm(v, u, Some(&w), NormKind::Lp(2.0), order, Some(&elems));
        return Ok(BestApprox {
            error,
            surrogate: false,
            approximant: w,
        });
    }
    let p0 = default_p0(p);
    let w = if v.is_continuous() {
        quasi::q_tilde(v, u, p0)?
    } else {
        quasi::broken_fe(v, u, p0)?
    };
    let error = error_norm(v, u, Some(&w), NormKind::Lp(p), order, Some(&elems));
    Ok(BestApprox {
        error,
        surrogate: true,
        approximant: w,
    })
}

/// Best approximation in the full H1 norm over the whole space.
pub fn best_h1(u: &ScalarField, v: &Arc<FeSpace>) -> Result<BestApprox> {
    if !u.has_gradient() {
        return Err(ApxError::MissingGradient(u.name()));
    }
    let elems = region(v, None)?;
    let w = normal_equations(u, v, Form::H1, &elems)?;
    let error = error_norm(v, u, Some(&w), NormKind::H1, default_order(v.degree()), None);
    Ok(BestApprox {
        error,
        surrogate: false,
        approximant: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, Gamma, Partition, Rule};
    use std::f64::consts::PI;

    fn sine() -> ScalarField {
        ScalarField::from_fn("s", |x| (PI * x[0]).sin() * (PI * x[1]).sin())
    }

    #[test]
    fn members_have_zero_error() {
        let p = Partition::initial(unit_square(Rule::Red)).uniform(2);
        let v = Arc::new(FeSpace::continuous(&p, 2, Gamma::None));
        let u: ScalarField = FeFunction::new(v.clone(), (0..v.ndofs).map(|i| (i as f64 * 0.37).sin()).collect()).into();
        let b = best_approx_error(&u, &v, 2.0, None).unwrap();
        assert!(b.error < 1e-10);
        assert!(!b.surrogate);
    }

    #[test]
    fn nested_chain_is_monotone_with_rate_two() {
        let mut p = Partition::initial(unit_square(Rule::Red));
        let mut prev = f64::INFINITY;
        let mut errs = vec![];
        for _ in 0..5 {
            let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::None));
            let e = best_approx_error(&sine(), &v, 2.0, None).unwrap().error;
            assert!(e <= prev + 1e-12);
            prev = e;
            errs.push(e);
            p = p.uniform_refine();
        }
        let ratio = errs[3] / errs[4];
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn empty_region_rejected() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        let v = Arc::new(FeSpace::continuous(&p, 1, Gamma::None));
        assert!(matches!(best_approx_error(&sine(), &v, 2.0, Some(&[])), Err(ApxError::EmptyRegion)));
    }
}
