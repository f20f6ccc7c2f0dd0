//! Scalar fields: closed-form functions, finite element members, and linear combinations.

use super::space::FeSpace;
use crate::geometry::Point;
use crate::mesh::{ElemId, Forest};
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

/// A closed-form field with optional derivative evaluators.
pub trait Analytic: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, _x: Point) -> Option<[f64; 2]> {
        None
    }
    fn hessian(&self, _x: Point) -> Option<[[f64; 2]; 2]> {
        None
    }
}

type ValFn = dyn Fn(Point) -> f64 + Send + Sync;
type GradFn = dyn Fn(Point) -> [f64; 2] + Send + Sync;
type HessFn = dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync;

/// Closure-backed analytic field.
pub struct FnField {
    pub name: String,
    pub f: Box<ValFn>,
    pub grad: Option<Box<GradFn>>,
    pub hess: Option<Box<HessFn>>,
}

impl FnField {
    pub fn new(name: &str, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        FnField {
            name: name.to_string(),
            f: Box::new(f),
            grad: None,
            hess: None,
        }
    }

    pub fn with_grad(mut self, g: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(g));
        self
    }

    pub fn with_hess(mut self, h: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        self.hess = Some(Box::new(h));
        self
    }

    pub fn field(self) -> ScalarField {
        ScalarField::Analytic(Arc::new(self))
    }
}

impl Analytic for FnField {
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, x: Point) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: Point) -> Option<[f64; 2]> {
        self.grad.as_ref().map(|g| g(x))
    }
    fn hessian(&self, x: Point) -> Option<[[f64; 2]; 2]> {
        self.hess.as_ref().map(|h| h(x))
    }
}

/// Coefficient vector in a finite element space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.ndofs);
        FeFunction { space, coeffs }
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.ndofs;
        FeFunction::new(space, vec![0.0; n])
    }

    pub fn local_values(&self, e: usize) -> Vec<f64> {
        self.space.local_values(e, &self.coeffs)
    }

    pub fn eval_in(&self, e: usize, x: Point) -> f64 {
        self.eval_with(e, &self.local_values(e), x)
    }

    /// Evaluation with precomputed local values.
    pub fn eval_with(&self, e: usize, lv: &[f64], x: Point) -> f64 {
        let r = self.space.affine[e].inverse(x);
        let mut phi = [0.0; 15];
        let n = self.space.nloc();
        self.space.basis.eval(r, &mut phi[..n]);
        (0..n).map(|k| lv[k] * phi[k]).sum()
    }

    pub fn grad_in(&self, e: usize, x: Point) -> [f64; 2] {
        self.grad_with(e, &self.local_values(e), x)
    }

    pub fn grad_with(&self, e: usize, lv: &[f64], x: Point) -> [f64; 2] {
        let a = &self.space.affine[e];
        let r = a.inverse(x);
        let mut g = [[0.0; 2]; 15];
        let n = self.space.nloc();
        self.space.basis.eval_grad(r, &mut g[..n]);
        let mut s = [0.0; 2];
        for k in 0..n {
            s[0] += lv[k] * g[k][0];
            s[1] += lv[k] * g[k][1];
        }
        a.grad(s)
    }

    pub fn hess_in(&self, e: usize, x: Point) -> [[f64; 2]; 2] {
        let a = &self.space.affine[e];
        let r = a.inverse(x);
        let mut h = [[[0.0; 2]; 2]; 15];
        let n = self.space.nloc();
        self.space.basis.eval_hessian(r, &mut h[..n]);
        let lv = self.local_values(e);
        let mut s = [[0.0; 2]; 2];
        for k in 0..n {
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += lv[k] * h[k][i][j];
                }
            }
        }
        a.hessian(s)
    }

    /// Point evaluation by location (0 outside the space's elements).
    pub fn value(&self, x: Point) -> f64 {
        self.space.locate(x).map_or(0.0, |e| self.eval_in(e, x))
    }

    pub fn scaled(&self, c: f64) -> FeFunction {
        FeFunction::new(self.space.clone(), self.coeffs.iter().map(|v| c * v).collect())
    }
}

#[derive(Clone)]
pub enum ScalarField {
    Analytic(Arc<dyn Analytic>),
    Fe(Arc<FeFunction>),
    /// Linear combination of fields.
    Combo(Vec<(f64, ScalarField)>),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Analytic(a) => write!(f, "Analytic({})", a.name()),
            ScalarField::Fe(u) => write!(f, "Fe(ndofs={})", u.coeffs.len()),
            ScalarField::Combo(v) => f.debug_list().entries(v.iter()).finish(),
        }
    }
}

impl From<FeFunction> for ScalarField {
    fn from(u: FeFunction) -> Self {
        ScalarField::Fe(Arc::new(u))
    }
}

impl ScalarField {
    pub fn from_fn(name: &str, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        FnField::new(name, f).field()
    }

    pub fn name(&self) -> String {
        match self {
            ScalarField::Analytic(a) => a.name().to_string(),
            ScalarField::Fe(_) => "fe".into(),
            ScalarField::Combo(_) => "combination".into(),
        }
    }

    pub fn value(&self, x: Point) -> f64 {
        match self {
            ScalarField::Analytic(a) => a.value(x),
            ScalarField::Fe(u) => u.value(x),
            ScalarField::Combo(v) => v.iter().map(|(c, f)| c * f.value(x)).sum(),
        }
    }

    pub fn gradient(&self, x: Point) -> Option<[f64; 2]> {
        match self {
            ScalarField::Analytic(a) => a.gradient(x),
            ScalarField::Fe(u) => Some(u.space.locate(x).map_or([0.0; 2], |e| u.grad_in(e, x))),
            ScalarField::Combo(v) => {
                let mut s = [0.0; 2];
                for (c, f) in v {
                    let g = f.gradient(x)?;
                    s[0] += c * g[0];
                    s[1] += c * g[1];
                }
                Some(s)
            }
        }
    }

    pub fn has_gradient(&self) -> bool {
        match self {
            ScalarField::Analytic(a) => a.gradient([0.0, 0.0]).is_some(),
            ScalarField::Fe(_) => true,
            ScalarField::Combo(v) => v.iter().all(|(_, f)| f.has_gradient()),
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField::Combo(vec![(c, self.clone())])
    }

    /// self - other
    pub fn minus(&self, other: &ScalarField) -> ScalarField {
        ScalarField::Combo(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }

    /// Strict-ancestor sets of all finite element components living on `forest`.
    pub fn resolution_sets(&self, forest: &Arc<Forest>) -> Vec<Arc<HashSet<ElemId>>> {
        match self {
            ScalarField::Analytic(_) => vec![],
            ScalarField::Fe(u) => {
                if Arc::ptr_eq(&u.space.forest, forest) {
                    vec![u.space.strict_ancestors()]
                } else {
                    vec![]
                }
            }
            ScalarField::Combo(v) => v.iter().flat_map(|(_, f)| f.resolution_sets(forest)).collect(),
        }
    }

    /// Evaluator bound to one integration cell (a forest element on which
    /// every finite element component is polynomial).
    pub fn on_cell(&self, cell: ElemId) -> CellField<'_> {
        let mut parts = Vec::new();
        self.collect(1.0, cell, &mut parts);
        CellField { parts }
    }

    fn collect<'a>(&'a self, c: f64, cell: ElemId, out: &mut Vec<(f64, Part<'a>)>) {
        match self {
            ScalarField::Analytic(a) => out.push((c, Part::Analytic(a.as_ref()))),
            ScalarField::Fe(u) => {
                let owner = u.space.owner_of(cell);
                let lv = owner.map(|e| u.local_values(e)).unwrap_or_default();
                out.push((c, Part::Fe(u.as_ref(), owner, lv)));
            }
            ScalarField::Combo(v) => {
                for (k, f) in v {
                    f.collect(c * k, cell, out);
                }
            }
        }
    }
}

enum Part<'a> {
    Analytic(&'a dyn Analytic),
    Fe(&'a FeFunction, Option<usize>, Vec<f64>),
}

pub struct CellField<'a> {
    parts: Vec<(f64, Part<'a>)>,
}

impl CellField<'_> {
    pub fn value(&self, x: Point) -> f64 {
        self.parts
            .iter()
            .map(|(c, p)| {
                c * match p {
                    Part::Analytic(a) => a.value(x),
                    Part::Fe(u, Some(e), lv) => u.eval_with(*e, lv, x),
                    Part::Fe(u, None, _) => u.value(x),
                }
            })
            .sum()
    }

    pub fn gradient(&self, x: Point) -> Option<[f64; 2]> {
        let mut s = [0.0; 2];
        for (c, p) in &self.parts {
            let g = match p {
                Part::Analytic(a) => a.gradient(x)?,
                Part::Fe(u, Some(e), lv) => u.grad_with(*e, lv, x),
                Part::Fe(u, None, _) => u.space.locate(x).map_or([0.0; 2], |e| u.grad_in(e, x)),
            };
            s[0] += c * g[0];
            s[1] += c * g[1];
        }
        Some(s)
    }

    pub fn hessian(&self, x: Point) -> Option<[[f64; 2]; 2]> {
        let mut s = [[0.0; 2]; 2];
        for (c, p) in &self.parts {
            let h = match p {
                Part::Analytic(a) => a.hessian(x)?,
                Part::Fe(u, Some(e), _) => u.hess_in(*e, x),
                Part::Fe(u, None, _) => u.space.locate(x).map_or([[0.0; 2]; 2], |e| u.hess_in(e, x)),
            };
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += c * h[i][j];
                }
            }
        }
        Some(s)
    }
}
