//! Monomial and Lagrange bases on the reference triangle.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub fn poly_dim(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs of the monomials of total degree <= `degree`, graded order.
pub fn monomials(degree: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(poly_dim(degree));
    for k in 0..=degree as u32 {
        for b in 0..=k {
            out.push((k - b, b));
        }
    }
    out
}

fn powers(x: f64, n: usize) -> [f64; 8] {
    let mut p = [1.0; 8];
    for k in 1..=n.min(7) {
        p[k] = p[k - 1] * x;
    }
    p
}

pub fn eval_monomials(degree: usize, r: [f64; 2], out: &mut [f64]) {
    let px = powers(r[0], degree);
    let py = powers(r[1], degree);
    let mut i = 0;
    for k in 0..=degree {
        for b in 0..=k {
            out[i] = px[k - b] * py[b];
            i += 1;
        }
    }
}

pub fn eval_monomial_grads(degree: usize, r: [f64; 2], out: &mut [[f64; 2]]) {
    let px = powers(r[0], degree);
    let py = powers(r[1], degree);
    let mut i = 0;
    for k in 0..=degree {
        for b in 0..=k {
            let a = k - b;
            let gx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let gy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            out[i] = [gx, gy];
            i += 1;
        }
    }
}

pub fn eval_monomial_hessians(degree: usize, r: [f64; 2], out: &mut [[[f64; 2]; 2]]) {
    let px = powers(r[0], degree);
    let py = powers(r[1], degree);
    let mut i = 0;
    for k in 0..=degree {
        for b in 0..=k {
            let a = k - b;
            let xx = if a > 1 { (a * (a - 1)) as f64 * px[a - 2] * py[b] } else { 0.0 };
            let yy = if b > 1 { (b * (b - 1)) as f64 * px[a] * py[b - 2] } else { 0.0 };
            let xy = if a > 0 && b > 0 {
                (a * b) as f64 * px[a - 1] * py[b - 1]
            } else {
                0.0
            };
            out[i] = [[xx, xy], [xy, yy]];
            i += 1;
        }
    }
}

/// Position of a Lagrange node in the reference element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(usize),
    /// On the edge between local vertices `a < b`, `s` lattice steps from `a`.
    Edge { a: usize, b: usize, s: usize },
    Interior,
}

/// Lagrange basis of degree `degree` on the equispaced lattice of the reference triangle.
#[derive(Debug)]
pub struct LagrangeBasis {
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Integer barycentric coordinates (scaled by the degree).
    pub lattice: Vec<[usize; 3]>,
    pub kinds: Vec<NodeKind>,
    /// coeffs[(i, k)] is the coefficient of monomial i in basis function k.
    pub coeffs: DMatrix<f64>,
}

impl LagrangeBasis {
    fn build(degree: usize) -> Self {
        if degree == 0 {
            return LagrangeBasis {
                degree,
                nodes: vec![[1.0 / 3.0, 1.0 / 3.0]],
                lattice: vec![[0, 0, 0]],
                kinds: vec![NodeKind::Interior],
                coeffs: DMatrix::from_element(1, 1, 1.0),
            };
        }
        let m = degree;
        let mut lattice = Vec::new();
        for j in 0..=m {
            for i in 0..=(m - j) {
                lattice.push([m - i - j, i, j]);
            }
        }
        // Vertices first, then edges, then interior nodes.
        let kind_of = |l: &[usize; 3]| -> NodeKind {
            if let Some(k) = (0..3).find(|&k| l[k] == m) {
                return NodeKind::Vertex(k);
            }
            if let Some(z) = (0..3).find(|&k| l[k] == 0) {
                let (a, b) = match z {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                return NodeKind::Edge { a, b, s: l[b] };
            }
            NodeKind::Interior
        };
        let rank = |k: &NodeKind| match k {
            NodeKind::Vertex(v) => (0, *v, 0),
            NodeKind::Edge { a, b, s } => (1, a * 3 + b, *s),
            NodeKind::Interior => (2, 0, 0),
        };
        lattice.sort_by_key(|l| rank(&kind_of(l)));
        let kinds: Vec<NodeKind> = lattice.iter().map(kind_of).collect();
        let nodes: Vec<[f64; 2]> = lattice
            .iter()
            .map(|l| [l[1] as f64 / m as f64, l[2] as f64 / m as f64])
            .collect();
        let n = nodes.len();
        let mut vand = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for (k, p) in nodes.iter().enumerate() {
            eval_monomials(m, *p, &mut row);
            for i in 0..n {
                vand[(k, i)] = row[i];
            }
        }
        let coeffs = vand.try_inverse().expect("Lagrange Vandermonde is invertible");
        LagrangeBasis {
            degree,
            nodes,
            lattice,
            kinds,
            coeffs,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval(&self, r: [f64; 2], out: &mut [f64]) {
        let n = self.len();
        let mut mono = [0.0; 15];
        eval_monomials(self.degree, r, &mut mono[..n]);
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self.coeffs[(i, k)] * mono[i];
            }
            out[k] = s;
        }
    }

    pub fn eval_grad(&self, r: [f64; 2], out: &mut [[f64; 2]]) {
        let n = self.len();
        let mut mono = [[0.0; 2]; 15];
        eval_monomial_grads(self.degree, r, &mut mono[..n]);
        for k in 0..n {
            let mut s = [0.0; 2];
            for i in 0..n {
                let c = self.coeffs[(i, k)];
                s[0] += c * mono[i][0];
                s[1] += c * mono[i][1];
            }
            out[k] = s;
        }
    }

    pub fn eval_hessian(&self, r: [f64; 2], out: &mut [[[f64; 2]; 2]]) {
        let n = self.len();
        let mut mono = [[[0.0; 2]; 2]; 15];
        eval_monomial_hessians(self.degree, r, &mut mono[..n]);
        for k in 0..n {
            let mut s = [[0.0; 2]; 2];
            for i in 0..n {
                let c = self.coeffs[(i, k)];
                for a in 0..2 {
                    for b in 0..2 {
                        s[a][b] += c * mono[i][a][b];
                    }
                }
            }
            out[k] = s;
        }
    }
}

/// Cached Lagrange basis; degrees 0..=4 are supported.
pub fn lagrange(degree: usize) -> Arc<LagrangeBasis> {
    assert!(degree <= 4, "Lagrange degree {degree} unsupported");
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<LagrangeBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry(degree)
        .or_insert_with(|| Arc::new(LagrangeBasis::build(degree)))
        .clone()
}

/// 1D Lagrange basis on the equispaced nodes k/m of [0,1], evaluated at t.
pub fn lagrange_1d(m: usize, t: f64) -> Vec<f64> {
    (0..=m)
        .map(|k| {
            let xk = k as f64 / m as f64;
            (0..=m)
                .filter(|&j| j != k)
                .map(|j| {
                    let xj = j as f64 / m as f64;
                    (t - xj) / (xk - xj)
                })
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_is_nodal() {
        for m in 0..=4 {
            let b = lagrange(m);
            let mut v = vec![0.0; b.len()];
            for (k, p) in b.nodes.iter().enumerate() {
                b.eval(*p, &mut v);
                for (j, x) in v.iter().enumerate() {
                    let e = if j == k { 1.0 } else { 0.0 };
                    assert!((x - e).abs() < 1e-12);
                }
            }
            assert_eq!(b.len(), poly_dim(m));
        }
    }

    #[test]
    fn lagrange_partition_of_unity_and_gradients() {
        let b = lagrange(3);
        let mut v = vec![0.0; b.len()];
        let mut g = vec![[0.0; 2]; b.len()];
        b.eval([0.21, 0.37], &mut v);
        b.eval_grad([0.21, 0.37], &mut g);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let gs: f64 = g.iter().map(|x| x[0]).sum();
        assert!(gs.abs() < 1e-12);
    }

    #[test]
    fn vertex_nodes_first() {
        let b = lagrange(2);
        assert_eq!(b.kinds[0], NodeKind::Vertex(0));
        assert_eq!(b.kinds[1], NodeKind::Vertex(1));
        assert_eq!(b.kinds[2], NodeKind::Vertex(2));
        assert_eq!(b.nodes[1], [1.0, 0.0]);
    }

    #[test]
    fn one_dimensional_basis() {
        let l = lagrange_1d(3, 0.4);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let l = lagrange_1d(2, 0.5);
        assert!((l[1] - 1.0).abs() < 1e-15);
    }
}
