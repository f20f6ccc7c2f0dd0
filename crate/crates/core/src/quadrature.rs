//! Gauss rules on the unit interval and collapsed (Duffy) rules on the reference triangle.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Quadrature on the reference triangle (0,0),(1,0),(0,1); weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub order: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Quadrature on [0,1]; weights sum to 1.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on [0,1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(z) and P_{n-1}(z).
            let (mut pm, mut pn) = (1.0, z);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * z * pn - (k - 1) as f64 * pm) / k as f64;
                pm = pn;
                pn = pk;
            }
            if n == 1 {
                pm = 1.0;
                pn = z;
            }
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    (idx.iter().map(|&i| x[i]).collect(), idx.iter().map(|&i| w[i]).collect())
}

fn build_triangle(order: usize) -> QuadratureRule {
    let nu = (order + 2).div_ceil(2);
    let nv = (order + 1).div_ceil(2).max(1);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (u, a) in xu.iter().zip(&wu) {
        for (v, b) in xv.iter().zip(&wv) {
            points.push([*u, v * (1.0 - u)]);
            weights.push(a * b * (1.0 - u));
        }
    }
    QuadratureRule {
        order,
        points,
        weights,
    }
}

fn build_edge(order: usize) -> EdgeRule {
    let n = (order + 1).div_ceil(2).max(1);
    let (points, weights) = gauss_legendre(n);
    EdgeRule {
        order,
        points,
        weights,
    }
}

/// Cached triangle rule exact for polynomials of total degree `order`.
pub fn triangle_rule(order: usize) -> Arc<QuadratureRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(order)
        .or_insert_with(|| Arc::new(build_triangle(order)))
        .clone()
}

/// Cached interval rule exact for polynomials of degree `order`.
pub fn edge_rule(order: usize) -> Arc<EdgeRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<EdgeRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(order)
        .or_insert_with(|| Arc::new(build_edge(order)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn triangle_monomials_exact() {
        for order in 0..=16 {
            let q = triangle_rule(order);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let num: f64 = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!((num - exact).abs() < 1e-14, "order {order} x^{a}y^{b}");
                }
            }
        }
    }

    #[test]
    fn edge_monomials_exact() {
        for order in 0..=20 {
            let q = edge_rule(order);
            for a in 0..=order as i32 {
                let num: f64 = q.points.iter().zip(&q.weights).map(|(x, w)| w * x.powi(a)).sum();
                assert!((num - 1.0 / (a as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
