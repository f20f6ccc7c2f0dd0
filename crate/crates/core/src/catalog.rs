//! Built-in fields on the unit square and the L-shaped domain.

use crate::fe::field::{FeFunction, FnField, ScalarField};
use crate::fe::space::FeSpace;
use crate::geometry::Point;
use crate::mesh::{Gamma, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// Names of the catalog fields, in a stable order.
pub const FIELD_NAMES: [&str; 5] = ["smooth_sine", "lshape_corner", "line_kink", "fe_native", "checkerboard"];

/// A named catalog field with notes on its expected smoothness.
#[derive(Debug, Clone)]
pub struct FieldCatalogEntry {
    pub name: &'static str,
    pub field: ScalarField,
    pub regularity: &'static str,
}

pub fn catalog_list(p0: &Partition, seed: u64) -> Vec<FieldCatalogEntry> {
    FIELD_NAMES.iter().map(|n| lookup(n, p0, seed).unwrap()).collect()
}

/// Catalog entry by name; `p0` supplies the mesh for mesh-bound fields.
pub fn lookup(name: &str, p0: &Partition, seed: u64) -> Option<FieldCatalogEntry> {
    let (field, regularity) = match name {
        "smooth_sine" => (smooth_sine(), "analytic; in every A^α_{p,q} below the polynomial saturation"),
        "lshape_corner" => (lshape_corner(), "H^s for s < 5/3; B^α_{q,q} for α < 2/3 + 2/q"),
        "line_kink" => (line_kink(0.5), "B^α_{p,p} for α < 1/2 + 1/p"),
        "fe_native" => (fe_native(p0, 2, 1, seed).into(), "member of S_{P_2}: multilevel tail vanishes from level 2"),
        "checkerboard" => (checkerboard(4, 10.0, 0.0), "piecewise constant on a 4x4 grid"),
        _ => return None,
    };
    Some(FieldCatalogEntry {
        name: FIELD_NAMES.iter().find(|n| **n == name).unwrap(),
        field,
        regularity,
    })
}

/// sin(πx) sin(πy).
pub fn smooth_sine() -> ScalarField {
    FnField::new("smooth_sine", |x| (PI * x[0]).sin() * (PI * x[1]).sin())
        .with_grad(|x| {
            [
                PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            ]
        })
        .with_hess(|x| {
            let (s0, c0, s1, c1) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
            let p2 = PI * PI;
            [[-p2 * s0 * s1, p2 * c0 * c1], [p2 * c0 * c1, -p2 * s0 * s1]]
        })
        .field()
}

/// Polar angle in [0, 2π).
pub fn angle(x: Point) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

const CORNER_EXP: f64 = 2.0 / 3.0;

fn corner_value(x: Point) -> f64 {
    let r = x[0].hypot(x[1]);
    r.powf(CORNER_EXP) * (CORNER_EXP * angle(x)).sin()
}

fn corner_grad(x: Point) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [0.0; 2];
    }
    let a = CORNER_EXP;
    let t = angle(x);
    let s = a * r.powf(a - 1.0);
    [s * ((a - 1.0) * t).sin(), s * ((a - 1.0) * t).cos()]
}

fn corner_hess(x: Point) -> [[f64; 2]; 2] {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [[0.0; 2]; 2];
    }
    let a = CORNER_EXP;
    let t = angle(x);
    let s = a * (a - 1.0) * r.powf(a - 2.0);
    let (sn, cs) = (((a - 2.0) * t).sin(), ((a - 2.0) * t).cos());
    [[s * sn, s * cs], [s * cs, -s * sn]]
}

/// r^{2/3} sin(2θ/3) around the re-entrant corner at the origin.
pub fn lshape_corner() -> ScalarField {
    FnField::new("lshape_corner", corner_value)
        .with_grad(corner_grad)
        .with_hess(corner_hess)
        .field()
}

/// |x - y|^β.
pub fn line_kink(beta: f64) -> ScalarField {
    FnField::new("line_kink", move |x| (x[0] - x[1]).abs().powf(beta))
        .with_grad(move |x| {
            let d = x[0] - x[1];
            if d == 0.0 {
                return [0.0; 2];
            }
            let g = beta * d.abs().powf(beta - 1.0) * d.signum();
            [g, -g]
        })
        .field()
}

/// Random member of the degree-`m` Lagrange space on the `level`-fold uniform refinement of `p0`.
pub fn fe_native(p0: &Partition, level: usize, m: usize, seed: u64) -> FeFunction {
    let p = p0.uniform(level);
    let v = Arc::new(FeSpace::continuous(&p, m, Gamma::None));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..v.ndofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeFunction::new(v, coeffs)
}

/// Piecewise constant field: `contrast` on the dark cells of a k x k grid over
/// [-1,1]^2 shifted by `offset`, 1 elsewhere.
pub fn checkerboard(k: usize, contrast: f64, offset: f64) -> ScalarField {
    let h = 2.0 / k as f64;
    FnField::new("checkerboard", move |x| {
        let i = ((x[0] + 1.0 - offset) / h).floor() as i64;
        let j = ((x[1] + 1.0 - offset) / h).floor() as i64;
        if (i + j).rem_euclid(2) == 0 {
            contrast
        } else {
            1.0
        }
    })
    .with_grad(|_| [0.0; 2])
    .field()
}

/// Smooth radial cutoff: 1 for r ≤ r0, 0 for r ≥ r1, quintic transition.
#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    pub r0: f64,
    pub r1: f64,
}

impl Cutoff {
    /// (χ, χ', χ'') at radius r.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.r0 {
            return (1.0, 0.0, 0.0);
        }
        if r >= self.r1 {
            return (0.0, 0.0, 0.0);
        }
        let l = self.r1 - self.r0;
        let t = (r - self.r0) / l;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        let dds = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
        (1.0 - s, -ds / l, -dds / (l * l))
    }
}

/// χ(r) r^{2/3} sin(2θ/3): vanishes on the whole L-shape boundary.
pub fn cutoff_corner(c: Cutoff) -> ScalarField {
    FnField::new("cutoff_corner", move |x| c.eval(x[0].hypot(x[1])).0 * corner_value(x))
        .with_grad(move |x| {
            let r = x[0].hypot(x[1]);
            if r == 0.0 {
                return [0.0; 2];
            }
            let (k, dk, _) = c.eval(r);
            let g = corner_grad(x);
            let s = corner_value(x);
            [k * g[0] + s * dk * x[0] / r, k * g[1] + s * dk * x[1] / r]
        })
        .field()
}

/// -Δ of the cutoff corner field (the corner part is harmonic).
pub fn cutoff_corner_load(c: Cutoff) -> ScalarField {
    FnField::new("cutoff_corner_load", move |x| {
        let r = x[0].hypot(x[1]);
        if r <= c.r0 || r >= c.r1 {
            return 0.0;
        }
        let (_, dk, ddk) = c.eval(r);
        let a = CORNER_EXP;
        let sn = (a * angle(x)).sin();
        -sn * (r.powf(a) * (ddk + dk / r) + 2.0 * a * dk * r.powf(a - 1.0))
    })
    .field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{l_shape, unit_square, Rule};

    fn fd_grad(f: &ScalarField, x: Point) -> [f64; 2] {
        let h = 1e-6;
        [
            (f.value([x[0] + h, x[1]]) - f.value([x[0] - h, x[1]])) / (2.0 * h),
            (f.value([x[0], x[1] + h]) - f.value([x[0], x[1] - h])) / (2.0 * h),
        ]
    }

    #[test]
    fn corner_derivatives_match_differences() {
        let u = lshape_corner();
        for x in [[0.3, 0.4], [-0.5, 0.2], [-0.3, -0.6], [0.7, 0.01]] {
            let g = u.gradient(x).unwrap();
            let fd = fd_grad(&u, x);
            assert!((g[0] - fd[0]).abs() < 1e-6 && (g[1] - fd[1]).abs() < 1e-6);
            let h = corner_hess(x);
            let e = 1e-6;
            let gx = corner_grad([x[0] + e, x[1]]);
            let gm = corner_grad([x[0] - e, x[1]]);
            assert!(((gx[0] - gm[0]) / (2.0 * e) - h[0][0]).abs() < 1e-5);
            assert!(((gx[1] - gm[1]) / (2.0 * e) - h[0][1]).abs() < 1e-5);
        }
        // vanishes on the two edges at the corner
        assert!(corner_value([0.5, 0.0]).abs() < 1e-15);
        assert!(corner_value([0.0, -0.5]).abs() < 1e-12);
    }

    #[test]
    fn cutoff_load_is_negative_laplacian() {
        let c = Cutoff { r0: 0.25, r1: 0.75 };
        let u = cutoff_corner(c);
        let f = cutoff_corner_load(c);
        let h = 1e-4;
        for x in [[0.3, 0.3], [-0.4, 0.2], [-0.2, -0.5], [0.5, 0.1]] {
            let lap = (u.value([x[0] + h, x[1]]) + u.value([x[0] - h, x[1]]) + u.value([x[0], x[1] + h])
                + u.value([x[0], x[1] - h])
                - 4.0 * u.value(x))
                / (h * h);
            assert!((f.value(x) + lap).abs() < 1e-4, "{} vs {}", f.value(x), -lap);
            let g = u.gradient(x).unwrap();
            let fd = fd_grad(&u, x);
            assert!((g[0] - fd[0]).abs() < 1e-6 && (g[1] - fd[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn catalog_entries_evaluable() {
        let p0 = Partition::initial(l_shape(Rule::Nvb));
        let list = catalog_list(&p0, 5);
        assert!(list.iter().any(|e| e.name == "lshape_corner"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for e in &list {
            let mut n = 0;
            while n < 1000 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                if !p0.forest().domain.contains(x) {
                    continue;
                }
                assert!(e.field.value(x).is_finite(), "{}", e.name);
                n += 1;
            }
        }
        let sq = Partition::initial(unit_square(Rule::Red));
        assert_eq!(catalog_list(&sq, 1).len(), FIELD_NAMES.len());
    }
}
