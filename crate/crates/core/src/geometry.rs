//! Planar geometry helpers for triangles and segments.

pub type Point = [f64; 2];

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Signed area, positive for counter-clockwise vertex order.
pub fn signed_area(t: &[Point; 3]) -> f64 {
    0.5 * cross(sub(t[1], t[0]), sub(t[2], t[0]))
}

pub fn area(t: &[Point; 3]) -> f64 {
    signed_area(t).abs()
}

pub fn diameter(t: &[Point; 3]) -> f64 {
    dist(t[0], t[1]).max(dist(t[1], t[2])).max(dist(t[2], t[0]))
}

pub fn centroid(t: &[Point; 3]) -> Point {
    [
        (t[0][0] + t[1][0] + t[2][0]) / 3.0,
        (t[0][1] + t[1][1] + t[2][1]) / 3.0,
    ]
}

/// Affine map from the reference triangle (0,0),(1,0),(0,1).
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub origin: Point,
    /// Columns are the edge vectors v1-v0 and v2-v0.
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl Affine {
    pub fn new(t: &[Point; 3]) -> Self {
        let e1 = sub(t[1], t[0]);
        let e2 = sub(t[2], t[0]);
        let jac = [[e1[0], e2[0]], [e1[1], e2[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        Affine {
            origin: t[0],
            jac,
            inv,
            det,
        }
    }

    pub fn map(&self, r: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    pub fn inverse(&self, x: Point) -> Point {
        let d = sub(x, self.origin);
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient from a reference gradient: J^{-T} g.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Physical Hessian from a reference Hessian: J^{-T} H J^{-1}.
    pub fn hessian(&self, h: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += self.inv[i][a] * h[i][j] * self.inv[j][b];
                    }
                }
                out[a][b] = s;
            }
        }
        out
    }
}

/// Barycentric coordinates of `x` with respect to `t`.
pub fn barycentric(t: &[Point; 3], x: Point) -> [f64; 3] {
    let r = Affine::new(t).inverse(x);
    [1.0 - r[0] - r[1], r[0], r[1]]
}

pub fn contains(t: &[Point; 3], x: Point, tol: f64) -> bool {
    barycentric(t, x).iter().all(|&l| l >= -tol)
}

/// Proper crossing of the segments pq and ab (touching endpoints do not count).
pub fn segments_cross(p: Point, q: Point, a: Point, b: Point) -> bool {
    let d1 = cross(sub(q, p), sub(a, p));
    let d2 = cross(sub(q, p), sub(b, p));
    let d3 = cross(sub(b, a), sub(p, a));
    let d4 = cross(sub(b, a), sub(q, a));
    let scale = dist(p, q).max(dist(a, b)).max(1e-300);
    let eps = 1e-12 * scale * scale;
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// Whether `x` lies on the closed segment ab up to a relative tolerance.
pub fn on_segment(x: Point, a: Point, b: Point, tol: f64) -> bool {
    let len = dist(a, b);
    let c = cross(sub(b, a), sub(x, a)).abs();
    if c > tol * len * len.max(1.0) {
        return false;
    }
    let t = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / (len * len);
    t >= -tol && t <= 1.0 + tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_round_trip() {
        let t = [[0.3, 0.1], [1.2, 0.4], [0.5, 1.7]];
        let a = Affine::new(&t);
        let x = a.map([0.2, 0.3]);
        let r = a.inverse(x);
        assert!((r[0] - 0.2).abs() < 1e-14 && (r[1] - 0.3).abs() < 1e-14);
        assert!((a.det / 2.0 - signed_area(&t)).abs() < 1e-14);
    }

    #[test]
    fn crossing() {
        assert!(segments_cross([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_cross([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [2.0, 0.0]));
        assert!(!segments_cross([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
    }
}
