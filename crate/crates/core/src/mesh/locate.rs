//! Bucket-grid point location over a set of triangles.

use crate::geometry::{contains, Point};

#[derive(Debug)]
pub struct Locator {
    lo: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
    tris: Vec<[Point; 3]>,
}

impl Locator {
    pub fn new(tris: &[[Point; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for t in tris {
            for p in t {
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        let n = ((tris.len() as f64).sqrt().ceil() as usize).clamp(1, 2048);
        let dims = [n, n];
        let cell = [
            ((hi[0] - lo[0]) / n as f64).max(1e-300),
            ((hi[1] - lo[1]) / n as f64).max(1e-300),
        ];
        let mut buckets = vec![Vec::new(); n * n];
        for (i, t) in tris.iter().enumerate() {
            let (mut a, mut b) = ([usize::MAX; 2], [0usize; 2]);
            for p in t {
                for k in 0..2 {
                    let c = (((p[k] - lo[k]) / cell[k]).floor().max(0.0) as usize).min(dims[k] - 1);
                    a[k] = a[k].min(c);
                    b[k] = b[k].max(c);
                }
            }
            for x in a[0]..=b[0] {
                for y in a[1]..=b[1] {
                    buckets[y * dims[0] + x].push(i as u32);
                }
            }
        }
        Locator {
            lo,
            cell,
            dims,
            buckets,
            tris: tris.to_vec(),
        }
    }

    /// Index of a triangle containing `x`, if any.
    pub fn locate(&self, x: Point) -> Option<usize> {
        let mut c = [0usize; 2];
        for k in 0..2 {
            let f = (x[k] - self.lo[k]) / self.cell[k];
            if f < -1e-9 || f > self.dims[k] as f64 + 1e-9 {
                return None;
            }
            c[k] = (f.floor().max(0.0) as usize).min(self.dims[k] - 1);
        }
        let b = &self.buckets[c[1] * self.dims[0] + c[0]];
        b.iter()
            .copied()
            .find(|&i| contains(&self.tris[i as usize], x, 1e-12))
            .map(|i| i as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locates_points() {
        let tris = vec![[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]];
        let l = Locator::new(&tris);
        assert_eq!(l.locate([0.9, 0.1]), Some(0));
        assert_eq!(l.locate([0.1, 0.9]), Some(1));
        assert_eq!(l.locate([2.0, 0.1]), None);
    }
}
