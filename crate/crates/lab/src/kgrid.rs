use rcgff::domain::Domain;

use crate::error::{config_err, Result};

/// Pairs of sub-grid points of `D` at least `eps` apart and at least `delta`
/// from the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    pub eps: f64,
    pub delta: f64,
    pub points: Vec<Vec<f64>>,
    /// Index pairs `i < j` into `points`.
    pub pairs: Vec<(usize, usize)>,
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

impl KGrid {
    /// Nodes `lo + (hi - lo) i / grid` of the bounding box, `0 <= i <= grid`.
    pub fn build(domain: &Domain, eps: f64, delta: f64, grid: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < delta) || grid == 0 {
            return config_err("K grid needs 0 < eps < delta and grid >= 1");
        }
        let (lo, hi) = domain.bounds();
        let d = lo.len();
        let mut points = Vec::new();
        let total = (grid + 1).pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|a| {
                    let i = rem % (grid + 1);
                    rem /= grid + 1;
                    lo[a] + (hi[a] - lo[a]) * i as f64 / grid as f64
                })
                .collect();
            if domain.contains(&x) && domain.boundary_distance(&x) >= delta {
                points.push(x);
            }
        }
        let mut pairs = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if dist(&points[i], &points[j]) >= eps {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            return config_err(format!("K grid with eps = {eps}, delta = {delta}, grid = {grid} is empty"));
        }
        Ok(Self { eps, delta, points, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, k: usize) -> (&[f64], &[f64]) {
        let (i, j) = self.pairs[k];
        (&self.points[i], &self.points[j])
    }

    /// Re-checks both constraints for every pair.
    pub fn satisfied(&self, domain: &Domain) -> bool {
        (0..self.len()).all(|k| {
            let (x, y) = self.pair(k);
            dist(x, y) >= self.eps && domain.boundary_distance(x) >= self.delta && domain.boundary_distance(y) >= self.delta
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid() {
        let d = Domain::unit_cube(2);
        let k = KGrid::build(&d, 0.2, 0.3, 10).unwrap();
        // nodes 0.3..=0.7 on each axis
        assert_eq!(k.points.len(), 25);
        assert!(k.len() >= 20);
        assert!(k.satisfied(&d));
        assert!(KGrid::build(&d, 0.2, 0.6, 10).is_err());
        let b = KGrid::build(&Domain::unit_ball(2), 0.2, 0.3, 10).unwrap();
        assert!(b.satisfied(&Domain::unit_ball(2)));
    }
}
