//! Finite boxes of Z^d and their nearest-neighbour edges.
//!
//! Sites are addressed by a row-major linear index (last axis fastest), so
//! increasing linear order coincides with lexicographic order of coordinate
//! tuples. The edge `{x, x + e_i}` has index `i * volume + linear(x)`.

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Boundary {
    #[default]
    Free,
    Torus,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Free => "free",
            Boundary::Torus => "torus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "free" => Ok(Boundary::Free),
            "torus" | "periodic" => Ok(Boundary::Torus),
            other => param(format!("unknown boundary `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxGeometry {
    origin: Vec<i64>,
    extents: Vec<usize>,
    strides: Vec<usize>,
    boundary: Boundary,
}

impl BoxGeometry {
    pub fn new(origin: Vec<i64>, extents: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if extents.len() < 2 {
            return param(format!("dimension must be at least 2, got {}", extents.len()));
        }
        if origin.len() != extents.len() {
            return param("origin and extents differ in dimension");
        }
        if let Some(e) = extents.iter().find(|&&e| e < 2) {
            return param(format!("box extents must be at least 2 per axis, got {e}"));
        }
        let d = extents.len();
        let mut strides = vec![1; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        Ok(Self {
            origin,
            extents,
            strides,
            boundary,
        })
    }

    /// Box with the given extents and lower corner at the origin.
    pub fn anchored(extents: Vec<usize>, boundary: Boundary) -> Result<Self> {
        let origin = vec![0; extents.len()];
        Self::new(origin, extents, boundary)
    }

    /// Box `[-r, r]^d` (per-axis radii) centred at the origin.
    pub fn centered(radius: &[usize], boundary: Boundary) -> Result<Self> {
        let origin = radius.iter().map(|&r| -(r as i64)).collect();
        let extents = radius.iter().map(|&r| 2 * r + 1).collect();
        Self::new(origin, extents, boundary)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn volume(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn edge_slots(&self) -> usize {
        self.dim() * self.volume()
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(&self.origin)
                .zip(&self.extents)
                .all(|((&x, &o), &e)| x >= o && x < o + e as i64)
    }

    pub fn linear(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        Some(
            site.iter()
                .zip(&self.origin)
                .zip(&self.strides)
                .map(|((&x, &o), &s)| (x - o) as usize * s)
                .sum(),
        )
    }

    pub fn coords_into(&self, mut linear: usize, out: &mut [i64]) {
        for i in 0..self.dim() {
            let s = self.strides[i];
            out[i] = self.origin[i] + (linear / s) as i64;
            linear %= s;
        }
    }

    pub fn coords(&self, linear: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.coords_into(linear, &mut out);
        out
    }

    /// Neighbour of `linear` one step along `axis` in direction `forward`.
    /// Wraps on a torus, `None` when leaving a free box.
    #[inline]
    pub fn step(&self, linear: usize, axis: usize, forward: bool) -> Option<usize> {
        let s = self.strides[axis];
        let e = self.extents[axis];
        let k = (linear / s) % e;
        match (forward, self.boundary) {
            (true, _) if k + 1 < e => Some(linear + s),
            (true, Boundary::Torus) => Some(linear + s - e * s),
            (false, _) if k > 0 => Some(linear - s),
            (false, Boundary::Torus) => Some(linear + (e - 1) * s),
            _ => None,
        }
    }

    #[inline]
    pub fn edge_index(&self, axis: usize, linear: usize) -> usize {
        axis * self.volume() + linear
    }

    /// Reduce an arbitrary lattice site into the box (torus) or reject it (free).
    pub fn wrap(&self, site: &[i64]) -> Option<Vec<i64>> {
        match self.boundary {
            Boundary::Free => self.contains(site).then(|| site.to_vec()),
            Boundary::Torus => Some(
                site.iter()
                    .zip(&self.origin)
                    .zip(&self.extents)
                    .map(|((&x, &o), &e)| o + (x - o).rem_euclid(e as i64))
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_order_is_lexicographic() {
        let g = BoxGeometry::new(vec![-1, -2], vec![3, 4], Boundary::Free).unwrap();
        let mut prev: Option<Vec<i64>> = None;
        for l in 0..g.volume() {
            let c = g.coords(l);
            assert_eq!(g.linear(&c), Some(l));
            if let Some(p) = prev {
                assert!(p < c);
            }
            prev = Some(c);
        }
    }

    #[test]
    fn step_wraps_only_on_torus() {
        let free = BoxGeometry::anchored(vec![3, 3], Boundary::Free).unwrap();
        let torus = BoxGeometry::anchored(vec![3, 3], Boundary::Torus).unwrap();
        let corner = free.linear(&[2, 0]).unwrap();
        assert_eq!(free.step(corner, 0, true), None);
        assert_eq!(torus.step(corner, 0, true), torus.linear(&[0, 0]));
        assert_eq!(torus.step(corner, 1, false), torus.linear(&[2, 2]));
        assert_eq!(free.step(corner, 1, true), free.linear(&[2, 1]));
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(BoxGeometry::anchored(vec![5], Boundary::Free).is_err());
        assert!(BoxGeometry::anchored(vec![5, 1], Boundary::Free).is_err());
    }
}
