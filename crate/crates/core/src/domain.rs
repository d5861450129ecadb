//! Continuum reference domains and the lattice regions derived from them.

use std::fmt;

use crate::cluster::ClusterGraph;
use crate::error::{param, Error, Result};

/// Open rectangle or open ball in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Rectangle { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn rectangle(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() < 2 {
            return param("rectangle corners need matching dimension of at least 2");
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return param("rectangle needs lower < upper on every axis");
        }
        Ok(Domain::Rectangle { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() < 2 {
            return param("ball dimension must be at least 2");
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return param(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Domain::Ball { center, radius })
    }

    /// `(0, 1)^d`.
    pub fn unit_cube(d: usize) -> Self {
        Domain::Rectangle { lower: vec![0.0; d], upper: vec![1.0; d] }
    }

    /// `(-1, 1)^d`.
    pub fn centered_cube(d: usize) -> Self {
        Domain::Rectangle { lower: vec![-1.0; d], upper: vec![1.0; d] }
    }

    /// Unit ball about the origin.
    pub fn unit_ball(d: usize) -> Self {
        Domain::Ball { center: vec![0.0; d], radius: 1.0 }
    }

    /// `square` is the unit cube, `ball` the unit ball.
    pub fn named(name: &str, d: usize) -> Result<Self> {
        match name {
            "square" | "cube" => Ok(Self::unit_cube(d)),
            "ball" => Ok(Self::unit_ball(d)),
            other => param(format!("unknown domain '{other}', expected square or ball")),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Rectangle { lower, .. } => lower.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Rectangle { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| a < v && v < b),
            Domain::Ball { center, radius } => dist2(x, center) < radius * radius,
        }
    }

    /// Euclidean distance to the boundary for points inside, else 0.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match self {
            Domain::Rectangle { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (a, b))| (v - a).min(b - v))
                .fold(f64::INFINITY, f64::min),
            Domain::Ball { center, radius } => radius - dist2(x, center).sqrt(),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Rectangle { lower, upper } => (lower.clone(), upper.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Rectangle { lower, upper } => lower.iter().zip(upper).map(|(a, b)| b - a).product(),
            Domain::Ball { radius, .. } => {
                let d = self.dim() as f64;
                std::f64::consts::PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0) * radius.powf(d)
            }
        }
    }

    /// Image under `x -> c x`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Domain::Rectangle { lower, upper } => Domain::Rectangle {
                lower: lower.iter().map(|v| v * c).collect(),
                upper: upper.iter().map(|v| v * c).collect(),
            },
            Domain::Ball { center, radius } => Domain::Ball {
                center: center.iter().map(|v| v * c).collect(),
                radius: radius * c,
            },
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Domain::Rectangle { lower, upper } => write!(f, "rect([{}],[{}])", list(lower), list(upper)),
            Domain::Ball { center, radius } => write!(f, "ball([{}],{radius})", list(center)),
        }
    }
}

pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Lattice set on which a Dirichlet problem or stopped walk lives.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Sites `z` with `z / n` in the open domain.
    Scaled { domain: Domain, n: f64 },
    /// Sites with `lo <= z <= hi` coordinatewise.
    Window { lo: Vec<i64>, hi: Vec<i64> },
    /// Chemical ball `B(center, floor(radius))` in the cluster.
    Chemical { center: Vec<i64>, radius: f64 },
    /// Lattice ball `|z - center|_1 <= floor(radius)`.
    L1Ball { center: Vec<i64>, radius: f64 },
}

impl Region {
    pub fn scaled(domain: Domain, n: f64) -> Result<Self> {
        if !(n > 0.0) {
            return param(format!("scale n must be positive, got {n}"));
        }
        Ok(Region::Scaled { domain, n })
    }

    pub fn contains_site(&self, z: &[i64]) -> bool {
        match self {
            Region::Scaled { domain, n } => {
                let x: Vec<f64> = z.iter().map(|&c| c as f64 / n).collect();
                domain.contains(&x)
            }
            Region::Window { lo, hi } => z.iter().zip(lo.iter().zip(hi)).all(|(c, (a, b))| a <= c && c <= b),
            Region::L1Ball { center, radius } => {
                z.iter().zip(center).map(|(a, b)| (a - b).unsigned_abs()).sum::<u64>() as f64 <= radius.floor()
            }
            Region::Chemical { .. } => panic!("chemical regions need the cluster; use Region::mask"),
        }
    }

    /// Membership over cluster ids.
    pub fn mask(&self, cg: &ClusterGraph) -> Result<Vec<bool>> {
        let d = cg.dim();
        match self {
            Region::Scaled { domain, .. } if domain.dim() != d => {
                Err(Error::Domain(format!("domain has dimension {} but the cluster has {d}", domain.dim())))
            }
            Region::Window { lo, hi } if lo.len() != d || hi.len() != d => {
                Err(Error::Domain("window corners have the wrong dimension".into()))
            }
            Region::L1Ball { center, .. } if center.len() != d => {
                Err(Error::Domain("ball centre has the wrong dimension".into()))
            }
            Region::Chemical { center, radius } => {
                let mut m = vec![false; cg.len()];
                for id in cg.ball(center, *radius)? {
                    m[id] = true;
                }
                Ok(m)
            }
            _ => Ok(cg.sites().map(|z| self.contains_site(z)).collect()),
        }
    }

    /// Cluster ids inside the region, ascending (lexicographic site order).
    pub fn interior(&self, cg: &ClusterGraph) -> Result<Vec<usize>> {
        Ok(self.mask(cg)?.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Scaled { domain, n } => write!(f, "{n}*{domain}"),
            Region::Window { lo, hi } => write!(f, "window({lo:?},{hi:?})"),
            Region::Chemical { center, radius } => write!(f, "chemical_ball({center:?},{radius})"),
            Region::L1Ball { center, radius } => write!(f, "l1_ball({center:?},{radius})"),
        }
    }
}
