//! Random conductance fields on finite boxes.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::io::{read_exact_array, BinReader, BinWriter};
use crate::lattice::{Boundary, BoxGeometry};
use crate::law::{parse_law, LawSpec};
use crate::rng::{hash_coords, StreamFactory};

const IID_TAG: u64 = 0x1000;
const LINE_TAG: u64 = 0x2000;
pub const FIELD_MAGIC: &[u8; 4] = b"RCGF";
pub const FIELD_VERSION: u32 = 1;

/// Edge weights `w({x, x + e_i})` on a box, stored direction-major.
///
/// For a free box the slots of edges leaving the box through the upper faces
/// are populated but not part of the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceField {
    geometry: BoxGeometry,
    weights: Vec<f64>,
    law: LawSpec,
    seed: u64,
}

impl ConductanceField {
    /// Draws a field on a box anchored at the origin.
    pub fn generate(law: &LawSpec, extents: &[usize], d: usize, seed: u64, boundary: Boundary) -> Result<Self> {
        if d < 2 {
            return param(format!("dimension must be at least 2, got {d}"));
        }
        let extents = match extents.len() {
            1 => vec![extents[0]; d],
            n if n == d => extents.to_vec(),
            n => return param(format!("{n} extents given for d = {d}")),
        };
        let geometry = BoxGeometry::anchored(extents, boundary)?;
        Self::generate_on(law, geometry, seed)
    }

    /// Draws a field on an arbitrary box. The weight of an edge depends only
    /// on `(law, seed)` and the absolute coordinates of the edge, so growing
    /// the box leaves existing edges unchanged.
    pub fn generate_on(law: &LawSpec, geometry: BoxGeometry, seed: u64) -> Result<Self> {
        law.validate(geometry.dim())?;
        let factory = StreamFactory::new(seed);
        let volume = geometry.volume();
        let d = geometry.dim();
        let mut weights = vec![0.0; geometry.edge_slots()];
        weights
            .par_chunks_mut(4096)
            .enumerate()
            .for_each(|(chunk, out)| {
                let mut coords = vec![0i64; d];
                for (k, w) in out.iter_mut().enumerate() {
                    let slot = chunk * 4096 + k;
                    let axis = slot / volume;
                    geometry.coords_into(slot % volume, &mut coords);
                    *w = draw_edge(law, &factory, axis, &mut coords);
                }
            });
        Ok(Self {
            geometry,
            weights,
            law: law.clone(),
            seed,
        })
    }

    /// Field with explicitly given weights (direction-major).
    pub fn from_weights(geometry: BoxGeometry, weights: Vec<f64>, law: LawSpec, seed: u64) -> Result<Self> {
        if weights.len() != geometry.edge_slots() {
            return param(format!(
                "expected {} weights, got {}",
                geometry.edge_slots(),
                weights.len()
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return param(format!("weights must be finite and nonnegative, got {w}"));
        }
        Ok(Self {
            geometry,
            weights,
            law,
            seed,
        })
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn boundary(&self) -> Boundary {
        self.geometry.boundary()
    }

    pub fn law(&self) -> &LawSpec {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of `{x, x + e_axis}`; `None` when `x` is outside the box.
    pub fn weight(&self, site: &[i64], axis: usize) -> Option<f64> {
        let l = self.geometry.linear(site)?;
        Some(self.weights[self.geometry.edge_index(axis, l)])
    }

    pub fn set_weight(&mut self, site: &[i64], axis: usize, w: f64) -> Result<()> {
        if !(w.is_finite() && w >= 0.0) {
            return param(format!("weight must be finite and nonnegative, got {w}"));
        }
        let l = self
            .geometry
            .linear(site)
            .ok_or_else(|| Error::Domain(format!("site {site:?} outside the box")))?;
        let idx = self.geometry.edge_index(axis, l);
        self.weights[idx] = w;
        Ok(())
    }

    /// Whether edge slot `(axis, linear)` is an edge of the box graph.
    #[inline]
    pub fn in_graph(&self, axis: usize, linear: usize) -> bool {
        self.geometry.step(linear, axis, true).is_some()
    }

    /// Iterator over `(axis, site, far endpoint, weight)` for every edge of the box graph.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let v = self.geometry.volume();
        (0..self.weights.len()).filter_map(move |slot| {
            let (axis, l) = (slot / v, slot % v);
            self.geometry
                .step(l, axis, true)
                .map(|m| (axis, l, m, self.weights[slot]))
        })
    }

    /// `tau_z`: the weight at `{x, x+e_i}` of the result is the weight at
    /// `{x+z, x+z+e_i}` of `self`. A torus keeps its box; a free box is
    /// cropped to the sites `x` with `x + z` still inside.
    pub fn shift(&self, z: &[i64]) -> Result<Self> {
        let d = self.dim();
        if z.len() != d {
            return param(format!("shift vector has {} entries for d = {d}", z.len()));
        }
        let g = &self.geometry;
        let out_geom = match g.boundary() {
            Boundary::Torus => g.clone(),
            Boundary::Free => {
                let mut origin = Vec::with_capacity(d);
                let mut extents = Vec::with_capacity(d);
                for i in 0..d {
                    let shrink = z[i].unsigned_abs() as usize;
                    if shrink + 2 > g.extents()[i] {
                        return Err(Error::Domain(format!(
                            "shift {z:?} leaves the free box along axis {i}"
                        )));
                    }
                    origin.push(g.origin()[i] + (-z[i]).max(0));
                    extents.push(g.extents()[i] - shrink);
                }
                BoxGeometry::new(origin, extents, Boundary::Free)?
            }
        };
        let v_out = out_geom.volume();
        let v_in = g.volume();
        let mut weights = vec![0.0; out_geom.edge_slots()];
        let mut x = vec![0i64; d];
        for l in 0..v_out {
            out_geom.coords_into(l, &mut x);
            let src: Vec<i64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            let src = g.wrap(&src).expect("shift window stays inside the box");
            let ls = g.linear(&src).unwrap();
            for axis in 0..d {
                weights[axis * v_out + l] = self.weights[axis * v_in + ls];
            }
        }
        Ok(Self {
            geometry: out_geom,
            weights,
            law: self.law.clone(),
            seed: self.seed,
        })
    }

    /// Empirical moments of the environment against the moment condition.
    pub fn moment_report(&self, p: f64, q: f64, theta: f64) -> Result<MomentReport> {
        if !(p > 0.0 && q > 0.0) {
            return param(format!("moment exponents must be positive, got p = {p}, q = {q}"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return param(format!("theta must lie in (0, 1), got {theta}"));
        }
        let mut n = 0usize;
        let mut open = 0usize;
        let (mut sp, mut sp2, mut sq, mut sq2) = (0.0, 0.0, 0.0, 0.0);
        for (_, _, _, w) in self.edges() {
            n += 1;
            let a = w.powf(p);
            sp += a;
            sp2 += a * a;
            if w > 0.0 {
                open += 1;
                let b = w.powf(-q);
                sq += b;
                sq2 += b * b;
            }
        }
        if open == 0 {
            return Err(Error::Degenerate("no open edges in the box".into()));
        }
        let nf = n as f64;
        let se = |s: f64, s2: f64| {
            let m = s / nf;
            ((s2 / nf - m * m).max(0.0) / (nf - 1.0).max(1.0)).sqrt()
        };
        let d = self.dim() as f64;
        let threshold = 2.0 * (1.0 - theta) / (d - theta);
        let full_lattice_threshold = 2.0 / (d - 1.0);
        let lhs = 1.0 / p + 1.0 / q;
        Ok(MomentReport {
            p,
            q,
            theta,
            edges: n,
            open_edges: open,
            mean_omega_p: sp / nf,
            se_omega_p: se(sp, sp2),
            mean_inv_omega_q: sq / nf,
            se_inv_omega_q: se(sq, sq2),
            mean_inv_omega_q_open: sq / open as f64,
            threshold,
            satisfied: lhs < threshold,
            full_lattice_threshold,
            satisfied_full_lattice: lhs < full_lattice_threshold,
        })
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BinWriter::new(w);
        out.bytes(FIELD_MAGIC)?;
        out.u32(FIELD_VERSION)?;
        out.u32(self.dim() as u32)?;
        for &e in self.geometry.extents() {
            out.u64(e as u64)?;
        }
        for &o in self.geometry.origin() {
            out.i64(o)?;
        }
        out.u32(match self.boundary() {
            Boundary::Free => 0,
            Boundary::Torus => 1,
        })?;
        out.string(&self.law.to_string())?;
        out.u64(self.seed)?;
        out.f64_slice(&self.weights)?;
        out.finish()
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut inp = BinReader::new(r);
        let magic: [u8; 4] = read_exact_array(&mut inp)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("not an environment file (bad magic)".into()));
        }
        let version = inp.u32()?;
        if version != FIELD_VERSION {
            return Err(Error::Format(format!("unsupported environment version {version}")));
        }
        let d = inp.u32()? as usize;
        if !(2..=16).contains(&d) {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        let extents = (0..d).map(|_| inp.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let origin = (0..d).map(|_| inp.i64()).collect::<Result<Vec<_>>>()?;
        let boundary = match inp.u32()? {
            0 => Boundary::Free,
            1 => Boundary::Torus,
            b => return Err(Error::Format(format!("unknown boundary code {b}"))),
        };
        let law = parse_law(&inp.string()?)?;
        let seed = inp.u64()?;
        let geometry = BoxGeometry::new(origin, extents, boundary)?;
        let weights = inp.f64_vec(geometry.edge_slots())?;
        Self::from_weights(geometry, weights, law, seed)
    }

    /// CSV with columns `x1..xd, axis, weight` (axes numbered from 1).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},axis,weight", header.join(","))?;
        let v = self.geometry.volume();
        let mut x = vec![0i64; d];
        for (slot, wt) in self.weights.iter().enumerate() {
            let (axis, l) = (slot / v, slot % v);
            if !self.in_graph(axis, l) {
                continue;
            }
            self.geometry.coords_into(l, &mut x);
            for c in &x {
                write!(w, "{c},")?;
            }
            writeln!(w, "{},{}", axis + 1, wt)?;
        }
        Ok(())
    }
}

fn draw_edge(law: &LawSpec, factory: &StreamFactory, axis: usize, coords: &mut [i64]) -> f64 {
    match law {
        LawSpec::LineCorrelated { base, axis: line_axis } if line_axis.is_none_or(|a| a == axis) => {
            let saved = coords[axis];
            coords[axis] = 0;
            let mut rng = factory.at(hash_coords(LINE_TAG + axis as u64, coords));
            coords[axis] = saved;
            base.sample(&mut rng)
        }
        LawSpec::LineCorrelated { base, .. } => {
            let mut rng = factory.at(hash_coords(IID_TAG + axis as u64, coords));
            base.sample(&mut rng)
        }
        _ => {
            let mut rng = factory.at(hash_coords(IID_TAG + axis as u64, coords));
            law.sample(&mut rng)
        }
    }
}

/// Empirical check of the moment condition `1/p + 1/q < 2(1-theta)/(d-theta)`.
///
/// `mean_inv_omega_q` is the box average of `w^-q 1{w > 0}`: closed edges
/// count in the denominator and contribute zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub edges: usize,
    pub open_edges: usize,
    pub mean_omega_p: f64,
    pub se_omega_p: f64,
    pub mean_inv_omega_q: f64,
    pub se_inv_omega_q: f64,
    /// Same sum averaged over open edges only.
    pub mean_inv_omega_q_open: f64,
    pub threshold: f64,
    pub satisfied: bool,
    /// `2/(d-1)`, the weaker condition available when every edge is open.
    pub full_lattice_threshold: f64,
    pub satisfied_full_lattice: bool,
}
