//! Open-cluster geometry: the largest open component of a box as an indexed
//! weighted graph, chemical distances, balls, relative boundaries and the
//! regularity diagnostics used as empirical stand-ins for the cluster
//! assumptions of the scaling theory.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::environment::ConductanceField;
use crate::error::{param, Error, Result};
use crate::lattice::BoxGeometry;
use crate::law::LawSpec;
use crate::rng::{derive_seed, substream};

const NONE: u32 = u32::MAX;

/// Largest open component of a box, with dense vertex ids in lexicographic
/// site order and compressed adjacency.
#[derive(Clone, Debug)]
pub struct ClusterGraph {
    geometry: BoxGeometry,
    sites: Vec<i64>,
    box_linear: Vec<usize>,
    index: Vec<u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

impl ClusterGraph {
    /// The maximum-cardinality open component; ties go to the component whose
    /// lexicographically smallest site is smallest.
    pub fn largest_component(field: &ConductanceField) -> Result<Self> {
        let g = field.geometry();
        let v = g.volume();
        let d = g.dim();
        let open_neighbors = |l: usize, out: &mut Vec<(usize, f64)>| {
            out.clear();
            for axis in 0..d {
                if let Some(m) = g.step(l, axis, true) {
                    let w = field.weights()[g.edge_index(axis, l)];
                    if w > 0.0 {
                        out.push((m, w));
                    }
                }
                if let Some(m) = g.step(l, axis, false) {
                    let w = field.weights()[g.edge_index(axis, m)];
                    if w > 0.0 {
                        out.push((m, w));
                    }
                }
            }
        };

        let mut label = vec![NONE; v];
        let mut best: Option<(u32, usize)> = None;
        let mut any_open = false;
        let mut queue = VecDeque::new();
        let mut nbrs = Vec::with_capacity(2 * d);
        let mut next_label = 0u32;
        for start in 0..v {
            if label[start] != NONE {
                continue;
            }
            let lab = next_label;
            next_label += 1;
            label[start] = lab;
            queue.push_back(start);
            let mut size = 0usize;
            while let Some(u) = queue.pop_front() {
                size += 1;
                open_neighbors(u, &mut nbrs);
                for &(m, _) in &nbrs {
                    any_open = true;
                    if label[m] == NONE {
                        label[m] = lab;
                        queue.push_back(m);
                    }
                }
            }
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((lab, size));
            }
        }
        if !any_open {
            return Err(Error::Degenerate("every edge of the box is closed".into()));
        }
        let (lab, size) = best.expect("box is non-empty");

        let mut index = vec![NONE; v];
        let mut box_linear = Vec::with_capacity(size);
        for (l, &x) in label.iter().enumerate() {
            if x == lab {
                index[l] = box_linear.len() as u32;
                box_linear.push(l);
            }
        }
        let mut sites = Vec::with_capacity(size * d);
        let mut offsets = Vec::with_capacity(size + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut mu = Vec::with_capacity(size);
        let mut nu = Vec::with_capacity(size);
        offsets.push(0);
        for &l in &box_linear {
            sites.extend(g.coords(l));
            open_neighbors(l, &mut nbrs);
            let (mut m_sum, mut n_sum) = (0.0, 0.0);
            for &(m, w) in &nbrs {
                debug_assert!(index[m] != NONE);
                targets.push(index[m]);
                weights.push(w);
                m_sum += w;
                n_sum += 1.0 / w;
            }
            mu.push(m_sum);
            nu.push(n_sum);
            offsets.push(targets.len());
        }
        let cg = Self {
            geometry: g.clone(),
            sites,
            box_linear,
            index,
            offsets,
            targets,
            weights,
            mu,
            nu,
        };
        debug_assert!(cg.check_measures());
        Ok(cg)
    }

    fn check_measures(&self) -> bool {
        (0..self.len()).all(|u| {
            let s: f64 = self.neighbors(u).map(|(_, w)| w).sum();
            (s - self.mu[u]).abs() <= 1e-12 * s.max(1.0)
        })
    }

    pub fn len(&self) -> usize {
        self.box_linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.box_linear.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn site(&self, id: usize) -> &[i64] {
        let d = self.dim();
        &self.sites[id * d..(id + 1) * d]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[i64]> {
        self.sites.chunks_exact(self.dim())
    }

    pub fn id_of(&self, site: &[i64]) -> Option<usize> {
        let l = self.geometry.linear(site)?;
        let id = self.index[l];
        (id != NONE).then_some(id as usize)
    }

    pub fn require(&self, site: &[i64]) -> Result<usize> {
        self.id_of(site).ok_or_else(|| Error::NotInCluster(site.to_vec()))
    }

    pub fn box_linear(&self, id: usize) -> usize {
        self.box_linear[id]
    }

    #[inline]
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[id]..self.offsets[id + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    #[inline]
    pub fn degree(&self, id: usize) -> usize {
        self.offsets[id + 1] - self.offsets[id]
    }

    /// `mu(x) = sum of incident conductances`.
    pub fn mu(&self, id: usize) -> f64 {
        self.mu[id]
    }

    /// `nu(x) = sum of reciprocal incident conductances over open edges`.
    pub fn nu(&self, id: usize) -> f64 {
        self.nu[id]
    }

    pub fn mu_all(&self) -> &[f64] {
        &self.mu
    }

    /// Fraction of box sites in the cluster.
    pub fn density(&self) -> f64 {
        self.len() as f64 / self.geometry.volume() as f64
    }

    /// Hop distances from `src` to every vertex.
    pub fn distances_from(&self, src: usize) -> Vec<u32> {
        self.bfs(src, u32::MAX)
    }

    fn bfs(&self, src: usize, limit: u32) -> Vec<u32> {
        let mut dist = vec![NONE; self.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            if du >= limit {
                continue;
            }
            for (m, _) in self.neighbors(u) {
                if dist[m] == NONE {
                    dist[m] = du + 1;
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    /// Length of a shortest open path between two cluster sites.
    pub fn chemical_distance(&self, x: &[i64], y: &[i64]) -> Result<usize> {
        let a = self.require(x)?;
        let b = self.require(y)?;
        if a == b {
            return Ok(0);
        }
        let mut dist = vec![NONE; self.len()];
        dist[a] = 0;
        let mut queue = VecDeque::from([a]);
        while let Some(u) = queue.pop_front() {
            for (m, _) in self.neighbors(u) {
                if dist[m] == NONE {
                    dist[m] = dist[u] + 1;
                    if m == b {
                        return Ok(dist[m] as usize);
                    }
                    queue.push_back(m);
                }
            }
        }
        unreachable!("cluster is connected")
    }

    /// Chemical ball `{y : d(x, y) <= floor(r)}` as sorted vertex ids.
    pub fn ball(&self, x: &[i64], r: f64) -> Result<Vec<usize>> {
        if !(r >= 0.0) {
            return param(format!("ball radius must be nonnegative, got {r}"));
        }
        let src = self.require(x)?;
        let limit = r.floor().min(u32::MAX as f64 - 1.0) as u32;
        Ok(self
            .bfs(src, limit)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= limit)
            .map(|(i, _)| i)
            .collect())
    }

    /// Open edges `{x, y}` with `x` in `a` and `y` in `b \ a`.
    pub fn relative_boundary(&self, a: &[usize], b: &[usize]) -> Result<Vec<(usize, usize)>> {
        let mut in_a = vec![false; self.len()];
        let mut in_b = vec![false; self.len()];
        for &v in b {
            if v >= self.len() {
                return param(format!("vertex id {v} out of range"));
            }
            in_b[v] = true;
        }
        for &v in a {
            if v >= self.len() || !in_b[v] {
                return param(format!("vertex id {v} of A is not in B"));
            }
            in_a[v] = true;
        }
        let mut out = Vec::new();
        let mut sorted: Vec<usize> = a.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &u in &sorted {
            for (m, _) in self.neighbors(u) {
                if in_b[m] && !in_a[m] {
                    out.push((u, m));
                }
            }
        }
        Ok(out)
    }

    /// Closest cluster vertex to the real point `n * x` in Euclidean distance,
    /// ties broken by the lexicographically smallest site.
    pub fn project(&self, x: &[f64], n: f64) -> usize {
        let d = self.dim();
        assert_eq!(x.len(), d, "projection point has wrong dimension");
        let target: Vec<f64> = x.iter().map(|v| v * n).collect();
        let center: Vec<i64> = target.iter().map(|v| v.round() as i64).collect();
        let g = &self.geometry;
        let max_shell = g
            .extents()
            .iter()
            .zip(g.origin())
            .zip(&center)
            .map(|((&e, &o), &c)| (c - o).abs().max((o + e as i64 - 1 - c).abs()))
            .max()
            .unwrap_or(0)
            .max(0) as usize;

        let mut best: Option<(f64, usize)> = None;
        let mut site = vec![0i64; d];
        for k in 0..=max_shell {
            if let Some((bd, _)) = best {
                if (k as f64 - 0.5).max(0.0).powi(2) > bd {
                    break;
                }
            }
            let side = 2 * k + 1;
            let count = side.pow(d as u32);
            for t in 0..count {
                let mut rem = t;
                let mut on_shell = false;
                for i in (0..d).rev() {
                    let off = (rem % side) as i64 - k as i64;
                    rem /= side;
                    on_shell |= off.unsigned_abs() as usize == k;
                    site[i] = center[i] + off;
                }
                if !on_shell {
                    continue;
                }
                if let Some(id) = self.id_of(&site) {
                    let dist: f64 = site
                        .iter()
                        .zip(&target)
                        .map(|(&s, &t)| (s as f64 - t).powi(2))
                        .sum();
                    let better = match best {
                        None => true,
                        Some((bd, bid)) => dist < bd || (dist == bd && id < bid),
                    };
                    if better {
                        best = Some((dist, id));
                    }
                }
            }
        }
        best.expect("cluster is non-empty").1
    }

    /// Volume and isoperimetric diagnostics for the chemical ball `B(x, n)`.
    pub fn regularity_check(&self, x: &[i64], n: usize, c_v: f64, c_riso: f64, c_w: f64) -> Result<RegularityReport> {
        if !(c_w >= 1.0) || !(c_v > 0.0) || !(c_riso > 0.0) {
            return param("regularity constants need C_V > 0, C_riso > 0, C_W >= 1");
        }
        let src = self.require(x)?;
        let outer = (c_w * n as f64).ceil() as i64;
        let g = &self.geometry;
        for i in 0..g.dim() {
            let lo = g.origin()[i];
            let hi = lo + g.extents()[i] as i64 - 1;
            let ok = match g.boundary() {
                crate::lattice::Boundary::Free => x[i] - outer >= lo && x[i] + outer <= hi,
                crate::lattice::Boundary::Torus => 2 * outer + 1 <= g.extents()[i] as i64,
            };
            if !ok {
                return Err(Error::Geometry(format!(
                    "ball of radius {outer} around {x:?} does not fit inside the box along axis {i}"
                )));
            }
        }
        let dist = self.bfs(src, outer as u32);
        let ball_size = dist.iter().filter(|&&d| d as usize <= n).count();
        let volume_needed = c_v * (n as f64).powi(self.dim() as i32);
        let s_set: Vec<usize> = (0..self.len()).filter(|&i| dist[i] as i64 <= outer).collect();

        // Euclidean box of radius n around x covered by the outer chemical ball
        let mut covered = true;
        for (i, site) in self.sites().enumerate() {
            let linf = site.iter().zip(x).map(|(a, b)| (a - b).abs()).max().unwrap_or(0);
            if linf <= n as i64 && dist[i] == NONE {
                covered = false;
                break;
            }
        }

        let (lower, upper) = if s_set.len() >= 2 {
            isoperimetric_bounds(self, &s_set, &dist)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let required = if n == 0 { c_riso } else { c_riso / n as f64 };
        Ok(RegularityReport {
            center: x.to_vec(),
            radius: n,
            c_v,
            c_riso,
            c_w,
            ball_volume: ball_size,
            volume_ok: volume_needed <= ball_size as f64,
            outer_volume: s_set.len(),
            cheeger_lower_estimate: lower,
            cheeger_upper_bound: upper,
            isoperimetric_required: required,
            isoperimetric_certified: lower >= required,
            isoperimetric_refuted: upper < required,
            distance_comparison_ok: covered,
        })
    }

    /// Checks `d(x, y) <= max(C_d |x - y|_inf, n^(1 - delta))` over cluster
    /// sites in `[-n, n]^d`: every pair when there are at most
    /// [`FULL_PAIR_CHECK_LIMIT`] such sites, otherwise 10^4 sampled pairs.
    pub fn distance_comparison_check(&self, n: usize, c_d: f64, delta: f64, seed: u64) -> Result<DistanceCheck> {
        let inside: Vec<usize> = (0..self.len())
            .filter(|&i| self.site(i).iter().all(|c| c.unsigned_abs() as usize <= n))
            .collect();
        if inside.is_empty() {
            return Err(Error::Geometry(format!("cluster does not meet [-{n}, {n}]^d")));
        }
        let floor = (n as f64).powf(1.0 - delta);
        let mut check = DistanceCheck {
            ok: true,
            pairs_checked: 0,
            sampled: inside.len() > FULL_PAIR_CHECK_LIMIT,
            worst: None,
        };
        let consider = |a: usize, b: usize, chem: u32, check: &mut DistanceCheck| {
            let linf = self
                .site(a)
                .iter()
                .zip(self.site(b))
                .map(|(p, q)| (p - q).abs())
                .max()
                .unwrap_or(0) as f64;
            let bound = (c_d * linf).max(floor);
            check.pairs_checked += 1;
            let ratio = chem as f64 / bound;
            if check.worst.as_ref().is_none_or(|w| ratio > w.ratio) {
                check.worst = Some(WorstPair {
                    x: self.site(a).to_vec(),
                    y: self.site(b).to_vec(),
                    chemical: chem as usize,
                    bound,
                    ratio,
                });
            }
            if chem as f64 > bound {
                check.ok = false;
            }
        };
        if !check.sampled {
            for (k, &a) in inside.iter().enumerate() {
                let dist = self.distances_from(a);
                for &b in &inside[k..] {
                    consider(a, b, dist[b], &mut check);
                }
            }
        } else {
            let mut rng = substream(seed, 0xD15);
            for _ in 0..100 {
                let a = inside[rng.random_range(0..inside.len())];
                let dist = self.distances_from(a);
                for _ in 0..100 {
                    let b = inside[rng.random_range(0..inside.len())];
                    consider(a, b, dist[b], &mut check);
                }
            }
        }
        Ok(check)
    }

    /// Vertex list CSV: `x1..xd, id, mu, nu`.
    pub fn write_vertices_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},id,mu,nu", head.join(","))?;
        for id in 0..self.len() {
            for c in self.site(id) {
                write!(w, "{c},")?;
            }
            writeln!(w, "{id},{},{}", self.mu[id], self.nu[id])?;
        }
        Ok(())
    }

    /// Edge list CSV: `id_a, id_b, weight`, each edge once.
    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id_a,id_b,weight")?;
        for id in 0..self.len() {
            for (m, wt) in self.neighbors(id) {
                if id < m {
                    writeln!(w, "{id},{m},{wt}")?;
                }
            }
        }
        Ok(())
    }
}

/// Site-count limit below which [`ClusterGraph::distance_comparison_check`] checks all pairs.
pub const FULL_PAIR_CHECK_LIMIT: usize = 1500;

#[derive(Clone, Debug, PartialEq)]
pub struct WorstPair {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub chemical: usize,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceCheck {
    pub ok: bool,
    pub pairs_checked: usize,
    pub sampled: bool,
    /// Pair with the largest ratio of chemical distance to its bound.
    pub worst: Option<WorstPair>,
}

/// Regularity diagnostics for one chemical ball. The isoperimetric part is
/// two-sided: `cheeger_upper_bound` comes from explicit sweep cuts, and
/// `cheeger_lower_estimate` is half a lower estimate of the spectral gap of
/// the unit-weight Laplacian on the outer ball.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub center: Vec<i64>,
    pub radius: usize,
    pub c_v: f64,
    pub c_riso: f64,
    pub c_w: f64,
    pub ball_volume: usize,
    pub volume_ok: bool,
    pub outer_volume: usize,
    pub cheeger_lower_estimate: f64,
    pub cheeger_upper_bound: f64,
    /// `C_riso / n`.
    pub isoperimetric_required: f64,
    pub isoperimetric_certified: bool,
    pub isoperimetric_refuted: bool,
    pub distance_comparison_ok: bool,
}

fn isoperimetric_bounds(cg: &ClusterGraph, s_set: &[usize], dist: &[u32]) -> (f64, f64) {
    let m = s_set.len();
    let mut local = vec![NONE; cg.len()];
    for (k, &v) in s_set.iter().enumerate() {
        local[v] = k as u32;
    }
    let adj: Vec<Vec<usize>> = s_set
        .iter()
        .map(|&v| {
            cg.neighbors(v)
                .filter_map(|(u, _)| (local[u] != NONE).then_some(local[u] as usize))
                .collect()
        })
        .collect();

    let (gap_lower, fiedler) = lanczos_gap(&adj);

    let mut orders: Vec<Vec<usize>> = Vec::new();
    let mut by_fiedler: Vec<usize> = (0..m).collect();
    by_fiedler.sort_by(|&a, &b| fiedler[a].total_cmp(&fiedler[b]).then(a.cmp(&b)));
    orders.push(by_fiedler.iter().rev().copied().collect());
    orders.push(by_fiedler);
    let mut by_dist: Vec<usize> = (0..m).collect();
    by_dist.sort_by_key(|&k| (dist[s_set[k]], k));
    orders.push(by_dist);
    for axis in 0..cg.dim() {
        let mut o: Vec<usize> = (0..m).collect();
        o.sort_by_key(|&k| (cg.site(s_set[k])[axis], k));
        orders.push(o.iter().rev().copied().collect());
        orders.push(o);
    }

    let mut upper = f64::INFINITY;
    let mut in_a = vec![false; m];
    for order in &orders {
        in_a.iter_mut().for_each(|b| *b = false);
        let mut boundary: i64 = 0;
        for (size, &v) in order.iter().enumerate().take(m / 2) {
            let inside = adj[v].iter().filter(|&&u| in_a[u]).count() as i64;
            boundary += adj[v].len() as i64 - 2 * inside;
            in_a[v] = true;
            upper = upper.min(boundary as f64 / (size + 1) as f64);
        }
    }
    ((gap_lower / 2.0).max(0.0).min(upper), upper)
}

/// Lanczos with full reorthogonalisation on the unit-weight Laplacian,
/// restricted to vectors orthogonal to constants. Returns a lower estimate of
/// the spectral gap (Ritz value minus residual bound) and the Ritz vector.
fn lanczos_gap(adj: &[Vec<usize>]) -> (f64, Vec<f64>) {
    let m = adj.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        for (i, nb) in adj.iter().enumerate() {
            let mut s = nb.len() as f64 * x[i];
            for &j in nb {
                s -= x[j];
            }
            y[i] = s;
        }
    };
    let project = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / m as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    };
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();

    let steps = (m - 1).min(300);
    let mut rng = substream(0x1A2C, m as u64);
    let mut q: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
    project(&mut q);
    let nq = norm(&q);
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut w = vec![0.0; m];
    for _ in 0..steps {
        apply(&q, &mut w);
        let a: f64 = w.iter().zip(&q).map(|(x, y)| x * y).sum();
        alpha.push(a);
        basis.push(q.clone());
        for _ in 0..2 {
            project(&mut w);
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        beta.push(b);
        if b < 1e-12 {
            break;
        }
        q = w.iter().map(|v| v / b).collect();
    }
    let k = alpha.len();
    let theta = smallest_tridiagonal_eigenvalue(&alpha, &beta[..k - 1]);
    let s = tridiagonal_eigenvector(&alpha, &beta[..k - 1], theta);
    let residual = beta[k - 1].abs() * s[k - 1].abs();
    let mut ritz = vec![0.0; m];
    for (c, b) in s.iter().zip(&basis) {
        ritz.iter_mut().zip(b).for_each(|(r, v)| *r += c * v);
    }
    ((theta - residual).max(0.0), ritz)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn smallest_tridiagonal_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..alpha.len() {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + beta.get(i).map_or(0.0, |b| b.abs());
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse iteration on a shifted tridiagonal system.
fn tridiagonal_eigenvector(alpha: &[f64], beta: &[f64], lambda: f64) -> Vec<f64> {
    let k = alpha.len();
    let shift = lambda - 1e-10 * lambda.abs().max(1e-12);
    let mut x = vec![1.0; k];
    for _ in 0..3 {
        // Thomas algorithm for (T - shift I) y = x
        let mut c = vec![0.0; k];
        let mut dd = vec![0.0; k];
        let mut y = x.clone();
        dd[0] = alpha[0] - shift;
        for i in 1..k {
            let l = beta[i - 1] / dd[i - 1];
            c[i] = l;
            dd[i] = alpha[i] - shift - l * beta[i - 1];
            if dd[i] == 0.0 {
                dd[i] = 1e-300;
            }
            y[i] -= l * y[i - 1];
        }
        y[k - 1] /= dd[k - 1];
        for i in (0..k - 1).rev() {
            y[i] = (y[i] - beta[i] * y[i + 1]) / dd[i];
        }
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.iter().map(|v| v / n).collect();
    }
    x
}

/// Cluster density estimate with its across-replica standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub mean: f64,
    pub se: f64,
    pub replicas: usize,
}

/// Mean fraction of box sites lying in the largest open component, over
/// independent environments drawn with per-replica seeds.
pub fn theta_estimate(law: &LawSpec, geometry: &BoxGeometry, replicas: usize, seed: u64) -> Result<ThetaEstimate> {
    if replicas == 0 {
        return param("theta_estimate needs at least one replica");
    }
    law.validate(geometry.dim())?;
    let fractions: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let f = ConductanceField::generate_on(law, geometry.clone(), derive_seed(seed, r as u64))?;
            match ClusterGraph::largest_component(&f) {
                Ok(cg) => Ok(cg.density()),
                Err(Error::Degenerate(_)) => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let n = replicas as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let se = if replicas > 1 {
        (fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(ThetaEstimate { mean, se, replicas })
}
