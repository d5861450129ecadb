//! Variable-speed random walk on a cluster: trajectories, Monte Carlo
//! estimates of exit times, occupation-time Green's functions and heat
//! kernels, and the effective diffusivity.
//!
//! Time convention: every open edge rings at rate `w(e)`, so the walk holds
//! at `x` for an `Exp(mu(x))` time. With unit conductances each coordinate
//! moves at rate 2, giving `Sigma^2 = 2 I`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::cluster::ClusterGraph;
use crate::domain::Region;
use crate::environment::ConductanceField;
use crate::error::{param, Error, Result};
use crate::lattice::Boundary;
use crate::rng::{derive_seed, exponential, substream, StreamRng};
use crate::stats::{mean_se, replicate, MeanSe};

#[inline]
fn jump(cg: &ClusterGraph, x: usize, rng: &mut StreamRng) -> Result<(f64, usize)> {
    let mu = cg.mu(x);
    if !(mu > 0.0) {
        return Err(Error::Dynamics(format!("site {:?} has no open edge", cg.site(x))));
    }
    let hold = exponential(rng, mu);
    let u = rng.random::<f64>() * mu;
    let mut acc = 0.0;
    let mut next = x;
    for (y, w) in cg.neighbors(x) {
        acc += w;
        next = y;
        if u < acc {
            break;
        }
    }
    Ok((hold, next))
}

/// Path of the walk as jump times and cluster ids; entry 0 is `(0, start)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sites: Vec<usize>,
    /// Time at which simulation ended: the horizon or the exit time.
    pub total_time: f64,
    pub exited: bool,
}

impl Trajectory {
    pub fn start(&self) -> usize {
        self.sites[0]
    }

    /// CSV with columns `t, x1..xd`.
    pub fn write_csv<W: Write>(&self, cg: &ClusterGraph, mut w: W) -> Result<()> {
        let head: Vec<String> = (1..=cg.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{}", head.join(","))?;
        for (t, &s) in self.times.iter().zip(&self.sites) {
            let coords: Vec<String> = cg.site(s).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{t},{}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Runs the walk from `x0` until `horizon` or, with `stop` set, until the
/// first time it stands outside the region.
pub fn simulate(cg: &ClusterGraph, x0: &[i64], horizon: f64, stop: Option<&Region>, seed: u64) -> Result<Trajectory> {
    if !(horizon >= 0.0) {
        return param(format!("horizon must be nonnegative, got {horizon}"));
    }
    let start = cg.require(x0)?;
    let mask = stop.map(|r| r.mask(cg)).transpose()?;
    let mut rng = substream(seed, 0);
    let mut traj = Trajectory { times: vec![0.0], sites: vec![start], total_time: horizon, exited: false };
    if mask.as_ref().is_some_and(|m| !m[start]) {
        traj.total_time = 0.0;
        traj.exited = true;
        return Ok(traj);
    }
    let mut t = 0.0;
    let mut x = start;
    loop {
        let (hold, next) = jump(cg, x, &mut rng)?;
        t += hold;
        if t > horizon {
            break;
        }
        x = next;
        traj.times.push(t);
        traj.sites.push(x);
        if mask.as_ref().is_some_and(|m| !m[x]) {
            traj.total_time = t;
            traj.exited = true;
            break;
        }
        if !t.is_finite() {
            return Err(Error::Dynamics("walk never left the region".into()));
        }
    }
    Ok(traj)
}

fn region_mask(cg: &ClusterGraph, region: &Region) -> Result<Vec<bool>> {
    let mask = region.mask(cg)?;
    let leaks = (0..cg.len()).any(|x| mask[x] && cg.neighbors(x).any(|(y, _)| !mask[y]));
    if !leaks {
        return Err(Error::Domain(format!("the walk cannot leave {region} inside the cluster")));
    }
    Ok(mask)
}

/// `E_x[tau]` for the first exit from the region.
pub fn exit_time_mc(cg: &ClusterGraph, region: &Region, x0: &[i64], replicas: usize, seed: u64) -> Result<MeanSe> {
    let mask = region_mask(cg, region)?;
    let start = cg.require(x0)?;
    if !mask[start] {
        return Err(Error::Domain(format!("start {x0:?} is not in {region}")));
    }
    Ok(replicate(replicas, 1, seed, |rng, out| {
        let mut x = start;
        let mut t = 0.0;
        while mask[x] {
            let (h, y) = jump(cg, x, rng)?;
            t += h;
            x = y;
        }
        out[0] = t;
        Ok(())
    })?[0])
}

/// `E_x[time spent at y before exiting]`, an estimate of `g(x, y)`.
pub fn occupation_green_mc(cg: &ClusterGraph, region: &Region, x: &[i64], y: &[i64], replicas: usize, seed: u64) -> Result<MeanSe> {
    let mask = region_mask(cg, region)?;
    let start = cg.require(x)?;
    let target = cg.require(y)?;
    if !mask[start] {
        return Err(Error::Domain(format!("start {x:?} is not in {region}")));
    }
    if !mask[target] {
        return Ok(MeanSe { mean: 0.0, se: 0.0, n: replicas });
    }
    Ok(replicate(replicas, 1, seed, |rng, out| {
        let mut z = start;
        let mut occ = 0.0;
        while mask[z] {
            let (h, next) = jump(cg, z, rng)?;
            if z == target {
                occ += h;
            }
            z = next;
        }
        out[0] = occ;
        Ok(())
    })?[0])
}

/// Occupation times at every region site from one batch of walks, ordered
/// like [`Region::interior`], together with the exit time.
pub fn occupation_profile(cg: &ClusterGraph, region: &Region, x: &[i64], replicas: usize, seed: u64) -> Result<(Vec<MeanSe>, MeanSe)> {
    let mask = region_mask(cg, region)?;
    let start = cg.require(x)?;
    if !mask[start] {
        return Err(Error::Domain(format!("start {x:?} is not in {region}")));
    }
    let interior: Vec<usize> = (0..cg.len()).filter(|&i| mask[i]).collect();
    let mut local = vec![usize::MAX; cg.len()];
    for (k, &i) in interior.iter().enumerate() {
        local[i] = k;
    }
    let m = interior.len();
    let mut est = replicate(replicas, m + 1, seed, |rng, out| {
        let mut z = start;
        while mask[z] {
            let (h, next) = jump(cg, z, rng)?;
            out[local[z]] += h;
            out[m] += h;
            z = next;
        }
        Ok(())
    })?;
    let exit = est.pop().expect("exit time column");
    Ok((est, exit))
}

/// `P_x[X_t = y]` as a replica fraction.
pub fn heat_kernel_mc(cg: &ClusterGraph, t: f64, x: &[i64], y: &[i64], replicas: usize, seed: u64) -> Result<MeanSe> {
    if !(t >= 0.0) {
        return param(format!("time must be nonnegative, got {t}"));
    }
    let start = cg.require(x)?;
    let target = cg.require(y)?;
    if t == 0.0 {
        let v = (start == target) as u8 as f64;
        return Ok(MeanSe { mean: v, se: 0.0, n: replicas });
    }
    Ok(replicate(replicas, 1, seed, |rng, out| {
        let mut z = start;
        let mut s = 0.0;
        loop {
            let (h, next) = jump(cg, z, rng)?;
            s += h;
            if s > t {
                break;
            }
            z = next;
        }
        out[0] = (z == target) as u8 as f64;
        Ok(())
    })?[0])
}

/// Effective diffusivity estimate from endpoint displacements.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusivityEstimate {
    pub dim: usize,
    /// Row-major `d x d` matrix.
    pub sigma2: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
    pub t: f64,
    pub replicas: usize,
    pub batches: usize,
    /// Rescaled endpoints `X_{t n^2} / n` relative to the start.
    pub endpoints: Vec<Vec<f64>>,
    /// Walks that touched a face of a free box.
    pub boundary_hits: usize,
}

impl DiffusivityEstimate {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma2[i * self.dim + j]
    }

    pub fn se_of(&self, i: usize, j: usize) -> f64 {
        self.se[i * self.dim + j]
    }

    /// CSV rows `i, j, sigma2, se`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,sigma2,se,n,t,replicas")?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                writeln!(w, "{},{},{},{},{},{},{}", i + 1, j + 1, self.get(i, j), self.se_of(i, j), self.n, self.t, self.replicas)?;
            }
        }
        Ok(())
    }
}

const SIGMA_BATCHES: usize = 20;

/// Covariance of `X_{t n^2} / (n sqrt t)` over walks started uniformly in the
/// central quarter-window of the box; standard errors from 20 batches.
pub fn estimate_sigma(field: &ConductanceField, n: usize, t: f64, replicas: usize, seed: u64) -> Result<DiffusivityEstimate> {
    if n == 0 || !(t > 0.0) {
        return param("estimate_sigma needs n >= 1 and t > 0");
    }
    if replicas < 2 * SIGMA_BATCHES {
        return param(format!("estimate_sigma needs at least {} replicas", 2 * SIGMA_BATCHES));
    }
    let g = field.geometry();
    let d = g.dim();
    if g.boundary() == Boundary::Torus && g.extents().iter().any(|&e| e < 3) {
        return Err(Error::Scale("torus extents must be at least 3 to unwrap displacements".into()));
    }
    let cg = ClusterGraph::largest_component(field)?;
    let starts: Vec<usize> = (0..cg.len())
        .filter(|&i| {
            cg.site(i).iter().enumerate().all(|(a, &c)| {
                let lo = g.origin()[a] as f64;
                let e = g.extents()[a] as f64;
                let center = lo + (e - 1.0) / 2.0;
                (c as f64 - center).abs() <= e / 8.0
            })
        })
        .collect();
    if starts.is_empty() {
        return Err(Error::Scale("no cluster site in the central quarter-window".into()));
    }
    let horizon = t * (n * n) as f64;
    let free = g.boundary() == Boundary::Free;
    let faces = |s: &[i64]| {
        free && s.iter().enumerate().any(|(a, &c)| c == g.origin()[a] || c == g.origin()[a] + g.extents()[a] as i64 - 1)
    };

    let runs: Vec<(Vec<f64>, bool)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let mut x = starts[rng.random_range(0..starts.len())];
            let mut disp = vec![0i64; d];
            let mut s = 0.0;
            let mut hit = false;
            loop {
                let (h, y) = jump(&cg, x, &mut rng)?;
                s += h;
                if s > horizon {
                    break;
                }
                let (px, py) = (cg.site(x), cg.site(y));
                for a in 0..d {
                    let mut step = py[a] - px[a];
                    if step.abs() > 1 {
                        step = -step.signum();
                    }
                    disp[a] += step;
                }
                x = y;
                hit |= faces(cg.site(x));
            }
            Ok((disp.iter().map(|&v| v as f64 / n as f64).collect(), hit))
        })
        .collect::<Result<_>>()?;
    let boundary_hits = runs.iter().filter(|r| r.1).count();
    if boundary_hits as f64 > 1e-3 * replicas as f64 {
        return Err(Error::Scale(format!(
            "{boundary_hits} of {replicas} walks reached the box faces; enlarge the box or use a torus"
        )));
    }
    let endpoints: Vec<Vec<f64>> = runs.into_iter().map(|r| r.0).collect();
    let cov = |pts: &[Vec<f64>]| {
        let m = pts.len() as f64;
        let mean: Vec<f64> = (0..d).map(|a| pts.iter().map(|p| p[a]).sum::<f64>() / m).collect();
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = pts.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / (m - 1.0) / t;
            }
        }
        c
    };
    let sigma2 = cov(&endpoints);
    let size = replicas / SIGMA_BATCHES;
    let batch: Vec<Vec<f64>> = (0..SIGMA_BATCHES).map(|b| cov(&endpoints[b * size..(b + 1) * size])).collect();
    let se = (0..d * d)
        .map(|k| {
            let vals: Vec<f64> = batch.iter().map(|c| c[k]).collect();
            // batch spread scaled to the full sample
            mean_se(&vals).se * ((SIGMA_BATCHES * size) as f64 / replicas as f64).sqrt()
        })
        .collect();
    Ok(DiffusivityEstimate {
        dim: d,
        sigma2,
        se,
        n,
        t,
        replicas,
        batches: SIGMA_BATCHES,
        endpoints,
        boundary_hits,
    })
}

/// Generates an environment from `law` (seeded by `derive_seed(seed, 0)`)
/// and estimates its diffusivity with walk seed `derive_seed(seed, 1)`.
pub fn estimate_sigma_for_law(
    law: &crate::law::LawSpec,
    geometry: crate::lattice::BoxGeometry,
    n: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<DiffusivityEstimate> {
    let field = ConductanceField::generate_on(law, geometry, derive_seed(seed, 0))?;
    estimate_sigma(&field, n, t, replicas, derive_seed(seed, 1))
}
