//! Experiments behind one trait, registered by name.

mod basic;
mod limits;
mod planar;

use std::path::PathBuf;

use rcgff::cluster::{theta_estimate, ClusterGraph};
use rcgff::continuum::ContinuumGreenSpec;
use rcgff::domain::Domain;
use rcgff::environment::ConductanceField;
use rcgff::lattice::{Boundary, BoxGeometry};
use rcgff::law::LawSpec;
use rcgff::rng::derive_seed;
use rcgff::walk::estimate_sigma_for_law;

use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::output::Sink;

pub use limits::radial_bump;

/// Seed tags; every random input of a run is `derive_seed(seed, TAG)`.
pub(crate) const ENV_TAG: u64 = 1;
pub(crate) const THETA_TAG: u64 = 2;
pub(crate) const SIGMA_TAG: u64 = 3;
pub(crate) const SAMPLE_TAG: u64 = 4;
pub(crate) const WALK_TAG: u64 = 5;

/// Headline numbers of a run, in the order they were produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub metrics: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Summary {
    pub fn put(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.push((key.into(), v));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

pub trait Experiment: Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary>;
}

static REGISTRY: [&dyn Experiment; 14] = [
    &basic::Gen,
    &basic::Theta,
    &basic::Green,
    &basic::Sample,
    &basic::Walk,
    &basic::Sigma,
    &limits::Lclt,
    &limits::CovScale,
    &limits::VarLimit,
    &planar::OnDiag2d,
    &planar::ExitBound,
    &planar::Max2d,
    &limits::Qfclt,
    &planar::Figure1,
];

pub fn experiments() -> &'static [&'static dyn Experiment] {
    &REGISTRY
}

pub fn experiment(name: &str) -> Option<&'static dyn Experiment> {
    experiments().iter().copied().find(|e| e.name() == name)
}

/// Validates `cfg`, runs the named experiment into `cfg.out` and writes the
/// manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let Some(exp) = experiment(&cfg.experiment) else {
        let names: Vec<_> = experiments().iter().map(|e| e.name()).collect();
        return config_err(format!("unknown experiment `{}`; known: {}", cfg.experiment, names.join(", ")));
    };
    let mut sink = Sink::create(&cfg.out)?;
    let mut summary = exp.run(cfg, &mut sink)?;
    summary.files = sink.finish(&cfg.to_kv())?;
    Ok(summary)
}

pub(crate) fn env_seed(cfg: &ExperimentConfig) -> u64 {
    derive_seed(cfg.seed, ENV_TAG)
}

/// Free box covering `n * closure(D)` with a margin of two sites.
pub(crate) fn covering_box(domain: &Domain, n: usize) -> Result<BoxGeometry> {
    let (lo, hi) = domain.bounds();
    let n = n as f64;
    let origin: Vec<i64> = lo.iter().map(|v| (v * n).floor() as i64 - 2).collect();
    let extents: Vec<usize> = hi.iter().zip(&origin).map(|(v, o)| ((v * n).ceil() as i64 - o + 3) as usize).collect();
    Ok(BoxGeometry::new(origin, extents, Boundary::Free)?)
}

/// Largest open component of the run's environment on a box covering `nD`.
/// The environment is the same for every `n`: weights depend only on the
/// seed and the edge.
pub(crate) fn cluster_on(cfg: &ExperimentConfig, domain: &Domain, n: usize) -> Result<ClusterGraph> {
    let field = ConductanceField::generate_on(&cfg.law, covering_box(domain, n)?, env_seed(cfg))?;
    Ok(ClusterGraph::largest_component(&field)?)
}

/// `theta = P[0 in C_inf]`: exactly 1 when every edge is open, else the
/// largest-component density on `2 box + 1` tori.
pub(crate) fn theta(cfg: &ExperimentConfig, out: &mut Sink) -> Result<f64> {
    if cfg.law.always_open() {
        out.note("theta", "1 (every edge open)");
        return Ok(1.0);
    }
    let g = BoxGeometry::centered(&vec![cfg.box_radius; cfg.d], Boundary::Torus)?;
    let est = theta_estimate(&cfg.law, &g, 16, derive_seed(cfg.seed, THETA_TAG))?;
    out.note("theta", format!("{} +/- {} (16 tori of radius {}, seed {})", est.mean, est.se, cfg.box_radius, derive_seed(cfg.seed, THETA_TAG)));
    Ok(est.mean)
}

/// Diagonal `Sigma^2`: `2c I` for constant conductance `c`, otherwise the
/// walk estimate with off-diagonal entries dropped (every law here is
/// symmetric under axis reflections).
pub(crate) fn sigma2(cfg: &ExperimentConfig, out: &mut Sink) -> Result<Vec<f64>> {
    let d = cfg.d;
    let mut s = vec![0.0; d * d];
    if let LawSpec::Constant(c) = cfg.law {
        for i in 0..d {
            s[i * d + i] = 2.0 * c;
        }
        out.note("sigma2", format!("{}*I (constant conductance)", 2.0 * c));
        return Ok(s);
    }
    let g = BoxGeometry::centered(&vec![cfg.box_radius; d], Boundary::Torus)?;
    let n = (cfg.box_radius / 4).max(4);
    let seed = derive_seed(cfg.seed, SIGMA_TAG);
    let replicas = cfg.replicas.max(400);
    let est = estimate_sigma_for_law(&cfg.law, g, n, 1.0, replicas, seed)?;
    for i in 0..d {
        s[i * d + i] = est.get(i, i);
    }
    let diag: Vec<String> = (0..d).map(|i| format!("{}+/-{}", est.get(i, i), est.se_of(i, i))).collect();
    out.note(
        "sigma2",
        format!("diag [{}] estimated (torus radius {}, n {n}, t 1, {replicas} walks, seed {seed})", diag.join(", "), cfg.box_radius),
    );
    Ok(s)
}

pub(crate) fn continuum_spec(domain: &Domain, sigma2: Vec<f64>) -> Result<ContinuumGreenSpec> {
    Ok(ContinuumGreenSpec::new(domain.clone(), sigma2)?)
}

/// `pi_n(x)`: the cluster site closest to `n x`.
pub(crate) fn project(cg: &ClusterGraph, x: &[f64], n: usize) -> Vec<i64> {
    cg.site(cg.project(x, n as f64)).to_vec()
}

pub(crate) fn centre(domain: &Domain) -> Vec<f64> {
    let (lo, hi) = domain.bounds();
    lo.iter().zip(&hi).map(|(a, b)| (a + b) / 2.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_match_the_cli() {
        let names: Vec<_> = experiments().iter().map(|e| e.name()).collect();
        let cli = "gen theta green sample walk sigma lclt cov-scale var-limit ondiag2d exit-bound max2d qfclt figure1";
        assert_eq!(names.join(" "), cli);
        assert!(experiment("lclt").is_some() && experiment("nope").is_none());
    }

    #[test]
    fn covering_box_contains_the_scaled_domain() {
        let g = covering_box(&Domain::unit_ball(2), 5).unwrap();
        assert!(g.contains(&[-5, 5]) && g.contains(&[6, -6]));
        let g = covering_box(&Domain::unit_cube(2), 8).unwrap();
        assert!(g.contains(&[0, 0]) && g.contains(&[9, 9]));
    }
}
