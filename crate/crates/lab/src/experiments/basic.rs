//! Single-object runs: environments, cluster density, Green's functions,
//! field samples, walks and diffusivity.

use rcgff::cluster::theta_estimate;
use rcgff::dirichlet::DirichletSystem;
use rcgff::domain::Region;
use rcgff::environment::ConductanceField;
use rcgff::lattice::{Boundary, BoxGeometry};
use rcgff::rng::derive_seed;
use rcgff::walk::{estimate_sigma_for_law, exit_time_mc, simulate};

use super::{centre, cluster_on, env_seed, project, Experiment, Summary, SAMPLE_TAG, SIGMA_TAG, THETA_TAG, WALK_TAG};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{fmt, Sink, Table};
use crate::svg;

const SOLVE_TOL: f64 = 1e-10;

/// Values on a 2D block as rows of a grid, absent sites as 0.
fn grid_of(sites: &[Vec<i64>], values: &[f64]) -> Vec<Vec<f64>> {
    let (x0, x1) = (sites.iter().map(|s| s[0]).min().unwrap_or(0), sites.iter().map(|s| s[0]).max().unwrap_or(0));
    let (y0, y1) = (sites.iter().map(|s| s[1]).min().unwrap_or(0), sites.iter().map(|s| s[1]).max().unwrap_or(0));
    let mut g = vec![vec![0.0; (x1 - x0 + 1) as usize]; (y1 - y0 + 1) as usize];
    for (s, v) in sites.iter().zip(values) {
        g[(s[1] - y0) as usize][(s[0] - x0) as usize] = *v;
    }
    g
}

pub(super) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub struct Gen;

impl Experiment for Gen {
    fn name(&self) -> &'static str {
        "gen"
    }

    fn description(&self) -> &'static str {
        "draw a conductance field on a torus of radius --box; write it with its moment report"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let g = BoxGeometry::centered(&vec![cfg.box_radius; cfg.d], Boundary::Torus)?;
        let field = ConductanceField::generate_on(&cfg.law, g, env_seed(cfg))?;
        out.note("environment_seed", env_seed(cfg));
        out.with_file("field.bin", |w| field.write_binary(w))?;
        out.with_file("edges.csv", |w| field.write_csv(w))?;
        let m = field.moment_report(cfg.p, cfg.q, cfg.reg_theta)?;
        let mut t = Table::new(&[
            "p", "q", "theta", "edges", "open_edges", "mean_omega_p", "se_omega_p", "mean_inv_omega_q", "se_inv_omega_q",
            "mean_inv_omega_q_open", "threshold", "satisfied", "full_lattice_threshold", "satisfied_full_lattice",
        ]);
        t.push(vec![
            fmt(m.p),
            fmt(m.q),
            fmt(m.theta),
            m.edges.to_string(),
            m.open_edges.to_string(),
            fmt(m.mean_omega_p),
            fmt(m.se_omega_p),
            fmt(m.mean_inv_omega_q),
            fmt(m.se_inv_omega_q),
            fmt(m.mean_inv_omega_q_open),
            fmt(m.threshold),
            m.satisfied.to_string(),
            fmt(m.full_lattice_threshold),
            m.satisfied_full_lattice.to_string(),
        ]);
        out.table("moments.csv", &t)?;
        let mut s = Summary::default();
        s.put("edges", m.edges as f64);
        s.put("open_edges", m.open_edges as f64);
        s.put("mean_omega_p", m.mean_omega_p);
        s.put("mean_inv_omega_q", m.mean_inv_omega_q);
        Ok(s)
    }
}

pub struct Theta;

impl Experiment for Theta {
    fn name(&self) -> &'static str {
        "theta"
    }

    fn description(&self) -> &'static str {
        "largest-component density over --replicas tori of radius --box"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let g = BoxGeometry::centered(&vec![cfg.box_radius; cfg.d], Boundary::Torus)?;
        let seed = derive_seed(cfg.seed, THETA_TAG);
        let est = theta_estimate(&cfg.law, &g, cfg.replicas, seed)?;
        out.note("theta_seed", seed);
        let mut t = Table::new(&["box", "replicas", "theta", "se"]);
        t.push(vec![cfg.box_radius.to_string(), est.replicas.to_string(), fmt(est.mean), fmt(est.se)]);
        out.table("theta.csv", &t)?;
        let mut s = Summary::default();
        s.put("theta", est.mean);
        s.put("se", est.se);
        Ok(s)
    }
}

pub struct Green;

impl Experiment for Green {
    fn name(&self) -> &'static str {
        "green"
    }

    fn description(&self) -> &'static str {
        "Green's function column at the centre of nD (first ladder n) and mean exit times"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let n = cfg.n_ladder[0];
        let cg = cluster_on(cfg, &domain, n)?;
        let sys = DirichletSystem::assemble(&cg, Region::scaled(domain.clone(), n as f64)?)?;
        let y = project(&cg, &centre(&domain), n);
        let col = sys.green_column(&y, SOLVE_TOL)?;
        let exit = sys.mean_exit_time(SOLVE_TOL)?;
        out.note("environment_seed", env_seed(cfg));
        out.note("source", format!("{y:?}"));
        let block = sys.block(vec![col.values.clone(), exit.clone()]);
        out.with_file("green.csv", |w| block.write_csv(w, &["g".into(), "exit_time".into()]))?;
        if cfg.d == 2 {
            let sites = sys.sites();
            out.text("green.svg", &svg::heatmap(&grid_of(&sites, &col.values), max_abs(&col.values), &format!("g(., {y:?}), n = {n}")))?;
        }
        let mut s = Summary::default();
        s.put("interior", sys.len() as f64);
        s.put("g_source", col.values[col.source_index]);
        s.put("residual", col.residual);
        s.put("max_exit_time", exit.iter().cloned().fold(0.0, f64::max));
        Ok(s)
    }
}

pub struct Sample;

impl Experiment for Sample {
    fn name(&self) -> &'static str {
        "sample"
    }

    fn description(&self) -> &'static str {
        "--replicas DGFF samples on nD (first ladder n); writes the first few and site variances"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let n = cfg.n_ladder[0];
        let cg = cluster_on(cfg, &domain, n)?;
        let sys = DirichletSystem::assemble(&cg, Region::scaled(domain, n as f64)?)?;
        let seed = derive_seed(cfg.seed, SAMPLE_TAG);
        let ens = sys.sample_dgff(cfg.replicas, seed)?;
        out.note("environment_seed", env_seed(cfg));
        out.note("sample_seed", seed);
        let keep = ens.len().min(4);
        let mut rows: Vec<Vec<f64>> = ens.samples[..keep].to_vec();
        let var: Vec<f64> = (0..sys.len()).map(|i| ens.covariance(i, i)).collect();
        rows.push(var.clone());
        let mut names: Vec<String> = (0..keep).map(|i| format!("sample{i}")).collect();
        names.push("variance".into());
        let block = sys.block(rows);
        out.with_file("samples.csv", |w| block.write_csv(w, &names))?;
        out.with_file("samples.bin", |w| block.write_binary(w))?;
        if cfg.d == 2 {
            let first = &ens.samples[0];
            out.text("sample.svg", &svg::heatmap(&grid_of(&sys.sites(), first), max_abs(first), &format!("DGFF sample, n = {n}")))?;
        }
        let mut s = Summary::default();
        s.put("interior", sys.len() as f64);
        s.put("mean_site_variance", var.iter().sum::<f64>() / var.len() as f64);
        Ok(s)
    }
}

pub struct Walk;

impl Experiment for Walk {
    fn name(&self) -> &'static str {
        "walk"
    }

    fn description(&self) -> &'static str {
        "one walk from the centre of nD until exit, plus Monte Carlo exit time against the solver"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let n = cfg.n_ladder[0];
        let cg = cluster_on(cfg, &domain, n)?;
        let region = Region::scaled(domain.clone(), n as f64)?;
        let sys = DirichletSystem::assemble(&cg, region.clone())?;
        let x = project(&cg, &centre(&domain), n);
        let seed = derive_seed(cfg.seed, WALK_TAG);
        let tr = simulate(&cg, &x, f64::INFINITY, Some(&region), seed)?;
        out.with_file("trajectory.csv", |w| tr.write_csv(&cg, w))?;
        let mc = exit_time_mc(&cg, &region, &x, cfg.replicas, derive_seed(seed, 1))?;
        let exact = sys.mean_exit_time(SOLVE_TOL)?[sys.require(&x)?];
        out.note("environment_seed", env_seed(cfg));
        out.note("walk_seed", seed);
        let mut t = Table::new(&["n", "start", "steps", "exit_time", "mc_mean_exit", "mc_se", "solver_exit", "z"]);
        let start: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        t.push(vec![
            n.to_string(),
            start.join(" "),
            (tr.sites.len() - 1).to_string(),
            fmt(tr.total_time),
            fmt(mc.mean),
            fmt(mc.se),
            fmt(exact),
            fmt(mc.z_distance(exact)),
        ]);
        out.table("walk.csv", &t)?;
        let mut s = Summary::default();
        s.put("mc_mean_exit", mc.mean);
        s.put("solver_exit", exact);
        s.put("z", mc.z_distance(exact));
        Ok(s)
    }
}

pub struct Sigma;

/// `Sigma^2` estimate for one `n` on a torus of radius `max(box, 4 n sqrt t)`.
pub(super) fn sigma_row(cfg: &ExperimentConfig, n: usize) -> Result<rcgff::walk::DiffusivityEstimate> {
    let radius = cfg.box_radius.max((4.0 * n as f64 * cfg.t.sqrt()).ceil() as usize);
    let g = BoxGeometry::centered(&vec![radius; cfg.d], Boundary::Torus)?;
    Ok(estimate_sigma_for_law(&cfg.law, g, n, cfg.t, cfg.replicas, derive_seed(cfg.seed, SIGMA_TAG + n as u64 * 16))?)
}

pub(super) fn sigma_table(cfg: &ExperimentConfig, out: &mut Sink, s: &mut Summary) -> Result<Vec<rcgff::walk::DiffusivityEstimate>> {
    let d = cfg.d;
    let mut head = vec!["n".to_string(), "t".to_string(), "replicas".to_string()];
    for i in 1..=d {
        for j in 1..=d {
            head.push(format!("s{i}{j}"));
        }
    }
    for i in 1..=d {
        for j in 1..=d {
            head.push(format!("se{i}{j}"));
        }
    }
    head.push("boundary_hits".into());
    let mut t = Table { header: head, rows: Vec::new() };
    let mut all = Vec::new();
    for &n in &cfg.n_ladder {
        let est = sigma_row(cfg, n)?;
        let mut row = vec![n.to_string(), fmt(cfg.t), est.replicas.to_string()];
        row.extend(est.sigma2.iter().map(|v| fmt(*v)));
        row.extend(est.se.iter().map(|v| fmt(*v)));
        row.push(est.boundary_hits.to_string());
        t.push(row);
        for i in 0..d {
            for j in 0..d {
                s.put(format!("s{}{}_n{n}", i + 1, j + 1), est.get(i, j));
                s.put(format!("se{}{}_n{n}", i + 1, j + 1), est.se_of(i, j));
            }
        }
        all.push(est);
    }
    out.table("sigma.csv", &t)?;
    out.note("sigma_seeds", format!("derive_seed({}, {SIGMA_TAG} + 16 n); environment derive_seed(., 0), walks derive_seed(., 1)", cfg.seed));
    Ok(all)
}

impl Experiment for Sigma {
    fn name(&self) -> &'static str {
        "sigma"
    }

    fn description(&self) -> &'static str {
        "effective diffusivity Sigma^2 from walk endpoints for each n in the ladder"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let mut s = Summary::default();
        sigma_table(cfg, out, &mut s)?;
        Ok(s)
    }
}
