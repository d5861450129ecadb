//! On-diagonal growth, exit-time bounds, the field maximum and the
//! three-panel sample figure.

use rcgff::cluster::ClusterGraph;
use rcgff::continuum::{bar_g, centering_m_n, homogeneous_ondiag_coefficient, ondiag_coefficient_from_kernel};
use rcgff::dirichlet::DirichletSystem;
use rcgff::domain::{Domain, Region};
use rcgff::environment::ConductanceField;
use rcgff::lattice::{Boundary, BoxGeometry};
use rcgff::law::LawSpec;
use rcgff::rng::derive_seed;
use rcgff::stats::{linear_fit, mean_se, median};

use super::basic::max_abs;
use super::{covering_box, env_seed, project, Experiment, Summary, SAMPLE_TAG};
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::output::{fmt, Sink, Table};
use crate::svg;

const SOLVE_TOL: f64 = 1e-10;

/// Cluster of the run's environment on the box `[-n-2, n+2]^d`.
fn centred_cluster(cfg: &ExperimentConfig, n: usize) -> Result<ClusterGraph> {
    let g = covering_box(&Domain::centered_cube(cfg.d), n)?;
    let field = ConductanceField::generate_on(&cfg.law, g, env_seed(cfg))?;
    Ok(ClusterGraph::largest_component(&field)?)
}

fn require_planar(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.d != 2 {
        return config_err(format!("this experiment is two-dimensional, got d = {}", cfg.d));
    }
    Ok(())
}

/// `g_{B(z,n)}(z, z)` with `z` the cluster site nearest the origin and
/// `B(z, n)` the lattice l1 ball.
pub(super) fn ondiag_values(cfg: &ExperimentConfig, ladder: &[usize]) -> Result<Vec<f64>> {
    ladder
        .iter()
        .map(|&n| {
            let cg = centred_cluster(cfg, n)?;
            let z = project(&cg, &vec![0.0; cfg.d], n);
            let sys = DirichletSystem::assemble(&cg, Region::L1Ball { center: z.clone(), radius: n as f64 })?;
            Ok(sys.green_column(&z, SOLVE_TOL)?.at(&sys, &z))
        })
        .collect()
}

/// Least-squares slope of `g` against `log n`.
pub(super) fn ondiag_slope(ladder: &[usize], g: &[f64]) -> f64 {
    let x: Vec<f64> = ladder.iter().map(|&n| (n as f64).ln()).collect();
    linear_fit(&x, g).0
}

pub struct OnDiag2d;

impl Experiment for OnDiag2d {
    fn name(&self) -> &'static str {
        "ondiag2d"
    }

    fn description(&self) -> &'static str {
        "g_{B(0,n)}(0,0) against log n; fitted slope beside the closed-form and homogeneous coefficients"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        require_planar(cfg)?;
        let g = ondiag_values(cfg, &cfg.n_ladder)?;
        let slope = ondiag_slope(&cfg.n_ladder, &g);
        let theta = super::theta(cfg, out)?;
        let s2 = super::sigma2(cfg, out)?;
        let mean_mu = 2.0 * cfg.d as f64 * cfg.law.mean();
        let formula = bar_g(&s2, mean_mu)?;
        let kernel = ondiag_coefficient_from_kernel(&s2, theta)?;
        let oracle = match cfg.law {
            LawSpec::Constant(c) => homogeneous_ondiag_coefficient() / c,
            _ => f64::NAN,
        };
        out.note("environment_seed", env_seed(cfg));
        out.note("mean_mu", format!("{mean_mu} (2d E[omega])"));
        let mut t = Table::new(&["n", "log_n", "g"]);
        for (n, v) in cfg.n_ladder.iter().zip(&g) {
            t.push(vec![n.to_string(), fmt((*n as f64).ln()), fmt(*v)]);
        }
        out.table("ondiag.csv", &t)?;
        let mut fit = Table::new(&[
            "slope", "bar_g_formula", "homogeneous_oracle", "kernel_coefficient", "slope_over_oracle", "slope_over_formula", "discrepancy",
        ]);
        let discrepancy = (formula / slope - 1.0).abs() > 0.1;
        fit.push(vec![fmt(slope), fmt(formula), fmt(oracle), fmt(kernel), fmt(slope / oracle), fmt(slope / formula), discrepancy.to_string()]);
        out.table("ondiag_fit.csv", &fit)?;
        let pts: Vec<(f64, f64)> = cfg.n_ladder.iter().zip(&g).map(|(n, v)| ((*n as f64).ln(), *v)).collect();
        out.text("ondiag.svg", &svg::line_plot(&[("g(0,0)", pts)], "log n", "g", "on-diagonal Green's function"))?;
        let mut s = Summary::default();
        s.put("slope", slope);
        s.put("bar_g_formula", formula);
        s.put("homogeneous_oracle", oracle);
        s.put("kernel_coefficient", kernel);
        if discrepancy {
            s.note(format!("fitted slope {slope} differs from the closed-form bar_g {formula} by more than 10%"));
        }
        Ok(s)
    }
}

pub struct ExitBound;

impl Experiment for ExitBound {
    fn name(&self) -> &'static str {
        "exit-bound"
    }

    fn description(&self) -> &'static str {
        "max_z E_z[tau] / (||nu||_q n^2) on chemical balls B(0, n) along the ladder"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let mut t = Table::new(&["n", "ball_size", "max_exit", "nu_norm_q", "ratio"]);
        let mut ratios = Vec::new();
        for &n in &cfg.n_ladder {
            let cg = centred_cluster(cfg, n)?;
            let z = project(&cg, &vec![0.0; cfg.d], n);
            let sys = DirichletSystem::assemble(&cg, Region::Chemical { center: z, radius: n as f64 })?;
            let exit = sys.mean_exit_time(SOLVE_TOL)?;
            let max = exit.iter().cloned().fold(0.0, f64::max);
            let norm = (sys.interior().iter().map(|&id| cg.nu(id).powf(cfg.q)).sum::<f64>() / sys.len() as f64).powf(1.0 / cfg.q);
            let ratio = max / (norm * (n * n) as f64);
            t.push(vec![n.to_string(), sys.len().to_string(), fmt(max), fmt(norm), fmt(ratio)]);
            ratios.push(ratio);
        }
        out.note("environment_seed", env_seed(cfg));
        out.table("exit_bound.csv", &t)?;
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        let increasing = ratios.len() > 1 && ratios.windows(2).all(|w| w[1] > w[0]);
        let mut s = Summary::default();
        for (n, r) in cfg.n_ladder.iter().zip(&ratios) {
            s.put(format!("ratio_n{n}"), *r);
        }
        s.put("spread", hi / lo - 1.0);
        s.put("max_ratio", hi);
        s.put("strictly_increasing", if increasing { 1.0 } else { 0.0 });
        let pts: Vec<(f64, f64)> = cfg.n_ladder.iter().zip(&ratios).map(|(n, r)| (*n as f64, *r)).collect();
        out.text("exit_bound.svg", &svg::line_plot(&[("ratio", pts)], "n", "ratio", "mean exit time bound"))?;
        Ok(s)
    }
}

pub struct Max2d;

impl Experiment for Max2d {
    fn name(&self) -> &'static str {
        "max2d"
    }

    fn description(&self) -> &'static str {
        "maximum M_n of the field on [-n, n]^2 centred by m_n (empirical and closed-form bar_g); exploratory"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        require_planar(cfg)?;
        let g = ondiag_values(cfg, &cfg.n_ladder)?;
        let empirical = ondiag_slope(&cfg.n_ladder, &g);
        let s2 = super::sigma2(cfg, out)?;
        let formula = bar_g(&s2, 2.0 * cfg.d as f64 * cfg.law.mean())?;
        if !(empirical > 0.0) {
            return Err(rcgff::Error::Numerical(format!("fitted on-diagonal slope {empirical} is not positive")).into());
        }
        let seed = derive_seed(cfg.seed, SAMPLE_TAG);
        out.note("environment_seed", env_seed(cfg));
        out.note("sample_seed", seed);
        out.note("bar_g_empirical", format!("{empirical} (slope of g_B(0,0) over the ladder)"));
        out.note("bar_g_formula", formula);
        let mut samples = Table::new(&["n", "sample", "max", "centred_empirical", "centred_formula"]);
        let mut table = Table::new(&["n", "m_n_empirical", "m_n_formula", "mean_max", "se_max", "median_centred_empirical", "median_centred_formula"]);
        let mut s = Summary::default();
        let mut last = Vec::new();
        for &n in &cfg.n_ladder {
            let cg = centred_cluster(cfg, n)?;
            let r = n as i64 - 1;
            let sys = DirichletSystem::assemble(&cg, Region::Window { lo: vec![-r, -r], hi: vec![r, r] })?;
            // the closed box includes boundary sites where the field is 0
            let maxima = sys.sample_map(cfg.replicas, seed, |_, z| z.iter().cloned().fold(0.0, f64::max))?;
            let me = centering_m_n(empirical, n as f64, 2)?;
            let mf = centering_m_n(formula, n as f64, 2)?;
            let ce: Vec<f64> = maxima.iter().map(|m| m - me).collect();
            let cf: Vec<f64> = maxima.iter().map(|m| m - mf).collect();
            for (i, m) in maxima.iter().enumerate() {
                samples.push(vec![n.to_string(), i.to_string(), fmt(*m), fmt(ce[i]), fmt(cf[i])]);
            }
            let ms = mean_se(&maxima);
            table.push(vec![n.to_string(), fmt(me), fmt(mf), fmt(ms.mean), fmt(ms.se), fmt(median(&ce)), fmt(median(&cf))]);
            s.put(format!("mean_max_n{n}"), ms.mean);
            s.put(format!("se_max_n{n}"), ms.se);
            s.put(format!("min_max_n{n}"), maxima.iter().cloned().fold(f64::INFINITY, f64::min));
            s.put(format!("median_centred_empirical_n{n}"), median(&ce));
            s.put(format!("median_centred_formula_n{n}"), median(&cf));
            last = ce;
        }
        out.table("max2d.csv", &table)?;
        out.table("max2d_samples.csv", &samples)?;
        let (lo, hi) = last.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let bins = 25usize;
        let w = ((hi - lo) / bins as f64).max(1e-9);
        let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * w).collect();
        let mut dens = vec![0.0; bins];
        for v in &last {
            dens[(((v - lo) / w) as usize).min(bins - 1)] += 1.0 / (last.len() as f64 * w);
        }
        let n = cfg.n_ladder.last().expect("ladder is non-empty");
        out.text("max2d.svg", &svg::histogram(&edges, &dens, None, "M_n - m_n", &format!("centred maximum, n = {n}")))?;
        s.put("bar_g_empirical", empirical);
        s.put("bar_g_formula", formula);
        Ok(s)
    }
}

pub struct Figure1;

impl Experiment for Figure1 {
    fn name(&self) -> &'static str {
        "figure1"
    }

    fn description(&self) -> &'static str {
        "DGFF samples on a size x size square for constant, i.i.d. Exp(1) and line-correlated Exp(1) conductances"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let size = cfg.size;
        let exp = LawSpec::Exponential { rate: 1.0 };
        let panels = [
            ("constant", LawSpec::Constant(1.0)),
            ("iid_exp", exp.clone()),
            ("line_exp", LawSpec::LineCorrelated { base: Box::new(exp), axis: None }),
        ];
        let seed = env_seed(cfg);
        let sample_seed = derive_seed(cfg.seed, SAMPLE_TAG);
        out.note("environment_seed", seed);
        out.note("sample_seed", sample_seed);
        let geometry = BoxGeometry::anchored(vec![size, size], Boundary::Free)?;
        let inner = size as i64 - 2;
        let region = Region::Window { lo: vec![1, 1], hi: vec![inner, inner] };
        let c = (size / 2) as i64;
        let mut grids = Vec::new();
        let mut var = Table::new(&["panel", "law", "g_centre"]);
        let mut s = Summary::default();
        for (name, law) in &panels {
            let field = ConductanceField::generate_on(law, geometry.clone(), seed)?;
            let cg = ClusterGraph::largest_component(&field)?;
            let sys = DirichletSystem::assemble(&cg, region.clone())?;
            let sample = sys.sample_map(1, sample_seed, |_, z| z.to_vec())?.remove(0);
            let mut grid = vec![vec![0.0; size]; size];
            for (k, v) in sample.iter().enumerate() {
                let site = sys.site(k);
                grid[site[1] as usize][site[0] as usize] = *v;
            }
            let gc = sys.green_column(&[c, c], SOLVE_TOL)?.at(&sys, &[c, c]);
            var.push(vec![name.to_string(), law.to_string(), fmt(gc)]);
            s.put(format!("g_centre_{name}"), gc);
            let rim = (0..size).flat_map(|i| [grid[0][i], grid[size - 1][i], grid[i][0], grid[i][size - 1]]);
            s.put(format!("max_abs_boundary_{name}"), rim.fold(0.0f64, |a, v| a.max(v.abs())));
            grids.push(grid);
        }
        let scale = grids.iter().map(|g| g.iter().map(|r| max_abs(r)).fold(0.0, f64::max)).fold(0.0, f64::max);
        let mut t = Table::new(&["x1", "x2", "constant", "iid_exp", "line_exp"]);
        for y in 0..size {
            for x in 0..size {
                t.push(vec![x.to_string(), y.to_string(), fmt(grids[0][y][x]), fmt(grids[1][y][x]), fmt(grids[2][y][x])]);
            }
        }
        out.table("figure1.csv", &t)?;
        out.table("figure1_variance.csv", &var)?;
        for ((name, law), grid) in panels.iter().zip(&grids) {
            out.text(&format!("figure1_{name}.svg"), &svg::heatmap(grid, scale, &format!("{law}, seed {}", cfg.seed)))?;
        }
        s.put("colour_scale", scale);
        Ok(s)
    }
}
