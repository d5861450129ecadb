//! Scaling-limit comparisons along the n-ladder.

use statrs::distribution::{ContinuousCDF, Normal};

use rcgff::continuum::{heat_kernel, product_bump, sigma_sq_f};
use rcgff::dirichlet::{DirichletSystem, Discretization, TestFn};
use rcgff::domain::{Domain, Region};
use rcgff::rng::derive_seed;
use rcgff::stats::chi_square_gof;

use super::basic::sigma_table;
use super::{cluster_on, continuum_spec, env_seed, project, Experiment, Summary, SAMPLE_TAG};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::kgrid::KGrid;
use crate::output::{fmt, Sink, Table};
use crate::svg;

const SOLVE_TOL: f64 = 1e-10;
const SERIES_TOL: f64 = 1e-10;

/// `exp(1 - 1 / (1 - |x - c|^2 / R^2))` inside the ball, 0 outside.
pub fn radial_bump(domain: &Domain) -> impl Fn(&[f64]) -> f64 + Sync + Clone {
    let (lo, hi) = domain.bounds();
    let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (a + b) / 2.0).collect();
    let r2 = ((hi[0] - lo[0]) / 2.0).powi(2);
    move |x: &[f64]| {
        let s = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r2;
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }
}

/// Smooth bump vanishing on the boundary of `D`.
pub(super) fn bump(domain: &Domain) -> Box<TestFn<'static>> {
    match domain {
        Domain::Rectangle { .. } => Box::new(product_bump(domain)),
        Domain::Ball { .. } => Box::new(radial_bump(domain)),
    }
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" ")
}

/// Limit values `g_D^Sigma(x, y) / theta` over the K grid.
fn limits(cfg: &ExperimentConfig, out: &mut Sink, k: &KGrid) -> Result<(f64, Vec<f64>)> {
    let domain = cfg.domain()?;
    let theta = super::theta(cfg, out)?;
    let spec = continuum_spec(&domain, super::sigma2(cfg, out)?)?;
    let lim = (0..k.len())
        .map(|p| {
            let (x, y) = k.pair(p);
            Ok(spec.green(x, y, SERIES_TOL)? / theta)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((theta, lim))
}

pub struct Lclt;

impl Experiment for Lclt {
    fn name(&self) -> &'static str {
        "lclt"
    }

    fn description(&self) -> &'static str {
        "sup over K_{eps,delta} of |n^(d-2) g(pi_n x, pi_n y) - g_D^Sigma(x, y) / theta| along the ladder"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let k = KGrid::build(&domain, cfg.eps, cfg.delta, cfg.grid)?;
        let (_, lim) = limits(cfg, out, &k)?;
        out.note("environment_seed", env_seed(cfg));
        let mut pairs = Table::new(&["n", "x", "y", "discrete", "limit", "abs_err", "rel_err"]);
        let mut table = Table::new(&["n", "pairs", "sup_abs", "mean_abs", "sup_rel", "mean_rel", "max_asymmetry"]);
        let mut s = Summary::default();
        s.put("pairs", k.len() as f64);
        let mut curve = Vec::new();
        for &n in &cfg.n_ladder {
            let cg = cluster_on(cfg, &domain, n)?;
            let sys = DirichletSystem::assemble(&cg, Region::scaled(domain.clone(), n as f64)?)?;
            let proj: Vec<Vec<i64>> = k.points.iter().map(|x| project(&cg, x, n)).collect();
            let cols = sys.green_columns(&proj, SOLVE_TOL)?;
            let scale = (n as f64).powi(cfg.d as i32 - 2);
            let (mut sup_abs, mut sum_abs, mut sup_rel, mut sum_rel, mut asym) = (0.0f64, 0.0, 0.0f64, 0.0, 0.0f64);
            for (p, &(i, j)) in k.pairs.iter().enumerate() {
                let g = scale * cols[j].at(&sys, &proj[i]);
                let gt = scale * cols[i].at(&sys, &proj[j]);
                asym = asym.max((g - gt).abs() / g.abs().max(f64::MIN_POSITIVE));
                let err = (g - lim[p]).abs();
                let rel = err / lim[p];
                sup_abs = sup_abs.max(err);
                sup_rel = sup_rel.max(rel);
                sum_abs += err;
                sum_rel += rel;
                pairs.push(vec![n.to_string(), coords(&k.points[i]), coords(&k.points[j]), fmt(g), fmt(lim[p]), fmt(err), fmt(rel)]);
            }
            let m = k.len() as f64;
            table.push(vec![n.to_string(), k.len().to_string(), fmt(sup_abs), fmt(sum_abs / m), fmt(sup_rel), fmt(sum_rel / m), fmt(asym)]);
            s.put(format!("sup_abs_n{n}"), sup_abs);
            s.put(format!("sup_rel_n{n}"), sup_rel);
            s.put(format!("mean_abs_n{n}"), sum_abs / m);
            s.put(format!("asymmetry_n{n}"), asym);
            curve.push((n as f64, sup_abs));
        }
        out.table("lclt.csv", &table)?;
        out.table("lclt_pairs.csv", &pairs)?;
        out.text("lclt.svg", &svg::line_plot(&[("sup error", curve)], "n", "sup |error|", "Green's function LCLT"))?;
        Ok(s)
    }
}

pub struct CovScale;

impl Experiment for CovScale {
    fn name(&self) -> &'static str {
        "cov-scale"
    }

    fn description(&self) -> &'static str {
        "empirical DGFF covariances over K_{eps,delta} against solved and limiting Green's functions"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let k = KGrid::build(&domain, cfg.eps, cfg.delta, cfg.grid)?;
        let (_, lim) = limits(cfg, out, &k)?;
        let seed = derive_seed(cfg.seed, SAMPLE_TAG);
        out.note("environment_seed", env_seed(cfg));
        out.note("sample_seed", seed);
        let kk = cfg.replicas as f64;
        let mut pairs = Table::new(&["n", "x", "y", "empirical", "solved", "se", "z", "limit", "scaled_err", "scaled_band"]);
        let mut table = Table::new(&["n", "samples", "within_4se", "max_mean_z", "sup_scaled_err", "mean_band"]);
        let mut s = Summary::default();
        for &n in &cfg.n_ladder {
            let cg = cluster_on(cfg, &domain, n)?;
            let sys = DirichletSystem::assemble(&cg, Region::scaled(domain.clone(), n as f64)?)?;
            let proj: Vec<Vec<i64>> = k.points.iter().map(|x| project(&cg, x, n)).collect();
            let local: Vec<usize> = proj.iter().map(|p| sys.require(p)).collect::<rcgff::Result<_>>()?;
            let cols = sys.green_columns(&proj, SOLVE_TOL)?;
            let vals = sys.sample_map(cfg.replicas, seed, |_, z| local.iter().map(|&i| z[i]).collect::<Vec<f64>>())?;
            let scale = (n as f64).powi(cfg.d as i32 - 2);
            let gxx = |i: usize| cols[i].values[local[i]];
            let mut max_mean_z = 0.0f64;
            for i in 0..local.len() {
                let mean = vals.iter().map(|v| v[i]).sum::<f64>() / kk;
                max_mean_z = max_mean_z.max(mean.abs() / (gxx(i) / kk).sqrt());
            }
            let (mut within, mut sup_err, mut band) = (0usize, 0.0f64, 0.0);
            for (p, &(i, j)) in k.pairs.iter().enumerate() {
                let emp = vals.iter().map(|v| v[i] * v[j]).sum::<f64>() / kk;
                let g = cols[j].values[local[i]];
                let se = ((gxx(i) * gxx(j) + g * g) / kk).sqrt();
                let z = (emp - g) / se;
                if z.abs() <= 4.0 {
                    within += 1;
                }
                let err = (scale * emp - lim[p]).abs();
                sup_err = sup_err.max(err);
                band += 3.0 * scale * se;
                pairs.push(vec![
                    n.to_string(),
                    coords(&k.points[i]),
                    coords(&k.points[j]),
                    fmt(emp),
                    fmt(g),
                    fmt(se),
                    fmt(z),
                    fmt(lim[p]),
                    fmt(err),
                    fmt(3.0 * scale * se),
                ]);
            }
            let frac = within as f64 / k.len() as f64;
            let mean_band = band / k.len() as f64;
            table.push(vec![n.to_string(), cfg.replicas.to_string(), fmt(frac), fmt(max_mean_z), fmt(sup_err), fmt(mean_band)]);
            s.put(format!("within_4se_n{n}"), frac);
            s.put(format!("max_mean_z_n{n}"), max_mean_z);
            s.put(format!("sup_scaled_err_n{n}"), sup_err);
            s.put(format!("mean_band_n{n}"), mean_band);
        }
        out.table("cov_scale.csv", &table)?;
        out.table("cov_scale_pairs.csv", &pairs)?;
        Ok(s)
    }
}

pub struct VarLimit;

impl Experiment for VarLimit {
    fn name(&self) -> &'static str {
        "var-limit"
    }

    fn description(&self) -> &'static str {
        "Var Phi_n(f) for a smooth bump f against the limit sigma^2_Sigma(f)"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let domain = cfg.domain()?;
        let f = bump(&domain);
        let theta = super::theta(cfg, out)?;
        let spec = continuum_spec(&domain, super::sigma2(cfg, out)?)?;
        let limit = sigma_sq_f(&spec, &*f, theta, cfg.tol)?;
        out.note("environment_seed", env_seed(cfg));
        out.note(
            "sigma_sq_f",
            format!("{} (levels {} and {} nodes, relative change {})", limit.value, limit.nodes / 2, limit.nodes, limit.relative_change),
        );
        let mut table = Table::new(&["n", "var_exact", "sigma_sq_f", "ratio", "abs_ratio_minus_1"]);
        let mut s = Summary::default();
        s.put("sigma_sq_f", limit.value);
        s.put("quadrature_rel_change", limit.relative_change);
        let mut curve = Vec::new();
        for &n in &cfg.n_ladder {
            let cg = cluster_on(cfg, &domain, n)?;
            let sys = DirichletSystem::assemble(&cg, Region::scaled(domain.clone(), n as f64)?)?;
            let var = sys.variance_phi_exact(&*f, n as f64, Discretization::Point, 1e-12)?;
            let ratio = if limit.value == 0.0 { f64::NAN } else { var / limit.value };
            table.push(vec![n.to_string(), fmt(var), fmt(limit.value), fmt(ratio), fmt((ratio - 1.0).abs())]);
            s.put(format!("var_n{n}"), var);
            s.put(format!("ratio_n{n}"), ratio);
            curve.push((n as f64, ratio));
        }
        out.table("var_limit.csv", &table)?;
        out.text("var_limit.svg", &svg::line_plot(&[("Var/limit", curve)], "n", "ratio", "variance of Phi_n(f)"))?;
        Ok(s)
    }
}

pub struct Qfclt;

const QFCLT_BINS: usize = 6;

impl Experiment for Qfclt {
    fn name(&self) -> &'static str {
        "qfclt"
    }

    fn description(&self) -> &'static str {
        "Sigma^2 along the ladder and a chi-square fit of the last endpoints to the Gaussian heat kernel"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Sink) -> Result<Summary> {
        let mut s = Summary::default();
        let all = sigma_table(cfg, out, &mut s)?;
        let est = all.last().expect("ladder is non-empty");
        let t = cfg.t;
        // equal-probability cells per axis under the fitted diagonal kernel
        let sd: Vec<f64> = (0..2).map(|a| (t * est.get(a, a)).sqrt()).collect();
        let z = Normal::standard();
        let edges: Vec<f64> = (1..QFCLT_BINS).map(|b| z.inverse_cdf(b as f64 / QFCLT_BINS as f64)).collect();
        let cell = |v: f64, a: usize| edges.iter().filter(|&&e| v / sd[a] > e).count();
        let mut counts = vec![0.0; QFCLT_BINS * QFCLT_BINS];
        for p in &est.endpoints {
            counts[cell(p[0], 0) * QFCLT_BINS + cell(p[1], 1)] += 1.0;
        }
        let m = est.endpoints.len() as f64;
        let expected = vec![m / (QFCLT_BINS * QFCLT_BINS) as f64; counts.len()];
        let fit = chi_square_gof(&counts, &expected, 2);
        let mut hist = Table::new(&["cell1", "cell2", "observed", "expected"]);
        for (c, o) in counts.iter().enumerate() {
            hist.push(vec![(c / QFCLT_BINS).to_string(), (c % QFCLT_BINS).to_string(), fmt(*o), fmt(expected[c])]);
        }
        out.table("qfclt_cells.csv", &hist)?;
        let mut fit_t = Table::new(&["n", "endpoints", "chi2", "p_value"]);
        fit_t.push(vec![est.n.to_string(), est.endpoints.len().to_string(), fmt(fit.statistic), fmt(fit.p_value)]);
        out.table("qfclt_fit.csv", &fit_t)?;
        // first-axis marginal against the kernel
        let bins = 30usize;
        let w = 8.0 * sd[0] / bins as f64;
        let hedges: Vec<f64> = (0..=bins).map(|b| -4.0 * sd[0] + b as f64 * w).collect();
        let mut dens = vec![0.0; bins];
        for p in &est.endpoints {
            let b = ((p[0] + 4.0 * sd[0]) / w).floor();
            if b >= 0.0 && (b as usize) < bins {
                dens[b as usize] += 1.0 / (m * w);
            }
        }
        let s11 = [est.get(0, 0)];
        let curve: Vec<(f64, f64)> = (0..=120)
            .map(|i| {
                let x = -4.0 * sd[0] + 8.0 * sd[0] * i as f64 / 120.0;
                Ok((x, heat_kernel(&s11, t, &[x], &[0.0])?))
            })
            .collect::<rcgff::Result<_>>()?;
        out.text("qfclt.svg", &svg::histogram(&hedges, &dens, Some(&curve), "X/n (axis 1)", &format!("endpoints at n = {}", est.n)))?;
        s.put("chi2", fit.statistic);
        s.put("chi2_p", fit.p_value);
        Ok(s)
    }
}
