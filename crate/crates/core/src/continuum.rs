//! Continuum limit objects for Brownian motion with covariance `Sigma^2`
//! (generator `(1/2) div Sigma^2 grad`): Gaussian and killed heat kernels,
//! killed Green's functions on rectangles and balls, a Monte Carlo oracle,
//! the limiting variance of field functionals and on-diagonal constants.
//!
//! Green's functions here solve `-(1/2) div Sigma^2 grad g = delta`. After
//! the rescaling `u_i = x_i / sigma_i` this is `2 / prod(sigma_i)` times the
//! Green's function of `-Laplacian` on the rescaled domain.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dirichlet::TestFn;
use crate::domain::{dist2, Domain};
use crate::error::{param, Error, Result};
use crate::rng::derive_seed;
use crate::stats::{replicate, MeanSe};

/// Domain, diffusivity and series truncation for continuum kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuumGreenSpec {
    pub domain: Domain,
    /// Row-major `d x d` covariance matrix.
    pub sigma2: Vec<f64>,
    /// Cap on series terms (modes in 2D, shells above).
    pub max_terms: usize,
}

impl ContinuumGreenSpec {
    pub fn new(domain: Domain, sigma2: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if sigma2.len() != d * d {
            return param(format!("sigma2 must have {} entries", d * d));
        }
        cholesky_small(&sigma2, d)?;
        Ok(Self { domain, sigma2, max_terms: 200_000 })
    }

    /// `Sigma^2 = s I`.
    pub fn isotropic(domain: Domain, s: f64) -> Result<Self> {
        let d = domain.dim();
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = s;
        }
        Self::new(domain, m)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Per-axis standard deviations when `Sigma^2` is diagonal.
    pub fn diagonal_sigma(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        let off = (0..d).any(|i| (0..d).any(|j| i != j && self.sigma2[i * d + j] != 0.0));
        (!off).then(|| (0..d).map(|i| self.sigma2[i * d + i].sqrt()).collect())
    }

    fn isotropic_variance(&self) -> Option<f64> {
        let d = self.dim();
        self.diagonal_sigma()?;
        let s = self.sigma2[0];
        (0..d).all(|i| self.sigma2[i * d + i] == s).then_some(s)
    }

    pub fn det_sigma2(&self) -> f64 {
        let d = self.dim();
        let l = cholesky_small(&self.sigma2, d).expect("validated at construction");
        (0..d).map(|i| l[i * d + i].powi(2)).product()
    }

    /// `g_D(x, y)` on `self.domain`, a rectangle or a ball.
    pub fn green(&self, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
        match self.domain {
            Domain::Rectangle { .. } => green_rectangle(self, x, y, tol),
            Domain::Ball { .. } => green_ball(self, x, y),
        }
    }
}

/// Lower Cholesky factor of a small dense SPD matrix.
fn cholesky_small(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 * a[i * d + j].abs().max(1.0) {
                return param("sigma2 must be symmetric");
            }
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return param("sigma2 must be positive definite");
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Gaussian density with covariance `t Sigma^2`.
pub fn heat_kernel(sigma2: &[f64], t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return param(format!("time must be positive, got {t}"));
    }
    let d = x.len();
    let l = cholesky_small(sigma2, d)?;
    // solve L w = x - y
    let mut w = vec![0.0; d];
    for i in 0..d {
        let mut s = x[i] - y[i];
        for k in 0..i {
            s -= l[i * d + k] * w[k];
        }
        w[i] = s / l[i * d + i];
    }
    let q: f64 = w.iter().map(|v| v * v).sum();
    let det: f64 = (0..d).map(|i| l[i * d + i].powi(2)).product();
    Ok((-q / (2.0 * t)).exp() / ((2.0 * PI * t).powi(d as i32) * det).sqrt())
}

fn rectangle_parts(spec: &ContinuumGreenSpec) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let Domain::Rectangle { lower, upper } = &spec.domain else {
        return Err(Error::Unsupported("expected a rectangle".into()));
    };
    let sigma = spec.diagonal_sigma().ok_or_else(|| {
        Error::Unsupported("series Green's functions need a diagonal sigma2; use mc_green".into())
    })?;
    let lengths = lower.iter().zip(upper).zip(&sigma).map(|((a, b), s)| (b - a) / s).collect();
    Ok((lower.clone(), sigma, lengths))
}

fn rescale(x: &[f64], lower: &[f64], sigma: &[f64]) -> Vec<f64> {
    x.iter().zip(lower).zip(sigma).map(|((v, a), s)| (v - a) / s).collect()
}

/// `-(1/2) log(1 - 2 e^-b cos a + e^-2b)`, i.e. `sum_k cos(k a) e^(-k b) / k`.
fn log_kernel(a: f64, b: f64) -> f64 {
    let e = (-b).exp();
    let one_minus = -(-b).exp_m1();
    let s = (a / 2.0).sin();
    -0.5 * (one_minus * one_minus + 4.0 * e * s * s).ln()
}

/// Remainder of the 2D mode sum after the free-space leading part, and the
/// number of modes used.
fn rectangle_remainder_2d(len: &[f64], u: &[f64], v: &[f64], tol: f64, k_fixed: Option<usize>, cap: usize) -> Result<(f64, usize)> {
    let (a, b) = (len[0], len[1]);
    let (s, t) = (u[0], v[0]);
    let delta = (s - t).abs();
    let c = (s + t).min(2.0 * a - s - t);
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        let m = k as f64 * PI / b;
        let q = (-2.0 * m * a).exp();
        let num = (-m * delta).exp() * q - (-m * (s + t)).exp() - (-m * (2.0 * a - s - t)).exp() + (-m * (2.0 * a - delta)).exp();
        let gamma = num / (2.0 * m * (-(-2.0 * m * a).exp_m1()));
        let modes = 2.0 / b * (k as f64 * PI * u[1] / b).sin() * (k as f64 * PI * v[1] / b).sin();
        sum += modes * gamma;
        match k_fixed {
            Some(kmax) if k >= kmax => return Ok((sum, k)),
            Some(_) => {}
            None => {
                let next = (k + 1) as f64 * PI / b;
                let bound = 2.0 / b * 4.0 * (-next * c).exp() / (2.0 * next * (-(-2.0 * next * a).exp_m1()));
                let tail = bound / -(-PI * c / b).exp_m1();
                if tail <= tol {
                    return Ok((sum, k));
                }
                if k >= cap {
                    return Err(Error::Accuracy(format!("rectangle series did not reach {tol:e} within {cap} modes")));
                }
            }
        }
    }
}

/// Green's function of `-Laplacian` on `prod [0, len_i]`, 2D, optionally at
/// a fixed number of modes.
fn laplace_green_2d(len: &[f64], u: &[f64], v: &[f64], tol: f64, k_fixed: Option<usize>, cap: usize) -> Result<f64> {
    let b = len[1];
    let a1 = PI * u[1] / b;
    let a2 = PI * v[1] / b;
    let beta = PI * (u[0] - v[0]).abs() / b;
    let lead = (log_kernel(a1 - a2, beta) - log_kernel(a1 + a2, beta)) / (2.0 * PI);
    let (rem, _) = rectangle_remainder_2d(len, u, v, tol, k_fixed, cap)?;
    Ok(lead + rem)
}

/// `sinh(m s<) sinh(m (A - s>)) / (m sinh(m A))` in overflow-free form.
fn ode_kernel(m: f64, s: f64, t: f64, a: f64) -> f64 {
    let delta = (s - t).abs();
    let num = (-m * delta).exp() - (-m * (s + t)).exp() - (-m * (2.0 * a - s - t)).exp() + (-m * (2.0 * a - delta)).exp();
    num / (2.0 * m * (-(-2.0 * m * a).exp_m1()))
}

/// `d >= 3`: sine modes on all axes but the one of largest separation, summed
/// over shells `max k_i = s` until two consecutive shells fall below `tol`.
fn laplace_green_nd(len: &[f64], u: &[f64], v: &[f64], tol: f64, cap: usize) -> Result<f64> {
    let d = len.len();
    let j = (0..d)
        .max_by(|&p, &q| (u[p] - v[p]).abs().total_cmp(&(u[q] - v[q]).abs()))
        .expect("d >= 3");
    let axes: Vec<usize> = (0..d).filter(|&i| i != j).collect();
    let r = axes.len();
    let mut total = 0.0;
    let mut quiet = 0;
    let mut k = vec![0usize; r];
    for shell in 1..=cap {
        let mut shell_sum = 0.0;
        let side = shell;
        let count = side.pow(r as u32);
        for idx in 0..count {
            let mut rem = idx;
            let mut on_shell = false;
            for ki in k.iter_mut() {
                *ki = rem % side + 1;
                rem /= side;
                on_shell |= *ki == shell;
            }
            if !on_shell {
                continue;
            }
            let mut pref = 1.0;
            let mut m2 = 0.0;
            for (p, &ax) in axes.iter().enumerate() {
                let w = k[p] as f64 * PI / len[ax];
                pref *= 2.0 / len[ax] * (w * u[ax]).sin() * (w * v[ax]).sin();
                m2 += w * w;
            }
            shell_sum += pref * ode_kernel(m2.sqrt(), u[j], v[j], len[j]);
        }
        total += shell_sum;
        if shell_sum.abs() <= tol {
            quiet += 1;
            if quiet >= 2 && shell >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Accuracy(format!("rectangle series did not reach {tol:e} within {cap} shells")))
}

/// Killed Green's function on a rectangle with diagonal `Sigma^2`, summed
/// adaptively to absolute accuracy `tol`.
pub fn green_rectangle(spec: &ContinuumGreenSpec, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return param("tolerance must be positive");
    }
    let (lower, sigma, len) = rectangle_parts(spec)?;
    check_points(&spec.domain, x, y)?;
    let scale = 2.0 / sigma.iter().product::<f64>();
    let (u, v) = (rescale(x, &lower, &sigma), rescale(y, &lower, &sigma));
    let g = if len.len() == 2 {
        laplace_green_2d(&len, &u, &v, tol / scale, None, spec.max_terms)?
    } else {
        laplace_green_nd(&len, &u, &v, tol / scale, spec.max_terms.min(4000))?
    };
    Ok(scale * g)
}

/// Same series in 2D with exactly `modes` correction terms.
pub fn green_rectangle_truncated(spec: &ContinuumGreenSpec, x: &[f64], y: &[f64], modes: usize) -> Result<f64> {
    let (lower, sigma, len) = rectangle_parts(spec)?;
    if len.len() != 2 {
        return Err(Error::Unsupported("fixed truncation is implemented for d = 2".into()));
    }
    check_points(&spec.domain, x, y)?;
    let scale = 2.0 / sigma.iter().product::<f64>();
    let (u, v) = (rescale(x, &lower, &sigma), rescale(y, &lower, &sigma));
    Ok(scale * laplace_green_2d(&len, &u, &v, 0.0, Some(modes.max(1)), usize::MAX)?)
}

fn check_points(domain: &Domain, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != domain.dim() || y.len() != domain.dim() {
        return param("point dimension does not match the domain");
    }
    if !domain.contains(x) || !domain.contains(y) {
        return Err(Error::Domain("points must lie inside the domain".into()));
    }
    if x == y {
        return Err(Error::Singularity("the Green's function is infinite on the diagonal".into()));
    }
    Ok(())
}

/// `Gamma(d/2) / (2 (d-2) pi^(d/2))` for `d >= 3`.
fn newton_constant(d: usize) -> f64 {
    let df = d as f64;
    statrs::function::gamma::gamma(df / 2.0) / (2.0 * (df - 2.0) * PI.powf(df / 2.0))
}

/// Killed Green's function on a ball for isotropic `Sigma^2 = s I` by the
/// inversion formula, `(2 / s)` times that of `-Laplacian`.
pub fn green_ball(spec: &ContinuumGreenSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let Domain::Ball { center, radius } = &spec.domain else {
        return Err(Error::Unsupported("expected a ball".into()));
    };
    let s = spec
        .isotropic_variance()
        .ok_or_else(|| Error::Unsupported("ball Green's function needs isotropic sigma2; use mc_green".into()))?;
    check_points(&spec.domain, x, y)?;
    let xr: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
    let yr: Vec<f64> = y.iter().zip(center).map(|(a, c)| a - c).collect();
    let r2 = radius * radius;
    let xx: f64 = xr.iter().map(|v| v * v).sum();
    let yy: f64 = yr.iter().map(|v| v * v).sum();
    let xy: f64 = xr.iter().zip(&yr).map(|(a, b)| a * b).sum();
    let image = xx * yy / r2 - 2.0 * xy + r2;
    let direct = dist2(x, y);
    let d = x.len();
    let g = if d == 2 {
        (image / direct).ln() / (4.0 * PI)
    } else {
        let p = (2.0 - d as f64) / 2.0;
        newton_constant(d) * (direct.powf(p) - image.powf(p))
    };
    Ok(2.0 / s * g)
}

/// Killed heat kernel on a rectangle with diagonal `Sigma^2` as a product of
/// one-dimensional sine series.
pub fn killed_heat_kernel_rectangle(spec: &ContinuumGreenSpec, t: f64, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return param(format!("time must be positive, got {t}"));
    }
    let (lower, sigma, len) = rectangle_parts(spec)?;
    let (u, v) = (rescale(x, &lower, &sigma), rescale(y, &lower, &sigma));
    let mut out = 1.0;
    for i in 0..len.len() {
        let l = len[i];
        let mut s = 0.0;
        let mut k = 1usize;
        loop {
            let w = k as f64 * PI / l;
            let decay = (-0.5 * w * w * t).exp();
            s += 2.0 / l * (w * u[i]).sin() * (w * v[i]).sin() * decay;
            if 2.0 / l * decay <= tol * 1e-3 || k >= spec.max_terms {
                break;
            }
            k += 1;
        }
        out *= s / sigma[i];
    }
    Ok(out)
}

/// Axis-aligned cell for occupation estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn centered(c: &[f64], side: f64) -> Self {
        Self {
            lo: c.iter().map(|v| v - side / 2.0).collect(),
            hi: c.iter().map(|v| v + side / 2.0).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v < b)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Monte Carlo Green's estimate with its time-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct McGreen {
    pub estimate: MeanSe,
    /// Step of the returned estimate.
    pub step: f64,
    /// Change from the previous (twice larger) step.
    pub drift: f64,
    pub halvings: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub replicas: usize,
    pub step: f64,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { replicas: 100_000, step: 1e-3, max_halvings: 4, seed: 0 }
    }
}

/// Probability that the Brownian bridge between two inside points crossed
/// the boundary, from the half-space formula at each nearby face.
fn crossing_probability(domain: &Domain, sigma2: &[f64], a: &[f64], b: &[f64], h: f64) -> f64 {
    let d = a.len();
    match domain {
        Domain::Rectangle { lower, upper } => {
            let mut survive = 1.0;
            for i in 0..d {
                let var = sigma2[i * d + i] * h;
                let lo = (-2.0 * (a[i] - lower[i]) * (b[i] - lower[i]) / var).exp();
                let hi = (-2.0 * (upper[i] - a[i]) * (upper[i] - b[i]) / var).exp();
                survive *= (1.0 - lo) * (1.0 - hi);
            }
            1.0 - survive
        }
        Domain::Ball { center, radius } => {
            let ra = dist2(a, center).sqrt();
            let rb = dist2(b, center).sqrt();
            let mut var = 0.0;
            if ra > 0.0 {
                for i in 0..d {
                    for j in 0..d {
                        var += (a[i] - center[i]) * sigma2[i * d + j] * (a[j] - center[j]);
                    }
                }
                var /= ra * ra;
            } else {
                var = sigma2[0];
            }
            (-2.0 * (radius - ra) * (radius - rb) / (var * h)).exp()
        }
    }
}

fn euler_paths<F>(spec: &ContinuumGreenSpec, x: &[f64], h: f64, replicas: usize, seed: u64, outputs: usize, on_step: F) -> Result<Vec<MeanSe>>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    let d = spec.dim();
    let l = cholesky_small(&spec.sigma2, d)?;
    let sq = h.sqrt();
    replicate(replicas, outputs, seed, |rng, out| {
        let mut p = x.to_vec();
        let mut next = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut steps = 0u64;
        loop {
            on_step(&p, h, out);
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            for i in 0..d {
                let mut s = 0.0;
                for k in 0..=i {
                    s += l[i * d + k] * z[k];
                }
                next[i] = p[i] + sq * s;
            }
            if !spec.domain.contains(&next) {
                break;
            }
            let pc = crossing_probability(&spec.domain, &spec.sigma2, &p, &next, h);
            if rng.random::<f64>() < pc {
                break;
            }
            std::mem::swap(&mut p, &mut next);
            steps += 1;
            if steps > 1_000_000_000 {
                return Err(Error::Numerical("Euler path failed to exit".into()));
            }
        }
        Ok(())
    })
}

fn halving_loop<F>(opts: McOptions, run: F) -> Result<McGreen>
where
    F: Fn(f64, u64) -> Result<MeanSe>,
{
    if !(opts.step > 0.0) {
        return param("Euler step must be positive");
    }
    let mut h = opts.step;
    let mut prev = run(h, derive_seed(opts.seed, 0))?;
    let mut drift = f64::INFINITY;
    for level in 1..=opts.max_halvings {
        h /= 2.0;
        let cur = run(h, derive_seed(opts.seed, level as u64))?;
        drift = (cur.mean - prev.mean).abs();
        let se = (cur.se.powi(2) + prev.se.powi(2)).sqrt();
        prev = cur;
        if drift <= se {
            return Ok(McGreen { estimate: prev, step: h, drift, halvings: level, converged: true });
        }
    }
    Ok(McGreen { estimate: prev, step: h, drift, halvings: opts.max_halvings, converged: opts.max_halvings == 0 })
}

/// Occupation density of Euler-Maruyama paths from `x` in `cell` before
/// leaving the domain, with a Brownian-bridge exit correction. The step is
/// halved until successive estimates differ by at most their combined SE.
pub fn mc_green(spec: &ContinuumGreenSpec, x: &[f64], cell: &Cell, opts: McOptions) -> Result<McGreen> {
    if !spec.domain.contains(x) {
        return Err(Error::Domain("start point must lie inside the domain".into()));
    }
    let centre: Vec<f64> = cell.lo.iter().zip(&cell.hi).map(|(a, b)| (a + b) / 2.0).collect();
    if !spec.domain.contains(&centre) {
        let zero = MeanSe { mean: 0.0, se: 0.0, n: opts.replicas };
        return Ok(McGreen { estimate: zero, step: opts.step, drift: 0.0, halvings: 0, converged: true });
    }
    let vol = cell.volume();
    halving_loop(opts, |h, seed| {
        Ok(euler_paths(spec, x, h, opts.replicas, seed, 1, |p, h, out| {
            if cell.contains(p) {
                out[0] += h / vol;
            }
        })?[0])
    })
}

/// Mean exit time of Euler-Maruyama paths, with the same step control.
pub fn mc_exit_time(spec: &ContinuumGreenSpec, x: &[f64], opts: McOptions) -> Result<McGreen> {
    if !spec.domain.contains(x) {
        return Err(Error::Domain("start point must lie inside the domain".into()));
    }
    halving_loop(opts, |h, seed| Ok(euler_paths(spec, x, h, opts.replicas, seed, 1, |_, h, out| out[0] += h)?[0]))
}

/// `E_x[tau] = (R^2 - |x|^2) / (s d)` on a ball with `Sigma^2 = s I`.
pub fn exit_time_moment(spec: &ContinuumGreenSpec, x: &[f64]) -> Result<f64> {
    let Domain::Ball { center, radius } = &spec.domain else {
        return Err(Error::Unsupported("exit-time moment is available on balls only".into()));
    };
    let s = spec
        .isotropic_variance()
        .ok_or_else(|| Error::Unsupported("exit-time moment needs isotropic sigma2".into()))?;
    let r2 = dist2(x, center);
    if r2 > radius * radius {
        return Err(Error::Domain("point lies outside the ball".into()));
    }
    Ok((radius * radius - r2) / (s * x.len() as f64))
}

/// `1 / (pi sqrt(det Sigma^2) E[mu])`, d = 2.
pub fn bar_g(sigma2: &[f64], mean_mu: f64) -> Result<f64> {
    if sigma2.len() != 4 {
        return param("bar_g is defined for d = 2");
    }
    if !(mean_mu > 0.0) {
        return param("E[mu] must be positive");
    }
    let l = cholesky_small(sigma2, 2)?;
    let det = (l[0] * l[3]).powi(2);
    Ok(1.0 / (PI * det.sqrt() * mean_mu))
}

/// `sqrt(bar_g) (sqrt(2d) log n - 3 / (2 sqrt(2d)) log log n)`.
pub fn centering_m_n(bar_g: f64, n: f64, d: usize) -> Result<f64> {
    if !(n > 1.0) || !(bar_g > 0.0) {
        return param("centering needs n > 1 and bar_g > 0");
    }
    let c = (2.0 * d as f64).sqrt();
    Ok(bar_g.sqrt() * (c * n.ln() - 3.0 / (2.0 * c) * n.ln().ln()))
}

/// Log-growth coefficient of the discrete on-diagonal Green's function
/// predicted by the kernel limit: `1 / (pi sqrt(det Sigma^2) theta)`, d = 2.
pub fn ondiag_coefficient_from_kernel(sigma2: &[f64], theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return param("theta must lie in (0, 1]");
    }
    bar_g(sigma2, 1.0).map(|v| v / theta)
}

/// Homogeneous d = 2 coefficient from the embedded simple random walk: its
/// killed Green's function grows like `(2 / pi) log n` visits, each lasting
/// `1 / mu = 1/4` on average.
pub fn homogeneous_ondiag_coefficient() -> f64 {
    (2.0 / PI) / 4.0
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = (1.0 - z) / 2.0;
        x[n - 1 - i] = (1.0 + z) / 2.0;
        w[i] = wt / 2.0;
        w[n - 1 - i] = wt / 2.0;
    }
    (x, w)
}

/// `sigma^2_Sigma(f)` with its two quadrature levels.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSqF {
    pub value: f64,
    pub coarse: f64,
    /// Outer nodes per axis at the fine level.
    pub nodes: usize,
    pub relative_change: f64,
}

/// `theta * int int f(x) f(y) g(x, y) dx dy` for d = 2 rectangles (diagonal
/// `Sigma^2`) and discs (isotropic). `g` is split into the free-space kernel
/// and a smooth remainder; the remainder is integrated on a product grid and
/// the free-space part in polar coordinates about each outer node. The grid
/// is doubled until two levels agree to `tol` relative.
pub fn sigma_sq_f(spec: &ContinuumGreenSpec, f: &TestFn<'_>, theta: f64, tol: f64) -> Result<SigmaSqF> {
    if !(theta > 0.0 && theta <= 1.0) {
        return param("theta must lie in (0, 1]");
    }
    if spec.dim() != 2 {
        return Err(Error::Unsupported("sigma_sq_f quadrature is implemented for d = 2".into()));
    }
    let kernel = SplitKernel::new(spec)?;
    let mut m = 16;
    let mut coarse = theta * split_quadrature(&kernel, f, m)?;
    loop {
        let fine = theta * split_quadrature(&kernel, f, 2 * m)?;
        let rel = if fine == 0.0 && coarse == 0.0 { 0.0 } else { (fine - coarse).abs() / fine.abs() };
        if rel <= tol {
            return Ok(SigmaSqF { value: fine, coarse, nodes: 2 * m, relative_change: rel });
        }
        if 2 * m >= 64 {
            return Err(Error::Accuracy(format!(
                "quadrature levels {m} and {} differ by {rel:e} relative, above {tol:e}",
                2 * m
            )));
        }
        m *= 2;
        coarse = fine;
    }
}

/// `g = Gamma(x - y) + h(x, y)` with `Gamma(z) = c log |Sigma^-1 z|`.
struct SplitKernel {
    domain: Domain,
    /// Inverse standard deviations per axis.
    inv_sigma: Vec<f64>,
    c: f64,
    kind: KernelKind,
}

enum KernelKind {
    Rectangle { lower: Vec<f64>, sigma: Vec<f64>, len: Vec<f64> },
    Disc { center: Vec<f64>, radius: f64, s: f64 },
}

impl SplitKernel {
    fn new(spec: &ContinuumGreenSpec) -> Result<Self> {
        let sigma = spec
            .diagonal_sigma()
            .ok_or_else(|| Error::Unsupported("sigma_sq_f needs a diagonal sigma2".into()))?;
        let c = -1.0 / (PI * sigma.iter().product::<f64>());
        let kind = match &spec.domain {
            Domain::Rectangle { .. } => {
                let (lower, sigma, len) = rectangle_parts(spec)?;
                KernelKind::Rectangle { lower, sigma, len }
            }
            Domain::Ball { center, radius } => {
                let s = spec
                    .isotropic_variance()
                    .ok_or_else(|| Error::Unsupported("disc kernels need isotropic sigma2".into()))?;
                KernelKind::Disc { center: center.clone(), radius: *radius, s }
            }
        };
        Ok(Self { domain: spec.domain.clone(), inv_sigma: sigma.iter().map(|s| 1.0 / s).collect(), c, kind })
    }

    /// Smooth part `g - Gamma`, finite on the diagonal. On rectangles the
    /// mode sum is left out and integrated separately.
    fn smooth(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match &self.kind {
            KernelKind::Rectangle { lower, sigma, len } => {
                let (u, v) = (rescale(x, lower, sigma), rescale(y, lower, sigma));
                let b = len[1];
                let a1 = PI * u[1] / b;
                let a2 = PI * v[1] / b;
                let beta = PI * (u[0] - v[0]).abs() / b;
                let am = a1 - a2;
                let r2 = am * am + beta * beta;
                let rho = if r2 == 0.0 {
                    1.0
                } else {
                    let e = (-beta).exp();
                    let om = -(-beta).exp_m1();
                    let s = (am / 2.0).sin();
                    (om * om + 4.0 * e * s * s) / r2
                };
                let near = -0.5 * rho.ln() + (b / PI).ln();
                let h = (near - log_kernel(a1 + a2, beta)) / (2.0 * PI);
                Ok(2.0 / (sigma[0] * sigma[1]) * h)
            }
            KernelKind::Disc { center, radius, s } => {
                let xr: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let yr: Vec<f64> = y.iter().zip(center).map(|(a, c)| a - c).collect();
                let r2 = radius * radius;
                let xx: f64 = xr.iter().map(|v| v * v).sum();
                let yy: f64 = yr.iter().map(|v| v * v).sum();
                let xy: f64 = xr.iter().zip(&yr).map(|(a, b)| a * b).sum();
                let image = xx * yy / r2 - 2.0 * xy + r2;
                Ok(image.ln() / (2.0 * PI * s) - s.sqrt().ln() / (PI * s))
            }
        }
    }

    /// Distance from `x` to the boundary along the unit direction `e`.
    fn ray_exit(&self, x: &[f64], e: &[f64]) -> f64 {
        match &self.domain {
            Domain::Rectangle { lower, upper } => {
                let mut t = f64::INFINITY;
                for i in 0..x.len() {
                    if e[i] > 0.0 {
                        t = t.min((upper[i] - x[i]) / e[i]);
                    } else if e[i] < 0.0 {
                        t = t.min((lower[i] - x[i]) / e[i]);
                    }
                }
                t
            }
            Domain::Ball { center, radius } => {
                let p: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let pe: f64 = p.iter().zip(e).map(|(a, b)| a * b).sum();
                let pp: f64 = p.iter().map(|v| v * v).sum();
                -pe + (pe * pe - pp + radius * radius).max(0.0).sqrt()
            }
        }
    }

    /// Outer quadrature rule with `m` nodes per direction.
    fn outer_rule(&self, m: usize) -> Vec<([f64; 2], f64)> {
        let (gx, gw) = gauss_legendre(m);
        match &self.domain {
            Domain::Rectangle { lower, upper } => {
                let (l0, l1) = (upper[0] - lower[0], upper[1] - lower[1]);
                let mut out = Vec::with_capacity(m * m);
                for i in 0..m {
                    for j in 0..m {
                        out.push(([lower[0] + l0 * gx[i], lower[1] + l1 * gx[j]], l0 * l1 * gw[i] * gw[j]));
                    }
                }
                out
            }
            Domain::Ball { center, radius } => {
                let na = 2 * m;
                let mut out = Vec::with_capacity(m * na);
                for i in 0..m {
                    let r = radius * gx[i];
                    for j in 0..na {
                        let phi = 2.0 * PI * (j as f64 + 0.5) / na as f64;
                        let w = radius * gw[i] * r * 2.0 * PI / na as f64;
                        out.push(([center[0] + r * phi.cos(), center[1] + r * phi.sin()], w));
                    }
                }
                out
            }
        }
    }

    /// `int f(y) Gamma(x - y) dy` in polar coordinates about `x`, with
    /// `r = R(phi) s^3` to smooth the logarithm.
    fn singular_potential(&self, f: &TestFn<'_>, x: &[f64; 2], m: usize) -> f64 {
        let (gs, gw) = gauss_legendre(m);
        let na = 2 * m;
        let mut total = 0.0;
        for j in 0..na {
            let phi = 2.0 * PI * j as f64 / na as f64;
            let e = [phi.cos(), phi.sin()];
            let big_r = self.ray_exit(x, &e);
            if !(big_r > 0.0) {
                continue;
            }
            let stretch = ((e[0] * self.inv_sigma[0]).powi(2) + (e[1] * self.inv_sigma[1]).powi(2)).sqrt().ln();
            let mut radial = 0.0;
            for (s, w) in gs.iter().zip(&gw) {
                let r = big_r * s * s * s;
                let y = [x[0] + r * e[0], x[1] + r * e[1]];
                let fy = f(&y);
                if fy != 0.0 {
                    // r dr = 3 R^2 s^5 ds
                    radial += w * fy * (r.ln() + stretch) * 3.0 * big_r * big_r * s.powi(5);
                }
            }
            total += radial;
        }
        self.c * total * 2.0 * PI / na as f64
    }
}

fn split_quadrature(k: &SplitKernel, f: &TestFn<'_>, m: usize) -> Result<f64> {
    let rule = k.outer_rule(m);
    let fw: Vec<f64> = rule.iter().map(|(p, w)| f(p) * w).collect();
    let scale = fw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let cut = scale * scale * 1e-20;
    let rows: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            if fw[i] == 0.0 {
                return Ok(0.0);
            }
            let mut s = 0.0;
            for j in 0..rule.len() {
                let p = fw[i] * fw[j];
                if p.abs() > cut {
                    s += p * k.smooth(&rule[i].0, &rule[j].0)?;
                }
            }
            s += fw[i] * k.singular_potential(f, &rule[i].0, m);
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let closed: f64 = rows.iter().sum();
    match &k.kind {
        KernelKind::Rectangle { lower, sigma, len } => {
            Ok(closed + mode_sum_quadrature(lower, sigma, len, &rule, &fw, m, closed.abs())?)
        }
        KernelKind::Disc { .. } => Ok(closed),
    }
}

/// `sum_ij fw_i fw_j R(x_i, x_j)` for the rectangle mode sum `R` on the
/// tensor rule (node `i1 * m + i2`). Each mode factorises, so the cost is
/// `O(K m^2)` rather than `O(K m^4)`.
fn mode_sum_quadrature(lower: &[f64], sigma: &[f64], len: &[f64], rule: &[([f64; 2], f64)], fw: &[f64], m: usize, scale: f64) -> Result<f64> {
    let (a, b) = (len[0], len[1]);
    let s: Vec<f64> = (0..m).map(|i| (rule[i * m].0[0] - lower[0]) / sigma[0]).collect();
    let t: Vec<f64> = (0..m).map(|j| (rule[j].0[1] - lower[1]) / sigma[1]).collect();
    let c = s.iter().map(|&v| (2.0 * v).min(2.0 * (a - v))).fold(f64::INFINITY, f64::min);
    let fabs: f64 = fw.iter().map(|v| v.abs()).sum();
    let target = 1e-14 * scale.max(f64::MIN_POSITIVE);
    // e^(-w x) for w = k pi / b, advanced by one base factor per mode
    let pairs = m * m;
    let mut base = vec![[0.0f64; 4]; pairs];
    for i1 in 0..m {
        for j1 in 0..m {
            let delta = (s[i1] - s[j1]).abs();
            let sum = s[i1] + s[j1];
            let e = [delta, sum, 2.0 * a - sum, 2.0 * a - delta].map(|x| (-PI / b * x).exp());
            base[i1 * m + j1] = e;
        }
    }
    let mut cur = base.clone();
    let mut total = 0.0;
    let mut proj = vec![0.0; m];
    for k in 1..=1_000_000usize {
        let w = k as f64 * PI / b;
        let q = (-2.0 * w * a).exp();
        let sines: Vec<f64> = t.iter().map(|v| (w * v).sin()).collect();
        for i1 in 0..m {
            proj[i1] = (0..m).map(|i2| fw[i1 * m + i2] * sines[i2]).sum();
        }
        let mut term = 0.0;
        for i1 in 0..m {
            for j1 in 0..m {
                let e = &mut cur[i1 * m + j1];
                let num = e[0] * q - e[1] - e[2] + e[3];
                term += proj[i1] * proj[j1] * num;
                for (c, b0) in e.iter_mut().zip(&base[i1 * m + j1]) {
                    *c = if *c < 1e-300 { 0.0 } else { *c * b0 };
                }
            }
        }
        total += 2.0 / b * term / (2.0 * w * (-(-2.0 * w * a).exp_m1()));
        let next = (k + 1) as f64 * PI / b;
        let bound = 2.0 / b * fabs * fabs * 4.0 * (-next * c).exp() / (2.0 * next * (-(-2.0 * next * a).exp_m1()));
        let tail = 2.0 / (sigma[0] * sigma[1]) * bound / -(-PI * c / b).exp_m1();
        if tail <= target {
            return Ok(2.0 / (sigma[0] * sigma[1]) * total);
        }
    }
    Err(Error::Accuracy("rectangle mode sum did not converge".into()))
}

/// `prod_i psi((x_i - a_i) / (b_i - a_i))` with
/// `psi(s) = exp(1 - 1 / (4 s (1 - s)))` on `(0, 1)`, a smooth bump equal to
/// 1 at the centre.
pub fn product_bump(domain: &Domain) -> impl Fn(&[f64]) -> f64 + Sync + Clone {
    let (lo, hi) = domain.bounds();
    move |x: &[f64]| {
        let mut v = 1.0;
        for i in 0..x.len() {
            let s = (x[i] - lo[i]) / (hi[i] - lo[i]);
            if s <= 0.0 || s >= 1.0 {
                return 0.0;
            }
            v *= (1.0 - 1.0 / (4.0 * s * (1.0 - s))).exp();
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn square(s: f64) -> ContinuumGreenSpec {
        ContinuumGreenSpec::isotropic(Domain::unit_cube(2), s).unwrap()
    }

    /// Plain double sine series of `2 / (sigma1 sigma2) G_{-Laplacian}` on the unit square.
    fn double_series(x: &[f64], y: &[f64], s: f64, kmax: usize) -> f64 {
        let mut g = 0.0;
        for k in 1..=kmax {
            for l in 1..=kmax {
                let lam = 0.5 * s * PI * PI * ((k * k + l * l) as f64);
                let phi = |p: &[f64]| 2.0 * (k as f64 * PI * p[0]).sin() * (l as f64 * PI * p[1]).sin();
                g += phi(x) * phi(y) / lam;
            }
        }
        g
    }

    #[test]
    fn heat_kernel_values() {
        let id = [1.0, 0.0, 0.0, 1.0];
        let t = 0.7;
        assert!((heat_kernel(&id, t, &[0.3, 0.1], &[0.3, 0.1]).unwrap() - 1.0 / (2.0 * PI * t)).abs() < 1e-15);
        let s2 = [2.0, 0.3, 0.3, 1.0];
        let a = heat_kernel(&s2, 0.5, &[0.1, 0.2], &[-0.4, 0.9]).unwrap();
        let b = heat_kernel(&s2, 0.5, &[-0.4, 0.9], &[0.1, 0.2]).unwrap();
        assert_eq!(a, b);
        assert!(heat_kernel(&s2, 0.0, &[0.0, 0.0], &[0.0, 0.0]).is_err());
        // tensor-grid quadrature of the total mass
        let (x, w) = gauss_legendre(80);
        let half = 10.0;
        let mut mass = 0.0;
        for i in 0..80 {
            for j in 0..80 {
                let y = [-half + 2.0 * half * x[i], -half + 2.0 * half * x[j]];
                mass += 4.0 * half * half * w[i] * w[j] * heat_kernel(&s2, 0.5, &[0.3, -0.2], &y).unwrap();
            }
        }
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(13)).sum();
        assert!((s - 1.0 / 14.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rectangle_matches_double_sine_series() {
        let spec = square(2.0);
        for (x, y) in [([0.25, 0.5], [0.75, 0.5]), ([0.3, 0.2], [0.6, 0.7]), ([0.1, 0.9], [0.8, 0.15])] {
            let g = green_rectangle(&spec, &x, &y, 1e-12).unwrap();
            let oracle = double_series(&x, &y, 2.0, 1500);
            assert!((g - oracle).abs() < 1e-4, "{g} vs {oracle}");
        }
    }

    #[test]
    fn lclt_reference_value_is_stable_under_truncation() {
        let spec = square(2.0);
        let (x, y) = ([0.25, 0.5], [0.75, 0.5]);
        let a = green_rectangle_truncated(&spec, &x, &y, 20).unwrap();
        let b = green_rectangle_truncated(&spec, &x, &y, 40).unwrap();
        assert!((a - b).abs() < 1e-6);
        assert!((green_rectangle(&spec, &x, &y, 1e-10).unwrap() - b).abs() < 1e-9);
    }

    #[test]
    fn rectangle_boundary_and_errors() {
        let spec = square(2.0);
        let centre = green_rectangle(&spec, &[0.5, 0.5], &[0.5, 0.25], 1e-12).unwrap();
        let edge = green_rectangle(&spec, &[1e-3, 0.5], &[0.5, 0.25], 1e-12).unwrap();
        assert!(edge >= 0.0 && edge <= 1e-2 * centre);
        assert!(matches!(green_rectangle(&spec, &[0.5, 0.5], &[0.5, 0.5], 1e-9), Err(Error::Singularity(_))));
        let skew = ContinuumGreenSpec::new(Domain::unit_cube(2), vec![2.0, 0.5, 0.5, 2.0]).unwrap();
        assert!(matches!(green_rectangle(&skew, &[0.2, 0.2], &[0.5, 0.5], 1e-9), Err(Error::Unsupported(_))));
    }

    #[test]
    fn anisotropic_rectangle_matches_double_series() {
        // sigma2 = diag(1, 4) on [0,2] x [0,1]
        let spec = ContinuumGreenSpec::new(Domain::rectangle(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        let (x, y) = ([0.5, 0.3], [1.2, 0.6]);
        let mut oracle = 0.0;
        for k in 1..=800 {
            for l in 1..=800 {
                let w1 = k as f64 * PI / 2.0;
                let w2 = l as f64 * PI;
                let lam = 0.5 * (w1 * w1 + 4.0 * w2 * w2);
                let phi = |p: &[f64]| (2.0f64).sqrt() * (w1 * p[0]).sin() * (2.0f64 / 2.0).sqrt() * (w2 * p[1]).sin();
                oracle += phi(&x) * phi(&y) / lam;
            }
        }
        let g = green_rectangle(&spec, &x, &y, 1e-12).unwrap();
        assert!((g - oracle).abs() < 1e-4, "{g} vs {oracle}");
    }

    #[test]
    fn three_dimensional_box_scaling() {
        let spec = ContinuumGreenSpec::isotropic(Domain::unit_cube(3), 2.0).unwrap();
        let big = ContinuumGreenSpec::isotropic(Domain::unit_cube(3).scaled(2.0), 2.0).unwrap();
        let (x, y) = ([0.3, 0.5, 0.4], [0.6, 0.45, 0.5]);
        let g = green_rectangle(&spec, &x, &y, 1e-13).unwrap();
        let gc = green_rectangle(&big, &[0.6, 1.0, 0.8], &[1.2, 0.9, 1.0], 1e-13).unwrap();
        assert!((gc - g / 2.0).abs() <= 1e-8 * g.abs().max(1.0), "{gc} vs {}", g / 2.0);
        // close to the free-space kernel 2/(s) * 1/(4 pi r) for nearby points
        let r = dist2(&x, &y).sqrt();
        assert!(g < 1.0 / (4.0 * PI * r));
    }

    #[test]
    fn ball_values() {
        let s = 1.5;
        let spec = ContinuumGreenSpec::isotropic(Domain::ball(vec![0.0, 0.0], 2.0).unwrap(), s).unwrap();
        let y = [0.6, -0.3];
        let g = green_ball(&spec, &[0.0, 0.0], &y).unwrap();
        let r = dist2(&y, &[0.0, 0.0]).sqrt();
        assert!((g - (-(1.0 / (PI * s)) * (r / 2.0).ln())).abs() < 1e-14);
        let ball3 = ContinuumGreenSpec::isotropic(Domain::unit_ball(3), 2.0).unwrap();
        let g3 = green_ball(&ball3, &[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0]).unwrap();
        assert!((g3 - (1.0 / (4.0 * PI)) * (2.0 - 1.0)).abs() < 1e-14);
        let aniso = ContinuumGreenSpec::new(Domain::unit_ball(2), vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        assert!(matches!(green_ball(&aniso, &[0.1, 0.0], &[0.0, 0.2]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn exit_moments_and_constants() {
        let spec = ContinuumGreenSpec::isotropic(Domain::unit_ball(2), 2.0).unwrap();
        assert_eq!(exit_time_moment(&spec, &[0.0, 0.0]).unwrap(), 0.25);
        assert_eq!(exit_time_moment(&spec, &[1.0, 0.0]).unwrap(), 0.0);
        assert!(exit_time_moment(&square(2.0), &[0.5, 0.5]).is_err());
        let b = bar_g(&[2.0, 0.0, 0.0, 2.0], 4.0).unwrap();
        assert!((b - 1.0 / (8.0 * PI)).abs() < 1e-16);
        let b4 = bar_g(&[4.0, 0.0, 0.0, 4.0], 4.0).unwrap();
        assert!((b4 - b / 2.0).abs() < 1e-16);
        let e = std::f64::consts::E;
        assert!((centering_m_n(b, e, 2).unwrap() - b.sqrt() * 2.0).abs() < 1e-15);
        assert!((homogeneous_ondiag_coefficient() - 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert!((ondiag_coefficient_from_kernel(&[2.0, 0.0, 0.0, 2.0], 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn killed_heat_kernel_integrates_to_green() {
        let spec = square(2.0);
        let (x, y) = ([0.3, 0.4], [0.6, 0.55]);
        let short = killed_heat_kernel_rectangle(&spec, 1e-3, &[0.5, 0.5], &[0.5, 0.5], 1e-12).unwrap();
        let free = heat_kernel(&spec.sigma2, 1e-3, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((short / free - 1.0).abs() < 1e-8);
        // int_0^inf k_t dt by Gauss-Legendre after t = s / (1 - s)
        let (s, w) = gauss_legendre(200);
        let mut integral = 0.0;
        for (si, wi) in s.iter().zip(&w) {
            let t = si / (1.0 - si);
            integral += wi * killed_heat_kernel_rectangle(&spec, t, &x, &y, 1e-14).unwrap() / (1.0 - si).powi(2);
        }
        let g = green_rectangle(&spec, &x, &y, 1e-12).unwrap();
        assert!((integral - g).abs() < 1e-6 * g, "{integral} vs {g}");
    }

    #[test]
    fn sigma_sq_f_against_spectral_sum() {
        let spec = square(2.0);
        let bump = product_bump(&spec.domain);
        let got = sigma_sq_f(&spec, &bump, 1.0, 1e-4).unwrap();
        // theta sum_k (prod b_k)^2 / lambda_k with b_k = sqrt(2) int psi(s) sin(k pi s) ds
        let (x, w) = gauss_legendre(400);
        let coeff: Vec<f64> = (1..=60)
            .map(|k| {
                x.iter()
                    .zip(&w)
                    .map(|(s, wt)| wt * bump(&[*s, 0.5]) * 2f64.sqrt() * (k as f64 * PI * s).sin())
                    .sum::<f64>()
            })
            .collect();
        let mut oracle = 0.0;
        for (k, bk) in coeff.iter().enumerate() {
            for (l, bl) in coeff.iter().enumerate() {
                let lam = 0.5 * 2.0 * PI * PI * (((k + 1) * (k + 1) + (l + 1) * (l + 1)) as f64);
                oracle += (bk * bl).powi(2) / lam;
            }
        }
        assert!((got.value / oracle - 1.0).abs() < 1e-4, "{got:?} vs {oracle}");
        let doubled = sigma_sq_f(&spec, &bump, 0.5, 1e-4).unwrap();
        assert!((got.value - 2.0 * doubled.value).abs() < 1e-12 * got.value);
        assert_eq!(sigma_sq_f(&spec, &|_: &[f64]| 0.0, 1.0, 1e-4).unwrap().value, 0.0);
    }

    #[test]
    fn sigma_sq_f_on_disc_with_constant_f() {
        // int int g = int E_x[tau] dx = theta pi R^4 / (4 s) for f = 1
        let (r, s) = (1.3, 1.7);
        let spec = ContinuumGreenSpec::isotropic(Domain::ball(vec![0.2, -0.1], r).unwrap(), s).unwrap();
        // the kernel is rough at the circle, so levels converge algebraically
        let got = sigma_sq_f(&spec, &|_: &[f64]| 1.0, 1.0, 1e-3).unwrap();
        let oracle = PI * r.powi(4) / (4.0 * s);
        assert!((got.value / oracle - 1.0).abs() < 1e-3, "{got:?} vs {oracle}");
    }

    #[test]
    fn unsupported_sigma_sq_f_domains() {
        let cube = ContinuumGreenSpec::isotropic(Domain::unit_cube(3), 2.0).unwrap();
        assert!(matches!(sigma_sq_f(&cube, &|_: &[f64]| 1.0, 1.0, 1e-3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mc_green_agrees_with_series() {
        let spec = square(2.0);
        let x = [0.3, 0.5];
        let cell = Cell::centered(&[0.6, 0.45], 0.1);
        let opts = McOptions { replicas: 40_000, step: 4e-4, max_halvings: 2, seed: 5 };
        let mc = mc_green(&spec, &x, &cell, opts).unwrap();
        let (gx, gw) = gauss_legendre(6);
        let mut avg = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                let y = [cell.lo[0] + 0.1 * gx[i], cell.lo[1] + 0.1 * gx[j]];
                avg += gw[i] * gw[j] * green_rectangle(&spec, &x, &y, 1e-12).unwrap();
            }
        }
        assert!(mc.estimate.z_distance(avg) <= 3.0, "{mc:?} vs {avg}");
        let outside = Cell::centered(&[1.5, 0.5], 0.1);
        assert_eq!(mc_green(&spec, &x, &outside, opts).unwrap().estimate.mean, 0.0);
    }

    #[test]
    fn mc_exit_time_on_disc() {
        let spec = ContinuumGreenSpec::isotropic(Domain::unit_ball(2), 2.0).unwrap();
        let x = [0.3, 0.2];
        let mc = mc_exit_time(&spec, &x, McOptions { replicas: 20_000, step: 1e-3, max_halvings: 2, seed: 1 }).unwrap();
        assert!(mc.estimate.z_distance(exit_time_moment(&spec, &x).unwrap()) <= 3.0, "{mc:?}");
    }

    #[test]
    fn mc_green_se_scales_with_replicas() {
        let spec = square(2.0);
        let cell = Cell::centered(&[0.5, 0.5], 0.2);
        let run = |replicas| {
            mc_green(&spec, &[0.4, 0.5], &cell, McOptions { replicas, step: 2e-3, max_halvings: 0, seed: 2 })
                .unwrap()
                .estimate
                .se
        };
        let ratio = run(8_000) / run(16_000) / 2f64.sqrt();
        assert!((ratio - 1.0).abs() <= 0.2, "{ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn symmetric_nonnegative_and_scale_covariant(
            x0 in 0.02f64..0.98, x1 in 0.02f64..0.98, y0 in 0.02f64..0.98, y1 in 0.02f64..0.98,
            c in 0.2f64..5.0, s in 0.5f64..3.0,
        ) {
            prop_assume!((x0 - y0).abs() + (x1 - y1).abs() > 1e-3);
            let spec = square(s);
            let g = green_rectangle(&spec, &[x0, x1], &[y0, y1], 1e-13).unwrap();
            let gt = green_rectangle(&spec, &[y0, y1], &[x0, x1], 1e-13).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!((g - gt).abs() <= 1e-10 * g.max(1.0));
            let big = ContinuumGreenSpec::isotropic(Domain::unit_cube(2).scaled(c), s).unwrap();
            let gc = green_rectangle(&big, &[c * x0, c * x1], &[c * y0, c * y1], 1e-13).unwrap();
            prop_assert!((gc - g).abs() <= 1e-8 * g.max(1.0));
            let k = green_rectangle_truncated(&spec, &[x0, x1], &[y0, y1], 200).unwrap();
            let k2 = green_rectangle_truncated(&spec, &[x0, x1], &[y0, y1], 400).unwrap();
            prop_assert!((k - k2).abs() <= 1e-6);
        }

        #[test]
        fn ball_is_symmetric_and_rotation_invariant(
            r1 in 0.0f64..0.95, r2 in 0.0f64..0.95, a in 0.0f64..TAU, b in 0.0f64..TAU, rot in 0.0f64..TAU,
        ) {
            let spec = ContinuumGreenSpec::isotropic(Domain::unit_ball(2), 2.0).unwrap();
            let p = |r: f64, t: f64| [r * t.cos(), r * t.sin()];
            let (x, y) = (p(r1, a), p(r2, b));
            prop_assume!(dist2(&x, &y) > 1e-6);
            let g = green_ball(&spec, &x, &y).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!((g - green_ball(&spec, &y, &x).unwrap()).abs() <= 1e-10 * g.max(1.0));
            let gr = green_ball(&spec, &p(r1, a + rot), &p(r2, b + rot)).unwrap();
            prop_assert!((g - gr).abs() <= 1e-8 * g.max(1.0));
        }
    }
}
