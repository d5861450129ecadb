//! Small statistical helpers: means with standard errors, Kolmogorov-Smirnov
//! and chi-square tests, least-squares lines.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{param, Result};
use crate::rng::{substream, StreamRng};

/// Replicas per reduction chunk; fixed so sums do not depend on scheduling.
const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// `|self - other|` measured in combined standard errors.
    pub fn z_distance(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.se
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        f64::NAN
    };
    MeanSe { mean, se: (var / nf).sqrt(), n }
}

/// Runs `replicas` independent evaluations of `f`, replica `r` on substream
/// `(seed, r)`, each writing `k` outputs. Sums and squares are accumulated
/// in fixed-size chunks and combined in chunk order, so the result does not
/// depend on the number of worker threads.
pub fn replicate<F>(replicas: usize, k: usize, seed: u64, f: F) -> Result<Vec<MeanSe>>
where
    F: Fn(&mut StreamRng, &mut [f64]) -> Result<()> + Sync,
{
    if replicas < 2 {
        return param("Monte Carlo estimates need at least two replicas");
    }
    let chunks = replicas.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; k];
            let mut s2 = vec![0.0; k];
            let mut out = vec![0.0; k];
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicas) {
                let mut rng = substream(seed, r as u64);
                out.iter_mut().for_each(|v| *v = 0.0);
                f(&mut rng, &mut out)?;
                for i in 0..k {
                    s[i] += out[i];
                    s2[i] += out[i] * out[i];
                }
            }
            Ok((s, s2))
        })
        .collect::<Result<_>>()?;
    let n = replicas as f64;
    Ok((0..k)
        .map(|i| {
            let s: f64 = partial.iter().map(|p| p.0[i]).sum();
            let s2: f64 = partial.iter().map(|p| p.1[i]).sum();
            let mean = s / n;
            let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
            MeanSe { mean, se: (var / n).sqrt(), n: replicas }
        })
        .collect())
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> TestResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    TestResult { statistic: d, p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d) }
}

/// Against the standard normal.
pub fn ks_normal(xs: &[f64]) -> TestResult {
    let z = Normal::standard();
    ks_test(xs, |x| z.cdf(x))
}

/// `P[K > lambda]` for the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        s += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Pearson goodness of fit; `ddof` extra fitted parameters are removed from
/// the degrees of freedom.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], ddof: usize) -> TestResult {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let cells = expected.iter().filter(|&&e| e > 0.0).count();
    let dof = cells.saturating_sub(1 + ddof).max(1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    TestResult { statistic: stat, p_value: p }
}

/// Pearson independence test on a contingency table.
pub fn chi_square_independence(table: &[Vec<f64>]) -> TestResult {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            if e > 0.0 {
                stat += (o - e).powi(2) / e;
            }
        }
    }
    let dof = ((rows.iter().filter(|&&r| r > 0.0).count() - 1) * (cols.iter().filter(|&&c| c > 0.0).count() - 1)).max(1) as f64;
    TestResult { statistic: stat, p_value: 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat) }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ks_accepts_normals_and_rejects_shift() {
        let mut rng = substream(3, 0);
        let z: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_normal(&z).p_value > 0.01);
        let shifted: Vec<f64> = z.iter().map(|v| v + 0.2).collect();
        assert!(ks_normal(&shifted).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P[K > 1.36] is about 0.05
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn chi_square_and_fit() {
        let r = chi_square_gof(&[10.0, 10.0, 10.0], &[10.0, 10.0, 10.0], 0);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let (s, c) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((s - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
