//! Dirichlet problems on a cluster region: the restricted negative generator,
//! Green's functions, mean exit times, DGFF sampling and field functionals.

use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cluster::ClusterGraph;
use crate::domain::Region;
use crate::error::{param, Error, Result};
use crate::io::SiteBlock;
use crate::rng::substream;
use crate::sparse::{solver, CsrMatrix, SolveOptions, SparseCholesky, SpdFactor, SpdSolver};

/// Interior sizes above this need column solves instead of a full inverse.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// `A = -L` restricted to `region ∩ cluster` with zero exterior values.
pub struct DirichletSystem<'a> {
    cg: &'a ClusterGraph,
    region: Region,
    interior: Vec<usize>,
    local: Vec<u32>,
    matrix: CsrMatrix,
    solver: &'static dyn SpdSolver,
    factors: Mutex<Vec<(f64, Arc<dyn SpdFactor>)>>,
    cholesky: OnceLock<std::result::Result<Arc<SparseCholesky>, String>>,
}

impl<'a> DirichletSystem<'a> {
    pub fn assemble(cg: &'a ClusterGraph, region: Region) -> Result<Self> {
        let interior = region.interior(cg)?;
        if interior.is_empty() {
            return Err(Error::Domain(format!("region {region} contains no cluster site")));
        }
        let mut local = vec![u32::MAX; cg.len()];
        for (k, &id) in interior.iter().enumerate() {
            local[id] = k as u32;
        }
        let mut triplets = Vec::with_capacity(interior.len() * (2 * cg.dim() + 1));
        let mut leaks = false;
        for (k, &id) in interior.iter().enumerate() {
            triplets.push((k, k, cg.mu(id)));
            for (m, w) in cg.neighbors(id) {
                match local[m] {
                    u32::MAX => leaks = true,
                    j => triplets.push((k, j as usize, -w)),
                }
            }
        }
        if !leaks {
            return Err(Error::Domain(format!(
                "region {region} covers the whole cluster, so the Dirichlet condition is vacuous"
            )));
        }
        let matrix = CsrMatrix::from_triplets(interior.len(), triplets)?;
        Ok(Self {
            cg,
            region,
            interior,
            local,
            matrix,
            solver: solver("auto")?,
            factors: Mutex::new(Vec::new()),
            cholesky: OnceLock::new(),
        })
    }

    /// Selects the linear solver by registry name.
    pub fn with_solver(mut self, name: &str) -> Result<Self> {
        self.solver = solver(name)?;
        self.factors = Mutex::new(Vec::new());
        Ok(self)
    }

    pub fn cluster(&self) -> &'a ClusterGraph {
        self.cg
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Cluster ids of the interior, in order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn site(&self, k: usize) -> &[i64] {
        self.cg.site(self.interior[k])
    }

    pub fn sites(&self) -> Vec<Vec<i64>> {
        (0..self.len()).map(|k| self.site(k).to_vec()).collect()
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        let id = self.cg.id_of(site)?;
        (self.local[id] != u32::MAX).then_some(self.local[id] as usize)
    }

    pub fn require(&self, site: &[i64]) -> Result<usize> {
        self.index_of(site)
            .ok_or_else(|| Error::Domain(format!("site {site:?} is not interior to {}", self.region)))
    }

    /// Interior index of a cluster id.
    pub fn local_of(&self, id: usize) -> Option<usize> {
        (self.local[id] != u32::MAX).then_some(self.local[id] as usize)
    }

    /// Total conductance from interior row `k` to exterior neighbours.
    pub fn exterior_flux(&self, k: usize) -> f64 {
        let id = self.interior[k];
        self.cg.neighbors(id).filter(|&(m, _)| self.local[m] == u32::MAX).map(|(_, w)| w).sum()
    }

    fn factor(&self, tol: f64) -> Result<Arc<dyn SpdFactor>> {
        let mut cache = self.factors.lock().expect("factor cache poisoned");
        if let Some((_, f)) = cache.iter().find(|(t, _)| *t == tol) {
            return Ok(f.clone());
        }
        let f: Arc<dyn SpdFactor> = Arc::from(self.solver.prepare(&self.matrix, SolveOptions::with_tol(tol))?);
        cache.push((tol, f.clone()));
        Ok(f)
    }

    /// Sparse Cholesky factor with nested-dissection ordering, built once.
    pub fn cholesky(&self) -> Result<Arc<SparseCholesky>> {
        self.cholesky
            .get_or_init(|| {
                SparseCholesky::factor_with_coordinates(&self.matrix, &self.sites())
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::Numerical)
    }

    /// Solves `A x = b` to relative residual `tol`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<crate::sparse::Solution> {
        if b.len() != self.len() {
            return param("right-hand side length does not match the interior");
        }
        self.factor(tol)?.solve(b)
    }

    /// `g(., y)` from `A g = e_y`.
    pub fn green_column(&self, y: &[i64], tol: f64) -> Result<GreenColumn> {
        let k = self.require(y)?;
        let mut e = vec![0.0; self.len()];
        e[k] = 1.0;
        let s = self.solve(&e, tol)?;
        Ok(GreenColumn {
            source: y.to_vec(),
            source_index: k,
            values: s.x,
            residual: s.residual,
            iterations: s.iterations,
        })
    }

    /// Several columns solved concurrently; output follows input order.
    pub fn green_columns(&self, sources: &[Vec<i64>], tol: f64) -> Result<Vec<GreenColumn>> {
        sources.par_iter().map(|y| self.green_column(y, tol)).collect()
    }

    /// Full inverse through the sparse Cholesky factor.
    pub fn green_matrix(&self, cap: usize) -> Result<GreenMatrix> {
        let n = self.len();
        if n > cap {
            return Err(Error::Size {
                size: n,
                cap,
            });
        }
        let chol = self.cholesky()?;
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                chol.solve(&e).map(|s| s.x)
            })
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; n * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[i * n + j] = *v;
            }
        }
        Ok(GreenMatrix { n, values })
    }

    /// `u = A^-1 1`, the expected exit time from each interior site.
    pub fn mean_exit_time(&self, tol: f64) -> Result<Vec<f64>> {
        Ok(self.solve(&vec![1.0; self.len()], tol)?.x)
    }

    /// `k` independent DGFF samples over the interior; sample `i` draws its
    /// normals from substream `(seed, i)`.
    pub fn sample_dgff(&self, k: usize, seed: u64) -> Result<FieldEnsemble> {
        let samples = self.sample_map(k, seed, |_, s| s.to_vec())?;
        Ok(FieldEnsemble { seed, samples })
    }

    /// Applies `f(i, sample_i)` to the same samples as [`Self::sample_dgff`]
    /// without keeping them.
    pub fn sample_map<T, F>(&self, k: usize, seed: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &[f64]) -> T + Sync,
    {
        let chol = self.cholesky()?;
        let n = self.len();
        Ok((0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                f(i, &chol.sample_from_normals(&z))
            })
            .collect())
    }

    /// `v_z = f(z / n)` (or its cell average) over interior sites.
    pub fn test_vector(&self, f: &TestFn<'_>, n: f64, disc: Discretization) -> Vec<f64> {
        let d = self.cg.dim();
        (0..self.len())
            .map(|k| {
                let x: Vec<f64> = self.site(k).iter().map(|&c| c as f64 / n).collect();
                match disc {
                    Discretization::Point => f(&x),
                    Discretization::CellAverage => cell_average(f, &x, 1.0 / n, d),
                }
            })
            .collect()
    }

    /// `Var Phi_n(f) = n^(d-2-2d) v' A^-1 v`.
    pub fn variance_phi_exact(&self, f: &TestFn<'_>, n: f64, disc: Discretization, tol: f64) -> Result<f64> {
        let v = self.test_vector(f, n, disc);
        if v.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let w = self.solve(&v, tol)?.x;
        let d = self.cg.dim() as f64;
        Ok(n.powf(d - 2.0 - 2.0 * d) * v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Values as a block with one row per column vector.
    pub fn block(&self, rows: Vec<Vec<f64>>) -> SiteBlock {
        SiteBlock {
            dim: self.cg.dim(),
            sites: self.sites(),
            rows,
        }
    }
}

pub type TestFn<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Discretization {
    #[default]
    Point,
    CellAverage,
}

impl std::str::FromStr for Discretization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "cell" | "cell-average" => Ok(Self::CellAverage),
            other => param(format!("unknown discretisation '{other}', expected point or cell")),
        }
    }
}

fn cell_average(f: &TestFn<'_>, x: &[f64], h: f64, d: usize) -> f64 {
    // tensor midpoint rule with 4 points per axis
    const M: usize = 4;
    let total = M.pow(d as u32);
    let mut p = vec![0.0; d];
    let mut s = 0.0;
    for t in 0..total {
        let mut r = t;
        for i in 0..d {
            let j = r % M;
            r /= M;
            p[i] = x[i] + h * ((j as f64 + 0.5) / M as f64 - 0.5);
        }
        s += f(&p);
    }
    s / total as f64
}

/// `n^(d/2-1-d) sum_z f(z/n) phi_z` over the interior of `sys`.
pub fn functional_phi(sys: &DirichletSystem, sample: &[f64], f: &TestFn<'_>, n: f64, disc: Discretization) -> f64 {
    let v = sys.test_vector(f, n, disc);
    let d = sys.cluster().dim() as f64;
    n.powf(d / 2.0 - 1.0 - d) * v.iter().zip(sample).map(|(a, b)| a * b).sum::<f64>()
}

/// `sum_e w(e) (grad f)(e) (grad g)(e)` over cluster edges; `f`, `g` indexed by cluster id.
pub fn dirichlet_energy(cg: &ClusterGraph, f: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in 0..cg.len() {
        for (y, w) in cg.neighbors(x) {
            if x < y {
                s += w * (f[y] - f[x]) * (g[y] - g[x]);
            }
        }
    }
    s
}

/// `(L f)(x) = sum_y w(x, y) (f(y) - f(x))`.
pub fn generator_apply(cg: &ClusterGraph, f: &[f64]) -> Vec<f64> {
    (0..cg.len())
        .map(|x| cg.neighbors(x).map(|(y, w)| w * (f[y] - f[x])).sum())
        .collect()
}

/// One column `g(., y)` over the interior.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenColumn {
    pub source: Vec<i64>,
    pub source_index: usize,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl GreenColumn {
    /// Value at a site, zero off the interior.
    pub fn at(&self, sys: &DirichletSystem, site: &[i64]) -> f64 {
        sys.index_of(site).map_or(0.0, |k| self.values[k])
    }
}

/// Dense `A^-1`, row-major over interior indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GreenMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// `max |G - G'| / max |G|`.
    pub fn relative_asymmetry(&self) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                num = num.max((self.get(i, j) - self.get(j, i)).abs());
                den = den.max(self.get(i, j).abs());
            }
        }
        num / den
    }

    /// `max |G A - I|`.
    pub fn inverse_defect(&self, a: &CsrMatrix) -> f64 {
        let n = self.n;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut worst: f64 = 0.0;
                for j in 0..n {
                    let ga: f64 = a.row(j).map(|(k, v)| self.get(i, k) * v).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((ga - target).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// `k` DGFF samples, each a vector over the interior.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldEnsemble {
    pub seed: u64,
    pub samples: Vec<Vec<f64>>,
}

impl FieldEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.samples.iter().map(|s| s[k]).sum::<f64>() / self.len() as f64
    }

    /// Empirical covariance about the known zero mean.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.samples.iter().map(|s| s[i] * s[j]).sum::<f64>() / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ConductanceField;
    use crate::lattice::{Boundary, BoxGeometry};
    use crate::law::{parse_law, LawSpec};
    use crate::domain::Domain;
    use crate::stats::ks_normal;
    use proptest::prelude::*;
    use rand::Rng;

    fn cluster(law: &str, extents: &[usize], seed: u64) -> ClusterGraph {
        let g = BoxGeometry::centered(extents, Boundary::Free).unwrap();
        let f = ConductanceField::generate_on(&parse_law(law).unwrap(), g, seed).unwrap();
        ClusterGraph::largest_component(&f).unwrap()
    }

    fn window(r: i64) -> Region {
        Region::Window { lo: vec![-r, -r], hi: vec![r, r] }
    }

    #[test]
    fn single_node() {
        let cg = cluster("exp(1)", &[3, 3], 9);
        let x = cg.site(cg.project(&[0.0, 0.0], 1.0)).to_vec();
        let sys = DirichletSystem::assemble(&cg, Region::Window { lo: x.clone(), hi: x.clone() }).unwrap();
        let mu = cg.mu(cg.require(&x).unwrap());
        assert_eq!(sys.len(), 1);
        assert_eq!(sys.matrix().get(0, 0), mu);
        assert!((sys.green_column(&x, 1e-12).unwrap().values[0] - 1.0 / mu).abs() <= 1e-12 / mu);
        assert!((sys.green_matrix(10).unwrap().get(0, 0) - 1.0 / mu).abs() <= 1e-12 / mu);
        assert!((sys.mean_exit_time(1e-12).unwrap()[0] - 1.0 / mu).abs() <= 1e-12 / mu);
        let c = 0.7;
        let n: f64 = 5.0;
        let scale = n.powf(2.0 - 2.0 - 4.0);
        let v = sys.variance_phi_exact(&|_: &[f64]| c, n, Discretization::Point, 1e-12).unwrap();
        assert!((v - c * c * scale / mu).abs() < 1e-12 * v);
    }

    #[test]
    fn five_point_stencil() {
        let cg = cluster("const(1)", &[3, 3], 0);
        let sys = DirichletSystem::assemble(&cg, window(1)).unwrap();
        let a = sys.matrix();
        assert_eq!(a.dim(), 9);
        for i in 0..9 {
            assert_eq!(a.get(i, i), 4.0);
            let off: Vec<f64> = a.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).collect();
            assert!(off.iter().all(|&v| v == -1.0));
            let (x, y) = (i / 3, i % 3);
            let interior_nbrs = [x > 0, x < 2, y > 0, y < 2].iter().filter(|&&b| b).count();
            assert_eq!(off.len(), interior_nbrs);
        }
    }

    #[test]
    fn row_sums_are_exterior_flux() {
        for seed in 0..5 {
            let cg = cluster("exp(1)", &[8, 8], seed);
            let sys = DirichletSystem::assemble(&cg, window(5)).unwrap();
            for k in 0..sys.len() {
                let id = sys.interior()[k];
                let direct: f64 = cg
                    .neighbors(id)
                    .filter(|(m, _)| cg.site(*m).iter().any(|c| c.abs() > 5))
                    .map(|(_, w)| w)
                    .sum();
                assert!((sys.matrix().row_sum(k) - direct).abs() < 1e-12);
                assert!((sys.exterior_flux(k) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_and_vacuous_regions_are_rejected() {
        let cg = cluster("const(1)", &[3, 3], 0);
        let far = Region::Window { lo: vec![10, 10], hi: vec![11, 11] };
        assert!(matches!(DirichletSystem::assemble(&cg, far), Err(Error::Domain(_))));
        assert!(matches!(DirichletSystem::assemble(&cg, window(3)), Err(Error::Domain(_))));
    }

    #[test]
    fn strip_green_by_dense_oracle() {
        let cg = cluster("const(1)", &[3, 3], 0);
        let sys = DirichletSystem::assemble(&cg, Region::Window { lo: vec![-1, 0], hi: vec![1, 0] }).unwrap();
        let g = sys.green_column(&[0, 0], 1e-12).unwrap();
        // [[4,-1,0],[-1,4,-1],[0,-1,4]] inverse, middle column, by cofactors
        let det = 4.0 * 15.0 - 4.0;
        let expected = [1.0 * 4.0 / det, 16.0 / det, 4.0 / det];
        for (v, e) in g.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(g.at(&sys, &[0, 1]), 0.0);
    }

    #[test]
    fn green_matrix_identities() {
        let cg = cluster("exp(1)", &[13, 13], 4);
        let sys = DirichletSystem::assemble(&cg, window(10)).unwrap();
        let g = sys.green_matrix(DEFAULT_DENSE_CAP).unwrap();
        assert!(g.relative_asymmetry() <= 1e-9);
        assert!(g.inverse_defect(sys.matrix()) <= 1e-8);
        assert!(g.values.iter().all(|&v| v >= -1e-12));
        assert!(matches!(sys.green_matrix(10), Err(Error::Size { .. })));
        // dense factorisation certifies positive definiteness
        let dense = crate::sparse::DenseCholesky::factor(sys.matrix()).unwrap();
        assert!(dense.min_pivot() > 0.0);
    }

    #[test]
    fn columns_symmetric_harmonic_and_nonnegative() {
        let cg = cluster("exp(1)", &[12, 12], 7);
        let sys = DirichletSystem::assemble(&cg, window(9)).unwrap().with_solver("cg").unwrap();
        let tol = 1e-10;
        let mut rng = substream(1, 1);
        for _ in 0..6 {
            let a = sys.site(rng.random_range(0..sys.len())).to_vec();
            let b = sys.site(rng.random_range(0..sys.len())).to_vec();
            let ga = sys.green_column(&a, tol).unwrap();
            let gb = sys.green_column(&b, tol).unwrap();
            let scale = ga.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((ga.at(&sys, &b) - gb.at(&sys, &a)).abs() <= 10.0 * tol * scale.max(1.0));
            assert!(ga.values.iter().all(|&v| v >= -tol));
            // harmonic off the source: (L g)(x) = 0 for interior x != a
            let mut full = vec![0.0; cg.len()];
            for (k, &id) in sys.interior().iter().enumerate() {
                full[id] = ga.values[k];
            }
            let lg = generator_apply(&cg, &full);
            for (k, &id) in sys.interior().iter().enumerate() {
                let target = if k == ga.source_index { -1.0 } else { 0.0 };
                assert!((lg[id] - target).abs() <= 10.0 * tol * cg.mu(id).max(1.0) * scale.max(1.0));
            }
        }
    }

    #[test]
    fn domain_monotonicity() {
        let cg = cluster("exp(1)", &[12, 12], 3);
        let small = DirichletSystem::assemble(&cg, window(5)).unwrap();
        let large = DirichletSystem::assemble(&cg, window(9)).unwrap();
        let gs = small.green_matrix(DEFAULT_DENSE_CAP).unwrap();
        let gl = large.green_matrix(DEFAULT_DENSE_CAP).unwrap();
        let us = small.mean_exit_time(1e-12).unwrap();
        let ul = large.mean_exit_time(1e-12).unwrap();
        for i in 0..small.len() {
            let li = large.index_of(small.site(i)).unwrap();
            assert!(us[i] <= ul[li] * (1.0 + 1e-10));
            for j in 0..small.len() {
                let lj = large.index_of(small.site(j)).unwrap();
                assert!(gs.get(i, j) <= gl.get(li, lj) + 1e-10);
            }
        }
    }

    #[test]
    fn exit_time_on_a_disc() {
        let cg = cluster("const(1)", &[32, 32], 0);
        let r = 30.0;
        let sys = DirichletSystem::assemble(&cg, Region::scaled(Domain::unit_ball(2), r).unwrap()).unwrap();
        let u = sys.mean_exit_time(1e-10).unwrap();
        let c = u[sys.require(&[0, 0]).unwrap()];
        let oracle = r * r / (2.0 * 2.0);
        assert!((c / oracle - 1.0).abs() <= 0.10, "{c} vs {oracle}");
    }

    #[test]
    fn energy_special_cases() {
        let cg = cluster("const(1)", &[4, 4], 0);
        let ones = vec![2.5; cg.len()];
        let rnd: Vec<f64> = (0..cg.len()).map(|i| (i as f64).cos()).collect();
        assert_eq!(dirichlet_energy(&cg, &ones, &rnd), 0.0);
        let x = cg.require(&[0, 0]).unwrap();
        let mut delta = vec![0.0; cg.len()];
        delta[x] = 1.0;
        assert_eq!(dirichlet_energy(&cg, &delta, &delta), 4.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn gauss_green(seed in 0u64..1_000_000) {
            let cg = cluster("exp(1)", &[5, 5], seed % 7);
            let mut rng = substream(seed, 3);
            let mut f = vec![0.0; cg.len()];
            let mut g = vec![0.0; cg.len()];
            for _ in 0..10 {
                f[rng.random_range(0..cg.len())] = rng.random::<f64>() - 0.5;
                g[rng.random_range(0..cg.len())] = rng.random::<f64>() - 0.5;
            }
            let e = dirichlet_energy(&cg, &f, &g);
            let lg = generator_apply(&cg, &g);
            let inner: f64 = -f.iter().zip(&lg).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((e - inner).abs() <= 1e-10 * e.abs().max(1e-300) + 1e-15);
        }

        #[test]
        fn functional_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
            let cg = cluster("exp(1)", &[8, 8], seed);
            let sys = DirichletSystem::assemble(&cg, Region::scaled(Domain::unit_cube(2), 8.0).unwrap()).unwrap();
            let phi = &sys.sample_dgff(1, seed).unwrap().samples[0];
            let f = |x: &[f64]| x[0] * x[1];
            let g = |x: &[f64]| (x[0] - x[1]).sin();
            let h = |x: &[f64]| a * f(x) + b * g(x);
            for disc in [Discretization::Point, Discretization::CellAverage] {
                let lhs = functional_phi(&sys, phi, &h, 8.0, disc);
                let rhs = a * functional_phi(&sys, phi, &f, 8.0, disc) + b * functional_phi(&sys, phi, &g, 8.0, disc);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
            prop_assert_eq!(functional_phi(&sys, phi, &|_: &[f64]| 0.0, 8.0, Discretization::Point), 0.0);
        }
    }

    #[test]
    fn sampler_single_node_variance() {
        let cg = cluster("exp(1)", &[3, 3], 2);
        let x = cg.site(cg.project(&[0.0, 0.0], 1.0)).to_vec();
        let sys = DirichletSystem::assemble(&cg, Region::Window { lo: x.clone(), hi: x.clone() }).unwrap();
        let k = 10_000;
        let ens = sys.sample_dgff(k, 17).unwrap();
        let var = ens.covariance(0, 0);
        let truth = 1.0 / cg.mu(cg.require(&x).unwrap());
        // Var of the sample second moment of N(0, s^2) is 2 s^4 / k
        let se = (2.0f64 / k as f64).sqrt() * truth;
        assert!((var - truth).abs() <= 4.0 * se, "{var} vs {truth}");
    }

    #[test]
    fn sampler_means_covariances_and_marginals() {
        let cg = cluster("exp(1)", &[7, 7], 5);
        let sys = DirichletSystem::assemble(&cg, window(5)).unwrap();
        let g = sys.green_matrix(DEFAULT_DENSE_CAP).unwrap();
        let k = 10_000;
        let ens = sys.sample_dgff(k, 23).unwrap();
        let kf = k as f64;
        let mut within = 0;
        let mut total = 0;
        for i in 0..sys.len() {
            assert!(ens.mean(i).abs() <= 4.0 * (g.get(i, i) / kf).sqrt());
            for j in 0..sys.len() {
                let se = ((g.get(i, i) * g.get(j, j) + g.get(i, j).powi(2)) / kf).sqrt();
                total += 1;
                within += ((ens.covariance(i, j) - g.get(i, j)).abs() <= 4.0 * se) as usize;
            }
        }
        assert!(within as f64 >= 0.95 * total as f64);
        for i in (0..sys.len()).step_by(sys.len() / 10).take(10) {
            let z: Vec<f64> = ens.samples.iter().map(|s| s[i] / g.get(i, i).sqrt()).collect();
            assert!(ks_normal(&z).p_value > 0.01);
        }
    }

    #[test]
    fn functional_variance_matches_ensemble() {
        let cg = cluster("exp(1)", &[10, 10], 8);
        let n = 8.0;
        let sys = DirichletSystem::assemble(&cg, Region::scaled(Domain::centered_cube(2), n).unwrap()).unwrap();
        let f = |x: &[f64]| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]);
        let exact = sys.variance_phi_exact(&f, n, Discretization::Point, 1e-12).unwrap();
        let k = 10_000;
        let ens = sys.sample_dgff(k, 99).unwrap();
        let vals: Vec<f64> = ens.samples.iter().map(|s| functional_phi(&sys, s, &f, n, Discretization::Point)).collect();
        let emp = vals.iter().map(|v| v * v).sum::<f64>() / k as f64;
        let se = exact * (2.0 / k as f64).sqrt();
        assert!((emp - exact).abs() <= 4.0 * se, "{emp} vs {exact}");
        assert_eq!(sys.variance_phi_exact(&|_: &[f64]| 0.0, n, Discretization::Point, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn export_block_round_trip() {
        let cg = cluster("const(1)", &[3, 3], 0);
        let sys = DirichletSystem::assemble(&cg, window(1)).unwrap();
        let g = sys.green_column(&[0, 0], 1e-12).unwrap();
        let block = sys.block(vec![g.values.clone()]);
        let mut buf = Vec::new();
        block.write_binary(&mut buf).unwrap();
        assert_eq!(SiteBlock::read_binary(&buf[..]).unwrap(), block);
        let _ = LawSpec::Constant(1.0);
    }
}
