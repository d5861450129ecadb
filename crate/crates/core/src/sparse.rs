//! Symmetric positive-definite sparse matrices and the solvers behind the
//! Dirichlet problems: Jacobi-preconditioned conjugate gradients, dense
//! Cholesky, and an up-looking sparse Cholesky with a geometric
//! nested-dissection ordering.

use rayon::prelude::*;

use crate::error::{param, Error, Result};

/// Square matrix in compressed sparse row form holding both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n || j >= n) {
            return param(format!("triplet ({i}, {j}) outside a {n}x{n} matrix"));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self { n, indptr, indices, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i * self.n + j] = v;
            }
        }
        a
    }

    fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.mul(x);
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let nb = norm(b);
        if nb == 0.0 { r } else { r / nb }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target `|b - Ax| / |b|`.
    pub tol: f64,
    /// Iteration cap for iterative solvers; `None` means `20 sqrt(n)`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| ((20.0 * (n as f64).sqrt()).ceil() as usize).max(20))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Relative residual of the returned solution.
    pub residual: f64,
    /// Iterations used; zero for direct solvers.
    pub iterations: usize,
}

/// A prepared solver for one matrix.
pub trait SpdFactor: Send + Sync {
    fn solve(&self, b: &[f64]) -> Result<Solution>;

    /// Independent solves run in parallel; results keep input order.
    fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Solution>> {
        rhs.par_iter().map(|b| self.solve(b)).collect()
    }
}

/// Named solver strategy, selectable at runtime through [`solver`].
pub trait SpdSolver: Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn prepare(&self, a: &CsrMatrix, opts: SolveOptions) -> Result<Box<dyn SpdFactor>>;
}

/// Interiors up to this size may fall back to dense Cholesky.
pub const DENSE_FALLBACK_CAP: usize = 4096;

pub struct ConjugateGradient;
pub struct DenseCholeskySolver;
pub struct SparseCholeskySolver;
pub struct AutoSolver;

static SOLVERS: [&dyn SpdSolver; 4] = [&AutoSolver, &ConjugateGradient, &DenseCholeskySolver, &SparseCholeskySolver];

pub fn solvers() -> &'static [&'static dyn SpdSolver] {
    &SOLVERS
}

pub fn solver(name: &str) -> Result<&'static dyn SpdSolver> {
    let key = match name {
        "cholesky" => "sparse-cholesky",
        other => other,
    };
    SOLVERS.iter().copied().find(|s| s.name() == key).ok_or_else(|| {
        let names: Vec<&str> = SOLVERS.iter().map(|s| s.name()).collect();
        Error::Parameter(format!("unknown solver '{name}', expected one of {}", names.join(", ")))
    })
}

impl SpdSolver for ConjugateGradient {
    fn name(&self) -> &'static str {
        "cg"
    }
    fn description(&self) -> &'static str {
        "conjugate gradients with diagonal preconditioning"
    }
    fn prepare(&self, a: &CsrMatrix, opts: SolveOptions) -> Result<Box<dyn SpdFactor>> {
        Ok(Box::new(CgFactor::new(a.clone(), opts)?))
    }
}

impl SpdSolver for DenseCholeskySolver {
    fn name(&self) -> &'static str {
        "dense"
    }
    fn description(&self) -> &'static str {
        "dense Cholesky factorisation"
    }
    fn prepare(&self, a: &CsrMatrix, _opts: SolveOptions) -> Result<Box<dyn SpdFactor>> {
        Ok(Box::new(DenseCholesky::factor(a)?))
    }
}

impl SpdSolver for SparseCholeskySolver {
    fn name(&self) -> &'static str {
        "sparse-cholesky"
    }
    fn description(&self) -> &'static str {
        "sparse Cholesky with nested-dissection ordering"
    }
    fn prepare(&self, a: &CsrMatrix, _opts: SolveOptions) -> Result<Box<dyn SpdFactor>> {
        Ok(Box::new(SparseCholesky::factor(a, None)?))
    }
}

impl SpdSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn description(&self) -> &'static str {
        "conjugate gradients, falling back to a direct factorisation on non-convergence"
    }
    fn prepare(&self, a: &CsrMatrix, opts: SolveOptions) -> Result<Box<dyn SpdFactor>> {
        Ok(Box::new(AutoFactor {
            cg: CgFactor::new(a.clone(), opts)?,
            direct: std::sync::OnceLock::new(),
        }))
    }
}

pub struct CgFactor {
    a: CsrMatrix,
    inv_diag: Vec<f64>,
    opts: SolveOptions,
}

impl CgFactor {
    pub fn new(a: CsrMatrix, opts: SolveOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return param(format!("solver tolerance must be positive, got {}", opts.tol));
        }
        let mut inv_diag = Vec::with_capacity(a.dim());
        for (i, d) in a.diagonal().into_iter().enumerate() {
            if !(d > 0.0) {
                return Err(Error::Numerical(format!("non-positive diagonal {d} at row {i}")));
            }
            inv_diag.push(1.0 / d);
        }
        Ok(Self { a, inv_diag, opts })
    }
}

impl SpdFactor for CgFactor {
    fn solve(&self, b: &[f64]) -> Result<Solution> {
        let n = self.a.dim();
        let nb = norm(b);
        let mut x = vec![0.0; n];
        if nb == 0.0 {
            return Ok(Solution { x, residual: 0.0, iterations: 0 });
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let cap = self.opts.cap(n);
        let mut res = 1.0;
        for it in 1..=cap {
            self.a.matvec(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Numerical(format!("matrix is not positive definite (p'Ap = {pq})")));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            res = norm(&r) / nb;
            if res <= self.opts.tol {
                // recurrence residuals drift; confirm against the true one
                let true_res = self.a.relative_residual(&x, b);
                if true_res <= self.opts.tol {
                    return Ok(Solution { x, residual: true_res, iterations: it });
                }
                r = b.iter().zip(self.a.mul(&x)).map(|(bi, ai)| bi - ai).collect();
            }
            for i in 0..n {
                z[i] = r[i] * self.inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver { iterations: cap, residual: res })
    }
}

struct AutoFactor {
    cg: CgFactor,
    direct: std::sync::OnceLock<std::result::Result<Box<dyn SpdFactor>, String>>,
}

impl SpdFactor for AutoFactor {
    fn solve(&self, b: &[f64]) -> Result<Solution> {
        match self.cg.solve(b) {
            Err(Error::Solver { .. }) => {
                let direct = self.direct.get_or_init(|| {
                    let f: Result<Box<dyn SpdFactor>> = if self.cg.a.dim() <= DENSE_FALLBACK_CAP {
                        DenseCholesky::factor(&self.cg.a).map(|f| Box::new(f) as Box<dyn SpdFactor>)
                    } else {
                        SparseCholesky::factor(&self.cg.a, None).map(|f| Box::new(f) as Box<dyn SpdFactor>)
                    };
                    f.map_err(|e| e.to_string())
                });
                match direct {
                    Ok(f) => f.solve(b),
                    Err(msg) => Err(Error::Numerical(msg.clone())),
                }
            }
            other => other,
        }
    }
}

/// Dense lower-triangular Cholesky factor, row-major.
pub struct DenseCholesky {
    a: CsrMatrix,
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = a.to_dense();
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Numerical(format!("matrix is not positive definite (pivot {d} at {j})")));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            let (head, tail) = l.split_at_mut((j + 1) * n);
            let row_j = &head[j * n..j * n + j];
            tail.par_chunks_mut(n).for_each(|row_i| {
                let mut s = row_i[j];
                for k in 0..j {
                    s -= row_i[k] * row_j[k];
                }
                row_i[j] = s / d;
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(Self { a: a.clone(), n, l })
    }

    /// Smallest pivot squared; positive iff the matrix is positive definite.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].powi(2)).fold(f64::INFINITY, f64::min)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

impl SpdFactor for DenseCholesky {
    fn solve(&self, b: &[f64]) -> Result<Solution> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let residual = self.a.relative_residual(&x, b);
        Ok(Solution { x, residual, iterations: 0 })
    }
}

/// `P A P' = L L'` with `L` stored by columns, diagonal entry first.
pub struct SparseCholesky {
    a: CsrMatrix,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

impl SparseCholesky {
    /// Factors with the given fill-reducing ordering, or the natural one.
    pub fn factor(a: &CsrMatrix, perm: Option<Vec<usize>>) -> Result<Self> {
        let n = a.dim();
        let perm = perm.unwrap_or_else(|| (0..n).collect());
        if perm.len() != n {
            return param("ordering length does not match the matrix");
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return param("ordering is not a permutation");
            }
            inv[old] = new;
        }
        // upper triangle of C = P A P', by columns
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (old_i, &new_i) in inv.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let new_j = inv[old_j];
                if new_i <= new_j {
                    cols[new_j].push((new_i, v));
                }
            }
        }
        let parent = etree(&cols);

        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            let top = ereach(&cols[k], k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + counts[k];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);
        for k in 0..n {
            let top = ereach(&cols[k], k, &parent, &mut stack, &mut mark);
            for &(i, v) in &cols[k] {
                x[i] = v;
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in lp[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > 0.0) {
                return Err(Error::Numerical(format!("matrix is not positive definite (pivot {d} at {k})")));
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(Self { a: a.clone(), perm, lp, li, lx })
    }

    /// Factors after a nested-dissection ordering built from vertex coordinates.
    pub fn factor_with_coordinates(a: &CsrMatrix, coords: &[Vec<i64>]) -> Result<Self> {
        Self::factor(a, Some(nested_dissection(coords)))
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn factor_nnz(&self) -> usize {
        self.lx.len()
    }

    fn lower_solve(&self, y: &mut [f64]) {
        for j in 0..self.dim() {
            y[j] /= self.lx[self.lp[j]];
            let yj = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        for j in (0..self.dim()).rev() {
            let mut s = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                s -= self.lx[p] * y[self.li[p]];
            }
            y[j] = s / self.lx[self.lp[j]];
        }
    }

    /// Maps standard normal `z` to a centred Gaussian vector with covariance
    /// `A^-1` by solving `L' y = z` and undoing the ordering.
    pub fn sample_from_normals(&self, z: &[f64]) -> Vec<f64> {
        let mut y = z.to_vec();
        self.upper_solve(&mut y);
        let mut out = vec![0.0; self.dim()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

impl SpdFactor for SparseCholesky {
    fn solve(&self, b: &[f64]) -> Result<Solution> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut x = vec![0.0; self.dim()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        let residual = self.a.relative_residual(&x, b);
        Ok(Solution { x, residual, iterations: 0 })
    }
}

fn etree(cols: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = cols.len();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &(i0, _) in &cols[k] {
            let mut i = i0;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in
/// topological order, written to `stack[top..]`.
fn ereach(col: &[(usize, f64)], k: usize, parent: &[usize], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    for &(i0, _) in col {
        if i0 > k {
            continue;
        }
        let mut i = i0;
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
        }
        while let Some(v) = path.pop() {
            top -= 1;
            stack[top] = v;
        }
    }
    top
}

/// Geometric nested dissection: split at the median coordinate plane of the
/// widest axis, order both halves recursively and the plane last. For
/// nearest-neighbour graphs the plane is a vertex separator.
pub fn nested_dissection(coords: &[Vec<i64>]) -> Vec<usize> {
    let mut order = Vec::with_capacity(coords.len());
    let all: Vec<usize> = (0..coords.len()).collect();
    dissect(coords, all, &mut order);
    order
}

fn dissect(coords: &[Vec<i64>], set: Vec<usize>, order: &mut Vec<usize>) {
    const LEAF: usize = 48;
    if set.len() <= LEAF {
        order.extend(set);
        return;
    }
    let d = coords[set[0]].len();
    let (axis, _) = (0..d)
        .map(|a| {
            let (lo, hi) = set.iter().fold((i64::MAX, i64::MIN), |(lo, hi), &v| {
                (lo.min(coords[v][a]), hi.max(coords[v][a]))
            });
            (a, hi - lo)
        })
        .max_by_key(|&(a, w)| (w, std::cmp::Reverse(a)))
        .expect("dimension is positive");
    let mut vals: Vec<i64> = set.iter().map(|&v| coords[v][axis]).collect();
    let mid = vals.len() / 2;
    let (_, &mut median, _) = vals.select_nth_unstable(mid);
    let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
    for v in set {
        match coords[v][axis].cmp(&median) {
            std::cmp::Ordering::Less => left.push(v),
            std::cmp::Ordering::Greater => right.push(v),
            std::cmp::Ordering::Equal => sep.push(v),
        }
    }
    if left.is_empty() && right.is_empty() {
        order.extend(sep);
        return;
    }
    dissect(coords, left, order);
    dissect(coords, right, order);
    order.extend(sep);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_laplacian(n: usize) -> (CsrMatrix, Vec<Vec<i64>>) {
        let idx = |i: usize, j: usize| i * n + j;
        let mut t = Vec::new();
        let mut coords = Vec::new();
        for i in 0..n {
            for j in 0..n {
                coords.push(vec![i as i64, j as i64]);
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < n {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < n {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        (CsrMatrix::from_triplets(n * n, t).unwrap(), coords)
    }

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, 0);
        let mut t = Vec::new();
        let mut diag = vec![0.1; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.2 {
                    let w: f64 = rng.random::<f64>() + 0.01;
                    t.push((i, j, -w));
                    t.push((j, i, -w));
                    diag[i] += w;
                    diag[j] += w;
                }
            }
        }
        for (i, d) in diag.into_iter().enumerate() {
            t.push((i, i, d));
        }
        CsrMatrix::from_triplets(n, t).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5), (0, 1, -1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
        assert!(CsrMatrix::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn tridiagonal_strip_by_hand() {
        // [[4,-1,0],[-1,4,-1],[0,-1,4]]^-1 has centre entry 16/56
        let a = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 4.0), (1, 1, 4.0), (2, 2, 4.0), (0, 1, -1.0), (1, 0, -1.0), (1, 2, -1.0), (2, 1, -1.0)],
        )
        .unwrap();
        for s in solvers() {
            let f = s.prepare(&a, SolveOptions::default()).unwrap();
            let x = f.solve(&[0.0, 1.0, 0.0]).unwrap().x;
            assert!((x[1] - 2.0 / 7.0).abs() < 1e-12, "{}", s.name());
            assert!((x[0] - 1.0 / 14.0).abs() < 1e-12, "{}", s.name());
        }
    }

    #[test]
    fn solvers_agree_on_grid() {
        let (a, coords) = grid_laplacian(20);
        let b: Vec<f64> = (0..a.dim()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let reference = DenseCholesky::factor(&a).unwrap().solve(&b).unwrap().x;
        let nd = SparseCholesky::factor_with_coordinates(&a, &coords).unwrap();
        let natural = SparseCholesky::factor(&a, None).unwrap();
        assert!(nd.factor_nnz() <= natural.factor_nnz());
        for x in [
            nd.solve(&b).unwrap().x,
            natural.solve(&b).unwrap().x,
            CgFactor::new(a.clone(), SolveOptions::default()).unwrap().solve(&b).unwrap().x,
        ] {
            let err = x.iter().zip(&reference).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let (a, _) = grid_laplacian(30);
        let f = CgFactor::new(a, SolveOptions { tol: 1e-14, max_iter: Some(3) }).unwrap();
        match f.solve(&vec![1.0; 900]) {
            Err(Error::Solver { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_falls_back_to_direct() {
        let (a, _) = grid_laplacian(12);
        let f = AutoSolver.prepare(&a, SolveOptions { tol: 1e-12, max_iter: Some(2) }).unwrap();
        let s = f.solve(&vec![1.0; 144]).unwrap();
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        assert!(matches!(DenseCholesky::factor(&a), Err(Error::Numerical(_))));
        assert!(matches!(SparseCholesky::factor(&a, None), Err(Error::Numerical(_))));
    }

    #[test]
    fn unknown_solver_name() {
        assert!(solver("cholesky").is_ok());
        assert!(matches!(solver("lu"), Err(Error::Parameter(_))));
    }

    #[test]
    fn nested_dissection_is_a_permutation() {
        let (_, coords) = grid_laplacian(17);
        let mut p = nested_dissection(&coords);
        p.sort_unstable();
        assert_eq!(p, (0..289).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sparse_cholesky_matches_dense(n in 2usize..40, seed in 0u64..1000) {
            let a = random_spd(n, seed);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let dense = DenseCholesky::factor(&a).unwrap().solve(&b).unwrap().x;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            let sparse = SparseCholesky::factor(&a, Some(perm)).unwrap().solve(&b).unwrap();
            prop_assert!(sparse.residual < 1e-12);
            for (p, q) in sparse.x.iter().zip(&dense) {
                prop_assert!((p - q).abs() < 1e-9 * (1.0 + q.abs()));
            }
        }

        #[test]
        fn sampler_covariance_is_the_inverse(n in 2usize..12, seed in 0u64..1000) {
            // E[x x'] = L^-T L^-1: check by pushing every basis vector through
            let a = random_spd(n, seed);
            let f = SparseCholesky::factor(&a, Some(nested_dissection(&(0..n).map(|i| vec![i as i64, 0]).collect::<Vec<_>>()))).unwrap();
            let cols: Vec<Vec<f64>> = (0..n).map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                f.sample_from_normals(&e)
            }).collect();
            for i in 0..n {
                let e: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
                let g = f.solve(&e).unwrap().x;
                for j in 0..n {
                    let cov: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
                    prop_assert!((cov - g[j]).abs() < 1e-9 * (1.0 + g[j].abs()));
                }
            }
        }
    }
}
