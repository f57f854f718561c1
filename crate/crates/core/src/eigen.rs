//! Lowest-eigenpair solvers for real symmetric operators.
//!
//! [`dense_lowest_eigenpair`] factorizes the full matrix and is the reference.
//! [`davidson_lowest_eigenpair`] only needs matrix-vector products and the
//! diagonal: it grows an orthonormal search space with diagonally
//! preconditioned residuals, extracts Ritz pairs by Rayleigh–Ritz and
//! collapses to the lowest few Ritz vectors when the space reaches its cap.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::determinant::ProjectedHamiltonian;
use crate::{Error, Result};

/// Largest dimension the dense solver accepts.
pub const DENSE_SOLVER_LIMIT: usize = 4096;
/// Problems up to this size go to the dense solver in [`lowest_eigenpair`].
pub const DENSE_CROSSOVER: usize = 512;
/// Preconditioner denominators smaller than this are clamped.
pub const PRECONDITIONER_GUARD: f64 = 1e-8;

/// A real symmetric linear operator.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    /// y = A x
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric {
    dim: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::SizeMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (data[i * dim + j] - data[j * dim + i]).abs() > 1e-8 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in diag.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { dim: n, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl SymmetricOperator for DenseSymmetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).collect()
    }
}

impl SymmetricOperator for ProjectedHamiltonian {
    fn dim(&self) -> usize {
        ProjectedHamiltonian::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        ProjectedHamiltonian::apply(self, x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        ProjectedHamiltonian::diagonal(self).to_vec()
    }
}

/// Operator given by a matrix-vector callback and its explicit diagonal.
pub struct FnOperator<F> {
    diag: Vec<f64>,
    apply: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(diag: Vec<f64>, apply: F) -> Self {
        Self { diag, apply }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> SymmetricOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.apply)(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit norm, largest-magnitude component non-negative.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DavidsonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_space: usize,
    pub restart_size: usize,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            max_space: 24,
            restart_size: 4,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual_norm(op: &dyn SymmetricOperator, value: f64, v: &[f64]) -> f64 {
    let mut av = vec![0.0; v.len()];
    op.apply(v, &mut av);
    av.iter()
        .zip(v)
        .map(|(a, x)| (a - value * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lowest eigenpair by full symmetric factorization.
pub fn dense_lowest_eigenpair(m: &DenseSymmetric) -> Result<Eigenpair> {
    dense_lowest_with_limit(m, DENSE_SOLVER_LIMIT)
}

pub fn dense_lowest_with_limit(m: &DenseSymmetric, limit: usize) -> Result<Eigenpair> {
    let n = m.dim;
    if n > limit {
        return Err(Error::TooLarge { dim: n, limit });
    }
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let mat = DMatrix::from_row_slice(n, n, &m.data);
    let eig = SymmetricEigen::new(mat);
    let (k, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let nv = norm(&vector);
    vector.iter_mut().for_each(|x| *x /= nv);
    fix_sign(&mut vector);
    let residual = residual_norm(m, value, &vector);
    Ok(Eigenpair {
        value,
        vector,
        residual,
        iterations: 1,
        converged: residual < 1e-9 * value.abs().max(1.0),
    })
}

/// Orthogonalizes `t` against the columns of `basis` (two passes) and
/// returns the remaining norm.
fn orthogonalize(basis: &[Vec<f64>], t: &mut [f64]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, t);
            t.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    norm(t)
}

/// Lowest eigenpair by Davidson iteration.
///
/// `guess` need not be normalized; when absent the unit vector on the
/// smallest diagonal entry is used. Hitting `max_iter` is not an error: the
/// best Ritz pair is returned with `converged = false`.
pub fn davidson_lowest_eigenpair(
    op: &dyn SymmetricOperator,
    guess: Option<&[f64]>,
    opts: &DavidsonOptions,
) -> Result<Eigenpair> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Empty("operator"));
    }
    let diag = op.diagonal();
    let mut v0 = match guess {
        Some(g) => {
            if g.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: g.len(),
                });
            }
            g.to_vec()
        }
        None => {
            let mut v = vec![0.0; n];
            let k = (0..n)
                .min_by(|&a, &b| diag[a].total_cmp(&diag[b]))
                .expect("nonempty");
            v[k] = 1.0;
            v
        }
    };
    let nv = norm(&v0);
    if nv == 0.0 || !nv.is_finite() {
        return Err(Error::InvalidArgument("guess vector has zero norm".into()));
    }
    v0.iter_mut().for_each(|x| *x /= nv);

    let max_space = opts.max_space.clamp(2, n.max(2));
    let restart = opts.restart_size.clamp(1, max_space - 1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_space);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_space);
    let push = |basis: &mut Vec<Vec<f64>>, images: &mut Vec<Vec<f64>>, v: Vec<f64>| {
        let mut av = vec![0.0; n];
        op.apply(&v, &mut av);
        basis.push(v);
        images.push(av);
    };
    push(&mut basis, &mut images, v0);

    let mut best = (f64::INFINITY, vec![0.0; n], f64::INFINITY);
    for iter in 1..=opts.max_iter.max(1) {
        let k = basis.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&basis[i], &images[j]);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta = eig.eigenvalues[order[0]];
        let s = eig.eigenvectors.column(order[0]);

        let mut x = vec![0.0; n];
        let mut ax = vec![0.0; n];
        for (c, (b, ab)) in s.iter().zip(basis.iter().zip(&images)) {
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += c * bi);
            ax.iter_mut().zip(ab).for_each(|(xi, bi)| *xi += c * bi);
        }
        let r: Vec<f64> = ax.iter().zip(&x).map(|(a, xi)| a - theta * xi).collect();
        let rnorm = norm(&r);
        best = (theta, x, rnorm);
        if rnorm < opts.tol || n == 1 {
            let (value, mut vector, residual) = best;
            fix_sign(&mut vector);
            return Ok(Eigenpair {
                value,
                vector,
                residual,
                iterations: iter,
                converged: true,
            });
        }

        if basis.len() >= max_space {
            let keep = restart.min(k);
            let mut new_basis = Vec::with_capacity(max_space);
            let mut new_images = Vec::with_capacity(max_space);
            for &col in order.iter().take(keep) {
                let c = eig.eigenvectors.column(col);
                let mut v = vec![0.0; n];
                let mut av = vec![0.0; n];
                for (ci, (b, ab)) in c.iter().zip(basis.iter().zip(&images)) {
                    v.iter_mut().zip(b).for_each(|(xi, bi)| *xi += ci * bi);
                    av.iter_mut().zip(ab).for_each(|(xi, bi)| *xi += ci * bi);
                }
                new_basis.push(v);
                new_images.push(av);
            }
            basis = new_basis;
            images = new_images;
        }

        let mut t: Vec<f64> = r
            .iter()
            .zip(&diag)
            .map(|(ri, di)| {
                let mut den = di - theta;
                if den.abs() < PRECONDITIONER_GUARD {
                    den = PRECONDITIONER_GUARD.copysign(den);
                }
                ri / den
            })
            .collect();
        let tn = norm(&t);
        t.iter_mut().for_each(|x| *x /= tn);
        let mut rem = orthogonalize(&basis, &mut t);
        if !(rem > 1e-10) {
            // Preconditioned direction collapsed into the space; fall back to
            // the plain residual.
            t = r.iter().map(|x| x / rnorm).collect();
            rem = orthogonalize(&basis, &mut t);
            if !(rem > 1e-10) {
                break;
            }
        }
        t.iter_mut().for_each(|x| *x /= rem);
        push(&mut basis, &mut images, t);
    }
    let (value, mut vector, residual) = best;
    fix_sign(&mut vector);
    Ok(Eigenpair {
        value,
        vector,
        converged: residual < opts.tol,
        residual,
        iterations: opts.max_iter,
    })
}

/// Lowest eigenpair of a projected Hamiltonian: dense factorization up to
/// [`DENSE_CROSSOVER`], Davidson above it.
pub fn lowest_eigenpair(h: &ProjectedHamiltonian) -> Result<Eigenpair> {
    if h.dim() == 0 {
        return Err(Error::Empty("subspace"));
    }
    if h.dim() <= DENSE_CROSSOVER {
        let m = DenseSymmetric {
            dim: h.dim(),
            data: h.to_dense(),
        };
        dense_lowest_eigenpair(&m)
    } else {
        let opts = DavidsonOptions::default();
        let pair = davidson_lowest_eigenpair(h, None, &opts)?;
        Ok(pair)
    }
}
