//! Linear algebra on the free (non-Dirichlet) nodes of a level-`l` mesh.
//!
//! Free nodes are the columns `i = 1..n-1` of every row `j = 0..n`, indexed
//! `j * (n - 1) + (i - 1)`. P1 couplings on the checkerboard triangulation
//! never reach beyond the 3x3 neighbourhood of a node, so operators are
//! stored as one 9-point stencil per free node.

use crate::error::{Error, Result};

use super::mesh::for_each_parent;

/// Stencil slot of the coupling to the neighbour at offset `(di, dj)`.
#[inline]
pub(crate) fn slot(di: isize, dj: isize) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

#[derive(Debug, Clone)]
pub(crate) struct StencilMatrix {
    /// Free columns per row, `n - 1`.
    nx: usize,
    /// Rows, `n + 1`.
    ny: usize,
    coef: Vec<[f64; 9]>,
}

impl StencilMatrix {
    pub fn zeros(cells_per_side: usize) -> Self {
        let nx = cells_per_side - 1;
        let ny = cells_per_side + 1;
        Self {
            nx,
            ny,
            coef: vec![[0.0; 9]; nx * ny],
        }
    }

    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    /// Adds `value` to the coupling between free nodes `(i, j)` and
    /// `(i + di, j + dj)`, in mesh column numbering.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, di: isize, dj: isize, value: f64) {
        let row = j * self.nx + (i - 1);
        self.coef[row][slot(di, dj)] += value;
    }

    #[inline]
    fn for_each_neighbour(&self, row: usize, mut f: impl FnMut(usize, f64)) {
        let (i, j) = ((row % self.nx) as isize, (row / self.nx) as isize);
        let c = &self.coef[row];
        for dj in -1..=1 {
            let jj = j + dj;
            if jj < 0 || jj >= self.ny as isize {
                continue;
            }
            for di in -1..=1 {
                let ii = i + di;
                if ii < 0 || ii >= self.nx as isize {
                    continue;
                }
                let a = c[slot(di, dj)];
                if a != 0.0 {
                    f(jj as usize * self.nx + ii as usize, a);
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (row, out) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            self.for_each_neighbour(row, |col, a| s += a * x[col]);
            *out = s;
        }
    }

    fn gauss_seidel_row(&self, row: usize, x: &mut [f64], b: &[f64]) {
        let diag = self.coef[row][slot(0, 0)];
        let mut s = b[row];
        self.for_each_neighbour(row, |col, a| {
            if col != row {
                s -= a * x[col];
            }
        });
        x[row] = s / diag;
    }

    pub fn gauss_seidel_forward(&self, x: &mut [f64], b: &[f64]) {
        for row in 0..self.dim() {
            self.gauss_seidel_row(row, x, b);
        }
    }

    pub fn gauss_seidel_backward(&self, x: &mut [f64], b: &[f64]) {
        for row in (0..self.dim()).rev() {
            self.gauss_seidel_row(row, x, b);
        }
    }

    /// Whether `A[r][c] == A[c][r]` for every stored coupling.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim()).all(|row| {
            let mut ok = true;
            let (i, j) = ((row % self.nx) as isize, (row / self.nx) as isize);
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    let (ii, jj) = (i + di, j + dj);
                    if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
                        continue;
                    }
                    let other = jj as usize * self.nx + ii as usize;
                    let a = self.coef[row][slot(di, dj)];
                    let b = self.coef[other][slot(-di, -dj)];
                    ok &= (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
                }
            }
            ok
        })
    }
}

/// Cholesky factor of a symmetric banded matrix, lower band stored row-wise.
#[derive(Debug, Clone)]
pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * (self.bw + 1) + (c + self.bw - r)
    }

    /// Factors the stencil operator. Free-node ordering gives bandwidth `nx + 1`.
    pub fn factor(a: &StencilMatrix) -> Result<Self> {
        let n = a.dim();
        let bw = a.nx + 1;
        let mut f = Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        };
        for row in 0..n {
            a.for_each_neighbour(row, |col, v| {
                if col <= row {
                    let k = f.at(row, col);
                    f.band[k] = v;
                }
            });
        }

        for r in 0..n {
            let r0 = r.saturating_sub(bw);
            for c in r0..=r {
                let k0 = r0.max(c.saturating_sub(bw));
                let mut s = f.band[f.at(r, c)];
                let (rb, cb) = (f.at(r, k0), f.at(c, k0));
                for t in 0..(c - k0) {
                    s -= f.band[rb + t] * f.band[cb + t];
                }
                if c == r {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSystem { row: r, pivot: s });
                    }
                    let k = f.at(r, r);
                    f.band[k] = s.sqrt();
                } else {
                    let k = f.at(r, c);
                    f.band[k] = s / f.band[f.at(c, c)];
                }
            }
        }
        Ok(f)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for r in 0..n {
            let r0 = r.saturating_sub(bw);
            let base = self.at(r, r0);
            let mut s = x[r];
            for (t, c) in (r0..r).enumerate() {
                s -= self.band[base + t] * x[c];
            }
            x[r] = s / self.band[self.at(r, r)];
        }
        for r in (0..n).rev() {
            x[r] /= self.band[self.at(r, r)];
            let v = x[r];
            let r0 = r.saturating_sub(bw);
            let base = self.at(r, r0);
            for (t, c) in (r0..r).enumerate() {
                x[c] -= self.band[base + t] * v;
            }
        }
    }
}

/// Geometric multigrid V-cycle over a nested hierarchy of rediscretized
/// operators. Symmetric Gauss-Seidel smoothing and an exact coarsest solve
/// make each cycle a symmetric positive definite preconditioner.
pub(crate) struct Multigrid {
    /// Finest first.
    operators: Vec<StencilMatrix>,
    coarse: BandCholesky,
    sweeps: usize,
}

impl Multigrid {
    pub fn new(operators: Vec<StencilMatrix>, sweeps: usize) -> Result<Self> {
        let coarse = BandCholesky::factor(operators.last().expect("at least one level"))?;
        Ok(Self {
            operators,
            coarse,
            sweeps,
        })
    }

    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        self.vcycle(0, b, x);
    }

    fn vcycle(&self, depth: usize, b: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        if depth + 1 == self.operators.len() {
            x.copy_from_slice(b);
            self.coarse.solve_in_place(x);
            return;
        }
        let a = &self.operators[depth];
        for _ in 0..self.sweeps {
            a.gauss_seidel_forward(x, b);
        }
        let mut r = vec![0.0; a.dim()];
        a.matvec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);

        let coarse = &self.operators[depth + 1];
        let rc = restrict(&r, a.nx + 1, coarse.dim());
        let mut ec = vec![0.0; coarse.dim()];
        self.vcycle(depth + 1, &rc, &mut ec);
        prolong_add(&ec, a.nx + 1, x);

        for _ in 0..self.sweeps {
            a.gauss_seidel_backward(x, b);
        }
    }
}

fn free_index(i: usize, j: usize, n: usize) -> Option<usize> {
    (i > 0 && i < n).then(|| j * (n - 1) + (i - 1))
}

/// `x_fine += P e_coarse`, where `P` is P1 interpolation between nested meshes.
fn prolong_add(coarse: &[f64], fine_n: usize, fine: &mut [f64]) {
    let cn = fine_n / 2;
    for fj in 0..=fine_n {
        for fi in 1..fine_n {
            let mut v = 0.0;
            for_each_parent(fi, fj, |ci, cj, w| {
                if let Some(k) = free_index(ci, cj, cn) {
                    v += w * coarse[k];
                }
            });
            fine[fj * (fine_n - 1) + (fi - 1)] += v;
        }
    }
}

/// `P^T r_fine`; exact transpose of [`prolong_add`].
fn restrict(fine: &[f64], fine_n: usize, coarse_dim: usize) -> Vec<f64> {
    let cn = fine_n / 2;
    let mut out = vec![0.0; coarse_dim];
    for fj in 0..=fine_n {
        for fi in 1..fine_n {
            let r = fine[fj * (fine_n - 1) + (fi - 1)];
            for_each_parent(fi, fj, |ci, cj, w| {
                if let Some(k) = free_index(ci, cj, cn) {
                    out[k] += w * r;
                }
            });
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradient to relative residual `tol`.
pub(crate) fn pcg(
    a: &StencilMatrix,
    mg: &Multigrid,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = a.dim();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    mg.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok((x, it));
        }
        mg.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverDidNotConverge {
        iterations: max_iter,
        residual: res,
    })
}
