//! Dense double-precision kernels used by the rest of the crate: norms,
//! Givens rotations, Hessenberg and LU solves, a cyclic Jacobi symmetric
//! eigensolver and a 2-norm condition number estimator.
//!
//! Everything here is sized for desk-scale problems (n up to a few
//! thousand). Nothing is blocked or vectorized.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{LabError, Result};

/// Pivot magnitudes at or below this multiple of the largest column
/// magnitude seen so far are treated as exact zeros.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Off-diagonal Frobenius target for the Jacobi sweeps, relative to `‖A‖_F`.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Unchecked Euclidean norm with scaling against overflow.
pub(crate) fn nrm2(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ssq: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * ssq.sqrt()
}

pub(crate) fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(LabError::invalid(format!(
            "{what} has a non-finite entry at index {i}"
        )));
    }
    Ok(())
}

pub(crate) fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Euclidean norm of a nonempty finite vector.
pub fn norm2(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(LabError::invalid("norm of an empty vector"));
    }
    check_finite(v, "vector")?;
    Ok(nrm2(v))
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LabError::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(LabError::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data, "matrix")?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LabError::invalid("ragged rows"));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|col| col.len() != r) {
            return Err(LabError::invalid("ragged columns"));
        }
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Leading `r x c` block.
    pub fn leading_block(&self, r: usize, c: usize) -> Self {
        assert!(r <= self.rows && c <= self.cols);
        let mut b = Self::zeros(r, c);
        for i in 0..r {
            b.data[i * c..(i + 1) * c].copy_from_slice(&self.row(i)[..c]);
        }
        b
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(LabError::invalid(format!(
                "matvec: {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(LabError::invalid(format!(
                "transposed matvec: {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut y);
        }
        Ok(y)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(LabError::invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        nrm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// True when every entry below the first subdiagonal is exactly zero.
    pub fn is_upper_hessenberg(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols.min(i.saturating_sub(1))).all(|j| self[(i, j)] == 0.0))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Plane rotation acting on rows `i` and `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub c: f64,
    pub s: f64,
    pub i: usize,
}

impl GivensRotation {
    /// Applies the rotation to entries `i` and `i + 1` of `x`.
    pub fn apply(&self, x: &mut [f64]) {
        let (a, b) = (x[self.i], x[self.i + 1]);
        x[self.i] = self.c * a + self.s * b;
        x[self.i + 1] = -self.s * a + self.c * b;
    }
}

/// Rotation with `c·a + s·b = r` and `-s·a + c·b = 0`.
///
/// `(0, 0)` yields the identity rotation and `r = 0`. The returned rotation
/// has `i = 0`; callers set the row index they need.
pub fn givens(a: f64, b: f64) -> Result<(GivensRotation, f64)> {
    if !a.is_finite() || !b.is_finite() {
        return Err(LabError::invalid("givens: non-finite input"));
    }
    if b == 0.0 {
        return Ok((GivensRotation { c: 1.0, s: 0.0, i: 0 }, a));
    }
    if a == 0.0 {
        return Ok((GivensRotation { c: 0.0, s: 1.0, i: 0 }, b));
    }
    let r = a.hypot(b);
    Ok((
        GivensRotation {
            c: a / r,
            s: b / r,
            i: 0,
        },
        r,
    ))
}

/// Solves `H y = rhs` for square upper-Hessenberg `H` in O(k²).
///
/// Gaussian elimination where each step only has to choose between the
/// diagonal row and the one below it.
pub fn solve_hessenberg(h: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = h.rows();
    if !h.is_square() {
        return Err(LabError::invalid("solve_hessenberg: matrix is not square"));
    }
    if rhs.len() != k {
        return Err(LabError::invalid(format!(
            "solve_hessenberg: {k}x{k} system with rhs of length {}",
            rhs.len()
        )));
    }
    if !h.is_upper_hessenberg() {
        return Err(LabError::invalid(
            "solve_hessenberg: nonzero entries below the subdiagonal",
        ));
    }
    let mut u = h.clone();
    let mut y = rhs.to_vec();
    let mut scale = 0.0_f64;
    for j in 0..k {
        for i in 0..k.min(j + 2) {
            scale = scale.max(h[(i, j)].abs());
        }
        if j + 1 < k && u[(j + 1, j)].abs() > u[(j, j)].abs() {
            for c in j..k {
                let tmp = u[(j, c)];
                u[(j, c)] = u[(j + 1, c)];
                u[(j + 1, c)] = tmp;
            }
            y.swap(j, j + 1);
        }
        let pivot = u[(j, j)];
        if pivot.abs() <= SINGULAR_TOL * scale {
            return Err(LabError::Singular { index: j, pivot });
        }
        if j + 1 < k {
            let m = u[(j + 1, j)] / pivot;
            if m != 0.0 {
                u[(j + 1, j)] = 0.0;
                for c in j + 1..k {
                    u[(j + 1, c)] -= m * u[(j, c)];
                }
                y[j + 1] -= m * y[j];
            }
        }
    }
    back_substitute(&u, &mut y);
    Ok(y)
}

/// In-place solve with the upper triangle of `u`.
fn back_substitute(u: &DenseMatrix, y: &mut [f64]) {
    let k = y.len();
    for i in (0..k).rev() {
        let s: f64 = ((i + 1)..k).map(|c| u[(i, c)] * y[c]).sum();
        y[i] = (y[i] - s) / u[(i, i)];
    }
}

/// LU factorization with partial pivoting, `P·A = L·U`.
///
/// `L` (unit lower, multipliers below the diagonal) and `U` share storage.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: DenseMatrix,
    /// `perm[i]` is the original row now in position `i`.
    perm: Vec<usize>,
    /// First column whose pivot fell below the singularity threshold.
    singular_at: Option<(usize, f64)>,
}

impl LuFactorization {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(LabError::invalid(format!(
                "LU requires a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut scale = 0.0_f64;
        let mut singular_at = None;
        for j in 0..n {
            for i in 0..n {
                scale = scale.max(a[(i, j)].abs());
            }
            let (p, pmax) = (j..n)
                .map(|i| (i, lu[(i, j)].abs()))
                .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != j {
                for c in 0..n {
                    let tmp = lu[(j, c)];
                    lu[(j, c)] = lu[(p, c)];
                    lu[(p, c)] = tmp;
                }
                perm.swap(j, p);
            }
            if pmax <= SINGULAR_TOL * scale {
                if singular_at.is_none() {
                    singular_at = Some((j, lu[(j, j)]));
                }
                continue;
            }
            let pivot = lu[(j, j)];
            for i in j + 1..n {
                let m = lu[(i, j)] / pivot;
                lu[(i, j)] = m;
                if m != 0.0 {
                    for c in j + 1..n {
                        lu[(i, c)] -= m * lu[(j, c)];
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            singular_at,
        })
    }

    pub fn is_singular(&self) -> bool {
        self.singular_at.is_some()
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn check(&self, rhs: &[f64]) -> Result<()> {
        if let Some((index, pivot)) = self.singular_at {
            return Err(LabError::Singular { index, pivot });
        }
        if rhs.len() != self.dim() {
            return Err(LabError::invalid(format!(
                "LU solve: dimension {} with rhs of length {}",
                self.dim(),
                rhs.len()
            )));
        }
        Ok(())
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check(rhs)?;
        let n = self.dim();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|c| self.lu[(i, c)] * x[c]).sum();
            x[i] -= s;
        }
        back_substitute(&self.lu, &mut x);
        Ok(x)
    }

    /// Solves `Aᵀ x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check(rhs)?;
        let n = self.dim();
        // Uᵀ z = rhs, then Lᵀ w = z, then x = Pᵀ w.
        let mut z = rhs.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|c| self.lu[(c, i)] * z[c]).sum();
            z[i] = (z[i] - s) / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| self.lu[(c, i)] * z[c]).sum();
            z[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        Ok(x)
    }
}

/// Solves the square system `A x = rhs` through [`LuFactorization`].
pub fn lu_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    check_finite(a.as_slice(), "matrix")?;
    check_finite(rhs, "rhs")?;
    LuFactorization::factor(a)?.solve(rhs)
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DenseMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn jacobi_eigh(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(LabError::invalid("jacobi_eigh: matrix is not square"));
    }
    check_finite(a.as_slice(), "matrix")?;
    let n = a.rows();
    let amax = a.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * amax {
                return Err(LabError::invalid(format!(
                    "jacobi_eigh: matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let target = JACOBI_TOL * a.frobenius_norm();
    let off = |m: &DenseMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LabError::NoConvergence {
                what: "Jacobi eigensolver",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

const COND_MAX_ITERS: usize = 10_000;

/// Estimates `κ₂(A) = σ_max / σ_min`.
///
/// Power iteration on `AᵀA` gives `σ_max²` and inverse iteration through the
/// LU factors gives `σ_min²`; each stops once the Rayleigh quotient changes
/// by at most `tol` relatively (or after 10⁴ steps). Both iterations
/// approach their limits from the inside, so the result tends to
/// underestimate κ when spectral gaps are small.
pub fn cond2_estimate(a: &DenseMatrix, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(LabError::invalid("cond2_estimate: tol must be positive"));
    }
    check_finite(a.as_slice(), "matrix")?;
    let lu = LuFactorization::factor(a)?;
    if let Some((index, pivot)) = lu.singular_at {
        return Err(LabError::Singular { index, pivot });
    }
    let n = a.rows();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64 + 0.3).sin()).collect();

    let sigma_max_sq = rayleigh_power(&start, tol, |v| {
        let av = a.matvec(v)?;
        a.matvec_transpose(&av)
    })?;
    let inv_sigma_min_sq = rayleigh_power(&start, tol, |v| {
        let w = lu.solve_transpose(v)?;
        lu.solve(&w)
    })?;
    Ok((sigma_max_sq * inv_sigma_min_sq).sqrt())
}

/// Power iteration for the dominant eigenvalue of an SPD map.
fn rayleigh_power<F>(start: &[f64], tol: f64, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut v = start.to_vec();
    let nv = nrm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..COND_MAX_ITERS {
        let w = apply(&v)?;
        let next = dot(&v, &w);
        let nw = nrm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    Ok(lambda)
}
