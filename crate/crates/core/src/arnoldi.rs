//! Arnoldi process with modified Gram-Schmidt and optional
//! reorthogonalization.
//!
//! After `k` steps the decomposition holds `Q_{k+1}` (or only `Q_k` once
//! breakdown has been detected) and the `(k+1) x k` Hessenberg matrix with
//! `A Q_k = Q_{k+1} H_{k+1,k}`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{axpy, check_finite, dot, nrm2, DenseMatrix};
use crate::operators::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArnoldiOptions {
    /// Run a second Gram-Schmidt pass against the whole basis.
    pub reorthogonalize: bool,
    /// Breakdown when `h_{k+1,k} <= breakdown_tol * max ‖A q_j‖`.
    pub breakdown_tol: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            reorthogonalize: true,
            breakdown_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArnoldiDecomposition {
    rhs: Vec<f64>,
    beta: f64,
    basis: Vec<Vec<f64>>,
    /// Column `j` holds `h_{1,j+1} … h_{j+2,j+1}`.
    h_cols: Vec<Vec<f64>>,
    breakdown: Option<usize>,
    max_apply_norm: f64,
    options: ArnoldiOptions,
}

impl ArnoldiDecomposition {
    /// Zero-step state, `q_1 = b/‖b‖`.
    pub fn start(op: &LinearOperator, b: &[f64], options: ArnoldiOptions) -> Result<Self> {
        if b.len() != op.dim() {
            return Err(LabError::invalid(format!(
                "operator of dimension {} with rhs of length {}",
                op.dim(),
                b.len()
            )));
        }
        check_finite(b, "rhs")?;
        let beta = nrm2(b);
        if beta == 0.0 {
            return Err(LabError::invalid("Arnoldi needs a nonzero starting vector"));
        }
        if options.breakdown_tol.is_nan() || options.breakdown_tol < 0.0 {
            return Err(LabError::invalid("breakdown tolerance must be nonnegative"));
        }
        Ok(Self {
            rhs: b.to_vec(),
            beta,
            basis: vec![b.iter().map(|x| x / beta).collect()],
            h_cols: Vec::new(),
            breakdown: None,
            max_apply_norm: 0.0,
            options,
        })
    }

    /// Runs up to `k_max` steps, stopping early at breakdown.
    pub fn run(
        op: &LinearOperator,
        b: &[f64],
        k_max: usize,
        options: ArnoldiOptions,
    ) -> Result<Self> {
        if k_max > op.dim() {
            return Err(LabError::invalid(format!(
                "k_max = {k_max} exceeds the dimension {}",
                op.dim()
            )));
        }
        let mut dec = Self::start(op, b, options)?;
        while dec.steps() < k_max && !dec.is_broken_down() {
            dec.extend(op)?;
        }
        Ok(dec)
    }

    /// One Arnoldi step.
    ///
    /// At step `n` the next vector is zero in exact arithmetic, so breakdown is
    /// declared there whatever the computed norm.
    pub fn extend(&mut self, op: &LinearOperator) -> Result<()> {
        if let Some(step) = self.breakdown {
            return Err(LabError::InvalidState(format!(
                "cannot extend past breakdown at step {step}"
            )));
        }
        let n = self.dim();
        let k = self.steps();
        if k >= n {
            return Err(LabError::InvalidState(format!(
                "cannot extend past the dimension {n}"
            )));
        }
        let mut w = op.apply(&self.basis[k])?;
        self.max_apply_norm = self.max_apply_norm.max(nrm2(&w));

        let mut h = vec![0.0; k + 2];
        for (j, q) in self.basis.iter().enumerate() {
            h[j] = dot(q, &w);
            axpy(-h[j], q, &mut w);
        }
        if self.options.reorthogonalize {
            for (j, q) in self.basis.iter().enumerate() {
                let c = dot(q, &w);
                h[j] += c;
                axpy(-c, q, &mut w);
            }
        }
        let norm = nrm2(&w);
        h[k + 1] = norm;
        self.h_cols.push(h);

        if norm <= self.options.breakdown_tol * self.max_apply_norm || k + 1 == n {
            self.breakdown = Some(k + 1);
        } else {
            w.iter_mut().for_each(|x| *x /= norm);
            self.basis.push(w);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Number of completed steps `k`.
    pub fn steps(&self) -> usize {
        self.h_cols.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn options(&self) -> ArnoldiOptions {
        self.options
    }

    pub fn is_broken_down(&self) -> bool {
        self.breakdown.is_some()
    }

    /// Step at which the Krylov space became invariant.
    pub fn breakdown_step(&self) -> Option<usize> {
        self.breakdown
    }

    /// Basis vectors `q_1, …` (0-based).
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `h_{i,j}` with 1-based indices; zero outside the stored pattern.
    pub fn h(&self, i: usize, j: usize) -> f64 {
        assert!(i >= 1 && j >= 1 && j <= self.steps(), "h({i}, {j}) out of range");
        self.h_cols[j - 1].get(i - 1).copied().unwrap_or(0.0)
    }

    /// `H_{k+1,k}`.
    pub fn hessenberg(&self, k: usize) -> DenseMatrix {
        assert!(k <= self.steps());
        let mut m = DenseMatrix::zeros(k + 1, k);
        for j in 0..k {
            for (i, &v) in self.h_cols[j].iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `H_k`, the square part of `H_{k+1,k}`.
    pub fn square_hessenberg(&self, k: usize) -> DenseMatrix {
        let full = self.hessenberg(k);
        full.leading_block(k, k)
    }

    /// `Q_k · y` for `y` of length `k`.
    pub fn combine(&self, y: &[f64]) -> Vec<f64> {
        assert!(y.len() <= self.basis.len());
        let mut x = vec![0.0; self.dim()];
        for (q, &c) in self.basis.iter().zip(y) {
            axpy(c, q, &mut x);
        }
        x
    }

    /// `Q_kᵀ v`
    pub fn project(&self, k: usize, v: &[f64]) -> Vec<f64> {
        self.basis[..k].iter().map(|q| dot(q, v)).collect()
    }

    /// `‖Qᵀ Q − I‖_max` over the stored basis.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, qi) in self.basis.iter().enumerate() {
            for (j, qj) in self.basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(qi, qj) - target).abs());
            }
        }
        worst
    }

    /// `‖A Q_k − Q_{k+1} H_{k+1,k}‖_F` at the current step.
    ///
    /// After breakdown `q_{k+1}` was never formed and its (tiny) term is left
    /// out.
    pub fn relation_residual(&self, op: &LinearOperator) -> Result<f64> {
        let mut ssq = 0.0;
        for j in 0..self.steps() {
            let mut r = op.apply(&self.basis[j])?;
            for (i, &h) in self.h_cols[j].iter().enumerate() {
                if let Some(q) = self.basis.get(i) {
                    axpy(-h, q, &mut r);
                }
            }
            ssq += dot(&r, &r);
        }
        Ok(ssq.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_prescribed_instance, gen_random_sparse, RandomSparseSpec};

    #[test]
    fn start_examples() {
        let op = LinearOperator::Diagonal(vec![1.0, 2.0, 3.0]);
        let dec = ArnoldiDecomposition::start(&op, &[3.0, 0.0, 0.0], ArnoldiOptions::default())
            .unwrap();
        assert_eq!(dec.basis()[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(dec.beta(), 3.0);
        assert_eq!(dec.steps(), 0);

        let op4 = LinearOperator::Diagonal(vec![1.0; 4]);
        let dec = ArnoldiDecomposition::start(&op4, &[1.0; 4], ArnoldiOptions::default()).unwrap();
        assert_eq!(dec.beta(), 2.0);
        assert_eq!(dec.basis()[0], vec![0.5; 4]);

        assert!(ArnoldiDecomposition::start(&op, &[0.0; 3], ArnoldiOptions::default()).is_err());
        assert!(ArnoldiDecomposition::start(&op, &[1.0; 2], ArnoldiOptions::default()).is_err());
    }

    #[test]
    fn identity_breaks_down_immediately() {
        let op = LinearOperator::Diagonal(vec![1.0; 3]);
        let mut dec =
            ArnoldiDecomposition::start(&op, &[1.0, 2.0, 3.0], ArnoldiOptions::default()).unwrap();
        dec.extend(&op).unwrap();
        assert!((dec.h(1, 1) - 1.0).abs() < 1e-15);
        assert!(dec.h(2, 1).abs() < 1e-15);
        assert_eq!(dec.breakdown_step(), Some(1));
        assert_eq!(dec.basis().len(), 1);
        assert!(matches!(dec.extend(&op), Err(LabError::InvalidState(_))));
    }

    #[test]
    fn two_by_two_mgs_step() {
        let op = LinearOperator::Diagonal(vec![1.0, 2.0]);
        let s = 0.5f64.sqrt();
        let mut dec = ArnoldiDecomposition::start(&op, &[s, s], ArnoldiOptions::default()).unwrap();
        dec.extend(&op).unwrap();
        assert!((dec.h(1, 1) - 1.5).abs() < 1e-15);
        assert!((dec.h(2, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prescribed_instance_gives_identity_basis() {
        let inst = build_prescribed_instance(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        let op = inst.operator();
        let dec = ArnoldiDecomposition::run(&op, &inst.rhs, 5, ArnoldiOptions::default()).unwrap();
        assert_eq!(dec.breakdown_step(), Some(5));
        for (j, q) in dec.basis().iter().enumerate() {
            let mut e = vec![0.0; 5];
            e[j] = 1.0;
            assert_eq!(q, &e);
        }
        let a = inst.matrix.to_dense();
        for j in 1..=5 {
            for i in 1..=5 {
                assert_eq!(dec.h(i, j), a[(i - 1, j - 1)], "h({i},{j})");
            }
        }
        assert_eq!(dec.h(6, 5), 0.0);
    }

    #[test]
    fn run_zero_steps_and_limits() {
        let op = LinearOperator::Diagonal(vec![1.0, 2.0, 3.0]);
        let dec = ArnoldiDecomposition::run(&op, &[1.0; 3], 0, ArnoldiOptions::default()).unwrap();
        assert_eq!(dec.steps(), 0);
        assert!(ArnoldiDecomposition::run(&op, &[1.0; 3], 4, ArnoldiOptions::default()).is_err());
        let dec = ArnoldiDecomposition::run(&op, &[1.0; 3], 3, ArnoldiOptions::default()).unwrap();
        assert_eq!(dec.breakdown_step(), Some(3));
    }

    #[test]
    fn invariants_on_random_sparse() {
        let op = LinearOperator::Csr(
            gen_random_sparse(&RandomSparseSpec {
                n: 200,
                density: 0.05,
                seed: 42,
                shift: 1.5,
            })
            .unwrap(),
        );
        let b: Vec<f64> = (0..200).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let dec = ArnoldiDecomposition::run(&op, &b, 60, ArnoldiOptions::default()).unwrap();
        assert_eq!(dec.steps(), 60);
        assert!(dec.orthogonality_error() <= 1e-10);
        let h = dec.hessenberg(60);
        assert!(dec.relation_residual(&op).unwrap() <= 1e-12 * 60.0 * h.frobenius_norm());
        for j in 1..=60 {
            assert!(dec.h(j + 1, j) >= 0.0);
        }
        for q in dec.basis() {
            assert!((nrm2(q) - 1.0).abs() <= 1e-12);
        }
    }
}
