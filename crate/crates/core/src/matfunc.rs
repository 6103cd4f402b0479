//! Arnoldi approximation of `f(A)b` by `β Q_k f(H_k) e_1`.
//!
//! Two functions are supported: `f(x) = 1/x`, where the iterate coincides
//! with FOM, and `f(x) = x^{-1/2}`, evaluated through its Stieltjes
//! representation
//!
//! ```text
//! t^{-1/2} = (2/π) ∫_0^∞ (t + s²)^{-1} ds
//! ```
//!
//! discretized into a sum of resolvents at real nonpositive shifts
//! `z_i = -s_i²`. Each resolvent term is a shifted FOM solve through the
//! same Arnoldi decomposition.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::arnoldi::{ArnoldiDecomposition, ArnoldiOptions};
use crate::error::{LabError, Result};
use crate::linalg::{axpy, jacobi_eigh, nrm2, solve_hessenberg, sub, DenseMatrix};
use crate::operators::LinearOperator;
use crate::solvers::{fom_coefficients, reference_solve, ResidualNorm};

/// Default number of Gauss-Legendre nodes for `x^{-1/2}`.
pub const DEFAULT_NODES: usize = 40;

/// Required scalar relative error of the default rule on its interval.
pub const QUADRATURE_TARGET: f64 = 1e-8;

/// Iterations whose best Krylov error is below this multiple of `‖f(A)b‖`
/// are left out of the ratio series.
pub const RATIO_EXCLUSION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FunctionSpec {
    Reciprocal,
    InverseSqrt {
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

impl FunctionSpec {
    pub fn inverse_sqrt() -> Self {
        FunctionSpec::InverseSqrt {
            nodes: DEFAULT_NODES,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FunctionSpec::Reciprocal => "reciprocal",
            FunctionSpec::InverseSqrt { .. } => "inverse-sqrt",
        }
    }

    /// Fixes the quadrature for a spectrum contained in `[lo, hi]`.
    pub fn resolve(&self, lo: f64, hi: f64) -> Result<MatrixFunction> {
        match *self {
            FunctionSpec::Reciprocal => Ok(MatrixFunction::Reciprocal),
            FunctionSpec::InverseSqrt { nodes } => Ok(MatrixFunction::InverseSqrt(
                make_invsqrt_quadrature(nodes, lo, hi)?,
            )),
        }
    }
}

/// Resolvent quadrature `f(t) ≈ Σ_i w_i / (t − z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
    /// Largest relative error against `t^{-1/2}` over a sampling of the interval.
    pub max_rel_error: f64,
}

impl Quadrature {
    pub fn eval(&self, t: f64) -> f64 {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w / (t - z))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_m`).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_m(x), P_m'(x))` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Resolvent quadrature for `t^{-1/2}` on `[lo, hi]`.
///
/// Substituting `s = √lo · tan φ` maps the half line to `[0, π/2)` and makes
/// the integrand constant at `t = lo`; an `m`-point Gauss-Legendre rule is
/// applied in `φ`.
pub fn make_invsqrt_quadrature(m: usize, lo: f64, hi: f64) -> Result<Quadrature> {
    if m == 0 {
        return Err(LabError::invalid("quadrature needs at least one node"));
    }
    if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(LabError::invalid(format!(
            "inverse square root needs a positive interval, got [{lo}, {hi}]"
        )));
    }
    let (x, w) = gauss_legendre(m);
    let half = FRAC_PI_2 / 2.0;
    let root = lo.sqrt();
    let mut shifts = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (xi, wi) in x.iter().zip(&w) {
        let phi = half * (xi + 1.0);
        let (sin, cos) = phi.sin_cos();
        let s = root * sin / cos;
        shifts.push(-s * s);
        weights.push((2.0 / PI) * half * wi * root / (cos * cos));
    }
    let mut q = Quadrature {
        shifts,
        weights,
        interval: (lo, hi),
        max_rel_error: 0.0,
    };
    q.max_rel_error = certify(&q);
    Ok(q)
}

/// Max relative error against `t^{-1/2}` at 201 geometrically spaced points.
fn certify(q: &Quadrature) -> f64 {
    let (lo, hi) = q.interval;
    let samples = 201;
    (0..samples)
        .map(|i| {
            let t = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
            let exact = 1.0 / t.sqrt();
            ((q.eval(t) - exact) / exact).abs()
        })
        .fold(0.0, f64::max)
}

/// A function ready to be applied to Hessenberg matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixFunction {
    Reciprocal,
    InverseSqrt(Quadrature),
}

/// `β Q_k (H_k − z I)^{-1} e_1`, the FOM iterate for `(A − zI) x = b`.
pub fn shifted_fom_iterate(dec: &ArnoldiDecomposition, k: usize, shift: f64) -> Result<Vec<f64>> {
    Ok(dec.combine(&shifted_coefficients(dec, k, shift)?))
}

fn shifted_coefficients(dec: &ArnoldiDecomposition, k: usize, shift: f64) -> Result<Vec<f64>> {
    if k == 0 || k > dec.steps() {
        return Err(LabError::invalid(format!(
            "iteration {k} outside 1..={}",
            dec.steps()
        )));
    }
    let mut h = dec.square_hessenberg(k);
    for i in 0..k {
        h[(i, i)] -= shift;
    }
    let mut rhs = vec![0.0; k];
    rhs[0] = dec.beta();
    solve_hessenberg(&h, &rhs)
}

/// `β Q_k f(H_k) e_1`.
pub fn arnoldi_fa(dec: &ArnoldiDecomposition, k: usize, f: &MatrixFunction) -> Result<Vec<f64>> {
    match f {
        MatrixFunction::Reciprocal => match fom_coefficients(dec, k)? {
            Some(y) => Ok(dec.combine(&y)),
            None => Err(LabError::Singular {
                index: k - 1,
                pivot: 0.0,
            }),
        },
        MatrixFunction::InverseSqrt(q) => {
            let mut y = vec![0.0; k];
            for (&z, &w) in q.shifts.iter().zip(&q.weights) {
                axpy(w, &shifted_coefficients(dec, k, z)?, &mut y);
            }
            Ok(dec.combine(&y))
        }
    }
}

/// `f(A)b` computed densely: LU for `1/x`, eigendecomposition for `x^{-1/2}`.
pub fn reference_fab(op: &LinearOperator, b: &[f64], f: &FunctionSpec) -> Result<Vec<f64>> {
    match f {
        FunctionSpec::Reciprocal => reference_solve(op, b),
        FunctionSpec::InverseSqrt { .. } => {
            let (values, vectors) = spd_eigen(op)?;
            Ok(apply_spectral(&values, &vectors, b, |l| 1.0 / l.sqrt()))
        }
    }
}

fn spd_eigen(op: &LinearOperator) -> Result<(Vec<f64>, DenseMatrix)> {
    let eig = jacobi_eigh(&op.to_dense())?;
    if let Some(&l) = eig.values.first().filter(|l| **l <= 0.0) {
        return Err(LabError::invalid(format!(
            "inverse square root needs a positive definite operator (λ_min = {l})"
        )));
    }
    Ok((eig.values, eig.vectors))
}

fn apply_spectral(values: &[f64], v: &DenseMatrix, b: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let coeffs = v.matvec_transpose(b).expect("dimensions match");
    let scaled: Vec<f64> = coeffs.iter().zip(values).map(|(c, &l)| c * f(l)).collect();
    v.matvec(&scaled).expect("dimensions match")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatFuncRow {
    pub k: usize,
    /// `‖f(A)b − x_k‖`; infinite when `H_k` is singular.
    #[serde(serialize_with = "ser_norm")]
    pub error: ResidualNorm,
    /// `‖(I − Q_k Q_kᵀ) f(A)b‖`
    pub best: f64,
    pub ratio: Option<f64>,
}

fn ser_norm<S: serde::Serializer>(r: &ResidualNorm, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        ResidualNorm::Finite(v) => s.serialize_f64(*v),
        ResidualNorm::Infinite => s.serialize_str("inf"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatFuncReport {
    pub function: FunctionSpec,
    pub reference_norm: f64,
    pub rows: Vec<MatFuncRow>,
    pub worst_ratio: f64,
    pub quadrature_error: Option<f64>,
}

/// Arnoldi-FA error against the best approximation from the same Krylov
/// basis, for `k = 1..=k_max` (or until breakdown).
pub fn near_opt_report(
    op: &LinearOperator,
    b: &[f64],
    k_max: usize,
    f: &FunctionSpec,
    options: ArnoldiOptions,
) -> Result<MatFuncReport> {
    let (reference, func) = match f {
        FunctionSpec::Reciprocal => (reference_solve(op, b)?, MatrixFunction::Reciprocal),
        FunctionSpec::InverseSqrt { .. } => {
            let (values, vectors) = spd_eigen(op)?;
            let lo = values[0];
            let hi = values[values.len() - 1];
            (
                apply_spectral(&values, &vectors, b, |l| 1.0 / l.sqrt()),
                f.resolve(lo, hi)?,
            )
        }
    };
    let reference_norm = nrm2(&reference);
    let dec = ArnoldiDecomposition::run(op, b, k_max.min(op.dim()), options)?;

    let mut rows = Vec::with_capacity(dec.steps());
    let mut worst_ratio = 0.0_f64;
    for k in 1..=dec.steps() {
        let error = match arnoldi_fa(&dec, k, &func) {
            Ok(x) => ResidualNorm::Finite(nrm2(&sub(&reference, &x))),
            Err(LabError::Singular { .. }) => ResidualNorm::Infinite,
            Err(e) => return Err(e),
        };
        let best = nrm2(&sub(&reference, &dec.combine(&dec.project(k, &reference))));
        let ratio = (best > RATIO_EXCLUSION * reference_norm).then(|| match error {
            ResidualNorm::Finite(e) => e / best,
            ResidualNorm::Infinite => f64::INFINITY,
        });
        if let Some(r) = ratio {
            worst_ratio = worst_ratio.max(r);
        }
        rows.push(MatFuncRow {
            k,
            error,
            best,
            ratio,
        });
    }
    Ok(MatFuncReport {
        function: *f,
        reference_norm,
        rows,
        worst_ratio,
        quadrature_error: match &func {
            MatrixFunction::InverseSqrt(q) => Some(q.max_rel_error),
            MatrixFunction::Reciprocal => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::solvers::fom_iterate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for m in [1, 2, 5, 40] {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // Exact through degree 2m - 1.
            let deg = 2 * m - 1;
            let integral: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let want = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((integral - want).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn quadrature_scalar_checks() {
        let q = make_invsqrt_quadrature(DEFAULT_NODES, 1.0, 20.0).unwrap();
        assert!(q.shifts.iter().all(|z| *z <= 0.0));
        assert!((q.eval(1.0) - 1.0).abs() <= 1e-8);
        assert!((q.eval(4.0) - 0.5).abs() <= 0.5e-8);
        assert!(q.max_rel_error <= QUADRATURE_TARGET);

        let coarse = make_invsqrt_quadrature(1, 1.0, 20.0).unwrap();
        assert_eq!(coarse.len(), 1);
        assert!(coarse.max_rel_error > 1e-3);

        assert!(make_invsqrt_quadrature(0, 1.0, 2.0).is_err());
        assert!(make_invsqrt_quadrature(10, 0.0, 2.0).is_err());
        assert!(make_invsqrt_quadrature(10, -1.0, 2.0).is_err());
    }

    #[test]
    fn reciprocal_is_the_fom_iterate() {
        let op = LinearOperator::Diagonal((1..=30).map(|i| i as f64 * 0.7 - 9.9).collect());
        let b = vec![1.0; 30];
        let dec = ArnoldiDecomposition::run(&op, &b, 20, ArnoldiOptions::default()).unwrap();
        for k in 1..=20 {
            let fom = fom_iterate(&dec, &op, k).unwrap();
            match arnoldi_fa(&dec, k, &MatrixFunction::Reciprocal) {
                Ok(x) => assert_eq!(Some(x), fom.x),
                Err(_) => assert!(fom.x.is_none()),
            }
        }
    }

    #[test]
    fn scalar_inverse_sqrt() {
        let op = LinearOperator::Diagonal(vec![4.0; 3]);
        let dec = ArnoldiDecomposition::run(&op, &[1.0, 0.0, 0.0], 1, ArnoldiOptions::default()).unwrap();
        let f = FunctionSpec::inverse_sqrt().resolve(4.0, 4.0).unwrap();
        let x = arnoldi_fa(&dec, 1, &f).unwrap();
        assert!((x[0] - 0.5).abs() <= 1e-8);
        assert_eq!(&x[1..], &[0.0, 0.0]);
    }

    #[test]
    fn reference_examples() {
        let id = LinearOperator::Diagonal(vec![1.0; 3]);
        let b = [1.0, -2.0, 3.0];
        for f in [FunctionSpec::Reciprocal, FunctionSpec::inverse_sqrt()] {
            let x = reference_fab(&id, &b, &f).unwrap();
            assert!(x.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-15));
        }
        let d = LinearOperator::Diagonal(vec![4.0, 9.0]);
        let x = reference_fab(&d, &[1.0, 1.0], &FunctionSpec::inverse_sqrt()).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);

        let indefinite = LinearOperator::Diagonal(vec![-1.0, 2.0]);
        assert!(reference_fab(&indefinite, &[1.0, 1.0], &FunctionSpec::inverse_sqrt()).is_err());
        let asym = LinearOperator::Dense(
            DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap(),
        );
        assert!(reference_fab(&asym, &[1.0, 1.0], &FunctionSpec::inverse_sqrt()).is_err());
    }

    #[test]
    fn full_dimension_matches_reference() {
        let op = LinearOperator::Diagonal((1..=20).map(f64::from).collect());
        let b = vec![1.0; 20];
        let reference = reference_fab(&op, &b, &FunctionSpec::inverse_sqrt()).unwrap();
        let dec = ArnoldiDecomposition::run(&op, &b, 20, ArnoldiOptions::default()).unwrap();
        let f = FunctionSpec::inverse_sqrt().resolve(1.0, 20.0).unwrap();
        let x = arnoldi_fa(&dec, 20, &f).unwrap();
        assert!(nrm2(&sub(&x, &reference)) <= 1e-7 * nrm2(&reference));
    }

    #[test]
    fn quadrature_is_a_sum_of_shifted_fom_solves() {
        let op = LinearOperator::Diagonal((1..=40).map(|i| 0.5 * i as f64).collect());
        let b: Vec<f64> = (0..40).map(|i| 1.0 + (i % 3) as f64).collect();
        let dec = ArnoldiDecomposition::run(&op, &b, 15, ArnoldiOptions::default()).unwrap();
        let MatrixFunction::InverseSqrt(q) = FunctionSpec::inverse_sqrt().resolve(0.5, 20.0).unwrap()
        else {
            unreachable!()
        };
        for k in [1, 5, 15] {
            let fa = arnoldi_fa(&dec, k, &MatrixFunction::InverseSqrt(q.clone())).unwrap();
            let mut sum = vec![0.0; 40];
            for (&z, &w) in q.shifts.iter().zip(&q.weights) {
                axpy(w, &shifted_fom_iterate(&dec, k, z).unwrap(), &mut sum);
            }
            assert!(nrm2(&sub(&fa, &sum)) <= 1e-12 * nrm2(&fa), "k={k}");
        }
    }

    #[test]
    fn projection_is_optimal_in_the_subspace() {
        let op = LinearOperator::Diagonal((1..=25).map(f64::from).collect());
        let b = vec![1.0; 25];
        let v = reference_fab(&op, &b, &FunctionSpec::inverse_sqrt()).unwrap();
        let dec = ArnoldiDecomposition::run(&op, &b, 8, ArnoldiOptions::default()).unwrap();
        let best = nrm2(&sub(&v, &dec.combine(&dec.project(8, &v))));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(best <= nrm2(&sub(&v, &dec.combine(&c))) + 1e-14);
        }
        let p = dec.project(8, &v);
        assert!((dot(&p, &p) - nrm2(&v).powi(2) + best * best).abs() < 1e-12);
    }

    #[test]
    fn near_opt_on_spd_diagonal() {
        let op = LinearOperator::Diagonal((1..=20).map(f64::from).collect());
        let b = vec![1.0; 20];
        for f in [FunctionSpec::Reciprocal, FunctionSpec::inverse_sqrt()] {
            let rep = near_opt_report(&op, &b, 20, &f, ArnoldiOptions::default()).unwrap();
            assert_eq!(rep.rows.len(), 20);
            assert!(rep.worst_ratio < 100.0, "{}: {}", f.label(), rep.worst_ratio);
            for row in &rep.rows {
                if let Some(r) = row.ratio {
                    assert!(r >= 1.0 - 1e-10);
                }
            }
            assert!(rep.rows.windows(2).all(|w| w[1].best <= w[0].best + 1e-14));
            let last = rep.rows.last().unwrap();
            assert!(last.error.value().unwrap() <= 1e-9 * rep.reference_norm);
            assert!(last.best <= 1e-9 * rep.reference_norm);
            assert_eq!(last.ratio, None);
        }
    }
}
