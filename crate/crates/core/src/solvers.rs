//! FOM and GMRES iterates on top of an Arnoldi decomposition, the ϑ
//! sequence, and the conversions between FOM and GMRES residual norms.
//!
//! All iterates assume the zero initial guess, so `r_0 = b` and
//! `‖r_0^F‖ = ‖r_0^G‖ = β`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arnoldi::{ArnoldiDecomposition, ArnoldiOptions};
use crate::error::{LabError, Result};
use crate::linalg::{givens, lu_solve, nrm2, solve_hessenberg, sub, DenseMatrix, SINGULAR_TOL};
use crate::operators::LinearOperator;

/// A residual norm, or the marker used when `H_k` is singular and the FOM
/// iterate does not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualNorm {
    Finite(f64),
    Infinite,
}

impl ResidualNorm {
    pub fn value(self) -> Option<f64> {
        match self {
            ResidualNorm::Finite(v) => Some(v),
            ResidualNorm::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ResidualNorm::Infinite)
    }

    /// `1/‖r‖²` with `1/∞ = 0`.
    pub fn inverse_square(self) -> f64 {
        match self {
            ResidualNorm::Finite(v) => 1.0 / (v * v),
            ResidualNorm::Infinite => 0.0,
        }
    }

    /// Smaller of the two; `Infinite` never wins.
    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (ResidualNorm::Finite(a), ResidualNorm::Finite(b)) => ResidualNorm::Finite(a.min(b)),
            (ResidualNorm::Infinite, x) | (x, ResidualNorm::Infinite) => x,
        }
    }
}

impl fmt::Display for ResidualNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidualNorm::Finite(v) => write!(f, "{v:e}"),
            ResidualNorm::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for ResidualNorm {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" {
            return Ok(ResidualNorm::Infinite);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(ResidualNorm::Finite)
            .ok_or_else(|| LabError::invalid(format!("not a residual norm: `{s}`")))
    }
}

/// FOM iterate at step `k`.
#[derive(Debug, Clone)]
pub struct FomStep {
    pub k: usize,
    /// `H_k y = β e_1`; `None` when `H_k` is singular.
    pub y: Option<Vec<f64>>,
    pub x: Option<Vec<f64>>,
    /// `‖b − A x‖`, recomputed explicitly.
    pub residual: ResidualNorm,
    /// `h_{k+1,k} · |y_k|`.
    pub estimate: ResidualNorm,
}

/// GMRES iterate at step `k`.
#[derive(Debug, Clone)]
pub struct GmresStep {
    pub k: usize,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// `‖b − A x‖`, recomputed explicitly.
    pub residual: f64,
    /// Magnitude of the last rotated right-hand-side entry.
    pub estimate: f64,
}

fn check_step(dec: &ArnoldiDecomposition, k: usize) -> Result<()> {
    if k == 0 || k > dec.steps() {
        return Err(LabError::invalid(format!(
            "iteration {k} outside 1..={}",
            dec.steps()
        )));
    }
    Ok(())
}

fn direct_residual(op: &LinearOperator, b: &[f64], x: &[f64]) -> Result<f64> {
    Ok(nrm2(&sub(b, &op.apply(x)?)))
}

/// Solves the projected FOM system `H_k y = β e_1`.
pub fn fom_coefficients(dec: &ArnoldiDecomposition, k: usize) -> Result<Option<Vec<f64>>> {
    check_step(dec, k)?;
    let mut rhs = vec![0.0; k];
    rhs[0] = dec.beta();
    match solve_hessenberg(&dec.square_hessenberg(k), &rhs) {
        Ok(y) => Ok(Some(y)),
        Err(LabError::Singular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `x_k^F = β Q_k H_k^{-1} e_1`.
pub fn fom_iterate(dec: &ArnoldiDecomposition, op: &LinearOperator, k: usize) -> Result<FomStep> {
    let Some(y) = fom_coefficients(dec, k)? else {
        return Ok(FomStep {
            k,
            y: None,
            x: None,
            residual: ResidualNorm::Infinite,
            estimate: ResidualNorm::Infinite,
        });
    };
    let x = dec.combine(&y);
    let residual = ResidualNorm::Finite(direct_residual(op, dec.rhs(), &x)?);
    let estimate = ResidualNorm::Finite(dec.h(k + 1, k) * y[k - 1].abs());
    Ok(FomStep {
        k,
        y: Some(y),
        x: Some(x),
        residual,
        estimate,
    })
}

/// `x_k^G = β Q_k H_{k+1,k}^† e_1`, via Givens QR of the Hessenberg matrix.
pub fn gmres_iterate(
    dec: &ArnoldiDecomposition,
    op: &LinearOperator,
    k: usize,
) -> Result<GmresStep> {
    check_step(dec, k)?;
    let mut r = dec.hessenberg(k);
    let mut g = vec![0.0; k + 1];
    g[0] = dec.beta();
    let mut rotations = Vec::with_capacity(k);
    let mut scale = 0.0_f64;
    for j in 0..k {
        let mut col = r.column(j);
        scale = col.iter().fold(scale, |m, x| m.max(x.abs()));
        for rot in &rotations {
            crate::linalg::GivensRotation::apply(rot, &mut col);
        }
        let (mut rot, rjj) = givens(col[j], col[j + 1])?;
        rot.i = j;
        col[j] = rjj;
        col[j + 1] = 0.0;
        rot.apply(&mut g);
        rotations.push(rot);
        for (i, v) in col.into_iter().enumerate() {
            r[(i, j)] = v;
        }
    }
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        let pivot = r[(i, i)];
        if pivot.abs() <= SINGULAR_TOL * scale {
            return Err(LabError::Singular { index: i, pivot });
        }
        let s: f64 = (i + 1..k).map(|c| r[(i, c)] * y[c]).sum();
        y[i] = (y[i] - s) / pivot;
    }
    let x = dec.combine(&y);
    let residual = direct_residual(op, dec.rhs(), &x)?;
    Ok(GmresStep {
        k,
        y,
        x,
        residual,
        estimate: g[k].abs(),
    })
}

/// `ϑ_1, ϑ_2, …` with `ϑ_1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSequence {
    values: Vec<f64>,
}

impl ThetaSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(LabError::invalid("a ϑ sequence starts with ϑ_1 = 1"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices (1-based) with `ϑ_j = 0`, i.e. singular `H_{j-1}`.
    pub fn zeros(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 0.0)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Evaluates `ϑ_{k+1} = -(1/h_{k+1,k}) Σ_{j≤k} ϑ_j h_{j,k}` for a
/// `(k+1) x k` Hessenberg matrix.
pub fn theta_sequence(h: &DenseMatrix) -> Result<ThetaSequence> {
    let k = h.cols();
    if h.rows() != k + 1 {
        return Err(LabError::invalid(format!(
            "ϑ recurrence needs a (k+1)xk matrix, got {}x{}",
            h.rows(),
            k
        )));
    }
    let mut theta = Vec::with_capacity(k + 1);
    theta.push(1.0);
    for col in 0..k {
        let sub = h[(col + 1, col)];
        if sub == 0.0 {
            return Err(LabError::invalid(format!(
                "zero subdiagonal h_({},{}) inside the ϑ recurrence",
                col + 2,
                col + 1
            )));
        }
        let s: f64 = theta.iter().enumerate().map(|(j, t)| t * h[(j, col)]).sum();
        theta.push(-s / sub);
    }
    ThetaSequence::new(theta)
}

/// FOM and GMRES residual norms from ϑ:
/// `‖r_k^F‖ = β/|ϑ_{k+1}|` and `‖r_k^G‖ = β (Σ_{j≤k+1} ϑ_j²)^{-1/2}`.
pub fn norms_from_theta(theta: &ThetaSequence, beta: f64) -> (Vec<ResidualNorm>, Vec<f64>) {
    let mut fom = Vec::with_capacity(theta.len());
    let mut gmres = Vec::with_capacity(theta.len());
    let mut sum = 0.0;
    for &t in theta.values() {
        fom.push(if t == 0.0 {
            ResidualNorm::Infinite
        } else {
            ResidualNorm::Finite(beta / t.abs())
        });
        sum += t * t;
        gmres.push(beta / sum.sqrt());
    }
    (fom, gmres)
}

/// `‖r_k^G‖ = (Σ_{j≤k} 1/‖r_j^F‖²)^{-1/2}`, with `1/∞ = 0`.
pub fn gmres_from_fom(fom: &[ResidualNorm]) -> Result<Vec<f64>> {
    match fom.first() {
        Some(ResidualNorm::Finite(v)) if *v > 0.0 => {}
        _ => {
            return Err(LabError::invalid(
                "the first FOM residual norm must be finite and positive",
            ))
        }
    }
    let mut sum = 0.0;
    Ok(fom
        .iter()
        .map(|f| {
            sum += f.inverse_square();
            1.0 / sum.sqrt()
        })
        .collect())
}

/// Slack for roundoff when checking that GMRES norms do not increase.
const MONOTONE_SLACK: f64 = 1e-12;

/// `‖r_k^F‖ = ‖r_k^G‖ / √(1 − (‖r_k^G‖/‖r_{k−1}^G‖)²)`.
///
/// A ratio of exactly one (or within 1e-12 above it) is stagnation and maps
/// to `Infinite`; a zero predecessor means GMRES already converged and the
/// FOM norm is zero as well.
pub fn fom_from_gmres(gmres: &[f64]) -> Result<Vec<ResidualNorm>> {
    let Some(&first) = gmres.first() else {
        return Ok(Vec::new());
    };
    if first.is_nan() || first <= 0.0 || gmres.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(LabError::invalid("GMRES residual norms must be finite, nonnegative, and start positive"));
    }
    let mut out = vec![ResidualNorm::Finite(first)];
    for (k, w) in gmres.windows(2).enumerate() {
        let (prev, cur) = (w[0], w[1]);
        if cur > prev * (1.0 + MONOTONE_SLACK) {
            return Err(LabError::invalid(format!(
                "GMRES residual norm increases at iteration {}",
                k + 1
            )));
        }
        if prev == 0.0 {
            out.push(ResidualNorm::Finite(0.0));
            continue;
        }
        let ratio = cur / prev;
        let gap = 1.0 - ratio * ratio;
        out.push(if gap <= 0.0 {
            ResidualNorm::Infinite
        } else {
            ResidualNorm::Finite(cur / gap.sqrt())
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoryOptions {
    pub arnoldi: ArnoldiOptions,
    /// Record `‖A⁻¹b − x‖` for both methods.
    pub with_errors: bool,
    /// Stop once the GMRES residual is at most this multiple of β.
    pub convergence_tol: f64,
}

impl Default for HistoryOptions {
    fn default() -> Self {
        Self {
            arnoldi: ArnoldiOptions::default(),
            with_errors: false,
            convergence_tol: 1e-14,
        }
    }
}

/// One iteration of a convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub k: usize,
    pub fom_direct: ResidualNorm,
    pub fom_estimate: ResidualNorm,
    pub fom_theta: ResidualNorm,
    pub gmres_direct: f64,
    pub gmres_estimate: f64,
    pub gmres_theta: f64,
    pub fom_error: Option<ResidualNorm>,
    pub gmres_error: Option<f64>,
}

/// Per-iteration FOM/GMRES norms for `k = 0, 1, …`.
#[derive(Debug, Clone)]
pub struct ConvergenceHistory {
    pub beta: f64,
    pub records: Vec<HistoryRecord>,
    /// ϑ up to the last step before breakdown.
    pub theta: ThetaSequence,
    pub breakdown: Option<usize>,
    /// `‖A⁻¹b‖`, when error norms were requested.
    pub solution_norm: Option<f64>,
    pub orthogonality_error: f64,
    pub relation_residual: f64,
    pub hessenberg_norm: f64,
}

impl ConvergenceHistory {
    pub fn fom_direct(&self) -> Vec<ResidualNorm> {
        self.records.iter().map(|r| r.fom_direct).collect()
    }

    pub fn gmres_direct(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gmres_direct).collect()
    }

    pub fn has_errors(&self) -> bool {
        self.records.iter().all(|r| r.fom_error.is_some() && r.gmres_error.is_some())
    }

    /// Last iteration index.
    pub fn last_k(&self) -> usize {
        self.records.len() - 1
    }
}

/// Reference solution `A⁻¹ b`.
pub fn reference_solve(op: &LinearOperator, b: &[f64]) -> Result<Vec<f64>> {
    match op {
        LinearOperator::Diagonal(d) => {
            if let Some(i) = d.iter().position(|x| *x == 0.0) {
                return Err(LabError::Singular { index: i, pivot: 0.0 });
            }
            Ok(d.iter().zip(b).map(|(a, x)| x / a).collect())
        }
        _ => lu_solve(&op.to_dense(), b),
    }
}

/// Runs Arnoldi to `k_max` (or breakdown, or convergence) and records FOM
/// and GMRES norms both directly and through the ϑ recurrence.
pub fn run_history(
    op: &LinearOperator,
    b: &[f64],
    k_max: usize,
    options: &HistoryOptions,
) -> Result<ConvergenceHistory> {
    let reference = if options.with_errors {
        Some(reference_solve(op, b)?)
    } else {
        None
    };
    let solution_norm = reference.as_deref().map(nrm2);
    let error_of = |x: &[f64]| reference.as_deref().map(|r| nrm2(&sub(r, x)));

    let mut dec = ArnoldiDecomposition::start(op, b, options.arnoldi)?;
    let beta = dec.beta();
    let mut records = vec![HistoryRecord {
        k: 0,
        fom_direct: ResidualNorm::Finite(beta),
        fom_estimate: ResidualNorm::Finite(beta),
        fom_theta: ResidualNorm::Finite(beta),
        gmres_direct: beta,
        gmres_estimate: beta,
        gmres_theta: beta,
        fom_error: solution_norm.map(ResidualNorm::Finite),
        gmres_error: solution_norm,
    }];
    let mut theta = vec![1.0];
    let mut gmres_theta_sum = 1.0;

    let k_max = k_max.min(op.dim());
    while dec.steps() < k_max && !dec.is_broken_down() {
        dec.extend(op)?;
        let k = dec.steps();
        let fom = fom_iterate(&dec, op, k)?;
        let gmres = gmres_iterate(&dec, op, k)?;

        let (fom_theta, gmres_theta) = if dec.is_broken_down() {
            // Invariant subspace: both iterates are exact.
            (ResidualNorm::Finite(0.0), 0.0)
        } else {
            let s: f64 = theta.iter().enumerate().map(|(j, t)| t * dec.h(j + 1, k)).sum();
            let next = -s / dec.h(k + 1, k);
            theta.push(next);
            gmres_theta_sum += next * next;
            let f = if next == 0.0 {
                ResidualNorm::Infinite
            } else {
                ResidualNorm::Finite(beta / next.abs())
            };
            (f, beta / gmres_theta_sum.sqrt())
        };

        records.push(HistoryRecord {
            k,
            fom_direct: fom.residual,
            fom_estimate: fom.estimate,
            fom_theta,
            gmres_direct: gmres.residual,
            gmres_estimate: gmres.estimate,
            gmres_theta,
            fom_error: reference.as_ref().map(|_| match &fom.x {
                Some(x) => ResidualNorm::Finite(error_of(x).expect("reference present")),
                None => ResidualNorm::Infinite,
            }),
            gmres_error: error_of(&gmres.x),
        });
        if gmres.residual <= options.convergence_tol * beta {
            break;
        }
    }

    let k = dec.steps();
    Ok(ConvergenceHistory {
        beta,
        records,
        theta: ThetaSequence::new(theta)?,
        breakdown: dec.breakdown_step(),
        solution_norm,
        orthogonality_error: dec.orthogonality_error(),
        relation_residual: dec.relation_residual(op)?,
        hessenberg_norm: dec.hessenberg(k).frobenius_norm(),
    })
}

/// Tolerances for the residual identities, all relative to β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityTolerances {
    /// ϑ-based norms and the `Σ 1/‖r^F‖²` formula.
    pub identity: f64,
    /// The GMRES-to-FOM formula, which amplifies error near stagnation.
    pub residual_formula: f64,
    /// Records with `‖r_k^G‖ < window·β` are skipped.
    pub window: f64,
    /// The GMRES-to-FOM check only runs where `‖r_k^G‖/‖r_{k−1}^G‖` is at most this.
    pub stagnation: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            identity: 1e-8,
            residual_formula: 1e-6,
            window: 1e-10,
            stagnation: 0.999,
        }
    }
}

/// Worst β-relative discrepancies between direct and derived norms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IdentityReport {
    pub fom_theta: f64,
    pub gmres_theta: f64,
    pub gmres_from_fom: f64,
    pub fom_from_gmres: f64,
    pub fom_estimate: f64,
    pub gmres_estimate: f64,
    /// Records that entered at least one comparison.
    pub checked: usize,
    pub passed: bool,
}

/// Compares every recurrence-based norm with its directly computed twin.
pub fn check_identities(h: &ConvergenceHistory, tol: &IdentityTolerances) -> Result<IdentityReport> {
    let beta = h.beta;
    let fom = h.fom_direct();
    let gmres = h.gmres_direct();
    let from_fom = gmres_from_fom(&fom)?;
    let from_gmres = fom_from_gmres(&monotone_envelope(&gmres))?;
    let gap = |a: f64, b: f64| (a - b).abs() / beta;

    let mut rep = IdentityReport::default();
    for (i, r) in h.records.iter().enumerate() {
        if r.gmres_direct < tol.window * beta {
            continue;
        }
        rep.checked += 1;
        rep.gmres_theta = rep.gmres_theta.max(gap(r.gmres_direct, r.gmres_theta));
        rep.gmres_estimate = rep.gmres_estimate.max(gap(r.gmres_direct, r.gmres_estimate));
        rep.gmres_from_fom = rep.gmres_from_fom.max(gap(r.gmres_direct, from_fom[i]));
        if let ResidualNorm::Finite(direct) = r.fom_direct {
            if let ResidualNorm::Finite(t) = r.fom_theta {
                rep.fom_theta = rep.fom_theta.max(gap(direct, t));
            }
            if let ResidualNorm::Finite(e) = r.fom_estimate {
                rep.fom_estimate = rep.fom_estimate.max(gap(direct, e));
            }
            let stagnation_ok = i == 0 || gmres[i] <= tol.stagnation * gmres[i - 1];
            if let (true, ResidualNorm::Finite(f)) = (stagnation_ok, from_gmres[i]) {
                rep.fom_from_gmres = rep.fom_from_gmres.max(gap(direct, f));
            }
        }
    }
    rep.passed = rep.fom_theta <= tol.identity
        && rep.gmres_theta <= tol.identity
        && rep.gmres_from_fom <= tol.identity
        && rep.fom_estimate <= tol.identity
        && rep.gmres_estimate <= tol.identity
        && rep.fom_from_gmres <= tol.residual_formula;
    Ok(rep)
}

/// Clamps roundoff-level increases so a directly computed GMRES sequence is
/// exactly non-increasing.
fn monotone_envelope(g: &[f64]) -> Vec<f64> {
    let mut out = g.to_vec();
    for i in 1..out.len() {
        out[i] = out[i].min(out[i - 1]);
    }
    out
}
