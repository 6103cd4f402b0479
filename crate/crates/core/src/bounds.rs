//! Checks of the near-optimality bound
//! `min_{j≤k} ‖r_j^F‖ ≤ √(k+1)·‖r_k^G‖`, its sharpness, and the error-norm
//! version `min_{j≤k} ‖A⁻¹b − x_j^F‖ ≤ √(k+1)·κ(A)·‖A⁻¹b − x_k^G‖`.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::cond2_estimate;
use crate::operators::{build_prescribed_instance, LinearOperator, PrescribedInstance};
use crate::solvers::{run_history, ConvergenceHistory, HistoryOptions, ResidualNorm};

/// A bound check passes when every ratio is at most `1 + BOUND_SLACK`.
pub const BOUND_SLACK: f64 = 1e-10;

/// Iterations with `‖r_k^G‖ ≤ this·β` are left out of the ratio statistics.
pub const DEFAULT_RESIDUAL_EXCLUSION: f64 = 1e-14;

/// Same for error norms, relative to `‖A⁻¹b‖`.
pub const DEFAULT_ERROR_EXCLUSION: f64 = 1e-12;

/// Safety factor applied to estimated condition numbers.
pub const KAPPA_SAFETY: f64 = 1.01;

/// Running minimum; `Infinite` entries never lower it.
pub fn best_so_far(seq: &[ResidualNorm]) -> Vec<ResidualNorm> {
    let mut best = ResidualNorm::Infinite;
    seq.iter()
        .map(|&r| {
            best = best.min(r);
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub k: usize,
    #[serde(serialize_with = "ser_norm")]
    pub fom_best: ResidualNorm,
    pub gmres: f64,
    /// `√(k+1)·‖r_k^G‖`
    pub bound: f64,
    /// `fom_best / bound`; `None` in the converged tail.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub worst_ratio: f64,
    pub worst_k: Option<usize>,
    pub exclusion: f64,
    pub passed: bool,
}

fn ser_norm<S: serde::Serializer>(r: &ResidualNorm, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        ResidualNorm::Finite(v) => s.serialize_f64(*v),
        ResidualNorm::Infinite => s.serialize_str("inf"),
    }
}

fn ratio_of(best: ResidualNorm, bound: f64) -> f64 {
    match best {
        ResidualNorm::Finite(v) => v / bound,
        ResidualNorm::Infinite => f64::INFINITY,
    }
}

/// Evaluates the `√(k+1)` bound on directly computed norms.
pub fn check_main_bound(h: &ConvergenceHistory) -> BoundReport {
    check_main_bound_with(h, DEFAULT_RESIDUAL_EXCLUSION)
}

/// As [`check_main_bound`], skipping iterations with `‖r_k^G‖ ≤ exclusion·β`.
pub fn check_main_bound_with(h: &ConvergenceHistory, exclusion: f64) -> BoundReport {
    let best = best_so_far(&h.fom_direct());
    let mut worst_ratio = 0.0;
    let mut worst_k = None;
    let rows = h
        .records
        .iter()
        .zip(best)
        .map(|(rec, fom_best)| {
            let bound = ((rec.k + 1) as f64).sqrt() * rec.gmres_direct;
            let ratio = (rec.gmres_direct > exclusion * h.beta).then(|| ratio_of(fom_best, bound));
            if let Some(r) = ratio {
                if worst_k.is_none() || r > worst_ratio {
                    worst_ratio = r;
                    worst_k = Some(rec.k);
                }
            }
            BoundRow {
                k: rec.k,
                fom_best,
                gmres: rec.gmres_direct,
                bound,
                ratio,
            }
        })
        .collect();
    BoundReport {
        rows,
        worst_ratio,
        worst_k,
        exclusion,
        passed: worst_ratio <= 1.0 + BOUND_SLACK,
    }
}

/// The all-ones instance together with its history and bound report.
#[derive(Debug, Clone)]
pub struct Sharpness {
    pub instance: PrescribedInstance,
    pub history: ConvergenceHistory,
    pub report: BoundReport,
}

impl Sharpness {
    /// Ratio at iteration `k`, where equality is attained.
    pub fn final_ratio(&self) -> Option<f64> {
        let k = self.instance.dim() - 1;
        self.report.rows.get(k).and_then(|r| r.ratio)
    }
}

/// Builds the `(k+1)`-dimensional instance with `‖r_j^F‖ = 1` for all `j`
/// and runs the full pipeline; the bound holds with equality at step `k`.
pub fn sharpness_instance(k: usize) -> Result<Sharpness> {
    if k == 0 {
        return Err(LabError::invalid("sharpness needs k >= 1"));
    }
    let instance = build_prescribed_instance(&vec![1.0; k + 1])?;
    let options = HistoryOptions {
        convergence_tol: 0.0,
        ..HistoryOptions::default()
    };
    let history = run_history(&instance.operator(), &instance.rhs, k + 1, &options)?;
    let report = check_main_bound(&history);
    Ok(Sharpness {
        instance,
        history,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "source")]
pub enum KappaSource {
    /// `max|λ|/min|λ|` of a diagonal operator.
    Exact,
    /// Power/inverse iteration estimate times the safety factor.
    Estimated { raw: f64, safety: f64 },
    /// Supplied by the caller.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub value: f64,
    pub source: KappaSource,
}

/// Exact κ for diagonal operators, otherwise `1.01 × cond2_estimate`.
pub fn kappa_for(op: &LinearOperator, tol: f64) -> Result<Kappa> {
    if let Some(value) = op.exact_condition_number() {
        return Ok(Kappa {
            value,
            source: KappaSource::Exact,
        });
    }
    let raw = cond2_estimate(&op.to_dense(), tol)?;
    Ok(Kappa {
        value: raw * KAPPA_SAFETY,
        source: KappaSource::Estimated {
            raw,
            safety: KAPPA_SAFETY,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub k: usize,
    #[serde(serialize_with = "ser_norm")]
    pub fom_error: ResidualNorm,
    pub gmres_error: f64,
    #[serde(serialize_with = "ser_norm")]
    pub fom_best: ResidualNorm,
    /// `√(k+1)·κ·‖A⁻¹b − x_k^G‖`
    pub bound: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub kappa: Kappa,
    pub worst_ratio: f64,
    pub worst_k: Option<usize>,
    /// Iterations where the FOM error beat the GMRES error. Recorded only.
    pub fom_smaller_count: usize,
    pub passed: bool,
}

pub fn check_error_bound(h: &ConvergenceHistory, kappa: Kappa) -> Result<ErrorReport> {
    check_error_bound_with(h, kappa, DEFAULT_ERROR_EXCLUSION)
}

/// Evaluates the error-norm bound, skipping iterations with
/// `‖A⁻¹b − x_k^G‖ < exclusion·‖A⁻¹b‖`.
pub fn check_error_bound_with(
    h: &ConvergenceHistory,
    kappa: Kappa,
    exclusion: f64,
) -> Result<ErrorReport> {
    let (Some(solution_norm), true) = (h.solution_norm, h.has_errors()) else {
        return Err(LabError::invalid("history carries no error norms"));
    };
    if kappa.value.is_nan() || kappa.value < 1.0 {
        return Err(LabError::invalid(format!(
            "condition number {} is below 1",
            kappa.value
        )));
    }
    let fom: Vec<ResidualNorm> = h.records.iter().map(|r| r.fom_error.expect("checked")).collect();
    let best = best_so_far(&fom);
    let mut worst_ratio = 0.0;
    let mut worst_k = None;
    let mut fom_smaller_count = 0;
    let rows = h
        .records
        .iter()
        .zip(best)
        .map(|(rec, fom_best)| {
            let gmres_error = rec.gmres_error.expect("checked");
            let fom_error = rec.fom_error.expect("checked");
            if fom_error.value().is_some_and(|f| f < gmres_error) {
                fom_smaller_count += 1;
            }
            let bound = ((rec.k + 1) as f64).sqrt() * kappa.value * gmres_error;
            let ratio = (gmres_error >= exclusion * solution_norm).then(|| ratio_of(fom_best, bound));
            if let Some(r) = ratio {
                if worst_k.is_none() || r > worst_ratio {
                    worst_ratio = r;
                    worst_k = Some(rec.k);
                }
            }
            ErrorRow {
                k: rec.k,
                fom_error,
                gmres_error,
                fom_best,
                bound,
                ratio,
            }
        })
        .collect();
    Ok(ErrorReport {
        rows,
        kappa,
        worst_ratio,
        worst_k,
        fom_smaller_count,
        passed: worst_ratio <= 1.0 + BOUND_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{gen_spectrum_operator, ones_vector, SpectrumSpec};
    use proptest::prelude::*;

    fn fin(v: f64) -> ResidualNorm {
        ResidualNorm::Finite(v)
    }

    #[test]
    fn best_so_far_examples() {
        let seq: Vec<_> = [3.0, 1.0, 4.0, 1.0, 5.0].into_iter().map(fin).collect();
        let want: Vec<_> = [3.0, 1.0, 1.0, 1.0, 1.0].into_iter().map(fin).collect();
        assert_eq!(best_so_far(&seq), want);
        assert_eq!(
            best_so_far(&[ResidualNorm::Infinite, fin(2.0)]),
            vec![ResidualNorm::Infinite, fin(2.0)]
        );
        assert_eq!(best_so_far(&[fin(1.0); 3]), vec![fin(1.0); 3]);
        assert_eq!(
            best_so_far(&[fin(1.0), ResidualNorm::Infinite]),
            vec![fin(1.0), fin(1.0)]
        );
    }

    #[test]
    fn sharpness_small_cases() {
        let s = sharpness_instance(1).unwrap();
        assert_eq!(s.instance.dim(), 2);
        let row = &s.report.rows[1];
        assert!((row.gmres - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(row.fom_best, fin(1.0));
        for k in [5, 10] {
            let s = sharpness_instance(k).unwrap();
            assert!((s.final_ratio().unwrap() - 1.0).abs() <= 1e-12);
            let g = s.report.rows[k].gmres;
            assert!((g * ((k + 1) as f64).sqrt() - 1.0).abs() <= 1e-12);
            assert!(s.report.passed);
        }
        assert!(sharpness_instance(0).is_err());
    }

    #[test]
    fn identity_operator_converged_tail_is_excluded() {
        let op = LinearOperator::Diagonal(vec![1.0; 4]);
        let h = run_history(&op, &[1.0; 4], 4, &HistoryOptions::default()).unwrap();
        let rep = check_main_bound(&h);
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[1].ratio, None);
        assert_eq!(rep.worst_ratio, 1.0);
        assert!(rep.passed);
    }

    #[test]
    fn error_bound_identity_kappa_one() {
        let op = LinearOperator::Diagonal(vec![1.0; 3]);
        let opts = HistoryOptions {
            with_errors: true,
            ..HistoryOptions::default()
        };
        let h = run_history(&op, &[1.0, 2.0, 2.0], 3, &opts).unwrap();
        let kappa = kappa_for(&op, 1e-12).unwrap();
        assert_eq!(kappa.value, 1.0);
        let rep = check_error_bound(&h, kappa).unwrap();
        assert!(rep.passed);
        // A = I: errors equal residuals.
        assert_eq!(rep.rows[0].gmres_error, h.records[0].gmres_direct);

        let no_err = run_history(&op, &[1.0, 2.0, 2.0], 3, &HistoryOptions::default()).unwrap();
        assert!(check_error_bound(&no_err, kappa).is_err());
        let bad = Kappa {
            value: 0.5,
            source: KappaSource::Given,
        };
        assert!(check_error_bound(&h, bad).is_err());
    }

    #[test]
    fn bound_on_spectrum_operator() {
        let op = gen_spectrum_operator(&SpectrumSpec::two_intervals_500()).unwrap();
        let opts = HistoryOptions {
            with_errors: true,
            ..HistoryOptions::default()
        };
        let h = run_history(&op, &ones_vector(500).unwrap(), 80, &opts).unwrap();
        let rep = check_main_bound(&h);
        assert!(rep.passed, "worst {}", rep.worst_ratio);
        let err = check_error_bound(&h, kappa_for(&op, 1e-12).unwrap()).unwrap();
        assert_eq!(err.kappa.source, KappaSource::Exact);
        assert!(err.passed);
    }

    proptest! {
        #[test]
        fn best_so_far_is_a_running_minimum(v in proptest::collection::vec(proptest::option::of(0.0f64..10.0), 1..30)) {
            let seq: Vec<ResidualNorm> = v.iter()
                .map(|x| x.map_or(ResidualNorm::Infinite, ResidualNorm::Finite)).collect();
            let best = best_so_far(&seq);
            for k in 0..seq.len() {
                let want = v[..=k].iter().flatten().cloned().fold(f64::INFINITY, f64::min);
                match best[k] {
                    ResidualNorm::Finite(b) => prop_assert_eq!(b, want),
                    ResidualNorm::Infinite => prop_assert!(want.is_infinite()),
                }
            }
        }
    }
}
