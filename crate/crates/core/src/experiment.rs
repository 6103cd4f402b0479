//! Experiment configuration, figure presets and the end-to-end run.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arnoldi::ArnoldiOptions;
use crate::bounds::{
    best_so_far, check_error_bound_with, check_main_bound_with, kappa_for, BoundReport,
    ErrorReport, Kappa, KappaSource, DEFAULT_ERROR_EXCLUSION, DEFAULT_RESIDUAL_EXCLUSION,
};
use crate::error::{LabError, Result};
use crate::matfunc::{near_opt_report, FunctionSpec, MatFuncReport};
use crate::operators::{
    build_prescribed_instance, gen_conjugated_spectrum_operator, gen_random_sparse,
    gen_spectrum_operator, read_matrix_market, LinearOperator, RandomSparseSpec, RhsRule,
    SpectrumSpec,
};
use crate::report::{format_matfunc_csv, format_series_csv, write_atomic};
use crate::solvers::{
    check_identities, run_history, ConvergenceHistory, HistoryOptions, IdentityReport,
    IdentityTolerances,
};
use crate::svg::{render_svg, LineStyle, PlotSpec, Series};

/// Default number of Arnoldi steps for the figure presets.
pub const PRESET_K_MAX: usize = 80;

/// Output directory used when neither the config nor the caller sets one.
pub const DEFAULT_OUTPUT_DIR: &str = "krylov-lab-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    MatrixMarket {
        path: PathBuf,
    },
    Spectrum {
        intervals: Vec<crate::operators::SpectrumInterval>,
        /// Conjugate the diagonal by a seeded orthogonal matrix.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        conjugate_seed: Option<u64>,
    },
    Prescribed {
        f: Vec<f64>,
    },
    RandomSparse(RandomSparseSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub residual_formula: f64,
    pub breakdown: f64,
    pub convergence: f64,
    /// Bound ratios are skipped where `‖r_k^G‖ < bound_exclusion·β`.
    pub bound_exclusion: f64,
    /// Error ratios are skipped where `‖e_k^G‖ < error_exclusion·‖A⁻¹b‖`.
    pub error_exclusion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let id = IdentityTolerances::default();
        Self {
            identity: id.identity,
            residual_formula: id.residual_formula,
            breakdown: ArnoldiOptions::default().breakdown_tol,
            convergence: HistoryOptions::default().convergence_tol,
            bound_exclusion: DEFAULT_RESIDUAL_EXCLUSION,
            error_exclusion: DEFAULT_ERROR_EXCLUSION,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used for the run directory and file names.
    pub name: String,
    pub problem: ProblemSource,
    /// Defaults to `ones`; prescribed instances carry their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<RhsRule>,
    pub k_max: usize,
    #[serde(default = "default_true")]
    pub reorthogonalize: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub plot: bool,
    /// Record error norms and check the error bound.
    #[serde(default)]
    pub errors: bool,
    /// κ for the error bound; computed from the operator when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matfunc: Option<FunctionSpec>,
}

fn config_err(field: &str, message: impl Into<String>) -> LabError {
    LabError::Config {
        field: field.to_owned(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative Matrix Market path is taken relative to
    /// the config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            LabError::Parse { line, message } => LabError::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        if let ProblemSource::MatrixMarket { path: mm } = &mut cfg.problem {
            if mm.is_relative() {
                if let Some(dir) = path.parent() {
                    *mm = dir.join(&*mm);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            || self.name.starts_with('.')
        {
            return Err(config_err(
                "name",
                format!("`{}` must be nonempty and use only [A-Za-z0-9._-]", self.name),
            ));
        }
        if self.k_max == 0 {
            return Err(config_err("k_max", "must be at least 1"));
        }
        let t = &self.tolerances;
        for (field, v) in [
            ("tolerances.identity", t.identity),
            ("tolerances.residual_formula", t.residual_formula),
            ("tolerances.breakdown", t.breakdown),
            ("tolerances.convergence", t.convergence),
            ("tolerances.bound_exclusion", t.bound_exclusion),
            ("tolerances.error_exclusion", t.error_exclusion),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(field, format!("must be positive, got {v}")));
            }
        }
        if let Some(k) = self.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(config_err("kappa", format!("must be a finite value >= 1, got {k}")));
            }
            if !self.errors {
                return Err(config_err("kappa", "only used together with `errors: true`"));
            }
        }
        if let Some(FunctionSpec::InverseSqrt { nodes: 0 }) = self.matfunc {
            return Err(config_err("matfunc.nodes", "must be at least 1"));
        }
        match &self.problem {
            ProblemSource::MatrixMarket { path } => {
                if path.as_os_str().is_empty() {
                    return Err(config_err("problem.matrix_market.path", "is empty"));
                }
            }
            ProblemSource::Spectrum { intervals, .. } => {
                SpectrumSpec {
                    intervals: intervals.clone(),
                }
                .validate()
                .map_err(|e| config_err("problem.spectrum.intervals", e.to_string()))?;
            }
            ProblemSource::Prescribed { f } => {
                if f.is_empty() {
                    return Err(config_err("problem.prescribed.f", "is empty"));
                }
                if let Some(v) = f.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(config_err(
                        "problem.prescribed.f",
                        format!("entries must be positive and finite, got {v}"),
                    ));
                }
                if self.rhs.is_some() {
                    return Err(config_err(
                        "rhs",
                        "prescribed instances fix their own right-hand side",
                    ));
                }
            }
            ProblemSource::RandomSparse(spec) => {
                if spec.n == 0 {
                    return Err(config_err("problem.random_sparse.n", "must be at least 1"));
                }
                if !(spec.density > 0.0 && spec.density <= 1.0) {
                    return Err(config_err("problem.random_sparse.density", "must be in (0, 1]"));
                }
                if !spec.shift.is_finite() {
                    return Err(config_err("problem.random_sparse.shift", "must be finite"));
                }
            }
        }
        Ok(())
    }

    fn history_options(&self) -> HistoryOptions {
        HistoryOptions {
            arnoldi: self.arnoldi_options(),
            with_errors: self.errors,
            convergence_tol: self.tolerances.convergence,
        }
    }

    fn arnoldi_options(&self) -> ArnoldiOptions {
        ArnoldiOptions {
            reorthogonalize: self.reorthogonalize,
            breakdown_tol: self.tolerances.breakdown,
        }
    }

    /// Directory receiving this run's files: `<output_dir>/<name>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
            .join(&self.name)
    }
}

/// Operator and right-hand side for a run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub operator: LinearOperator,
    pub rhs: Vec<f64>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let rule = cfg.rhs.unwrap_or(RhsRule::Ones);
    match &cfg.problem {
        ProblemSource::MatrixMarket { path } => {
            let operator = LinearOperator::Csr(read_matrix_market(path)?);
            let rhs = rule.build(operator.dim())?;
            Ok(Problem { operator, rhs })
        }
        ProblemSource::Spectrum {
            intervals,
            conjugate_seed,
        } => {
            let spec = SpectrumSpec {
                intervals: intervals.clone(),
            };
            let rhs = rule.build(spec.total())?;
            match conjugate_seed {
                None => Ok(Problem {
                    operator: gen_spectrum_operator(&spec)?,
                    rhs,
                }),
                Some(seed) => {
                    let (operator, q) = gen_conjugated_spectrum_operator(&spec, *seed)?;
                    // Rotating b with A keeps every Krylov norm unchanged.
                    let rhs = q.matvec(&rhs)?;
                    Ok(Problem { operator, rhs })
                }
            }
        }
        ProblemSource::Prescribed { f } => {
            let inst = build_prescribed_instance(f)?;
            Ok(Problem {
                operator: inst.operator(),
                rhs: inst.rhs,
            })
        }
        ProblemSource::RandomSparse(spec) => {
            let operator = LinearOperator::Csr(gen_random_sparse(spec)?);
            let rhs = rule.build(operator.dim())?;
            Ok(Problem { operator, rhs })
        }
    }
}

/// Named figure presets and `sharpness-<k>`.
///
/// `*-right` presets need `mm_path`. The left presets use 250 equally
/// spaced eigenvalues on each of `[-10, -1]` and `[1, 20]`.
pub fn preset(name: &str, mm_path: Option<&Path>) -> Result<ExperimentConfig> {
    let unknown = || {
        config_err(
            "preset",
            format!(
                "unknown preset `{name}` (expected fig1-left, fig1-right, fig2-left, \
                 fig2-right, fig3-left, fig3-right or sharpness-<k>)"
            ),
        )
    };
    if let Some(k) = name.strip_prefix("sharpness-") {
        let k: usize = k.parse().map_err(|_| unknown())?;
        return sharpness_preset(k);
    }
    let (fig, side) = name.split_once('-').ok_or_else(unknown)?;
    let errors = match fig {
        "fig1" | "fig2" => false,
        "fig3" => true,
        _ => return Err(unknown()),
    };
    let problem = match side {
        "left" => ProblemSource::Spectrum {
            intervals: SpectrumSpec::two_intervals_500().intervals,
            conjugate_seed: None,
        },
        "right" => {
            let path = mm_path.ok_or_else(|| {
                config_err(
                    "mm_path",
                    format!("preset `{name}` needs a Matrix Market file"),
                )
            })?;
            ProblemSource::MatrixMarket {
                path: path.to_path_buf(),
            }
        }
        _ => return Err(unknown()),
    };
    Ok(ExperimentConfig {
        name: name.to_owned(),
        problem,
        rhs: Some(RhsRule::Ones),
        k_max: PRESET_K_MAX,
        reorthogonalize: true,
        tolerances: Tolerances::default(),
        output_dir: None,
        plot: true,
        errors,
        kappa: None,
        matfunc: None,
    })
}

/// All-ones prescribed instance of dimension `k+1`, run for `k` steps.
pub fn sharpness_preset(k: usize) -> Result<ExperimentConfig> {
    if k == 0 {
        return Err(config_err("k", "sharpness needs k >= 1"));
    }
    Ok(ExperimentConfig {
        name: format!("sharpness-{k}"),
        problem: ProblemSource::Prescribed {
            f: vec![1.0; k + 1],
        },
        rhs: None,
        k_max: k,
        reorthogonalize: true,
        tolerances: Tolerances::default(),
        output_dir: None,
        plot: true,
        errors: false,
        kappa: None,
        matfunc: None,
    })
}

/// Everything computed for one config.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: String,
    pub dim: usize,
    pub history: ConvergenceHistory,
    pub bound: BoundReport,
    pub identities: IdentityReport,
    pub errors: Option<ErrorReport>,
    pub matfunc: Option<MatFuncReport>,
    /// Files written, in creation order.
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    name: &'a str,
    dim: usize,
    beta: f64,
    iterations: usize,
    breakdown: Option<usize>,
    orthogonality_error: f64,
    relation_residual: f64,
    hessenberg_norm: f64,
    passed: bool,
    bound: &'a BoundReport,
    identities: &'a IdentityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    errors: Option<&'a ErrorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matfunc: Option<&'a MatFuncReport>,
}

impl RunOutcome {
    /// True unless an enabled bound check failed.
    pub fn passed(&self) -> bool {
        self.bound.passed && self.errors.iter().all(|e| e.passed)
    }

    fn summary_json(&self) -> String {
        let s = SummaryJson {
            name: &self.name,
            dim: self.dim,
            beta: self.history.beta,
            iterations: self.history.last_k(),
            breakdown: self.history.breakdown,
            orthogonality_error: self.history.orthogonality_error,
            relation_residual: self.history.relation_residual,
            hessenberg_norm: self.history.hessenberg_norm,
            passed: self.passed(),
            bound: &self.bound,
            identities: &self.identities,
            errors: self.errors.as_ref(),
            matfunc: self.matfunc.as_ref(),
        };
        let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
        text.push('\n');
        text
    }

    /// Human-readable multi-line summary.
    pub fn summary(&self) -> String {
        let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        let mut lines = vec![
            format!(
                "{}: n = {}, {} iterations{}",
                self.name,
                self.dim,
                self.history.last_k(),
                self.history
                    .breakdown
                    .map(|b| format!(", breakdown at step {b}"))
                    .unwrap_or_default()
            ),
            format!(
                "  main bound: worst ratio {:.6e}{} [{}]",
                self.bound.worst_ratio,
                self.bound.worst_k.map(|k| format!(" at k = {k}")).unwrap_or_default(),
                verdict(self.bound.passed)
            ),
            format!(
                "  identities: theta F {:.1e}, theta G {:.1e}, G<-F {:.1e}, F<-G {:.1e} [{}]",
                self.identities.fom_theta,
                self.identities.gmres_theta,
                self.identities.gmres_from_fom,
                self.identities.fom_from_gmres,
                if self.identities.passed { "ok" } else { "outside tolerance" }
            ),
            format!(
                "  arnoldi: orthogonality {:.1e}, relation residual {:.1e}",
                self.history.orthogonality_error, self.history.relation_residual
            ),
        ];
        if let Some(e) = &self.errors {
            let source = match e.kappa.source {
                KappaSource::Exact => "exact",
                KappaSource::Estimated { .. } => "estimated",
                KappaSource::Given => "given",
            };
            lines.push(format!(
                "  error bound: kappa {:.6} ({source}), worst ratio {:.6e} [{}], FOM error smaller at {} iterations",
                e.kappa.value,
                e.worst_ratio,
                verdict(e.passed),
                e.fom_smaller_count
            ));
        }
        if let Some(m) = &self.matfunc {
            lines.push(format!(
                "  matfunc {}: worst error/best ratio {:.3}{}",
                m.function.label(),
                m.worst_ratio,
                m.quadrature_error
                    .map(|q| format!(", quadrature error {q:.1e}"))
                    .unwrap_or_default()
            ));
        }
        for f in &self.files {
            lines.push(format!("  wrote {}", f.display()));
        }
        lines.join("\n")
    }
}

/// Runs every enabled stage without writing anything.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let op = &problem.operator;
    let history = run_history(op, &problem.rhs, cfg.k_max, &cfg.history_options())?;
    let bound = check_main_bound_with(&history, cfg.tolerances.bound_exclusion);
    let identities = check_identities(
        &history,
        &IdentityTolerances {
            identity: cfg.tolerances.identity,
            residual_formula: cfg.tolerances.residual_formula,
            ..IdentityTolerances::default()
        },
    )?;
    let errors = if cfg.errors {
        let kappa = match cfg.kappa {
            Some(value) => Kappa {
                value,
                source: KappaSource::Given,
            },
            None => kappa_for(op, 1e-10)?,
        };
        Some(check_error_bound_with(&history, kappa, cfg.tolerances.error_exclusion)?)
    } else {
        None
    };
    let matfunc = match &cfg.matfunc {
        Some(f) => Some(near_opt_report(op, &problem.rhs, cfg.k_max, f, cfg.arnoldi_options())?),
        None => None,
    };
    Ok(RunOutcome {
        name: cfg.name.clone(),
        dim: op.dim(),
        history,
        bound,
        identities,
        errors,
        matfunc,
        files: Vec::new(),
    })
}

/// Evaluates the config and writes CSV, JSON summary and (optionally) SVG
/// files into [`ExperimentConfig::run_dir`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut outcome = evaluate(cfg)?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let mut files = Vec::new();
    let mut put = |file: String, bytes: &[u8]| -> Result<()> {
        let path = dir.join(file);
        write_atomic(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    let name = &cfg.name;
    put(
        format!("{name}.csv"),
        format_series_csv(&outcome.history, &outcome.bound, outcome.errors.as_ref())?.as_bytes(),
    )?;
    if let Some(m) = &outcome.matfunc {
        put(format!("{name}_matfunc.csv"), format_matfunc_csv(m).as_bytes())?;
    }
    if cfg.plot {
        for (suffix, svg) in plots(&outcome)? {
            put(format!("{name}_{suffix}.svg"), svg.as_bytes())?;
        }
    }
    put(format!("{name}_summary.json"), outcome.summary_json().as_bytes())?;
    outcome.files = files;
    Ok(outcome)
}

/// Runs independent configs concurrently, one thread per config.
///
/// Names must be distinct so run directories do not collide.
pub fn run_batch(cfgs: &[ExperimentConfig]) -> Result<Vec<Result<RunOutcome>>> {
    let mut seen = BTreeSet::new();
    for cfg in cfgs {
        if !seen.insert(cfg.run_dir()) {
            return Err(config_err(
                "name",
                format!("two configs write to {}", cfg.run_dir().display()),
            ));
        }
    }
    Ok(std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| s.spawn(move || run_experiment(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    }))
}

fn norm_series(values: impl Iterator<Item = Option<f64>>, scale: f64) -> Vec<Option<f64>> {
    values.map(|v| v.map(|x| x / scale)).collect()
}

/// SVG plots for an outcome, normalized by β (errors by ‖A⁻¹b‖, matrix
/// functions by ‖f(A)b‖).
pub fn plots(outcome: &RunOutcome) -> Result<Vec<(&'static str, String)>> {
    let h = &outcome.history;
    let beta = h.beta;
    let fom = norm_series(h.records.iter().map(|r| r.fom_direct.value()), beta);
    let gmres = norm_series(h.records.iter().map(|r| Some(r.gmres_direct)), beta);
    let best = norm_series(outcome.bound.rows.iter().map(|r| r.fom_best.value()), beta);
    let bound = norm_series(outcome.bound.rows.iter().map(|r| Some(r.bound)), beta);
    let title = outcome.name.as_str();
    let spec = |y_label| PlotSpec {
        title,
        x_label: "iteration k",
        y_label,
        log_y: true,
    };

    let mut out = vec![
        (
            "residuals",
            render_svg(
                &[
                    Series::new("FOM", fom.clone(), LineStyle::Solid),
                    Series::new("GMRES", gmres.clone(), LineStyle::DashDot),
                ],
                &spec("residual norm / ||b||"),
            )?,
        ),
        (
            "bound",
            render_svg(
                &[
                    Series::new("FOM", fom, LineStyle::SolidGrey),
                    Series::new("FOM best so far", best, LineStyle::Solid),
                    Series::new("GMRES", gmres, LineStyle::DashDot),
                    Series::new("sqrt(k+1) GMRES", bound, LineStyle::Dashed),
                ],
                &spec("residual norm / ||b||"),
            )?,
        ),
    ];
    if let (Some(e), Some(xnorm)) = (&outcome.errors, h.solution_norm) {
        let fe: Vec<_> = e.rows.iter().map(|r| r.fom_error).collect();
        let fe_best = best_so_far(&fe);
        out.push((
            "errors",
            render_svg(
                &[
                    Series::new("FOM", norm_series(fe.iter().map(|r| r.value()), xnorm), LineStyle::SolidGrey),
                    Series::new(
                        "FOM best so far",
                        norm_series(fe_best.iter().map(|r| r.value()), xnorm),
                        LineStyle::Solid,
                    ),
                    Series::new(
                        "GMRES",
                        norm_series(e.rows.iter().map(|r| Some(r.gmres_error)), xnorm),
                        LineStyle::DashDot,
                    ),
                    Series::new(
                        "kappa sqrt(k+1) GMRES",
                        norm_series(e.rows.iter().map(|r| Some(r.bound)), xnorm),
                        LineStyle::Dashed,
                    ),
                ],
                &spec("error norm / ||A^-1 b||"),
            )?,
        ));
    }
    if let Some(m) = &outcome.matfunc {
        let scale = m.reference_norm;
        out.push((
            "matfunc",
            render_svg(
                &[
                    Series::new(
                        "Arnoldi-FA",
                        norm_series(m.rows.iter().map(|r| r.error.value()), scale),
                        LineStyle::Solid,
                    ),
                    Series::new(
                        "best in Krylov space",
                        norm_series(m.rows.iter().map(|r| Some(r.best)), scale),
                        LineStyle::DashDot,
                    ),
                ],
                &PlotSpec {
                    title,
                    x_label: "iteration k",
                    y_label: "error norm / ||f(A) b||",
                    log_y: true,
                },
            )?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::SeriesCsv;

    #[test]
    fn preset_examples() {
        let cfg = preset("sharpness-3", None).unwrap();
        assert_eq!(cfg.problem, ProblemSource::Prescribed { f: vec![1.0; 4] });
        assert_eq!(build_problem(&cfg).unwrap().operator.dim(), 4);

        let cfg = preset("fig1-left", None).unwrap();
        let ProblemSource::Spectrum { intervals, .. } = &cfg.problem else {
            panic!("{cfg:?}")
        };
        assert_eq!(intervals.iter().map(|i| i.count).sum::<usize>(), 500);
        assert_eq!((intervals[0].lo, intervals[0].hi), (-10.0, -1.0));
        assert_eq!((intervals[1].lo, intervals[1].hi), (1.0, 20.0));
        assert_eq!(cfg.k_max, 80);
        assert_eq!(cfg.rhs, Some(RhsRule::Ones));
        assert!(preset("fig3-left", None).unwrap().errors);

        for bad in ["fig9", "fig1", "fig1-middle", "sharpness-x", "sharpness-0"] {
            assert!(matches!(preset(bad, None), Err(LabError::Config { .. })), "{bad}");
        }
        assert!(matches!(
            preset("fig2-right", None),
            Err(LabError::Config { field, .. }) if field == "mm_path"
        ));
        let cfg = preset("fig2-right", Some(Path::new("steam2.mtx"))).unwrap();
        assert_eq!(
            cfg.problem,
            ProblemSource::MatrixMarket {
                path: "steam2.mtx".into()
            }
        );
    }

    #[test]
    fn json_round_trip_and_validation() {
        let cfg = preset("fig3-left", None).unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);

        let text = r#"{"name": "rs", "problem": {"random_sparse": {"n": 30, "density": 0.2, "seed": 4}},
                       "rhs": {"random": {"seed": 9}}, "k_max": 10}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(cfg.reorthogonalize && cfg.plot && !cfg.errors);
        assert_eq!(cfg.tolerances, Tolerances::default());

        let field_of = |text: &str| match ExperimentConfig::from_json(text) {
            Err(LabError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field_of(r#"{"name": "a", "problem": {"prescribed": {"f": [1.0]}}, "k_max": 0}"#),
            "k_max"
        );
        assert_eq!(
            field_of(
                r#"{"name": "a", "problem": {"prescribed": {"f": [1.0]}}, "k_max": 1,
                    "tolerances": {"breakdown": 0.0}}"#
            ),
            "tolerances.breakdown"
        );
        assert_eq!(
            field_of(r#"{"name": "a/b", "problem": {"prescribed": {"f": [1.0]}}, "k_max": 1}"#),
            "name"
        );
        assert_eq!(
            field_of(r#"{"name": "a", "problem": {"prescribed": {"f": [1.0, -2.0]}}, "k_max": 1}"#),
            "problem.prescribed.f"
        );
        assert_eq!(
            field_of(
                r#"{"name": "a", "problem": {"prescribed": {"f": [1.0]}}, "rhs": "ones", "k_max": 1}"#
            ),
            "rhs"
        );
        // Two problem sources, or an unknown field, are rejected by the parser.
        assert!(matches!(
            ExperimentConfig::from_json(
                r#"{"name": "a", "problem": {"prescribed": {"f": [1.0]}, "matrix_market": {"path": "x"}}, "k_max": 1}"#
            ),
            Err(LabError::Parse { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_json(
                r#"{"name": "a", "problem": {"prescribed": {"f": [1.0]}}, "k_max": 1, "bogus": 1}"#
            ),
            Err(LabError::Parse { .. })
        ));
    }

    #[test]
    fn sharpness_run_has_unit_ratios_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset("sharpness-5", None).unwrap();
        cfg.output_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&cfg).unwrap();
        assert!(out.passed());
        let csv_path = dir.path().join("sharpness-5/sharpness-5.csv");
        let first = fs::read(&csv_path).unwrap();
        let csv = SeriesCsv::parse(std::str::from_utf8(&first).unwrap()).unwrap();
        let ratios = csv.column("ratio").unwrap();
        assert_eq!(ratios.len(), 6);
        for r in ratios {
            assert!((r.unwrap().value().unwrap() - 1.0).abs() <= 1e-12);
        }
        let summary_first = fs::read(dir.path().join("sharpness-5/sharpness-5_summary.json")).unwrap();
        run_experiment(&cfg).unwrap();
        assert_eq!(fs::read(&csv_path).unwrap(), first);
        assert_eq!(
            fs::read(dir.path().join("sharpness-5/sharpness-5_summary.json")).unwrap(),
            summary_first
        );
        for suffix in ["residuals", "bound"] {
            assert!(dir.path().join(format!("sharpness-5/sharpness-5_{suffix}.svg")).exists());
        }
    }

    #[test]
    fn missing_matrix_file_names_the_path() {
        let cfg = preset("fig1-right", Some(Path::new("/nonexistent/steam2.mtx"))).unwrap();
        let err = evaluate(&cfg).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/steam2.mtx"), "{err}");
    }

    #[test]
    fn relative_matrix_path_follows_config_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("tiny.mtx"),
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2.0\n2 1 1.0\n2 2 3.0\n",
        )
        .unwrap();
        let cfg_path = dir.path().join("tiny.json");
        fs::write(
            &cfg_path,
            r#"{"name": "tiny", "problem": {"matrix_market": {"path": "tiny.mtx"}}, "k_max": 2, "errors": true}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
        let out = evaluate(&cfg).unwrap();
        assert_eq!(out.dim, 2);
        assert!(out.passed());
        assert!(out.errors.is_some());
    }

    #[test]
    fn conjugated_spectrum_matches_diagonal() {
        let intervals = vec![
            crate::operators::SpectrumInterval { lo: -4.0, hi: -1.0, count: 15 },
            crate::operators::SpectrumInterval { lo: 1.0, hi: 9.0, count: 25 },
        ];
        let base = ExperimentConfig {
            name: "d".into(),
            problem: ProblemSource::Spectrum { intervals: intervals.clone(), conjugate_seed: None },
            rhs: Some(RhsRule::Random { seed: 3 }),
            k_max: 30,
            reorthogonalize: true,
            tolerances: Tolerances::default(),
            output_dir: None,
            plot: false,
            errors: false,
            kappa: None,
            matfunc: None,
        };
        let rotated = ExperimentConfig {
            problem: ProblemSource::Spectrum { intervals, conjugate_seed: Some(11) },
            ..base.clone()
        };
        let a = evaluate(&base).unwrap();
        let b = evaluate(&rotated).unwrap();
        let beta = a.history.beta;
        for (x, y) in a.history.records.iter().zip(&b.history.records) {
            assert!((x.gmres_direct - y.gmres_direct).abs() <= 1e-8 * beta);
            if let (Some(f), Some(g)) = (x.fom_direct.value(), y.fom_direct.value()) {
                assert!((f - g).abs() <= 1e-8 * beta.max(f));
            }
        }
    }
}
