//! CSV serialization of convergence histories and bound reports.
//!
//! Floats are written with Rust's shortest round-trip exponent format, so a
//! re-parsed file reproduces the in-memory values bit for bit. Infinite FOM
//! norms are written as `inf`; excluded ratios are left empty.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::bounds::{BoundReport, ErrorReport};
use crate::error::{LabError, Result};
use crate::matfunc::MatFuncReport;
use crate::solvers::{ConvergenceHistory, ResidualNorm};

pub const SERIES_COLUMNS: [&str; 8] = [
    "k",
    "fom_direct",
    "fom_theta",
    "gmres_direct",
    "gmres_theta",
    "fom_best_so_far",
    "bound_sqrt_k1_gmres",
    "ratio",
];

pub const ERROR_COLUMNS: [&str; 5] = [
    "fom_error",
    "gmres_error",
    "fom_error_best_so_far",
    "error_bound",
    "error_ratio",
];

pub const MATFUNC_COLUMNS: [&str; 4] = ["k", "error", "best", "ratio"];

fn num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_owned()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// CSV text for a history, its bound report and optionally its error report.
pub fn format_series_csv(
    h: &ConvergenceHistory,
    report: &BoundReport,
    errors: Option<&ErrorReport>,
) -> Result<String> {
    if report.rows.len() != h.records.len() {
        return Err(LabError::invalid(format!(
            "bound report has {} rows for a history of {}",
            report.rows.len(),
            h.records.len()
        )));
    }
    if let Some(e) = errors {
        if e.rows.len() != h.records.len() {
            return Err(LabError::invalid(format!(
                "error report has {} rows for a history of {}",
                e.rows.len(),
                h.records.len()
            )));
        }
    }
    let mut header: Vec<&str> = SERIES_COLUMNS.to_vec();
    if errors.is_some() {
        header.extend(ERROR_COLUMNS);
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, (rec, row)) in h.records.iter().zip(&report.rows).enumerate() {
        let mut cells = vec![
            rec.k.to_string(),
            rec.fom_direct.to_string(),
            rec.fom_theta.to_string(),
            num(rec.gmres_direct),
            num(rec.gmres_theta),
            row.fom_best.to_string(),
            num(row.bound),
            opt(row.ratio),
        ];
        if let Some(e) = errors {
            let er = &e.rows[i];
            cells.extend([
                er.fom_error.to_string(),
                num(er.gmres_error),
                er.fom_best.to_string(),
                num(er.bound),
                opt(er.ratio),
            ]);
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn format_matfunc_csv(report: &MatFuncReport) -> String {
    let mut out = MATFUNC_COLUMNS.join(",");
    out.push('\n');
    for row in &report.rows {
        let cells = [
            row.k.to_string(),
            row.error.to_string(),
            num(row.best),
            opt(row.ratio),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `bytes` next to `path` and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| LabError::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        LabError::io(path, e)
    })
}

pub fn emit_csv(
    h: &ConvergenceHistory,
    report: &BoundReport,
    errors: Option<&ErrorReport>,
    path: &Path,
) -> Result<()> {
    write_atomic(path, format_series_csv(h, report, errors)?.as_bytes())
}

/// A parsed series CSV. Cells are `None` when empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCsv {
    pub header: Vec<String>,
    pub ks: Vec<usize>,
    /// Row-major, excluding the `k` column.
    pub cells: Vec<Vec<Option<ResidualNorm>>>,
}

impl SeriesCsv {
    /// Parses text written by [`format_series_csv`] or [`format_matfunc_csv`].
    ///
    /// Checks that every row has the header's column count and that `k`
    /// increases strictly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines
            .next()
            .ok_or(LabError::Parse { line: 1, message: "empty CSV".into() })?;
        let header: Vec<String> = head.split(',').map(str::to_owned).collect();
        if header.first().map(String::as_str) != Some("k") {
            return Err(LabError::Parse {
                line: 1,
                message: "first column must be `k`".into(),
            });
        }
        let mut ks: Vec<usize> = Vec::new();
        let mut cells = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(LabError::Parse {
                    line: line_no,
                    message: format!("{} fields, expected {}", fields.len(), header.len()),
                });
            }
            let k: usize = fields[0].parse().map_err(|_| LabError::Parse {
                line: line_no,
                message: format!("bad iteration index `{}`", fields[0]),
            })?;
            if ks.last().is_some_and(|&prev| k <= prev) {
                return Err(LabError::Parse {
                    line: line_no,
                    message: format!("k = {k} does not increase"),
                });
            }
            ks.push(k);
            let row = fields[1..]
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<ResidualNorm>().map(Some).map_err(|_| LabError::Parse {
                            line: line_no,
                            message: format!("bad value `{f}`"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(row);
        }
        Ok(Self { header, ks, cells })
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<Option<ResidualNorm>>> {
        let idx = self.header.iter().position(|h| h == name)?;
        if idx == 0 {
            return None;
        }
        Some(self.cells.iter().map(|row| row[idx - 1]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{check_error_bound, check_main_bound, kappa_for};
    use crate::operators::{build_prescribed_instance, gen_spectrum_operator, SpectrumInterval, SpectrumSpec};
    use crate::solvers::{run_history, HistoryOptions};
    use crate::operators::LinearOperator;

    fn small_history(with_errors: bool) -> (ConvergenceHistory, LinearOperator) {
        let spec = SpectrumSpec {
            intervals: vec![
                SpectrumInterval { lo: -3.0, hi: -1.0, count: 5 },
                SpectrumInterval { lo: 1.0, hi: 7.0, count: 7 },
            ],
        };
        let op = gen_spectrum_operator(&spec).unwrap();
        let opts = HistoryOptions { with_errors, ..HistoryOptions::default() };
        (run_history(&op, &[1.0; 12], 12, &opts).unwrap(), op)
    }

    #[test]
    fn round_trip_is_exact() {
        let (h, op) = small_history(true);
        let rep = check_main_bound(&h);
        let err = check_error_bound(&h, kappa_for(&op, 1e-10).unwrap()).unwrap();
        let text = format_series_csv(&h, &rep, Some(&err)).unwrap();
        let csv = SeriesCsv::parse(&text).unwrap();
        assert_eq!(csv.header.len(), SERIES_COLUMNS.len() + ERROR_COLUMNS.len());
        assert_eq!(csv.ks, (0..h.records.len()).collect::<Vec<_>>());
        let fom = csv.column("fom_direct").unwrap();
        let gmres = csv.column("gmres_theta").unwrap();
        let ratio = csv.column("ratio").unwrap();
        let gerr = csv.column("gmres_error").unwrap();
        for (i, rec) in h.records.iter().enumerate() {
            assert_eq!(fom[i], Some(rec.fom_direct));
            assert_eq!(gmres[i], Some(ResidualNorm::Finite(rec.gmres_theta)));
            assert_eq!(ratio[i].and_then(|r| r.value()), rep.rows[i].ratio);
            assert_eq!(gerr[i], rec.gmres_error.map(ResidualNorm::Finite));
        }
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn zero_step_history_has_one_row() {
        let op = LinearOperator::Diagonal(vec![2.0, 3.0]);
        let h = run_history(&op, &[1.0, 1.0], 0, &HistoryOptions::default()).unwrap();
        let text = format_series_csv(&h, &check_main_bound(&h), None).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("k,fom_direct,fom_theta,gmres_direct"));
    }

    #[test]
    fn infinite_fom_is_written_as_inf() {
        // H_1 = 0 for the swap matrix.
        let op = LinearOperator::Dense(
            crate::linalg::DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        );
        let h = run_history(&op, &[1.0, 0.0], 2, &HistoryOptions::default()).unwrap();
        let text = format_series_csv(&h, &check_main_bound(&h), None).unwrap();
        let row1: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(row1[1], "inf");
        let csv = SeriesCsv::parse(&text).unwrap();
        assert_eq!(csv.column("fom_direct").unwrap()[1], Some(ResidualNorm::Infinite));
    }

    #[test]
    fn all_ones_ratio_column_is_one() {
        let inst = build_prescribed_instance(&[1.0; 6]).unwrap();
        let h = run_history(&inst.operator(), &inst.rhs, 5, &HistoryOptions::default()).unwrap();
        let text = format_series_csv(&h, &check_main_bound(&h), None).unwrap();
        let csv = SeriesCsv::parse(&text).unwrap();
        for r in csv.column("ratio").unwrap() {
            let r = r.and_then(|r| r.value()).unwrap();
            assert!((r - 1.0).abs() <= 1e-12, "{r}");
        }
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(SeriesCsv::parse("").is_err());
        assert!(SeriesCsv::parse("x,y\n0,1\n").is_err());
        assert!(matches!(
            SeriesCsv::parse("k,a\n0,1\n1\n"),
            Err(LabError::Parse { line: 3, .. })
        ));
        assert!(SeriesCsv::parse("k,a\n1,1\n1,2\n").is_err());
        assert!(SeriesCsv::parse("k,a\n0,abc\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"one\n").unwrap();
        write_atomic(&path, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("no/such/dir/a.csv");
        match write_atomic(&missing, b"x") {
            Err(LabError::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
    }
}
