//! Linear operators and problem generators.
//!
//! Operators come in three storage kinds (CSR, dense, diagonal) behind one
//! [`LinearOperator`] enum. The generators reproduce the synthetic spectra
//! and all-ones right-hand sides of the experiments, plus the bidiagonal
//! construction that realizes any prescribed sequence of FOM residual norms.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{check_finite, dot, nrm2, DenseMatrix};

/// Square sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validating constructor. Columns must be strictly increasing per row.
    pub fn new(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(LabError::invalid("CSR dimension must be positive"));
        }
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return Err(LabError::invalid("CSR row pointer must have n+1 entries starting at 0"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(LabError::invalid("CSR row pointer is not monotone"));
        }
        if row_ptr[n] != values.len() || col_idx.len() != values.len() {
            return Err(LabError::invalid("CSR arrays disagree on the number of stored values"));
        }
        for i in 0..n {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.iter().any(|&c| c >= n) {
                return Err(LabError::invalid(format!("CSR row {i} has a column index >= {n}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LabError::invalid(format!(
                    "CSR row {i} columns are not strictly increasing"
                )));
            }
        }
        check_finite(&values, "CSR values")?;
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles from 0-based `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|t| t.0 >= n || t.1 >= n) {
            return Err(LabError::invalid(format!("triplet ({i}, {j}) outside {n}x{n}")));
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows a stored entry") += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sparse matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(LabError::invalid(format!(
                "CSR apply: dimension {} with vector of length {}",
                self.n,
                v.len()
            )));
        }
        Ok((0..self.n)
            .map(|i| {
                let range = self.row_ptr[i]..self.row_ptr[i + 1];
                self.col_idx[range.clone()]
                    .iter()
                    .zip(&self.values[range])
                    .map(|(&j, &a)| a * v[j])
                    .sum()
            })
            .collect())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[p])] = self.values[p];
            }
        }
        d
    }
}

/// Reads a Matrix Market file from a local path.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let file = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    parse_matrix_market(std::io::BufReader::new(file))
}

/// Parses `%%MatrixMarket matrix coordinate real {general|symmetric}`.
///
/// Symmetric files are expanded to the full matrix, duplicate coordinates
/// are summed and indices are converted to 0-based. Only square matrices
/// are accepted.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let read_err = |line: usize, e: std::io::Error| LabError::Parse {
        line,
        message: e.to_string(),
    };

    let (_, header) = lines.next().ok_or(LabError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let header = header.map_err(|e| read_err(1, e))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(LabError::UnsupportedFormat(format!("bad header `{header}`")));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" {
        return Err(LabError::UnsupportedFormat(format!(
            "only `coordinate real` is supported, got `{} {}`",
            tokens[2], tokens[3]
        )));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(LabError::UnsupportedFormat(format!(
                "symmetry qualifier `{other}` is not supported"
            )))
        }
    };

    let mut size: Option<(usize, usize)> = None;
    let mut declared = 0usize;
    let mut seen = 0usize;
    let mut triplets = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| read_err(lineno, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parse_err = |message: String| LabError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let Some((rows, cols)) = size else {
            if fields.len() != 3 {
                return Err(parse_err("size line must have three fields".into()));
            }
            let nums: Vec<usize> = fields
                .iter()
                .map(|f| f.parse().map_err(|_| parse_err(format!("bad integer `{f}`"))))
                .collect::<Result<_>>()?;
            if nums[0] != nums[1] || nums[0] == 0 {
                return Err(parse_err(format!(
                    "matrix must be square and nonempty, got {}x{}",
                    nums[0], nums[1]
                )));
            }
            size = Some((nums[0], nums[1]));
            declared = nums[2];
            continue;
        };
        if fields.len() != 3 {
            return Err(parse_err("entry line must have three fields".into()));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad row index `{}`", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad column index `{}`", fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("bad value `{}`", fields[2])))?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(format!("index ({i}, {j}) outside {rows}x{cols}")));
        }
        if !v.is_finite() {
            return Err(parse_err(format!("non-finite value `{}`", fields[2])));
        }
        seen += 1;
        if seen > declared {
            return Err(parse_err(format!("more than the declared {declared} entries")));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let Some((n, _)) = size else {
        return Err(LabError::Parse {
            line: 1,
            message: "missing size line".into(),
        });
    };
    if seen != declared {
        return Err(LabError::Parse {
            line: 0,
            message: format!("declared {declared} entries but found {seen}"),
        });
    }
    CsrMatrix::from_triplets(n, &triplets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Csr,
    Dense,
    Diagonal,
}

/// A square real linear operator.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    Csr(CsrMatrix),
    Dense(DenseMatrix),
    Diagonal(Vec<f64>),
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        match self {
            LinearOperator::Csr(m) => m.dim(),
            LinearOperator::Dense(m) => m.rows(),
            LinearOperator::Diagonal(d) => d.len(),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            LinearOperator::Csr(_) => OperatorKind::Csr,
            LinearOperator::Dense(_) => OperatorKind::Dense,
            LinearOperator::Diagonal(_) => OperatorKind::Diagonal,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            LinearOperator::Csr(m) => m.apply(v),
            LinearOperator::Dense(m) => m.matvec(v),
            LinearOperator::Diagonal(d) => {
                if v.len() != d.len() {
                    return Err(LabError::invalid(format!(
                        "diagonal apply: dimension {} with vector of length {}",
                        d.len(),
                        v.len()
                    )));
                }
                Ok(d.iter().zip(v).map(|(a, x)| a * x).collect())
            }
        }
    }

    /// Dense materialization for reference computations.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            LinearOperator::Csr(m) => m.to_dense(),
            LinearOperator::Dense(m) => m.clone(),
            LinearOperator::Diagonal(d) => DenseMatrix::from_diag(d),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            LinearOperator::Csr(m) => nrm2(m.values()),
            LinearOperator::Dense(m) => m.frobenius_norm(),
            LinearOperator::Diagonal(d) => nrm2(d),
        }
    }

    /// Exact `κ₂` when it is available without iteration (diagonal storage).
    pub fn exact_condition_number(&self) -> Option<f64> {
        match self {
            LinearOperator::Diagonal(d) => {
                let max = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                let min = d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
                Some(max / min)
            }
            _ => None,
        }
    }
}

/// One closed interval of equally spaced eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInterval {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// A union of intervals with per-interval eigenvalue counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub intervals: Vec<SpectrumInterval>,
}

impl SpectrumSpec {
    /// 250 points on [-10, -1] and 250 on [1, 20].
    pub fn two_intervals_500() -> Self {
        Self {
            intervals: vec![
                SpectrumInterval {
                    lo: -10.0,
                    hi: -1.0,
                    count: 250,
                },
                SpectrumInterval {
                    lo: 1.0,
                    hi: 20.0,
                    count: 250,
                },
            ],
        }
    }

    pub fn total(&self) -> usize {
        self.intervals.iter().map(|iv| iv.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(LabError::invalid("spectrum has no intervals"));
        }
        for (i, iv) in self.intervals.iter().enumerate() {
            if iv.count == 0 {
                return Err(LabError::invalid(format!("interval {i} has zero count")));
            }
            if !iv.lo.is_finite() || !iv.hi.is_finite() || iv.lo > iv.hi {
                return Err(LabError::invalid(format!(
                    "interval {i} [{}, {}] is not a finite closed interval",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(())
    }

    /// Eigenvalues in interval order, endpoints included.
    pub fn points(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut pts = Vec::with_capacity(self.total());
        for iv in &self.intervals {
            if iv.count == 1 {
                pts.push(0.5 * (iv.lo + iv.hi));
            } else {
                let step = (iv.hi - iv.lo) / (iv.count - 1) as f64;
                pts.extend((0..iv.count).map(|i| iv.lo + i as f64 * step));
            }
        }
        Ok(pts)
    }
}

/// Diagonal operator carrying the spectrum.
pub fn gen_spectrum_operator(spec: &SpectrumSpec) -> Result<LinearOperator> {
    Ok(LinearOperator::Diagonal(spec.points()?))
}

/// Dense `Q·diag(λ)·Qᵀ` with `Q` a seeded product of Householder reflectors.
///
/// Returns the operator together with `Q`, so callers can rotate their
/// right-hand side (`Q·b`) and compare against the plain diagonal run.
pub fn gen_conjugated_spectrum_operator(
    spec: &SpectrumSpec,
    seed: u64,
) -> Result<(LinearOperator, DenseMatrix)> {
    let d = spec.points()?;
    let q = random_orthogonal(d.len(), seed);
    let mut qd = q.clone();
    for i in 0..d.len() {
        for (j, &lambda) in d.iter().enumerate() {
            qd[(i, j)] *= lambda;
        }
    }
    let mut a = qd.matmul(&q.transpose())?;
    // Exact symmetry so downstream symmetric checks see a clean input.
    let n = d.len();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    Ok((LinearOperator::Dense(a), q))
}

/// Product of `min(n, 6)` seeded Householder reflectors.
pub fn random_orthogonal(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DenseMatrix::identity(n);
    for _ in 0..n.min(6) {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv = nrm2(&v);
        if nv == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        // Q <- Q (I - 2 v vᵀ)
        for i in 0..n {
            let row: Vec<f64> = q.row(i).to_vec();
            let t = 2.0 * dot(&row, &v);
            for j in 0..n {
                q[(i, j)] -= t * v[j];
            }
        }
    }
    q
}

/// Seeded random sparse matrix `S + shift·I` with `S` scaled to spectral
/// radius about one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSparseSpec {
    pub n: usize,
    pub density: f64,
    pub seed: u64,
    #[serde(default = "default_shift")]
    pub shift: f64,
}

fn default_shift() -> f64 {
    1.5
}

pub fn gen_random_sparse(spec: &RandomSparseSpec) -> Result<CsrMatrix> {
    if spec.n == 0 {
        return Err(LabError::invalid("random sparse: n must be positive"));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(LabError::invalid("random sparse: density must be in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = (3.0 / (spec.n as f64 * spec.density)).sqrt();
    let mut triplets = Vec::new();
    for i in 0..spec.n {
        for j in 0..spec.n {
            if rng.gen_bool(spec.density) {
                triplets.push((i, j, scale * rng.gen_range(-1.0..1.0)));
            }
        }
        triplets.push((i, i, spec.shift));
    }
    CsrMatrix::from_triplets(spec.n, &triplets)
}

/// Right-hand side rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsRule {
    Ones,
    E1,
    Random { seed: u64 },
}

impl RhsRule {
    pub fn build(&self, n: usize) -> Result<Vec<f64>> {
        match *self {
            RhsRule::Ones => ones_vector(n),
            RhsRule::E1 => {
                if n == 0 {
                    return Err(LabError::invalid("e1 of dimension 0"));
                }
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                Ok(e)
            }
            RhsRule::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            }
        }
    }
}

pub fn ones_vector(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(LabError::invalid("ones_vector: n must be at least 1"));
    }
    Ok(vec![1.0; n])
}

/// A lower-bidiagonal system whose FOM residual norms are prescribed.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribedInstance {
    /// Unit subdiagonal, diagonal `-f_{k-1}/f_k`, last diagonal entry `-1`.
    pub matrix: CsrMatrix,
    /// `f_0 · e_1`
    pub rhs: Vec<f64>,
    /// `f_0, …, f_{n-1}`
    pub targets: Vec<f64>,
}

impl PrescribedInstance {
    pub fn operator(&self) -> LinearOperator {
        LinearOperator::Csr(self.matrix.clone())
    }

    pub fn dim(&self) -> usize {
        self.targets.len()
    }
}

/// Builds the system on which FOM's residual norms are exactly `f`.
///
/// With `b = f_0 e_1` and a unit lower-bidiagonal matrix, Arnoldi returns
/// `Q = I` and `H` = the leading block of the matrix, so the diagonal
/// `h_kk = -ϑ_{k+1}/ϑ_k` with `ϑ_{k+1} = f_0/f_k` gives `‖r_k^F‖ = f_k`.
/// The last diagonal entry only has to keep the matrix nonsingular; it
/// continues the pattern with a phantom `f_n = f_{n-1}`, i.e. `-1`.
pub fn build_prescribed_instance(f: &[f64]) -> Result<PrescribedInstance> {
    if f.is_empty() {
        return Err(LabError::invalid("prescribed residuals: empty sequence"));
    }
    if let Some((j, x)) = f.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
        return Err(LabError::invalid(format!(
            "prescribed residual f_{j} = {x} is not a positive finite number"
        )));
    }
    let n = f.len();
    let mut triplets = Vec::with_capacity(2 * n);
    for k in 0..n {
        let diag = if k + 1 < n { -f[k] / f[k + 1] } else { -1.0 };
        triplets.push((k, k, diag));
        if k + 1 < n {
            triplets.push((k + 1, k, 1.0));
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = f[0];
    Ok(PrescribedInstance {
        matrix: CsrMatrix::from_triplets(n, &triplets)?,
        rhs,
        targets: f.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::axpy;

    fn parse(text: &str) -> Result<CsrMatrix> {
        parse_matrix_market(text.as_bytes())
    }

    #[test]
    fn mm_identity() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n")
            .unwrap();
        assert_eq!(m.values(), &[1.0, 1.0]);
        assert_eq!(m.row_ptr(), &[0, 1, 2]);
        assert_eq!(m.col_idx(), &[0, 1]);
    }

    #[test]
    fn mm_symmetric_expansion() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 2.0\n2 1 5.0\n2 2 3.0\n";
        let d = parse(text).unwrap().to_dense();
        assert_eq!(d, DenseMatrix::from_rows(&[vec![2.0, 5.0], vec![5.0, 3.0]]).unwrap());
    }

    #[test]
    fn mm_duplicates_summed_and_sorted() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 3 4\n1 3 1.0\n1 1 2.0\n1 3 0.5\n3 2 -1\n";
        let m = parse(text).unwrap();
        assert_eq!(m.col_idx(), &[0, 2, 1]);
        assert_eq!(m.values(), &[2.0, 1.5, -1.0]);
        assert_eq!(m.row_ptr(), &[0, 2, 2, 3]);
    }

    #[test]
    fn mm_rejects_unsupported() {
        for header in [
            "%%MatrixMarket matrix coordinate complex general",
            "%%MatrixMarket matrix coordinate pattern general",
            "%%MatrixMarket matrix array real general",
            "%%MatrixMarket matrix coordinate real skew-symmetric",
        ] {
            let text = format!("{header}\n1 1 1\n1 1 1.0\n");
            assert!(matches!(parse(&text), Err(LabError::UnsupportedFormat(_))), "{header}");
        }
    }

    #[test]
    fn mm_reports_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n%c\n2 2 2\n1 1 1.0\n3 1 1.0\n";
        match parse(text) {
            Err(LabError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n";
        assert!(matches!(parse(short), Err(LabError::Parse { .. })));
        let rect = "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n";
        assert!(matches!(parse(rect), Err(LabError::Parse { line: 2, .. })));
    }

    #[test]
    fn csr_apply_examples() {
        let id = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        assert_eq!(id.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let gap = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (2, 1, 4.0)]).unwrap();
        assert_eq!(gap.apply(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 4.0]);
        assert!(id.apply(&[1.0]).is_err());
    }

    #[test]
    fn csr_apply_matches_dense() {
        let m = gen_random_sparse(&RandomSparseSpec {
            n: 50,
            density: 0.1,
            seed: 9,
            shift: 0.0,
        })
        .unwrap();
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).cos()).collect();
        let sparse = m.apply(&v).unwrap();
        let dense = m.to_dense().matvec(&v).unwrap();
        for (a, b) in sparse.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-13 * nrm2(&dense));
        }
    }

    #[test]
    fn csr_rejects_bad_structure() {
        assert!(CsrMatrix::new(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let one = SpectrumSpec {
            intervals: vec![SpectrumInterval {
                lo: 1.0,
                hi: 20.0,
                count: 2,
            }],
        };
        assert_eq!(gen_spectrum_operator(&one).unwrap(), LinearOperator::Diagonal(vec![1.0, 20.0]));

        let two = SpectrumSpec {
            intervals: vec![
                SpectrumInterval {
                    lo: -10.0,
                    hi: -1.0,
                    count: 10,
                },
                SpectrumInterval {
                    lo: 1.0,
                    hi: 20.0,
                    count: 20,
                },
            ],
        };
        let pts = two.points().unwrap();
        assert_eq!(pts.len(), 30);
        assert_eq!(pts.iter().cloned().fold(f64::MAX, f64::min), -10.0);
        assert_eq!(pts.iter().cloned().fold(f64::MIN, f64::max), 20.0);
        assert_eq!(pts[1], -9.0);

        let mid = SpectrumSpec {
            intervals: vec![SpectrumInterval {
                lo: 2.0,
                hi: 4.0,
                count: 1,
            }],
        };
        assert_eq!(mid.points().unwrap(), vec![3.0]);

        let bad = SpectrumSpec {
            intervals: vec![SpectrumInterval {
                lo: 2.0,
                hi: 4.0,
                count: 0,
            }],
        };
        assert!(gen_spectrum_operator(&bad).is_err());
        assert!(gen_spectrum_operator(&SpectrumSpec { intervals: vec![] }).is_err());

        let two = SpectrumSpec::two_intervals_500();
        assert_eq!(two.total(), 500);
        assert_eq!(LinearOperator::Diagonal(two.points().unwrap()).exact_condition_number(), Some(20.0));
    }

    #[test]
    fn householder_product_is_orthogonal() {
        let q = random_orthogonal(20, 4);
        let qtq = q.transpose().matmul(&q).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ones_examples() {
        assert_eq!(ones_vector(1).unwrap(), vec![1.0]);
        assert_eq!(nrm2(&ones_vector(4).unwrap()), 2.0);
        assert!((nrm2(&ones_vector(500).unwrap()) - 500f64.sqrt()).abs() < 1e-12);
        assert!(ones_vector(0).is_err());
    }

    #[test]
    fn prescribed_structure() {
        let inst = build_prescribed_instance(&[1.0]).unwrap();
        assert_eq!(inst.matrix.to_dense(), DenseMatrix::from_diag(&[-1.0]));
        assert_eq!(inst.rhs, vec![1.0]);

        let inst = build_prescribed_instance(&[2.0, 4.0, 1.0]).unwrap();
        let d = inst.matrix.to_dense();
        assert_eq!(
            d,
            DenseMatrix::from_rows(&[
                vec![-0.5, 0.0, 0.0],
                vec![1.0, -4.0, 0.0],
                vec![0.0, 1.0, -1.0]
            ])
            .unwrap()
        );
        assert_eq!(inst.rhs, vec![2.0, 0.0, 0.0]);

        assert!(build_prescribed_instance(&[1.0, 0.0]).is_err());
        assert!(build_prescribed_instance(&[1.0, -2.0]).is_err());
        assert!(build_prescribed_instance(&[]).is_err());
    }

    #[test]
    fn rhs_rules() {
        assert_eq!(RhsRule::E1.build(3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(RhsRule::Random { seed: 1 }.build(4).unwrap(), RhsRule::Random { seed: 1 }.build(4).unwrap());
    }

    #[test]
    fn operator_linearity() {
        let ops = [
            LinearOperator::Csr(
                gen_random_sparse(&RandomSparseSpec {
                    n: 30,
                    density: 0.2,
                    seed: 2,
                    shift: 1.0,
                })
                .unwrap(),
            ),
            LinearOperator::Diagonal((0..30).map(|i| i as f64 - 7.5).collect()),
            LinearOperator::Dense(random_orthogonal(30, 8)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for op in &ops {
            for _ in 0..10 {
                let u: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let mut mix = u.clone();
                mix.iter_mut().for_each(|x| *x *= alpha);
                axpy(beta, &v, &mut mix);
                let lhs = op.apply(&mix).unwrap();
                let mut rhs = op.apply(&u).unwrap();
                rhs.iter_mut().for_each(|x| *x *= alpha);
                axpy(beta, &op.apply(&v).unwrap(), &mut rhs);
                let scale = nrm2(&rhs).max(1.0);
                assert!(lhs.iter().zip(&rhs).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
            }
        }
    }
}
