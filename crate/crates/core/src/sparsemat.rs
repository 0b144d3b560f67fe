//! Compressed sparse row storage, products, norms and Matrix Market I/O.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest dense conversion allowed; dense copies exist for reference checks only.
pub const DENSE_LIMIT: usize = 2000;

/// Real sparse matrix in canonical CSR form (sorted, unique column indices per row).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating the canonical-form invariants.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::InvalidArgument(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidArgument(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidArgument(
                "col_indices and values differ in length".into(),
            ));
        }
        for r in 0..nrows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "row_offsets decreases at row {r}"
                )));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= ncols) {
                return Err(Error::InvalidArgument(format!(
                    "column index out of range in row {r}"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from (row, col, value) triplets. Duplicates are summed; explicit zeros kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for i in order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Converts a dense matrix, dropping exact zeros.
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &triplets)
            .expect("indices come from the dense shape")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `r` as (column, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Iterates all stored entries as (row, column, value) in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// y = Mx.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols || y.len() != self.nrows {
            return Err(Error::DimensionMismatch(format!(
                "matvec of {}x{} matrix with x of length {} into y of length {}",
                self.nrows,
                self.ncols,
                x.len(),
                y.len()
            )));
        }
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
        Ok(())
    }

    /// x = Mᵀy.
    pub fn matvec_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.ncols];
        self.matvec_transpose_into(y, &mut x)?;
        Ok(x)
    }

    pub fn matvec_transpose_into(&self, y: &[f64], x: &mut [f64]) -> Result<()> {
        if y.len() != self.nrows || x.len() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "transpose matvec of {}x{} matrix with y of length {} into x of length {}",
                self.nrows,
                self.ncols,
                y.len(),
                x.len()
            )));
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                x[c] += v * yr;
            }
        }
        Ok(())
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norminf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Dense copy for reference computations. Refuses matrices beyond [`DENSE_LIMIT`].
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.nrows > DENSE_LIMIT || self.ncols > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense conversion limited to {DENSE_LIMIT}x{DENSE_LIMIT}, matrix is {}x{}",
                self.nrows, self.ncols
            )));
        }
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        Ok(d)
    }
}

/// The n×n tridiagonal regularization matrix with 3 on the diagonal and 1 off it.
pub fn second_order_l(n: usize) -> Result<SparseMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "second-order L needs n >= 2, got {n}"
        )));
    }
    let mut triplets = Vec::with_capacity(3 * n - 2);
    for i in 0..n {
        if i > 0 {
            triplets.push((i, i - 1, 1.0));
        }
        triplets.push((i, i, 3.0));
        if i + 1 < n {
            triplets.push((i, i + 1, 1.0));
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmSymmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a real Matrix Market file (coordinate or array; general or symmetric).
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let file = File::open(path.as_ref())?;
    parse_matrix_market(BufReader::new(file))
}

/// Parses Matrix Market content from any buffered reader.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<SparseMatrix> {
    let mut lines = reader.lines().enumerate();

    let (lineno, header) = match lines.next() {
        Some((i, l)) => (i + 1, l?),
        None => return Err(parse_err(1, "empty file")),
    };
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(lineno, "missing %%MatrixMarket matrix header"));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MmFormat::Coordinate,
        "array" => MmFormat::Array,
        other => return Err(Error::Unsupported(format!("format '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(Error::Unsupported(format!("field '{other}'"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => return Err(Error::Unsupported(format!("symmetry '{other}'"))),
    };

    // Skip comments and blank lines up to the size line.
    let mut size_line = None;
    for (i, l) in lines.by_ref() {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some((i + 1, l));
        break;
    }
    let (size_no, size_line) = size_line.ok_or_else(|| parse_err(lineno, "missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(size_no, format!("bad size line: {e}")))?;

    let mut triplets = Vec::new();
    match format {
        MmFormat::Coordinate => {
            if dims.len() != 3 {
                return Err(parse_err(size_no, "coordinate size line needs 3 integers"));
            }
            let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
            if symmetry == MmSymmetry::Symmetric && nrows != ncols {
                return Err(parse_err(size_no, "symmetric matrix must be square"));
            }
            let mut seen = 0usize;
            for (i, l) in lines {
                let l = l?;
                let t = l.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                let ln = i + 1;
                let mut it = t.split_whitespace();
                let r = parse_index(it.next(), ln, nrows)?;
                let c = parse_index(it.next(), ln, ncols)?;
                let v = parse_value(it.next(), ln)?;
                triplets.push((r, c, v));
                if symmetry == MmSymmetry::Symmetric && r != c {
                    triplets.push((c, r, v));
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(
                    size_no,
                    format!("header declares {nnz} entries, found {seen}"),
                ));
            }
            SparseMatrix::from_triplets(nrows, ncols, &triplets)
        }
        MmFormat::Array => {
            if dims.len() != 2 {
                return Err(parse_err(size_no, "array size line needs 2 integers"));
            }
            let (nrows, ncols) = (dims[0], dims[1]);
            if symmetry == MmSymmetry::Symmetric && nrows != ncols {
                return Err(parse_err(size_no, "symmetric matrix must be square"));
            }
            // Column-major; symmetric arrays store the lower triangle only.
            let positions: Vec<(usize, usize)> = match symmetry {
                MmSymmetry::General => (0..ncols)
                    .flat_map(|c| (0..nrows).map(move |r| (r, c)))
                    .collect(),
                MmSymmetry::Symmetric => (0..ncols)
                    .flat_map(|c| (c..nrows).map(move |r| (r, c)))
                    .collect(),
            };
            let mut pos = positions.iter();
            for (i, l) in lines {
                let l = l?;
                let t = l.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                let ln = i + 1;
                let v = parse_value(Some(t), ln)?;
                let &(r, c) = pos
                    .next()
                    .ok_or_else(|| parse_err(ln, "more values than the declared size"))?;
                if v != 0.0 {
                    triplets.push((r, c, v));
                    if symmetry == MmSymmetry::Symmetric && r != c {
                        triplets.push((c, r, v));
                    }
                }
            }
            if pos.next().is_some() {
                return Err(parse_err(size_no, "fewer values than the declared size"));
            }
            SparseMatrix::from_triplets(nrows, ncols, &triplets)
        }
    }
}

fn parse_index(tok: Option<&str>, line: usize, bound: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing index"))?;
    let i: usize = tok
        .parse()
        .map_err(|e| parse_err(line, format!("bad index '{tok}': {e}")))?;
    if i == 0 || i > bound {
        return Err(parse_err(
            line,
            format!("index {i} outside 1..={bound}"),
        ));
    }
    Ok(i - 1)
}

fn parse_value(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    tok.parse::<f64>()
        .map_err(|e| parse_err(line, format!("bad value '{tok}': {e}")))
}

/// Writes a coordinate/real/general file. Values use shortest round-trip formatting.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(format_matrix_market(m).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn format_matrix_market(m: &SparseMatrix) -> String {
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.nrows, m.ncols, m.nnz());
    for (r, c, v) in m.triplets() {
        let _ = writeln!(s, "{} {} {:e}", r + 1, c + 1, v);
    }
    s
}
