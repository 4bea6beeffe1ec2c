use super::{DenseMatrix, NumericsError};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row; every
/// constructor enforces this, so downstream kernels may rely on it.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let bad = |msg: String| Err(NumericsError::InvalidCsr(msg));
        if row_offsets.len() != rows + 1 {
            return bad(format!(
                "row_offsets has {} entries, expected {}",
                row_offsets.len(),
                rows + 1
            ));
        }
        if row_offsets[0] != 0 {
            return bad("row_offsets must start at 0".into());
        }
        if col_indices.len() != values.len() {
            return bad("col_indices and values differ in length".into());
        }
        if *row_offsets.last().unwrap() != col_indices.len() {
            return bad("last row offset must equal nnz".into());
        }
        for r in 0..rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return bad(format!("row_offsets decrease at row {r}"));
            }
            let cols_in_row = &col_indices[start..end];
            if cols_in_row.iter().any(|&c| c >= cols) {
                return bad(format!("column index out of range in row {r}"));
            }
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices not strictly increasing in row {r}"));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, NumericsError> {
        let mut sorted: Vec<_> = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(NumericsError::InvalidCsr(format!(
                "triplet ({r}, {c}) outside {rows}x{cols}"
            )));
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::new(rows, cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
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

    /// Iterates `(col, value)` pairs of one row in column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        match self.col_indices[s..e].binary_search(&c) {
            Ok(k) => self.values[s + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        Self::from_triplets(self.cols, self.rows, &triplets).expect("transpose of valid CSR")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    /// `self · dense`, accumulated per row in column order.
    pub fn matmul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
        if self.cols != b.rows() {
            return Err(NumericsError::shape(
                "sparse_dense_matmul",
                (self.rows, self.cols),
                b.shape(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, b.cols());
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, &x) in out_row.iter_mut().zip(b.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, used for gradients through a constant sparse operand.
    pub fn transpose_matmul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
        if self.rows != b.rows() {
            return Err(NumericsError::shape(
                "sparse_transpose_dense_matmul",
                (self.cols, self.rows),
                b.shape(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, b.cols());
        for r in 0..self.rows {
            let g = b.row(r);
            for (c, v) in self.row(r) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(g) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}
