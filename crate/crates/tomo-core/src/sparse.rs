//! Compressed sparse row matrices with a cached transpose.

use crate::exec::Exec;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    // transpose in CSR form, i.e. the matrix in CSC form
    t_ptr: Vec<usize>,
    t_idx: Vec<u32>,
    t_values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from per-row `(col, value)` lists. Entries within a
    /// row are sorted by column and duplicates are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range {cols}");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c as u32);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::with_transpose(nrows, cols, row_ptr, col_idx, values)
    }

    /// Builds from `(row, col, value)` triples in any order.
    pub fn from_triples(rows: usize, cols: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut per_row = vec![Vec::new(); rows];
        for &(r, c, v) in triples {
            assert!(r < rows, "row {r} out of range {rows}");
            per_row[r].push((c, v));
        }
        Self::from_rows(cols, per_row)
    }

    fn with_transpose(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Self {
        let nnz = values.len();
        let mut counts = vec![0usize; cols + 1];
        for &c in &col_idx {
            counts[c as usize + 1] += 1;
        }
        for j in 0..cols {
            counts[j + 1] += counts[j];
        }
        let t_ptr = counts.clone();
        let mut next = counts;
        let mut t_idx = vec![0u32; nnz];
        let mut t_values = vec![0.0; nnz];
        // rows visited in increasing order, so each transposed row is sorted
        for r in 0..rows {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[k] as usize;
                let dst = next[c];
                t_idx[dst] = r as u32;
                t_values[dst] = values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            t_ptr,
            t_idx,
            t_values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .zip(&self.values[range])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.t_ptr[j]..self.t_ptr[j + 1];
        self.t_idx[range.clone()]
            .iter()
            .zip(&self.t_values[range])
            .map(|(&r, &v)| (r as usize, v))
    }

    /// All entries in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(c, v)| (i, c, v)))
    }

    /// `out = A x`
    pub fn mul_into(&self, x: &[f64], out: &mut [f64], exec: Exec) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        exec.fill(out, |i| self.row(i).map(|(c, v)| v * x[c]).sum());
    }

    /// `out = Aᵀ y`
    pub fn mul_t_into(&self, y: &[f64], out: &mut [f64], exec: Exec) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        exec.fill(out, |j| self.col(j).map(|(r, v)| v * y[r]).sum());
    }

    pub fn mul(&self, x: &[f64], exec: Exec) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_into(x, &mut out, exec);
        out
    }

    pub fn mul_t(&self, y: &[f64], exec: Exec) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.mul_t_into(y, &mut out, exec);
        out
    }

    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum())
            .collect()
    }

    pub fn col_abs_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| self.col(j).map(|(_, v)| v.abs()).sum())
            .collect()
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let per_row = rows.iter().map(|&r| self.row(r).collect()).collect();
        Self::from_rows(self.cols, per_row)
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.cols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let per_row = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .filter(|&(c, _)| map[c] != usize::MAX)
                    .map(|(c, v)| (map[c], v))
                    .collect()
            })
            .collect();
        Self::from_rows(cols.len(), per_row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_matches_dense() {
        let a = CsrMatrix::from_triples(
            3,
            4,
            &[
                (0, 1, 2.0),
                (2, 3, -1.0),
                (1, 0, 4.0),
                (0, 3, 1.0),
                (0, 1, 1.0),
            ],
        );
        assert_eq!(a.nnz(), 4);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(a.mul(&x, Exec::Sequential), vec![10.0, 4.0, -4.0]);
        let y = [1.0, 1.0, 2.0];
        assert_eq!(a.mul_t(&y, Exec::Parallel), vec![4.0, 3.0, 0.0, -1.0]);
    }

    #[test]
    fn select_rows_and_cols() {
        let a =
            CsrMatrix::from_triples(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (2, 0, 5.0)]);
        let r = a.select_rows(&[2, 0]);
        assert_eq!(
            r.triples().collect::<Vec<_>>(),
            vec![(0, 0, 5.0), (0, 2, 3.0), (1, 0, 1.0)]
        );
        let c = a.select_cols(&[2]);
        assert_eq!(c.triples().collect::<Vec<_>>(), vec![(2, 0, 3.0)]);
    }
}
