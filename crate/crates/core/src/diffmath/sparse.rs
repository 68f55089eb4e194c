use ndarray::Array2;

/// Compressed-row matrix, used for constant operands that are mostly zero
/// (skinning weights, joint regressors).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(a: &Array2<f64>) -> Self {
        let mut indptr = Vec::with_capacity(a.nrows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in a.rows() {
            for (c, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = self.values[k];
            }
        }
        out
    }

    /// `self · b`.
    pub fn dot(&self, b: &Array2<f64>) -> Array2<f64> {
        assert_eq!(
            self.cols,
            b.nrows(),
            "sparse dot: {}x{} by {:?}",
            self.rows,
            self.cols,
            b.dim()
        );
        let mut out = Array2::zeros((self.rows, b.ncols()));
        for (r, mut dst) in out.rows_mut().into_iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                dst.scaled_add(self.values[k], &b.row(self.indices[k]));
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub fn t_dot(&self, g: &Array2<f64>) -> Array2<f64> {
        assert_eq!(
            self.rows,
            g.nrows(),
            "sparse t_dot: {}x{} by {:?}",
            self.rows,
            self.cols,
            g.dim()
        );
        let mut out = Array2::zeros((self.cols, g.ncols()));
        for r in 0..self.rows {
            let src = g.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.row_mut(self.indices[k]).scaled_add(self.values[k], &src);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn agrees_with_dense_products() {
        let a = array![[0.0, 2.0, 0.0], [1.5, 0.0, -1.0]];
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let g = array![[1.0, -1.0], [0.5, 2.0]];
        let s = SparseMatrix::from_dense(&a);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), a);
        assert_eq!(s.dot(&b), a.dot(&b));
        assert_eq!(s.t_dot(&g), a.t().dot(&g));
    }
}
