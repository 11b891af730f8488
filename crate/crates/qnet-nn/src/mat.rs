//! Row-major matrix with just the operations the tape needs.

/// Dense row-major matrix. Vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// y = A x for a column vector x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input dim mismatch");
        assert_eq!(y.len(), self.rows, "matvec output dim mismatch");
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x.iter()) {
                acc += w * xi;
            }
            *out = acc;
        }
    }

    /// x_grad += A^T g (used by the matvec backward rule).
    pub fn matvec_transpose_acc(&self, g: &[f64], x_grad: &mut [f64]) {
        assert_eq!(g.len(), self.rows);
        assert_eq!(x_grad.len(), self.cols);
        for (r, gr) in g.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (xg, w) in x_grad.iter_mut().zip(row.iter()) {
                *xg += w * gr;
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// grad_W += g x^T (outer product accumulate).
pub fn outer_acc(w_grad: &mut Mat, g: &[f64], x: &[f64]) {
    assert_eq!(g.len(), w_grad.rows);
    assert_eq!(x.len(), w_grad.cols);
    for (r, gr) in g.iter().enumerate() {
        let row = &mut w_grad.data[r * w_grad.cols..(r + 1) * w_grad.cols];
        for (wg, xi) in row.iter_mut().zip(x.iter()) {
            *wg += gr * xi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let m = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let mut y = [0.0; 2];
        m.matvec(&[3.0, -4.0], &mut y);
        assert_eq!(y, [3.0, -4.0]);
    }

    #[test]
    fn transpose_acc_matches_manual() {
        let m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut xg = vec![0.0; 3];
        m.matvec_transpose_acc(&[1.0, 1.0], &mut xg);
        assert_eq!(xg, vec![5.0, 7.0, 9.0]);
    }
}
