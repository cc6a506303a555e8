use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix. Rows index trajectories (the batch), columns
/// index features.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn scalar(x: f64) -> Self {
        Mat::from_vec(1, 1, vec![x])
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Mat::from_vec(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = alpha * a * b + beta * c` with explicit strides; `a` is `m x k`,
/// `b` is `k x n`, `c` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        (rows.saturating_sub(1)) * rs + (cols.saturating_sub(1)) * cs
    };
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: lhs out of bounds");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: rhs out of bounds");
    }
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: output out of bounds");
    // SAFETY: every element addressed by the strides lies inside the
    // slices (checked above) and `c` does not alias `a` or `b` because it
    // is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Affine layer `y = x w^T + b` for a batch `x` (`rows x inp`), weights
/// `w` (`out x inp`, row-major) and bias `b` (`out`).
pub(crate) fn dense_forward(x: &Mat, w: &[f64], b: &[f64], out: usize) -> Mat {
    let inp = x.cols();
    let rows = x.rows();
    let mut y = Mat::zeros(rows, out);
    gemm(
        rows,
        inp,
        out,
        1.0,
        x.as_slice(),
        (inp, 1),
        w,
        (1, inp),
        0.0,
        y.as_mut_slice(),
        (out, 1),
    );
    for r in 0..rows {
        for (yv, bv) in y.row_mut(r).iter_mut().zip(b) {
            *yv += bv;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_matches_hand_product() {
        let x = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        // w rows: [1, 0, 1], [0, 2, -1]
        let w = [1.0, 0.0, 1.0, 0.0, 2.0, -1.0];
        let b = [0.5, -0.5];
        let y = dense_forward(&x, &w, &b, 2);
        assert_eq!(y.as_slice(), &[4.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        gemm(1, 2, 1, 1.0, &a, (2, 1), &b, (1, 1), 1.0, &mut c, (1, 1));
        assert_eq!(c[0], 21.0);
    }
}
