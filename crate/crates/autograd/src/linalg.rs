use gemm::Parallelism;

use crate::Real;

/// Strided view of a matrix inside a slice: element `(i, j)` lives at
/// `offset + i * rs + j * cs`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Mat {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `dst (+)= a · b` for strided matrices. When `accumulate` is false the
/// destination is overwritten.
pub(crate) fn gemm_into<F: Real>(
    dst: &mut [F],
    d: Mat,
    a: &[F],
    am: Mat,
    b: &[F],
    bm: Mat,
    accumulate: bool,
) {
    assert_eq!(am.cols, bm.rows, "inner dimension mismatch");
    assert_eq!((d.rows, d.cols), (am.rows, bm.cols), "output shape mismatch");
    assert!(dst.len() >= d.span() && a.len() >= am.span() && b.len() >= bm.span());
    if d.rows == 0 || d.cols == 0 {
        return;
    }
    if am.cols == 0 {
        if !accumulate {
            for i in 0..d.rows {
                for j in 0..d.cols {
                    dst[i * d.rs + j * d.cs] = F::zero();
                }
            }
        }
        return;
    }
    // SAFETY: spans were checked against the slice lengths above and the
    // destination does not alias either operand (distinct borrows).
    unsafe {
        gemm::gemm(
            d.rows,
            d.cols,
            am.cols,
            dst.as_mut_ptr(),
            d.cs as isize,
            d.rs as isize,
            accumulate,
            a.as_ptr(),
            am.cs as isize,
            am.rs as isize,
            b.as_ptr(),
            bm.cs as isize,
            bm.rs as isize,
            F::one(),
            F::one(),
            false,
            false,
            false,
            Parallelism::None,
        );
    }
}

/// Row-major `a [m, k] · b [k, n]`.
pub fn matmul<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    gemm_into(
        &mut out,
        Mat::row_major(m, n),
        a,
        Mat::row_major(m, k),
        b,
        Mat::row_major(k, n),
        false,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let got = matmul(&a, &b, m, k, n);
        for (x, y) in got.iter().zip(naive(&a, &b, m, k, n)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_views_and_accumulation() {
        let (m, k, n) = (4, 3, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64).collect();
        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let b: Vec<f64> = (0..k * n).map(|i| 1.0 + i as f64).collect();
        let mut out = vec![1.0; m * n];
        gemm_into(
            &mut out,
            Mat::row_major(m, n),
            &at,
            Mat::row_major(k, m).t(),
            &b,
            Mat::row_major(k, n),
            true,
        );
        let want = naive(&a, &b, m, k, n);
        for (x, y) in out.iter().zip(want) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}
