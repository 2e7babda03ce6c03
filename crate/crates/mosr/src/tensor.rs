//! Dense row-major matrices and NCHW feature volumes over f64.
//!
//! All heavy multiplications route through [`gemm`], which chunks the
//! left-hand rows at a fixed block size and fans the chunks out over rayon.
//! The partition is independent of the thread count, so results are
//! byte-identical across runs regardless of available parallelism.

use rayon::prelude::*;

/// Row block size for parallel GEMM. Fixed so the work partition (and thus
/// the exact floating-point result) never depends on the machine.
const GEMM_ROW_BLOCK: usize = 256;

/// C (m×n) = A (m×k) · B (k×n), row-major. `ta`/`tb` reinterpret the
/// corresponding input as transposed without copying: with `ta` set, `a`
/// holds a k×m row-major matrix read as its transpose.
pub fn gemm(
    ta: bool,
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsb, csb) = if tb {
        (1isize, k as isize)
    } else {
        (n as isize, 1isize)
    };
    let (rsa, csa) = if ta {
        (1isize, m as isize)
    } else {
        (k as isize, 1isize)
    };

    // Tall output: split rows into fixed blocks (contiguous C chunks).
    if !ta && m > GEMM_ROW_BLOCK {
        c.par_chunks_mut(GEMM_ROW_BLOCK * n)
            .zip(a.par_chunks(GEMM_ROW_BLOCK * k))
            .for_each(|(c_chunk, a_chunk)| {
                let rows = a_chunk.len() / k;
                unsafe {
                    matrixmultiply::dgemm(
                        rows, k, n, 1.0, a_chunk.as_ptr(), k as isize, 1, b.as_ptr(), rsb, csb,
                        0.0, c_chunk.as_mut_ptr(), n as isize, 1,
                    );
                }
            });
        return;
    }

    // Wide output with few rows: split B's columns into fixed blocks, each
    // computed into its own buffer and copied back. Every C element still
    // sees one dgemm over the full K, so the partition (fixed block size)
    // cannot change results between runs.
    if n > GEMM_ROW_BLOCK && m * k >= 1 << 14 {
        let blocks: Vec<(usize, usize)> = (0..n)
            .step_by(GEMM_ROW_BLOCK)
            .map(|s| (s, GEMM_ROW_BLOCK.min(n - s)))
            .collect();
        let parts: Vec<Vec<f64>> = blocks
            .par_iter()
            .map(|&(start, len)| {
                let mut tmp = vec![0.0; m * len];
                let b_ptr = if tb {
                    // b stored (n,k) row-major, read as its transpose.
                    unsafe { b.as_ptr().add(start * k) }
                } else {
                    unsafe { b.as_ptr().add(start) }
                };
                unsafe {
                    matrixmultiply::dgemm(
                        m, k, len, 1.0, a.as_ptr(), rsa, csa, b_ptr, rsb, csb, 0.0,
                        tmp.as_mut_ptr(), len as isize, 1,
                    );
                }
                tmp
            })
            .collect();
        for (&(start, len), part) in blocks.iter().zip(&parts) {
            for r in 0..m {
                c[r * n + start..r * n + start + len].copy_from_slice(&part[r * len..(r + 1) * len]);
            }
        }
        return;
    }

    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(),
            n as isize, 1,
        );
    }
}

/// Row-major 2-D matrix.
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
        assert_eq!(data.len(), rows * cols, "matrix data/shape mismatch");
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// self · other
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dim mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(
            false, false, self.rows, self.cols, other.cols, &self.data, &other.data, &mut out.data,
        );
        out
    }

    /// selfᵀ · other (without materializing the transpose)
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dim mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        gemm(
            true, false, self.cols, self.rows, other.cols, &self.data, &other.data, &mut out.data,
        );
        out
    }

    /// self · otherᵀ
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dim mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        gemm(
            false, true, self.rows, self.cols, other.rows, &self.data, &other.data, &mut out.data,
        );
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// NCHW feature volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Feat {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Feat {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "feature data/shape mismatch");
        Feat { n, c, h, w, data }
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    /// One sample as a contiguous slice of c·h·w values.
    pub fn sample(&self, n: usize) -> &[f64] {
        let sz = self.c * self.h * self.w;
        &self.data[n * sz..(n + 1) * sz]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let sz = self.c * self.h * self.w;
        &mut self.data[n * sz..(n + 1) * sz]
    }
}

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance between equal-length vectors.
pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// In-place numerically stabilized softmax of a full slice.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
