use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of tensors: `f32` for training, `f64` for
/// gradient checks and oracles.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + DivAssign + Sum<Self>
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and
    /// `m x n` matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    /// Dense row-major `rows x cols` matrix.
    pub fn dense(data: &'a [T], rows: usize, cols: usize) -> Self {
        View { data, offset: 0, rows, cols, rs: cols, cs: 1 }
    }

    /// Transposed view of a dense row-major `rows x cols` matrix.
    pub fn dense_t(data: &'a [T], rows: usize, cols: usize) -> Self {
        View { data, offset: 0, rows: cols, cols: rows, rs: 1, cs: cols }
    }

    pub fn strided(data: &'a [T], offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        View { data, offset, rows, cols, rs, cs }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// `c = alpha * a * b + beta * c` where `c` is a strided window of `out`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(alpha: T, a: View<T>, b: View<T>, beta: T, out: &mut [T], offset: usize, rs: usize, cs: usize) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    a.check();
    b.check();
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    let last = offset + (m - 1) * rs + (n - 1) * cs;
    assert!(last < out.len(), "output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let c = &mut out[offset + i * rs + j * cs];
                *c = if beta == T::zero() { T::zero() } else { *c * beta };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above, and `out` is a
    // distinct mutable borrow so it cannot alias the inputs.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr().add(offset),
            rs as isize,
            cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_strides() {
        let a: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect(); // 3x4
        let b: Vec<f64> = (0..8).map(|i| (i * i) as f64 * 0.1).collect(); // 4x2
        let mut c = vec![1.0; 6];
        gemm(2.0, View::dense(&a, 3, 4), View::dense(&b, 4, 2), 1.0, &mut c, 0, 2, 1);
        for i in 0..3 {
            for j in 0..2 {
                let dot: f64 = (0..4).map(|t| a[i * 4 + t] * b[t * 2 + j]).sum();
                assert!((c[i * 2 + j] - (1.0 + 2.0 * dot)).abs() < 1e-12);
            }
        }
        // Both operands as transposed views.
        let mut d = vec![0.0; 9];
        gemm(1.0, View::dense_t(&a, 4, 3), View::dense_t(&a, 3, 4), 0.0, &mut d, 0, 3, 1);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..4).map(|t| a[t * 3 + i] * a[j * 4 + t]).sum();
                assert!((d[i * 3 + j] - dot).abs() < 1e-12);
            }
        }
    }
}
