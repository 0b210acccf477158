//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable as tensor element: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self;

    /// Widening conversion to `f64`.
    fn f64(self) -> f64;

    /// `C = A·B + beta·C` for an `m×k` matrix `A` and a `k×n` matrix `B`,
    /// each addressed through row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_strides: (usize, usize), b: &[Self], b_strides: (usize, usize), beta: Self, c: &mut [Self], c_strides: (usize, usize));
}

fn span(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_gemm {
    ($f:path) => {
        fn gemm(m: usize, k: usize, n: usize, a: &[Self], sa: (usize, usize), b: &[Self], sb: (usize, usize), beta: Self, c: &mut [Self], sc: (usize, usize)) {
            assert!(span(m, k, sa) <= a.len() && span(k, n, sb) <= b.len() && span(m, n, sc) <= c.len());
            // SAFETY: every addressed element lies inside its slice (checked above),
            // and `c` is uniquely borrowed.
            unsafe {
                $f(
                    m, k, n, 1.0,
                    a.as_ptr(), sa.0 as isize, sa.1 as isize,
                    b.as_ptr(), sb.0 as isize, sb.1 as isize,
                    beta,
                    c.as_mut_ptr(), sc.0 as isize, sc.1 as isize,
                );
            }
        }
    };
}

impl Scalar for f64 {
    #[inline(always)]
    fn of(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self
    }

    impl_gemm!(matrixmultiply::dgemm);
}

impl Scalar for f32 {
    #[inline(always)]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self as f64
    }

    impl_gemm!(matrixmultiply::sgemm);
}
