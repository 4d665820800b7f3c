//! Floating-point scalar abstraction.
//!
//! Every numeric kernel in this crate is generic over [`Real`] so the same
//! code runs at `f64` (default, used by all oracle tests) or `f32` (speed
//! option). The trait also carries the GEMM entry point so the network layers
//! can dispatch to an optimized kernel per concrete type.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, NumCast, ToPrimitive};
use rustfft::FftNum;

/// Row-major strides for an `m x k` operand, optionally transposed in place.
///
/// With `trans` set, the slice is stored as the `k x m` row-major matrix and
/// read through as its transpose.
fn strides(trans: bool, rows_logical: usize, cols_logical: usize) -> (isize, isize) {
    if trans {
        (1, rows_logical as isize)
    } else {
        (cols_logical as isize, 1)
    }
}

/// Scalar type of signals, scalograms and network tensors.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + FftNum
    + Debug
    + Display
    + LowerExp
{
    /// `c = alpha * op(a)(m x k) * op(b)(k x n) + beta * c`.
    ///
    /// Slices are row-major; `transa`/`transb` read an operand stored with
    /// its dimensions swapped as the transpose, without copying.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        transa: bool,
        transb: bool,
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    /// Conversion from `f64`; exact for `f64`, rounded for `f32`.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to Real")
    }

    /// Widening view as `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Real converts to f64")
    }

    /// Conversion from a sample/index count.
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn gemm(
                transa: bool,
                transb: bool,
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                debug_assert_eq!(a.len(), m * k);
                debug_assert_eq!(b.len(), k * n);
                debug_assert_eq!(c.len(), m * n);
                let (rsa, csa) = strides(transa, m, k);
                let (rsb, csb) = strides(transb, k, n);
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f64, matrixmultiply::dgemm);
impl_real!(f32, matrixmultiply::sgemm);
