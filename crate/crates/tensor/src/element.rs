use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the engine can run on.
///
/// Training runs in `f32`; the `f64` instantiation exists so gradients can be
/// verified against finite differences.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const DTYPE: &'static str;

    /// `c = a * b` (or `c += a * b` when `accumulate`) for row/column strided
    /// matrices of size `m x k` and `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        c: (&mut [Self], isize, isize),
        accumulate: bool,
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

// Largest linear offset touched by a strided `rows x cols` view.
fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

macro_rules! impl_element {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Element for $t {
            const DTYPE: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                c: (&mut [Self], isize, isize),
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(span(m, k, a.1, a.2) <= a.0.len(), "gemm: lhs out of bounds");
                assert!(span(k, n, b.1, b.2) <= b.0.len(), "gemm: rhs out of bounds");
                assert!(
                    span(m, n, c.1, c.2) <= c.0.len(),
                    "gemm: output out of bounds"
                );
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: every strided access is bounded by the span checks above,
                // and `c` is a unique borrow that does not alias `a` or `b`.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        c.2,
                    );
                }
            }
        }
    };
}

impl_element!(f32, "f32", matrixmultiply::sgemm);
impl_element!(f64, "f64", matrixmultiply::dgemm);
