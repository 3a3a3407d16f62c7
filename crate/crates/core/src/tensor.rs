//! Dense 4-D tensors in (N, C, H, W) row-major order.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

use crate::error::{Error, Result};

/// Numeric precision a computation runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    Single,
    Double,
}

/// Real scalar type usable in tensors. Implemented for `f32` (training) and
/// `f64` (gradient oracles).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + 'static
{
    const PRECISION: Precision;

    /// `c = a * b (+ c if accumulate)` on row-major matrices, `a` is m×k,
    /// `b` is k×n. `trans_a`/`trans_b` read the stored matrix transposed.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// (row stride, col stride) of a logical rows×cols operand. A transposed
/// operand is stored row-major as cols×rows.
fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $prec:expr) => {
        impl Scalar for $t {
            const PRECISION: Precision = $prec;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c[..m * n].fill(0.0);
                    }
                    return;
                }
                let (rsa, csa) = strides(m, k, trans_a);
                let (rsb, csb) = strides(k, n, trans_b);
                // SAFETY: slice lengths were checked against the m, k, n extents and
                // the strides describe a dense row-major layout within those bounds.
                unsafe {
                    gemm::gemm(
                        m,
                        n,
                        k,
                        c.as_mut_ptr(),
                        1,
                        n as isize,
                        accumulate,
                        a.as_ptr(),
                        csa,
                        rsa,
                        b.as_ptr(),
                        csb,
                        rsb,
                        1.0,
                        1.0,
                        false,
                        false,
                        false,
                        gemm::Parallelism::None,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, Precision::Single);
impl_scalar!(f64, Precision::Double);

/// Extents of a 4-D tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Dims::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.numel() {
            return Err(Error::dims(
                "Tensor::new",
                format!("{} values for dims {dims}", data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        Tensor {
            dims,
            data: vec![value; dims.numel()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: Dims::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize) -> T) -> Self {
        let dims = dims.into();
        Tensor {
            dims,
            data: (0..dims.numel()).map(&mut f).collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.dims.index(n, c, h, w)]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, dims: impl Into<Dims>) -> Result<Self> {
        let dims = dims.into();
        if dims.numel() != self.dims.numel() {
            return Err(Error::dims(
                "reshape",
                format!("cannot view {} as {dims}", self.dims),
            ));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.dims, other.dims, "add_assign on mismatched dims");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        assert_eq!(self.dims, other.dims, "max_abs_diff on mismatched dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Fails if any element is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Bitwise equality, distinguishing e.g. `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor<T>) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

pub(crate) fn ensure_same_dims<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dims() == b.dims() {
        return Ok(());
    }
    let names = ["N", "C", "H", "W"];
    let (da, db) = (a.dims().as_array(), b.dims().as_array());
    let bad: Vec<String> = (0..4)
        .filter(|&i| da[i] != db[i])
        .map(|i| format!("axis {} ({} vs {})", names[i], da[i], db[i]))
        .collect();
    Err(Error::dims(op, bad.join(", ")))
}
