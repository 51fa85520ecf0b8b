//! Dense row-major tensors used by the neural core.
//!
//! Feature maps follow the `[C, X, Y, Z]` convention. The element type is
//! generic so that every layer can also run in 64-bit for gradient checks.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of a [`Tensor`]: `f32` for training and inference, `f64` for
/// reference checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    /// `C <- alpha * A B + beta * C` with arbitrary strides (see `matrixmultiply`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: callers pass slices whose extents cover every strided
                // access; this is checked by the debug assertions below.
                debug_assert!(a.len() >= (m - 1) * rsa as usize + k.saturating_sub(1) * csa as usize + 1 || k == 0);
                debug_assert!(c.len() >= (m - 1) * rsc as usize + (n - 1) * csc as usize + 1);
                unsafe {
                    $f(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc);
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    /// Panics if `data.len()` differs from the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data/shape mismatch for {shape:?}");
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Number of channels of a `[C, X, Y, Z]` map.
    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Spatial extent of a `[C, X, Y, Z]` map.
    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn voxels(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.voxels();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.voxels();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| U::lit(v.f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Per-voxel index of the largest channel (first one on ties).
    pub fn argmax_channels(&self) -> Vec<usize> {
        let c = self.channels();
        let p = self.voxels();
        (0..p)
            .map(|v| {
                let mut best = 0;
                for ch in 1..c {
                    if self.data[ch * p + v] > self.data[best * p + v] {
                        best = ch;
                    }
                }
                best
            })
            .collect()
    }

    /// Channel-wise concatenation of two maps with equal spatial extent.
    pub fn concat_channels(&self, other: &Self) -> Self {
        assert_eq!(self.spatial(), other.spatial(), "spatial extents differ");
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        let mut shape = self.shape.clone();
        shape[0] += other.shape[0];
        Self { shape, data }
    }

    /// Keeps channels `start..end`.
    pub fn slice_channels(&self, start: usize, end: usize) -> Self {
        let p = self.voxels();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self { shape, data: self.data[start * p..end * p].to_vec() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Zero-pads the spatial axes of a `[C, X, Y, Z]` map.
    pub fn pad_spatial(&self, before: [usize; 3], after: [usize; 3]) -> Self {
        let c = self.channels();
        let [x, y, z] = self.spatial();
        let nd = [x + before[0] + after[0], y + before[1] + after[1], z + before[2] + after[2]];
        let mut out = Self::zeros(&[c, nd[0], nd[1], nd[2]]);
        for ch in 0..c {
            for i in 0..x {
                for j in 0..y {
                    let src = ((ch * x + i) * y + j) * z;
                    let dst = ((ch * nd[0] + i + before[0]) * nd[1] + j + before[1]) * nd[2] + before[2];
                    out.data[dst..dst + z].copy_from_slice(&self.data[src..src + z]);
                }
            }
        }
        out
    }

    /// Extracts a spatial box from every channel.
    pub fn crop_spatial(&self, start: [usize; 3], dims: [usize; 3]) -> Self {
        let c = self.channels();
        let [x, y, z] = self.spatial();
        let mut data = Vec::with_capacity(c * dims.iter().product::<usize>());
        for ch in 0..c {
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    let src = ((ch * x + i + start[0]) * y + j + start[1]) * z + start[2];
                    data.extend_from_slice(&self.data[src..src + dims[2]]);
                }
            }
        }
        Self { shape: vec![c, dims[0], dims[1], dims[2]], data }
    }
}
