//! 3D volume data model: voxel grids with a world affine, intensity and label
//! volumes, NIfTI-1 I/O, resampling and intensity normalization.
//!
//! Voxel data is stored row-major with the last axis fastest, i.e. the linear
//! index of voxel `(i, j, k)` is `(i * ny + j) * nz + k`.

pub mod nifti;
pub(crate) mod resample;

pub use resample::{resample, resample_to_grid, Interpolation, Sample};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("grid dimensions must be >= 1, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("voxel spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("affine is singular")]
    SingularAffine,
    #[error("affine column {axis} has norm {norm}, expected spacing {spacing}")]
    AffineSpacingMismatch { axis: usize, norm: f64, spacing: f64 },
    #[error("data length {found} does not match grid size {expected}")]
    DataLength { expected: usize, found: usize },
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("trilinear interpolation is not defined for label volumes")]
    LinearOnLabels,
    #[error("grids differ: {0:?} vs {1:?}")]
    GridMismatch([usize; 3], [usize; 3]),
}

pub type Affine = [[f64; 4]; 4];

/// Sampling grid: voxel counts, spacing in mm and the voxel-to-world affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
}

impl Grid3 {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Affine) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        for axis in 0..3 {
            let norm = (0..3).map(|r| affine[r][axis].powi(2)).sum::<f64>().sqrt();
            if (norm - spacing[axis]).abs() > 1e-6 * spacing[axis] {
                return Err(VolumeError::AffineSpacingMismatch { axis, norm, spacing: spacing[axis] });
            }
        }
        if det3(&affine).abs() < 1e-12 {
            return Err(VolumeError::SingularAffine);
        }
        Ok(Self { dims, spacing, affine })
    }

    /// Axis-aligned grid with the origin at voxel (0, 0, 0).
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        let mut affine = identity4();
        for a in 0..3 {
            affine[a][a] = spacing[a];
        }
        Self::new(dims, spacing, affine)
    }

    /// 1 mm isotropic grid with identity affine.
    pub fn unit(dims: [usize; 3]) -> Self {
        Self::axis_aligned(dims, [1.0; 3]).expect("positive dims")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let a = &self.affine;
        let mut w = [0.0; 3];
        for (r, wr) in w.iter_mut().enumerate() {
            *wr = a[r][0] * v[0] + a[r][1] * v[1] + a[r][2] * v[2] + a[r][3];
        }
        w
    }

    /// Inverse of the 3x4 affine block, as (matrix, translation).
    pub fn world_to_voxel_map(&self) -> ([[f64; 3]; 3], [f64; 3]) {
        let inv = inverse3(&self.affine).expect("validated affine is invertible");
        let t = [self.affine[0][3], self.affine[1][3], self.affine[2][3]];
        let mut off = [0.0; 3];
        for r in 0..3 {
            off[r] = -(inv[r][0] * t[0] + inv[r][1] * t[1] + inv[r][2] * t[2]);
        }
        (inv, off)
    }

    /// Same pose and spacing, new voxel counts; the origin moves by `shift`
    /// voxels (negative shifts pad before the first voxel).
    pub fn reshaped(&self, dims: [usize; 3], shift: [f64; 3]) -> Result<Self, VolumeError> {
        let mut affine = self.affine;
        let origin = self.voxel_to_world(shift);
        for r in 0..3 {
            affine[r][3] = origin[r];
        }
        Self::new(dims, self.spacing, affine)
    }
}

pub(crate) fn identity4() -> Affine {
    let mut a = [[0.0; 4]; 4];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

fn det3(a: &Affine) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inverse3(a: &Affine) -> Option<[[f64; 3]; 3]> {
    let det = det3(a);
    if det.abs() < 1e-300 {
        return None;
    }
    let m = |r: usize, c: usize| a[r][c];
    let mut inv = [[0.0; 3]; 3];
    inv[0][0] = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / det;
    inv[0][1] = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / det;
    inv[0][2] = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / det;
    inv[1][0] = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / det;
    inv[1][1] = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / det;
    inv[1][2] = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / det;
    inv[2][0] = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / det;
    inv[2][1] = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / det;
    inv[2][2] = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / det;
    Some(inv)
}

/// A dense scalar field on a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    grid: Grid3,
    data: Vec<T>,
}

/// Intensity image, 32-bit real voxels.
pub type IntensityVolume = Volume<f32>;
/// Label map, non-negative integer voxels.
pub type LabelVolume = Volume<u32>;

impl<T: Copy> Volume<T> {
    pub fn new(grid: Grid3, data: Vec<T>) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::DataLength { expected: grid.len(), found: data.len() });
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid3, value: T) -> Self {
        let data = vec![value; grid.len()];
        Self { grid, data }
    }

    pub fn from_fn(grid: Grid3, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let [nx, ny, nz] = grid.dims();
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
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

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.index(i, j, k)]
    }

    /// Same grid, new voxel values.
    pub fn with_data<U: Copy>(&self, data: Vec<U>) -> Result<Volume<U>, VolumeError> {
        Volume::new(self.grid.clone(), data)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume { grid: self.grid.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Zero-pads (with `fill`) `before` voxels ahead of and `after` voxels past
    /// each axis; the world position of existing voxels is unchanged.
    pub fn pad(&self, before: [usize; 3], after: [usize; 3], fill: T) -> Volume<T> {
        let [nx, ny, nz] = self.dims();
        let nd = [nx + before[0] + after[0], ny + before[1] + after[1], nz + before[2] + after[2]];
        let shift = [-(before[0] as f64), -(before[1] as f64), -(before[2] as f64)];
        let grid = self.grid.reshaped(nd, shift).expect("padding keeps a valid grid");
        let mut out = Volume::filled(grid, fill);
        for i in 0..nx {
            for j in 0..ny {
                let src = self.grid.index(i, j, 0);
                let dst = out.grid.index(i + before[0], j + before[1], before[2]);
                out.data[dst..dst + nz].copy_from_slice(&self.data[src..src + nz]);
            }
        }
        out
    }

    /// Extracts the box starting at `start` with extent `dims`.
    pub fn crop(&self, start: [usize; 3], dims: [usize; 3]) -> Volume<T> {
        let shift = [start[0] as f64, start[1] as f64, start[2] as f64];
        let grid = self.grid.reshaped(dims, shift).expect("crop keeps a valid grid");
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let src = self.grid.index(i + start[0], j + start[1], start[2]);
                data.extend_from_slice(&self.data[src..src + dims[2]]);
            }
        }
        Volume { grid, data }
    }
}

impl IntensityVolume {
    pub fn check_finite(&self) -> Result<(), VolumeError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(VolumeError::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// `(min, max)` over all voxels.
    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl LabelVolume {
    /// Sorted distinct label values.
    pub fn label_set(&self) -> Vec<u32> {
        let mut set: Vec<u32> = self.data.clone();
        set.sort_unstable();
        set.dedup();
        set
    }
}

/// Min-max normalization to [0, 1]. A constant volume maps to all zeros.
pub fn normalize_minmax(volume: &IntensityVolume) -> Result<IntensityVolume, VolumeError> {
    volume.check_finite()?;
    let mut out = volume.clone();
    normalize_in_place(&mut out.data);
    Ok(out)
}

pub(crate) fn normalize_in_place(data: &mut [f32]) {
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v as f64), hi.max(v as f64))
    });
    let range = hi - lo;
    if !(range > 0.0) {
        data.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in data.iter_mut() {
        *v = (((*v as f64) - lo) / range).clamp(0.0, 1.0) as f32;
    }
}
