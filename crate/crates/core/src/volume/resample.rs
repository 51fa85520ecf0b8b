use super::{Grid3, Volume, VolumeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Voxel types that can be resampled. Labels only support nearest-neighbour.
pub trait Sample: Copy {
    const LINEAR: bool;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Sample for f32 {
    const LINEAR: bool = true;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Sample for f64 {
    const LINEAR: bool = true;
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Sample for u32 {
    const LINEAR: bool = false;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as u32
    }
}

/// Resamples to a new voxel spacing, keeping orientation and the corner-to-corner
/// field of view. Output dims are `ceil(dims * spacing / target)`.
pub fn resample<T: Sample>(
    volume: &Volume<T>,
    target_spacing: [f64; 3],
    mode: Interpolation,
) -> Result<Volume<T>, VolumeError> {
    if target_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(VolumeError::BadSpacing(target_spacing));
    }
    let src = volume.grid();
    let mut dims = [0usize; 3];
    let mut affine = *src.affine();
    let mut first = [0.0; 3];
    for a in 0..3 {
        let ratio = target_spacing[a] / src.spacing()[a];
        dims[a] = ((src.dims()[a] as f64 / ratio) - 1e-9).ceil().max(1.0) as usize;
        for row in affine.iter_mut().take(3) {
            row[a] *= ratio;
        }
        first[a] = 0.5 * ratio - 0.5;
    }
    let origin = src.voxel_to_world(first);
    for r in 0..3 {
        affine[r][3] = origin[r];
    }
    let grid = Grid3::new(dims, target_spacing, affine)?;
    resample_to_grid(volume, &grid, mode)
}

/// Samples `volume` at every voxel centre of `target`, with edge clamping.
pub fn resample_to_grid<T: Sample>(
    volume: &Volume<T>,
    target: &Grid3,
    mode: Interpolation,
) -> Result<Volume<T>, VolumeError> {
    if mode == Interpolation::Trilinear && !T::LINEAR {
        return Err(VolumeError::LinearOnLabels);
    }
    let src = volume.grid();
    if src == target {
        return Ok(volume.clone());
    }
    // voxel(target) -> voxel(source)
    let (inv, off) = src.world_to_voxel_map();
    let ta = target.affine();
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        for c in 0..4 {
            m[r][c] = (0..3).map(|q| inv[r][q] * ta[q][c]).sum::<f64>();
        }
        m[r][3] += off[r];
    }
    let [nx, ny, nz] = target.dims();
    let sd = src.dims();
    let data = volume.data();
    let mut out = Vec::with_capacity(target.len());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = [i as f64, j as f64, k as f64];
                let mut p = [0.0; 3];
                for r in 0..3 {
                    p[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3];
                }
                out.push(match mode {
                    Interpolation::Nearest => {
                        let q = |a: usize| (p[a] + 0.5).floor().clamp(0.0, (sd[a] - 1) as f64) as usize;
                        data[src.index(q(0), q(1), q(2))]
                    }
                    Interpolation::Trilinear => T::from_f64(trilinear(data, src, p)),
                });
            }
        }
    }
    Volume::new(target.clone(), out)
}

#[inline]
pub(crate) fn trilinear<T: Sample>(data: &[T], grid: &Grid3, p: [f64; 3]) -> f64 {
    let d = grid.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut w = [0.0; 3];
    for a in 0..3 {
        let x = p[a].clamp(0.0, (d[a] - 1) as f64);
        let f = x.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(d[a] - 1);
        w[a] = x - f;
    }
    let at = |i, j, k| data[grid.index(i, j, k)].to_f64();
    let c00 = at(lo[0], lo[1], lo[2]) * (1.0 - w[2]) + at(lo[0], lo[1], hi[2]) * w[2];
    let c01 = at(lo[0], hi[1], lo[2]) * (1.0 - w[2]) + at(lo[0], hi[1], hi[2]) * w[2];
    let c10 = at(hi[0], lo[1], lo[2]) * (1.0 - w[2]) + at(hi[0], lo[1], hi[2]) * w[2];
    let c11 = at(hi[0], hi[1], lo[2]) * (1.0 - w[2]) + at(hi[0], hi[1], hi[2]) * w[2];
    let c0 = c00 * (1.0 - w[1]) + c01 * w[1];
    let c1 = c10 * (1.0 - w[1]) + c11 * w[1];
    c0 * (1.0 - w[0]) + c1 * w[0]
}
