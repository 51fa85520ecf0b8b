use super::GenParams;
use crate::rng::RngStream;
use crate::volume::resample::{trilinear, Sample};
use crate::volume::{Grid3, IntensityVolume, LabelVolume, Volume};

/// A pull-back map: output voxel `x` reads the input at
/// `c + M (x - c) + offset + u(x)` (voxel units), where `c` is the volume
/// centre and `u` a smooth displacement interpolated from a control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    grid: Grid3,
    matrix: [[f64; 3]; 3],
    offset: [f64; 3],
    control: Option<ControlField>,
}

#[derive(Debug, Clone, PartialEq)]
struct ControlField {
    grid: Grid3,
    step: [usize; 3],
    /// Per-axis displacement in voxels, one volume per axis.
    values: [Vec<f64>; 3],
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn rotation(deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = deg.map(f64::to_radians);
    let rx = [[1.0, 0.0, 0.0], [0.0, a.cos(), -a.sin()], [0.0, a.sin(), a.cos()]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rz = [[c.cos(), -c.sin(), 0.0], [c.sin(), c.cos(), 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

/// Control points sit on every `step`-th voxel, with one extra point past the
/// last voxel when the extent is not a multiple of the step.
pub(crate) fn control_grid(dims: [usize; 3], spacing: [f64; 3], grid_mm: f64) -> ([usize; 3], Grid3) {
    let mut step = [1usize; 3];
    let mut cdims = [1usize; 3];
    for a in 0..3 {
        step[a] = ((grid_mm / spacing[a]).round() as usize).max(1);
        cdims[a] = (dims[a] - 1).div_ceil(step[a]) + 1;
    }
    (step, Grid3::unit(cdims))
}

/// Trilinear upsampling of a control-grid field at voxel `(i, j, k)`.
pub(crate) fn control_at(values: &[f64], grid: &Grid3, step: [usize; 3], v: [usize; 3]) -> f64 {
    let p = [0, 1, 2].map(|a| v[a] as f64 / step[a] as f64);
    trilinear(values, grid, p)
}

impl Deformation {
    pub fn identity(grid: &Grid3) -> Self {
        Self {
            grid: grid.clone(),
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            offset: [0.0; 3],
            control: None,
        }
    }

    /// Builds the affine part from `params` and draws the elastic field from `rng`.
    pub fn sample(grid: &Grid3, params: &GenParams, rng: &mut RngStream) -> Self {
        let sp = grid.spacing();
        let sc = params.scale;
        let [sxy, sxz, syz] = params.shear;
        let scale = [[sc[0], 0.0, 0.0], [0.0, sc[1], 0.0], [0.0, 0.0, sc[2]]];
        let shear = [[1.0, sxy, sxz], [0.0, 1.0, syz], [0.0, 0.0, 1.0]];
        let a_mm = matmul(&rotation(params.rotation_deg), &matmul(&shear, &scale));
        let mut matrix = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                matrix[r][c] = a_mm[r][c] * sp[c] / sp[r];
            }
        }
        let offset = [0, 1, 2].map(|a| -params.translation_mm[a] / sp[a]);
        let control = (params.elastic_std_mm > 0.0).then(|| {
            let (step, cgrid) = control_grid(grid.dims(), sp, params.elastic_grid_mm);
            let values = [0, 1, 2]
                .map(|a| (0..cgrid.len()).map(|_| rng.normal() * params.elastic_std_mm / sp[a]).collect());
            ControlField { grid: cgrid, step, values }
        });
        Self { grid: grid.clone(), matrix, offset, control }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// Source position (voxel coordinates) read by output voxel `v`.
    pub fn source(&self, v: [usize; 3]) -> [f64; 3] {
        let d = self.grid.dims();
        let c = [0, 1, 2].map(|a| (d[a] as f64 - 1.0) / 2.0);
        let x = [0, 1, 2].map(|a| v[a] as f64 - c[a]);
        let mut p = [0.0; 3];
        for r in 0..3 {
            p[r] = c[r] + self.matrix[r][0] * x[0] + self.matrix[r][1] * x[1] + self.matrix[r][2] * x[2] + self.offset[r];
            if let Some(f) = &self.control {
                p[r] += control_at(&f.values[r], &f.grid, f.step, v);
            }
        }
        p
    }

    fn check<T: Copy>(&self, volume: &Volume<T>) {
        assert_eq!(volume.dims(), self.grid.dims(), "deformation built for a different grid");
    }

    /// Nearest-neighbour pull-back with edge clamping.
    pub fn apply_nearest<T: Copy>(&self, volume: &Volume<T>) -> Volume<T> {
        self.check(volume);
        let d = self.grid.dims();
        let src = volume.data();
        Volume::from_fn(volume.grid().clone(), |i, j, k| {
            let p = self.source([i, j, k]);
            let q = |a: usize| (p[a] + 0.5).floor().clamp(0.0, (d[a] - 1) as f64) as usize;
            src[self.grid.index(q(0), q(1), q(2))]
        })
    }

    /// Trilinear pull-back with edge clamping.
    pub fn apply_linear(&self, volume: &IntensityVolume) -> IntensityVolume {
        self.check(volume);
        let grid = volume.grid();
        let src = volume.data();
        Volume::from_fn(grid.clone(), |i, j, k| f32::from_f64(trilinear(src, grid, self.source([i, j, k]))))
    }
}

/// Random affine plus elastic deformation of a label map, nearest-neighbour
/// pull-back onto the input grid.
pub fn spatial_augment(labels: &LabelVolume, params: &GenParams, rng: &mut RngStream) -> LabelVolume {
    Deformation::sample(labels.grid(), params, rng).apply_nearest(labels)
}
