//! Procedural brain phantoms: label maps built from ellipsoids in the shape of
//! the main brain structures, optionally with the cortex split into parcels,
//! and T1-like "real" images rendered from them.
//!
//! Axis 0 runs left to right, axis 1 posterior to anterior, axis 2 inferior to
//! superior. Structures are placed in coordinates normalized to the brain
//! ellipsoid, so the same layout works at any resolution.

use super::intensity::{gmm_render, BiasField};
use super::{GenParams, GmmComponent};
use crate::rng::RngStream;
use crate::schema::LabelSchema;
use crate::volume::{normalize_in_place, Grid3, IntensityVolume, LabelVolume, Volume};

struct Blob {
    left: u32,
    right: u32,
    centre: [f64; 3],
    radii: [f64; 3],
}

const fn blob(left: u32, right: u32, centre: [f64; 3], radii: [f64; 3]) -> Blob {
    Blob { left, right, centre, radii }
}

// Mirrored about the midline: the centre's x is given for the right side.
const DEEP: [Blob; 11] = [
    blob(4, 43, [0.17, 0.05, 0.2], [0.12, 0.42, 0.16]),
    blob(5, 44, [0.45, -0.05, -0.3], [0.078, 0.182, 0.078]),
    blob(14, 14, [0.0, -0.05, 0.0], [0.065, 0.286, 0.182]),
    blob(10, 49, [0.13, -0.12, 0.0], [0.13, 0.221, 0.143]),
    blob(11, 50, [0.28, 0.28, 0.22], [0.104, 0.195, 0.13]),
    blob(12, 51, [0.38, 0.08, 0.05], [0.104, 0.26, 0.169]),
    blob(13, 52, [0.28, 0.02, 0.0], [0.065, 0.13, 0.104]),
    blob(17, 53, [0.42, -0.22, -0.28], [0.104, 0.26, 0.104]),
    blob(18, 54, [0.42, 0.1, -0.3], [0.104, 0.117, 0.104]),
    blob(26, 58, [0.14, 0.36, -0.06], [0.078, 0.078, 0.078]),
    blob(28, 60, [0.14, -0.12, -0.2], [0.104, 0.13, 0.091]),
];

const CEREBELLUM: Blob = blob(8, 47, [0.3, -0.55, -0.55], [0.32, 0.35, 0.3]);
const FOURTH_VENTRICLE: Blob = blob(15, 15, [0.0, -0.38, -0.48], [0.07, 0.07, 0.1]);

struct Layout {
    centre: [f64; 3],
    radii: [f64; 3],
    cortex: f64,
    jitter: Vec<([f64; 3], f64)>,
}

fn inside(u: [f64; 3], c: [f64; 3], r: [f64; 3]) -> bool {
    (0..3).map(|a| ((u[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
}

fn hemi_parcels(left: bool) -> Vec<u32> {
    let base = if left { 1000 } else { 2000 };
    (1..=35).filter(|&i| i != 4).map(|i| base + i).collect()
}

impl Layout {
    fn sample(dims: [usize; 3], rng: &mut RngStream) -> Self {
        let centre = dims.map(|d| d as f64 / 2.0 - 0.5 + rng.uniform(-0.5, 0.5));
        let radii = [0.46, 0.47, 0.44].map(|f| f * rng.uniform(0.92, 1.0));
        let radii = [0, 1, 2].map(|a| radii[a] * dims[a] as f64);
        let cortex = rng.uniform(0.14, 0.2);
        let jitter = (0..DEEP.len() + 2)
            .map(|_| ([0, 1, 2].map(|_| rng.uniform(-0.03, 0.03)), rng.uniform(0.85, 1.15)))
            .collect();
        Self { centre, radii, cortex, jitter }
    }

    fn hit(&self, b: &Blob, index: usize, u: [f64; 3]) -> Option<u32> {
        let (shift, scale) = self.jitter[index];
        let left = u[0] < 0.0;
        let mut c = b.centre;
        if left {
            c[0] = -c[0];
        }
        let c = [0, 1, 2].map(|a| c[a] + shift[a]);
        let r = b.radii.map(|v| v * scale);
        inside(u, c, r).then_some(if left { b.left } else { b.right })
    }

    fn label(&self, v: [usize; 3], parcels: bool) -> u32 {
        let u = [0, 1, 2].map(|a| (v[a] as f64 - self.centre[a]) / self.radii[a]);
        let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rho > 1.0 {
            return 0;
        }
        let left = u[0] < 0.0;
        if let Some(l) = self.hit(&CEREBELLUM, DEEP.len(), u) {
            let (shift, scale) = self.jitter[DEEP.len()];
            let mut c = CEREBELLUM.centre;
            if left {
                c[0] = -c[0];
            }
            let c = [0, 1, 2].map(|a| c[a] + shift[a]);
            let core = CEREBELLUM.radii.map(|r| r * scale * 0.55);
            return if inside(u, c, core) { l - 1 } else { l };
        }
        if (u[0] / 0.16).powi(2) + ((u[1] + 0.15) / 0.2).powi(2) <= 1.0 && u[2] < -0.05 {
            return 16;
        }
        if let Some(l) = self.hit(&FOURTH_VENTRICLE, DEEP.len() + 1, u) {
            return l;
        }
        if rho > 1.0 - self.cortex {
            if !parcels {
                return if left { 3 } else { 42 };
            }
            let theta = u[2].atan2(u[1]);
            let sector = (((theta + std::f64::consts::PI) / std::f64::consts::TAU * 17.0) as usize).min(16);
            let band = usize::from(u[0].abs() > 0.55);
            return hemi_parcels(left)[band * 17 + sector];
        }
        for (i, b) in DEEP.iter().enumerate() {
            if let Some(l) = self.hit(b, i, u) {
                return l;
            }
        }
        if left {
            2
        } else {
            41
        }
    }
}

/// One phantom label map on a 1 mm grid. With `parcels`, cortex voxels carry
/// cortical parcel ids instead of the cortex label.
pub fn phantom_labels(dims: [usize; 3], seed: u64, parcels: bool) -> LabelVolume {
    let mut rng = RngStream::new(seed, 0x5048_414e);
    let layout = Layout::sample(dims, &mut rng);
    let grid = Grid3::axis_aligned(dims, [1.0; 3]).expect("positive dims");
    Volume::from_fn(grid, |i, j, k| layout.label([i, j, k], parcels))
}

/// `count` phantoms with seeds `seed, seed + 1, ...`.
pub fn phantom_corpus(count: usize, dims: [usize; 3], seed: u64, parcels: bool) -> Vec<LabelVolume> {
    (0..count as u64).map(|i| phantom_labels(dims, seed.wrapping_add(i), parcels)).collect()
}

fn t1_mean(id: u32) -> f64 {
    match id {
        0 => 0.0,
        2 | 41 | 7 | 46 | 28 | 60 => 0.85,
        16 => 0.75,
        3 | 42 | 8 | 47 | 1000..=2999 => 0.55,
        4 | 5 | 14 | 15 | 43 | 44 => 0.15,
        _ => 0.65,
    }
}

/// A T1-like image with fixed tissue contrast, mild per-structure jitter,
/// noise and bias: a stand-in for a real scan of the phantom.
pub fn phantom_real_image(labels: &LabelVolume, schema: &LabelSchema, rng: &mut RngStream) -> IntensityVolume {
    let components: Vec<GmmComponent> = labels
        .label_set()
        .into_iter()
        .map(|label| {
            let id = schema.structure(label).map(|s| s.id).unwrap_or(label);
            let jitter = if label == 0 { 0.0 } else { rng.uniform(-0.03, 0.03) };
            GmmComponent { label, mean: t1_mean(id) + jitter, std: if label == 0 { 0.0 } else { 0.02 } }
        })
        .collect();
    let image = gmm_render(labels, &components, rng);
    let mut params = GenParams::neutral();
    params.bias_log_std = 0.1;
    let mut out = BiasField::sample(image.grid(), &params, rng).apply(&image);
    normalize_in_place(out.data_mut());
    out
}
