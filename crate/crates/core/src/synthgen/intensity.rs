use super::spatial::{control_at, control_grid};
use super::{GenParams, GmmComponent};
use crate::rng::RngStream;
use crate::volume::{normalize_in_place, Grid3, IntensityVolume, LabelVolume};

/// Draws one Gaussian per label present in `labels` (ascending label order)
/// and renders the image.
pub fn gmm_synthesize(labels: &LabelVolume, params: &GenParams, rng: &mut RngStream) -> (IntensityVolume, Vec<GmmComponent>) {
    let components: Vec<GmmComponent> = labels
        .label_set()
        .into_iter()
        .map(|label| GmmComponent { label, mean: params.gmm_mean.sample(rng), std: params.gmm_std.sample(rng) })
        .collect();
    (gmm_render(labels, &components, rng), components)
}

/// Every voxel of label `k` gets an independent `N(mean_k, std_k^2)` sample.
///
/// Panics if a label has no component.
pub fn gmm_render(labels: &LabelVolume, components: &[GmmComponent], rng: &mut RngStream) -> IntensityVolume {
    let lookup: std::collections::HashMap<u32, (f64, f64)> =
        components.iter().map(|c| (c.label, (c.mean, c.std))).collect();
    let data = labels
        .data()
        .iter()
        .map(|l| {
            let (m, s) = lookup[l];
            (if s > 0.0 { m + s * rng.normal() } else { m }) as f32
        })
        .collect();
    labels.with_data(data).expect("same grid")
}

/// A log-bias field sampled on a coarse control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasField {
    pub step: [usize; 3],
    pub control: Grid3,
    pub values: Vec<f64>,
}

impl BiasField {
    pub fn sample(grid: &Grid3, params: &GenParams, rng: &mut RngStream) -> Self {
        let (step, control) = control_grid(grid.dims(), grid.spacing(), params.bias_grid_mm);
        let values = (0..control.len()).map(|_| params.bias_log_std * rng.normal()).collect();
        Self { step, control, values }
    }

    /// Log-bias at voxel `v`.
    pub fn log_at(&self, v: [usize; 3]) -> f64 {
        control_at(&self.values, &self.control, self.step, v)
    }

    pub fn apply(&self, image: &IntensityVolume) -> IntensityVolume {
        let mut out = image.clone();
        let grid = image.grid().clone();
        for (idx, v) in out.data_mut().iter_mut().enumerate() {
            *v = (*v as f64 * self.log_at(grid.coords(idx)).exp()) as f32;
        }
        out
    }
}

/// Multiplies the image by the exponential of a smooth random field.
pub fn bias_field_apply(image: &IntensityVolume, params: &GenParams, rng: &mut RngStream) -> IntensityVolume {
    if params.bias_log_std == 0.0 {
        return image.clone();
    }
    BiasField::sample(image.grid(), params, rng).apply(image)
}

pub(crate) fn add_noise(data: &mut [f32], std: f64, rng: &mut RngStream) {
    if std > 0.0 {
        for v in data.iter_mut() {
            *v = (*v as f64 + std * rng.normal()) as f32;
        }
    }
}

pub(crate) fn apply_gamma(data: &mut [f32], gamma_log: f64) {
    if gamma_log != 0.0 {
        let p = gamma_log.exp() as f32;
        for v in data.iter_mut() {
            *v = v.max(0.0).powf(p);
        }
    }
}

/// Gaussian noise, then min-max rescaling to [0, 1], then `x^exp(gamma)`.
pub fn intensity_corrupt(image: &IntensityVolume, params: &GenParams, rng: &mut RngStream) -> IntensityVolume {
    let mut out = image.clone();
    let data = out.data_mut();
    add_noise(data, params.noise_std, rng);
    normalize_in_place(data);
    apply_gamma(data, params.gamma_log);
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}
