//! The domain-randomized generative model. A label map is deformed, filled
//! with a random Gaussian mixture, corrupted by bias, noise and a random
//! gamma, and passed through a simulated low-resolution acquisition.

mod acquisition;
mod intensity;
pub mod phantom;
mod priors;
mod spatial;

pub use acquisition::{gaussian_blur, simulate_acquisition};
pub use intensity::{bias_field_apply, gmm_render, gmm_synthesize, intensity_corrupt, BiasField};
pub use priors::{
    sample_params, Direction, DirectionProbs, GenParams, GenPriors, GmmComponent, Range, DEFAULT_WIDENING,
};
pub use spatial::{spatial_augment, Deformation};

use thiserror::Error;

use crate::rng::RngStream;
use crate::volume::{normalize_in_place, IntensityVolume, LabelVolume};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid priors: {0}")]
    Prior(String),
    #[error("no label maps to sample from")]
    EmptyCorpus,
}

/// A synthetic image with its ground truth and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub image: IntensityVolume,
    pub labels: LabelVolume,
    pub params: GenParams,
}

/// Picks a map, deforms it, and renders a corrupted synthetic image of the
/// deformed map. The returned labels are the deformed map.
pub fn generate_pair(maps: &[LabelVolume], priors: &GenPriors, rng: &mut RngStream) -> Result<SyntheticPair, GenError> {
    if maps.is_empty() {
        return Err(GenError::EmptyCorpus);
    }
    priors.validate()?;
    let map_index = rng.index(maps.len());
    let mut params = sample_params(priors, rng);
    params.map_index = map_index;
    let labels = spatial_augment(&maps[map_index], &params, rng);
    let (image, gmm) = gmm_synthesize(&labels, &params, rng);
    params.gmm = gmm;
    let image = bias_field_apply(&image, &params, rng);
    let image = intensity_corrupt(&image, &params, rng);
    let mut image = simulate_acquisition(&image, &params);
    for v in image.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(SyntheticPair { image, labels, params })
}

/// A corrupted real image and the deformation applied to it, so that paired
/// labels can be deformed identically with [`Deformation::apply_nearest`].
#[derive(Debug, Clone)]
pub struct Degraded {
    pub image: IntensityVolume,
    pub deformation: Deformation,
    pub params: GenParams,
}

/// Deforms (trilinear), biases, gamma-transforms, resolution-degrades and
/// noises a real image, then rescales it to [0, 1]. `priors` are typically
/// segmenter priors passed through [`GenPriors::widened`].
pub fn degrade_real(image: &IntensityVolume, priors: &GenPriors, rng: &mut RngStream) -> Result<Degraded, GenError> {
    priors.validate()?;
    let params = sample_params(priors, rng);
    let deformation = Deformation::sample(image.grid(), &params, rng);
    let mut out = deformation.apply_linear(image);
    out = bias_field_apply(&out, &params, rng);
    intensity::apply_gamma(out.data_mut(), params.gamma_log);
    out = simulate_acquisition(&out, &params);
    intensity::add_noise(out.data_mut(), params.noise_std, rng);
    normalize_in_place(out.data_mut());
    Ok(Degraded { image: out, deformation, params })
}
