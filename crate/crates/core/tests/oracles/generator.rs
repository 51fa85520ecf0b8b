//! Statistical oracles for the generative model.

use synthseg_core::rng::RngStream;
use synthseg_core::synthgen::{gmm_synthesize, simulate_acquisition, GenParams, Range};
use synthseg_core::volume::{Grid3, LabelVolume, Volume};

pub struct MomentCheck {
    pub mean: f64,
    pub std: f64,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub n: usize,
}

impl MomentCheck {
    /// `|sample_mean - mean|` in units of the standard error `std / sqrt(n)`.
    pub fn mean_z(&self) -> f64 {
        (self.sample_mean - self.mean).abs() / (self.std / (self.n as f64).sqrt())
    }

    pub fn std_rel_error(&self) -> f64 {
        (self.sample_std - self.std).abs() / self.std
    }
}

/// Synthesizes a single-label volume of 10^6 voxels and compares its moments
/// with the drawn Gaussian. Moments are accumulated in f64 with a two-pass variance.
pub fn single_label_moments(seed: u64) -> MomentCheck {
    let labels: LabelVolume = Volume::filled(Grid3::unit([100, 100, 100]), 17);
    let mut params = GenParams::neutral();
    params.gmm_mean = Range::new(0.0, 1.0);
    params.gmm_std = Range::new(0.02, 0.25);
    let mut rng = RngStream::new(seed, 0);
    let (image, gmm) = gmm_synthesize(&labels, &params, &mut rng);
    let n = image.data().len();
    let mean = image.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = image.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MomentCheck { mean: gmm[0].mean, std: gmm[0].std, sample_mean: mean, sample_std: var.sqrt(), n }
}

/// Amplitude of the `period`-voxel sinusoid along axis 2 in `line`, by least
/// squares on `[a sin + b cos + c]` over whole periods.
fn fitted_amplitude(line: &[f64], period: f64, start: usize, end: usize) -> f64 {
    let w = std::f64::consts::TAU / period;
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let n = (end - start) as f64;
    let mean = line[start..end].iter().sum::<f64>() / n;
    for (z, &y) in line.iter().enumerate().take(end).skip(start) {
        let (s, c) = ((w * z as f64).sin(), (w * z as f64).cos());
        let y = y - mean;
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += y * s;
        yc += y * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    (a * a + b * b).sqrt()
}

/// Returns (measured attenuation, Gaussian transfer `exp(-2 pi^2 sigma^2 f^2)`)
/// for a sinusoid of period 40 voxels seen through 4 mm slices.
pub fn sinusoid_attenuation() -> (f64, f64) {
    let period = 40.0;
    let amplitude = 0.4;
    let grid = Grid3::axis_aligned([4, 4, 160], [1.0; 3]).unwrap();
    let image = Volume::from_fn(grid, |_, _, k| {
        (0.5 + amplitude * (std::f64::consts::TAU * k as f64 / period).sin()) as f32
    });
    let mut params = GenParams::neutral();
    params.spacing_mm = [1.0, 1.0, 4.0];
    let out = simulate_acquisition(&image, &params);
    let line: Vec<f64> = (0..160).map(|k| out.get(1, 2, k) as f64).collect();
    let measured = fitted_amplitude(&line, period, 40, 120) / amplitude;
    let sigma = params.blur_factor * 4.0;
    let f = 1.0 / period;
    let predicted = (-2.0 * std::f64::consts::PI.powi(2) * sigma * sigma * f * f).exp();
    (measured, predicted)
}
