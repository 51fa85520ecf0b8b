use super::GenParams;
use crate::volume::{resample, resample_to_grid, IntensityVolume, Interpolation};

/// Normalized Gaussian taps on `[-r, r]` with `r = ceil(3 sigma)`.
fn kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with per-axis standard deviation in voxels;
/// borders are replicated. Axes with `sigma == 0` are left alone.
pub fn gaussian_blur(image: &IntensityVolume, sigma: [f64; 3]) -> IntensityVolume {
    let dims = image.dims();
    let mut data: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..3 {
        if sigma[axis] <= 0.0 {
            continue;
        }
        let taps = kernel(sigma[axis]);
        let r = (taps.len() / 2) as isize;
        let n = dims[axis];
        let stride = strides[axis];
        let mut line = vec![0.0; n];
        let src = data.clone();
        for idx in 0..data.len() {
            if (idx / stride) % n != 0 {
                continue;
            }
            for (t, l) in line.iter_mut().enumerate() {
                *l = src[idx + t * stride];
            }
            for t in 0..n as isize {
                let mut acc = 0.0;
                for (o, w) in taps.iter().enumerate() {
                    let s = (t + o as isize - r).clamp(0, n as isize - 1) as usize;
                    acc += w * line[s];
                }
                data[idx + t as usize * stride] = acc;
            }
        }
    }
    image.with_data(data.into_iter().map(|v| v as f32).collect()).expect("same grid")
}

/// Blur, subsample to `params.spacing_mm`, and resample back onto the input grid.
pub fn simulate_acquisition(image: &IntensityVolume, params: &GenParams) -> IntensityVolume {
    let grid = image.grid();
    let ratio = [0, 1, 2].map(|a| params.spacing_mm[a] / grid.spacing()[a]);
    if ratio.iter().all(|&r| r <= 1.0) {
        return image.clone();
    }
    let sigma = ratio.map(|r| if r > 1.0 { params.blur_factor * r } else { 0.0 });
    let blurred = gaussian_blur(image, sigma);
    let target = [0, 1, 2].map(|a| grid.spacing()[a] * ratio[a].max(1.0));
    let low = resample(&blurred, target, Interpolation::Trilinear).expect("valid spacing");
    resample_to_grid(&low, grid, Interpolation::Trilinear).expect("intensity resampling")
}
