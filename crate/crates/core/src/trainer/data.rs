use super::{Result, TrainConfig, TrainError};
use crate::pipeline::{cortex_mask, qc_input, region_dice, volume_tensor, Stage};
use crate::rng::RngStream;
use crate::schema::{one_hot_indices, CoarseClass, LabelSchema};
use crate::synthgen::{degrade_real, gaussian_blur, generate_pair, GenPriors};
use crate::tensor::Tensor;
use crate::volume::{Grid3, IntensityVolume, LabelVolume, Volume};

fn padding(dims: [usize; 3], multiple: usize) -> ([usize; 3], [usize; 3]) {
    let total = dims.map(|d| d.next_multiple_of(multiple) - d);
    let before = total.map(|p| p / 2);
    (before, [0, 1, 2].map(|a| total[a] - before[a]))
}

fn pad_pair(image: &IntensityVolume, labels: &LabelVolume, multiple: usize) -> (IntensityVolume, LabelVolume) {
    let (before, after) = padding(image.dims(), multiple);
    (image.pad(before, after, 0.0), labels.pad(before, after, 0))
}

/// `(input, target, map index)` for one synthetic training example of S1, S2 or S3.
pub(super) fn synthetic_sample(
    stage: Stage,
    maps: &[LabelVolume],
    schema: &LabelSchema,
    config: &TrainConfig,
    multiple: usize,
    rng: &mut RngStream,
) -> Result<(Tensor<f32>, Tensor<f32>, usize)> {
    let pair = generate_pair(maps, &config.priors, rng)?;
    let (image, labels) = pad_pair(&pair.image, &pair.labels, multiple);
    let spatial = labels.dims();
    let image = volume_tensor(&image);
    let (input, target) = match stage {
        Stage::S1 => (image, one_hot_indices(&schema.coarse_channels(&labels)?, CoarseClass::COUNT, spatial)),
        Stage::S2 => {
            let coarse = schema.coarse_channels(&labels)?;
            let prior = corrupt_coarse_prior(&coarse, spatial, config.prior_blur_max, config.prior_dropout, rng);
            (image.concat_channels(&prior), one_hot_indices(&schema.fine_channels(&labels)?, schema.num_fine(), spatial))
        }
        Stage::S3 => {
            let mask = cortex_mask(&schema.fine_channels(&labels)?, schema, spatial);
            let parcels = schema.parcel_channels(&labels)?;
            (image.concat_channels(&mask), one_hot_indices(&parcels, schema.num_parcel_channels(), spatial))
        }
        other => return Err(TrainError::InvalidConfig(format!("{other} is not a segmenter"))),
    };
    Ok((input, target, pair.params.map_index))
}

const NEIGHBOURS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// Imitates an imperfect coarse segmentation. With probability `dropout` one
/// foreground class loses each of its boundary voxels, with probability 1/2,
/// to the most frequent other class among its 6-neighbours. The one-hot
/// channels are then smoothed with a random isotropic sigma in
/// `[0, blur_max]` and renormalized per voxel.
pub fn corrupt_coarse_prior(
    coarse: &[usize],
    spatial: [usize; 3],
    blur_max: f64,
    dropout: f64,
    rng: &mut RngStream,
) -> Tensor<f32> {
    let grid = Grid3::unit(spatial);
    let mut classes = coarse.to_vec();
    if rng.bernoulli(dropout) {
        let target = 1 + rng.index(CoarseClass::COUNT - 1);
        for (v, &c) in coarse.iter().enumerate() {
            if c != target {
                continue;
            }
            let p = grid.coords(v);
            let mut counts = [0usize; CoarseClass::COUNT];
            for d in NEIGHBOURS {
                let q = [0, 1, 2].map(|a| p[a] as isize + d[a]);
                if (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < spatial[a]) {
                    let n = coarse[grid.index(q[0] as usize, q[1] as usize, q[2] as usize)];
                    if n != target {
                        counts[n] += 1;
                    }
                }
            }
            let best = (0..CoarseClass::COUNT).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
            if counts[best] > 0 && rng.bernoulli(0.5) {
                classes[v] = best;
            }
        }
    }
    let mut prior: Tensor<f32> = one_hot_indices(&classes, CoarseClass::COUNT, spatial);
    let sigma = rng.uniform(0.0, blur_max);
    if sigma > 0.0 {
        for c in 0..CoarseClass::COUNT {
            let channel = Volume::new(grid.clone(), prior.channel(c).to_vec()).expect("channel matches grid");
            prior.channel_mut(c).copy_from_slice(gaussian_blur(&channel, [sigma; 3]).data());
        }
        let p = prior.voxels();
        let data = prior.data_mut();
        for v in 0..p {
            let total: f32 = (0..CoarseClass::COUNT).map(|c| data[c * p + v]).sum();
            if total > 0.0 {
                for c in 0..CoarseClass::COUNT {
                    data[c * p + v] /= total;
                }
            }
        }
    }
    prior
}

/// Real images with their label maps, used to train D and R.
#[derive(Debug, Clone, Default)]
pub struct PairedCorpus {
    images: Vec<IntensityVolume>,
    labels: Vec<LabelVolume>,
}

/// A degraded real image on the padded grid and its identically deformed labels.
#[derive(Debug, Clone)]
pub struct DegradedSample {
    pub image: Tensor<f32>,
    pub labels: LabelVolume,
    pub index: usize,
}

impl DegradedSample {
    pub fn coarse_target(&self, schema: &LabelSchema) -> Result<Tensor<f32>> {
        Ok(one_hot_indices(&schema.coarse_channels(&self.labels)?, CoarseClass::COUNT, self.labels.dims()))
    }
}

impl PairedCorpus {
    pub fn new(images: Vec<IntensityVolume>, labels: Vec<LabelVolume>, schema: &LabelSchema) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(TrainError::InvalidConfig(format!("{} images but {} label maps", images.len(), labels.len())));
        }
        for (i, (im, lb)) in images.iter().zip(&labels).enumerate() {
            if im.dims() != lb.dims() {
                return Err(TrainError::InvalidConfig(format!("pair {i}: image and labels differ in shape")));
            }
            for l in lb.label_set() {
                schema.structure(l)?;
            }
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[IntensityVolume] {
        &self.images
    }

    pub fn labels(&self) -> &[LabelVolume] {
        &self.labels
    }

    /// Picks a pair and degrades it; the labels follow the same deformation.
    pub fn degrade(
        &self,
        priors: &GenPriors,
        multiple: usize,
        rng: &mut RngStream,
    ) -> Result<DegradedSample> {
        if self.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        let index = rng.index(self.len());
        let d = degrade_real(&self.images[index], priors, rng)?;
        let labels = d.deformation.apply_nearest(&self.labels[index]);
        let (image, labels) = pad_pair(&d.image, &labels, multiple);
        Ok(DegradedSample { image: volume_tensor(&image), labels, index })
    }
}

/// QC-regressor input built from a fine segmentation on the grid of `truth`,
/// and the per-region Dice of that segmentation as the target.
pub(super) fn regressor_example(
    fine: &[usize],
    truth: &LabelVolume,
    schema: &LabelSchema,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let ids = fine.iter().map(|&c| schema.structures()[c].id).collect();
    let pred = truth.with_data(ids).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let dice = region_dice(&pred, truth, schema)?;
    let target = Tensor::from_vec(&[dice.len()], dice.iter().map(|&d| d as f32).collect());
    Ok((qc_input(fine, schema, truth.dims()), target))
}
