//! Training loops for the five networks of the cascade.
//!
//! Step `n` of every loop draws all of its randomness from `RngStream(seed, n)`,
//! so a run resumed from a checkpoint replays the uninterrupted trajectory.

mod checkpoint;
mod data;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    adam_step, build_network, soft_dice_loss, sum_squares_loss, AdamState, Grads, Mode, Network, NetworkSpec, NnError,
    WeightsError,
};
use crate::pipeline::{PipelineError, Stage};
use crate::rng::RngStream;
use crate::schema::{CoarseClass, LabelSchema, SchemaError};
use crate::stats::{hard_dice, StatsError};
use crate::synthgen::{GenError, GenPriors};
use crate::tensor::Tensor;
use crate::volume::{IntensityVolume, LabelVolume};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{corrupt_coarse_prior, DegradedSample, PairedCorpus};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("stage {stage}: loss is {loss} at step {step}")]
    NonFiniteLoss { stage: Stage, step: u64, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Hyper-parameters and architecture sizes. The defaults are the full-scale
/// settings; [`TrainConfig::toy`] gives the small ones used in tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// 0 disables checkpoints.
    pub checkpoint_every: u64,
    /// 0 disables validation.
    pub validation_every: u64,
    pub validation_samples: usize,
    pub priors: GenPriors,
    /// Applied to `priors` when degrading images for D and R.
    pub widening_factor: f64,
    pub levels: usize,
    pub base_features: usize,
    pub denoiser_levels: usize,
    pub denoiser_features: usize,
    /// Upper bound of the smoothing applied to S2's coarse prior channels (voxels).
    pub prior_blur_max: f64,
    /// Probability of eroding one thin coarse class in S2's prior.
    pub prior_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300_000,
            lr: crate::nn::DEFAULT_LR,
            seed: 0,
            batch_size: 1,
            checkpoint_every: 1000,
            validation_every: 1000,
            validation_samples: 4,
            priors: GenPriors::default(),
            widening_factor: crate::synthgen::DEFAULT_WIDENING,
            levels: 5,
            base_features: 24,
            denoiser_levels: 5,
            denoiser_features: 16,
            prior_blur_max: 2.0,
            prior_dropout: 0.5,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings for `stage`. The regressor needs fewer steps.
    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::R => Self { steps: 50_000, ..Self::default() },
            _ => Self::default(),
        }
    }

    pub fn toy() -> Self {
        Self {
            steps: 500,
            lr: 1e-3,
            checkpoint_every: 0,
            validation_every: 0,
            levels: 3,
            base_features: 8,
            denoiser_levels: 4,
            denoiser_features: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.widening_factor >= 1.0) {
            return bad("widening_factor must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.prior_dropout) || !(self.prior_blur_max >= 0.0) {
            return bad("prior corruption settings out of range");
        }
        self.priors.validate()?;
        Ok(())
    }

    /// Architecture of `stage` under this config.
    pub fn network_spec(&self, stage: Stage, schema: &LabelSchema) -> NetworkSpec {
        let (i, o) = (stage.in_channels(), stage.out_channels(schema));
        match stage {
            Stage::S1 | Stage::S2 | Stage::S3 => NetworkSpec::segmenter(self.levels, self.base_features, i, o),
            Stage::D => NetworkSpec::denoiser(self.denoiser_levels, self.denoiser_features, o),
            Stage::R => NetworkSpec::regressor(self.levels, self.base_features, i, o),
        }
    }
}

/// Where a training sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SyntheticLabelMap,
    RealImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub step: u64,
    pub source: Source,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: u64,
    pub loss: f64,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub stage: Stage,
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
    /// Steps completed.
    pub step: u64,
    pub losses: Vec<f64>,
    pub validation: Vec<ValidationRecord>,
    pub audit: Vec<AuditRecord>,
    /// Wall-clock seconds of each step run by this process; never checkpointed.
    pub wall_seconds: Vec<f64>,
}

impl TrainState {
    pub fn fresh(stage: Stage, spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let network = build_network(spec, seed)?;
        let adam = AdamState::new(network.weights());
        Ok(Self {
            stage,
            network,
            adam,
            step: 0,
            losses: Vec::new(),
            validation: Vec::new(),
            audit: Vec::new(),
            wall_seconds: Vec::new(),
        })
    }

    /// True when no step read a real image.
    pub fn synthetic_only(&self) -> bool {
        self.audit.iter().all(|a| a.source == Source::SyntheticLabelMap)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Checkpoints are written here every `checkpoint_every` steps.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this state instead of a fresh network.
    pub resume: Option<TrainState>,
    /// Stop after this many completed steps even if `steps` is larger.
    pub stop_at: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
enum LossKind {
    SoftDice,
    SumSquares,
}

struct Sample {
    input: Tensor<f32>,
    target: Tensor<f32>,
    source: Source,
    index: usize,
}

/// Stream ids at and above this are reserved for validation samples.
const VALIDATION_STREAM: u64 = 1 << 62;

fn loss_of(kind: LossKind, pred: &Tensor<f32>, target: &Tensor<f32>) -> Result<(f64, Tensor<f32>)> {
    Ok(match kind {
        LossKind::SoftDice => soft_dice_loss(pred, target)?,
        LossKind::SumSquares => sum_squares_loss(pred, target)?,
    })
}

fn add_grads(acc: &mut Grads<f32>, g: &Grads<f32>) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.iter_mut().zip(b) {
            x.add_assign(y);
        }
    }
}

fn run_loop(
    stage: Stage,
    spec: NetworkSpec,
    config: &TrainConfig,
    options: &TrainOptions,
    kind: LossKind,
    sample: &mut dyn FnMut(&mut RngStream) -> Result<Sample>,
) -> Result<TrainState> {
    config.validate()?;
    let mut state = match &options.resume {
        Some(s) if s.stage != stage || *s.network.spec() != spec => {
            return Err(TrainError::Checkpoint(format!("checkpoint is for a different {} network", s.stage)));
        }
        Some(s) => s.clone(),
        None => TrainState::fresh(stage, &spec, config.seed)?,
    };
    let end = options.stop_at.map_or(config.steps, |s| s.min(config.steps));
    while state.step < end {
        let step = state.step;
        let started = Instant::now();
        let mut rng = RngStream::new(config.seed, step);
        let mut total: Option<Grads<f32>> = None;
        let mut loss_sum = 0.0;
        for _ in 0..config.batch_size {
            let s = sample(&mut rng)?;
            let (pred, tape) = state.network.forward(&s.input, Mode::Train)?;
            let (loss, grad) = loss_of(kind, &pred, &s.target)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { stage, step, loss });
            }
            let (grads, _) = state.network.backward(&tape, &grad)?;
            match &mut total {
                Some(acc) => add_grads(acc, &grads),
                None => total = Some(grads),
            }
            loss_sum += loss;
            state.audit.push(AuditRecord { step, source: s.source, index: s.index });
        }
        let mut grads = total.expect("batch size is positive");
        if config.batch_size > 1 {
            let scale = 1.0 / config.batch_size as f32;
            grads.iter_mut().flatten().for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= scale));
        }
        adam_step(state.network.weights_mut(), &grads, &mut state.adam, config.lr)?;
        state.losses.push(loss_sum / config.batch_size as f64);
        state.step += 1;
        state.wall_seconds.push(started.elapsed().as_secs_f64());

        if config.validation_every > 0 && state.step % config.validation_every == 0 {
            let mut sum = 0.0;
            for i in 0..config.validation_samples {
                let s = sample(&mut RngStream::new(config.seed, VALIDATION_STREAM + i as u64))?;
                sum += loss_of(kind, &state.network.infer(&s.input)?, &s.target)?.0;
            }
            let loss = sum / config.validation_samples.max(1) as f64;
            state.validation.push(ValidationRecord { step: state.step, loss });
        }
        if let Some(dir) = &options.checkpoint_dir {
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
                save_checkpoint(&state, dir)?;
            }
        }
    }
    Ok(state)
}

/// Trains S1, S2 or S3 on synthetic images generated from `maps`. S3 needs
/// maps whose cortex carries parcel ids.
pub fn train_segmenter(
    stage: Stage,
    maps: &[LabelVolume],
    schema: &LabelSchema,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainState> {
    if maps.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if !matches!(stage, Stage::S1 | Stage::S2 | Stage::S3) {
        return Err(TrainError::InvalidConfig(format!("{stage} is not a segmenter")));
    }
    for m in maps {
        for l in m.label_set() {
            schema.structure(l)?;
        }
    }
    if stage == Stage::S3 && !maps.iter().any(|m| m.data().iter().any(|&l| schema.parcel_index(l).is_ok_and(|p| p > 0))) {
        return Err(TrainError::InvalidConfig("s3 needs label maps with cortical parcels".into()));
    }
    let spec = config.network_spec(stage, schema);
    let multiple = spec.required_multiple();
    let mut sample = |rng: &mut RngStream| -> Result<Sample> {
        let s = data::synthetic_sample(stage, maps, schema, config, multiple, rng)?;
        Ok(Sample { input: s.0, target: s.1, source: Source::SyntheticLabelMap, index: s.2 })
    };
    run_loop(stage, spec, config, options, LossKind::SoftDice, &mut sample)
}

/// Trains D to map the output of the frozen `s1` on degraded real images to
/// the identically deformed coarse ground truth.
pub fn train_denoiser(
    s1: &Network<f32>,
    corpus: &PairedCorpus,
    schema: &LabelSchema,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainState> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let spec = config.network_spec(Stage::D, schema);
    let multiple = spec.required_multiple().max(s1.spec().required_multiple());
    let priors = config.priors.widened(config.widening_factor);
    let mut sample = |rng: &mut RngStream| -> Result<Sample> {
        let d = corpus.degrade(&priors, multiple, rng)?;
        let input = s1.infer(&d.image)?;
        let target = d.coarse_target(schema)?;
        Ok(Sample { input, target, source: Source::RealImage, index: d.index })
    };
    run_loop(Stage::D, spec, config, options, LossKind::SoftDice, &mut sample)
}

/// Upstream networks, used frozen while training R.
pub struct Upstream<'a> {
    pub s1: &'a Network<f32>,
    pub d: &'a Network<f32>,
    pub s2: &'a Network<f32>,
}

impl Upstream<'_> {
    /// S2's fine channel per voxel for a padded `[1, X, Y, Z]` image.
    pub fn fine_argmax(&self, image: &Tensor<f32>) -> Result<Vec<usize>> {
        let coarse = self.d.infer(&self.s1.infer(image)?)?;
        Ok(self.s2.infer(&image.concat_channels(&coarse))?.argmax_channels())
    }

    fn multiple(&self) -> usize {
        [self.s1, self.d, self.s2].iter().map(|n| n.spec().required_multiple()).max().unwrap_or(1)
    }
}

/// Trains R to predict, from S2's segmentation alone, the Dice of each QC
/// region against the ground truth.
pub fn train_regressor(
    upstream: &Upstream<'_>,
    corpus: &PairedCorpus,
    schema: &LabelSchema,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainState> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let spec = config.network_spec(Stage::R, schema);
    let multiple = spec.required_multiple().max(upstream.multiple());
    let priors = config.priors.widened(config.widening_factor);
    let mut sample = |rng: &mut RngStream| -> Result<Sample> {
        let d = corpus.degrade(&priors, multiple, rng)?;
        let fine = upstream.fine_argmax(&d.image)?;
        let (input, target) = data::regressor_example(&fine, &d.labels, schema)?;
        Ok(Sample { input, target, source: Source::RealImage, index: d.index })
    };
    run_loop(Stage::R, spec, config, options, LossKind::SumSquares, &mut sample)
}

/// Label granularity for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub labels: Vec<u32>,
    /// `per_case[i][j]`: Dice of `labels[j]` in case `i`.
    pub per_case: Vec<Vec<f64>>,
    pub mean_per_label: Vec<f64>,
    /// Mean of `mean_per_label`.
    pub macro_dice: f64,
}

/// Hard Dice of every foreground label, per case and averaged.
pub fn evaluate(pred: &[LabelVolume], truth: &[LabelVolume], schema: &LabelSchema, level: Level) -> Result<ScoreTable> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(TrainError::InvalidConfig(format!("{} predictions for {} cases", pred.len(), truth.len())));
    }
    let labels: Vec<u32> = match level {
        Level::Coarse => (1..CoarseClass::COUNT as u32).collect(),
        Level::Fine => schema.fine_ids().into_iter().filter(|&id| id != 0).collect(),
    };
    let convert = |v: &LabelVolume| -> Result<LabelVolume> {
        Ok(match level {
            Level::Coarse => schema.to_coarse(v)?,
            Level::Fine => schema.to_structures(v)?,
        })
    };
    let mut per_case = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (convert(p)?, convert(t)?);
        per_case.push(labels.iter().map(|&l| hard_dice(&p, &t, l)).collect::<std::result::Result<Vec<_>, _>>()?);
    }
    let n = per_case.len() as f64;
    let mean_per_label: Vec<f64> = (0..labels.len()).map(|j| per_case.iter().map(|c| c[j]).sum::<f64>() / n).collect();
    let macro_dice = mean_per_label.iter().sum::<f64>() / mean_per_label.len() as f64;
    Ok(ScoreTable { labels, per_case, mean_per_label, macro_dice })
}

/// Label map of a coarse soft output (channel index = coarse class).
pub fn coarse_labels(soft: &Tensor<f32>, like: &IntensityVolume) -> LabelVolume {
    like.with_data(soft.argmax_channels().into_iter().map(|c| c as u32).collect()).expect("same grid")
}
