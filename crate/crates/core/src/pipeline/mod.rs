//! Inference: preprocessing, the S1 -> D -> S2 -> S3 -> R cascade, label
//! composition and automated quality control.

mod bundle;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NnError, WeightsError};
use crate::schema::{one_hot_indices, CoarseClass, LabelSchema, QcRegion, SchemaError};
use crate::stats::{hard_dice, CohortRecord, CohortTable, StatsError, VolumeReport};
use crate::tensor::Tensor;
use crate::volume::{normalize_minmax, resample, IntensityVolume, Interpolation, LabelVolume, VolumeError};

pub use bundle::{BundleDir, ModelBundle};

pub const DEFAULT_QC_THRESHOLD: f64 = 0.65;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("stage {0} has no trained weights")]
    MissingStage(Stage),
    #[error("stage {stage} expects {expected} input channels, got {found}")]
    ChannelMismatch { stage: Stage, expected: usize, found: usize },
    #[error("scan has no voxels")]
    EmptyScan,
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    S1,
    D,
    S2,
    S3,
    R,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::S1, Stage::D, Stage::S2, Stage::S3, Stage::R];

    pub fn name(self) -> &'static str {
        match self {
            Stage::S1 => "s1",
            Stage::D => "d",
            Stage::S2 => "s2",
            Stage::S3 => "s3",
            Stage::R => "r",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn in_channels(self) -> usize {
        match self {
            Stage::S1 => 1,
            Stage::D => CoarseClass::COUNT,
            Stage::S2 => 1 + CoarseClass::COUNT,
            Stage::S3 => 2,
            Stage::R => QcRegion::COUNT + 1,
        }
    }

    pub fn out_channels(self, schema: &LabelSchema) -> usize {
        match self {
            Stage::S1 | Stage::D => CoarseClass::COUNT,
            Stage::S2 => schema.num_fine(),
            Stage::S3 => schema.num_parcel_channels(),
            Stage::R => QcRegion::COUNT,
        }
    }

    /// Stages whose trained weights must exist before this one can be trained.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::D => &[Stage::S1],
            Stage::R => &[Stage::S1, Stage::D, Stage::S2],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scan on the 1 mm grid, normalized, plus its zero-padded network input.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: IntensityVolume,
    /// `[1, X, Y, Z]`, padded so every dim is a multiple of the network's.
    pub padded: Tensor<f32>,
    pub before: [usize; 3],
    /// True when the scan had no contrast at all.
    pub degenerate: bool,
}

/// Symmetric zero padding of the spatial dims up to multiples of `multiple`.
pub fn pad_to_multiple(t: &Tensor<f32>, multiple: usize) -> (Tensor<f32>, [usize; 3]) {
    let dims = t.spatial();
    let total = dims.map(|d| d.next_multiple_of(multiple) - d);
    let before = total.map(|p| p / 2);
    let after = [0, 1, 2].map(|a| total[a] - before[a]);
    (t.pad_spatial(before, after), before)
}

pub fn volume_tensor(image: &IntensityVolume) -> Tensor<f32> {
    let [x, y, z] = image.dims();
    Tensor::from_vec(&[1, x, y, z], image.data().to_vec())
}

/// Resamples to 1 mm isotropic (trilinear), rescales to [0, 1] and pads.
pub fn preprocess(scan: &IntensityVolume, multiple: usize) -> Result<Preprocessed> {
    if scan.data().is_empty() {
        return Err(PipelineError::EmptyScan);
    }
    scan.check_finite()?;
    let one_mm = scan.grid().spacing().iter().all(|s| (s - 1.0).abs() < 1e-6);
    let resampled = if one_mm { scan.clone() } else { resample(scan, [1.0; 3], Interpolation::Trilinear)? };
    let (lo, hi) = resampled.min_max();
    let image = normalize_minmax(&resampled)?;
    let (padded, before) = pad_to_multiple(&volume_tensor(&image), multiple);
    Ok(Preprocessed { image, padded, before, degenerate: !(hi > lo) })
}

/// Runs one network. S3 output is forced to the non-cortex channel wherever
/// its cortex-mask input (channel 1) is off; R output is clamped to [0, 1].
pub fn run_stage(stage: Stage, bundle: &ModelBundle, input: &Tensor<f32>) -> Result<Tensor<f32>> {
    let expected = stage.in_channels();
    if input.shape().len() != 4 || input.channels() != expected {
        let found = input.shape().first().copied().unwrap_or(0);
        return Err(PipelineError::ChannelMismatch { stage, expected, found });
    }
    let mut out = bundle.stage(stage).infer(input)?;
    match stage {
        Stage::S3 => mask_parcels(&mut out, input.channel(1)),
        Stage::R => out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0)),
        _ => {}
    }
    Ok(out)
}

fn mask_parcels(out: &mut Tensor<f32>, mask: &[f32]) {
    let p = out.voxels();
    let k = out.channels();
    let data = out.data_mut();
    for (v, &m) in mask.iter().enumerate() {
        if m < 0.5 {
            data[v] = 1.0;
            for c in 1..k {
                data[c * p + v] = 0.0;
            }
        }
    }
}

/// `[1, X, Y, Z]` indicator of voxels whose fine channel is a cortex structure.
pub fn cortex_mask(fine: &[usize], schema: &LabelSchema, spatial: [usize; 3]) -> Tensor<f32> {
    let data = fine.iter().map(|&c| if schema.structures()[c].is_cortex { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec(&[1, spatial[0], spatial[1], spatial[2]], data)
}

/// One-hot over background plus the ten QC regions of a fine segmentation.
pub fn qc_input(fine: &[usize], schema: &LabelSchema, spatial: [usize; 3]) -> Tensor<f32> {
    let channels: Vec<usize> =
        fine.iter().map(|&c| schema.structures()[c].qc_region.map_or(0, |r| r.index() + 1)).collect();
    one_hot_indices(&channels, QcRegion::COUNT + 1, spatial)
}

/// Structure id from S2 everywhere. Cortex voxels take the most probable S3
/// parcel of the same hemisphere, unless the non-cortex channel wins.
pub fn compose_labels(fine: &[usize], parcel_soft: &Tensor<f32>, schema: &LabelSchema) -> Vec<u32> {
    let p = parcel_soft.voxels();
    let data = parcel_soft.data();
    let candidates: Vec<Vec<usize>> = schema
        .structures()
        .iter()
        .map(|s| {
            let own = schema.parcels().iter().enumerate().filter(|(_, q)| schema.fine_index(q.id).ok() == schema.fine_index(s.id).ok());
            std::iter::once(0).chain(own.map(|(i, _)| i + 1)).collect()
        })
        .collect();
    fine.iter()
        .enumerate()
        .map(|(v, &f)| {
            let s = &schema.structures()[f];
            if !s.is_cortex {
                return s.id;
            }
            let best = candidates[f].iter().copied().fold(0, |b, c| if data[c * p + v] > data[b * p + v] { c } else { b });
            if best == 0 {
                s.id
            } else {
                schema.parcels()[best - 1].id
            }
        })
        .collect()
}

/// Hard Dice of each QC region (hemispheres merged) between two label maps.
pub fn region_dice(pred: &LabelVolume, truth: &LabelVolume, schema: &LabelSchema) -> Result<[f64; QcRegion::COUNT]> {
    let to_qc = |v: &LabelVolume| -> Result<LabelVolume> {
        let ch = schema.qc_channels(v)?;
        Ok(v.with_data(ch.into_iter().map(|c| c as u32).collect())?)
    };
    let (p, t) = (to_qc(pred)?, to_qc(truth)?);
    let mut out = [0.0; QcRegion::COUNT];
    for (r, o) in out.iter_mut().enumerate() {
        *o = hard_dice(&p, &t, r as u32 + 1)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub regions: Vec<QcRegion>,
    pub scores: Vec<f64>,
    pub per_region_pass: Vec<bool>,
    pub overall_pass: bool,
    pub threshold: f64,
}

impl QcReport {
    /// A region passes when its score is at least `threshold`.
    pub fn new(scores: &[f64], threshold: f64) -> Self {
        let per_region_pass: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        Self {
            regions: QcRegion::ALL.to_vec(),
            scores: scores.to_vec(),
            overall_pass: per_region_pass.iter().all(|&p| p),
            per_region_pass,
            threshold,
        }
    }
}

/// Every product of one segmentation, cropped to the 1 mm grid of the input.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub coarse_soft: Tensor<f32>,
    pub denoised_soft: Tensor<f32>,
    pub fine_soft: Tensor<f32>,
    pub parcel_soft: Tensor<f32>,
    pub final_labels: LabelVolume,
    pub qc: QcReport,
}

impl SegmentationResult {
    /// Volumes from the fine soft map on the 1 mm grid, with QC scores attached.
    pub fn volume_report(&self, schema: &LabelSchema) -> Result<VolumeReport> {
        let mut report = VolumeReport::from_soft(&self.fine_soft, schema, self.final_labels.grid().voxel_volume())?;
        report.attach_qc(schema, &self.qc.scores);
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub qc_threshold: f64,
    /// Feed S1's output straight to S2 when false.
    pub use_denoiser: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { qc_threshold: DEFAULT_QC_THRESHOLD, use_denoiser: true }
    }
}

fn background_soft(k: usize, spatial: [usize; 3]) -> Tensor<f32> {
    one_hot_indices(&vec![0; spatial.iter().product()], k, spatial)
}

pub fn segment_full(scan: &IntensityVolume, bundle: &ModelBundle, qc_threshold: f64) -> Result<SegmentationResult> {
    segment_with(scan, bundle, PipelineOptions { qc_threshold, ..Default::default() })
}

pub fn segment_with(scan: &IntensityVolume, bundle: &ModelBundle, options: PipelineOptions) -> Result<SegmentationResult> {
    let schema = &bundle.schema;
    let pre = preprocess(scan, bundle.required_multiple())?;
    let dims = pre.image.dims();
    if pre.degenerate {
        let fine_soft = background_soft(schema.num_fine(), dims);
        return Ok(SegmentationResult {
            coarse_soft: background_soft(CoarseClass::COUNT, dims),
            denoised_soft: background_soft(CoarseClass::COUNT, dims),
            parcel_soft: background_soft(schema.num_parcel_channels(), dims),
            final_labels: pre.image.with_data(vec![0; pre.image.data().len()])?,
            fine_soft,
            qc: QcReport::new(&[0.0; QcRegion::COUNT], options.qc_threshold),
        });
    }
    let padded_dims = pre.padded.spatial();
    let s1 = run_stage(Stage::S1, bundle, &pre.padded)?;
    let d = if options.use_denoiser { run_stage(Stage::D, bundle, &s1)? } else { s1.clone() };
    let s2 = run_stage(Stage::S2, bundle, &pre.padded.concat_channels(&d))?;
    let fine = s2.argmax_channels();
    let s3 = run_stage(Stage::S3, bundle, &pre.padded.concat_channels(&cortex_mask(&fine, schema, padded_dims)))?;
    let scores = run_stage(Stage::R, bundle, &qc_input(&fine, schema, padded_dims))?;
    let scores: Vec<f64> = scores.data().iter().map(|&v| v as f64).collect();

    let crop = |t: &Tensor<f32>| t.crop_spatial(pre.before, dims);
    let fine_soft = crop(&s2);
    let parcel_soft = crop(&s3);
    let labels = compose_labels(&fine_soft.argmax_channels(), &parcel_soft, schema);
    Ok(SegmentationResult {
        coarse_soft: crop(&s1),
        denoised_soft: crop(&d),
        fine_soft,
        parcel_soft,
        final_labels: pre.image.with_data(labels)?,
        qc: QcReport::new(&scores, options.qc_threshold),
    })
}

/// Segments each channel of a multi-channel scan on its own.
pub fn segment_channels(channels: &[IntensityVolume], bundle: &ModelBundle, qc_threshold: f64) -> Vec<Result<SegmentationResult>> {
    channels.iter().map(|c| segment_full(c, bundle, qc_threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcMode {
    /// Drop a whole case when any region fails.
    Whole,
    /// Blank only the failing structures.
    PerStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropEvent {
    pub subject: String,
    /// `None` when the whole case was dropped.
    pub structure: Option<String>,
    pub score: f64,
}

/// Applies the QC rule to a volume table. Entries without a score are kept.
pub fn qc_filter(table: &CohortTable, mode: QcMode, threshold: f64) -> (CohortTable, Vec<DropEvent>) {
    let mut log = Vec::new();
    let mut records = Vec::new();
    for record in &table.records {
        let failing: Vec<(usize, f64)> =
            record.qc.iter().enumerate().filter_map(|(i, s)| s.filter(|&s| s < threshold).map(|s| (i, s))).collect();
        match mode {
            QcMode::Whole if !failing.is_empty() => {
                let worst = failing.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
                log.push(DropEvent { subject: record.subject.clone(), structure: None, score: worst });
            }
            QcMode::Whole => records.push(record.clone()),
            QcMode::PerStructure => {
                let mut kept = record.clone();
                for (i, score) in failing {
                    kept.volumes[i] = None;
                    log.push(DropEvent {
                        subject: record.subject.clone(),
                        structure: Some(table.structures[i].clone()),
                        score,
                    });
                }
                records.push(kept);
            }
        }
    }
    (CohortTable { structures: table.structures.clone(), records }, log)
}

/// Cohort rows from segmentation reports, one column per schema structure
/// (background excluded), named by structure. Demographics are unknown: age
/// is NaN.
pub fn volume_table(reports: &[(String, VolumeReport)], schema: &LabelSchema) -> CohortTable {
    let structures: Vec<_> = schema.structures().iter().filter(|s| s.id != 0).collect();
    let records = reports
        .iter()
        .map(|(subject, r)| CohortRecord {
            subject: subject.clone(),
            age: f64::NAN,
            gender: 0,
            spacing: [1.0; 3],
            volumes: structures.iter().map(|s| r.volumes.get(&s.id).copied()).collect(),
            icv: Some(r.icv),
            qc: structures.iter().map(|s| r.qc.get(&s.id).copied()).collect(),
            group: None,
        })
        .collect();
    CohortTable { structures: structures.iter().map(|s| s.name.clone()).collect(), records }
}
