//! Evaluation metrics and population statistics: overlap scores, volumes and
//! ICV, effect sizes, ROC analysis, covariate correction and the ageing model.

mod ageing;
mod regression;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::LabelSchema;
use crate::tensor::{Scalar, Tensor};
use crate::volume::LabelVolume;

pub use ageing::{ageing_fit, ageing_predict, bspline_basis, AgeingModel, NUM_KNOTS, SPLINE_DEGREE};
pub use regression::{covariate_correct, least_squares, CovariateFit};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("volumes live on different grids: {0:?} vs {1:?}")]
    GridMismatch([usize; 3], [usize; 3]),
    #[error("probability {value} at voxel {index} is outside [0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("structure {0} has no volume in the report")]
    MissingStructure(u32),
    #[error("group {group} has {size} samples, at least 2 are needed")]
    GroupTooSmall { group: char, size: usize },
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("both classes must be present (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{rows} rows are too few for {columns} columns (need at least {needed})")]
    TooFewRows { rows: usize, columns: usize, needed: usize },
    #[error("design matrix is rank deficient at column {0:?}")]
    RankDeficient(String),
    #[error("age range is degenerate ({0} to {1})")]
    DegenerateAgeRange(f64, f64),
    #[error("no column named {0:?}")]
    UnknownColumn(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Counts `(|X|, |Y|, |X and Y|)` for one label.
fn overlap(x: &LabelVolume, y: &LabelVolume, label: u32) -> Result<(usize, usize, usize)> {
    if x.dims() != y.dims() {
        return Err(StatsError::GridMismatch(x.dims(), y.dims()));
    }
    let mut counts = (0, 0, 0);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (ia, ib) = (a == label, b == label);
        counts.0 += usize::from(ia);
        counts.1 += usize::from(ib);
        counts.2 += usize::from(ia && ib);
    }
    Ok(counts)
}

/// Hard Dice `2|X and Y| / (|X| + |Y|)` of one label; 1 when the label is absent from both.
pub fn hard_dice(x: &LabelVolume, y: &LabelVolume, label: u32) -> Result<f64> {
    let (nx, ny, both) = overlap(x, y, label)?;
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (nx + ny) as f64)
}

/// Dice of every label in `labels`, in order.
pub fn dice_per_label(x: &LabelVolume, y: &LabelVolume, labels: &[u32]) -> Result<Vec<f64>> {
    labels.iter().map(|&l| hard_dice(x, y, l)).collect()
}

/// Sum of probabilities times the voxel volume.
pub fn soft_volume<T: Scalar>(channel: &[T], voxel_volume: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (index, v) in channel.iter().enumerate() {
        let value = v.f64();
        if !(0.0..=1.0).contains(&value) {
            return Err(StatsError::BadProbability { index, value });
        }
        sum += value;
    }
    Ok(sum * voxel_volume)
}

/// Per-structure volumes (mm^3) of one segmentation, its ICV, and the QC
/// score of the region each structure belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub volumes: BTreeMap<u32, f64>,
    pub icv: f64,
    #[serde(default)]
    pub qc: BTreeMap<u32, f64>,
}

impl VolumeReport {
    /// Volumes from a fine soft segmentation whose channels follow the schema's
    /// structure order.
    pub fn from_soft<T: Scalar>(soft: &Tensor<T>, schema: &LabelSchema, voxel_volume: f64) -> Result<Self> {
        if soft.channels() != schema.num_fine() {
            return Err(StatsError::LengthMismatch {
                what: "soft channels vs schema structures",
                left: soft.channels(),
                right: schema.num_fine(),
            });
        }
        let mut volumes = BTreeMap::new();
        for (c, s) in schema.structures().iter().enumerate() {
            volumes.insert(s.id, soft_volume(soft.channel(c), voxel_volume)?);
        }
        let mut report = Self { volumes, icv: 0.0, qc: BTreeMap::new() };
        report.icv = icv_estimate(&report, schema)?;
        Ok(report)
    }

    /// Attaches region scores (indexed like `QcRegion::ALL`) to their structures.
    pub fn attach_qc(&mut self, schema: &LabelSchema, scores: &[f64]) {
        for s in schema.structures() {
            if let Some(r) = s.qc_region {
                self.qc.insert(s.id, scores[r.index()]);
            }
        }
    }
}

/// Sum of the volumes of every structure flagged as intracranial, in schema
/// order, accumulated in f64.
pub fn icv_estimate(report: &VolumeReport, schema: &LabelSchema) -> Result<f64> {
    let mut icv = 0.0;
    for s in schema.icv_structures() {
        icv += report.volumes.get(&s.id).ok_or(StatsError::MissingStructure(s.id))?;
    }
    Ok(icv)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Cohen's d with the pooled standard deviation. Returns `+inf` when both
/// groups are constant but their means differ.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    for (group, g) in [('a', a), ('b', b)] {
        if g.len() < 2 {
            return Err(StatsError::GroupTooSmall { group, size: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("group values"));
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    let diff = (ma - mb).abs();
    if pooled == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(diff / pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roc {
    pub auc: f64,
    /// From the strictest threshold (nothing positive) to the loosest.
    pub points: Vec<RocPoint>,
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(StatsError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// ROC curve and AUC. The AUC is the Mann-Whitney statistic with half credit
/// for ties, computed from mid-ranks in integer arithmetic (ranks doubled).
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch { what: "scores vs labels", left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::NonFinite("scores"));
    }
    let (np, nn) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Sum over positives of twice their mid-rank (1-based).
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let doubled_mid = (start + 1 + end + 1) as u128;
        let pos_in_tie = order[start..=end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled_mid * pos_in_tie;
        start = end + 1;
    }
    let doubled_u = doubled_rank_sum - (np as u128) * (np as u128 + 1);
    let auc = doubled_u as f64 / (2 * np * nn) as f64;

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = order.len();
    while i > 0 {
        let threshold = scores[order[i - 1]];
        while i > 0 && scores[order[i - 1]] == threshold {
            if labels[order[i - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i -= 1;
        }
        points.push(RocPoint { threshold, fpr: fp as f64 / nn as f64, tpr: tp as f64 / np as f64 });
    }
    Ok(Roc { auc, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// Metrics of the rule "positive when score >= threshold".
pub fn classification_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ClassificationMetrics> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch { what: "scores vs labels", left: scores.len(), right: labels.len() });
    }
    let (np, nn) = class_counts(labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        tp += usize::from(predicted && l);
        tn += usize::from(!predicted && !l);
    }
    Ok(ClassificationMetrics {
        sensitivity: tp as f64 / np as f64,
        specificity: tn as f64 / nn as f64,
        accuracy: (tp + tn) as f64 / (np + nn) as f64,
    })
}

/// One subject of a cohort table. `volumes` and `qc` align with the table's
/// structure names; a missing entry is a blank cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub subject: String,
    /// NaN when unknown.
    pub age: f64,
    pub gender: u8,
    /// Sagittal, coronal, axial.
    pub spacing: [f64; 3],
    pub volumes: Vec<Option<f64>>,
    pub icv: Option<f64>,
    pub qc: Vec<Option<f64>>,
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub structures: Vec<String>,
    pub records: Vec<CohortRecord>,
}

impl CohortTable {
    pub fn column(&self, structure: &str) -> Option<usize> {
        self.structures.iter().position(|s| s == structure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Grid3, Volume};

    fn lv(data: Vec<u32>) -> LabelVolume {
        Volume::new(Grid3::unit([data.len(), 1, 1]), data).unwrap()
    }

    #[test]
    fn dice_examples() {
        let x = lv(vec![1, 1, 1, 0, 0]);
        let y = lv(vec![0, 0, 1, 1, 0]);
        assert!((hard_dice(&x, &y, 1).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(hard_dice(&x, &x, 1).unwrap(), 1.0);
        assert_eq!(hard_dice(&x, &y, 7).unwrap(), 1.0);
        assert_eq!(hard_dice(&lv(vec![1, 0]), &lv(vec![0, 1]), 1).unwrap(), 0.0);
        assert!(hard_dice(&x, &lv(vec![1]), 1).is_err());
    }

    #[test]
    fn soft_volume_examples() {
        assert_eq!(soft_volume(&[0.5f32; 10], 1.0).unwrap(), 5.0);
        assert_eq!(soft_volume::<f32>(&[], 1.0).unwrap(), 0.0);
        assert!(soft_volume(&[-0.1f64], 1.0).is_err());
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d(&[10.0, 12.0], &[14.0, 16.0]).unwrap();
        assert!((d - 4.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(cohens_d(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), f64::INFINITY);
        assert!(cohens_d(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        let roc = auc_roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(roc.auc, 0.75);
        assert_eq!(auc_roc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap().auc, 0.5);
        assert_eq!(auc_roc(&[0.1, 0.2, 0.9], &[false, false, true]).unwrap().auc, 1.0);
        assert!(auc_roc(&[0.1, 0.2], &[true, true]).is_err());
        let last = roc.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn metrics_at_threshold() {
        let m = classification_metrics(&[0.1, 0.7, 0.65, 0.2], &[false, true, true, true], 0.65).unwrap();
        assert_eq!(m.sensitivity, 2.0 / 3.0);
        assert_eq!(m.specificity, 1.0);
        assert_eq!(m.accuracy, 0.75);
    }
}
