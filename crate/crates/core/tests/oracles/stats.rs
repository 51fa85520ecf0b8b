//! Brute-force and closed-form references for the statistics module.

use std::collections::BTreeSet;

use synthseg_core::rng::RngStream;
use synthseg_core::stats::{CohortRecord, CohortTable};
use synthseg_core::volume::{Grid3, LabelVolume, Volume};

/// Dice from explicit voxel-index sets.
pub fn dice_oracle(x: &LabelVolume, y: &LabelVolume, label: u32) -> f64 {
    let set = |v: &LabelVolume| -> BTreeSet<usize> {
        v.data().iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect()
    };
    let (a, b) = (set(x), set(y));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * a.intersection(&b).count() as f64 / (a.len() + b.len()) as f64
}

pub fn random_labels(rng: &mut RngStream, dims: [usize; 3], num_labels: usize) -> LabelVolume {
    Volume::from_fn(Grid3::unit(dims), |_, _, _| rng.index(num_labels) as u32)
}

/// AUC by comparing every (positive, negative) pair; ties count one half.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut doubled = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            doubled += if si > sj { 2 } else if si == sj { 1 } else { 0 };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Quantized scores (so that ties occur) and labels with both classes present.
pub fn random_scored(rng: &mut RngStream, n: usize) -> (Vec<f64>, Vec<bool>) {
    let scores = (0..n).map(|_| (rng.unit() * 20.0).floor() / 20.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
    labels[0] = true;
    labels[n - 1] = false;
    (scores, labels)
}

/// Cohen's d written out term by term.
pub fn cohens_d_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let (ma, mb) = (mean(a), mean(b));
    let s = ((ss(a, ma) + ss(b, mb)) / (a.len() + b.len() - 2) as f64).sqrt();
    (ma - mb).abs() / s
}

/// Cox-de Boor recursion on the clamped cubic knot vector over `knots`.
pub fn cox_de_boor(knots: &[f64], x: f64) -> Vec<f64> {
    let (a, b) = (knots[0], *knots.last().unwrap());
    let mut u = vec![a, a, a];
    u.extend_from_slice(knots);
    u.extend([b, b, b]);
    let last_interval = u.len() - 5;
    let mut n: Vec<f64> = (0..u.len() - 1)
        .map(|i| {
            let inside = u[i] <= x && x < u[i + 1];
            let at_end = x == b && i == last_interval;
            if inside || at_end { 1.0 } else { 0.0 }
        })
        .collect();
    for p in 1..=3 {
        n = (0..u.len() - 1 - p)
            .map(|i| {
                let l = if u[i + p] > u[i] { (x - u[i]) / (u[i + p] - u[i]) * n[i] } else { 0.0 };
                let r = if u[i + p + 1] > u[i + 1] {
                    (u[i + p + 1] - x) / (u[i + p + 1] - u[i + 1]) * n[i + 1]
                } else {
                    0.0
                };
                l + r
            })
            .collect();
    }
    n
}

pub struct KnownCohort {
    pub table: CohortTable,
    /// Noiseless model value of every record.
    pub truth: Vec<f64>,
    pub spacing_coeffs: [f64; 3],
    pub gender_bias: f64,
}

/// A cohort whose single structure follows a random spline plus linear terms exactly.
pub fn known_ageing_cohort(seed: u64, n: usize) -> KnownCohort {
    let mut rng = RngStream::new(seed, 11);
    let ages: Vec<f64> = (0..n).map(|_| rng.uniform(20.0, 90.0)).collect();
    let lo = ages.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let knots: Vec<f64> = (0..10).map(|i| lo + (hi - lo) * i as f64 / 9.0).collect();
    let mut knots = knots;
    knots[9] = hi;
    let coeffs: Vec<f64> = (0..12).map(|_| rng.uniform(3000.0, 5000.0)).collect();
    let spacing_coeffs = [rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)];
    let gender_bias = rng.uniform(-300.0, 300.0);
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (i, &age) in ages.iter().enumerate() {
        let gender = u8::from(rng.bernoulli(0.5));
        let spacing = [rng.uniform(0.8, 1.5), rng.uniform(0.8, 1.5), rng.uniform(1.0, 6.0)];
        let basis = cox_de_boor(&knots, age);
        let v = basis.iter().zip(&coeffs).map(|(b, c)| b * c).sum::<f64>()
            + (0..3).map(|a| spacing_coeffs[a] * spacing[a]).sum::<f64>()
            + gender_bias * gender as f64;
        truth.push(v);
        records.push(CohortRecord {
            subject: format!("s{i:03}"),
            age,
            gender,
            spacing,
            volumes: vec![Some(v)],
            icv: None,
            qc: vec![None],
            group: None,
        });
    }
    KnownCohort {
        table: CohortTable { structures: vec!["hippocampus".into()], records },
        truth,
        spacing_coeffs,
        gender_bias,
    }
}

/// Volumes generated from `[1, age, gender, icv]` with known coefficients, no noise.
pub fn known_covariate_data(seed: u64, n: usize) -> (Vec<f64>, Vec<[f64; 3]>, [f64; 4]) {
    let mut rng = RngStream::new(seed, 12);
    let beta = [rng.uniform(1000.0, 3000.0), rng.uniform(-20.0, 20.0), rng.uniform(-200.0, 200.0), rng.uniform(1e-4, 3e-3)];
    let cov: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.uniform(50.0, 90.0), f64::from(u8::from(rng.bernoulli(0.5))), rng.uniform(1.2e6, 1.8e6)])
        .collect();
    let vols = cov.iter().map(|c| beta[0] + beta[1] * c[0] + beta[2] * c[1] + beta[3] * c[2]).collect();
    (vols, cov, beta)
}
