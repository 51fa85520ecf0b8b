use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{least_squares, CohortTable, Result, StatsError};

pub const NUM_KNOTS: usize = 10;
pub const SPLINE_DEGREE: usize = 3;
const MIN_RECORDS: usize = 30;

/// Volume trajectory: a clamped cubic B-spline in age plus linear terms for
/// slice spacing and gender.
///
/// The spline basis sums to one, so the first basis function is dropped (its
/// coefficient is stored as 0) and the intercept carries the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeingModel {
    pub structure: String,
    pub spline_knots: Vec<f64>,
    pub spline_coeffs: Vec<f64>,
    /// Sagittal, coronal, axial.
    pub slice_spacing_coeffs: [f64; 3],
    pub gender_bias: f64,
    pub intercept: f64,
    pub records_used: usize,
}

impl AgeingModel {
    pub fn age_range(&self) -> (f64, f64) {
        (self.spline_knots[0], self.spline_knots[NUM_KNOTS - 1])
    }

    /// False when predicting at `age` extrapolates the spline.
    pub fn in_range(&self, age: f64) -> bool {
        let (lo, hi) = self.age_range();
        (lo..=hi).contains(&age)
    }

    pub fn trajectory(&self, age: f64) -> f64 {
        let basis = bspline_basis(&self.spline_knots, age);
        self.intercept + basis.iter().zip(&self.spline_coeffs).map(|(b, c)| b * c).sum::<f64>()
    }
}

/// Values of all `knots.len() + 2` clamped cubic B-spline basis functions at
/// `x`. Outside the knot range the end polynomial pieces are continued.
pub fn bspline_basis(knots: &[f64], x: f64) -> Vec<f64> {
    let p = SPLINE_DEGREE;
    let (a, b) = (knots[0], knots[knots.len() - 1]);
    let mut u = vec![a; p];
    u.extend_from_slice(knots);
    u.extend(std::iter::repeat_n(b, p));
    let n = u.len() - p - 1;
    let span = (p..n).rev().find(|&s| u[s] <= x).unwrap_or(p);

    let mut basis = [0.0; SPLINE_DEGREE + 1];
    let mut left = [0.0; SPLINE_DEGREE + 1];
    let mut right = [0.0; SPLINE_DEGREE + 1];
    basis[0] = 1.0;
    for j in 1..=p {
        left[j] = x - u[span + 1 - j];
        right[j] = u[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = basis[r] / (right[r + 1] + left[j - r]);
            basis[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        basis[j] = saved;
    }
    let mut out = vec![0.0; n];
    out[span - p..=span].copy_from_slice(&basis);
    out
}

fn equally_spaced(lo: f64, hi: f64) -> Vec<f64> {
    (0..NUM_KNOTS)
        .map(|i| if i == NUM_KNOTS - 1 { hi } else { lo + (hi - lo) * i as f64 / (NUM_KNOTS - 1) as f64 })
        .collect()
}

fn design_row(knots: &[f64], age: f64, gender: f64, spacing: [f64; 3]) -> Vec<f64> {
    let mut row = vec![1.0];
    row.extend_from_slice(&bspline_basis(knots, age)[1..]);
    row.extend_from_slice(&spacing);
    row.push(gender);
    row
}

/// Least-squares fit of one structure's volume over the records where it is present.
pub fn ageing_fit(table: &CohortTable, structure: &str) -> Result<AgeingModel> {
    let column = table.column(structure).ok_or_else(|| StatsError::UnknownColumn(structure.to_string()))?;
    let rows: Vec<_> = table.records.iter().filter_map(|r| r.volumes[column].map(|v| (r, v))).collect();
    if rows.len() < MIN_RECORDS {
        return Err(StatsError::TooFewRows { rows: rows.len(), columns: NUM_KNOTS + 6, needed: MIN_RECORDS });
    }
    if rows.iter().any(|(r, _)| !r.age.is_finite()) {
        return Err(StatsError::NonFinite("ages"));
    }
    let lo = rows.iter().map(|(r, _)| r.age).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|(r, _)| r.age).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(StatsError::DegenerateAgeRange(lo, hi));
    }
    let knots = equally_spaced(lo, hi);
    let design_rows: Vec<Vec<f64>> =
        rows.iter().map(|(r, _)| design_row(&knots, r.age, r.gender as f64, r.spacing)).collect();
    let cols = design_rows[0].len();
    let design = DMatrix::from_fn(rows.len(), cols, |r, c| design_rows[r][c]);
    let y: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
    let mut names = vec!["intercept".to_string()];
    names.extend((1..NUM_KNOTS + SPLINE_DEGREE - 1).map(|i| format!("spline_{i}")));
    names.extend(["spacing_sag", "spacing_cor", "spacing_ax", "gender"].map(String::from));
    let beta = least_squares(&design, &y, &names)?;

    let nb = NUM_KNOTS + SPLINE_DEGREE - 1;
    let mut spline_coeffs = vec![0.0];
    spline_coeffs.extend_from_slice(&beta[1..nb]);
    Ok(AgeingModel {
        structure: structure.to_string(),
        spline_knots: knots,
        spline_coeffs,
        slice_spacing_coeffs: [beta[nb], beta[nb + 1], beta[nb + 2]],
        gender_bias: beta[nb + 3],
        intercept: beta[0],
        records_used: rows.len(),
    })
}

pub fn ageing_predict(model: &AgeingModel, age: f64, gender: u8, spacing: [f64; 3]) -> f64 {
    model.trajectory(age)
        + (0..3).map(|a| model.slice_spacing_coeffs[a] * spacing[a]).sum::<f64>()
        + model.gender_bias * gender as f64
}
