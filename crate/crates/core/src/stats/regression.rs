use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Result, StatsError};

/// Tolerance on `|R_ii|` for unit-norm columns: below it, column `i` is treated
/// as a linear combination of the columns before it.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares by Householder QR on a column-equilibrated design.
/// `names` labels the columns for rank-deficiency errors.
pub fn least_squares(design: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let (rows, cols) = design.shape();
    if y.len() != rows {
        return Err(StatsError::LengthMismatch { what: "design rows vs responses", left: rows, right: y.len() });
    }
    if rows < cols {
        return Err(StatsError::TooFewRows { rows, columns: cols, needed: cols });
    }
    if design.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("regression inputs"));
    }
    let norms: Vec<f64> = (0..cols).map(|c| design.column(c).norm()).collect();
    let mut scaled = design.clone();
    for (c, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            return Err(StatsError::RankDeficient(names[c].clone()));
        }
        scaled.column_mut(c).scale_mut(1.0 / n);
    }
    let qr = scaled.qr();
    let r = qr.r();
    if let Some(c) = (0..cols).find(|&c| r[(c, c)].abs() < RANK_TOL) {
        return Err(StatsError::RankDeficient(names[c].clone()));
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty).expect("nonzero diagonal");
    Ok(beta.iter().zip(&norms).map(|(b, n)| b / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateFit {
    /// Intercept, age, gender, ICV.
    pub coefficients: [f64; 4],
    pub residuals: Vec<f64>,
    /// Residuals plus the grand mean of the volumes.
    pub corrected: Vec<f64>,
}

/// Regresses volumes on `[1, age, gender, icv]` and removes the fitted covariate effects.
pub fn covariate_correct(volumes: &[f64], covariates: &[[f64; 3]]) -> Result<CovariateFit> {
    if volumes.len() != covariates.len() {
        return Err(StatsError::LengthMismatch {
            what: "volumes vs covariate rows",
            left: volumes.len(),
            right: covariates.len(),
        });
    }
    let rows = volumes.len();
    if rows < 5 {
        return Err(StatsError::TooFewRows { rows, columns: 4, needed: 5 });
    }
    let design = DMatrix::from_fn(rows, 4, |r, c| if c == 0 { 1.0 } else { covariates[r][c - 1] });
    let names = ["intercept", "age", "gender", "icv"].map(String::from);
    let beta = least_squares(&design, volumes, &names)?;
    let mean = volumes.iter().sum::<f64>() / rows as f64;
    let residuals: Vec<f64> = (0..rows)
        .map(|r| volumes[r] - (beta[0] + (1..4).map(|c| beta[c] * covariates[r][c - 1]).sum::<f64>()))
        .collect();
    let corrected = residuals.iter().map(|e| e + mean).collect();
    Ok(CovariateFit { coefficients: [beta[0], beta[1], beta[2], beta[3]], residuals, corrected })
}
