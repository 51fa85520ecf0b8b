use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenError;
use crate::rng::{RngStream, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { low: v, high: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        rng.uniform(self.low, self.high)
    }
}

/// Which axes of a simulated acquisition get thick slices. Axis 0 runs
/// left-right, axis 1 posterior-anterior, axis 2 inferior-superior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Axial,
    Coronal,
    Sagittal,
    Isotropic,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Axial, Direction::Coronal, Direction::Sagittal, Direction::Isotropic];

    pub fn thick_axes(self) -> &'static [usize] {
        match self {
            Direction::Axial => &[2],
            Direction::Coronal => &[1],
            Direction::Sagittal => &[0],
            Direction::Isotropic => &[0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionProbs {
    pub axial: f64,
    pub coronal: f64,
    pub sagittal: f64,
    pub isotropic: f64,
}

impl DirectionProbs {
    fn weights(&self) -> [f64; 4] {
        [self.axial, self.coronal, self.sagittal, self.isotropic]
    }
}

/// Uniform prior ranges for every parameter of the generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenPriors {
    pub rotation_deg: Range,
    pub scale: Range,
    pub shear: Range,
    pub translation_mm: Range,
    pub elastic_std_mm: Range,
    pub elastic_grid_mm: f64,
    pub gmm_mean: Range,
    pub gmm_std: Range,
    pub bias_log_std: Range,
    pub bias_grid_mm: f64,
    pub noise_std: Range,
    pub gamma_log: Range,
    pub spacing_mm: [Range; 3],
    pub direction_probs: DirectionProbs,
    pub blur_factor: f64,
}

pub const DEFAULT_WIDENING: f64 = 2.0;

impl Default for GenPriors {
    fn default() -> Self {
        Self {
            rotation_deg: Range::new(-15.0, 15.0),
            scale: Range::new(0.85, 1.15),
            shear: Range::new(-0.012, 0.012),
            translation_mm: Range::new(-10.0, 10.0),
            elastic_std_mm: Range::new(0.0, 3.0),
            elastic_grid_mm: 16.0,
            gmm_mean: Range::new(0.0, 1.0),
            gmm_std: Range::new(0.0, 0.25),
            bias_log_std: Range::new(0.0, 0.4),
            bias_grid_mm: 40.0,
            noise_std: Range::new(0.0, 0.1),
            gamma_log: Range::new(-0.35, 0.35),
            spacing_mm: [Range::new(1.0, 9.0); 3],
            direction_probs: DirectionProbs { axial: 0.25, coronal: 0.25, sagittal: 0.25, isotropic: 0.25 },
            blur_factor: 0.85,
        }
    }
}

impl GenPriors {
    /// Priors under which the generator leaves a label map's geometry and the
    /// synthesized intensities untouched.
    pub fn identity() -> Self {
        Self {
            rotation_deg: Range::fixed(0.0),
            scale: Range::fixed(1.0),
            shear: Range::fixed(0.0),
            translation_mm: Range::fixed(0.0),
            elastic_std_mm: Range::fixed(0.0),
            bias_log_std: Range::fixed(0.0),
            noise_std: Range::fixed(0.0),
            gamma_log: Range::fixed(0.0),
            spacing_mm: [Range::fixed(1.0); 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let mut ranges = vec![
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("shear", self.shear),
            ("translation_mm", self.translation_mm),
            ("elastic_std_mm", self.elastic_std_mm),
            ("gmm_mean", self.gmm_mean),
            ("gmm_std", self.gmm_std),
            ("bias_log_std", self.bias_log_std),
            ("noise_std", self.noise_std),
            ("gamma_log", self.gamma_log),
        ];
        for (a, r) in ["spacing_mm[0]", "spacing_mm[1]", "spacing_mm[2]"].into_iter().zip(self.spacing_mm) {
            ranges.push((a, r));
        }
        for (name, r) in &ranges {
            if !(r.low.is_finite() && r.high.is_finite() && r.low <= r.high) {
                return Err(GenError::Prior(format!("{name}: range [{}, {}] is not ordered", r.low, r.high)));
            }
        }
        let non_negative = [
            ("elastic_std_mm", self.elastic_std_mm),
            ("gmm_std", self.gmm_std),
            ("bias_log_std", self.bias_log_std),
            ("noise_std", self.noise_std),
        ];
        for (name, r) in non_negative {
            if r.low < 0.0 {
                return Err(GenError::Prior(format!("{name}: standard deviations cannot be negative")));
            }
        }
        if self.scale.low <= 0.0 {
            return Err(GenError::Prior("scale must be positive".into()));
        }
        if self.spacing_mm.iter().any(|r| r.low < 1.0) {
            return Err(GenError::Prior("spacing_mm must not go below the 1 mm output grid".into()));
        }
        if !(self.elastic_grid_mm > 0.0 && self.bias_grid_mm > 0.0) {
            return Err(GenError::Prior("control grid spacings must be positive".into()));
        }
        let w = self.direction_probs.weights();
        if w.iter().any(|&p| !(p >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(GenError::Prior("direction_probs must be non-negative with a positive sum".into()));
        }
        if !(self.blur_factor >= 0.0) {
            return Err(GenError::Prior("blur_factor must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        let p: Self = serde_json::from_str(text).map_err(|e| GenError::Prior(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GenError::Prior(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Priors for corrupting real images: the upper bounds of the noise, bias
    /// and slice-spacing ranges and both bounds of the gamma range are scaled
    /// by `factor`.
    pub fn widened(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.noise_std.high *= factor;
        p.bias_log_std.high *= factor;
        p.gamma_log.low *= factor;
        p.gamma_log.high *= factor;
        for r in p.spacing_mm.iter_mut() {
            r.high *= factor;
        }
        p
    }
}

/// One GMM component drawn for a label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub label: u32,
    pub mean: f64,
    pub std: f64,
}

/// One realization of every randomized parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub map_index: usize,
    pub stream: StreamId,
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    /// Shear terms for the (0,1), (0,2) and (1,2) entries.
    pub shear: [f64; 3],
    pub translation_mm: [f64; 3],
    pub elastic_std_mm: f64,
    pub elastic_grid_mm: f64,
    pub gmm_mean: Range,
    pub gmm_std: Range,
    /// Filled once intensities have been synthesized.
    #[serde(default)]
    pub gmm: Vec<GmmComponent>,
    pub bias_log_std: f64,
    pub bias_grid_mm: f64,
    pub noise_std: f64,
    pub gamma_log: f64,
    pub direction: Direction,
    pub spacing_mm: [f64; 3],
    pub blur_factor: f64,
}

/// Draws every parameter independently from its prior.
pub fn sample_params(priors: &GenPriors, rng: &mut RngStream) -> GenParams {
    let stream = rng.id();
    let three = |r: Range, rng: &mut RngStream| [r.sample(rng), r.sample(rng), r.sample(rng)];
    let rotation_deg = three(priors.rotation_deg, rng);
    let scale = three(priors.scale, rng);
    let shear = three(priors.shear, rng);
    let translation_mm = three(priors.translation_mm, rng);
    let elastic_std_mm = priors.elastic_std_mm.sample(rng);
    let bias_log_std = priors.bias_log_std.sample(rng);
    let noise_std = priors.noise_std.sample(rng);
    let gamma_log = priors.gamma_log.sample(rng);
    let direction = Direction::ALL[rng.categorical(&priors.direction_probs.weights())];
    let mut spacing_mm = [1.0; 3];
    match direction {
        Direction::Isotropic => {
            let u = rng.unit();
            for (s, r) in spacing_mm.iter_mut().zip(priors.spacing_mm) {
                *s = r.low + u * (r.high - r.low);
            }
        }
        d => {
            let a = d.thick_axes()[0];
            spacing_mm[a] = priors.spacing_mm[a].sample(rng);
        }
    }
    GenParams {
        map_index: 0,
        stream,
        rotation_deg,
        scale,
        shear,
        translation_mm,
        elastic_std_mm,
        elastic_grid_mm: priors.elastic_grid_mm,
        gmm_mean: priors.gmm_mean,
        gmm_std: priors.gmm_std,
        gmm: Vec::new(),
        bias_log_std,
        bias_grid_mm: priors.bias_grid_mm,
        noise_std,
        gamma_log,
        direction,
        spacing_mm,
        blur_factor: priors.blur_factor,
    }
}

impl GenParams {
    /// Parameters drawn from [`GenPriors::identity`].
    pub fn neutral() -> Self {
        sample_params(&GenPriors::identity(), &mut RngStream::new(0, 0))
    }
}
