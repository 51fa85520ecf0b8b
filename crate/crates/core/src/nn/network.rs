//! The three architectures: a UNet segmenter, a lighter denoising UNet and an
//! encoder-only QC regressor.

use serde::{Deserialize, Serialize};

use super::layers::{self, init_weights, Cache, LayerKind, LayerSpec, LayerWeights, Mode};
use super::{NnError, Weights};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Segmenter,
    Denoiser,
    Regressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipPolicy {
    All,
    /// No skip connections on the two highest-resolution levels.
    SuppressTopTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: Role,
    pub levels: usize,
    pub base_features: usize,
    pub skip_policy: SkipPolicy,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl NetworkSpec {
    pub fn segmenter(levels: usize, base_features: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { role: Role::Segmenter, levels, base_features, skip_policy: SkipPolicy::All, in_channels, out_channels }
    }

    pub fn denoiser(levels: usize, base_features: usize, channels: usize) -> Self {
        Self {
            role: Role::Denoiser,
            levels,
            base_features,
            skip_policy: SkipPolicy::SuppressTopTwo,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn regressor(levels: usize, base_features: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { role: Role::Regressor, levels, base_features, skip_policy: SkipPolicy::All, in_channels, out_channels }
    }

    /// Spatial dims must be multiples of this.
    pub fn required_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    fn skip_enabled(&self, level: usize) -> bool {
        match self.skip_policy {
            SkipPolicy::All => true,
            SkipPolicy::SuppressTopTwo => level >= 2,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidSpec(m.to_string()));
        if self.levels == 0 || self.levels > 8 {
            return bad("levels must be in 1..=8");
        }
        if self.base_features == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return bad("feature and channel counts must be positive");
        }
        if self.role == Role::Regressor && self.skip_policy != SkipPolicy::All {
            return bad("the regressor has no skip connections to suppress");
        }
        if self.role == Role::Denoiser && self.in_channels != self.out_channels {
            return bad("the denoiser maps a segmentation onto the same label set");
        }
        Ok(())
    }

    /// The ordered layer list.
    pub fn layers(&self) -> Result<Vec<LayerSpec>, NnError> {
        self.validate()?;
        let mut b = Builder { layers: Vec::new(), channels: self.in_channels };
        let l = self.levels;
        match self.role {
            Role::Segmenter | Role::Denoiser => {
                let convs = if self.role == Role::Segmenter { 2 } else { 1 };
                let width = |lv: usize| match self.role {
                    Role::Segmenter => self.base_features << lv,
                    _ => self.base_features,
                };
                for lv in 0..l {
                    for c in 0..convs {
                        b.push(format!("enc{lv}.conv{c}"), LayerKind::Conv3, width(lv));
                        b.push(format!("enc{lv}.elu{c}"), LayerKind::Elu, width(lv));
                    }
                    b.push(format!("enc{lv}.bn"), LayerKind::BatchNorm, width(lv));
                    if lv + 1 < l {
                        if self.skip_enabled(lv) {
                            b.layers.last_mut().unwrap().save_skip = Some(lv);
                        }
                        b.push(format!("enc{lv}.pool"), LayerKind::MaxPool2, width(lv));
                    }
                }
                for lv in (0..l.saturating_sub(1)).rev() {
                    b.push(format!("dec{lv}.up"), LayerKind::Upsample2, b.channels);
                    if self.skip_enabled(lv) {
                        b.push(format!("dec{lv}.concat"), LayerKind::ConcatSkip { slot: lv }, b.channels + width(lv));
                    }
                    for c in 0..convs {
                        b.push(format!("dec{lv}.conv{c}"), LayerKind::Conv3, width(lv));
                        b.push(format!("dec{lv}.elu{c}"), LayerKind::Elu, width(lv));
                    }
                    b.push(format!("dec{lv}.bn"), LayerKind::BatchNorm, width(lv));
                }
                b.push("head.conv".into(), LayerKind::Conv3, self.out_channels);
                b.push("head.softmax".into(), LayerKind::Softmax, self.out_channels);
            }
            Role::Regressor => {
                for lv in 0..l {
                    let w = self.base_features << lv;
                    for c in 0..2 {
                        b.push(format!("enc{lv}.conv{c}"), LayerKind::Conv5, w);
                        b.push(format!("enc{lv}.elu{c}"), LayerKind::Elu, w);
                    }
                    b.push(format!("enc{lv}.bn"), LayerKind::BatchNorm, w);
                    if lv + 1 < l {
                        b.push(format!("enc{lv}.pool"), LayerKind::MaxPool2, w);
                    }
                }
                b.push("head.conv0".into(), LayerKind::Conv5, self.out_channels);
                b.push("head.elu0".into(), LayerKind::Elu, self.out_channels);
                b.push("head.conv1".into(), LayerKind::Conv5, self.out_channels);
                b.push("head.pool".into(), LayerKind::GlobalMaxPool, self.out_channels);
            }
        }
        Ok(b.layers)
    }
}

struct Builder {
    layers: Vec<LayerSpec>,
    channels: usize,
}

impl Builder {
    fn push(&mut self, name: String, kind: LayerKind, out: usize) {
        let out = match kind {
            LayerKind::Conv3 | LayerKind::Conv5 | LayerKind::ConcatSkip { .. } => out,
            _ => self.channels,
        };
        self.layers.push(LayerSpec { name, kind, in_channels: self.channels, out_channels: out, save_skip: None });
        self.channels = out;
    }
}

/// Gradients aligned with `Weights::layers[i].params`.
pub type Grads<T> = Vec<Vec<Tensor<T>>>;

/// Everything recorded by a train-mode forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    spec: NetworkSpec,
    layers: Vec<LayerSpec>,
    weights: Weights<T>,
}

/// Builds the layer list and freshly initialized weights; `seed` drives the
/// initialization stream.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>, NnError> {
    let layers = spec.layers()?;
    let mut rng = RngStream::new(seed, u64::MAX);
    let weights = Weights { layers: layers.iter().map(|l| init_weights(l, &mut rng)).collect() };
    Ok(Network { spec: spec.clone(), layers, weights })
}

impl<T: Scalar> Network<T> {
    /// Pairs a spec with existing weights, checking names and shapes.
    pub fn from_parts(spec: &NetworkSpec, weights: Weights<T>) -> Result<Self, NnError> {
        let fresh: Network<T> = build_network(spec, 0)?;
        if fresh.weights.layers.len() != weights.layers.len() {
            return Err(NnError::WeightsMismatch(format!(
                "expected {} layers, found {}",
                fresh.weights.layers.len(),
                weights.layers.len()
            )));
        }
        for (a, b) in fresh.weights.layers.iter().zip(&weights.layers) {
            let shapes = |l: &LayerWeights<T>| {
                l.params.iter().chain(&l.buffers).map(|t| t.shape().to_vec()).collect::<Vec<_>>()
            };
            if a.name != b.name || shapes(a) != shapes(b) {
                return Err(NnError::WeightsMismatch(format!("layer {} does not match {}", b.name, a.name)));
            }
        }
        Ok(Network { spec: spec.clone(), layers: fresh.layers, weights })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &Weights<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<T> {
        &mut self.weights
    }

    pub fn into_weights(self) -> Weights<T> {
        self.weights
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), NnError> {
        if input.shape().len() != 4 || input.channels() != self.spec.in_channels {
            return Err(NnError::ShapeMismatch {
                layer: "input".into(),
                expected: format!("[{}, X, Y, Z]", self.spec.in_channels),
                found: input.shape().to_vec(),
            });
        }
        let m = self.spec.required_multiple();
        let dims = input.spatial();
        if dims.iter().any(|d| d % m != 0) {
            return Err(NnError::IndivisibleDims { dims, multiple: m, padding: dims.map(|d| d.next_multiple_of(m) - d) });
        }
        Ok(())
    }

    /// Forward pass with running batch-norm moments; does not record a tape.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(input)?;
        let mut skips: Vec<Option<Tensor<T>>> = vec![None; self.spec.levels];
        let mut x = input.clone();
        for (spec, w) in self.layers.iter().zip(&self.weights.layers) {
            let skip = match spec.kind {
                LayerKind::ConcatSkip { slot } => skips[slot].take(),
                _ => None,
            };
            x = layers::layer_forward(spec, w, &x, Mode::Infer, skip.as_ref())?.0;
            if let Some(slot) = spec.save_skip {
                skips[slot] = Some(x.clone());
            }
        }
        Ok(x)
    }

    /// Forward pass in `mode`, recording what backward needs. In train mode the
    /// batch-norm running moments are updated.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>), NnError> {
        self.check_input(input)?;
        let mut skips: Vec<Option<Tensor<T>>> = vec![None; self.spec.levels];
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (spec, w) in self.layers.iter().zip(self.weights.layers.iter_mut()) {
            let skip = match spec.kind {
                LayerKind::ConcatSkip { slot } => skips[slot].take(),
                _ => None,
            };
            let (y, cache) = layers::layer_forward(spec, w, &x, mode, skip.as_ref())?;
            layers::update_running_moments(w, &cache);
            if let Some(slot) = spec.save_skip {
                skips[slot] = Some(y.clone());
            }
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<(Grads<T>, Tensor<T>), NnError> {
        if tape.caches.len() != self.layers.len() {
            return Err(NnError::CacheMismatch { layer: "network".into(), cache: "foreign" });
        }
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; self.spec.levels];
        let mut grads: Grads<T> = vec![Vec::new(); self.layers.len()];
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let spec = &self.layers[i];
            if let Some(slot) = spec.save_skip {
                if let Some(sg) = skip_grads[slot].take() {
                    g.add_assign(&sg);
                }
            }
            let lg = layers::layer_backward(spec, &self.weights.layers[i], &tape.caches[i], &g)?;
            if let (LayerKind::ConcatSkip { slot }, Some(sg)) = (&spec.kind, lg.skip) {
                skip_grads[*slot] = Some(sg);
            }
            grads[i] = lg.params;
            g = lg.input;
        }
        Ok((grads, g))
    }
}
