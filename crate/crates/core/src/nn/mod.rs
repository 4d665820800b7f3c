//! Minimal dense-tensor network engine: declarative layer stacks, forward and
//! backward passes, Adam, training/evaluation loops, checkpointing and a
//! parameter/MAdd complexity auditor.

mod adam;
mod checkpoint;
mod model;
mod tensor;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{cross_entropy, ForwardCache, LayerState, Mode, Model};
pub use tensor::Tensor;
pub use train::{evaluate, train, Dataset, EpochLog, TrainSettings};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fully connected widths of the proposed model.
pub const DEFAULT_FC_WIDTHS: [usize; 5] = [188, 128, 96, 64, 32];
/// Default dropout rate paired with every FC layer.
pub const DEFAULT_DROPOUT: f64 = 0.5;
/// Batch-normalization epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Batch-normalization running-stat momentum.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// One layer of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2D { kernel: (usize, usize), out_channels: usize, padding: Padding },
    /// 2x2 window, stride 2.
    MaxPool2,
    BatchNorm2D { eps: f64, momentum: f64 },
    Relu,
    Flatten,
    Dense { out: usize },
    Dropout { rate: f64 },
    Softmax,
}

/// Feature shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Channel-major map: `(channels, height, width)`.
    Map(usize, usize, usize),
    Flat(usize),
}

impl Feature {
    pub fn len(&self) -> usize {
        match *self {
            Feature::Map(c, h, w) => c * h * w,
            Feature::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Declarative layer stack with its input shape and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    /// Input map as `(height, width, channels)`.
    pub input: (usize, usize, usize),
    pub classes: usize,
}

impl ModelSpec {
    pub fn input_feature(&self) -> Feature {
        Feature::Map(self.input.2, self.input.0, self.input.1)
    }

    /// Shape after every layer, validating compatibility along the way.
    pub fn feature_shapes(&self) -> Result<Vec<Feature>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input_feature();
        shapes.push(cur);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer_output(layer, cur).map_err(|e| {
                Error::ShapeMismatch(format!("layer {i} ({layer:?}): {e}"))
            })?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Validate shape compatibility, parameter ranges and the Softmax tail.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::ShapeMismatch("model must end in Softmax".to_string()));
        }
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv2D { kernel: (kh, kw), out_channels, .. } => {
                    if *kh == 0 || *kw == 0 || *out_channels == 0 {
                        return Err(Error::ShapeMismatch(format!("bad conv geometry {layer:?}")));
                    }
                }
                LayerSpec::Dense { out } if *out == 0 => {
                    return Err(Error::ShapeMismatch("dense width 0".to_string()));
                }
                LayerSpec::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                    return Err(Error::ShapeMismatch(format!("dropout rate {rate} outside [0, 1)")));
                }
                _ => {}
            }
        }
        let shapes = self.feature_shapes()?;
        match shapes.last() {
            Some(Feature::Flat(n)) if *n == self.classes => Ok(()),
            other => Err(Error::ShapeMismatch(format!(
                "output {other:?} does not match {} classes",
                self.classes
            ))),
        }
    }
}

fn layer_output(layer: &LayerSpec, input: Feature) -> std::result::Result<Feature, String> {
    match (layer, input) {
        (LayerSpec::Conv2D { kernel: (kh, kw), out_channels, padding }, Feature::Map(_, h, w)) => {
            let (oh, ow) = match padding {
                Padding::Same => (h, w),
                Padding::Valid => {
                    if h < *kh || w < *kw {
                        return Err(format!("kernel {kh}x{kw} larger than map {h}x{w}"));
                    }
                    (h - kh + 1, w - kw + 1)
                }
            };
            Ok(Feature::Map(*out_channels, oh, ow))
        }
        (LayerSpec::MaxPool2, Feature::Map(c, h, w)) => {
            if h < 2 || w < 2 {
                return Err(format!("map {h}x{w} too small to pool"));
            }
            Ok(Feature::Map(c, h / 2, w / 2))
        }
        (LayerSpec::BatchNorm2D { .. }, Feature::Map(c, h, w)) => Ok(Feature::Map(c, h, w)),
        (LayerSpec::Relu, any) => Ok(any),
        (LayerSpec::Flatten, Feature::Map(c, h, w)) => Ok(Feature::Flat(c * h * w)),
        (LayerSpec::Dense { out }, Feature::Flat(_)) => Ok(Feature::Flat(*out)),
        (LayerSpec::Dropout { .. }, any) => Ok(any),
        (LayerSpec::Softmax, Feature::Flat(n)) => Ok(Feature::Flat(n)),
        (layer, input) => Err(format!("{layer:?} cannot follow {input:?}")),
    }
}

/// The proposed lightweight stack at an arbitrary square input size:
/// 5x5x64 conv + pool, three 3x3 conv/BN/pool blocks (64, 96, 96), then five
/// FC+dropout pairs and the class head.
pub fn build_proposed_for_input(
    classes: usize,
    input_hw: usize,
    fc_widths: &[usize],
    dropout: f64,
) -> Result<ModelSpec> {
    if classes != 3 && classes != 6 {
        return Err(Error::BadClassCount(classes));
    }
    let mut layers = vec![
        LayerSpec::Conv2D { kernel: (5, 5), out_channels: 64, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
    ];
    for out_channels in [64usize, 96, 96] {
        layers.push(LayerSpec::Conv2D { kernel: (3, 3), out_channels, padding: Padding::Same });
        layers.push(LayerSpec::BatchNorm2D { eps: BN_EPS, momentum: BN_MOMENTUM });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool2);
    }
    layers.push(LayerSpec::Flatten);
    for &width in fc_widths {
        layers.push(LayerSpec::Dense { out: width });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
    layers.push(LayerSpec::Dense { out: classes });
    layers.push(LayerSpec::Softmax);

    let spec = ModelSpec { layers, input: (input_hw, input_hw, 3), classes };
    spec.validate()?;
    Ok(spec)
}

/// The proposed model at its native 224x224x3 input.
pub fn build_proposed(classes: usize, fc_widths: &[usize], dropout: f64) -> Result<ModelSpec> {
    build_proposed_for_input(classes, 224, fc_widths, dropout)
}

/// Trainable parameter count.
///
/// Conv: `(kh*kw*c_in + 1) * c_out`; Dense: `(in + 1) * out`; BatchNorm: `2c`
/// (gamma and beta; running stats are buffers, not parameters).
pub fn count_params(spec: &ModelSpec) -> Result<u64> {
    let shapes = spec.feature_shapes()?;
    let mut total = 0u64;
    for (layer, input) in spec.layers.iter().zip(&shapes) {
        total += match (layer, input) {
            (LayerSpec::Conv2D { kernel: (kh, kw), out_channels, .. }, Feature::Map(c, _, _)) => {
                ((kh * kw * c + 1) * out_channels) as u64
            }
            (LayerSpec::BatchNorm2D { .. }, Feature::Map(c, _, _)) => (2 * c) as u64,
            (LayerSpec::Dense { out }, Feature::Flat(input)) => ((input + 1) * out) as u64,
            _ => 0,
        };
    }
    Ok(total)
}

/// Multiply-accumulate count at the given input, one MAdd per MAC.
///
/// Conv: `kh*kw*c_in*c_out*h_out*w_out`; Dense: `in*out`; normalization,
/// activations and pooling count zero.
pub fn count_madd(spec: &ModelSpec) -> Result<u64> {
    let shapes = spec.feature_shapes()?;
    let mut total = 0u64;
    for (i, layer) in spec.layers.iter().enumerate() {
        total += match (layer, shapes[i], shapes[i + 1]) {
            (LayerSpec::Conv2D { kernel: (kh, kw), .. }, Feature::Map(cin, _, _), Feature::Map(cout, oh, ow)) => {
                (kh * kw * cin * cout * oh * ow) as u64
            }
            (LayerSpec::Dense { .. }, Feature::Flat(input), Feature::Flat(out)) => (input * out) as u64,
            _ => 0,
        };
    }
    Ok(total)
}

/// One row of the per-layer complexity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: String,
    pub params: u64,
    pub madds: u64,
}

/// Per-layer shapes, parameter and MAdd counts plus totals.
pub fn analyze(spec: &ModelSpec) -> Result<Vec<LayerSummary>> {
    let shapes = spec.feature_shapes()?;
    let mut rows = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let params = match (layer, shapes[i]) {
            (LayerSpec::Conv2D { kernel: (kh, kw), out_channels, .. }, Feature::Map(c, _, _)) => {
                ((kh * kw * c + 1) * out_channels) as u64
            }
            (LayerSpec::BatchNorm2D { .. }, Feature::Map(c, _, _)) => (2 * c) as u64,
            (LayerSpec::Dense { out }, Feature::Flat(input)) => ((input + 1) * out) as u64,
            _ => 0,
        };
        let madds = match (layer, shapes[i], shapes[i + 1]) {
            (LayerSpec::Conv2D { kernel: (kh, kw), .. }, Feature::Map(cin, _, _), Feature::Map(cout, oh, ow)) => {
                (kh * kw * cin * cout * oh * ow) as u64
            }
            (LayerSpec::Dense { .. }, Feature::Flat(input), Feature::Flat(out)) => (input * out) as u64,
            _ => 0,
        };
        let name = match layer {
            LayerSpec::Conv2D { kernel: (kh, kw), out_channels, .. } => format!("conv {kh}x{kw}x{out_channels}"),
            LayerSpec::MaxPool2 => "maxpool 2x2".to_string(),
            LayerSpec::BatchNorm2D { .. } => "batchnorm".to_string(),
            LayerSpec::Relu => "relu".to_string(),
            LayerSpec::Flatten => "flatten".to_string(),
            LayerSpec::Dense { out } => format!("dense {out}"),
            LayerSpec::Dropout { rate } => format!("dropout {rate}"),
            LayerSpec::Softmax => "softmax".to_string(),
        };
        let output_shape = match shapes[i + 1] {
            Feature::Map(c, h, w) => format!("{h}x{w}x{c}"),
            Feature::Flat(n) => format!("{n}"),
        };
        rows.push(LayerSummary { name, output_shape, params, madds });
    }
    Ok(rows)
}
