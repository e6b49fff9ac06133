use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::numerics::{xavier_uniform, AttentionParams, Scalar, Tensor};
use crate::rng::SplitMix64;

/// Layer sizes of the encoder-decoder. The default is the full 16x96 canvas
/// with four input channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub wz_features: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub tabular_dim: usize,
    /// Token width for self-attention; also the value width.
    pub d_model: usize,
    pub incident_hidden: usize,
    pub attention_enabled: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 96,
            in_channels: 4,
            wz_features: 8,
            conv1_filters: 16,
            conv2_filters: 32,
            tabular_dim: 32,
            d_model: 32,
            incident_hidden: 64,
            attention_enabled: true,
        }
    }
}

impl ModelConfig {
    /// 8x8 canvas used for finite-difference checks.
    pub fn reduced() -> Self {
        Self { height: 8, width: 8, ..Self::default() }
    }

    /// Length of the flattened image encoding.
    pub fn encoded_len(&self) -> usize {
        (self.height / 4) * (self.width / 4) * self.conv2_filters
    }

    /// Length of the concatenated image + tabular vector.
    pub fn fused_len(&self) -> usize {
        self.encoded_len() + self.tabular_dim
    }

    pub fn tokens(&self) -> usize {
        self.fused_len() / self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(ModelError::Config(format!(
                "canvas {}x{} must be positive and divisible by 4",
                self.height, self.width
            )));
        }
        let sizes = [
            self.in_channels,
            self.wz_features,
            self.conv1_filters,
            self.conv2_filters,
            self.tabular_dim,
            self.d_model,
            self.incident_hidden,
        ];
        if sizes.contains(&0) {
            return Err(ModelError::Config("layer sizes must be positive".into()));
        }
        if self.fused_len() % self.d_model != 0 {
            return Err(ModelError::Config(format!(
                "fused length {} is not divisible by d_model {}",
                self.fused_len(),
                self.d_model
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in serialisation order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c1, c2) = (self.conv1_filters, self.conv2_filters);
        let (f, e, dm) = (self.fused_len(), self.encoded_len(), self.d_model);
        vec![
            ("conv1.kernel", vec![3, 3, self.in_channels, c1]),
            ("conv1.bias", vec![c1]),
            ("conv2.kernel", vec![3, 3, c1, c2]),
            ("conv2.bias", vec![c2]),
            ("tab.weight", vec![self.wz_features, self.tabular_dim]),
            ("tab.bias", vec![self.tabular_dim]),
            ("attn.w_q", vec![dm, dm]),
            ("attn.w_k", vec![dm, dm]),
            ("attn.w_v", vec![dm, dm]),
            ("dec.weight", vec![f, e]),
            ("dec.bias", vec![e]),
            ("deconv1.kernel", vec![2, 2, c2, c1]),
            ("deconv1.bias", vec![c1]),
            ("deconv2.kernel", vec![2, 2, c1, 1]),
            ("deconv2.bias", vec![1]),
            ("inc1.weight", vec![f, self.incident_hidden]),
            ("inc1.bias", vec![self.incident_hidden]),
            ("inc2.weight", vec![self.incident_hidden, 2]),
            ("inc2.bias", vec![2]),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Indices into [`ModelParams::tensors`].
pub(crate) mod slot {
    pub const CONV1_K: usize = 0;
    pub const CONV1_B: usize = 1;
    pub const CONV2_K: usize = 2;
    pub const CONV2_B: usize = 3;
    pub const TAB_W: usize = 4;
    pub const TAB_B: usize = 5;
    pub const ATTN_Q: usize = 6;
    pub const ATTN_K: usize = 7;
    pub const ATTN_V: usize = 8;
    pub const DEC_W: usize = 9;
    pub const DEC_B: usize = 10;
    pub const DECONV1_K: usize = 11;
    pub const DECONV1_B: usize = 12;
    pub const DECONV2_K: usize = 13;
    pub const DECONV2_B: usize = 14;
    pub const INC1_W: usize = 15;
    pub const INC1_B: usize = 16;
    pub const INC2_W: usize = 17;
    pub const INC2_B: usize = 18;
}

/// All trainable tensors in the fixed order of [`ModelConfig::layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Xavier-uniform weights, zero biases, drawn in layout order.
    pub fn init(config: &ModelConfig, rng: &mut SplitMix64) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    return Tensor::zeros(&shape);
                }
                let (fan_in, fan_out) = match shape.len() {
                    4 => (shape[0] * shape[1] * shape[2], shape[0] * shape[1] * shape[3]),
                    _ => (shape[0], shape[1]),
                };
                xavier_uniform(&shape, fan_in, fan_out, rng)
            })
            .collect();
        Ok(Self { config: config.clone(), tensors })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.layout().into_iter().map(|(_, s)| Tensor::zeros(&s)).collect();
        Ok(Self { config: config.clone(), tensors })
    }

    /// Checks tensor count and shapes against the config layout.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if tensors.len() != layout.len() {
            return Err(ModelError::Config(format!("{} tensors, layout has {}", tensors.len(), layout.len())));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!("{name}: shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(Self { config: config.clone(), tensors })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.config.layout().into_iter().map(|(n, _)| n).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names().iter().position(|n| *n == name).map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub(crate) fn attention(&self) -> Result<AttentionParams<T>> {
        Ok(AttentionParams::new(
            self.tensors[slot::ATTN_Q].clone(),
            self.tensors[slot::ATTN_K].clone(),
            self.tensors[slot::ATTN_V].clone(),
        )?)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { config: self.config.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}
