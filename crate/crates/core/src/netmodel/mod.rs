//! Two-stream shared-weight CNN for same-font classification.
//!
//! Each stream is `conv-relu` x4 with two 2x2 max-pooling layers (after
//! conv 2 and conv 4 by default) and inverted dropout after the first pool.
//! Both streams use the *same* parameter set. The flattened stream outputs
//! are concatenated in `(a, b)` order and fed to three fully-connected
//! layers (`relu`, dropout, `relu`, dropout, linear) and a 2-way softmax.
//! Output index 1 is "same font", index 0 "different fonts".

mod checkpoint;
mod network;
pub mod ops;

use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, Provenance};
pub use network::{
    image_to_input, loss, BatchOutput, FeatureMap, Gradients, HeadFeatures, Layer, Network, PairInput, Params,
    StreamFeatures, LOSS_EPS,
};
pub use ops::Real;

use crate::error::{Error, Result};
use ops::{pool_out, ConvShape};

pub const NUM_CONV: usize = 4;
pub const NUM_POOL: usize = 2;
pub const NUM_FC: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_padding: usize,
    /// 1-based indices of the conv layers followed by max pooling.
    pub pool_after: Vec<usize>,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub fc_sizes: Vec<usize>,
    pub dropout_keep: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 100,
            conv_channels: vec![16, 16, 32, 32],
            conv_kernel: 3,
            conv_stride: 1,
            conv_padding: 1,
            pool_after: vec![2, 4],
            pool_kernel: 2,
            pool_stride: 2,
            fc_sizes: vec![512, 256, 2],
            dropout_keep: 0.5,
        }
    }
}

/// Per-conv-layer shapes derived from a validated [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGeometry {
    pub shape: ConvShape,
    pub out_channels: usize,
    pub out_height: usize,
    pub out_width: usize,
    /// Spatial size after the pooling layer that follows, if any.
    pub pooled: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub convs: Vec<ConvGeometry>,
    /// `(C, H, W)` of the final stream map.
    pub last_map: (usize, usize, usize),
    /// Length of one flattened stream output.
    pub stream_len: usize,
}

impl ModelConfig {
    /// Small configuration used for numerical verification.
    pub fn reduced() -> Self {
        ModelConfig {
            input_size: 8,
            conv_channels: vec![2, 2, 3, 3],
            fc_sizes: vec![8, 4, 2],
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<Geometry> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.conv_channels.len() != NUM_CONV {
            return bad(format!("expected {NUM_CONV} conv layers, got {}", self.conv_channels.len()));
        }
        if self.fc_sizes.len() != NUM_FC {
            return bad(format!("expected {NUM_FC} fully-connected layers, got {}", self.fc_sizes.len()));
        }
        if self.fc_sizes.last() != Some(&2) {
            return bad(format!("last fully-connected size must be 2, got {:?}", self.fc_sizes));
        }
        if self.pool_after.len() != NUM_POOL {
            return bad(format!("expected {NUM_POOL} pooling layers, got {}", self.pool_after.len()));
        }
        if !self.pool_after.windows(2).all(|w| w[0] < w[1]) || self.pool_after.iter().any(|&p| p == 0 || p > NUM_CONV)
        {
            return bad(format!("pool positions must be increasing within 1..={NUM_CONV}, got {:?}", self.pool_after));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad(format!("dropout keep probability must be in (0, 1], got {}", self.dropout_keep));
        }
        if self.conv_channels.iter().chain(&self.fc_sizes).any(|&c| c == 0) {
            return bad("layer widths must be positive".into());
        }
        if self.input_size == 0 || self.conv_kernel == 0 || self.conv_stride == 0 {
            return bad("input size, kernel and stride must be positive".into());
        }
        if self.pool_kernel == 0 || self.pool_stride == 0 {
            return bad("pool kernel and stride must be positive".into());
        }

        let (mut c, mut h, mut w) = (1, self.input_size, self.input_size);
        let mut convs = Vec::with_capacity(NUM_CONV);
        for (i, &out_channels) in self.conv_channels.iter().enumerate() {
            if h + 2 * self.conv_padding < self.conv_kernel || w + 2 * self.conv_padding < self.conv_kernel {
                return bad(format!("conv{} input {h}x{w} smaller than kernel", i + 1));
            }
            let shape = ConvShape {
                channels: c,
                height: h,
                width: w,
                kernel: self.conv_kernel,
                stride: self.conv_stride,
                padding: self.conv_padding,
            };
            let (oh, ow) = (shape.out_height(), shape.out_width());
            let pooled = if self.pool_after.contains(&(i + 1)) {
                if oh < self.pool_kernel || ow < self.pool_kernel {
                    return bad(format!("pool after conv{} gets {oh}x{ow}, smaller than its kernel", i + 1));
                }
                Some((pool_out(oh, self.pool_kernel, self.pool_stride), pool_out(ow, self.pool_kernel, self.pool_stride)))
            } else {
                None
            };
            convs.push(ConvGeometry { shape, out_channels, out_height: oh, out_width: ow, pooled });
            c = out_channels;
            (h, w) = pooled.unwrap_or((oh, ow));
        }
        Ok(Geometry { convs, last_map: (c, h, w), stream_len: c * h * w })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_trace() {
        let g = ModelConfig::default().validate().unwrap();
        // 100 -> pool -> 50 -> pool -> 25
        assert_eq!(g.last_map, (32, 25, 25));
        assert_eq!(g.stream_len, 20_000);
        assert_eq!(g.convs[1].pooled, Some((50, 50)));
    }

    #[test]
    fn reduced_shape_trace() {
        let g = ModelConfig::reduced().validate().unwrap();
        assert_eq!(g.last_map, (3, 2, 2));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::default();
        c.fc_sizes = vec![512, 256, 3];
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = ModelConfig::default();
        c.conv_channels = vec![16, 16, 32];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.dropout_keep = 0.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.pool_after = vec![4, 2];
        assert!(c.validate().is_err());
    }
}
