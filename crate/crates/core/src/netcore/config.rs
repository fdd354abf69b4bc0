use serde::{Deserialize, Serialize};

use super::NetError;

/// One convolution: `out_channels` square `kernel×kernel` filters at `stride`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayerSpec {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvLayerSpec { out_channels, kernel, stride }
    }
}

pub const DEFAULT_CONV_LAYERS: [ConvLayerSpec; 3] = [
    ConvLayerSpec::new(8, 3, 1),
    ConvLayerSpec::new(16, 3, 2),
    ConvLayerSpec::new(16, 3, 1),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrunkConfig {
    /// Convolutions then one dense layer, ReLU after each. `conv_layers: null`
    /// picks the default stack shrunk to fit the observation.
    Conv {
        #[serde(default)]
        conv_layers: Option<Vec<ConvLayerSpec>>,
        fc_size: usize,
    },
    /// Dense ReLU layers over the flattened observation; an empty list feeds
    /// the observation straight to the next stage.
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub trunk: TrunkConfig,
    /// GRU width; `None` removes the memory layer.
    pub gru_hidden: Option<usize>,
    /// Decoder hidden widths (sigmoid); the output layer is linear.
    #[serde(default = "default_decoder_hidden")]
    pub decoder_hidden: Vec<usize>,
}

fn default_decoder_hidden() -> Vec<usize> {
    vec![256, 512]
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            trunk: TrunkConfig::Conv { conv_layers: None, fc_size: 128 },
            gru_hidden: Some(128),
            decoder_hidden: default_decoder_hidden(),
        }
    }
}

impl NetConfig {
    /// Linear heads straight on the flattened observation.
    pub fn linear() -> Self {
        NetConfig {
            trunk: TrunkConfig::Mlp { hidden: vec![] },
            gru_hidden: None,
            decoder_hidden: default_decoder_hidden(),
        }
    }

    /// Returns a copy with `conv_layers` filled in for `obs_shape`.
    pub fn resolved(&self, obs_shape: [usize; 3]) -> Result<NetConfig, NetError> {
        let mut out = self.clone();
        if let TrunkConfig::Conv { conv_layers, fc_size } = &mut out.trunk {
            if conv_layers.is_none() {
                *conv_layers = Some(fit_conv_layers(&DEFAULT_CONV_LAYERS, obs_shape[1], obs_shape[2]));
            }
            if *fc_size == 0 {
                return Err(NetError::Config("fc_size must be positive".into()));
            }
            conv_output_shape(conv_layers.as_ref().unwrap(), obs_shape)?;
        }
        if self.gru_hidden == Some(0) {
            return Err(NetError::Config("gru_hidden must be positive".into()));
        }
        Ok(out)
    }
}

/// Spatial shape after a conv stack, or an error naming the first layer whose
/// output would be empty.
pub fn conv_output_shape(layers: &[ConvLayerSpec], obs_shape: [usize; 3]) -> Result<[usize; 3], NetError> {
    let [mut c, mut h, mut w] = obs_shape;
    for (i, l) in layers.iter().enumerate() {
        if l.out_channels == 0 || l.stride == 0 || l.kernel == 0 || l.kernel > h || l.kernel > w {
            return Err(NetError::Config(format!(
                "conv layer {i} ({}x{} kernel, stride {}) does not fit a {h}x{w} input",
                l.kernel, l.kernel, l.stride
            )));
        }
        c = l.out_channels;
        h = (h - l.kernel) / l.stride + 1;
        w = (w - l.kernel) / l.stride + 1;
    }
    Ok([c, h, w])
}

/// Keeps the layer count and channel widths of `layers`, dropping strides to 1
/// and then shrinking kernels wherever the input is too small.
pub fn fit_conv_layers(layers: &[ConvLayerSpec], h: usize, w: usize) -> Vec<ConvLayerSpec> {
    if conv_output_shape(layers, [1, h, w]).is_ok() {
        return layers.to_vec();
    }
    let mut side = h.min(w);
    layers
        .iter()
        .map(|l| {
            let kernel = l.kernel.min(side);
            side = side - kernel + 1;
            ConvLayerSpec::new(l.out_channels, kernel, 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_fits_nine_by_nine() {
        let layers = fit_conv_layers(&DEFAULT_CONV_LAYERS, 9, 9);
        assert_eq!(layers, DEFAULT_CONV_LAYERS.to_vec());
        assert_eq!(conv_output_shape(&layers, [3, 9, 9]).unwrap(), [16, 1, 1]);
    }

    #[test]
    fn small_views_get_a_fitted_stack() {
        let five = fit_conv_layers(&DEFAULT_CONV_LAYERS, 5, 5);
        assert_eq!(five.len(), 3);
        assert_eq!(conv_output_shape(&five, [3, 5, 5]).unwrap(), [16, 1, 1]);
        let seven = fit_conv_layers(&DEFAULT_CONV_LAYERS, 7, 7);
        assert_eq!(conv_output_shape(&seven, [3, 7, 7]).unwrap(), [16, 1, 1]);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let cfg = NetConfig {
            trunk: TrunkConfig::Conv {
                conv_layers: Some(vec![ConvLayerSpec::new(4, 6, 1)]),
                fc_size: 8,
            },
            gru_hidden: Some(8),
            decoder_hidden: vec![4],
        };
        assert!(cfg.resolved([3, 5, 5]).is_err());
    }
}
