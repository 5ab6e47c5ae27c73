use serde::{Deserialize, Serialize};

use crate::dagrnn::Connectivity;
use crate::error::{Error, Result};
use crate::layers::{output_extent, Activation};

/// One conv → activation → pool (→ DAG-RNN → concat) stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    pub channels: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    /// Attach a DAG-RNN to the pooled map and concatenate its output.
    #[serde(default = "yes")]
    pub fuse: bool,
    /// Defaults to the stage's pooled channel count.
    #[serde(default)]
    pub rnn_hidden: Option<usize>,
}

fn yes() -> bool {
    true
}

impl StageConfig {
    pub fn rnn_hidden(&self) -> usize {
        self.rnn_hidden.unwrap_or(self.channels)
    }
}

/// SGD hyper-parameters. `lr_cnn` covers convolution, fully-connected and
/// branch layers; `lr_rnn` decays by `rnn_lr_decay` per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr_cnn: f64,
    pub lr_rnn: f64,
    pub rnn_lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_cnn: 1e-4,
            lr_rnn: 1e-3,
            rnn_lr_decay: 0.9,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl OptimConfig {
    /// RNN learning rate at `epoch`: `lr_rnn · decay^epoch`.
    pub fn rnn_lr_at(&self, epoch: usize) -> f64 {
        self.lr_rnn * self.rnn_lr_decay.powi(epoch.min(i32::MAX as usize) as i32)
    }
}

/// Minibatch composition: `positives` targets plus the `mined` hardest of
/// `negative_pool` sampled background patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinibatchConfig {
    pub positives: usize,
    pub negative_pool: usize,
    pub mined: usize,
}

impl Default for MinibatchConfig {
    fn default() -> Self {
        MinibatchConfig {
            positives: 32,
            negative_pool: 1024,
            mined: 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SanetConfig {
    /// Side length of the square RGB input patch.
    pub input_size: usize,
    pub stages: Vec<StageConfig>,
    pub fc_widths: Vec<usize>,
    /// Number of training domains (classification branches).
    pub num_domains: usize,
    /// Non-linearity after every convolution and hidden fully-connected layer.
    pub activation: Activation,
    pub rnn_phi: Activation,
    pub rnn_sigma: Activation,
    pub connectivity: Connectivity,
    /// Per-channel mean subtracted from raw 0..255 pixels.
    pub input_mean: [f64; 3],
    /// Multiplier applied after mean subtraction.
    pub input_scale: f64,
    pub optim: OptimConfig,
    pub minibatch: MinibatchConfig,
}

impl Default for SanetConfig {
    fn default() -> Self {
        let stage = |kernel, stride, channels| StageConfig {
            kernel,
            stride,
            padding: 0,
            channels,
            pool_window: 3,
            pool_stride: 2,
            fuse: true,
            rnn_hidden: None,
        };
        SanetConfig {
            input_size: 107,
            stages: vec![stage(7, 2, 96), stage(5, 2, 256), stage(3, 1, 512)],
            fc_widths: vec![512, 512],
            num_domains: 1,
            activation: Activation::Relu,
            rnn_phi: Activation::Relu,
            rnn_sigma: Activation::Identity,
            connectivity: Connectivity::Eight,
            input_mean: [128.0; 3],
            input_scale: 1.0 / 128.0,
            optim: OptimConfig::default(),
            minibatch: MinibatchConfig::default(),
        }
    }
}

/// Shapes produced by one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageGeometry {
    pub input: [usize; 3],
    pub conv: [usize; 3],
    pub pooled: [usize; 3],
    /// Pooled map, widened by the RNN output when fused.
    pub output: [usize; 3],
}

impl SanetConfig {
    /// Desk-scale network on 35×35 patches with 8/12/16 channels.
    pub fn tiny() -> Self {
        let stage = |kernel, stride, padding, channels, pool_window, pool_stride| StageConfig {
            kernel,
            stride,
            padding,
            channels,
            pool_window,
            pool_stride,
            fuse: true,
            rnn_hidden: None,
        };
        SanetConfig {
            input_size: 35,
            stages: vec![
                stage(3, 2, 0, 8, 3, 2),
                stage(3, 1, 0, 12, 2, 2),
                stage(3, 1, 1, 16, 2, 1),
            ],
            fc_widths: vec![32, 32],
            optim: OptimConfig {
                lr_cnn: 1e-2,
                lr_rnn: 1e-2,
                ..OptimConfig::default()
            },
            minibatch: MinibatchConfig {
                positives: 8,
                negative_pool: 64,
                mined: 16,
            },
            ..SanetConfig::default()
        }
    }

    /// Same network with every DAG-RNN removed (CNN-only ablation).
    pub fn ablate_rnn(mut self) -> Self {
        for s in &mut self.stages {
            s.fuse = false;
        }
        self
    }

    /// Checks the invariants and returns per-stage shapes.
    pub fn geometry(&self) -> Result<Vec<StageGeometry>> {
        if self.stages.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if self.num_domains == 0 {
            return Err(Error::Config("num_domains must be >= 1".into()));
        }
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be >= 1".into()));
        }
        if self.minibatch.mined > self.minibatch.negative_pool {
            return Err(Error::Config(format!(
                "mined negatives ({}) exceed the negative pool ({})",
                self.minibatch.mined, self.minibatch.negative_pool
            )));
        }
        if self.fc_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("fully-connected widths must be >= 1".into()));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config("input_scale must be positive".into()));
        }
        let mut shape = [self.input_size, self.input_size, 3];
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || (s.fuse && s.rnn_hidden() == 0) {
                return Err(Error::Config(format!("stage {i}: channel counts must be >= 1")));
            }
            let ctx = |e: Error| Error::Geometry(format!("stage {i}: {e}"));
            let ch = output_extent(shape[0], s.kernel, s.stride, s.padding).map_err(ctx)?;
            let cw = output_extent(shape[1], s.kernel, s.stride, s.padding).map_err(ctx)?;
            let ph = output_extent(ch, s.pool_window, s.pool_stride, 0).map_err(ctx)?;
            let pw = output_extent(cw, s.pool_window, s.pool_stride, 0).map_err(ctx)?;
            let fused = s.channels + if s.fuse { s.rnn_hidden() } else { 0 };
            let g = StageGeometry {
                input: shape,
                conv: [ch, cw, s.channels],
                pooled: [ph, pw, s.channels],
                output: [ph, pw, fused],
            };
            shape = g.output;
            out.push(g);
        }
        Ok(out)
    }

    /// Length of the flattened final stage output.
    pub fn feature_dim(&self) -> Result<usize> {
        let g = self.geometry()?;
        let o = g.last().expect("non-empty").output;
        Ok(o[0] * o[1] * o[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stage_one_arithmetic() {
        let g = SanetConfig::default().geometry().unwrap();
        assert_eq!(g[0].conv, [51, 51, 96]);
        assert_eq!(g[0].pooled, [25, 25, 96]);
        assert_eq!(g[0].output, [25, 25, 192]);
        assert_eq!(g[1].input[2], 192);
    }

    #[test]
    fn tiny_arithmetic_and_fusion_doubling() {
        let g = SanetConfig::tiny().geometry().unwrap();
        // 35 -conv3/2-> 17 -pool3/2-> 8; 8 -conv3/1-> 6 -pool2/2-> 3; 3 -conv3/1 pad1-> 3 -pool2/1-> 2
        assert_eq!(g[0].conv, [17, 17, 8]);
        assert_eq!(g[0].pooled, [8, 8, 8]);
        assert_eq!(g[1].input, [8, 8, 16]);
        assert_eq!(g[1].conv, [6, 6, 12]);
        assert_eq!(g[1].pooled, [3, 3, 12]);
        assert_eq!(g[2].input, [3, 3, 24]);
        assert_eq!(g[2].conv, [3, 3, 16]);
        assert_eq!(g[2].output, [2, 2, 32]);
        let ablated = SanetConfig::tiny().ablate_rnn().geometry().unwrap();
        assert_eq!(ablated[1].input, [8, 8, 8]);
    }

    #[test]
    fn impossible_geometry_rejected() {
        let mut c = SanetConfig::tiny();
        c.input_size = 5;
        assert!(matches!(c.geometry(), Err(Error::Geometry(_))));
        let mut c = SanetConfig::tiny();
        c.minibatch.mined = c.minibatch.negative_pool + 1;
        assert!(c.geometry().is_err());
        let mut c = SanetConfig::tiny();
        c.num_domains = 0;
        assert!(c.geometry().is_err());
    }

    #[test]
    fn rnn_schedule() {
        let o = OptimConfig::default();
        assert_eq!(o.rnn_lr_at(0), 1e-3);
        assert!((o.rnn_lr_at(2) - 1e-3 * 0.81).abs() < 1e-18);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<SanetConfig>(r#"{"input_size": 35, "bogus": 1}"#);
        assert!(err.is_err());
        let ok: SanetConfig = serde_json::from_str(r#"{"input_size": 107}"#).unwrap();
        assert_eq!(ok, SanetConfig::default());
    }
}
