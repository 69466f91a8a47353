use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{InputLayout, LayerSpec};
use super::network::Network;
use crate::{Error, Result};

/// Shape of the shared trunk: 3x3 valid convolutions with ReLU, one hidden
/// dense layer with ReLU and dropout, then the task head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub conv_channels: Vec<usize>,
    pub dense_units: usize,
    pub dropout: f32,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            conv_channels: vec![8, 16],
            dense_units: 128,
            dropout: 0.2,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() || self.conv_channels.len() > 2 {
            return Err(Error::InvalidConfig(
                "the trunk has one or two convolution layers".into(),
            ));
        }
        if self.conv_channels.contains(&0) || self.dense_units == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Convolutional trunk over a `[C, H, W]` input, ending flattened.
fn trunk(obs_shape: [usize; 3], arch: &ArchConfig) -> Result<(Vec<LayerSpec>, usize)> {
    arch.validate()?;
    let [mut ch, mut h, mut w] = obs_shape;
    let mut specs = Vec::new();
    for (i, &out_ch) in arch.conv_channels.iter().enumerate() {
        if h < 3 || w < 3 {
            return Err(Error::Shape(format!("{h}x{w} input is too small for a 3x3 kernel")));
        }
        specs.push(LayerSpec::Conv2d {
            in_ch: ch,
            out_ch,
            in_h: h,
            in_w: w,
            kernel: 3,
            layout: if i == 0 { InputLayout::Chw } else { InputLayout::Hwc },
        });
        specs.push(LayerSpec::Relu);
        ch = out_ch;
        h -= 2;
        w -= 2;
    }
    Ok((specs, ch * h * w))
}

fn head(specs: &mut Vec<LayerSpec>, features: usize, arch: &ArchConfig, outputs: usize) {
    specs.push(LayerSpec::Dense {
        inputs: features,
        outputs: arch.dense_units,
    });
    specs.push(LayerSpec::Relu);
    specs.push(LayerSpec::Dropout { rate: arch.dropout });
    specs.push(LayerSpec::Dense {
        inputs: arch.dense_units,
        outputs,
    });
}

fn build<R: Rng>(
    obs_shape: [usize; 3],
    side: usize,
    specs: Vec<LayerSpec>,
    rng: &mut R,
) -> Result<Network<f32>> {
    let mut net = Network::from_specs(obs_shape.to_vec(), side, &specs)?;
    net.init_glorot(rng);
    Ok(net)
}

/// Q-network: trunk and a linear head with one value per action.
pub fn q_network<R: Rng>(
    obs_shape: [usize; 3],
    n_actions: usize,
    arch: &ArchConfig,
    rng: &mut R,
) -> Result<Network<f32>> {
    let (mut specs, features) = trunk(obs_shape, arch)?;
    head(&mut specs, features, arch, n_actions);
    build(obs_shape, 0, specs, rng)
}

/// Actor: trunk and a sigmoid head producing normalised coordinates.
pub fn actor_network<R: Rng>(
    obs_shape: [usize; 3],
    action_dim: usize,
    arch: &ArchConfig,
    rng: &mut R,
) -> Result<Network<f32>> {
    let (mut specs, features) = trunk(obs_shape, arch)?;
    head(&mut specs, features, arch, action_dim);
    specs.push(LayerSpec::Sigmoid);
    build(obs_shape, 0, specs, rng)
}

/// Critic: trunk over the observation, the action appended before the first
/// dense layer, and a scalar linear head.
pub fn critic_network<R: Rng>(
    obs_shape: [usize; 3],
    action_dim: usize,
    arch: &ArchConfig,
    rng: &mut R,
) -> Result<Network<f32>> {
    let (mut specs, features) = trunk(obs_shape, arch)?;
    specs.push(LayerSpec::ConcatSide { width: action_dim });
    head(&mut specs, features + action_dim, arch, 1);
    build(obs_shape, action_dim, specs, rng)
}
