//! A deterministic, forward-only convolutional policy network used as the
//! randomly initialized probing baseline, plus the GPAC activation
//! interchange format for importing activations from externally trained
//! models.
//!
//! Everything here is bit-reproducible: weights come from xoshiro256**
//! (see [`crate::rng`]) in a documented draw order, and the forward pass
//! accumulates in single precision in a fixed order.

use crate::encode::PlaneStack;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

pub mod gpac;

#[derive(Debug, thiserror::Error)]
pub enum ActivationError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input shape mismatch: expected {expected} planes of {size}x{size}, got {found}")]
    ShapeMismatch {
        expected: usize,
        found: usize,
        size: usize,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("unsupported GPAC version {found}, expected {GPAC_VERSION}")]
    Version { found: u16 },
}

pub const GPAC_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Conv3x3,
    Conv1x1,
    /// Two 3x3 convolutions with a skip connection; input and output
    /// channel counts must match.
    ResidualPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub kind: BlockKind,
    pub channels: usize,
}

/// Architecture plus seed. The same spec and seed always produce
/// bit-identical weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_planes: usize,
    pub board_size: usize,
    pub blocks: Vec<BlockSpec>,
    /// Name of the recorded policy-logit layer.
    #[serde(default = "default_head_name")]
    pub head_name: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_head_name() -> String {
    "policy".to_owned()
}

impl NetworkSpec {
    /// The default desk-scale baseline: five 3x3 blocks of 32 channels
    /// plus the policy head.
    pub fn default_desk(input_planes: usize, seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_planes,
            board_size: 19,
            blocks: (1..=5)
                .map(|i| BlockSpec {
                    name: format!("conv{i}"),
                    kind: BlockKind::Conv3x3,
                    channels: 32,
                })
                .collect(),
            head_name: default_head_name(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ActivationError> {
        if self.input_planes != 7 && self.input_planes != 17 {
            return Err(ActivationError::InvalidSpec(format!(
                "input_planes must be 7 or 17, got {}",
                self.input_planes
            )));
        }
        if !(crate::goban::MIN_BOARD_SIZE..=crate::goban::MAX_BOARD_SIZE)
            .contains(&self.board_size)
        {
            return Err(ActivationError::InvalidSpec(format!(
                "board_size {} unsupported",
                self.board_size
            )));
        }
        if self.blocks.is_empty() {
            return Err(ActivationError::InvalidSpec("no blocks".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        names.insert("input".to_owned());
        let mut in_ch = self.input_planes;
        for block in &self.blocks {
            if block.channels == 0 {
                return Err(ActivationError::InvalidSpec(format!(
                    "block {} has zero channels",
                    block.name
                )));
            }
            if block.name.is_empty() || !names.insert(block.name.clone()) {
                return Err(ActivationError::InvalidSpec(format!(
                    "duplicate or empty layer name '{}'",
                    block.name
                )));
            }
            if block.kind == BlockKind::ResidualPair && block.channels != in_ch {
                return Err(ActivationError::InvalidSpec(format!(
                    "residual block {} needs {} in channels, spec says {}",
                    block.name, in_ch, block.channels
                )));
            }
            in_ch = block.channels;
        }
        if !names.insert(self.head_name.clone()) || self.head_name.is_empty() {
            return Err(ActivationError::InvalidSpec(
                "head name empty or colliding".into(),
            ));
        }
        Ok(())
    }

    /// Recorded layer names and shapes, in order: input, each block, head.
    pub fn layer_table(&self) -> Vec<(String, Vec<u32>)> {
        let s = self.board_size as u32;
        let mut table = vec![("input".to_owned(), vec![self.input_planes as u32, s, s])];
        for block in &self.blocks {
            table.push((block.name.clone(), vec![block.channels as u32, s, s]));
        }
        table.push((
            self.head_name.clone(),
            vec![(self.board_size * self.board_size + 1) as u32],
        ));
        table
    }
}

/// One convolution's parameters: kernels in [out][in][kh][kw] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockWeights {
    Conv(ConvWeights),
    Residual(ConvWeights, ConvWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub spec: NetworkSpec,
    pub blocks: Vec<BlockWeights>,
    /// Dense policy head: [out][in] over the flattened last block.
    pub head: ConvWeights,
}

fn draw_conv(rng: &mut Rng, in_ch: usize, out_ch: usize, kernel: usize) -> ConvWeights {
    let fan_in = in_ch * kernel * kernel;
    let scale = (2.0 / fan_in as f32).sqrt();
    let count = out_ch * in_ch * kernel * kernel;
    let weights = (0..count)
        .map(|_| scale * (2.0 * rng.next_unit_f32() - 1.0))
        .collect();
    ConvWeights {
        in_channels: in_ch,
        out_channels: out_ch,
        kernel,
        weights,
        bias: vec![0.0; out_ch],
    }
}

/// Initialize weights from the spec's seed: uniform on
/// [-sqrt(2/fan_in), sqrt(2/fan_in)), biases zero. Draw order is block
/// order, then the head; within a convolution, [out][in][kh][kw].
pub fn init_network(spec: &NetworkSpec) -> Result<NetworkWeights, ActivationError> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let mut blocks = Vec::with_capacity(spec.blocks.len());
    let mut in_ch = spec.input_planes;
    for block in &spec.blocks {
        let weights = match block.kind {
            BlockKind::Conv3x3 => BlockWeights::Conv(draw_conv(&mut rng, in_ch, block.channels, 3)),
            BlockKind::Conv1x1 => BlockWeights::Conv(draw_conv(&mut rng, in_ch, block.channels, 1)),
            BlockKind::ResidualPair => BlockWeights::Residual(
                draw_conv(&mut rng, in_ch, block.channels, 3),
                draw_conv(&mut rng, block.channels, block.channels, 3),
            ),
        };
        blocks.push(weights);
        in_ch = block.channels;
    }
    let s = spec.board_size;
    let head = {
        let fan_in = in_ch * s * s;
        let scale = (2.0 / fan_in as f32).sqrt();
        let out = s * s + 1;
        let weights = (0..out * fan_in)
            .map(|_| scale * (2.0 * rng.next_unit_f32() - 1.0))
            .collect();
        ConvWeights {
            in_channels: fan_in,
            out_channels: out,
            kernel: 1,
            weights,
            bias: vec![0.0; out],
        }
    };
    Ok(NetworkWeights { spec: spec.clone(), blocks, head })
}

/// Same-padded convolution. Accumulation order is fixed: bias first, then
/// contributions in (in-channel, kernel-row, kernel-col) order sweeping
/// the output plane, which keeps runs bit-identical everywhere.
fn convolve(input: &[f32], size: usize, conv: &ConvWeights, output: &mut [f32]) {
    let cells = size * size;
    let k = conv.kernel;
    let half = k / 2;
    debug_assert_eq!(input.len(), conv.in_channels * cells);
    debug_assert_eq!(output.len(), conv.out_channels * cells);
    for oc in 0..conv.out_channels {
        let out_plane = &mut output[oc * cells..(oc + 1) * cells];
        out_plane.fill(conv.bias[oc]);
        for ic in 0..conv.in_channels {
            let in_plane = &input[ic * cells..(ic + 1) * cells];
            for kr in 0..k {
                for kc in 0..k {
                    let w = conv.weights[((oc * conv.in_channels + ic) * k + kr) * k + kc];
                    if w == 0.0 {
                        continue;
                    }
                    let dr = kr as isize - half as isize;
                    let dc = kc as isize - half as isize;
                    // Output cells whose shifted source stays in bounds.
                    let r0 = (-dr).max(0) as usize;
                    let r1 = (size as isize - dr.max(0)) as usize;
                    let c0 = (-dc).max(0) as usize;
                    let c1 = (size as isize - dc.max(0)) as usize;
                    for r in r0..r1 {
                        let in_row = (r as isize + dr) as usize * size;
                        let out_row = r * size;
                        for c in c0..c1 {
                            let in_col = (c as isize + dc) as usize;
                            out_plane[out_row + c] += w * in_plane[in_row + in_col];
                        }
                    }
                }
            }
        }
    }
}

fn relu_in_place(values: &mut [f32]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// One named activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

/// Per-position activations: layer 0 is the raw input planes, then one
/// tensor per block, then the pre-softmax policy logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub game_id: u32,
    pub move_index: u32,
    pub layers: Vec<LayerTensor>,
}

impl LayerActivations {
    pub fn layer_table(&self) -> Vec<(String, Vec<u32>)> {
        self.layers
            .iter()
            .map(|l| (l.name.clone(), l.dims.clone()))
            .collect()
    }
}

/// Run the forward pass for one position, recording every layer.
pub fn forward_collect(
    weights: &NetworkWeights,
    input: &PlaneStack,
    game_id: u32,
    move_index: u32,
) -> Result<LayerActivations, ActivationError> {
    let spec = &weights.spec;
    if input.size != spec.board_size || input.plane_count() != spec.input_planes {
        return Err(ActivationError::ShapeMismatch {
            expected: spec.input_planes,
            found: input.plane_count(),
            size: spec.board_size,
        });
    }
    forward_collect_raw(weights, &input.to_f32(), game_id, move_index)
}

/// Forward pass over raw input-plane values (plane-major row-major), as
/// read back from a GPAC boards file.
pub fn forward_collect_raw(
    weights: &NetworkWeights,
    input: &[f32],
    game_id: u32,
    move_index: u32,
) -> Result<LayerActivations, ActivationError> {
    let spec = &weights.spec;
    let size = spec.board_size;
    if input.len() != spec.input_planes * size * size {
        return Err(ActivationError::ShapeMismatch {
            expected: spec.input_planes,
            found: input.len() / (size * size).max(1),
            size,
        });
    }
    let cells = size * size;
    let s32 = size as u32;
    let mut layers = Vec::with_capacity(spec.blocks.len() + 2);
    let mut current = input.to_vec();
    layers.push(LayerTensor {
        name: "input".to_owned(),
        dims: vec![spec.input_planes as u32, s32, s32],
        values: current.clone(),
    });
    for (block, spec_block) in weights.blocks.iter().zip(&spec.blocks) {
        let mut out = vec![0.0f32; spec_block.channels * cells];
        match block {
            BlockWeights::Conv(conv) => {
                convolve(&current, size, conv, &mut out);
                relu_in_place(&mut out);
            }
            BlockWeights::Residual(first, second) => {
                let mut mid = vec![0.0f32; spec_block.channels * cells];
                convolve(&current, size, first, &mut mid);
                relu_in_place(&mut mid);
                convolve(&mid, size, second, &mut out);
                for (o, x) in out.iter_mut().zip(&current) {
                    *o += x;
                }
                relu_in_place(&mut out);
            }
        }
        debug_assert!(out.iter().all(|v| v.is_finite()));
        layers.push(LayerTensor {
            name: spec_block.name.clone(),
            dims: vec![spec_block.channels as u32, s32, s32],
            values: out.clone(),
        });
        current = out;
    }
    // Dense policy head over the flattened last block.
    let head = &weights.head;
    let mut logits = vec![0.0f32; head.out_channels];
    for (o, logit) in logits.iter_mut().enumerate() {
        let mut acc = head.bias[o];
        let row = &head.weights[o * head.in_channels..(o + 1) * head.in_channels];
        for (w, x) in row.iter().zip(&current) {
            acc += w * x;
        }
        *logit = acc;
    }
    layers.push(LayerTensor {
        name: spec.head_name.clone(),
        dims: vec![head.out_channels as u32],
        values: logits,
    });
    Ok(LayerActivations {
        game_id,
        move_index,
        layers,
    })
}

/// Forward passes for a batch of positions. With the `parallel` feature
/// the batch is evaluated across threads; output order always follows
/// input order and each position's values are bit-identical either way.
pub fn forward_collect_batch(
    weights: &NetworkWeights,
    inputs: &[(u32, u32, PlaneStack)],
) -> Result<Vec<LayerActivations>, ActivationError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        inputs
            .par_iter()
            .map(|(g, m, stack)| forward_collect(weights, stack, *g, *m))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        inputs
            .iter()
            .map(|(g, m, stack)| forward_collect(weights, stack, *g, *m))
            .collect()
    }
}

/// Batch variant of [`forward_collect_raw`].
pub fn forward_collect_raw_batch(
    weights: &NetworkWeights,
    inputs: &[(u32, u32, &[f32])],
) -> Result<Vec<LayerActivations>, ActivationError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        inputs
            .par_iter()
            .map(|(g, m, values)| forward_collect_raw(weights, values, *g, *m))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        inputs
            .iter()
            .map(|(g, m, values)| forward_collect_raw(weights, values, *g, *m))
            .collect()
    }
}
