//! DGM solution network, hard-constraint wrapper and directional operators.

mod checkpoint;
mod forward;
mod hpinn;
mod kernel;
mod operator;

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, LAYOUT_VERSION};
pub use forward::{forward, forward_traced, DgmTrace};
pub use kernel::{eval_channels, forward_value, ChannelScratch};
pub use hpinn::{dgm_forward, hpinn_eval, Damping, HardConstraint, HpinnField};
pub use operator::{hjb_local_operator, hjb_terms, local_operator, local_terms, EXP_GUARD};

use crate::error::{Error, Result};
use crate::rng;

/// Architecture of the DGM network: `d` spatial inputs plus time, `layers`
/// gated DGM layers (so `layers + 1` hidden layers), `hidden` units each.
/// The activation is always `tanh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgmConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    #[serde(rename = "n_hid")]
    pub hidden: usize,
}

impl DgmConfig {
    pub fn new(d: usize, layers: usize, hidden: usize) -> Result<Self> {
        let cfg = DgmConfig { d, layers, hidden };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.hidden == 0 {
            return Err(Error::config(format!(
                "DGM config needs d, L, n_hid >= 1 (got d={}, L={}, n_hid={})",
                self.d, self.layers, self.hidden
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout { cfg: *self }
    }

    /// `n(d+2) + 4L(n(d+1) + n² + n) + n + 1`.
    pub fn param_count(&self) -> usize {
        self.layout().len()
    }
}

/// The four gates of a DGM layer, in parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Z,
    G,
    R,
    H,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Z, Gate::G, Gate::R, Gate::H];

    fn ordinal(self) -> usize {
        self as usize
    }
}

/// One named parameter block. `layer` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    InputWeight,
    InputBias,
    GateInput(Gate, usize),
    GateState(Gate, usize),
    GateBias(Gate, usize),
    OutputWeight,
    OutputBias,
}

/// Flat parameter layout (version 1).
///
/// `W¹ (n×(d+1)), b¹`, then for each gate `Z, G, R, H` and each layer
/// `U (n×(d+1)), W (n×n), b`, then the output row `W (1×n)` and bias `b`.
/// Matrices are row-major with one row per unit.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    cfg: DgmConfig,
}

impl Layout {
    pub fn input_dim(&self) -> usize {
        self.cfg.d + 1
    }

    fn gate_len(&self) -> usize {
        let n = self.cfg.hidden;
        n * self.input_dim() + n * n + n
    }

    pub fn shape(&self, block: Block) -> (usize, usize) {
        let n = self.cfg.hidden;
        match block {
            Block::InputWeight | Block::GateInput(..) => (n, self.input_dim()),
            Block::GateState(..) => (n, n),
            Block::InputBias | Block::GateBias(..) => (n, 1),
            Block::OutputWeight => (1, n),
            Block::OutputBias => (1, 1),
        }
    }

    pub fn offset(&self, block: Block) -> usize {
        let n = self.cfg.hidden;
        let nin = n * self.input_dim();
        let gate_base = |g: Gate, l: usize| nin + n + (g.ordinal() * self.cfg.layers + l) * self.gate_len();
        match block {
            Block::InputWeight => 0,
            Block::InputBias => nin,
            Block::GateInput(g, l) => gate_base(g, l),
            Block::GateState(g, l) => gate_base(g, l) + nin,
            Block::GateBias(g, l) => gate_base(g, l) + nin + n * n,
            Block::OutputWeight => nin + n + 4 * self.cfg.layers * self.gate_len(),
            Block::OutputBias => nin + n + 4 * self.cfg.layers * self.gate_len() + n,
        }
    }

    pub fn index(&self, block: Block, row: usize, col: usize) -> usize {
        let (rows, cols) = self.shape(block);
        assert!(row < rows && col < cols, "({row},{col}) outside {block:?} of shape {rows}x{cols}");
        self.offset(block) + row * cols + col
    }

    pub fn len(&self) -> usize {
        self.offset(Block::OutputBias) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All blocks in layout order.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = vec![Block::InputWeight, Block::InputBias];
        for g in Gate::ALL {
            for l in 0..self.cfg.layers {
                out.extend([Block::GateInput(g, l), Block::GateState(g, l), Block::GateBias(g, l)]);
            }
        }
        out.extend([Block::OutputWeight, Block::OutputBias]);
        out
    }
}

/// Flat parameter vector `θ` in [`Layout`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl std::ops::Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Glorot-uniform weights (`±√(6/(fan_in+fan_out))`), zero biases.
pub fn init_params(config: &DgmConfig, seed: u64) -> ParamVector {
    let layout = config.layout();
    let mut theta = vec![0.0; layout.len()];
    let mut rng = rng::stream(seed, 0x1417);
    for block in layout.blocks() {
        if matches!(block, Block::InputBias | Block::GateBias(..) | Block::OutputBias) {
            continue;
        }
        let (fan_out, fan_in) = layout.shape(block);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let off = layout.offset(block);
        for v in &mut theta[off..off + fan_in * fan_out] {
            *v = rng.sample(dist);
        }
    }
    ParamVector(theta)
}

/// Parameters plus architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct DgmNetwork {
    pub config: DgmConfig,
    pub theta: ParamVector,
}

impl DgmNetwork {
    pub fn new(config: DgmConfig, theta: ParamVector) -> Result<Self> {
        config.validate()?;
        if theta.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                got: theta.len(),
            });
        }
        Ok(DgmNetwork { config, theta })
    }

    pub fn initialized(config: DgmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let theta = init_params(&config, seed);
        Ok(DgmNetwork { config, theta })
    }

    pub fn zeros(config: DgmConfig) -> Self {
        DgmNetwork {
            config,
            theta: ParamVector(vec![0.0; config.param_count()]),
        }
    }
}
