use crate::numerics::Tensor;

/// Geometry of a synaptic layer as recorded in a trace.
#[derive(Clone, Debug, PartialEq)]
pub enum SynapseShape {
    /// Weights `out × in × k` slid over `input` (`in × L`) with zero padding.
    Conv { padding: usize },
    /// Each row of `input` (`positions × fan_in`) multiplies every listed
    /// `fan_in × fan_out` matrix.
    Dense,
}

/// Input seen by one synaptic layer during a forward pass.
#[derive(Clone, Debug)]
pub struct SynapseRecord {
    pub layer: String,
    pub shape: SynapseShape,
    /// Model tensor names of the weights driven by `input`.
    pub weights: Vec<String>,
    /// Bias vectors added once per position; counted as one operation per
    /// element, in the class of the layer.
    pub biases: Vec<String>,
    /// Inputs are raw spike bins or spike vectors, so products are
    /// accumulates rather than multiply-accumulates.
    pub binary_input: bool,
    pub input: Tensor,
}

/// Output of an activation (ReLU or spiking) layer over all its positions.
#[derive(Clone, Debug)]
pub struct ActivationRecord {
    pub layer: String,
    pub values: Tensor,
}

/// Everything a forward pass exposes to the benchmark counters.
#[derive(Clone, Debug, Default)]
pub struct ActivationTrace {
    pub seq_len: usize,
    pub synapses: Vec<SynapseRecord>,
    pub activations: Vec<ActivationRecord>,
}

impl ActivationTrace {
    pub fn new(seq_len: usize) -> Self {
        Self {
            seq_len,
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.synapses.is_empty() && self.activations.is_empty()
    }
}
