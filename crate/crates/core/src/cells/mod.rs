//! Recurrent units: a standard GRU, a recurrent LIF layer and the spiking
//! GRU whose gates are LIF spike vectors. Every cell has a single-step
//! forward and an exact reverse step used for backpropagation through time.

mod gru;
mod lif;
mod sgru;
mod surrogate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gru::{gru_forward, GruCache, GruParams};
pub use lif::{lif_forward, lif_forward_with, LifCache, LifParams};
pub use sgru::{sgru_forward, sgru_forward_with, SgruCache, SgruParams, CANDIDATE, RESET, UPDATE};
pub use surrogate::{relaxed_spike, surrogate_grad, surrogate_scalar, LifNeuron, SpikeFn};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceKind {
    Gru,
    Lif,
    Sgru,
}

impl RecurrenceKind {
    pub const ALL: [RecurrenceKind; 3] = [RecurrenceKind::Gru, RecurrenceKind::Lif, RecurrenceKind::Sgru];

    pub fn is_spiking(self) -> bool {
        !matches!(self, RecurrenceKind::Gru)
    }
}

impl fmt::Display for RecurrenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecurrenceKind::Gru => "gru",
            RecurrenceKind::Lif => "lif",
            RecurrenceKind::Sgru => "sgru",
        })
    }
}

impl FromStr for RecurrenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(RecurrenceKind::Gru),
            "lif" => Ok(RecurrenceKind::Lif),
            "sgru" => Ok(RecurrenceKind::Sgru),
            other => Err(Error::config(format!("unknown recurrence {other:?}"))),
        }
    }
}

/// Membrane potential and last emitted spikes of one LIF layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Membrane {
    pub u: Tensor,
    pub s_prev: Tensor,
}

impl Membrane {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: Tensor::zeros(&[n]),
            s_prev: Tensor::zeros(&[n]),
        }
    }
}

/// Recurrent state. `h` is the layer output (spikes for the LIF layer);
/// `membranes` is empty for the GRU, one entry for LIF and three (reset,
/// update, candidate) for the sGRU.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Tensor,
    pub membranes: Vec<Membrane>,
}

/// Gradients flowing backwards through time into the previous step.
#[derive(Clone, Debug)]
pub(crate) struct Carry {
    pub dh: Vec<f64>,
    pub du: Vec<Vec<f64>>,
    pub ds: Vec<Vec<f64>>,
}

pub(crate) fn check_len(op: &'static str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::dim(op, &[found], &[expected]));
    }
    Ok(())
}

/// Any of the three recurrent units, as held by a model.
#[derive(Clone, Debug, PartialEq)]
pub enum Recurrent {
    Gru(GruParams),
    Lif(LifParams),
    Sgru(SgruParams),
}

#[derive(Clone, Debug)]
pub enum StepCache {
    Gru(GruCache),
    Lif(LifCache),
    Sgru(SgruCache),
}

impl StepCache {
    /// Spike vectors emitted during this step (empty for the GRU).
    pub fn spikes(&self) -> Vec<&[f64]> {
        match self {
            StepCache::Gru(_) => Vec::new(),
            StepCache::Lif(c) => vec![c.next.h.data()],
            StepCache::Sgru(c) => vec![
                c.gate_spikes(RESET),
                c.gate_spikes(UPDATE),
                c.gate_spikes(CANDIDATE),
            ],
        }
    }
}

/// One group of recurrent weights sharing the same input vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapseGroup {
    pub layer: &'static str,
    pub weights: Vec<&'static str>,
    pub biases: Vec<&'static str>,
    pub binary_input: bool,
}

impl StepCache {
    /// Input vectors of this step, in the order of [`Recurrent::synapse_groups`].
    pub fn synaptic_inputs(&self) -> Vec<&[f64]> {
        match self {
            StepCache::Gru(c) => vec![&c.x, &c.h_prev, &c.rh],
            StepCache::Lif(c) => vec![&c.x, &c.s_prev],
            StepCache::Sgru(c) => vec![&c.x, &c.h_prev, &c.masked],
        }
    }
}

impl Recurrent {
    pub fn init(kind: RecurrenceKind, input: usize, hidden: usize, neuron: LifNeuron, rng: &mut Rng) -> Self {
        match kind {
            RecurrenceKind::Gru => Recurrent::Gru(GruParams::init(input, hidden, rng)),
            RecurrenceKind::Lif => Recurrent::Lif(LifParams::init(input, hidden, neuron, rng)),
            RecurrenceKind::Sgru => Recurrent::Sgru(SgruParams::init(input, hidden, neuron, rng)),
        }
    }

    pub fn zeros(kind: RecurrenceKind, input: usize, hidden: usize, neuron: LifNeuron) -> Self {
        match kind {
            RecurrenceKind::Gru => Recurrent::Gru(GruParams::zeros(input, hidden)),
            RecurrenceKind::Lif => Recurrent::Lif(LifParams::zeros(input, hidden, neuron)),
            RecurrenceKind::Sgru => Recurrent::Sgru(SgruParams::zeros(input, hidden, neuron)),
        }
    }

    pub fn kind(&self) -> RecurrenceKind {
        match self {
            Recurrent::Gru(_) => RecurrenceKind::Gru,
            Recurrent::Lif(_) => RecurrenceKind::Lif,
            Recurrent::Sgru(_) => RecurrenceKind::Sgru,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Recurrent::Gru(p) => p.input_size(),
            Recurrent::Lif(p) => p.input_size(),
            Recurrent::Sgru(p) => p.input_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Recurrent::Gru(p) => p.hidden_size(),
            Recurrent::Lif(p) => p.hidden_size(),
            Recurrent::Sgru(p) => p.hidden_size(),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Recurrent::Gru(p) => p.named(),
            Recurrent::Lif(p) => p.named(),
            Recurrent::Sgru(p) => p.named(),
        }
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Recurrent::Gru(p) => p.named_mut(),
            Recurrent::Lif(p) => p.named_mut(),
            Recurrent::Sgru(p) => p.named_mut(),
        }
    }

    /// Synaptic weight groups and whether their inputs are spikes. The sGRU
    /// hidden state mixes binary spikes and stays binary.
    pub fn synapse_groups(&self) -> Vec<SynapseGroup> {
        let g = |layer, weights: &[&'static str], biases: &[&'static str], binary_input| SynapseGroup {
            layer,
            weights: weights.to_vec(),
            biases: biases.to_vec(),
            binary_input,
        };
        match self {
            Recurrent::Gru(_) => vec![
                g("input", &["w_z", "w_r", "w_h"], &["b_z", "b_r", "b_h"], false),
                g("hidden", &["u_z", "u_r"], &[], false),
                g("reset_hidden", &["u_h"], &[], false),
            ],
            Recurrent::Lif(_) => vec![
                g("input", &["w"], &[], false),
                g("recurrent", &["v"], &[], true),
            ],
            Recurrent::Sgru(_) => vec![
                g("input", &["w_r", "w_z", "w_h"], &[], false),
                g("hidden", &["u_r", "u_z"], &[], true),
                g("masked_hidden", &["u_h"], &[], true),
            ],
        }
    }

    /// Whether the layer output (what the readout sees) is a spike vector.
    pub fn binary_output(&self) -> bool {
        self.kind().is_spiking()
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn membrane_count(&self) -> usize {
        match self {
            Recurrent::Gru(_) => 0,
            Recurrent::Lif(_) => 1,
            Recurrent::Sgru(_) => 3,
        }
    }

    /// Zero hidden state and membranes, as at the start of every window.
    pub fn init_state(&self) -> CellState {
        let n = self.hidden_size();
        CellState {
            h: Tensor::zeros(&[n]),
            membranes: (0..self.membrane_count()).map(|_| Membrane::zeros(n)).collect(),
        }
    }

    /// Number of state elements kept between steps.
    pub fn state_len(&self) -> usize {
        let n = self.hidden_size();
        match self {
            // h only
            Recurrent::Gru(_) => n,
            // membrane and previous spikes (h aliases the spikes)
            Recurrent::Lif(_) => 2 * n,
            Recurrent::Sgru(_) => n + 3 * 2 * n,
        }
    }

    pub(crate) fn new_carry(&self) -> Carry {
        let n = self.hidden_size();
        let m = self.membrane_count();
        Carry {
            dh: vec![0.0; n],
            du: vec![vec![0.0; n]; m],
            ds: vec![vec![0.0; n]; m],
        }
    }

    pub(crate) fn step(&self, x: &[f64], st: &CellState, mode: SpikeFn) -> (CellState, StepCache) {
        match self {
            Recurrent::Gru(p) => {
                let (h, c) = p.step(x, st.h.data());
                (
                    CellState {
                        h: Tensor::vector(h),
                        membranes: Vec::new(),
                    },
                    StepCache::Gru(c),
                )
            }
            Recurrent::Lif(p) => {
                let (_, c) = p.step(x, &st.membranes[0], mode);
                (c.next.clone(), StepCache::Lif(c))
            }
            Recurrent::Sgru(p) => {
                let (_, c) = p.step(x, st, mode);
                (c.next.clone(), StepCache::Sgru(c))
            }
        }
    }

    pub(crate) fn step_back(
        &self,
        cache: &StepCache,
        d_out: &[f64],
        carry: &mut Carry,
        grads: &mut Recurrent,
        dx: &mut [f64],
    ) -> Result<()> {
        match (self, cache, grads) {
            (Recurrent::Gru(p), StepCache::Gru(c), Recurrent::Gru(g)) => {
                p.step_back(c, d_out, carry, g, dx)
            }
            (Recurrent::Lif(p), StepCache::Lif(c), Recurrent::Lif(g)) => {
                p.step_back(c, d_out, carry, g, dx)
            }
            (Recurrent::Sgru(p), StepCache::Sgru(c), Recurrent::Sgru(g)) => {
                p.step_back(c, d_out, carry, g, dx)
            }
            _ => return Err(Error::Usage("cache does not match the recurrent unit".into())),
        }
        Ok(())
    }

    /// Zero-valued gradient container with this unit's shapes.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for (_, t) in g.named_mut() {
            t.data_mut().fill(0.0);
        }
        g
    }

    /// Runs the unit over the rows of `xs` (`T × in`) from `st`. Returns the
    /// outputs `T × hidden`, the final state and one cache per step.
    pub fn run(&self, xs: &Tensor, st: &CellState, mode: SpikeFn) -> Result<(Tensor, CellState, Vec<StepCache>)> {
        if xs.shape().len() != 2 || xs.cols() != self.input_size() {
            return Err(Error::dim("Recurrent::run", xs.shape(), &[xs.rows(), self.input_size()]));
        }
        check_len("Recurrent::run", st.h.len(), self.hidden_size())?;
        let n = self.hidden_size();
        let mut cur = st.clone();
        let mut out = Vec::with_capacity(xs.rows() * n);
        let mut caches = Vec::with_capacity(xs.rows());
        for t in 0..xs.rows() {
            let (next, cache) = self.step(xs.row(t), &cur, mode);
            out.extend_from_slice(next.h.data());
            caches.push(cache);
            cur = next;
        }
        Ok((Tensor::new(vec![xs.rows(), n], out)?, cur, caches))
    }

    /// Backpropagation through time over the caches of [`Recurrent::run`],
    /// given `d_out = ∂L/∂outputs` (`T × hidden`). Returns the parameter
    /// gradients and the input gradients `T × in`.
    pub fn bptt(&self, caches: &[StepCache], d_out: &Tensor) -> Result<(Recurrent, Tensor)> {
        let (t_n, n, i_n) = (caches.len(), self.hidden_size(), self.input_size());
        if d_out.shape() != [t_n, n] {
            return Err(Error::dim("Recurrent::bptt", d_out.shape(), &[t_n, n]));
        }
        let mut grads = self.zeros_like();
        let mut carry = self.new_carry();
        let mut dx = vec![0.0; t_n * i_n];
        for t in (0..t_n).rev() {
            self.step_back(&caches[t], d_out.row(t), &mut carry, &mut grads, &mut dx[t * i_n..(t + 1) * i_n])?;
        }
        Ok((grads, Tensor::new(vec![t_n, i_n], dx)?))
    }
}
