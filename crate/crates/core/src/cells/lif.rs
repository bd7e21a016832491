use crate::cells::{check_len, CellState, Carry, LifNeuron, Membrane, SpikeFn};
use crate::error::Result;
use crate::numerics::kernels::{add_wtx, back_wtx};
use crate::numerics::{Rng, Tensor};

/// Recurrent layer of LIF neurons: `I = Wᵀx + Vᵀs_prev`, reset by
/// subtraction. The layer output is the spike vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LifParams {
    pub w: Tensor,
    pub v: Tensor,
    pub neuron: LifNeuron,
}

#[derive(Clone, Debug)]
pub struct LifCache {
    pub(crate) x: Vec<f64>,
    pub(crate) s_prev: Vec<f64>,
    pub(crate) u: Vec<f64>,
    /// Next state, so callers can chain steps from the cache alone.
    pub next: CellState,
}

impl LifParams {
    pub fn zeros(input: usize, hidden: usize, neuron: LifNeuron) -> Self {
        Self {
            w: Tensor::zeros(&[input, hidden]),
            v: Tensor::zeros(&[hidden, hidden]),
            neuron,
        }
    }

    /// `W` uniform in `±1/√in`, `V` uniform in `±1/√hidden`.
    pub fn init(input: usize, hidden: usize, neuron: LifNeuron, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden, neuron);
        let kw = 1.0 / (input as f64).sqrt();
        let kv = 1.0 / (hidden as f64).sqrt();
        for v in p.w.data_mut() {
            *v = rng.uniform_range(-kw, kw);
        }
        for v in p.v.data_mut() {
            *v = rng.uniform_range(-kv, kv);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("w", &self.w), ("v", &self.v)]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("w", &mut self.w), ("v", &mut self.v)]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.v.len()
    }

    pub(crate) fn step(&self, x: &[f64], m: &Membrane, mode: SpikeFn) -> (Membrane, LifCache) {
        let n = self.hidden_size();
        let mut input = vec![0.0; n];
        add_wtx(self.w.data(), n, x, &mut input);
        add_wtx(self.v.data(), n, m.s_prev.data(), &mut input);
        let (u, s) = self
            .neuron
            .integrate(m.u.data(), m.s_prev.data(), &input, mode);
        let next = Membrane {
            u: Tensor::vector(u.clone()),
            s_prev: Tensor::vector(s.clone()),
        };
        let cache = LifCache {
            x: x.to_vec(),
            s_prev: m.s_prev.data().to_vec(),
            u,
            next: CellState {
                h: Tensor::vector(s),
                membranes: vec![next.clone()],
            },
        };
        (next, cache)
    }

    /// `d_out` is the gradient on this step's spikes. `carry.du[0]` and
    /// `carry.ds[0]` hold the gradients arriving from the next step on the
    /// membrane and on these spikes; both are replaced by the carries for the
    /// previous step.
    pub(crate) fn step_back(
        &self,
        c: &LifCache,
        d_out: &[f64],
        carry: &mut Carry,
        grads: &mut LifParams,
        dx: &mut [f64],
    ) {
        let n = self.hidden_size();
        let d_s: Vec<f64> = d_out.iter().zip(&carry.ds[0]).map(|(a, b)| a + b).collect();
        let mut d_s_prev = vec![0.0; n];
        let g = self
            .neuron
            .integrate_back(&c.u, &d_s, &mut carry.du[0], &mut d_s_prev);
        back_wtx(self.w.data(), n, &c.x, &g, grads.w.data_mut(), Some(dx));
        back_wtx(
            self.v.data(),
            n,
            &c.s_prev,
            &g,
            grads.v.data_mut(),
            Some(&mut d_s_prev),
        );
        carry.ds[0] = d_s_prev;
    }
}

/// One LIF step from `st` with binary spikes. Returns the spike vector; the
/// cache carries the updated state.
pub fn lif_forward(p: &LifParams, x: &Tensor, st: &CellState) -> Result<(Tensor, LifCache)> {
    lif_forward_with(p, x, st, SpikeFn::Heaviside)
}

pub fn lif_forward_with(
    p: &LifParams,
    x: &Tensor,
    st: &CellState,
    mode: SpikeFn,
) -> Result<(Tensor, LifCache)> {
    check_len("lif_forward", x.len(), p.input_size())?;
    let m = st
        .membranes
        .first()
        .ok_or_else(|| crate::Error::Usage("LIF state has no membrane".into()))?;
    check_len("lif_forward", m.u.len(), p.hidden_size())?;
    let (_, cache) = p.step(x.data(), m, mode);
    Ok((cache.next.h.clone(), cache))
}
