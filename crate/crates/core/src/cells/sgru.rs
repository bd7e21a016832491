use crate::cells::{check_len, CellState, Carry, LifNeuron, Membrane, SpikeFn};
use crate::error::Result;
use crate::numerics::kernels::{add_wtx, back_wtx};
use crate::numerics::{Rng, Tensor};

/// Gate index into the embedded LIF neuron sets and membranes.
pub const RESET: usize = 0;
pub const UPDATE: usize = 1;
pub const CANDIDATE: usize = 2;

/// Spiking GRU. Each gate is a layer of LIF neurons without bias:
///
/// ```text
/// r  = LIF(W_rᵀx + U_rᵀh)
/// z  = LIF(W_zᵀx + U_zᵀh)
/// h~ = LIF(W_hᵀx + U_hᵀ((1 - r) ⊙ h))
/// h' = (1 - z) ⊙ h + z ⊙ h~
/// ```
///
/// The candidate is gated with `1 - r`, not `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgruParams {
    pub w_r: Tensor,
    pub w_z: Tensor,
    pub w_h: Tensor,
    pub u_r: Tensor,
    pub u_z: Tensor,
    pub u_h: Tensor,
    /// Neuron settings for the reset, update and candidate gates.
    pub gates: [LifNeuron; 3],
}

#[derive(Clone, Debug)]
pub struct SgruCache {
    pub(crate) x: Vec<f64>,
    pub(crate) h_prev: Vec<f64>,
    /// Gate spikes, indexed by [`RESET`], [`UPDATE`], [`CANDIDATE`].
    pub(crate) spikes: [Vec<f64>; 3],
    pub(crate) membranes: [Vec<f64>; 3],
    pub(crate) masked: Vec<f64>,
    pub next: CellState,
}

impl SgruCache {
    pub fn gate_spikes(&self, gate: usize) -> &[f64] {
        &self.spikes[gate]
    }
}

impl SgruParams {
    pub fn zeros(input: usize, hidden: usize, neuron: LifNeuron) -> Self {
        let w = || Tensor::zeros(&[input, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        Self {
            w_r: w(),
            w_z: w(),
            w_h: w(),
            u_r: u(),
            u_z: u(),
            u_h: u(),
            gates: [neuron; 3],
        }
    }

    /// `W_*` uniform in `±1/√in`, `U_*` uniform in `±1/√hidden`.
    pub fn init(input: usize, hidden: usize, neuron: LifNeuron, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden, neuron);
        let kw = 1.0 / (input as f64).sqrt();
        let ku = 1.0 / (hidden as f64).sqrt();
        for (name, t) in p.named_mut() {
            let k = if name.starts_with('w') { kw } else { ku };
            for v in t.data_mut() {
                *v = rng.uniform_range(-k, k);
            }
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_r.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.u_r.shape()[0]
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_r", &self.w_r),
            ("w_z", &self.w_z),
            ("w_h", &self.w_h),
            ("u_r", &self.u_r),
            ("u_z", &self.u_z),
            ("u_h", &self.u_h),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w_r", &mut self.w_r),
            ("w_z", &mut self.w_z),
            ("w_h", &mut self.w_h),
            ("u_r", &mut self.u_r),
            ("u_z", &mut self.u_z),
            ("u_h", &mut self.u_h),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub(crate) fn step(&self, x: &[f64], st: &CellState, mode: SpikeFn) -> (Vec<f64>, SgruCache) {
        let n = self.hidden_size();
        let h = st.h.data();
        let drive = |w: &Tensor, u: &Tensor, hin: &[f64]| {
            let mut a = vec![0.0; n];
            add_wtx(w.data(), n, x, &mut a);
            add_wtx(u.data(), n, hin, &mut a);
            a
        };
        let mem = |g: usize| &st.membranes[g];

        let a_r = drive(&self.w_r, &self.u_r, h);
        let (u_r, r) = self.gates[RESET].integrate(
            mem(RESET).u.data(),
            mem(RESET).s_prev.data(),
            &a_r,
            mode,
        );
        let a_z = drive(&self.w_z, &self.u_z, h);
        let (u_z, z) = self.gates[UPDATE].integrate(
            mem(UPDATE).u.data(),
            mem(UPDATE).s_prev.data(),
            &a_z,
            mode,
        );
        let masked: Vec<f64> = r.iter().zip(h).map(|(r, h)| (1.0 - r) * h).collect();
        let a_c = drive(&self.w_h, &self.u_h, &masked);
        let (u_c, c) = self.gates[CANDIDATE].integrate(
            mem(CANDIDATE).u.data(),
            mem(CANDIDATE).s_prev.data(),
            &a_c,
            mode,
        );
        let h_next: Vec<f64> = (0..n).map(|j| (1.0 - z[j]) * h[j] + z[j] * c[j]).collect();

        let membrane = |u: &[f64], s: &[f64]| Membrane {
            u: Tensor::vector(u.to_vec()),
            s_prev: Tensor::vector(s.to_vec()),
        };
        let next = CellState {
            h: Tensor::vector(h_next.clone()),
            membranes: vec![membrane(&u_r, &r), membrane(&u_z, &z), membrane(&u_c, &c)],
        };
        let cache = SgruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            spikes: [r, z, c],
            membranes: [u_r, u_z, u_c],
            masked,
            next,
        };
        (h_next, cache)
    }

    pub(crate) fn step_back(
        &self,
        c: &SgruCache,
        d_out: &[f64],
        carry: &mut Carry,
        grads: &mut SgruParams,
        dx: &mut [f64],
    ) {
        let n = self.hidden_size();
        let [r, z, cand] = &c.spikes;
        let dh_next: Vec<f64> = carry.dh.iter().zip(d_out).map(|(a, b)| a + b).collect();
        let mut dh: Vec<f64> = (0..n).map(|j| dh_next[j] * (1.0 - z[j])).collect();
        let d_z: Vec<f64> = (0..n)
            .map(|j| dh_next[j] * (cand[j] - c.h_prev[j]) + carry.ds[UPDATE][j])
            .collect();
        let d_c: Vec<f64> = (0..n)
            .map(|j| dh_next[j] * z[j] + carry.ds[CANDIDATE][j])
            .collect();

        // candidate gate
        let mut ds_prev = vec![0.0; n];
        let g_c = self.gates[CANDIDATE].integrate_back(
            &c.membranes[CANDIDATE],
            &d_c,
            &mut carry.du[CANDIDATE],
            &mut ds_prev,
        );
        carry.ds[CANDIDATE] = ds_prev;
        back_wtx(self.w_h.data(), n, &c.x, &g_c, grads.w_h.data_mut(), Some(&mut *dx));
        let mut d_masked = vec![0.0; n];
        back_wtx(
            self.u_h.data(),
            n,
            &c.masked,
            &g_c,
            grads.u_h.data_mut(),
            Some(&mut d_masked),
        );
        let mut d_r = vec![0.0; n];
        for j in 0..n {
            dh[j] += d_masked[j] * (1.0 - r[j]);
            d_r[j] = -d_masked[j] * c.h_prev[j] + carry.ds[RESET][j];
        }

        // update gate
        let mut ds_prev = vec![0.0; n];
        let g_z = self.gates[UPDATE].integrate_back(
            &c.membranes[UPDATE],
            &d_z,
            &mut carry.du[UPDATE],
            &mut ds_prev,
        );
        carry.ds[UPDATE] = ds_prev;
        back_wtx(self.w_z.data(), n, &c.x, &g_z, grads.w_z.data_mut(), Some(&mut *dx));
        back_wtx(
            self.u_z.data(),
            n,
            &c.h_prev,
            &g_z,
            grads.u_z.data_mut(),
            Some(&mut dh),
        );

        // reset gate
        let mut ds_prev = vec![0.0; n];
        let g_r = self.gates[RESET].integrate_back(
            &c.membranes[RESET],
            &d_r,
            &mut carry.du[RESET],
            &mut ds_prev,
        );
        carry.ds[RESET] = ds_prev;
        back_wtx(self.w_r.data(), n, &c.x, &g_r, grads.w_r.data_mut(), Some(&mut *dx));
        back_wtx(
            self.u_r.data(),
            n,
            &c.h_prev,
            &g_r,
            grads.u_r.data_mut(),
            Some(&mut dh),
        );
        carry.dh = dh;
    }
}

/// One sGRU step from `st` with binary gate spikes.
pub fn sgru_forward(p: &SgruParams, x: &Tensor, st: &CellState) -> Result<(Tensor, SgruCache)> {
    sgru_forward_with(p, x, st, SpikeFn::Heaviside)
}

pub fn sgru_forward_with(
    p: &SgruParams,
    x: &Tensor,
    st: &CellState,
    mode: SpikeFn,
) -> Result<(Tensor, SgruCache)> {
    check_len("sgru_forward", x.len(), p.input_size())?;
    check_len("sgru_forward", st.h.len(), p.hidden_size())?;
    if st.membranes.len() != 3 {
        return Err(crate::Error::Usage(format!(
            "sGRU state needs 3 gate membranes, found {}",
            st.membranes.len()
        )));
    }
    for m in &st.membranes {
        check_len("sgru_forward", m.u.len(), p.hidden_size())?;
    }
    let (h, cache) = p.step(x.data(), st, mode);
    Ok((Tensor::vector(h), cache))
}
