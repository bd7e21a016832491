use crate::cells::{check_len, CellState, Carry};
use crate::error::Result;
use crate::numerics::kernels::{add_wtx, back_wtx};
use crate::numerics::{sigmoid, Rng, Tensor};

/// Standard gated recurrent unit with biases. Weights are stored `in × out`
/// so that pre-activations read `Wᵀx + Uᵀh + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    pub(crate) x: Vec<f64>,
    pub(crate) h_prev: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) r: Vec<f64>,
    pub(crate) cand: Vec<f64>,
    pub(crate) rh: Vec<f64>,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[input, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Uniform in `±1/√hidden` for every tensor.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        let k = 1.0 / (hidden as f64).sqrt();
        for (_, t) in p.named_mut() {
            for v in t.data_mut() {
                *v = rng.uniform_range(-k, k);
            }
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.b_z.len()
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub(crate) fn step(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let n = self.hidden_size();
        let gate = |w: &Tensor, u: &Tensor, b: &Tensor, hin: &[f64]| {
            let mut a = b.data().to_vec();
            add_wtx(w.data(), n, x, &mut a);
            add_wtx(u.data(), n, hin, &mut a);
            a
        };
        let z: Vec<f64> = gate(&self.w_z, &self.u_z, &self.b_z, h)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = gate(&self.w_r, &self.u_r, &self.b_r, h)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = gate(&self.w_h, &self.u_h, &self.b_h, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h_next = (0..n)
            .map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j])
            .collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            z,
            r,
            cand,
            rh,
        };
        (h_next, cache)
    }

    /// `d_out` is the gradient on this step's output; `carry.dh` holds the
    /// gradient on the same hidden state from the next step and is replaced
    /// by the gradient on the previous hidden state.
    pub(crate) fn step_back(
        &self,
        c: &GruCache,
        d_out: &[f64],
        carry: &mut Carry,
        grads: &mut GruParams,
        dx: &mut [f64],
    ) {
        let n = self.hidden_size();
        let dh_next: Vec<f64> = carry.dh.iter().zip(d_out).map(|(a, b)| a + b).collect();
        let mut dh: Vec<f64> = (0..n).map(|j| dh_next[j] * (1.0 - c.z[j])).collect();

        let dac: Vec<f64> = (0..n)
            .map(|j| dh_next[j] * c.z[j] * (1.0 - c.cand[j] * c.cand[j]))
            .collect();
        let daz: Vec<f64> = (0..n)
            .map(|j| dh_next[j] * (c.cand[j] - c.h_prev[j]) * c.z[j] * (1.0 - c.z[j]))
            .collect();

        add_into(grads.b_h.data_mut(), &dac);
        back_wtx(self.w_h.data(), n, &c.x, &dac, grads.w_h.data_mut(), Some(&mut *dx));
        let mut drh = vec![0.0; n];
        back_wtx(
            self.u_h.data(),
            n,
            &c.rh,
            &dac,
            grads.u_h.data_mut(),
            Some(&mut drh),
        );
        let mut dar = vec![0.0; n];
        for j in 0..n {
            dh[j] += drh[j] * c.r[j];
            dar[j] = drh[j] * c.h_prev[j] * c.r[j] * (1.0 - c.r[j]);
        }

        add_into(grads.b_r.data_mut(), &dar);
        back_wtx(self.w_r.data(), n, &c.x, &dar, grads.w_r.data_mut(), Some(&mut *dx));
        back_wtx(
            self.u_r.data(),
            n,
            &c.h_prev,
            &dar,
            grads.u_r.data_mut(),
            Some(&mut dh),
        );

        add_into(grads.b_z.data_mut(), &daz);
        back_wtx(self.w_z.data(), n, &c.x, &daz, grads.w_z.data_mut(), Some(&mut *dx));
        back_wtx(
            self.u_z.data(),
            n,
            &c.h_prev,
            &daz,
            grads.u_z.data_mut(),
            Some(&mut dh),
        );
        carry.dh = dh;
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// One GRU step from `st`. Returns the new hidden state and the cache needed
/// for the backward pass.
pub fn gru_forward(p: &GruParams, x: &Tensor, st: &CellState) -> Result<(Tensor, GruCache)> {
    check_len("gru_forward", x.len(), p.input_size())?;
    check_len("gru_forward", st.h.len(), p.hidden_size())?;
    let (h, cache) = p.step(x.data(), st.h.data());
    Ok((Tensor::vector(h), cache))
}
