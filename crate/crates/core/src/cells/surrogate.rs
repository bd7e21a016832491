use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::numerics::{heaviside, Tensor};

/// Arctan surrogate for `d/dv heaviside(v)`: `(a/2) / (1 + (π a v / 2)²)`.
///
/// Integrates to one over the real line and peaks at `a/2` for `v = 0`.
pub fn surrogate_scalar(v: f64, slope: f64) -> f64 {
    let q = PI * slope * v / 2.0;
    (slope / 2.0) / (1.0 + q * q)
}

/// Antiderivative of [`surrogate_scalar`], ranging over `(0, 1)`.
pub fn relaxed_spike(v: f64, slope: f64) -> f64 {
    0.5 + (PI * slope * v / 2.0).atan() / PI
}

pub fn surrogate_grad(u_minus_theta: &Tensor, slope: f64) -> Tensor {
    u_minus_theta.map(|v| surrogate_scalar(v, slope))
}

/// How the threshold nonlinearity is evaluated in the forward pass.
///
/// `Heaviside` emits binary spikes and trains through the surrogate.
/// `Relaxed` replaces the step by the surrogate's antiderivative, which makes
/// the backward pass an exact gradient; it exists for gradient checking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeFn {
    #[default]
    Heaviside,
    Relaxed,
}

/// Leaky integrate-and-fire settings shared by a layer of neurons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifNeuron {
    pub beta: f64,
    pub theta: f64,
    pub surrogate_slope: f64,
}

impl Default for LifNeuron {
    fn default() -> Self {
        Self {
            beta: 0.9,
            theta: 1.0,
            surrogate_slope: 2.0,
        }
    }
}

impl LifNeuron {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(crate::Error::config(format!(
                "LIF beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.theta > 0.0) {
            return Err(crate::Error::config(format!(
                "LIF theta must be positive, got {}",
                self.theta
            )));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(crate::Error::config(format!(
                "surrogate slope must be positive, got {}",
                self.surrogate_slope
            )));
        }
        Ok(())
    }

    /// Spike output for membrane `u` (already integrated).
    pub(crate) fn fire(&self, u: f64, mode: SpikeFn) -> f64 {
        match mode {
            SpikeFn::Heaviside => heaviside(u - self.theta),
            SpikeFn::Relaxed => relaxed_spike(u - self.theta, self.surrogate_slope),
        }
    }

    pub(crate) fn dfire(&self, u: f64) -> f64 {
        surrogate_scalar(u - self.theta, self.surrogate_slope)
    }

    /// One integration step for a whole layer: `u ← βu + input − θ s_prev`,
    /// then `s ← fire(u)`. Returns the new `(u, s)`.
    pub(crate) fn integrate(
        &self,
        u_prev: &[f64],
        s_prev: &[f64],
        input: &[f64],
        mode: SpikeFn,
    ) -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = u_prev
            .iter()
            .zip(s_prev)
            .zip(input)
            .map(|((&u, &s), &i)| self.beta * u + i - self.theta * s)
            .collect();
        let s = u.iter().map(|&v| self.fire(v, mode)).collect();
        (u, s)
    }

    /// Reverse of [`integrate`](Self::integrate). `d_s` is the total gradient
    /// on the emitted spikes, `d_u` the gradient arriving on the new membrane
    /// from the next step. Returns `g` = gradient on the integrated input and
    /// overwrites `d_u`/`d_s_prev` with the carries for the previous step.
    pub(crate) fn integrate_back(
        &self,
        u: &[f64],
        d_s: &[f64],
        d_u: &mut [f64],
        d_s_prev: &mut [f64],
    ) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        for j in 0..u.len() {
            g[j] = d_u[j] + d_s[j] * self.dfire(u[j]);
            d_u[j] = self.beta * g[j];
            d_s_prev[j] = -self.theta * g[j];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_at_threshold() {
        for slope in [0.5, 2.0, 7.0] {
            assert_eq!(surrogate_scalar(0.0, slope), slope / 2.0);
        }
    }

    #[test]
    fn tails_vanish() {
        assert!(surrogate_scalar(1e6, 2.0) < 1e-12);
        assert!(surrogate_scalar(-1e6, 2.0) < 1e-12);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn quadrature_over_finite_window() {
        // Over [-100, 100] the arctan tails still hold 2/(100π²) of the mass,
        // so the truncated integral is 0.99797, not 1 ± 1e-3.
        let q = simpson(|v| surrogate_scalar(v, 2.0), -100.0, 100.0, 400_000);
        let closed = 2.0 / PI * (100.0 * PI).atan();
        assert!((q - closed).abs() < 1e-9, "{q} vs {closed}");
        assert!((q - 0.99797).abs() < 1e-5, "{q}");
    }

    #[test]
    fn integrates_to_one() {
        // v = tan(φ) / (π a / 2) maps the real line onto φ ∈ (-π/2, π/2).
        let slope = 2.0;
        let k = PI * slope / 2.0;
        let f = |phi: f64| {
            let v = phi.tan() / k;
            let dv = 1.0 / (k * phi.cos().powi(2));
            surrogate_scalar(v, slope) * dv
        };
        let e = 1e-9;
        let q = simpson(f, -PI / 2.0 + e, PI / 2.0 - e, 20_000);
        assert!((q - 1.0).abs() < 1e-3, "{q}");
    }

    #[test]
    fn relaxed_spike_is_antiderivative() {
        let slope = 2.0;
        for v in [-3.0, -0.2, 0.0, 0.1, 1.7] {
            let h = 1e-6;
            let fd = (relaxed_spike(v + h, slope) - relaxed_spike(v - h, slope)) / (2.0 * h);
            assert!((fd - surrogate_scalar(v, slope)).abs() < 1e-8);
        }
        assert_eq!(relaxed_spike(0.0, slope), 0.5);
    }

    #[test]
    fn tensor_wrapper() {
        let t = surrogate_grad(&Tensor::vector(vec![0.0, 1.0]), 2.0);
        assert_eq!(t.data()[0], 1.0);
        assert!((t.data()[1] - 1.0 / (1.0 + PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = LifNeuron {
            beta: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(LifNeuron::default().validate().is_ok());
    }
}
