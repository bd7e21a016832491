use serde::{Deserialize, Serialize};

use super::Recording;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Synthetic centre-out-style reaching with cosine-tuned Poisson neurons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Baseline firing rate `b` in Hz.
    pub base_hz: f64,
    /// Tuning depth `m` in Hz per unit of velocity (mm per bin). With the
    /// default reach geometry peak speeds are about 1 mm/bin, giving peak
    /// rates near 40 Hz.
    pub gain_hz: f64,
    /// Targets are uniform in `[-workspace_mm, workspace_mm]²`.
    pub workspace_mm: f64,
    /// Reach duration range in bins, inclusive.
    pub reach_bins: (usize, usize),
    /// Hold between reaches in bins, inclusive.
    pub hold_bins: (usize, usize),
    pub bin_us: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            base_hz: 10.0,
            gain_hz: 30.0,
            workspace_mm: 100.0,
            reach_bins: (100, 250),
            hold_bins: (0, 50),
            bin_us: 4000,
        }
    }
}

/// Minimum-jerk position profile on `[0, 1]`.
fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// Cursor velocities (mm per bin) for `t` bins of successive reaches.
fn reach_velocities(rng: &mut Rng, t: usize, p: &SynthParams) -> Vec<f32> {
    let mut v = Vec::with_capacity(t * 2 + 512);
    let mut pos = [0.0f64; 2];
    while v.len() < t * 2 {
        let w = p.workspace_mm;
        let target = [rng.uniform_range(-w, w), rng.uniform_range(-w, w)];
        let n = rng.int_range(p.reach_bins.0, p.reach_bins.1).max(1);
        for k in 0..n {
            let step = min_jerk((k + 1) as f64 / n as f64) - min_jerk(k as f64 / n as f64);
            v.push(((target[0] - pos[0]) * step) as f32);
            v.push(((target[1] - pos[1]) * step) as f32);
        }
        pos = target;
        let hold = rng.int_range(p.hold_bins.0, p.hold_bins.1);
        v.extend(std::iter::repeat(0.0).take(hold * 2));
    }
    v.truncate(t * 2);
    v
}

/// `seconds` of reaching at `params.bin_us` resolution with `channels`
/// neurons. Channel `i` prefers direction `2πi/C` and fires as
/// `Poisson(max(0, b + m·v·dᵢ)·Δt)` per bin, clamped to 255.
pub fn synth_reaching(rng: &mut Rng, seconds: f64, channels: usize, params: &SynthParams) -> Result<Recording> {
    if !(seconds > 0.0) || channels < 2 || params.bin_us == 0 {
        return Err(Error::config(format!(
            "synth_reaching needs seconds > 0 and C >= 2 (got {seconds}, {channels})"
        )));
    }
    if params.reach_bins.0 > params.reach_bins.1 || params.hold_bins.0 > params.hold_bins.1 {
        return Err(Error::config("reach and hold ranges must be ordered"));
    }
    let dt = params.bin_us as f64 * 1e-6;
    let t = (seconds / dt).round() as usize;
    let velocities = reach_velocities(rng, t, params);
    let dirs: Vec<(f64, f64)> = (0..channels)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / channels as f64;
            (th.cos(), th.sin())
        })
        .collect();
    let mut spikes = Vec::with_capacity(t * channels);
    for k in 0..t {
        let (vx, vy) = (velocities[2 * k] as f64, velocities[2 * k + 1] as f64);
        for &(c, s) in &dirs {
            let rate = (params.base_hz + params.gain_hz * (vx * c + vy * s)).max(0.0);
            spikes.push(rng.poisson(rate * dt).min(255) as u8);
        }
    }
    Recording::new(params.bin_us, channels, spikes, velocities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let p = SynthParams::default();
        let a = synth_reaching(&mut Rng::new(7), 30.0, 8, &p).unwrap();
        let b = synth_reaching(&mut Rng::new(7), 30.0, 8, &p).unwrap();
        assert_eq!(a, b);
        let c = synth_reaching(&mut Rng::new(8), 30.0, 8, &p).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 7500);
    }

    #[test]
    fn reaches_stay_in_workspace() {
        let p = SynthParams::default();
        let r = synth_reaching(&mut Rng::new(1), 120.0, 4, &p).unwrap();
        let (mut x, mut y) = (0.0f64, 0.0f64);
        let mut peak = 0.0f64;
        for t in 0..r.len() {
            x += r.velocities[2 * t] as f64;
            y += r.velocities[2 * t + 1] as f64;
            assert!(x.abs() <= 100.0 + 1e-3 && y.abs() <= 100.0 + 1e-3);
            peak = peak.max(r.velocities[2 * t].hypot(r.velocities[2 * t + 1]) as f64);
        }
        assert!(peak > 0.5 && peak < 5.0, "{peak}");
    }

    #[test]
    fn untuned_rate_matches_baseline() {
        let p = SynthParams {
            gain_hz: 0.0,
            ..Default::default()
        };
        let r = synth_reaching(&mut Rng::new(3), 200.0, 16, &p).unwrap();
        let n = r.spikes.len() as f64;
        let mean = r.spikes.iter().map(|&v| v as f64).sum::<f64>() / n;
        let lambda = 10.0 * 0.004;
        // Poisson: variance equals mean
        let sigma = (lambda / n).sqrt();
        assert!((mean - lambda).abs() < 3.0 * sigma, "{mean} vs {lambda}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = SynthParams::default();
        assert!(synth_reaching(&mut Rng::new(0), 0.0, 8, &p).is_err());
        assert!(synth_reaching(&mut Rng::new(0), 1.0, 1, &p).is_err());
    }
}
