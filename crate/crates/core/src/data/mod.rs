//! Recordings of binned spike counts with 2-D cursor velocities: file
//! formats, a synthetic reaching generator, splitting and windowing.

mod io;
mod synth;

pub use io::{load_csv, load_ndr, load_recording, parse_ndr, save_csv, save_ndr, to_ndr_bytes, NDR_MAGIC};
pub use synth::{synth_reaching, SynthParams};

use serde::{Deserialize, Serialize};

use crate::bench::r2_score;
use crate::error::{Error, ParseError, Result};
use crate::layers::lerp_upsample;
use crate::numerics::Tensor;

/// Default bin width: 4 ms.
pub const DEFAULT_BIN_US: u32 = 4000;
/// Evaluation window length in bins.
pub const WINDOW: usize = 1024;

/// `T` bins of `C` spike counts (time-major) with `T × 2` velocities in
/// units per bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub bin_us: u32,
    pub channels: usize,
    pub spikes: Vec<u8>,
    pub velocities: Vec<f32>,
}

impl Recording {
    pub fn new(bin_us: u32, channels: usize, spikes: Vec<u8>, velocities: Vec<f32>) -> Result<Self> {
        if bin_us == 0 {
            return Err(ParseError::Invalid("bin width must be positive".into()).into());
        }
        if channels == 0 {
            return Err(ParseError::Invalid("recording needs at least one channel".into()).into());
        }
        if spikes.len() % channels != 0 || velocities.len() != spikes.len() / channels * 2 {
            return Err(ParseError::Invalid(format!(
                "{} spike values and {} velocity values do not share T for C={channels}",
                spikes.len(),
                velocities.len()
            ))
            .into());
        }
        Ok(Self {
            bin_us,
            channels,
            spikes,
            velocities,
        })
    }

    /// Number of bins `T`.
    pub fn len(&self) -> usize {
        self.velocities.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bins `[start, end)` as a new recording.
    pub fn slice(&self, start: usize, end: usize) -> Recording {
        let c = self.channels;
        Recording {
            bin_us: self.bin_us,
            channels: c,
            spikes: self.spikes[start * c..end * c].to_vec(),
            velocities: self.velocities[start * 2..end * 2].to_vec(),
        }
    }

    /// Spike counts of bins `[start, start + len)` as a `C × len` tensor.
    pub fn spike_tensor(&self, start: usize, len: usize) -> Tensor {
        let c = self.channels;
        let mut out = vec![0.0; c * len];
        for t in 0..len {
            let row = &self.spikes[(start + t) * c..(start + t + 1) * c];
            for (ch, &v) in row.iter().enumerate() {
                out[ch * len + t] = v as f64;
            }
        }
        Tensor::new(vec![c, len], out).expect("shape")
    }

    /// Velocities of bins `[start, start + len)` as `len × 2`.
    pub fn velocity_tensor(&self, start: usize, len: usize) -> Tensor {
        let v = self.velocities[start * 2..(start + len) * 2]
            .iter()
            .map(|&x| x as f64)
            .collect();
        Tensor::new(vec![len, 2], v).expect("shape")
    }

    /// Spike counts of one bin.
    pub fn bin(&self, t: usize) -> Tensor {
        let c = self.channels;
        Tensor::vector(self.spikes[t * c..(t + 1) * c].iter().map(|&v| v as f64).collect())
    }
}

/// One `C × L` input with its `L × 2` target.
#[derive(Clone, Debug)]
pub struct Window {
    pub start: usize,
    pub input: Tensor,
    pub target: Tensor,
}

/// Windows of `len` bins starting every `hop` bins; a trailing partial
/// window is dropped.
pub fn windows_with_hop(r: &Recording, len: usize, hop: usize) -> Result<Vec<Window>> {
    if len == 0 || hop == 0 {
        return Err(Error::config("window length and hop must be positive"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= r.len() {
        out.push(Window {
            start,
            input: r.spike_tensor(start, len),
            target: r.velocity_tensor(start, len),
        });
        start += hop;
    }
    Ok(out)
}

/// Non-overlapping windows of `len` bins.
pub fn windows(r: &Recording, len: usize) -> Result<Vec<Window>> {
    windows_with_hop(r, len, len)
}

/// Train/validation/test fractions of a contiguous split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.5,
            val: 0.25,
            test: 0.25,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions {f:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Contiguous train → val → test partition; each part is truncated to a
/// multiple of `window` bins, so the parts concatenate to a prefix.
pub fn split_with(r: &Recording, spec: SplitSpec, window: usize) -> Result<(Recording, Recording, Recording)> {
    spec.validate()?;
    let t = r.len();
    let part = |f: f64| ((f * t as f64).floor() as usize / window) * window;
    let sizes = [part(spec.train), part(spec.val), part(spec.test)];
    for (name, n) in ["train", "val", "test"].iter().zip(sizes) {
        if n < window {
            return Err(Error::config(format!(
                "{name} part of a {t}-bin recording is shorter than {window} bins"
            )));
        }
    }
    let a = sizes[0];
    let b = a + sizes[1];
    let c = b + sizes[2];
    Ok((r.slice(0, a), r.slice(a, b), r.slice(b, c)))
}

pub fn split(r: &Recording, spec: SplitSpec) -> Result<(Recording, Recording, Recording)> {
    split_with(r, spec, WINDOW)
}

/// Reconstruction of `velocities` (`T × 2`) from every `s`-th sample by
/// linear interpolation. Keypoints sit at `0, s, …, T - s`; the closing
/// keypoint is placed so that the last segment passes through the final
/// sample, so both endpoints are reproduced exactly.
pub fn interp_reconstruct(velocities: &Tensor, stride: usize) -> Result<Tensor> {
    let shape = velocities.shape();
    if shape.len() != 2 || shape[1] != 2 {
        return Err(Error::dim("interp_oracle_r2", shape, &[0, 2]));
    }
    let t = shape[0];
    if stride == 0 || t % stride != 0 || t < 2 * stride {
        return Err(Error::config(format!(
            "stride {stride} needs T a multiple of it and T >= 2s (T = {t})"
        )));
    }
    let k = t / stride + 1;
    let mut kp = Vec::with_capacity(k * 2);
    for j in 0..k - 1 {
        kp.extend_from_slice(velocities.row(j * stride));
    }
    for d in 0..2 {
        let last = velocities.at2(t - 1, d);
        let v = if stride == 1 {
            last
        } else {
            let a = velocities.at2(t - stride, d);
            a + (last - a) * stride as f64 / (stride - 1) as f64
        };
        kp.push(v);
    }
    lerp_upsample(&Tensor::new(vec![k, 2], kp)?, stride)
}

/// R² of [`interp_reconstruct`] against the original velocities.
pub fn interp_oracle_r2(velocities: &Tensor, stride: usize) -> Result<f64> {
    r2_score(&interp_reconstruct(velocities, stride)?, velocities)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, c: usize) -> Recording {
        let spikes = (0..t * c).map(|i| (i % 3) as u8).collect();
        let vel = (0..t * 2).map(|i| i as f32 * 0.5).collect();
        Recording::new(DEFAULT_BIN_US, c, spikes, vel).unwrap()
    }

    #[test]
    fn split_sizes() {
        let r = rec(8192, 2);
        let (a, b, c) = split(&r, SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (4096, 2048, 2048));
        let mut joined = a.spikes.clone();
        joined.extend(&b.spikes);
        joined.extend(&c.spikes);
        assert_eq!(joined, r.spikes[..joined.len()]);
    }

    #[test]
    fn split_truncates_and_stays_a_prefix() {
        let r = rec(9000, 1);
        let (a, b, c) = split(&r, SplitSpec { train: 0.4, val: 0.3, test: 0.3 }).unwrap();
        for p in [&a, &b, &c] {
            assert_eq!(p.len() % WINDOW, 0);
        }
        let mut v = a.velocities.clone();
        v.extend(&b.velocities);
        v.extend(&c.velocities);
        assert_eq!(v, r.velocities[..v.len()]);
    }

    #[test]
    fn split_too_short_is_config_error() {
        let r = rec(2048, 1);
        assert!(matches!(split(&r, SplitSpec::default()), Err(Error::Config(_))));
        let bad = SplitSpec { train: 0.5, val: 0.5, test: 0.5 };
        assert!(split(&rec(8192, 1), bad).is_err());
    }

    #[test]
    fn windows_are_non_overlapping() {
        let r = rec(3000, 2);
        let w = windows(&r, 1024).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].start, 1024);
        assert_eq!(w[1].input.shape(), &[2, 1024]);
        assert_eq!(w[1].input.at2(1, 0), r.spikes[1024 * 2 + 1] as f64);
        assert_eq!(w[1].target.at2(3, 1), r.velocities[(1024 + 3) * 2 + 1] as f64);
        assert_eq!(windows_with_hop(&r, 1024, 512).unwrap().len(), 4);
    }

    #[test]
    fn interp_identity_and_ramp() {
        let mut v = Vec::new();
        for t in 0..64 {
            v.push((t as f64 * 0.3).sin());
            v.push((t as f64 * 0.17).cos());
        }
        let wave = Tensor::new(vec![64, 2], v).unwrap();
        assert_eq!(interp_oracle_r2(&wave, 1).unwrap(), 1.0);

        let ramp = Tensor::new(
            vec![64, 2],
            (0..64).flat_map(|t| [t as f64 * 0.5 - 3.0, 7.0 - 2.0 * t as f64]).collect(),
        )
        .unwrap();
        for s in [2, 4, 8, 16, 32] {
            let r = interp_oracle_r2(&ramp, s).unwrap();
            assert!((r - 1.0).abs() < 1e-12, "s={s}: {r}");
        }
        assert!(interp_oracle_r2(&wave, 4).unwrap() > interp_oracle_r2(&wave, 8).unwrap());
        assert!(interp_oracle_r2(&wave, 5).is_err());
    }

    #[test]
    fn tensors_index_time_major_storage() {
        let r = rec(10, 3);
        let x = r.spike_tensor(2, 4);
        assert_eq!(x.shape(), &[3, 4]);
        assert_eq!(x.at2(2, 1), r.spikes[3 * 3 + 2] as f64);
        assert_eq!(r.bin(3).data(), x.data().chunks(4).map(|c| c[1]).collect::<Vec<_>>());
    }
}
