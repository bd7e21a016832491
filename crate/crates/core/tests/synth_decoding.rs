//! The synthetic recordings carry decodable velocity information: a
//! population-vector decoder (smoothed counts, least squares) fitted on the
//! first half recovers velocities on the second half.

use nalgebra::{DMatrix, DVector};
use spikedec::bench::r2_score;
use spikedec::data::{synth_reaching, Recording, SynthParams};
use spikedec::numerics::{Rng, Tensor};

/// Causal boxcar average of each channel over `w` bins, plus a constant
/// column.
fn features(r: &Recording, w: usize) -> DMatrix<f64> {
    let (t, c) = (r.len(), r.channels);
    let mut m = DMatrix::zeros(t, c + 1);
    let mut acc = vec![0.0; c];
    for k in 0..t {
        for ch in 0..c {
            acc[ch] += r.spikes[k * c + ch] as f64;
            if k >= w {
                acc[ch] -= r.spikes[(k - w) * c + ch] as f64;
            }
            m[(k, ch)] = acc[ch] / w.min(k + 1) as f64;
        }
        m[(k, c)] = 1.0;
    }
    m
}

fn decode_r2(params: &SynthParams, seed: u64) -> f64 {
    let r = synth_reaching(&mut Rng::new(seed), 300.0, 96, params).unwrap();
    let x = features(&r, 25);
    let half = r.len() / 2;
    let (train, test) = (x.rows(0, half), x.rows(half, r.len() - half));
    let mut pred = Vec::new();
    let gram = (train.transpose() * &train).cholesky().expect("full-rank features");
    let mut cols = Vec::new();
    for d in 0..2 {
        let y = DVector::from_iterator(half, (0..half).map(|k| r.velocities[2 * k + d] as f64));
        let beta = gram.solve(&(train.transpose() * y));
        cols.push(&test * beta);
    }
    for k in 0..test.nrows() {
        pred.push(cols[0][k]);
        pred.push(cols[1][k]);
    }
    let n = test.nrows();
    let target = r.velocity_tensor(half, n);
    r2_score(&Tensor::new(vec![n, 2], pred).unwrap(), &target).unwrap()
}

#[test]
fn population_vector_decodes_tuned_recordings() {
    for seed in [1, 2] {
        let r2 = decode_r2(&SynthParams::default(), seed);
        assert!(r2 >= 0.7, "seed {seed}: {r2}");
    }
}

#[test]
fn untuned_recordings_carry_no_velocity_information() {
    let p = SynthParams {
        gain_hz: 0.0,
        ..SynthParams::default()
    };
    let r2 = decode_r2(&p, 3);
    assert!(r2 < 0.05, "{r2}");
}
