//! NeuroBench-style metrics: R², footprint, sparsity and operation counts.
//!
//! Operation counting rule, applied to every synaptic layer in a trace:
//!
//! * Dense: every weight product at every output position, whether or not
//!   the operands are zero, plus one operation per bias element per
//!   position.
//! * Effective: a product counts only when both the weight and the input
//!   are nonzero; a bias element counts when it is nonzero. Operations are
//!   accumulates (ACs) when the layer input is a spike signal and
//!   multiply-accumulates (MACs) otherwise.
//! * Elementwise gate and state arithmetic is not counted.
//! * Totals are divided by the window length in bins.

mod trace;

pub use trace::{ActivationRecord, ActivationTrace, SynapseRecord, SynapseShape};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{windows, Recording};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Tensor;

/// Mean over the two output dimensions of `1 - SS_res / SS_tot`.
pub fn r2_score(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() || target.shape().len() != 2 {
        return Err(Error::dim("r2_score", pred.shape(), target.shape()));
    }
    let (t, d) = (target.rows(), target.cols());
    if t < 2 {
        return Err(Error::config("r2_score needs at least two samples"));
    }
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..t).map(|i| target.at2(i, c)).sum::<f64>() / t as f64;
        let ss_tot: f64 = (0..t).map(|i| (target.at2(i, c) - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            return Err(Error::UndefinedVariance(c));
        }
        let ss_res: f64 = (0..t).map(|i| (pred.at2(i, c) - target.at2(i, c)).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / d as f64)
}

/// Bytes at 4 bytes per element.
pub fn footprint_bytes(param_elements: usize, buffer_elements: usize) -> usize {
    4 * (param_elements + buffer_elements)
}

/// Parameters plus the `C × seq_len` input buffer and the recurrent state.
pub fn footprint(model: &Model) -> usize {
    let c = &model.config;
    footprint_bytes(
        model.param_count(),
        c.input_channels * c.seq_len + model.recurrent.state_len(),
    )
}

/// Fraction of exactly-zero synaptic weights (biases excluded).
pub fn connection_sparsity(model: &Model) -> f64 {
    let (mut zeros, mut total) = (0usize, 0usize);
    for name in model.weight_names() {
        let t = model.tensor(&name).expect("weight exists");
        zeros += t.count_zeros();
        total += t.len();
    }
    if total == 0 {
        0.0
    } else {
        zeros as f64 / total as f64
    }
}

/// Zero and total element counts over every activation layer.
pub fn activation_counts(trace: &ActivationTrace) -> (usize, usize) {
    trace.activations.iter().fold((0, 0), |(z, n), a| {
        (z + a.values.count_zeros(), n + a.values.len())
    })
}

/// Fraction of exactly-zero activations pooled over all layers and steps.
pub fn activation_sparsity(trace: &ActivationTrace) -> Result<f64> {
    let (z, n) = activation_counts(trace);
    if n == 0 {
        return Err(Error::Usage("activation trace is empty".into()));
    }
    Ok(z as f64 / n as f64)
}

/// Operation totals; divide by the window length for per-step values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub dense: f64,
    pub macs: f64,
    pub acs: f64,
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.dense += o.dense;
        self.macs += o.macs;
        self.acs += o.acs;
    }
}

impl OpCounts {
    fn scaled(self, k: f64) -> Self {
        Self {
            dense: self.dense * k,
            macs: self.macs * k,
            acs: self.acs * k,
        }
    }
}

fn mismatch(layer: &str, msg: impl std::fmt::Display) -> Error {
    Error::Usage(format!("trace does not match the model at {layer}: {msg}"))
}

/// Totals (not per-step) for one synaptic record.
fn layer_ops(model: &Model, rec: &SynapseRecord) -> Result<(u64, u64)> {
    let weights = rec
        .weights
        .iter()
        .map(|n| model.tensor(n).ok_or_else(|| mismatch(&rec.layer, format!("no tensor {n}"))))
        .collect::<Result<Vec<_>>>()?;
    let biases = rec
        .biases
        .iter()
        .map(|n| model.tensor(n).ok_or_else(|| mismatch(&rec.layer, format!("no tensor {n}"))))
        .collect::<Result<Vec<_>>>()?;
    let x = &rec.input;
    if x.shape().len() != 2 {
        return Err(mismatch(&rec.layer, "input must be 2-D"));
    }
    let (mut dense, mut effective) = (0u64, 0u64);
    let positions = match rec.shape {
        SynapseShape::Dense => {
            let (rows, fan_in) = (x.rows(), x.cols());
            for w in &weights {
                if w.shape().len() != 2 || w.shape()[0] != fan_in {
                    return Err(mismatch(&rec.layer, format!("weight {:?} vs fan-in {fan_in}", w.shape())));
                }
                let fan_out = w.shape()[1];
                dense += (rows * fan_in * fan_out) as u64;
                let row_nnz: Vec<u64> = (0..fan_in)
                    .map(|i| w.row(i).iter().filter(|v| **v != 0.0).count() as u64)
                    .collect();
                for r in 0..rows {
                    for (i, &xv) in x.row(r).iter().enumerate() {
                        if xv != 0.0 {
                            effective += row_nnz[i];
                        }
                    }
                }
            }
            rows
        }
        SynapseShape::Conv { padding } => {
            let [w] = weights.as_slice() else {
                return Err(mismatch(&rec.layer, "conv layers carry one kernel"));
            };
            let (o_n, i_n, k_n) = match w.shape() {
                [o, i, k] => (*o, *i, *k),
                s => return Err(mismatch(&rec.layer, format!("kernel shape {s:?}"))),
            };
            let (c, len) = (x.rows(), x.cols());
            if c != i_n {
                return Err(mismatch(&rec.layer, format!("{c} input channels, kernel expects {i_n}")));
            }
            let out_len = (len + 2 * padding)
                .checked_sub(k_n)
                .map(|v| v + 1)
                .ok_or_else(|| mismatch(&rec.layer, "kernel longer than padded input"))?;
            dense += (out_len * o_n * i_n * k_n) as u64;
            // nonzero output channels per (input channel, tap)
            let mut nnz = vec![0u64; i_n * k_n];
            for o in 0..o_n {
                for i in 0..i_n {
                    for j in 0..k_n {
                        if w.data()[(o * i_n + i) * k_n + j] != 0.0 {
                            nnz[i * k_n + j] += 1;
                        }
                    }
                }
            }
            for i in 0..i_n {
                for (s, &xv) in x.row(i).iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    // input s meets tap j at output t = s + padding - j
                    for j in 0..k_n {
                        let t = s + padding;
                        if t >= j && t - j < out_len {
                            effective += nnz[i * k_n + j];
                        }
                    }
                }
            }
            out_len
        }
    };
    for b in &biases {
        dense += (positions * b.len()) as u64;
        effective += (positions * (b.len() - b.count_zeros())) as u64;
    }
    Ok((dense, effective))
}

/// Per-step Dense, MAC and AC counts of one forward pass.
pub fn count_ops(model: &Model, trace: &ActivationTrace) -> Result<OpCounts> {
    if trace.seq_len == 0 {
        return Err(Error::Usage("trace has no sequence length".into()));
    }
    let mut total = OpCounts::default();
    for rec in &trace.synapses {
        let (dense, eff) = layer_ops(model, rec)?;
        total.dense += dense as f64;
        if rec.binary_input {
            total.acs += eff as f64;
        } else {
            total.macs += eff as f64;
        }
    }
    Ok(total.scaled(1.0 / trace.seq_len as f64))
}

/// One row of a Table-3-style results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub footprint_bytes: usize,
    pub connection_sparsity: f64,
    pub activation_sparsity: f64,
    pub dense: f64,
    pub macs: f64,
    pub acs: f64,
    pub r2: f64,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "footprint_bytes,connection_sparsity,activation_sparsity,dense,macs,acs,r2";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.footprint_bytes,
            self.connection_sparsity,
            self.activation_sparsity,
            self.dense,
            self.macs,
            self.acs,
            self.r2
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

struct WindowResult {
    pred: Tensor,
    target: Tensor,
    ops: OpCounts,
    zeros: usize,
    acts: usize,
}

/// Forward over every non-overlapping window of `test`; counters are
/// averaged over windows and R² is taken over the concatenated outputs.
pub fn run_bench(model: &Model, test: &Recording) -> Result<BenchReport> {
    if test.channels != model.config.input_channels {
        return Err(Error::dim(
            "run_bench",
            &[test.channels],
            &[model.config.input_channels],
        ));
    }
    let wins = windows(test, model.config.seq_len)?;
    if wins.is_empty() {
        return Err(Error::config(format!(
            "test recording of {} bins holds no {}-bin window",
            test.len(),
            model.config.seq_len
        )));
    }
    let results = wins
        .par_iter()
        .map(|w| {
            let (pred, trace) = model.forward(&w.input)?;
            let ops = count_ops(model, &trace)?;
            let (zeros, acts) = activation_counts(&trace);
            Ok(WindowResult {
                pred,
                target: w.target.clone(),
                ops,
                zeros,
                acts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = results.len();
    let mut ops = OpCounts::default();
    let (mut zeros, mut acts) = (0usize, 0usize);
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for r in &results {
        ops += r.ops;
        zeros += r.zeros;
        acts += r.acts;
        pred.extend_from_slice(r.pred.data());
        target.extend_from_slice(r.target.data());
    }
    let rows = pred.len() / 2;
    let r2 = r2_score(&Tensor::new(vec![rows, 2], pred)?, &Tensor::new(vec![rows, 2], target)?)?;
    let ops = ops.scaled(1.0 / n as f64);
    Ok(BenchReport {
        footprint_bytes: footprint(model),
        connection_sparsity: connection_sparsity(model),
        activation_sparsity: if acts == 0 { 0.0 } else { zeros as f64 / acts as f64 },
        dense: ops.dense,
        macs: ops.macs,
        acs: ops.acs,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::RecurrenceKind;
    use crate::model::{ModelConfig, Track};

    fn t2(rows: &[[f64; 2]]) -> Tensor {
        Tensor::new(vec![rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn r2_examples() {
        let target = t2(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(r2_score(&target, &target).unwrap(), 1.0);
        let mean = t2(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(r2_score(&mean, &target).unwrap(), 0.0);
        let pred = t2(&[[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]);
        assert!((r2_score(&pred, &target).unwrap() - 0.5).abs() < 1e-15);
        let flat = t2(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]);
        assert!(matches!(r2_score(&pred, &flat), Err(Error::UndefinedVariance(0))));
    }

    #[test]
    fn footprint_of_a_small_linear_layer() {
        // 3 → 2 linear with bias: 6 + 2 elements
        assert_eq!(footprint_bytes(3 * 2 + 2, 0), 32);
    }

    #[test]
    fn connection_sparsity_counts_zeroed_weights() {
        let mut m = Model::new(ModelConfig::preset(Track::Track2, RecurrenceKind::Gru)).unwrap();
        assert_eq!(connection_sparsity(&m), 0.0);
        let names = m.weight_names();
        for (n, t) in m.named_mut() {
            if names.contains(&n) {
                let half = t.len() / 2;
                t.data_mut()[..half].fill(0.0);
            }
        }
        // every weight tensor has an even element count
        assert_eq!(connection_sparsity(&m), 0.5);
    }

    #[test]
    fn activation_sparsity_examples() {
        let mut tr = ActivationTrace::new(4);
        tr.activations.push(ActivationRecord {
            layer: "a".into(),
            values: Tensor::zeros(&[2, 3]),
        });
        assert_eq!(activation_sparsity(&tr).unwrap(), 1.0);
        tr.activations.push(ActivationRecord {
            layer: "b".into(),
            values: Tensor::filled(&[6], 1.0),
        });
        assert_eq!(activation_sparsity(&tr).unwrap(), 0.5);
        assert!(activation_sparsity(&ActivationTrace::new(4)).is_err());
    }

    fn linear_model() -> Model {
        let mut m = Model::new(ModelConfig::preset(Track::Track2, RecurrenceKind::Gru)).unwrap();
        m.readout.w = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75]).unwrap();
        m
    }

    fn linear_trace(x: Vec<f64>, binary: bool) -> ActivationTrace {
        let mut tr = ActivationTrace::new(1);
        tr.synapses.push(SynapseRecord {
            layer: "lin".into(),
            shape: SynapseShape::Dense,
            weights: vec!["readout.w".into()],
            biases: vec![],
            binary_input: binary,
            input: Tensor::new(vec![1, 3], x).unwrap(),
        });
        tr
    }

    #[test]
    fn linear_layer_counts() {
        let m = linear_model();
        let c = count_ops(&m, &linear_trace(vec![0.3, -1.2, 2.0], false)).unwrap();
        assert_eq!(c, OpCounts { dense: 6.0, macs: 6.0, acs: 0.0 });
        let c = count_ops(&m, &linear_trace(vec![1.0, 0.0, 1.0], true)).unwrap();
        assert_eq!(c, OpCounts { dense: 6.0, macs: 0.0, acs: 4.0 });
    }

    #[test]
    fn mismatched_trace_is_usage_error() {
        let m = linear_model();
        let mut tr = linear_trace(vec![1.0, 0.0, 1.0], true);
        tr.synapses[0].weights = vec!["nope".into()];
        assert!(matches!(count_ops(&m, &tr), Err(Error::Usage(_))));
        let mut tr = linear_trace(vec![1.0, 0.0, 1.0], true);
        tr.synapses[0].input = Tensor::zeros(&[1, 4]);
        assert!(matches!(count_ops(&m, &tr), Err(Error::Usage(_))));
    }

    #[test]
    fn report_json_round_trip() {
        let r = BenchReport {
            footprint_bytes: 413704,
            connection_sparsity: 0.0,
            activation_sparsity: 0.4,
            dense: 4947.25,
            macs: 3000.5,
            acs: 200.125,
            r2: 0.61,
        };
        let back: BenchReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.csv_row().split(',').count(), BenchReport::CSV_HEADER.split(',').count());
    }
}
