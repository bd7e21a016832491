//! Incremental inference: one keypoint per receptive-field stride, emitting
//! the interpolated segment between consecutive keypoints.
//!
//! Each keypoint is computed from the last `rf` input bins only. Positions
//! left of the stream start are treated exactly like the batch path's zero
//! padding at every layer, so emissions match a batch forward over the same
//! bins as long as the batch path's right padding is not involved. The
//! recurrent state is never reset.

use std::collections::VecDeque;

use crate::cells::CellState;
use crate::error::{Error, Result};
use crate::layers::{conv1d_forward, linear_forward, maxpool1d, Activation, Conv1dParams};
use crate::model::{Model, BIN_MS};
use crate::numerics::Tensor;

/// Index range `[lo, hi]` needed at the input of each conv block to produce
/// keypoint 0, in that block's own input coordinates.
fn block_ranges(model: &Model) -> Vec<(isize, isize)> {
    let mut ranges = Vec::new();
    let (mut lo, mut hi) = (0isize, 0isize);
    for b in model.config.conv_blocks.iter().rev() {
        if b.pool {
            lo *= 2;
            hi = 2 * hi + 1;
        }
        lo -= b.padding as isize;
        hi += b.kernel as isize - 1 - b.padding as isize;
        ranges.push((lo, hi));
    }
    ranges.reverse();
    ranges
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamState {
    pub rf: usize,
    pub stride: usize,
    /// Bins left of the stream start that feed keypoint 0.
    pub left_padding: usize,
    /// The last `rf` bins, oldest first; starts as `left_padding` zero bins.
    pub ring: VecDeque<Vec<f64>>,
    pub state: CellState,
    pub prev_keypoint: Option<[f64; 2]>,
    pub bins_seen: usize,
    /// Index of the next keypoint to compute.
    pub next_keypoint: usize,
}

/// Fresh stream for `model`.
pub fn stream_init(model: &Model) -> Result<StreamState> {
    model.config.validate()?;
    let (rf, stride) = model.receptive_field();
    let left_padding = model.config.left_padding();
    let c = model.config.input_channels;
    Ok(StreamState {
        rf,
        stride,
        left_padding,
        ring: (0..left_padding).map(|_| vec![0.0; c]).collect(),
        state: model.recurrent.init_state(),
        prev_keypoint: None,
        bins_seen: 0,
        next_keypoint: 0,
    })
}

/// Conv stack over the current ring, yielding the feature vector of
/// keypoint `j`.
fn keypoint_features(model: &Model, st: &StreamState, j: usize) -> Result<Vec<f64>> {
    let c = model.config.input_channels;
    let rf = st.rf;
    let mut x = vec![0.0; c * rf];
    for (t, bin) in st.ring.iter().enumerate() {
        for (ch, &v) in bin.iter().enumerate() {
            x[ch * rf + t] = v;
        }
    }
    let mut cur = Tensor::new(vec![c, rf], x)?;
    let ranges = block_ranges(model);
    let mut shift = (j * st.stride) as isize;
    for ((p, b), &(lo, _)) in model.convs.iter().zip(&model.config.conv_blocks).zip(&ranges) {
        // positions below zero are padding in the batch path
        let start = lo + shift;
        if start < 0 {
            let len = cur.cols();
            let pad = ((-start) as usize).min(len);
            for ch in 0..cur.rows() {
                cur.row_mut(ch)[..pad].fill(0.0);
            }
        }
        let valid = Conv1dParams {
            kernel: p.kernel.clone(),
            bias: p.bias.clone(),
            padding: 0,
        };
        let (y, _) = conv1d_forward(&valid, &cur, Activation::Relu)?;
        cur = if b.pool { maxpool1d(&y)?.0 } else { y };
        if b.pool {
            shift /= 2;
        }
    }
    if cur.cols() != 1 {
        return Err(Error::Evaluation(format!(
            "receptive window produced {} keypoints",
            cur.cols()
        )));
    }
    Ok(cur.data().to_vec())
}

/// Feeds one bin of `C` spike counts. Returns the `s × 2` interpolated
/// velocities of the segment closed by a new keypoint, if any.
pub fn stream_push(model: &Model, st: &mut StreamState, bin: &Tensor) -> Result<Option<Tensor>> {
    let c = model.config.input_channels;
    if bin.len() != c {
        return Err(Error::dim("stream_push", bin.shape(), &[c]));
    }
    if !bin.is_finite() {
        return Err(Error::Evaluation("bin contains non-finite values".into()));
    }
    st.ring.push_back(bin.data().to_vec());
    while st.ring.len() > st.rf {
        st.ring.pop_front();
    }
    st.bins_seen += 1;

    // keypoint j needs input bins up to j·s - left_padding + rf - 1
    let needed = (st.next_keypoint * st.stride + st.rf) as isize - st.left_padding as isize;
    if (st.bins_seen as isize) < needed {
        return Ok(None);
    }
    let feat = keypoint_features(model, st, st.next_keypoint)?;
    let (next, _) = model
        .recurrent
        .step(&feat, &st.state, model.spike_fn);
    let (kp, _) = linear_forward(&model.readout, &next.h)?;
    st.state = next;
    st.next_keypoint += 1;
    let kp = [kp.data()[0], kp.data()[1]];
    let out = st.prev_keypoint.map(|a| {
        let s = st.stride;
        let v = (0..s)
            .flat_map(|t| {
                let f = t as f64 / s as f64;
                [a[0] + f * (kp[0] - a[0]), a[1] + f * (kp[1] - a[1])]
            })
            .collect();
        Tensor::new(vec![s, 2], v).expect("shape")
    });
    st.prev_keypoint = Some(kp);
    Ok(out)
}

/// `(latency_ms, rate_hz)`: one receptive field of bins to fill, one
/// keypoint per stride.
pub fn stream_latency(model: &Model) -> (f64, f64) {
    let (rf, stride) = model.receptive_field();
    (rf as f64 * BIN_MS, 1000.0 / (stride as f64 * BIN_MS))
}
