use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::{LifNeuron, RecurrenceKind};
use crate::error::{Error, Result};
use crate::layers::conv_out_len;

/// Input bin width in milliseconds.
pub const BIN_MS: f64 = 4.0;

fn default_true() -> bool {
    true
}

/// Convolution → ReLU → (optional) max-pool-by-2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    #[serde(default = "default_true")]
    pub pool: bool,
}

impl ConvBlock {
    pub const fn new(out_channels: usize, kernel: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel,
            padding,
            pool: true,
        }
    }

    pub const fn unpooled(out_channels: usize, kernel: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel,
            padding,
            pool: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Track1,
    Track2,
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Track::Track1 => "track1",
            Track::Track2 => "track2",
        })
    }
}

impl FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "track1" | "t1" | "1" => Ok(Track::Track1),
            "track2" | "t2" | "2" => Ok(Track::Track2),
            other => Err(Error::config(format!("unknown track {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub recurrence: RecurrenceKind,
    pub input_channels: usize,
    pub seq_len: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub hidden_size: usize,
    pub keypoint_stride: usize,
    pub lif: LifNeuron,
    pub seed: u64,
}

/// Length of the sequence after every conv and pool stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageLengths(pub Vec<usize>);

impl ModelConfig {
    /// The two published architectures.
    pub fn preset(track: Track, recurrence: RecurrenceKind) -> Self {
        let (conv_blocks, hidden_size, keypoint_stride) = match track {
            Track::Track1 => (
                vec![
                    ConvBlock::new(32, 3, 5),
                    ConvBlock::new(32, 6, 3),
                    ConvBlock::new(32, 12, 6),
                ],
                64,
                8,
            ),
            Track::Track2 => (vec![ConvBlock::new(10, 3, 3), ConvBlock::new(10, 3, 1)], 20, 4),
        };
        Self {
            recurrence,
            input_channels: 96,
            seq_len: 1024,
            conv_blocks,
            hidden_size,
            keypoint_stride,
            lif: LifNeuron::default(),
            seed: 0,
        }
    }

    /// Conv stack with `n = log2(s)` pooled kernel-3 blocks emitting
    /// `seq_len / s + 1` keypoints; `s = 1` uses one unpooled kernel-4 block.
    /// Used for keypoint-count sweeps.
    pub fn with_keypoints(
        keypoints: usize,
        channels: usize,
        hidden_size: usize,
        recurrence: RecurrenceKind,
        seq_len: usize,
    ) -> Result<Self> {
        if keypoints < 2 || seq_len % (keypoints - 1) != 0 {
            return Err(Error::config(format!(
                "{keypoints} keypoints do not tile a {seq_len}-step window"
            )));
        }
        let stride = seq_len / (keypoints - 1);
        if !stride.is_power_of_two() {
            return Err(Error::config(format!(
                "keypoint stride {stride} is not a power of two"
            )));
        }
        let pools = stride.trailing_zeros() as usize;
        let conv_blocks = if pools == 0 {
            vec![ConvBlock::unpooled(channels, 4, 2)]
        } else {
            let mut b = vec![ConvBlock::new(channels, 3, 1); pools - 1];
            b.push(ConvBlock::new(channels, 3, 2));
            b
        };
        let cfg = Self {
            recurrence,
            input_channels: 96,
            seq_len,
            conv_blocks,
            hidden_size,
            keypoint_stride: stride,
            lif: LifNeuron::default(),
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stage_lengths(&self) -> Result<StageLengths> {
        let mut lens = vec![self.seq_len];
        let mut len = self.seq_len;
        for (i, b) in self.conv_blocks.iter().enumerate() {
            len = match conv_out_len(len, b.kernel, b.padding) {
                Some(l) if l >= 1 => l,
                _ => {
                    return Err(Error::config(format!(
                        "conv block {i} leaves no output from length {len}"
                    )))
                }
            };
            lens.push(len);
            if b.pool {
                if len < 2 {
                    return Err(Error::config(format!("pool after block {i} needs length >= 2")));
                }
                len /= 2;
                lens.push(len);
            }
        }
        Ok(StageLengths(lens))
    }

    /// Number of keypoints emitted by the conv stack.
    pub fn keypoints(&self) -> Result<usize> {
        Ok(*self.stage_lengths()?.0.last().unwrap_or(&0))
    }

    pub fn feature_channels(&self) -> usize {
        self.conv_blocks
            .last()
            .map_or(self.input_channels, |b| b.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0
            || self.seq_len == 0
            || self.hidden_size == 0
            || self.keypoint_stride == 0
        {
            return Err(Error::config("all sizes must be positive"));
        }
        if self
            .conv_blocks
            .iter()
            .any(|b| b.out_channels == 0 || b.kernel == 0)
        {
            return Err(Error::config("conv blocks need positive channels and kernel"));
        }
        self.lif.validate()?;
        let k = self.keypoints()?;
        if k < 2 {
            return Err(Error::config(format!("conv stack yields {k} keypoints, need >= 2")));
        }
        if (k - 1) * self.keypoint_stride != self.seq_len {
            return Err(Error::config(format!(
                "({k} - 1) keypoints × stride {} != seq_len {}",
                self.keypoint_stride, self.seq_len
            )));
        }
        Ok(())
    }

    /// `(span, stride)` in input bins of the region that determines one
    /// keypoint, composed over the conv and pool stages.
    pub fn receptive_field(&self) -> (usize, usize) {
        let (mut rf, mut jump) = (1usize, 1usize);
        for b in &self.conv_blocks {
            rf += (b.kernel - 1) * jump;
            if b.pool {
                rf += jump;
                jump *= 2;
            }
        }
        (rf, jump)
    }

    /// Input bins left of bin 0 (supplied by zero padding) that fall inside
    /// the receptive field of keypoint 0.
    pub fn left_padding(&self) -> usize {
        // map keypoint 0 back through the stages: pool [a,b] -> [2a, 2b+1],
        // conv [a,b] -> [a - p, b - p + k - 1]
        let mut lo: isize = 0;
        for b in self.conv_blocks.iter().rev() {
            if b.pool {
                lo *= 2;
            }
            lo -= b.padding as isize;
        }
        (-lo).max(0) as usize
    }

    /// Parameter element count implied by the configuration.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut ch = self.input_channels;
        for b in &self.conv_blocks {
            n += b.out_channels * ch * b.kernel + b.out_channels;
            ch = b.out_channels;
        }
        let h = self.hidden_size;
        n += match self.recurrence {
            RecurrenceKind::Gru => 3 * (ch * h + h * h + h),
            RecurrenceKind::Lif => ch * h + h * h,
            RecurrenceKind::Sgru => 3 * (ch * h + h * h),
        };
        n + h * 2 + 2
    }
}
