//! The full decoder: conv blocks → recurrent unit over keypoints → linear
//! readout → interpolation back to the window length.

mod checkpoint;
mod config;

pub use checkpoint::{load, manifest_path, save, weights_path, Manifest, TensorEntry, FORMAT, VERSION};
pub use config::{ConvBlock, ModelConfig, StageLengths, Track, BIN_MS};

use crate::bench::{ActivationRecord, ActivationTrace, SynapseRecord, SynapseShape};
use crate::cells::{CellState, Recurrent, SpikeFn, StepCache};
use crate::error::{Error, Result};
use crate::layers::{
    conv1d_backward, conv1d_forward, lerp_upsample, lerp_upsample_backward, linear_backward,
    linear_forward, maxpool1d, maxpool1d_backward, Activation, Conv1dCache, Conv1dParams,
    LinearCache, LinearParams, PoolCache,
};
use crate::numerics::{Rng, Tensor};

/// Output dimensions of the readout (x and y velocity).
pub const OUT_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub convs: Vec<Conv1dParams>,
    pub recurrent: Recurrent,
    pub readout: LinearParams,
    /// Forward spike function; [`SpikeFn::Relaxed`] only for gradient checks.
    pub spike_fn: SpikeFn,
}

struct ConvStage {
    cache: Conv1dCache,
    /// ReLU output before pooling.
    relu: Tensor,
    pool: Option<PoolCache>,
}

/// Intermediate values of one forward pass, consumed by [`Model::backward`].
pub struct ForwardCache {
    convs: Vec<ConvStage>,
    /// `K × F` keypoint features.
    features: Tensor,
    steps: Vec<StepCache>,
    /// `K × H` recurrent outputs.
    hidden: Tensor,
    readout: LinearCache,
    /// `K × 2` keypoint velocities.
    pub keypoints: Tensor,
}

impl Model {
    /// Random initialisation from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let mut convs = Vec::with_capacity(config.conv_blocks.len());
        let mut ch = config.input_channels;
        for b in &config.conv_blocks {
            convs.push(Conv1dParams::init(b.out_channels, ch, b.kernel, b.padding, &mut rng));
            ch = b.out_channels;
        }
        let recurrent = Recurrent::init(config.recurrence, ch, config.hidden_size, config.lif, &mut rng);
        let readout = LinearParams::init(config.hidden_size, OUT_DIM, &mut rng);
        Ok(Self {
            config,
            convs,
            recurrent,
            readout,
            spike_fn: SpikeFn::Heaviside,
        })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut m = Self::new(config)?;
        m.fill(0.0);
        Ok(m)
    }

    /// Zero-valued parameter container with this model's shapes.
    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        m.fill(0.0);
        m
    }

    fn fill(&mut self, v: f64) {
        for (_, t) in self.named_mut() {
            t.data_mut().fill(v);
        }
    }

    /// Every parameter tensor under a stable name, in checkpoint order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.kernel"), &c.kernel));
            out.push((format!("conv{i}.bias"), &c.bias));
        }
        for (n, t) in self.recurrent.named() {
            out.push((format!("rec.{n}"), t));
        }
        out.push(("readout.w".to_string(), &self.readout.w));
        out.push(("readout.b".to_string(), &self.readout.b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{i}.kernel"), &mut c.kernel));
            out.push((format!("conv{i}.bias"), &mut c.bias));
        }
        for (n, t) in self.recurrent.named_mut() {
            out.push((format!("rec.{n}"), t));
        }
        out.push(("readout.w".to_string(), &mut self.readout.w));
        out.push(("readout.b".to_string(), &mut self.readout.b));
        out
    }

    /// Synaptic weight tensors, i.e. every parameter except biases.
    pub fn weight_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.convs.len()).map(|i| format!("conv{i}.kernel")).collect();
        for g in self.recurrent.synapse_groups() {
            out.extend(g.weights.iter().map(|w| format!("rec.{w}")));
        }
        out.push("readout.w".into());
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.named().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn receptive_field(&self) -> (usize, usize) {
        self.config.receptive_field()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.input_channels, self.config.seq_len];
        if x.shape() != want {
            return Err(Error::dim("forward", x.shape(), &want));
        }
        if !x.is_finite() {
            return Err(Error::Evaluation("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Conv stack on a `C × L` window, returning the `F × K'` feature map.
    fn conv_stack(&self, x: &Tensor) -> Result<(Tensor, Vec<ConvStage>)> {
        let mut cur = x.clone();
        let mut stages = Vec::with_capacity(self.convs.len());
        for (p, b) in self.convs.iter().zip(&self.config.conv_blocks) {
            let (y, cache) = conv1d_forward(p, &cur, Activation::Relu)?;
            let (next, pool) = if b.pool {
                let (z, pc) = maxpool1d(&y)?;
                (z, Some(pc))
            } else {
                (y.clone(), None)
            };
            stages.push(ConvStage {
                cache,
                relu: y,
                pool,
            });
            cur = next;
        }
        Ok((cur, stages))
    }

    /// Runs the recurrent unit from `state` over the rows of `features`
    /// (`K × F`), returning `K × H` outputs and the final state.
    pub(crate) fn run_recurrent(
        &self,
        features: &Tensor,
        state: &CellState,
    ) -> (Tensor, CellState, Vec<StepCache>) {
        let h = self.config.hidden_size;
        let k = features.rows();
        let mut st = state.clone();
        let mut out = Vec::with_capacity(k * h);
        let mut caches = Vec::with_capacity(k);
        for j in 0..k {
            let (next, cache) = self.recurrent.step(features.row(j), &st, self.spike_fn);
            out.extend_from_slice(next.h.data());
            caches.push(cache);
            st = next;
        }
        (Tensor::new(vec![k, h], out).expect("shape"), st, caches)
    }

    /// Velocities `seq_len × 2` and the cache for [`Model::backward`].
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let (fmap, convs) = self.conv_stack(x)?;
        let features = fmap.transpose();
        let (hidden, _, steps) = self.run_recurrent(&features, &self.recurrent.init_state());
        let (keypoints, readout) = linear_forward(&self.readout, &hidden)?;
        let y = lerp_upsample(&keypoints, self.config.keypoint_stride)?;
        if !y.is_finite() {
            return Err(Error::Evaluation("forward produced non-finite output".into()));
        }
        Ok((
            y,
            ForwardCache {
                convs,
                features,
                steps,
                hidden,
                readout,
                keypoints,
            },
        ))
    }

    /// Velocities only.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Velocities `seq_len × 2` and a trace of every synaptic input and
    /// activation, for the benchmark counters.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ActivationTrace)> {
        let (y, cache) = self.forward_cached(x)?;
        Ok((y, self.trace(x, &cache)))
    }

    fn trace(&self, x: &Tensor, cache: &ForwardCache) -> ActivationTrace {
        let mut tr = ActivationTrace::new(self.config.seq_len);
        let mut input = x.clone();
        for (i, (stage, b)) in cache.convs.iter().zip(&self.config.conv_blocks).enumerate() {
            tr.synapses.push(SynapseRecord {
                layer: format!("conv{i}"),
                shape: SynapseShape::Conv { padding: b.padding },
                weights: vec![format!("conv{i}.kernel")],
                biases: vec![format!("conv{i}.bias")],
                binary_input: i == 0,
                input: input.clone(),
            });
            tr.activations.push(ActivationRecord {
                layer: format!("conv{i}.relu"),
                values: stage.relu.clone(),
            });
            input = if b.pool {
                maxpool1d(&stage.relu).expect("pool").0
            } else {
                stage.relu.clone()
            };
        }

        let k = cache.steps.len();
        for (g, group) in self.recurrent.synapse_groups().into_iter().enumerate() {
            let fan_in = cache.steps.first().map_or(0, |s| s.synaptic_inputs()[g].len());
            let mut rows = Vec::with_capacity(k * fan_in);
            for s in &cache.steps {
                rows.extend_from_slice(s.synaptic_inputs()[g]);
            }
            tr.synapses.push(SynapseRecord {
                layer: format!("rec.{}", group.layer),
                shape: SynapseShape::Dense,
                weights: group.weights.iter().map(|w| format!("rec.{w}")).collect(),
                biases: group.biases.iter().map(|b| format!("rec.{b}")).collect(),
                binary_input: group.binary_input,
                input: Tensor::new(vec![k, fan_in], rows).expect("shape"),
            });
        }
        let spike_layers: &[&str] = match self.recurrent {
            Recurrent::Gru(_) => &[],
            Recurrent::Lif(_) => &["rec.spikes"],
            Recurrent::Sgru(_) => &["rec.reset", "rec.update", "rec.candidate"],
        };
        if spike_layers.is_empty() {
            tr.activations.push(ActivationRecord {
                layer: "rec.h".into(),
                values: cache.hidden.clone(),
            });
        }
        for (i, name) in spike_layers.iter().enumerate() {
            let n = self.config.hidden_size;
            let mut v = Vec::with_capacity(k * n);
            for s in &cache.steps {
                v.extend_from_slice(s.spikes()[i]);
            }
            tr.activations.push(ActivationRecord {
                layer: (*name).into(),
                values: Tensor::new(vec![k, n], v).expect("shape"),
            });
        }

        tr.synapses.push(SynapseRecord {
            layer: "readout".into(),
            shape: SynapseShape::Dense,
            weights: vec!["readout.w".into()],
            biases: vec!["readout.b".into()],
            binary_input: self.recurrent.binary_output(),
            input: cache.hidden.clone(),
        });
        tr
    }

    /// Gradients of a loss with `d_out = ∂L/∂velocities` for every
    /// parameter, returned as a model-shaped container.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Tensor) -> Result<Model> {
        let want = [self.config.seq_len, OUT_DIM];
        if d_out.shape() != want {
            return Err(Error::dim("backward", d_out.shape(), &want));
        }
        let mut grads = self.zeros_like();
        let k = cache.keypoints.rows();
        let d_kp = lerp_upsample_backward(d_out, k, self.config.keypoint_stride)?;
        let lg = linear_backward(&self.readout, &cache.readout, &d_kp)?;
        grads.readout.w = lg.w;
        grads.readout.b = lg.b;

        let f = cache.features.cols();
        let mut d_feat = vec![0.0; k * f];
        let mut carry = self.recurrent.new_carry();
        for j in (0..k).rev() {
            self.recurrent.step_back(
                &cache.steps[j],
                lg.input.row(j),
                &mut carry,
                &mut grads.recurrent,
                &mut d_feat[j * f..(j + 1) * f],
            )?;
        }

        let mut d = Tensor::new(vec![k, f], d_feat)?.transpose();
        for (i, stage) in cache.convs.iter().enumerate().rev() {
            if let Some(pc) = &stage.pool {
                d = maxpool1d_backward(pc, &d)?;
            }
            let cg = conv1d_backward(&self.convs[i], &stage.cache, &d, i > 0)?;
            grads.convs[i].kernel = cg.kernel;
            grads.convs[i].bias = cg.bias;
            if let Some(dx) = cg.input {
                d = dx;
            }
        }
        Ok(grads)
    }
}
