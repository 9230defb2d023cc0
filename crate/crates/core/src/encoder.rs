//! Iterative-refinement encoder.
//!
//! The encoder sees the previous reconstruction and the current target stacked
//! along channels, runs a strided convolutional trunk, and emits one
//! residual style row per generator slot. Coarse slots read the deepest trunk
//! feature map, middle slots the one above it, fine slots the next one up.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::image::{ImageBuffer, RegionMask};
use crate::latent::StyleLatent;
use crate::nn::{bind, Conv, Dense, Init, ParamTree, LEAKY_SLOPE};
use crate::region::{uninterest_filter, BlurSchedule};
use crate::synthgen::{synthesize_on, GeneratorNet, GeneratorParams, StyleRange};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub image_channels: usize,
    /// Output channels of each stride-2 trunk stage.
    pub stage_channels: Vec<usize>,
    pub head_channels: usize,
    pub slots: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            image_channels: 3,
            stage_channels: vec![8, 16, 16, 16],
            head_channels: 16,
            slots: 10,
            latent_dim: 64,
            seed: 1,
        }
    }
}

impl EncoderConfig {
    pub fn micro() -> Self {
        EncoderConfig {
            stage_channels: vec![4, 4, 4, 4],
            head_channels: 4,
            slots: 4,
            latent_dim: 8,
            ..Self::default()
        }
    }

    /// Encoder shaped to match a generator.
    pub fn for_generator(gen: &GeneratorParams) -> Self {
        EncoderConfig {
            slots: gen.slots(),
            latent_dim: gen.config.latent_dim,
            ..Self::default()
        }
    }

    /// Trunk stage whose output feeds the head of `slot`.
    pub fn stage_for_slot(&self, slot: usize) -> usize {
        stage_for_slot(slot, self.stage_channels.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() || self.slots == 0 || self.latent_dim == 0 || self.head_channels == 0 {
            return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head<T> {
    pub conv: Conv<T>,
    pub out: Dense<T>,
}

impl<T> ParamTree<T> for Head<T> {
    type Of<U> = Head<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Head<U> {
        Head {
            conv: self.conv.map_leaves(f),
            out: self.out.map_leaves(f),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.conv.visit(&alloc::format!("{prefix}/conv"), f);
        self.out.visit(&alloc::format!("{prefix}/out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        self.conv.visit_mut(&alloc::format!("{prefix}/conv"), f);
        self.out.visit_mut(&alloc::format!("{prefix}/out"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderNet<T> {
    pub stages: Vec<Conv<T>>,
    pub heads: Vec<Head<T>>,
}

impl<T> ParamTree<T> for EncoderNet<T> {
    type Of<U> = EncoderNet<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> EncoderNet<U> {
        EncoderNet {
            stages: self.stages.map_leaves(f),
            heads: self.heads.map_leaves(f),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.stages.visit(&alloc::format!("{prefix}/stage"), f);
        self.heads.visit(&alloc::format!("{prefix}/head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        self.stages.visit_mut(&alloc::format!("{prefix}/stage"), f);
        self.heads.visit_mut(&alloc::format!("{prefix}/head"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub net: EncoderNet<Tensor>,
}

impl EncoderParams {
    /// Fresh encoder whose output layers are zero, so every residual starts at 0.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(config.seed, 2);
        let mut stages = Vec::new();
        let mut cin = 2 * config.image_channels;
        for &c in &config.stage_channels {
            stages.push(init.conv(c, cin, 3, libm::sqrt(2.0)));
            cin = c;
        }
        let heads = (0..config.slots)
            .map(|slot| {
                let src = config.stage_channels[config.stage_for_slot(slot)];
                Head {
                    conv: init.conv(config.head_channels, src, 3, libm::sqrt(2.0)),
                    out: Dense {
                        weight: Tensor::zeros(&[config.latent_dim, config.head_channels]),
                        bias: Tensor::zeros(&[config.latent_dim]),
                    },
                }
            })
            .collect();
        Ok(EncoderParams {
            config,
            net: EncoderNet { stages, heads },
        })
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> EncoderNet<Var> {
        bind(&self.net, g, trainable)
    }

    /// Residual for one refinement step.
    pub fn encode_step(&self, y_prev: &ImageBuffer, target: &ImageBuffer) -> Result<StyleLatent> {
        y_prev.check_same_shape(target)?;
        if y_prev.channels() != self.config.image_channels {
            return Err(dim_err("encoder input channels", self.config.image_channels, y_prev.channels()));
        }
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let a = g.constant(y_prev.tensor().clone());
        let b = g.constant(target.tensor().clone());
        let d = encode_step_on(&mut g, &net, a, b);
        StyleLatent::from_tensor(g.value(d).clone())
    }
}

fn stage_for_slot(slot: usize, stages: usize) -> usize {
    let from_deepest = match StyleRange::of_slot(slot) {
        StyleRange::Coarse => 0,
        StyleRange::Middle => 1,
        StyleRange::Fine => 2,
    };
    stages.saturating_sub(1 + from_deepest)
}

/// Residual `[slots, d]` from `(y_prev, target)` stacked in that order.
pub fn encode_step_on(g: &mut Graph, net: &EncoderNet<Var>, y_prev: Var, target: Var) -> Var {
    let mut x = g.concat_channels(y_prev, target);
    let mut feats = Vec::with_capacity(net.stages.len());
    for stage in &net.stages {
        x = stage.apply(g, x, 2);
        x = g.leaky_relu(x, LEAKY_SLOPE);
        feats.push(x);
    }
    let n = feats.len();
    let rows: Vec<Var> = net
        .heads
        .iter()
        .enumerate()
        .map(|(slot, head)| {
            let src = feats[stage_for_slot(slot, n)];
            let h = head.conv.apply(g, src, 1);
            let h = g.leaky_relu(h, LEAKY_SLOPE);
            let p = g.mean_pool(h);
            head.out.apply(g, p)
        })
        .collect();
    g.stack_rows(&rows)
}

/// One recorded refinement iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub input: ImageBuffer,
    pub delta: StyleLatent,
    pub latent: StyleLatent,
    pub recon: ImageBuffer,
}

/// `w_0`, `y_0` and one [`TraceStep`] per iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementTrace {
    pub w0: StyleLatent,
    pub y0: ImageBuffer,
    pub steps: Vec<TraceStep>,
}

impl RefinementTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_latent(&self) -> &StyleLatent {
        self.steps.last().map_or(&self.w0, |s| &s.latent)
    }

    pub fn final_recon(&self) -> &ImageBuffer {
        self.steps.last().map_or(&self.y0, |s| &s.recon)
    }

    /// `w_0 .. w_N`.
    pub fn latents(&self) -> Vec<&StyleLatent> {
        core::iter::once(&self.w0).chain(self.steps.iter().map(|s| &s.latent)).collect()
    }

    /// `y_0 .. y_N`.
    pub fn recons(&self) -> Vec<&ImageBuffer> {
        core::iter::once(&self.y0).chain(self.steps.iter().map(|s| &s.recon)).collect()
    }
}

/// Encoder inputs `I_1 .. I_N`: uninterest-filtered when a mask is given, the raw image otherwise.
pub fn iteration_inputs(image: &ImageBuffer, mask: Option<&RegionMask>, sched: &BlurSchedule) -> Result<Vec<ImageBuffer>> {
    sched.validate()?;
    (1..=sched.iterations)
        .map(|i| match mask {
            Some(m) => uninterest_filter(image, m, i, sched),
            None => Ok(image.clone()),
        })
        .collect()
}

/// Variables produced by unrolling the refinement loop on a graph.
pub struct RolloutVars {
    pub deltas: Vec<Var>,
    /// `w_0 .. w_N`.
    pub latents: Vec<Var>,
    /// `y_0 .. y_N`.
    pub recons: Vec<Var>,
}

/// Unrolls `w_i = w_{i-1} + E(y_{i-1}, I_i)`, `y_i = G(w_i)` over the given inputs.
///
/// With `detach` set, each iteration starts from constant copies of the
/// previous latent and reconstruction so gradients only reach the last step.
pub fn rollout_on(
    g: &mut Graph,
    enc: &EncoderNet<Var>,
    gen: &GeneratorNet<Var>,
    inputs: &[ImageBuffer],
    w0: Var,
    y0: Var,
    detach: bool,
) -> RolloutVars {
    let mut latents = vec![w0];
    let mut recons = vec![y0];
    let mut deltas = Vec::with_capacity(inputs.len());
    let (mut w, mut y) = (w0, y0);
    for input in inputs {
        if detach {
            w = g.constant(g.value(w).clone());
            y = g.constant(g.value(y).clone());
        }
        let target = g.constant(input.tensor().clone());
        let delta = encode_step_on(g, enc, y, target);
        w = g.add(w, delta);
        y = synthesize_on(g, gen, w);
        deltas.push(delta);
        latents.push(w);
        recons.push(y);
    }
    RolloutVars { deltas, latents, recons }
}

/// Full refinement trace. With a mask the inputs are uninterest-filtered
/// (training mode); without one every input is the raw image (inference).
pub fn rollout(
    image: &ImageBuffer,
    mask: Option<&RegionMask>,
    sched: &BlurSchedule,
    enc: &EncoderParams,
    gen: &GeneratorParams,
    w0: &StyleLatent,
) -> Result<RefinementTrace> {
    let res = gen.resolution();
    if image.shape() != (enc.config.image_channels, res, res) {
        return Err(dim_err("rollout image", (enc.config.image_channels, res, res), image.shape()));
    }
    if w0.slots() != enc.config.slots || w0.dim() != enc.config.latent_dim {
        return Err(dim_err("w0", (enc.config.slots, enc.config.latent_dim), (w0.slots(), w0.dim())));
    }
    let inputs = iteration_inputs(image, mask, sched)?;
    let y0 = gen.synthesize(w0)?;
    let mut g = Graph::new();
    let encv = enc.bind(&mut g, false);
    let genv = gen.bind(&mut g);
    let w0v = g.constant(w0.tensor().clone());
    let y0v = g.constant(y0.tensor().clone());
    let vars = rollout_on(&mut g, &encv, &genv, &inputs, w0v, y0v, false);
    let mut steps = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.into_iter().enumerate() {
        steps.push(TraceStep {
            input,
            delta: StyleLatent::from_tensor(g.value(vars.deltas[i]).clone())?,
            latent: StyleLatent::from_tensor(g.value(vars.latents[i + 1]).clone())?,
            recon: ImageBuffer::from_tensor(g.value(vars.recons[i + 1]).clone())?,
        });
    }
    Ok(RefinementTrace {
        w0: w0.clone(),
        y0,
        steps,
    })
}

/// Mask-free inversion: `w_N` after `iterations` refinement steps.
pub fn invert(
    image: &ImageBuffer,
    enc: &EncoderParams,
    gen: &GeneratorParams,
    w0: &StyleLatent,
    iterations: usize,
) -> Result<StyleLatent> {
    let sched = BlurSchedule::new(0.0, iterations)?;
    Ok(rollout(image, None, &sched, enc, gen, w0)?.final_latent().clone())
}
