//! Encoder training: filtered rollout, the disentanglement branch and one
//! backward pass per sample, averaged over the batch for a single Adam update.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_step_on, iteration_inputs, rollout_on, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::image::{ImageBuffer, RegionMask};
use crate::latent::StyleLatent;
use crate::nn::{leaves, ParamTree};
use crate::objective::{image_loss_on, LossWeights, ProxyFeatureNet};
use crate::optim::Adam;
use crate::region::BlurSchedule;
use crate::scene::SceneSample;
use crate::synthgen::{synthesize_on, GeneratorParams};
use crate::tensor::Tensor;

/// Which image is masked to form the first half of the disentanglement pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndSource {
    /// `(I * mask, I)`.
    Image,
    /// `(G(w_N) * mask, I)`.
    Recon,
}

impl IndSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(IndSource::Image),
            "recon" => Ok(IndSource::Recon),
            _ => Err(Error::InvalidArgument(alloc::format!("ind_source must be image or recon, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndSource::Image => "image",
            IndSource::Recon => "recon",
        }
    }
}

/// Rows of the ablation ladder, each adding one component to the previous.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Baseline,
    Mask,
    Ind,
    Unf,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Baseline, Ablation::Mask, Ablation::Ind, Ablation::Unf];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Ablation::Baseline),
            "+mask" | "mask" => Ok(Ablation::Mask),
            "+ind" | "ind" => Ok(Ablation::Ind),
            "+unf" | "unf" | "full" => Ok(Ablation::Unf),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown ablation preset {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Mask => "+mask",
            Ablation::Ind => "+ind",
            Ablation::Unf => "+unf",
        }
    }

    /// `(mask_losses, use_ind, use_unf)`.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Ablation::Baseline => (false, false, false),
            Ablation::Mask => (true, false, false),
            Ablation::Ind => (true, true, false),
            Ablation::Unf => (true, true, true),
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        let (m, i, u) = self.flags();
        cfg.mask_losses = m;
        cfg.use_ind = i;
        cfg.use_unf = u;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Blur schedule; its `iterations` is the refinement count N.
    pub schedule: BlurSchedule,
    pub weights: LossWeights,
    pub dilation_radius: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub data_seed: u64,
    pub model_seed: u64,
    pub shuffle_seed: u64,
    pub use_ind: bool,
    pub use_unf: bool,
    pub mask_losses: bool,
    pub detach_between_iters: bool,
    pub ind_source: IndSource,
    pub checkpoint_every: u64,
    /// Mapping samples averaged for `w0`.
    pub w0_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: BlurSchedule {
                r_max: 8.0,
                iterations: 3,
            },
            weights: LossWeights::default(),
            dilation_radius: 3,
            learning_rate: 1e-4,
            batch_size: 8,
            max_steps: 5000,
            data_seed: 1,
            model_seed: 1,
            shuffle_seed: 3,
            use_ind: true,
            use_unf: true,
            mask_losses: true,
            detach_between_iters: false,
            ind_source: IndSource::Image,
            checkpoint_every: 1000,
            w0_samples: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn iterations(&self) -> usize {
        self.schedule.iterations
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.weights.validate()?;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.w0_samples == 0 {
            return Err(Error::InvalidArgument("w0 needs at least one mapping sample".into()));
        }
        Ok(())
    }

    /// Weight actually applied to the disentanglement term.
    pub fn effective_ind_weight(&self) -> f64 {
        if self.use_ind {
            self.weights.ind
        } else {
            0.0
        }
    }
}

/// Frozen modules shared by every training sample.
#[derive(Clone, Copy)]
pub struct Frozen<'a> {
    pub gen: &'a GeneratorParams,
    pub net: &'a ProxyFeatureNet,
    pub w0: &'a StyleLatent,
}

/// Uninterest residual `E(I * mask, I)`, or `E(G(w_N) * mask, I)` for [`IndSource::Recon`].
pub fn ind_delta(
    image: &ImageBuffer,
    mask: &RegionMask,
    w_n: &StyleLatent,
    enc: &EncoderParams,
    gen: &GeneratorParams,
    source: IndSource,
) -> Result<StyleLatent> {
    image.check_mask(mask)?;
    let first = match source {
        IndSource::Image => image.masked(mask)?,
        IndSource::Recon => gen.synthesize(w_n)?.masked(mask)?,
    };
    enc.encode_step(&first, image)
}

/// Loss terms of one sample; `recon` and `ind` are before weighting by `λ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub ind: f64,
}

/// Loss and encoder gradient (canonical parameter order) for one sample
/// given explicit encoder inputs `I_1 .. I_N`.
pub fn gradient_with_inputs(
    image: &ImageBuffer,
    mask: &RegionMask,
    inputs: &[ImageBuffer],
    enc: &EncoderParams,
    frozen: Frozen<'_>,
    cfg: &TrainConfig,
) -> Result<(LossParts, Vec<Tensor>)> {
    image.check_mask(mask)?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("rollout needs at least one iteration".into()));
    }
    let mut g = Graph::new();
    let encv = enc.bind(&mut g, true);
    let genv = frozen.gen.bind(&mut g);
    let netv = frozen.net.bind(&mut g);
    let w0 = g.constant(frozen.w0.tensor().clone());
    let y0 = synthesize_on(&mut g, &genv, w0);
    let roll = rollout_on(&mut g, &encv, &genv, inputs, w0, y0, cfg.detach_between_iters);
    let w_n = *roll.latents.last().expect("nonempty rollout");
    let y_n = *roll.recons.last().expect("nonempty rollout");
    let target = g.constant(image.tensor().clone());

    let recon = if cfg.mask_losses {
        let a = g.mask_mul(target, mask.data());
        let b = g.mask_mul(y_n, mask.data());
        image_loss_on(&mut g, &cfg.weights, &netv, a, b, mask)
    } else {
        let full = RegionMask::ones(mask.height(), mask.width());
        image_loss_on(&mut g, &cfg.weights, &netv, target, y_n, &full)
    };

    let lambda = cfg.effective_ind_weight();
    let mut terms = alloc::vec![(recon.total, 1.0)];
    let mut ind: Option<Var> = None;
    if lambda != 0.0 {
        let first = match cfg.ind_source {
            IndSource::Image => g.mask_mul(target, mask.data()),
            IndSource::Recon => g.mask_mul(y_n, mask.data()),
        };
        let delta_b = encode_step_on(&mut g, &encv, first, target);
        let w = g.add(w_n, delta_b);
        let y = synthesize_on(&mut g, &genv, w);
        let a = g.mask_mul(target, mask.data());
        let b = g.mask_mul(y, mask.data());
        let l = image_loss_on(&mut g, &cfg.weights, &netv, a, b, mask);
        terms.push((l.total, lambda));
        ind = Some(l.total);
    }
    let total = g.weighted_sum(&terms);
    let parts = LossParts {
        total: g.value(total).item(),
        recon: g.value(recon.total).item(),
        ind: ind.map_or(0.0, |v| g.value(v).item()),
    };
    let mut grads = g.backward(total);
    let params: Vec<Var> = leaves(&encv);
    let mut out = Vec::with_capacity(params.len());
    let mut i = 0;
    enc.net.visit("", &mut |_, t| {
        out.push(grads.take_or_zeros(params[i], t));
        i += 1;
    });
    Ok((parts, out))
}

/// Loss and encoder gradient for one training sample.
pub fn sample_gradient(
    image: &ImageBuffer,
    mask: &RegionMask,
    enc: &EncoderParams,
    frozen: Frozen<'_>,
    cfg: &TrainConfig,
) -> Result<(LossParts, Vec<Tensor>)> {
    let inputs = iteration_inputs(image, cfg.use_unf.then_some(mask), &cfg.schedule)?;
    gradient_with_inputs(image, mask, &inputs, enc, frozen, cfg)
}

/// Dataset indices making up batch `step`: consecutive slices of a fresh
/// permutation per epoch, so any step can be reproduced without replaying
/// the ones before it.
pub fn batch_indices(shuffle_seed: u64, step: u64, dataset_len: usize, batch_size: usize) -> Vec<usize> {
    if dataset_len == 0 {
        return Vec::new();
    }
    let n = dataset_len as u64;
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for j in 0..batch_size as u64 {
        let pos = step * batch_size as u64 + j;
        let epoch = pos / n;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
            rng.set_stream(epoch);
            let mut perm: Vec<usize> = (0..dataset_len).collect();
            perm.shuffle(&mut rng);
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().expect("cached permutation").1[(pos % n) as usize]);
    }
    out
}

/// Bookkeeping for one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: LossParts,
    /// Backward passes run for the batch (one per sample graph).
    pub backward_passes: usize,
    /// Optimizer updates applied (always one).
    pub updates: usize,
}

#[cfg(feature = "rayon")]
fn per_sample<F>(batch: &[&SceneSample], f: F) -> Vec<Result<(LossParts, Vec<Tensor>)>>
where
    F: Fn(&SceneSample) -> Result<(LossParts, Vec<Tensor>)> + Sync,
{
    use rayon::prelude::*;
    batch.par_iter().map(|s| f(s)).collect()
}

#[cfg(not(feature = "rayon"))]
fn per_sample<F>(batch: &[&SceneSample], f: F) -> Vec<Result<(LossParts, Vec<Tensor>)>>
where
    F: Fn(&SceneSample) -> Result<(LossParts, Vec<Tensor>)>,
{
    batch.iter().map(|s| f(s)).collect()
}

/// Mean loss and gradient over a batch, reduced in batch order.
pub fn batch_gradient(
    batch: &[&SceneSample],
    enc: &EncoderParams,
    frozen: Frozen<'_>,
    cfg: &TrainConfig,
) -> Result<(LossParts, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let results = per_sample(batch, |s| sample_gradient(&s.image, &s.dilated_mask, enc, frozen, cfg));
    let scale = 1.0 / batch.len() as f64;
    let mut loss = LossParts::default();
    let mut grads: Option<Vec<Tensor>> = None;
    for r in results {
        let (parts, g) = r?;
        loss.total += parts.total * scale;
        loss.recon += parts.recon * scale;
        loss.ind += parts.ind * scale;
        match grads.as_mut() {
            None => {
                let mut g = g;
                for t in &mut g {
                    t.scale_assign(scale);
                }
                grads = Some(g);
            }
            Some(acc) => {
                for (a, mut t) in acc.iter_mut().zip(g) {
                    t.scale_assign(scale);
                    a.add_assign(&t);
                }
            }
        }
    }
    Ok((loss, grads.expect("nonempty batch")))
}

/// Encoder, optimizer state and step counter of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub encoder: EncoderParams,
    pub optimizer: Adam,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, encoder: EncoderParams) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(&encoder.net);
        Ok(Trainer {
            config,
            encoder,
            optimizer,
            step: 0,
        })
    }

    /// One update on an explicit batch.
    pub fn train_step(&mut self, batch: &[&SceneSample], frozen: Frozen<'_>, batch_id: &str) -> Result<StepStats> {
        let (loss, grads) = batch_gradient(batch, &self.encoder, frozen, &self.config)?;
        let finite_grads = grads.iter().all(Tensor::is_finite);
        if !loss.total.is_finite() || !finite_grads {
            let value = if loss.total.is_finite() { f64::NAN } else { loss.total };
            return Err(Error::NonFiniteLoss {
                value,
                batch: String::from(batch_id),
            });
        }
        self.optimizer.step(&mut self.encoder.net, &grads, self.config.learning_rate);
        let stats = StepStats {
            step: self.step,
            loss,
            backward_passes: batch.len(),
            updates: 1,
        };
        self.step += 1;
        Ok(stats)
    }

    /// One update on the batch scheduled for the current step.
    pub fn step_on(&mut self, dataset: &[SceneSample], frozen: Frozen<'_>) -> Result<StepStats> {
        let idx = batch_indices(self.config.shuffle_seed, self.step, dataset.len(), self.config.batch_size);
        let batch: Vec<&SceneSample> = idx.iter().map(|&i| &dataset[i]).collect();
        let id = alloc::format!("step {} samples {:?}", self.step, idx);
        self.train_step(&batch, frozen, &id)
    }
}
