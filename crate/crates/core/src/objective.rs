//! Loss terms: pixel L2, a perceptual distance and an identity distance over a
//! frozen random feature network, their weighted sum, the disentanglement
//! loss and the total training loss.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::image::{ImageBuffer, RegionMask};
use crate::encoder::RefinementTrace;
use crate::latent::StyleLatent;
use crate::nn::{bind, Conv, Init, ParamTree, LEAKY_SLOPE};
use crate::synthgen::GeneratorParams;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l2: f64,
    pub lpips: f64,
    pub id: f64,
    /// Weight of the disentanglement term in the total loss.
    pub ind: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l2: 1.0,
            lpips: 0.8,
            id: 0.1,
            ind: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l2", self.l2), ("lpips", self.lpips), ("id", self.id), ("ind", self.ind)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            channels: vec![8, 16, 16],
            seed: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxyNet<T> {
    pub stages: Vec<Conv<T>>,
}

impl<T> ParamTree<T> for ProxyNet<T> {
    type Of<U> = ProxyNet<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> ProxyNet<U> {
        ProxyNet {
            stages: self.stages.map_leaves(f),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.stages.visit(&alloc::format!("{prefix}/stage"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        self.stages.visit_mut(&alloc::format!("{prefix}/stage"), f);
    }
}

/// Frozen random convolutional features standing in for pretrained perceptual
/// and identity networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyFeatureNet {
    pub config: ProxyConfig,
    pub net: ProxyNet<Tensor>,
}

impl ProxyFeatureNet {
    pub fn new(config: ProxyConfig, image_channels: usize) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) {
            return Err(Error::InvalidArgument("proxy network needs positive stage widths".into()));
        }
        let mut init = Init::new(config.seed, 3);
        let mut cin = image_channels;
        let stages = config
            .channels
            .iter()
            .map(|&c| {
                let conv = init.conv_with_bias(c, cin, 3, libm::sqrt(2.0), 0.1);
                cin = c;
                conv
            })
            .collect();
        Ok(ProxyFeatureNet {
            config,
            net: ProxyNet { stages },
        })
    }

    pub fn bind(&self, g: &mut Graph) -> ProxyNet<Var> {
        bind(&self.net, g, false)
    }

    /// Identity embedding: spatial mean of the last feature stage.
    pub fn embed(&self, img: &ImageBuffer) -> Vec<f64> {
        let mut g = Graph::new();
        let net = self.bind(&mut g);
        let x = g.constant(img.tensor().clone());
        let feats = features_on(&mut g, &net, x);
        let e = g.mean_pool(*feats.last().unwrap());
        g.value(e).data().to_vec()
    }
}

pub fn features_on(g: &mut Graph, net: &ProxyNet<Var>, x: Var) -> Vec<Var> {
    let mut h = x;
    net.stages
        .iter()
        .map(|s| {
            h = s.apply(g, h, 2);
            h = g.leaky_relu(h, LEAKY_SLOPE);
            h
        })
        .collect()
}

/// Sum over stages of the mean squared difference of channel-normalized features.
pub fn perceptual_on(g: &mut Graph, net: &ProxyNet<Var>, a: Var, b: Var) -> Var {
    let fa = features_on(g, net, a);
    let fb = features_on(g, net, b);
    let terms: Vec<(Var, f64)> = fa
        .into_iter()
        .zip(fb)
        .map(|(x, y)| {
            let nx = g.channel_unit_norm(x);
            let ny = g.channel_unit_norm(y);
            (g.mean_squared_error(nx, ny), 1.0)
        })
        .collect();
    g.weighted_sum(&terms)
}

/// Cosine similarity of identity embeddings of the masked inputs.
pub fn identity_similarity_on(g: &mut Graph, net: &ProxyNet<Var>, a: Var, b: Var, mask: &RegionMask) -> Var {
    let ma = g.mask_mul(a, mask.data());
    let mb = g.mask_mul(b, mask.data());
    let fa = *features_on(g, net, ma).last().unwrap();
    let fb = *features_on(g, net, mb).last().unwrap();
    let ea = g.mean_pool(fa);
    let eb = g.mean_pool(fb);
    if is_zero(g.value(ea)) || is_zero(g.value(eb)) {
        log::warn!("identity embedding is the zero vector; treating the pair as orthogonal");
    }
    g.cosine(ea, eb)
}

fn is_zero(t: &Tensor) -> bool {
    t.data().iter().all(|&v| v == 0.0)
}

/// `1 - cos` of masked identity embeddings.
pub fn identity_on(g: &mut Graph, net: &ProxyNet<Var>, a: Var, b: Var, mask: &RegionMask) -> Var {
    let c = identity_similarity_on(g, net, a, b, mask);
    g.affine(c, -1.0, 1.0)
}

/// Scalar nodes making up one image loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ImageLossVars {
    pub total: Var,
    pub l2: Option<Var>,
    pub perceptual: Option<Var>,
    pub identity: Option<Var>,
}

/// Weighted image loss. `a` and `b` are used as given for L2 and the
/// perceptual term; the identity term masks them internally. Terms with zero
/// weight are skipped.
pub fn image_loss_on(
    g: &mut Graph,
    weights: &LossWeights,
    net: &ProxyNet<Var>,
    a: Var,
    b: Var,
    mask: &RegionMask,
) -> ImageLossVars {
    let l2 = (weights.l2 != 0.0).then(|| g.mean_squared_error(a, b));
    let perceptual = (weights.lpips != 0.0).then(|| perceptual_on(g, net, a, b));
    let identity = (weights.id != 0.0).then(|| identity_on(g, net, a, b, mask));
    let mut terms = Vec::new();
    if let Some(v) = l2 {
        terms.push((v, weights.l2));
    }
    if let Some(v) = perceptual {
        terms.push((v, weights.lpips));
    }
    if let Some(v) = identity {
        terms.push((v, weights.id));
    }
    let total = g.weighted_sum(&terms);
    ImageLossVars {
        total,
        l2,
        perceptual,
        identity,
    }
}

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    a.check_same_shape(b)
}

/// Mean squared error over every pixel and channel.
pub fn l2_loss(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

pub fn perceptual_loss(a: &ImageBuffer, b: &ImageBuffer, net: &ProxyFeatureNet) -> Result<f64> {
    check_pair(a, b)?;
    let mut g = Graph::new();
    let nv = net.bind(&mut g);
    let av = g.constant(a.tensor().clone());
    let bv = g.constant(b.tensor().clone());
    let l = perceptual_on(&mut g, &nv, av, bv);
    Ok(g.value(l).item())
}

/// Cosine similarity of masked identity embeddings, in `[-1, 1]`.
pub fn identity_similarity(a: &ImageBuffer, b: &ImageBuffer, net: &ProxyFeatureNet, mask: &RegionMask) -> Result<f64> {
    check_pair(a, b)?;
    a.check_mask(mask)?;
    let mut g = Graph::new();
    let nv = net.bind(&mut g);
    let av = g.constant(a.tensor().clone());
    let bv = g.constant(b.tensor().clone());
    let c = identity_similarity_on(&mut g, &nv, av, bv, mask);
    Ok(g.value(c).item())
}

/// `1 - cos(embed(a * mask), embed(b * mask))`; 1 when either embedding vanishes.
pub fn identity_loss(a: &ImageBuffer, b: &ImageBuffer, net: &ProxyFeatureNet, mask: &RegionMask) -> Result<f64> {
    Ok(1.0 - identity_similarity(a, b, net, mask)?)
}

pub fn image_loss(
    a: &ImageBuffer,
    b: &ImageBuffer,
    weights: &LossWeights,
    net: &ProxyFeatureNet,
    mask: &RegionMask,
) -> Result<f64> {
    check_pair(a, b)?;
    a.check_mask(mask)?;
    let mut g = Graph::new();
    let nv = net.bind(&mut g);
    let av = g.constant(a.tensor().clone());
    let bv = g.constant(b.tensor().clone());
    let l = image_loss_on(&mut g, weights, &nv, av, bv, mask);
    Ok(g.value(l.total).item())
}

/// Disentanglement loss: masked image loss of `G(w_N + delta_b)` against the image.
pub fn ind_loss(
    image: &ImageBuffer,
    mask: &RegionMask,
    w_n: &StyleLatent,
    delta_b: &StyleLatent,
    gen: &GeneratorParams,
    weights: &LossWeights,
    net: &ProxyFeatureNet,
) -> Result<f64> {
    image.check_mask(mask)?;
    let y = gen.synthesize(&w_n.add(delta_b)?)?;
    image_loss(&image.masked(mask)?, &y.masked(mask)?, weights, net, mask)
}

/// Masked reconstruction loss on `y_N` plus `weights.ind` times the disentanglement loss.
pub fn total_loss(
    image: &ImageBuffer,
    mask: &RegionMask,
    trace: &RefinementTrace,
    delta_b: &StyleLatent,
    gen: &GeneratorParams,
    weights: &LossWeights,
    net: &ProxyFeatureNet,
) -> Result<f64> {
    if trace.steps.is_empty() {
        return Err(Error::InvalidArgument("total loss needs a completed trace".into()));
    }
    let recon = image_loss(&image.masked(mask)?, &trace.final_recon().masked(mask)?, weights, net, mask)?;
    let ind = ind_loss(image, mask, trace.final_latent(), delta_b, gen, weights, net)?;
    Ok(recon + weights.ind * ind)
}
