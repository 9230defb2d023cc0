#![allow(dead_code)]

use interestyle_core::encoder::{EncoderConfig, EncoderParams};
use interestyle_core::nn::{Init, ParamTree};
use interestyle_core::objective::{ProxyConfig, ProxyFeatureNet};
use interestyle_core::synthgen::{GeneratorConfig, GeneratorParams};
use interestyle_core::{ImageBuffer, RegionMask, StyleLatent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Micro {
    pub gen: GeneratorParams,
    pub proxy: ProxyFeatureNet,
    pub w0: StyleLatent,
    pub enc: EncoderParams,
}

/// 8x8 generator, proxy and an encoder with randomised heads.
pub fn micro(seed: u64) -> Micro {
    let gen = GeneratorParams::new(GeneratorConfig::micro()).unwrap();
    let proxy = ProxyFeatureNet::new(ProxyConfig::default(), 3).unwrap();
    let w0 = gen.average_latent(32, 1).unwrap();
    let mut enc = EncoderParams::new(EncoderConfig::micro()).unwrap();
    let mut init = Init::new(seed, 0);
    enc.net.visit_mut("", &mut |name, t| {
        if name.contains("/head/") && name.contains("/out/") {
            *t = init.normal(t.dims(), 0.3);
        }
    });
    Micro { gen, proxy, w0, enc }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn image(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::from_vec(c, h, w, (0..c * h * w).map(|_| r.random::<f64>()).collect()).unwrap()
}

pub fn mask(r: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> RegionMask {
    RegionMask::from_vec(h, w, (0..h * w).map(|_| if r.random::<f64>() < p { 1.0 } else { 0.0 }).collect()).unwrap()
}

pub fn latent(r: &mut ChaCha8Rng, slots: usize, dim: usize) -> StyleLatent {
    StyleLatent::from_vec(slots, dim, (0..slots * dim).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}
