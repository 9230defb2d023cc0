//! A small, frozen style-based generator.
//!
//! A mapping MLP turns `z` into a style vector `w`. The synthesis network
//! starts from a learned 4x4 constant and runs two blocks per resolution
//! level (4, 8, 16, 32, 64 by default). Every block is
//! `[upsample] -> conv3x3 -> instance norm -> style scale/shift -> leaky relu`,
//! and each block reads its own row of the style matrix. A 1x1 projection and
//! a sigmoid produce the RGB output.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::image::ImageBuffer;
use crate::latent::{MapperLatent, StyleLatent};
use crate::nn::{bind, Conv, Dense, Init, ParamTree, LEAKY_SLOPE};
use crate::tensor::Tensor;

/// Style slots per resolution level.
pub const SLOTS_PER_LEVEL: usize = 2;
/// Colour channels of every rendered image.
pub const IMAGE_CHANNELS: usize = 3;
const BASE_RES: usize = 4;
const IN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub z_dim: usize,
    pub latent_dim: usize,
    /// Hidden layers of the mapping MLP.
    pub mapping_layers: usize,
    /// Feature channels per resolution level, coarsest first.
    pub channels: Vec<usize>,
    pub style_gain: f64,
    pub output_gain: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            z_dim: 64,
            latent_dim: 64,
            mapping_layers: 3,
            channels: vec![16, 16, 16, 8, 4],
            style_gain: 0.6,
            output_gain: 2.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// The 8x8, four-slot, eight-dimensional configuration used for gradient checks.
    pub fn micro() -> Self {
        GeneratorConfig {
            z_dim: 8,
            latent_dim: 8,
            mapping_layers: 1,
            channels: vec![4, 3],
            ..Self::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    pub fn slots(&self) -> usize {
        SLOTS_PER_LEVEL * self.levels()
    }

    pub fn resolution(&self) -> usize {
        BASE_RES << (self.levels() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidArgument("generator needs at least one level with channels > 0".into()));
        }
        if self.z_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument("generator dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleAffine<T> {
    pub scale: Dense<T>,
    pub shift: Dense<T>,
}

impl<T> ParamTree<T> for StyleAffine<T> {
    type Of<U> = StyleAffine<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> StyleAffine<U> {
        StyleAffine {
            scale: self.scale.map_leaves(f),
            shift: self.shift.map_leaves(f),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.scale.visit(&alloc::format!("{prefix}/scale"), f);
        self.shift.visit(&alloc::format!("{prefix}/shift"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        self.scale.visit_mut(&alloc::format!("{prefix}/scale"), f);
        self.shift.visit_mut(&alloc::format!("{prefix}/shift"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet<T> {
    pub mapping: Vec<Dense<T>>,
    pub base: T,
    pub convs: Vec<Conv<T>>,
    pub styles: Vec<StyleAffine<T>>,
    pub to_rgb: Conv<T>,
}

impl<T> ParamTree<T> for GeneratorNet<T> {
    type Of<U> = GeneratorNet<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> GeneratorNet<U> {
        GeneratorNet {
            mapping: self.mapping.map_leaves(f),
            base: f(&self.base),
            convs: self.convs.map_leaves(f),
            styles: self.styles.map_leaves(f),
            to_rgb: self.to_rgb.map_leaves(f),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.mapping.visit(&alloc::format!("{prefix}/mapping"), f);
        f(&alloc::format!("{prefix}/base"), &self.base);
        self.convs.visit(&alloc::format!("{prefix}/conv"), f);
        self.styles.visit(&alloc::format!("{prefix}/style"), f);
        self.to_rgb.visit(&alloc::format!("{prefix}/to_rgb"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        self.mapping.visit_mut(&alloc::format!("{prefix}/mapping"), f);
        f(&alloc::format!("{prefix}/base"), &mut self.base);
        self.convs.visit_mut(&alloc::format!("{prefix}/conv"), f);
        self.styles.visit_mut(&alloc::format!("{prefix}/style"), f);
        self.to_rgb.visit_mut(&alloc::format!("{prefix}/to_rgb"), f);
    }
}

/// Frozen generator weights plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    pub net: GeneratorNet<Tensor>,
}

impl GeneratorParams {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(config.seed, 1);
        let d = config.latent_dim;
        let mut mapping = Vec::new();
        let mut width = config.z_dim;
        for _ in 0..config.mapping_layers {
            mapping.push(init.dense_with_bias(d, width, libm::sqrt(2.0), 0.1));
            width = d;
        }
        mapping.push(init.dense_with_bias(d, width, 1.0, 0.1));

        let base = init.normal(&[config.channels[0], BASE_RES, BASE_RES], 1.0);
        let mut convs = Vec::new();
        let mut styles = Vec::new();
        let mut cin = config.channels[0];
        for &c in &config.channels {
            for _ in 0..SLOTS_PER_LEVEL {
                convs.push(init.conv(c, cin, 3, libm::sqrt(2.0)));
                styles.push(StyleAffine {
                    scale: init.dense(c, d, config.style_gain),
                    shift: init.dense(c, d, config.style_gain),
                });
                cin = c;
            }
        }
        let to_rgb = init.conv_with_bias(IMAGE_CHANNELS, cin, 1, config.output_gain, 0.3);
        Ok(GeneratorParams {
            config,
            net: GeneratorNet {
                mapping,
                base,
                convs,
                styles,
                to_rgb,
            },
        })
    }

    pub fn slots(&self) -> usize {
        self.config.slots()
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution()
    }

    pub fn bind(&self, g: &mut Graph) -> GeneratorNet<Var> {
        bind(&self.net, g, false)
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.z_dim {
            return Err(dim_err("map_z input", self.config.z_dim, z.len()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("z contains non-finite values".into()));
        }
        Ok(())
    }

    /// Runs the mapping network.
    pub fn map_z(&self, z: &[f64]) -> Result<MapperLatent> {
        self.check_z(z)?;
        let mut g = Graph::new();
        let net = self.bind(&mut g);
        let zv = g.constant(Tensor::from_vec(&[z.len()], z.to_vec())?);
        let w = map_z_on(&mut g, &net, zv);
        Ok(MapperLatent::new(g.value(w).data().to_vec()))
    }

    fn check_latent(&self, w: &StyleLatent) -> Result<()> {
        if w.slots() != self.slots() || w.dim() != self.config.latent_dim {
            return Err(dim_err(
                "style latent",
                (self.slots(), self.config.latent_dim),
                (w.slots(), w.dim()),
            ));
        }
        Ok(())
    }

    /// Renders a style latent.
    pub fn synthesize(&self, w: &StyleLatent) -> Result<ImageBuffer> {
        self.check_latent(w)?;
        let mut g = Graph::new();
        let net = self.bind(&mut g);
        let wv = g.constant(w.tensor().clone());
        let img = synthesize_on(&mut g, &net, wv);
        ImageBuffer::from_tensor(g.value(img).clone())
    }

    /// Activations after each resolution level, followed by the output image.
    pub fn synthesize_levels(&self, w: &StyleLatent) -> Result<Vec<Tensor>> {
        self.check_latent(w)?;
        let mut g = Graph::new();
        let net = self.bind(&mut g);
        let wv = g.constant(w.tensor().clone());
        let (img, levels) = synthesize_with_levels(&mut g, &net, wv);
        let mut out: Vec<Tensor> = levels.iter().map(|&v| g.value(v).clone()).collect();
        out.push(g.value(img).clone());
        Ok(out)
    }

    pub fn broadcast(&self, w: &MapperLatent) -> StyleLatent {
        w.broadcast(self.slots())
    }

    /// Mean mapping output over `num_samples` standard-normal draws, broadcast to every slot.
    pub fn average_latent(&self, num_samples: usize, seed: u64) -> Result<StyleLatent> {
        if num_samples < 1 {
            return Err(Error::InvalidArgument("average_latent needs at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.latent_dim;
        let mut acc = vec![0.0; d];
        const CHUNK: usize = 512;
        let mut done = 0;
        while done < num_samples {
            let take = CHUNK.min(num_samples - done);
            let mut g = Graph::new();
            let net = self.bind(&mut g);
            for _ in 0..take {
                let z = standard_normal(&mut rng, self.config.z_dim);
                let zv = g.constant(Tensor::from_vec(&[z.len()], z)?);
                let w = map_z_on(&mut g, &net, zv);
                for (a, v) in acc.iter_mut().zip(g.value(w).data()) {
                    *a += v;
                }
            }
            done += take;
        }
        for a in &mut acc {
            *a /= num_samples as f64;
        }
        Ok(MapperLatent::new(acc).broadcast(self.slots()))
    }
}

/// Draws a standard-normal vector.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn map_z_on(g: &mut Graph, net: &GeneratorNet<Var>, z: Var) -> Var {
    let mut h = z;
    let last = net.mapping.len() - 1;
    for (i, layer) in net.mapping.iter().enumerate() {
        h = layer.apply(g, h);
        if i < last {
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
    }
    h
}

/// Synthesis on a graph; `w` is a `[slots, d]` variable.
pub fn synthesize_on(g: &mut Graph, net: &GeneratorNet<Var>, w: Var) -> Var {
    synthesize_with_levels(g, net, w).0
}

fn synthesize_with_levels(g: &mut Graph, net: &GeneratorNet<Var>, w: Var) -> (Var, Vec<Var>) {
    let mut x = net.base;
    let mut levels = Vec::new();
    for (slot, (conv, style)) in net.convs.iter().zip(&net.styles).enumerate() {
        if slot > 0 && slot % SLOTS_PER_LEVEL == 0 {
            x = g.upsample2x(x);
        }
        x = conv.apply(g, x, 1);
        x = g.instance_norm(x, IN_EPS);
        let row = g.row(w, slot);
        let scale = style.scale.apply(g, row);
        let shift = style.shift.apply(g, row);
        x = g.modulate(x, scale, shift);
        x = g.leaky_relu(x, LEAKY_SLOPE);
        if slot % SLOTS_PER_LEVEL == SLOTS_PER_LEVEL - 1 {
            levels.push(x);
        }
    }
    let rgb = net.to_rgb.apply(g, x, 1);
    (g.sigmoid(rgb), levels)
}

/// Named slot ranges for style mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StyleRange {
    Coarse,
    Middle,
    Fine,
}

impl StyleRange {
    pub const ALL: [StyleRange; 3] = [StyleRange::Coarse, StyleRange::Middle, StyleRange::Fine];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "coarse" => Ok(StyleRange::Coarse),
            "middle" => Ok(StyleRange::Middle),
            "fine" => Ok(StyleRange::Fine),
            other => Err(Error::UnknownRange(other.into())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleRange::Coarse => "coarse",
            StyleRange::Middle => "middle",
            StyleRange::Fine => "fine",
        }
    }

    /// Slots of this range: coarse covers the 4 and 8 levels, middle 16 and 32, fine the rest.
    pub fn slots(self, total: usize) -> BTreeSet<usize> {
        let (lo, hi) = match self {
            StyleRange::Coarse => (0, 4),
            StyleRange::Middle => (4, 8),
            StyleRange::Fine => (8, usize::MAX),
        };
        (lo.min(total)..hi.min(total)).collect()
    }

    pub fn of_slot(slot: usize) -> StyleRange {
        match slot {
            0..=3 => StyleRange::Coarse,
            4..=7 => StyleRange::Middle,
            _ => StyleRange::Fine,
        }
    }
}

/// Takes rows in `slots` from `b` and every other row from `a`.
pub fn style_mix(a: &StyleLatent, b: &StyleLatent, slots: &BTreeSet<usize>) -> Result<StyleLatent> {
    a.check_same_shape(b)?;
    if let Some(&slot) = slots.iter().find(|&&s| s >= a.slots()) {
        return Err(Error::SlotOutOfRange { slot, rows: a.slots() });
    }
    let mut out = a.clone();
    for &s in slots {
        out.row_mut(s).copy_from_slice(b.row(s));
    }
    Ok(out)
}
