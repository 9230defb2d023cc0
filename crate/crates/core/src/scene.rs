//! Synthetic scenes: generator renders inside an elliptical support,
//! procedural out-of-distribution backgrounds, and occluders that cross the
//! support boundary. Occluded support pixels are dropped from the mask.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, RegionMask};
use crate::latent::StyleLatent;
use crate::region::dilate_mask;
use crate::synthgen::{standard_normal, GeneratorParams, IMAGE_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcclusionKind {
    None,
    Bar,
    Blob,
}

impl OcclusionKind {
    pub fn name(self) -> &'static str {
        match self {
            OcclusionKind::None => "none",
            OcclusionKind::Bar => "bar",
            OcclusionKind::Blob => "blob",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OcclusionKind::None),
            "bar" => Ok(OcclusionKind::Bar),
            "blob" => Ok(OcclusionKind::Blob),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown occlusion kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub kind: OcclusionKind,
    /// Fraction of the support's pixels hidden by the occluder.
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Value-noise lattice spacings in pixels, coarse to fine.
    pub noise_scales: Vec<usize>,
    /// Amplitude ratio between successive noise octaves.
    pub noise_persistence: f64,
    /// Probability of overlaying a stripe or checker pattern.
    pub pattern_prob: f64,
    /// Share of overlaid patterns that are checkers rather than stripes.
    pub checker_share: f64,
    /// Pattern period range in pixels.
    pub pattern_period: (f64, f64),
    /// Ellipse semi-axis range in pixels.
    pub semi_axis: (f64, f64),
    /// Maximum centre offset in pixels along each axis.
    pub position_jitter: f64,
    pub occluder_prob: f64,
    /// Bar length, or blob diameter, range in pixels.
    pub occluder_size: (f64, f64),
    /// Bar thickness range in pixels.
    pub bar_thickness: (f64, f64),
    /// Relative weights of bar and blob occluders.
    pub kind_weights: (f64, f64),
    pub dilation_radius: usize,
    pub count: usize,
    pub seed: u64,
    pub eval_fraction: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            noise_scales: vec![16, 8, 4],
            noise_persistence: 0.5,
            pattern_prob: 0.5,
            checker_share: 0.5,
            pattern_period: (6.0, 14.0),
            semi_axis: (18.0, 26.0),
            position_jitter: 4.0,
            occluder_prob: 0.3,
            occluder_size: (10.0, 24.0),
            bar_thickness: (3.0, 6.0),
            kind_weights: (0.5, 0.5),
            dilation_radius: 3,
            count: 2000,
            seed: 1,
            eval_fraction: 0.1,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("{name} needs 0 < lo <= hi, got ({lo}, {hi})")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        check_prob("scene.pattern_prob", self.pattern_prob)?;
        check_prob("scene.checker_share", self.checker_share)?;
        check_prob("scene.occluder_prob", self.occluder_prob)?;
        check_prob("scene.eval_fraction", self.eval_fraction)?;
        check_range("scene.pattern_period", self.pattern_period)?;
        check_range("scene.semi_axis", self.semi_axis)?;
        check_range("scene.occluder_size", self.occluder_size)?;
        check_range("scene.bar_thickness", self.bar_thickness)?;
        if self.noise_scales.is_empty() || self.noise_scales.contains(&0) {
            return Err(Error::InvalidArgument("scene.noise_scales must be nonempty and positive".into()));
        }
        if !(self.noise_persistence >= 0.0) || !(self.position_jitter >= 0.0) {
            return Err(Error::InvalidArgument("scene persistence and jitter must be >= 0".into()));
        }
        let (a, b) = self.kind_weights;
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(Error::InvalidArgument("scene.kind_weights must be >= 0 with a positive sum".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub image: ImageBuffer,
    pub mask: RegionMask,
    pub dilated_mask: RegionMask,
    pub w_gt: StyleLatent,
    pub occlusion: Occlusion,
}

/// Per-sample seed derived from a dataset seed and sample index (SplitMix64).
pub fn scene_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn value_noise(rng: &mut ChaCha8Rng, channels: usize, size: usize, cell: usize) -> Vec<f64> {
    let n = size / cell + 2;
    let lattice: Vec<f64> = (0..channels * n * n).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![0.0; channels * size * size];
    for c in 0..channels {
        let lat = &lattice[c * n * n..(c + 1) * n * n];
        for y in 0..size {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy as usize, smooth(fy - libm::floor(fy)));
            for x in 0..size {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx as usize, smooth(fx - libm::floor(fx)));
                let top = lat[y0 * n + x0] * (1.0 - tx) + lat[y0 * n + x0 + 1] * tx;
                let bot = lat[(y0 + 1) * n + x0] * (1.0 - tx) + lat[(y0 + 1) * n + x0 + 1] * tx;
                out[(c * size + y) * size + x] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
    out
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn background(rng: &mut ChaCha8Rng, cfg: &SceneConfig, channels: usize, size: usize) -> Vec<f64> {
    let mut acc = vec![0.0; channels * size * size];
    let mut amp = 1.0;
    let mut total = 0.0;
    for &cell in &cfg.noise_scales {
        let layer = value_noise(rng, channels, size, cell);
        for (a, v) in acc.iter_mut().zip(layer) {
            *a += amp * v;
        }
        total += amp;
        amp *= cfg.noise_persistence;
    }
    for a in &mut acc {
        *a /= total;
    }
    if rng.random::<f64>() < cfg.pattern_prob {
        let checker = rng.random::<f64>() < cfg.checker_share;
        let period = uniform(rng, cfg.pattern_period);
        let angle = rng.random::<f64>() * PI;
        let (ca, sa) = (libm::cos(angle), libm::sin(angle));
        let color: Vec<f64> = (0..channels).map(|_| rng.random::<f64>()).collect();
        let alpha = 0.4 + 0.4 * rng.random::<f64>();
        for y in 0..size {
            for x in 0..size {
                let u = (x as f64 * ca + y as f64 * sa) / period;
                let v = (-(x as f64) * sa + y as f64 * ca) / period;
                let on = if checker {
                    (libm::floor(u) as i64 + libm::floor(v) as i64).rem_euclid(2) == 0
                } else {
                    (libm::floor(2.0 * u) as i64).rem_euclid(2) == 0
                };
                if on {
                    for c in 0..channels {
                        let p = &mut acc[(c * size + y) * size + x];
                        *p = (1.0 - alpha) * *p + alpha * color[c];
                    }
                }
            }
        }
    }
    acc
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = (y - self.cy) / self.ay;
        let dx = (x - self.cx) / self.ax;
        dy * dy + dx * dx <= 1.0
    }
}

fn occluder_shape(rng: &mut ChaCha8Rng, cfg: &SceneConfig, e: &Ellipse, kind: OcclusionKind, size: usize) -> Vec<bool> {
    let theta = rng.random::<f64>() * 2.0 * PI;
    let py = e.cy + e.ay * libm::sin(theta);
    let px = e.cx + e.ax * libm::cos(theta);
    let mut shape = vec![false; size * size];
    match kind {
        OcclusionKind::None => {}
        OcclusionKind::Bar => {
            let len = uniform(rng, cfg.occluder_size);
            let thick = uniform(rng, cfg.bar_thickness);
            let phi = rng.random::<f64>() * PI;
            let (c, s) = (libm::cos(phi), libm::sin(phi));
            for y in 0..size {
                for x in 0..size {
                    let (dy, dx) = (y as f64 + 0.5 - py, x as f64 + 0.5 - px);
                    let along = dx * c + dy * s;
                    let across = -dx * s + dy * c;
                    shape[y * size + x] = libm::fabs(along) <= len / 2.0 && libm::fabs(across) <= thick / 2.0;
                }
            }
        }
        OcclusionKind::Blob => {
            let r = uniform(rng, cfg.occluder_size) / 2.0;
            let lobes: Vec<(f64, f64, f64)> = (0..3)
                .map(|k| {
                    let a = rng.random::<f64>() * 2.0 * PI;
                    let off = if k == 0 { 0.0 } else { 0.5 * r * rng.random::<f64>() };
                    (py + off * libm::sin(a), px + off * libm::cos(a), r * (0.6 + 0.4 * rng.random::<f64>()))
                })
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
                    shape[y * size + x] = lobes.iter().any(|&(ly, lx, lr)| (fy - ly) * (fy - ly) + (fx - lx) * (fx - lx) <= lr * lr);
                }
            }
        }
    }
    shape
}

/// Draws one scene. Deterministic in `seed`.
pub fn sample_scene(seed: u64, cfg: &SceneConfig, gen: &GeneratorParams) -> Result<SceneSample> {
    cfg.validate()?;
    let size = gen.resolution();
    let channels = IMAGE_CHANNELS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let z = standard_normal(&mut rng, gen.config.z_dim);
    let w_gt = gen.broadcast(&gen.map_z(&z)?);
    let render = gen.synthesize(&w_gt)?;

    let half = size as f64 / 2.0;
    let ellipse = Ellipse {
        cy: half + cfg.position_jitter * (2.0 * rng.random::<f64>() - 1.0),
        cx: half + cfg.position_jitter * (2.0 * rng.random::<f64>() - 1.0),
        ay: uniform(&mut rng, cfg.semi_axis),
        ax: uniform(&mut rng, cfg.semi_axis),
    };
    let support: Vec<bool> = (0..size * size)
        .map(|p| ellipse.contains((p / size) as f64 + 0.5, (p % size) as f64 + 0.5))
        .collect();

    let bg = background(&mut rng, cfg, channels, size);
    let mut pixels = bg;
    for c in 0..channels {
        for p in 0..size * size {
            if support[p] {
                pixels[c * size * size + p] = render.data()[c * size * size + p];
            }
        }
    }

    let kind = if rng.random::<f64>() < cfg.occluder_prob {
        let (bar, blob) = cfg.kind_weights;
        if rng.random::<f64>() * (bar + blob) < bar {
            OcclusionKind::Bar
        } else {
            OcclusionKind::Blob
        }
    } else {
        OcclusionKind::None
    };
    let occluder = occluder_shape(&mut rng, cfg, &ellipse, kind, size);
    if kind != OcclusionKind::None {
        let base: Vec<f64> = (0..channels).map(|_| rng.random::<f64>()).collect();
        for p in 0..size * size {
            if occluder[p] {
                let shade = 0.9 + 0.1 * rng.random::<f64>();
                for c in 0..channels {
                    pixels[c * size * size + p] = (base[c] * shade).clamp(0.0, 1.0);
                }
            }
        }
    }

    let support_count = support.iter().filter(|&&s| s).count();
    let hidden = support.iter().zip(&occluder).filter(|(&s, &o)| s && o).count();
    let mask_data = support.iter().zip(&occluder).map(|(&s, &o)| if s && !o { 1.0 } else { 0.0 }).collect();
    let mask = RegionMask::from_vec(size, size, mask_data)?;
    let dilated_mask = dilate_mask(&mask, cfg.dilation_radius)?;
    let coverage = if support_count == 0 { 0.0 } else { hidden as f64 / support_count as f64 };

    Ok(SceneSample {
        image: ImageBuffer::from_vec(channels, size, size, pixels)?,
        mask,
        dilated_mask,
        w_gt,
        occlusion: Occlusion { kind, coverage },
    })
}

/// Split label of sample `index` in a dataset of `count` scenes: the last
/// `round(count * eval_fraction)` indices are held out.
pub fn split_of(index: usize, count: usize, eval_fraction: f64) -> &'static str {
    let eval = libm::round(count as f64 * eval_fraction) as usize;
    if index >= count - eval.min(count) {
        "eval"
    } else {
        "train"
    }
}

/// Identifier used for sample `index` in manifests and latent containers.
pub fn sample_id(index: usize) -> String {
    alloc::format!("s{index:06}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::GeneratorConfig;

    fn gen() -> GeneratorParams {
        GeneratorParams::new(GeneratorConfig::default()).unwrap()
    }

    #[test]
    fn unoccluded_interest_matches_render() {
        let g = gen();
        let cfg = SceneConfig {
            occluder_prob: 0.0,
            ..SceneConfig::default()
        };
        for seed in 0..5 {
            let s = sample_scene(seed, &cfg, &g).unwrap();
            assert_eq!(s.occlusion.kind, OcclusionKind::None);
            let render = g.synthesize(&s.w_gt).unwrap();
            assert_eq!(s.image.masked(&s.mask).unwrap(), render.masked(&s.mask).unwrap());
            assert!(s.mask.is_binary() && s.mask.is_subset_of(&s.dilated_mask));
        }
    }

    #[test]
    fn occluded_pixels_leave_the_mask() {
        let g = gen();
        let cfg = SceneConfig {
            occluder_prob: 1.0,
            ..SceneConfig::default()
        };
        for seed in 0..6 {
            let s = sample_scene(seed, &cfg, &g).unwrap();
            assert_ne!(s.occlusion.kind, OcclusionKind::None);
            assert!(s.occlusion.coverage > 0.0 && s.occlusion.coverage < 1.0);
            let render = g.synthesize(&s.w_gt).unwrap();
            assert_eq!(s.image.masked(&s.mask).unwrap(), render.masked(&s.mask).unwrap());
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let g = gen();
        let cfg = SceneConfig::default();
        let a = sample_scene(42, &cfg, &g).unwrap();
        assert_eq!(a, sample_scene(42, &cfg, &g).unwrap());
        assert_ne!(a.image, sample_scene(43, &cfg, &g).unwrap().image);
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn config_validation() {
        assert!(SceneConfig::default().validate().is_ok());
        assert!(SceneConfig { occluder_prob: 1.5, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { semi_axis: (5.0, 2.0), ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { noise_scales: vec![], ..SceneConfig::default() }.validate().is_err());
    }

    #[test]
    fn split_assignment() {
        let labels: Vec<&str> = (0..10).map(|i| split_of(i, 10, 0.2)).collect();
        assert_eq!(labels.iter().filter(|&&l| l == "eval").count(), 2);
        assert_eq!(labels[9], "eval");
        assert_eq!(split_of(0, 1, 1.0), "eval");
        assert_eq!(split_of(0, 3, 0.0), "train");
        assert_ne!(scene_seed(1, 0), scene_seed(1, 1));
    }
}
