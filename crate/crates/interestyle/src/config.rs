//! Flat `key = value` run configuration with dotted keys.
//!
//! Every key has a default; files and `--set` overrides may only name known
//! keys. The resolved map is written next to each command's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use interestyle_core::encoder::EncoderConfig;
use interestyle_core::objective::{LossWeights, ProxyConfig};
use interestyle_core::region::BlurSchedule;
use interestyle_core::scene::SceneConfig;
use interestyle_core::synthgen::GeneratorConfig;
use interestyle_core::trainloop::{Ablation, IndSource, TrainConfig};

use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_to_string};

const DEFAULTS: &[(&str, &str)] = &[
    ("model.generator_seed", "0"),
    ("model.z_dim", "64"),
    ("model.latent_dim", "64"),
    ("model.mapping_layers", "3"),
    ("model.channels", "16,16,16,8,4"),
    ("model.style_gain", "0.6"),
    ("model.output_gain", "2.0"),
    ("model.encoder_stages", "8,16,16,16"),
    ("model.head_channels", "16"),
    ("model.proxy_channels", "8,16,16"),
    ("model.proxy_seed", "2"),
    ("train.iterations", "3"),
    ("train.r_max", "8.0"),
    ("train.dilation_radius", "3"),
    ("train.lr", "1e-4"),
    ("train.batch_size", "8"),
    ("train.max_steps", "5000"),
    ("train.data_seed", "1"),
    ("train.model_seed", "1"),
    ("train.shuffle_seed", "3"),
    ("train.use_ind", "true"),
    ("train.use_unf", "true"),
    ("train.mask_losses", "true"),
    ("train.detach_between_iters", "false"),
    ("train.ind_source", "image"),
    ("train.checkpoint_every", "1000"),
    ("train.w0_samples", "10000"),
    ("loss.l2", "1.0"),
    ("loss.lpips", "0.8"),
    ("loss.id", "0.1"),
    ("loss.ind", "1.0"),
    ("scene.count", "2000"),
    ("scene.seed", "1"),
    ("scene.eval_fraction", "0.1"),
    ("scene.noise_scales", "16,8,4"),
    ("scene.noise_persistence", "0.5"),
    ("scene.pattern_prob", "0.5"),
    ("scene.checker_share", "0.5"),
    ("scene.pattern_period_min", "6.0"),
    ("scene.pattern_period_max", "14.0"),
    ("scene.semi_axis_min", "18.0"),
    ("scene.semi_axis_max", "26.0"),
    ("scene.position_jitter", "4.0"),
    ("scene.occluder_prob", "0.3"),
    ("scene.occluder_size_min", "10.0"),
    ("scene.occluder_size_max", "24.0"),
    ("scene.bar_thickness_min", "3.0"),
    ("scene.bar_thickness_max", "6.0"),
    ("scene.bar_weight", "0.5"),
    ("scene.blob_weight", "0.5"),
    ("scene.dilation_radius", "3"),
    ("eval.iterations", "3"),
    ("eval.split", "eval"),
    ("eval.occlusion", "any"),
    ("eval.max_samples", "0"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        DEFAULTS.iter().map(|(k, _)| *k)
    }

    /// Sets a known key. Values are checked by [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let slot = self
            .values
            .get_mut(key)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        *slot = value.trim().to_string();
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&read_to_string(path)?)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unknown config key {key}"))
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T> {
        parse(key, self.get(key))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        parse_list(key, self.get(key))
    }

    fn range(&self, prefix: &str) -> Result<(f64, f64)> {
        Ok((self.num(&format!("{prefix}_min"))?, self.num(&format!("{prefix}_max"))?))
    }

    /// Resolved configuration text, one sorted `key = value` line per key.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.values).expect("string map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config json: {e}")))?;
        let mut c = Self::default();
        for (k, v) in map {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    pub fn apply_ablation(&mut self, preset: Ablation) -> Result<()> {
        let (m, i, u) = preset.flags();
        self.set("train.mask_losses", &m.to_string())?;
        self.set("train.use_ind", &i.to_string())?;
        self.set("train.use_unf", &u.to_string())
    }

    /// Every typed view parses and validates.
    pub fn validate(&self) -> Result<()> {
        self.generator()?.validate()?;
        self.encoder()?;
        self.proxy()?;
        self.train()?.validate()?;
        self.scene()?.validate()?;
        self.eval()?;
        Ok(())
    }

    pub fn generator(&self) -> Result<GeneratorConfig> {
        Ok(GeneratorConfig {
            z_dim: self.num("model.z_dim")?,
            latent_dim: self.num("model.latent_dim")?,
            mapping_layers: self.num("model.mapping_layers")?,
            channels: self.list("model.channels")?,
            style_gain: self.num("model.style_gain")?,
            output_gain: self.num("model.output_gain")?,
            seed: self.num("model.generator_seed")?,
        })
    }

    pub fn encoder(&self) -> Result<EncoderConfig> {
        let g = self.generator()?;
        let c = EncoderConfig {
            image_channels: interestyle_core::synthgen::IMAGE_CHANNELS,
            stage_channels: self.list("model.encoder_stages")?,
            head_channels: self.num("model.head_channels")?,
            slots: g.slots(),
            latent_dim: g.latent_dim,
            seed: self.num("train.model_seed")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn proxy(&self) -> Result<ProxyConfig> {
        let channels: Vec<usize> = self.list("model.proxy_channels")?;
        if channels.is_empty() || channels.contains(&0) {
            return Err(Error::Config("model.proxy_channels must be positive".into()));
        }
        Ok(ProxyConfig {
            channels,
            seed: self.num("model.proxy_seed")?,
        })
    }

    pub fn weights(&self) -> Result<LossWeights> {
        Ok(LossWeights {
            l2: self.num("loss.l2")?,
            lpips: self.num("loss.lpips")?,
            id: self.num("loss.id")?,
            ind: self.num("loss.ind")?,
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            schedule: BlurSchedule {
                r_max: self.num("train.r_max")?,
                iterations: self.num("train.iterations")?,
            },
            weights: self.weights()?,
            dilation_radius: self.num("train.dilation_radius")?,
            learning_rate: self.num("train.lr")?,
            batch_size: self.num("train.batch_size")?,
            max_steps: self.num("train.max_steps")?,
            data_seed: self.num("train.data_seed")?,
            model_seed: self.num("train.model_seed")?,
            shuffle_seed: self.num("train.shuffle_seed")?,
            use_ind: self.num("train.use_ind")?,
            use_unf: self.num("train.use_unf")?,
            mask_losses: self.num("train.mask_losses")?,
            detach_between_iters: self.num("train.detach_between_iters")?,
            ind_source: IndSource::parse(self.get("train.ind_source"))?,
            checkpoint_every: self.num("train.checkpoint_every")?,
            w0_samples: self.num("train.w0_samples")?,
        })
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        Ok(SceneConfig {
            noise_scales: self.list("scene.noise_scales")?,
            noise_persistence: self.num("scene.noise_persistence")?,
            pattern_prob: self.num("scene.pattern_prob")?,
            checker_share: self.num("scene.checker_share")?,
            pattern_period: self.range("scene.pattern_period")?,
            semi_axis: self.range("scene.semi_axis")?,
            position_jitter: self.num("scene.position_jitter")?,
            occluder_prob: self.num("scene.occluder_prob")?,
            occluder_size: self.range("scene.occluder_size")?,
            bar_thickness: self.range("scene.bar_thickness")?,
            kind_weights: (self.num("scene.bar_weight")?, self.num("scene.blob_weight")?),
            dilation_radius: self.num("scene.dilation_radius")?,
            count: self.num("scene.count")?,
            seed: self.num("scene.seed")?,
            eval_fraction: self.num("scene.eval_fraction")?,
        })
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        let iterations: usize = self.num("eval.iterations")?;
        if iterations == 0 {
            return Err(Error::Config("eval.iterations must be >= 1".into()));
        }
        let split = self.get("eval.split").to_string();
        if !["train", "eval", "all"].contains(&split.as_str()) {
            return Err(Error::Config(format!("eval.split must be train, eval or all, got {split:?}")));
        }
        let occlusion = self.get("eval.occlusion").to_string();
        if !["any", "none", "occluded"].contains(&occlusion.as_str()) {
            return Err(Error::Config(format!("eval.occlusion must be any, none or occluded, got {occlusion:?}")));
        }
        Ok(EvalConfig {
            iterations,
            split,
            occlusion,
            max_samples: self.num("eval.max_samples")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub iterations: usize,
    /// `train`, `eval` or `all`.
    pub split: String,
    /// `any`, `none` (unoccluded only) or `occluded`.
    pub occlusion: String,
    /// 0 keeps every sample.
    pub max_samples: usize,
}
