//! Cached reference runs: the acceptance scene set and one trained
//! checkpoint per ablation preset.
//!
//! Everything lives under `target/acceptance-cache` (or
//! `$INTERESTYLE_ACCEPTANCE_CACHE`), keyed by the resolved configuration and a
//! numeric fingerprint of the model code. An interrupted training resumes from
//! its last periodic checkpoint.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Instant;

use interestyle::checkpoint::Checkpoint;
use interestyle::config::RunConfig;
use interestyle::dataset::{make_dataset, Dataset};
use interestyle::fsutil::sha256_hex;
use interestyle::train::{train, FINAL};
use interestyle_core::scene::sample_scene;
use interestyle_core::synthgen::GeneratorParams;
use interestyle_core::trainloop::{sample_gradient, Ablation};

pub const SCENES: usize = 2200;
pub const HELD_OUT: usize = 200;
/// Bumped whenever a change would alter trained weights in a way the
/// numeric fingerprint cannot see.
const CACHE_VERSION: &str = "1";

pub fn cache_root() -> PathBuf {
    std::env::var_os("INTERESTYLE_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache"))
}

pub fn base_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.set("scene.count", &SCENES.to_string()).unwrap();
    c.set("scene.eval_fraction", &(HELD_OUT as f64 / SCENES as f64).to_string()).unwrap();
    c.validate().unwrap();
    c
}

/// Hash of outputs that depend on the model code: a scene, `w0`, and the
/// loss and gradient of the initial encoder on that scene.
pub fn fingerprint(config: &RunConfig) -> String {
    let ck = Checkpoint::init(config).unwrap();
    let scene = sample_scene(1, &config.scene().unwrap(), &ck.gen).unwrap();
    let enc = ck.encoder().clone();
    let tcfg = config.train().unwrap();
    let (parts, grads) = sample_gradient(&scene.image, &scene.dilated_mask, &enc, ck.frozen(), &tcfg).unwrap();
    let mut bytes = Vec::new();
    let mut push = |v: f64| bytes.extend_from_slice(&v.to_le_bytes());
    scene.image.data().iter().for_each(|&v| push(v));
    ck.w0.data().iter().for_each(|&v| push(v));
    push(parts.total);
    grads.iter().flat_map(|g| g.data()).for_each(|&v| push(v));
    sha256_hex(&bytes)
}

pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir.join("checkpoints"))
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    found.sort();
    found.pop()
}

pub struct Presets {
    pub data: PathBuf,
    pub runs: Vec<(Ablation, PathBuf)>,
}

pub fn prepare() -> Presets {
    let base = base_config();
    let key = sha256_hex(format!("{CACHE_VERSION}\n{}\n{}", base.to_text(), fingerprint(&base)).as_bytes());
    let root = cache_root().join(&key[..16]);
    let data = root.join("data");
    if Dataset::open(&data).map(|d| d.records.len() == SCENES).unwrap_or(false) {
        eprintln!("reference: reusing scenes in {}", data.display());
    } else {
        eprintln!("reference: generating {SCENES} scenes in {}", data.display());
        let gen = GeneratorParams::new(base.generator().unwrap()).unwrap();
        make_dataset(SCENES, base.scene().unwrap().seed, &base.scene().unwrap(), &gen, &data).unwrap();
    }
    let mut runs = Vec::new();
    for preset in Ablation::ALL {
        let dir = root.join(preset.name().trim_start_matches('+'));
        let fin = dir.join(FINAL);
        if Checkpoint::load(&fin).is_err() {
            let mut cfg = base.clone();
            cfg.apply_ablation(preset).unwrap();
            let resume = latest_checkpoint(&dir);
            eprintln!(
                "reference: training {} into {} (resume: {:?})",
                preset.name(),
                dir.display(),
                resume
            );
            let t = Instant::now();
            train(&cfg, &data, &dir, resume.as_deref()).unwrap();
            eprintln!("reference: {} trained in {:.0} s", preset.name(), t.elapsed().as_secs_f64());
        } else {
            eprintln!("reference: reusing {}", fin.display());
        }
        runs.push((preset, fin));
    }
    Presets { data, runs }
}

impl Presets {
    pub fn checkpoint(&self, preset: Ablation) -> Checkpoint {
        Checkpoint::load(&self.runs.iter().find(|r| r.0 == preset).unwrap().1).unwrap()
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::open(&self.data).unwrap()
    }
}
