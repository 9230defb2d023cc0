//! On-disk scene datasets: PNG images and masks, one latent container and a
//! JSON-lines manifest with per-file SHA-256 checksums.

use std::path::{Path, PathBuf};

use interestyle_core::region::dilate_mask;
use interestyle_core::scene::{sample_id, sample_scene, scene_seed, split_of, Occlusion, OcclusionKind, SceneConfig, SceneSample};
use interestyle_core::synthgen::GeneratorParams;
use interestyle_core::StyleLatent;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::ArrayContainer;
use crate::error::{format_err, Error, Result};
use crate::fsutil::{atomic_write, create_dir_all, read, read_to_string, sha256_hex};
use crate::imageio::{image_png_bytes, load_image, load_mask, mask_png_bytes};

pub const MANIFEST: &str = "manifest.jsonl";
pub const LATENTS: &str = "latents.arr";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub dilated_mask_path: String,
    pub latent_key: String,
    pub occlusion_kind: String,
    pub coverage: f64,
    pub split: String,
    pub image_sha256: String,
    pub mask_sha256: String,
    pub dilated_mask_sha256: String,
}

struct Encoded {
    record: ManifestRecord,
    files: [(String, Vec<u8>); 3],
    latent: StyleLatent,
}

fn encode(index: usize, count: usize, seed: u64, scfg: &SceneConfig, gen: &GeneratorParams) -> Result<Encoded> {
    let id = sample_id(index);
    let s = sample_scene(scene_seed(seed, index as u64), scfg, gen)?;
    let image_path = format!("images/{id}.png");
    let mask_path = format!("masks/{id}.png");
    let dilated_mask_path = format!("dilated/{id}.png");
    let img = image_png_bytes(&s.image, Path::new(&image_path))?;
    let mask = mask_png_bytes(&s.mask, Path::new(&mask_path))?;
    let dil = mask_png_bytes(&s.dilated_mask, Path::new(&dilated_mask_path))?;
    let record = ManifestRecord {
        id: id.clone(),
        image_sha256: sha256_hex(&img),
        mask_sha256: sha256_hex(&mask),
        dilated_mask_sha256: sha256_hex(&dil),
        image_path: image_path.clone(),
        mask_path: mask_path.clone(),
        dilated_mask_path: dilated_mask_path.clone(),
        latent_key: id,
        occlusion_kind: s.occlusion.kind.name().to_string(),
        coverage: s.occlusion.coverage,
        split: split_of(index, count, scfg.eval_fraction).to_string(),
    };
    Ok(Encoded {
        record,
        files: [(image_path, img), (mask_path, mask), (dilated_mask_path, dil)],
        latent: s.w_gt,
    })
}

/// Writes `n` scenes under `out_dir` and returns the manifest path.
pub fn make_dataset(n: usize, seed: u64, scfg: &SceneConfig, gen: &GeneratorParams, out_dir: &Path) -> Result<PathBuf> {
    scfg.validate()?;
    for sub in ["images", "masks", "dilated"] {
        create_dir_all(&out_dir.join(sub))?;
    }
    let encoded: Vec<Encoded> = (0..n)
        .into_par_iter()
        .map(|i| encode(i, n, seed, scfg, gen))
        .collect::<Result<_>>()?;
    let mut latents = ArrayContainer::new();
    let mut manifest = String::new();
    for e in &encoded {
        for (rel, bytes) in &e.files {
            atomic_write(&out_dir.join(rel), bytes)?;
        }
        latents.insert_tensor(e.record.latent_key.clone(), e.latent.tensor());
        manifest.push_str(&serde_json::to_string(&e.record).expect("record serializes"));
        manifest.push('\n');
    }
    latents.save(&out_dir.join(LATENTS))?;
    let path = out_dir.join(MANIFEST);
    atomic_write(&path, manifest.as_bytes())?;
    log::info!("wrote {n} scenes to {}", out_dir.display());
    Ok(path)
}

/// Opened dataset directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub records: Vec<ManifestRecord>,
    latents: ArrayContainer,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = read_to_string(&mpath)?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| format_err(&mpath, format!("line {}: {e}", n + 1))))
            .collect::<Result<Vec<ManifestRecord>>>()?;
        let latents = ArrayContainer::load(&dir.join(LATENTS))?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            records,
            latents,
        })
    }

    /// Records of a split (`train`, `eval` or `all`).
    pub fn split(&self, split: &str) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| split == "all" || r.split == split).collect()
    }

    pub fn record(&self, id: &str) -> Result<&ManifestRecord> {
        self.records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Invalid(format!("no sample {id:?} in {}", self.dir.display())))
    }

    pub fn latent(&self, rec: &ManifestRecord) -> Result<StyleLatent> {
        let t = self
            .latents
            .tensor(&rec.latent_key)
            .ok_or_else(|| format_err(self.dir.join(LATENTS), format!("missing latent {}", rec.latent_key)))?;
        Ok(StyleLatent::from_tensor(t)?)
    }

    /// Loads one sample. With `dilation` set the dilated mask is recomputed
    /// from the raw mask at that radius instead of read from disk.
    pub fn load(&self, rec: &ManifestRecord, dilation: Option<usize>) -> Result<SceneSample> {
        let image = load_image(&self.dir.join(&rec.image_path))?;
        let mask = load_mask(&self.dir.join(&rec.mask_path))?;
        let dilated_mask = match dilation {
            Some(r) => dilate_mask(&mask, r)?,
            None => load_mask(&self.dir.join(&rec.dilated_mask_path))?,
        };
        let kind = OcclusionKind::parse(&rec.occlusion_kind)?;
        Ok(SceneSample {
            image,
            mask,
            dilated_mask,
            w_gt: self.latent(rec)?,
            occlusion: Occlusion {
                kind,
                coverage: rec.coverage,
            },
        })
    }

    /// Checks every referenced file against its manifest checksum.
    pub fn verify(&self) -> Result<()> {
        for r in &self.records {
            for (rel, sum) in [
                (&r.image_path, &r.image_sha256),
                (&r.mask_path, &r.mask_sha256),
                (&r.dilated_mask_path, &r.dilated_mask_sha256),
            ] {
                let path = self.dir.join(rel);
                if &sha256_hex(&read(&path)?) != sum {
                    return Err(format_err(path, "checksum mismatch"));
                }
            }
        }
        Ok(())
    }
}
