//! Training driver: loads the training split, runs the trainer, writes the
//! CSV log and periodic plus final checkpoints, and resumes exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use interestyle_core::scene::SceneSample;
use interestyle_core::trainloop::Frozen;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, create_dir_all, read_to_string};

pub const LOG_HEADER: &str = "step,total_loss,recon_loss,ind_loss,wallclock_s";
pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL: &str = "final.ckpt";

/// Loads the training split with masks dilated at the configured radius.
pub fn load_training_samples(ds: &Dataset, dilation: usize) -> Result<Vec<SceneSample>> {
    ds.split("train").into_iter().map(|r| ds.load(r, Some(dilation))).collect()
}

fn step_checkpoint(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("step_{step:06}.ckpt"))
}

/// Log rows kept when resuming at `step`, plus the wallclock they reached.
fn previous_log(path: &Path, step: u64) -> Result<(Vec<String>, f64)> {
    if !path.exists() {
        return Ok((Vec::new(), 0.0));
    }
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    let mut clock = 0.0;
    for line in text.lines().skip(1) {
        let mut cols = line.split(',');
        let s: u64 = cols.next().and_then(|v| v.parse().ok()).unwrap_or(u64::MAX);
        if s <= step {
            clock = line.rsplit(',').next().and_then(|v| v.parse().ok()).unwrap_or(clock);
            rows.push(line.to_string());
        }
    }
    Ok((rows, clock))
}

fn write_log(path: &Path, rows: &[String]) -> Result<()> {
    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Trains from scratch, or from `resume`, up to `train.max_steps` and
/// returns the final checkpoint path.
pub fn train(config: &RunConfig, data_dir: &Path, out_dir: &Path, resume: Option<&Path>) -> Result<PathBuf> {
    config.validate()?;
    create_dir_all(&out_dir.join("checkpoints"))?;
    let mut ck = match resume {
        Some(p) => {
            let mut ck = Checkpoint::load(p)?;
            if ck.config.generator()? != config.generator()? || ck.config.encoder()? != config.encoder()? {
                return Err(Error::Config("resumed checkpoint was built with a different model configuration".into()));
            }
            ck.config = config.clone();
            ck.trainer.config = config.train()?;
            ck
        }
        None => Checkpoint::init(config)?,
    };
    config.write_resolved(&out_dir.join("config.txt"))?;
    let tcfg = ck.trainer.config.clone();
    let ds = Dataset::open(data_dir)?;
    let samples = load_training_samples(&ds, tcfg.dilation_radius)?;
    if samples.is_empty() && ck.trainer.step < tcfg.max_steps {
        return Err(Error::Invalid(format!("{} has no training samples", data_dir.display())));
    }
    let log_path = out_dir.join(LOG_FILE);
    let (mut rows, clock0) = previous_log(&log_path, ck.trainer.step)?;
    let start = Instant::now();
    log::info!(
        "training from step {} to {} on {} samples",
        ck.trainer.step,
        tcfg.max_steps,
        samples.len()
    );
    while ck.trainer.step < tcfg.max_steps {
        let Checkpoint {
            gen, proxy, w0, trainer, ..
        } = &mut ck;
        let stats = trainer.step_on(&samples, Frozen { gen, net: proxy, w0 })?;
        let done = ck.trainer.step;
        rows.push(format!(
            "{done},{},{},{},{:.3}",
            stats.loss.total,
            stats.loss.recon,
            stats.loss.ind,
            clock0 + start.elapsed().as_secs_f64()
        ));
        if done % 100 == 0 {
            log::info!("step {done}: loss {:.6}", stats.loss.total);
        }
        if tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0 {
            ck.save(&step_checkpoint(out_dir, done))?;
            write_log(&log_path, &rows)?;
        }
    }
    write_log(&log_path, &rows)?;
    let path = out_dir.join(FINAL);
    ck.save(&path)?;
    Ok(path)
}
