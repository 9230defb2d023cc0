//! Evaluation drivers over checkpoints and datasets: masked metrics,
//! per-iteration variance, inversion traces, style mixing and latent edits.

use std::fmt::Write as _;
use std::path::Path;

use interestyle_core::encoder::{rollout, RefinementTrace};
use interestyle_core::evalkit::{
    apply_edit, compute_direction, evaluate_sample, latent_variance, mix_range, EditDirection, MetricsReport, SampleMetrics,
};
use interestyle_core::region::BlurSchedule;
use interestyle_core::synthgen::StyleRange;
use interestyle_core::{ImageBuffer, StyleLatent};
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::EvalConfig;
use crate::container::ArrayContainer;
use crate::dataset::{Dataset, ManifestRecord};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, create_dir_all};
use crate::imageio::{hstack, save_image};

/// Records selected by split, occlusion filter and sample cap.
pub fn select<'a>(ds: &'a Dataset, cfg: &EvalConfig) -> Vec<&'a ManifestRecord> {
    let mut recs: Vec<&ManifestRecord> = ds
        .split(&cfg.split)
        .into_iter()
        .filter(|r| match cfg.occlusion.as_str() {
            "none" => r.occlusion_kind == "none",
            "occluded" => r.occlusion_kind != "none",
            _ => true,
        })
        .collect();
    if cfg.max_samples > 0 {
        recs.truncate(cfg.max_samples);
    }
    recs
}

/// Per-sample metrics in record order plus the aggregate. Samples that fail
/// to load or evaluate are logged, counted as omitted and skipped.
pub fn masked_metrics(ck: &Checkpoint, ds: &Dataset, cfg: &EvalConfig) -> Result<(Vec<(String, SampleMetrics)>, MetricsReport)> {
    let recs = select(ds, cfg);
    if recs.is_empty() {
        return Err(Error::Invalid(format!("split {:?} of {} is empty", cfg.split, ds.dir.display())));
    }
    let results: Vec<Result<SampleMetrics>> = recs
        .par_iter()
        .map(|r| {
            let s = ds.load(r, None)?;
            Ok(evaluate_sample(
                &s.image,
                &s.mask,
                &s.dilated_mask,
                ck.encoder(),
                &ck.gen,
                &ck.w0,
                &ck.proxy,
                cfg.iterations,
            )?)
        })
        .collect();
    let mut rows = Vec::new();
    let mut omitted = 0;
    for (r, res) in recs.iter().zip(results) {
        match res {
            Ok(m) => rows.push((r.id.clone(), m)),
            Err(e) => {
                log::warn!("sample {} skipped: {e}", r.id);
                omitted += 1;
            }
        }
    }
    let metrics: Vec<SampleMetrics> = rows.iter().map(|(_, m)| m.clone()).collect();
    let report = MetricsReport::aggregate(&metrics, omitted)?;
    Ok((rows, report))
}

/// Mean `latent_variance(w_i)` for `i = 0..=N` over the selected samples.
pub fn variance_report(ck: &Checkpoint, ds: &Dataset, cfg: &EvalConfig) -> Result<Vec<f64>> {
    Ok(masked_metrics(ck, ds, cfg)?.1.variance)
}

pub const METRIC_COLUMNS: &str = "interest_l2,interest_perceptual,full_l2,full_perceptual,identity_similarity";

/// Writes `metrics.csv` (per-sample rows and a `mean` row), `summary.json`
/// and `iterations.csv`.
pub fn write_metrics(out_dir: &Path, rows: &[(String, SampleMetrics)], report: &MetricsReport) -> Result<()> {
    create_dir_all(out_dir)?;
    let mut csv = format!("id,{METRIC_COLUMNS},final_variance\n");
    let line = |id: &str, l2: f64, lp: f64, fl2: f64, fp: f64, idsim: f64, var: f64| {
        format!("{id},{l2},{lp},{fl2},{fp},{idsim},{var}\n")
    };
    for (id, m) in rows {
        let var = *m.variance.last().unwrap_or(&0.0);
        csv.push_str(&line(id, m.interest_l2, m.interest_perceptual, m.full_l2, m.full_perceptual, m.identity_similarity, var));
    }
    let var = *report.variance.last().unwrap_or(&0.0);
    csv.push_str(&line(
        "mean",
        report.interest_l2,
        report.interest_perceptual,
        report.full_l2,
        report.full_perceptual,
        report.identity_similarity,
        var,
    ));
    atomic_write(&out_dir.join("metrics.csv"), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    atomic_write(&out_dir.join("summary.json"), json.as_bytes())?;
    write_iterations(&out_dir.join("iterations.csv"), report)
}

pub fn write_iterations(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut csv = String::from("iteration,interest_l2,variance\n");
    for (i, (l2, v)) in report.iteration_l2.iter().zip(&report.variance).enumerate() {
        let _ = writeln!(csv, "{i},{l2},{v}");
    }
    atomic_write(path, csv.as_bytes())
}

pub fn write_variance(path: &Path, variance: &[f64]) -> Result<()> {
    let mut csv = String::from("iteration,mean_variance\n");
    for (i, v) in variance.iter().enumerate() {
        let _ = writeln!(csv, "{i},{v}");
    }
    atomic_write(path, csv.as_bytes())
}

/// Mask-free refinement trace of `image` with `iterations` steps.
pub fn invert_trace(ck: &Checkpoint, image: &ImageBuffer, iterations: usize) -> Result<RefinementTrace> {
    let sched = BlurSchedule::new(0.0, iterations)?;
    Ok(rollout(image, None, &sched, ck.encoder(), &ck.gen, &ck.w0)?)
}

/// Writes `recon_<i>.png` for `i = 0..=N`, `recon.png` (final), `trace.csv`
/// with per-iteration norms and `latents.arr` holding `w_0..w_N`.
pub fn dump_trace(dir: &Path, trace: &RefinementTrace) -> Result<()> {
    create_dir_all(dir)?;
    let mut csv = String::from("iteration,latent_norm,delta_norm,variance\n");
    let mut latents = ArrayContainer::new();
    for (i, (w, y)) in trace.latents().iter().zip(trace.recons()).enumerate() {
        save_image(y, &dir.join(format!("recon_{i}.png")))?;
        latents.insert_tensor(format!("w_{i}"), w.tensor());
        let delta = if i == 0 { 0.0 } else { trace.steps[i - 1].delta.norm() };
        let _ = writeln!(csv, "{i},{},{delta},{}", w.norm(), latent_variance(w));
    }
    save_image(trace.final_recon(), &dir.join("recon.png"))?;
    latents.save(&dir.join("latents.arr"))?;
    atomic_write(&dir.join("trace.csv"), csv.as_bytes())
}

/// Latents and renders of a style-mixing run.
pub struct MixResult {
    pub wa: StyleLatent,
    pub wb: StyleLatent,
    pub mixed: StyleLatent,
    pub render_a: ImageBuffer,
    pub render_b: ImageBuffer,
    pub render_mixed: ImageBuffer,
}

/// Inverts both images and swaps in `range` of B's styles.
pub fn mix_report(ck: &Checkpoint, a: &ImageBuffer, b: &ImageBuffer, range: &str, iterations: usize) -> Result<MixResult> {
    let range = StyleRange::parse(range)?;
    let wa = invert_trace(ck, a, iterations)?.final_latent().clone();
    let wb = invert_trace(ck, b, iterations)?.final_latent().clone();
    let mixed = mix_range(&wa, &wb, range)?;
    Ok(MixResult {
        render_a: ck.gen.synthesize(&wa)?,
        render_b: ck.gen.synthesize(&wb)?,
        render_mixed: ck.gen.synthesize(&mixed)?,
        wa,
        wb,
        mixed,
    })
}

/// Writes `a.png`, `b.png`, `mixed.png`, `grid.png` (A | B | mixed) and `latents.arr`.
pub fn write_mix(dir: &Path, mix: &MixResult) -> Result<()> {
    create_dir_all(dir)?;
    save_image(&mix.render_a, &dir.join("a.png"))?;
    save_image(&mix.render_b, &dir.join("b.png"))?;
    save_image(&mix.render_mixed, &dir.join("mixed.png"))?;
    save_image(&hstack(&[&mix.render_a, &mix.render_b, &mix.render_mixed])?, &dir.join("grid.png"))?;
    let mut c = ArrayContainer::new();
    c.insert_tensor("a", mix.wa.tensor());
    c.insert_tensor("b", mix.wb.tensor());
    c.insert_tensor("mixed", mix.mixed.tensor());
    c.save(&dir.join("latents.arr"))
}

/// Direction separating scenes whose ground-truth latent exceeds the median
/// in dimension `dim` (slot 0) from those below it.
pub fn threshold_direction(ds: &Dataset, split: &str, dim: usize) -> Result<EditDirection> {
    let latents: Vec<StyleLatent> = ds.split(split).into_iter().map(|r| ds.latent(r)).collect::<Result<_>>()?;
    let first = latents.first().ok_or_else(|| Error::Invalid("no latents to build a direction from".into()))?;
    if dim >= first.dim() {
        return Err(Error::Invalid(format!("dimension {dim} out of range for d = {}", first.dim())));
    }
    let mut vals: Vec<f64> = latents.iter().map(|w| w.row(0)[dim]).collect();
    vals.sort_by(f64::total_cmp);
    let median = vals[vals.len() / 2];
    let (pos, neg): (Vec<StyleLatent>, Vec<StyleLatent>) = latents.into_iter().partition(|w| w.row(0)[dim] >= median);
    Ok(compute_direction(&pos, &neg, &format!("dim{dim}"))?)
}

/// Renders of `w + alpha * direction` for each alpha, side by side.
pub fn edit_strip(ck: &Checkpoint, w: &StyleLatent, dir: &EditDirection, alphas: &[f64]) -> Result<ImageBuffer> {
    let renders = alphas
        .iter()
        .map(|&a| Ok(ck.gen.synthesize(&apply_edit(w, dir, a)?)?))
        .collect::<Result<Vec<_>>>()?;
    hstack(&renders.iter().collect::<Vec<_>>())
}
