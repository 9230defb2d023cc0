//! Evaluation: latent variance, masked distortion metrics, edit directions
//! and style-mixing helpers.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::encoder::{rollout, EncoderParams};
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, RegionMask};
use crate::latent::StyleLatent;
use crate::objective::{identity_similarity, l2_loss, perceptual_loss, ProxyFeatureNet};
use crate::region::BlurSchedule;
use crate::synthgen::{style_mix, GeneratorParams, StyleRange};

/// Mean over dimensions of the population variance across layers.
pub fn latent_variance(w: &StyleLatent) -> f64 {
    let (l, d) = (w.slots(), w.dim());
    let mut total = 0.0;
    for j in 0..d {
        // Shifting by the first row makes identical rows give exactly zero.
        let x0 = w.row(0)[j];
        let mean = (0..l).map(|i| w.row(i)[j] - x0).sum::<f64>() / l as f64;
        total += (0..l)
            .map(|i| {
                let e = w.row(i)[j] - x0 - mean;
                e * e
            })
            .sum::<f64>()
            / l as f64;
    }
    total / d as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditDirection {
    /// Unit Frobenius norm.
    pub direction: StyleLatent,
    pub label: String,
}

fn mean_latent(ws: &[StyleLatent]) -> Result<StyleLatent> {
    let first = ws.first().ok_or_else(|| Error::InvalidArgument("direction needs nonempty latent lists".into()))?;
    let mut acc = StyleLatent::zeros(first.slots(), first.dim());
    for w in ws {
        acc = acc.add(w)?;
    }
    Ok(acc.scaled(1.0 / ws.len() as f64))
}

/// Normalised difference of the positive and negative means.
pub fn compute_direction(pos: &[StyleLatent], neg: &[StyleLatent], label: &str) -> Result<EditDirection> {
    let diff = mean_latent(pos)?.sub(&mean_latent(neg)?)?;
    let norm = diff.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(EditDirection {
        direction: diff.scaled(1.0 / norm),
        label: String::from(label),
    })
}

/// `w + alpha * direction`.
pub fn apply_edit(w: &StyleLatent, dir: &EditDirection, alpha: f64) -> Result<StyleLatent> {
    w.add(&dir.direction.scaled(alpha))
}

/// Takes the named slot range of `wb` and the rest of `wa`.
pub fn mix_range(wa: &StyleLatent, wb: &StyleLatent, range: StyleRange) -> Result<StyleLatent> {
    style_mix(wa, wb, &range.slots(wa.slots()))
}

/// Metrics of a single inverted sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub interest_l2: f64,
    pub interest_perceptual: f64,
    pub full_l2: f64,
    pub full_perceptual: f64,
    pub identity_similarity: f64,
    /// `latent_variance(w_i)` for `i = 0..=N`.
    pub variance: Vec<f64>,
    /// Interest L2 of `y_i` for `i = 0..=N`.
    pub iteration_l2: Vec<f64>,
}

/// Inverts without a mask and scores the result against the image.
///
/// `dilated` drives the L2 and perceptual terms, `raw` the identity similarity.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_sample(
    image: &ImageBuffer,
    raw: &RegionMask,
    dilated: &RegionMask,
    enc: &EncoderParams,
    gen: &GeneratorParams,
    w0: &StyleLatent,
    net: &ProxyFeatureNet,
    iterations: usize,
) -> Result<SampleMetrics> {
    let sched = BlurSchedule::new(0.0, iterations)?;
    let trace = rollout(image, None, &sched, enc, gen, w0)?;
    score_recons(image, raw, dilated, &trace.latents(), &trace.recons(), net)
}

/// Scores given latents `w_0..w_N` and renders `y_0..y_N`.
pub fn score_recons(
    image: &ImageBuffer,
    raw: &RegionMask,
    dilated: &RegionMask,
    latents: &[&StyleLatent],
    recons: &[&ImageBuffer],
    net: &ProxyFeatureNet,
) -> Result<SampleMetrics> {
    let y_n = *recons.last().ok_or_else(|| Error::InvalidArgument("no reconstructions to score".into()))?;
    let im = image.masked(dilated)?;
    let ym = y_n.masked(dilated)?;
    let iteration_l2 = recons
        .iter()
        .map(|y| l2_loss(&im, &y.masked(dilated)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleMetrics {
        interest_l2: l2_loss(&im, &ym)?,
        interest_perceptual: perceptual_loss(&im, &ym, net)?,
        full_l2: l2_loss(image, y_n)?,
        full_perceptual: perceptual_loss(image, y_n, net)?,
        identity_similarity: identity_similarity(image, y_n, net, raw)?,
        variance: latents.iter().map(|w| latent_variance(w)).collect(),
        iteration_l2,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub interest_l2: f64,
    pub interest_perceptual: f64,
    pub full_l2: f64,
    pub full_perceptual: f64,
    pub identity_similarity: f64,
    pub variance: Vec<f64>,
    pub iteration_l2: Vec<f64>,
    pub samples: usize,
    /// Samples skipped because they could not be loaded or evaluated.
    pub omitted: usize,
}

impl MetricsReport {
    /// Means over `samples`, reduced in the given order.
    pub fn aggregate(samples: &[SampleMetrics], omitted: usize) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InvalidArgument("metrics need at least one sample".into()));
        }
        let iters = samples[0].variance.len();
        if samples.iter().any(|s| s.variance.len() != iters || s.iteration_l2.len() != iters) {
            return Err(Error::InvalidArgument("samples disagree on iteration count".into()));
        }
        let mean = |f: &dyn Fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n as f64;
        Ok(MetricsReport {
            interest_l2: mean(&|s| s.interest_l2),
            interest_perceptual: mean(&|s| s.interest_perceptual),
            full_l2: mean(&|s| s.full_l2),
            full_perceptual: mean(&|s| s.full_perceptual),
            identity_similarity: mean(&|s| s.identity_similarity),
            variance: (0..iters).map(|i| mean(&|s| s.variance[i])).collect(),
            iteration_l2: (0..iters).map(|i| mean(&|s| s.iteration_l2[i])).collect(),
            samples: n,
            omitted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::MapperLatent;

    fn latent(l: usize, d: usize, seed: f64) -> StyleLatent {
        StyleLatent::from_vec(l, d, (0..l * d).map(|i| libm::sin(seed * (i as f64 + 1.0))).collect()).unwrap()
    }

    #[test]
    fn variance_cases() {
        let w = MapperLatent::new((0..64).map(|i| i as f64 * 0.37 - 3.0).collect()).broadcast(10);
        assert_eq!(latent_variance(&w), 0.0);
        let mut two = StyleLatent::zeros(2, 64);
        two.row_mut(0)[0] = 1.0;
        two.row_mut(1)[0] = -1.0;
        assert_eq!(latent_variance(&two), 1.0 / 64.0);
        let r = latent(5, 7, 0.7);
        assert!((latent_variance(&r.scaled(3.0)) - 9.0 * latent_variance(&r)).abs() < 1e-12);
    }

    #[test]
    fn direction_algebra() {
        let pos = [latent(3, 4, 0.3), latent(3, 4, 0.5)];
        let neg = [latent(3, 4, 0.9)];
        let d = compute_direction(&pos, &neg, "x").unwrap();
        assert!((d.direction.norm() - 1.0).abs() < 1e-12);
        let back = compute_direction(&neg, &pos, "x").unwrap();
        assert_eq!(back.direction, d.direction.scaled(-1.0));
        assert!(matches!(compute_direction(&pos, &pos, "x"), Err(Error::DegenerateDirection)));
        assert!(compute_direction(&[], &neg, "x").is_err());
        let w = latent(3, 4, 1.1);
        assert_eq!(apply_edit(&w, &d, 0.0).unwrap(), w);
        let there = apply_edit(&w, &d, 3.0).unwrap();
        let round = apply_edit(&there, &d, -3.0).unwrap();
        assert!(round.sub(&w).unwrap().norm() < 1e-12);
    }

    #[test]
    fn mixing_ranges_partition() {
        let (a, b) = (latent(10, 3, 0.2), latent(10, 3, 0.8));
        let mut w = a.clone();
        for r in [StyleRange::Coarse, StyleRange::Middle, StyleRange::Fine] {
            w = mix_range(&w, &b, r).unwrap();
        }
        assert_eq!(w, b);
        assert_eq!(mix_range(&a, &a, StyleRange::Middle).unwrap(), a);
    }

    #[test]
    fn aggregation_means() {
        let s = |v: f64| SampleMetrics {
            interest_l2: v,
            interest_perceptual: 2.0 * v,
            full_l2: v,
            full_perceptual: v,
            identity_similarity: 1.0,
            variance: alloc::vec![0.0, v],
            iteration_l2: alloc::vec![v, v],
        };
        let r = MetricsReport::aggregate(&[s(1.0), s(3.0)], 1).unwrap();
        assert_eq!((r.interest_l2, r.interest_perceptual, r.samples, r.omitted), (2.0, 4.0, 2, 1));
        assert_eq!(r.variance, alloc::vec![0.0, 2.0]);
        assert!(MetricsReport::aggregate(&[], 0).is_err());
    }
}
