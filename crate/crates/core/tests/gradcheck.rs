mod common;

use common::{mask, micro, rng, Micro};
use interestyle_core::encoder::{rollout, EncoderParams};
use interestyle_core::nn::ParamTree;
use interestyle_core::objective::total_loss;
use interestyle_core::region::{dilate_mask, BlurSchedule};
use interestyle_core::trainloop::{ind_delta, sample_gradient, Frozen, IndSource, TrainConfig};
use interestyle_core::{ImageBuffer, RegionMask, Tensor};
use rand::Rng;

fn scene(m: &Micro, seed: u64) -> (ImageBuffer, RegionMask) {
    let mut r = rng(seed);
    let z: Vec<f64> = (0..8).map(|_| r.random_range(-1.5..1.5)).collect();
    let mut img = m.gen.synthesize(&m.gen.broadcast(&m.gen.map_z(&z).unwrap())).unwrap();
    for v in img.data_mut() {
        *v = (*v + 0.1 * r.random_range(-1.0..1.0)).clamp(0.0, 1.0);
    }
    let mut raw = mask(&mut r, 8, 8, 0.6);
    raw.set(4, 4, 1.0);
    (img, dilate_mask(&raw, 1).unwrap())
}

fn loss(m: &Micro, enc: &EncoderParams, img: &ImageBuffer, mask: &RegionMask, cfg: &TrainConfig) -> f64 {
    let trace = rollout(img, cfg.use_unf.then_some(mask), &cfg.schedule, enc, &m.gen, &m.w0).unwrap();
    let delta = ind_delta(img, mask, trace.final_latent(), enc, &m.gen, cfg.ind_source).unwrap();
    total_loss(img, mask, &trace, &delta, &m.gen, &cfg.weights, &m.proxy).unwrap()
}

/// Worst relative error and the number of parameters with a measurable gradient.
fn check(cfg: &TrainConfig, seed: u64, samples: usize) -> (f64, usize) {
    let m = micro(seed);
    let (img, msk) = scene(&m, seed + 100);
    let frozen = Frozen {
        gen: &m.gen,
        net: &m.proxy,
        w0: &m.w0,
    };
    let (parts, grads) = sample_gradient(&img, &msk, &m.enc, frozen, cfg).unwrap();
    assert!((parts.total - loss(&m, &m.enc, &img, &msk, cfg)).abs() <= 1e-12);
    let sizes: Vec<usize> = grads.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut r = rng(seed + 7);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut live = 0;
    for _ in 0..samples {
        let (mut leaf, mut off) = (0, r.random_range(0..total));
        while off >= sizes[leaf] {
            off -= sizes[leaf];
            leaf += 1;
        }
        let shifted = |d: f64| {
            let mut e = m.enc.clone();
            let mut k = 0;
            e.net.visit_mut("", &mut |_, t| {
                if k == leaf {
                    t.data_mut()[off] += d;
                }
                k += 1;
            });
            loss(&m, &e, &img, &msk, cfg)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let analytic = grads[leaf].data()[off];
        let scale = analytic.abs().max(numeric.abs());
        if scale >= 1e-9 {
            live += 1;
            worst = worst.max((analytic - numeric).abs() / scale);
        } else {
            // Taps that only ever see zero padding.
            assert_eq!(analytic, 0.0);
        }
    }
    (worst, live)
}

#[test]
fn full_method_gradient_matches_finite_differences() {
    let cfg = TrainConfig {
        schedule: BlurSchedule::new(2.0, 2).unwrap(),
        ..TrainConfig::default()
    };
    let (worst, live) = check(&cfg, 1, 80);
    assert!(live >= 25, "only {live} parameters with a gradient");
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn recon_source_and_deeper_unrolls_also_check_out() {
    let cfg = TrainConfig {
        schedule: BlurSchedule::new(3.0, 3).unwrap(),
        ind_source: IndSource::Recon,
        ..TrainConfig::default()
    };
    let (worst, live) = check(&cfg, 2, 40);
    assert!(live >= 12, "only {live} parameters with a gradient");
    assert!(worst <= 1e-4, "max relative error {worst}");
}

