mod common;

use std::collections::BTreeSet;

use common::micro;
use interestyle_core::encoder::rollout;
use interestyle_core::evalkit::{apply_edit, latent_variance, EditDirection};
use interestyle_core::objective::{l2_loss, perceptual_loss, total_loss, ind_loss, LossWeights};
use interestyle_core::region::{blur_radius, dilate_mask, gaussian_lpf, uninterest_filter, BlurSchedule};
use interestyle_core::synthgen::style_mix;
use interestyle_core::trainloop::{ind_delta, IndSource};
use interestyle_core::{ImageBuffer, MapperLatent, RegionMask, StyleLatent};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = RegionMask> {
    (2..max, 2..max).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::bool::weighted(0.2), h * w)
            .prop_map(move |bits| RegionMask::from_vec(h, w, bits.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
    })
}

fn image_strategy(c: usize, h: usize, w: usize) -> impl Strategy<Value = ImageBuffer> {
    prop::collection::vec(0.0..1.0f64, c * h * w).prop_map(move |v| ImageBuffer::from_vec(c, h, w, v).unwrap())
}

fn latent_strategy(max_slots: usize, max_dim: usize) -> impl Strategy<Value = StyleLatent> {
    (1..max_slots, 1..max_dim).prop_flat_map(|(l, d)| {
        prop::collection::vec(-3.0..3.0f64, l * d).prop_map(move |v| StyleLatent::from_vec(l, d, v).unwrap())
    })
}

fn latent_pair(slots: usize, dim: usize) -> impl Strategy<Value = (StyleLatent, StyleLatent)> {
    let one = prop::collection::vec(-3.0..3.0f64, slots * dim).prop_map(move |v| StyleLatent::from_vec(slots, dim, v).unwrap());
    (one.clone(), one)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dilation_grows_and_stays_binary(m in mask_strategy(20), r1 in 0usize..4, extra in 0usize..4) {
        let a = dilate_mask(&m, r1).unwrap();
        let b = dilate_mask(&m, r1 + extra).unwrap();
        prop_assert!(a.is_binary() && b.is_binary());
        prop_assert!(m.is_subset_of(&a));
        prop_assert!(a.is_subset_of(&b));
    }

    #[test]
    fn blur_radius_never_increases(r_max in 0.0..20.0f64, n in 1usize..12) {
        let s = BlurSchedule::new(r_max, n).unwrap();
        for i in 1..n {
            prop_assert!(blur_radius(i + 1, &s).unwrap() <= blur_radius(i, &s).unwrap());
        }
        prop_assert_eq!(blur_radius(n, &s).unwrap(), 0.0);
    }

    #[test]
    fn lpf_is_linear(x in image_strategy(2, 9, 11), y in image_strategy(2, 9, 11), a in -2.0..2.0f64, b in -2.0..2.0f64, r in 0.0..9.0f64) {
        let combo = ImageBuffer::from_vec(2, 9, 11, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = gaussian_lpf(&combo, r).unwrap();
        let (fx, fy) = (gaussian_lpf(&x, r).unwrap(), gaussian_lpf(&y, r).unwrap());
        for (k, v) in lhs.data().iter().enumerate() {
            prop_assert!((v - (a * fx.data()[k] + b * fy.data()[k])).abs() <= 1e-9);
        }
    }

    #[test]
    fn filter_preserves_interest_when_the_rest_is_dark(img in image_strategy(3, 12, 12), bits in prop::collection::vec(any::<bool>(), 144), n in 2usize..6, r_max in 0.0..10.0f64) {
        let m = RegionMask::from_vec(12, 12, bits.into_iter().map(|b| b as u8 as f64).collect()).unwrap();
        let separated = img.masked(&m).unwrap();
        let s = BlurSchedule::new(r_max, n).unwrap();
        for i in 1..=n {
            prop_assert_eq!(&uninterest_filter(&separated, &m, i, &s).unwrap(), &separated);
        }
    }

    #[test]
    fn complementary_mixes_recover_b((a, b) in latent_pair(10, 4), bits in prop::collection::vec(any::<bool>(), 10)) {
        let s1: BTreeSet<usize> = (0..10).filter(|&i| bits[i]).collect();
        let s2: BTreeSet<usize> = (0..10).filter(|&i| !bits[i]).collect();
        let once = style_mix(&a, &b, &s1).unwrap();
        prop_assert_eq!(style_mix(&once, &b, &s2).unwrap(), b.clone());
        prop_assert_eq!(style_mix(&a, &a, &s1).unwrap(), a);
    }

    #[test]
    fn broadcast_has_zero_variance(v in prop::collection::vec(-5.0..5.0f64, 1..40), slots in 1usize..16) {
        prop_assert_eq!(latent_variance(&MapperLatent::new(v).broadcast(slots)), 0.0);
    }

    #[test]
    fn variance_scales_quadratically(w in latent_strategy(8, 12), c in -4.0..4.0f64) {
        let base = latent_variance(&w);
        let scaled = latent_variance(&w.scaled(c));
        prop_assert!((scaled - c * c * base).abs() <= 1e-12 * (1.0 + c * c * base));
    }

    #[test]
    fn edits_compose((w, d) in latent_pair(4, 5), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        prop_assume!(d.norm() > 1e-3);
        let dir = EditDirection { direction: d.scaled(1.0 / d.norm()), label: "p".into() };
        prop_assert_eq!(apply_edit(&w, &dir, 0.0).unwrap(), w.clone());
        let two = apply_edit(&apply_edit(&w, &dir, a).unwrap(), &dir, b).unwrap();
        let one = apply_edit(&w, &dir, a + b).unwrap();
        prop_assert!(two.sub(&one).unwrap().norm() <= 1e-12);
        let back = apply_edit(&apply_edit(&w, &dir, 3.0).unwrap(), &dir, -3.0).unwrap();
        prop_assert!(back.sub(&w).unwrap().norm() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn losses_are_symmetric(a in image_strategy(3, 8, 8), b in image_strategy(3, 8, 8)) {
        let m = micro(1);
        prop_assert_eq!(l2_loss(&a, &b).unwrap(), l2_loss(&b, &a).unwrap());
        prop_assert_eq!(perceptual_loss(&a, &b, &m.proxy).unwrap(), perceptual_loss(&b, &a, &m.proxy).unwrap());
        prop_assert!(l2_loss(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn rollout_is_additive_and_reproducible(img in image_strategy(3, 8, 8), seed in 0u64..50, n in 1usize..5) {
        let m = micro(seed);
        let s = BlurSchedule::new(2.0, n).unwrap();
        let t = rollout(&img, None, &s, &m.enc, &m.gen, &m.w0).unwrap();
        let lat = t.latents();
        for i in 1..=n {
            prop_assert_eq!(lat[i], &lat[i - 1].add(&t.steps[i - 1].delta).unwrap());
            prop_assert_eq!(&t.steps[i - 1].input, &img);
        }
        prop_assert_eq!(t, rollout(&img, None, &s, &m.enc, &m.gen, &m.w0).unwrap());
    }

    #[test]
    fn masked_total_loss_ignores_the_uninterest_region(img in image_strategy(3, 8, 8), noise in image_strategy(3, 8, 8), bits in prop::collection::vec(prop::bool::weighted(0.7), 64), lambda in 0.0..3.0f64) {
        let m = micro(5);
        let mask = RegionMask::from_vec(8, 8, bits.into_iter().map(|b| b as u8 as f64).collect()).unwrap();
        // Same interest pixels, different uninterest pixels.
        let other = ImageBuffer::from_vec(3, 8, 8, img.data().iter().zip(noise.data()).enumerate()
            .map(|(k, (a, b))| if mask.data()[k % 64] == 1.0 { *a } else { *b }).collect()).unwrap();
        let s = BlurSchedule::new(2.0, 2).unwrap();
        let trace = rollout(&img, Some(&mask), &s, &m.enc, &m.gen, &m.w0).unwrap();
        let delta = ind_delta(&img, &mask, trace.final_latent(), &m.enc, &m.gen, IndSource::Image).unwrap();
        let w = LossWeights { ind: lambda, ..LossWeights::default() };
        let a = total_loss(&img, &mask, &trace, &delta, &m.gen, &w, &m.proxy).unwrap();
        let b = total_loss(&other, &mask, &trace, &delta, &m.gen, &w, &m.proxy).unwrap();
        prop_assert_eq!(a, b);

        let zero = LossWeights { ind: 0.0, ..w };
        let base = total_loss(&img, &mask, &trace, &delta, &m.gen, &zero, &m.proxy).unwrap();
        let ind = ind_loss(&img, &mask, trace.final_latent(), &delta, &m.gen, &w, &m.proxy).unwrap();
        prop_assert!((a - (base + lambda * ind)).abs() <= 1e-12);
    }
}
