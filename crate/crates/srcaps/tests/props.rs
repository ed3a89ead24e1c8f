//! Property tests over the numeric invariants.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srcaps::data::bicubic_resize;
use srcaps::metrics::{
    luminance, psnr, segment_regions, RegionThresholds,
};
use srcaps::ops;
use srcaps::tape::Tape;
use srcaps::tensor::{Shape4, Tensor4};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pixel_shuffle_roundtrips(
        seed in any::<u64>(),
        n in 1usize..3,
        base_c in 1usize..4,
        r in 1usize..4,
        h in 1usize..6,
        w in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor4::<f64>::rand_uniform(
            Shape4::new(n, base_c * r * r, h, w), -10.0, 10.0, &mut rng);
        let shuffled = ops::pixel_shuffle(&x, r).unwrap();
        let back = ops::pixel_unshuffle(&shuffled, r).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn squash_shrinks_below_one_and_keeps_direction(
        seed in any::<u64>(),
        d in 1usize..6,
        sq in 0.25f64..4.0,
        lambda in 0.1f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Tensor4::<f64>::rand_uniform(Shape4::new(1, d, 1, 1), -3.0, 3.0, &mut rng);
        let norm_in: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm_in > 1e-6);

        let squash_of = |t: &Tensor4<f64>| {
            let mut tape = Tape::new();
            let x = tape.constant(t.clone());
            let y = tape.squash(x, 1, sq).unwrap();
            tape.value(y).clone()
        };
        let out = squash_of(&v);
        let norm_out: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm_out < 1.0);

        // direction is preserved under positive rescaling of the input
        let scaled = v.map(|x| x * lambda);
        let out2 = squash_of(&scaled);
        let norm2: f64 = out2.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in out.iter().zip(out2.iter()) {
            prop_assert!((a / norm_out - b / norm2).abs() < 1e-9);
        }

        // output norm is strictly increasing in the input norm
        let bigger = v.map(|x| x * (lambda + 1.0) / lambda.min(1.0));
        let norm_bigger_in: f64 = bigger.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_bigger_in > norm_in * 1.001 {
            let out3 = squash_of(&bigger);
            let norm3: f64 = out3.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm3 > norm_out);
        }
    }

    #[test]
    fn weight_norm_ignores_positive_rescaling(
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Tensor4::<f64>::rand_uniform(Shape4::new(3, 2, 3, 3), -1.0, 1.0, &mut rng);
        let g = Tensor4::<f64>::rand_uniform(Shape4::new(3, 1, 1, 1), 0.1, 2.0, &mut rng);
        let eff = |vt: &Tensor4<f64>| {
            let mut tape = Tape::new();
            let vv = tape.constant(vt.clone());
            let gv = tape.constant(g.clone());
            let w = tape.weight_norm(vv, gv).unwrap();
            tape.value(w).clone()
        };
        let w1 = eff(&v);
        let w2 = eff(&v.map(|x| x * scale));
        prop_assert!(srcaps::check::max_abs_diff(&w1, &w2) < 1e-9);
    }

    #[test]
    fn segmentation_is_total_and_ratio_invariant(
        seed in any::<u64>(),
        gain in 0.1f64..3.0,
        offset in -20.0f64..20.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor4::<f64>::rand_uniform(Shape4::new(1, 1, 10, 12), 0.0, 255.0, &mut rng);
        let mask = segment_regions(&img, RegionThresholds::default()).unwrap();
        let rescaled = img.map(|v| gain * v + offset);
        let mask2 = segment_regions(&rescaled, RegionThresholds::default()).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                prop_assert_eq!(mask.label(y, x), mask2.label(y, x));
            }
        }
        prop_assert_eq!(mask.labels.len(), 120);
    }

    #[test]
    fn psnr_is_symmetric_and_decreasing_in_uniform_diff(
        base in 0.0f64..100.0,
        d1 in 0.5f64..50.0,
        extra in 0.5f64..50.0,
    ) {
        let a = Tensor4::<f64>::full(Shape4::new(1, 1, 4, 4), base);
        let b = a.map(|v| v + d1);
        let c = a.map(|v| v + d1 + extra);
        let ab = psnr(&a, &b).unwrap();
        let ba = psnr(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(psnr(&a, &c).unwrap() < ab);
    }

    #[test]
    fn bicubic_preserves_constants_for_any_factor(
        value in 0.0f64..255.0,
        num in 1usize..5,
        den in 1usize..5,
    ) {
        let img = Tensor4::<f64>::full(Shape4::new(1, 3, 8, 8), value);
        if 8 * num / den == 0 {
            return Ok(());
        }
        let out = bicubic_resize(&img, num, den).unwrap();
        for &v in out.iter() {
            prop_assert!((v - value).abs() < 1e-9);
        }
    }

    #[test]
    fn luminance_of_gray_is_identity(v in 0.0f64..255.0) {
        let img = Tensor4::<f64>::full(Shape4::new(1, 3, 2, 2), v);
        let y = luminance(&img).unwrap();
        for &p in y.iter() {
            prop_assert!((p - v).abs() < 1e-9);
        }
    }
}
