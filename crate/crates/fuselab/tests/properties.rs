//! Property-based invariants over the heatmap algebra, the warp, and the
//! fusion rule.

use proptest::prelude::*;

use fuselab::fusion::{fuse_pair, warp_affine, WeightMatrix, THETA_IDENTITY};
use fuselab::heatmap::{argmax_subpixel, softmax_temperature, GridShape, HeatmapGrid};

fn grid_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Softmax output is a probability distribution and preserves the argmax
    // cell for any temperature.
    #[test]
    fn softmax_is_distribution_and_argmax_stable(
        vals in grid_values(48),
        t in 0.05..5.0f64,
    ) {
        let shape = GridShape::new(6, 8);
        let g = HeatmapGrid::from_vec(shape, vals);
        let sm = softmax_temperature(&g, t).unwrap();
        prop_assert!(sm.data.iter().all(|v| *v >= 0.0));
        prop_assert!((sm.sum() - 1.0).abs() < 1e-9);
        prop_assert_eq!(sm.argmax(), g.argmax());
        // Subpixel decoding also agrees on the integer cell.
        let a = argmax_subpixel(&g);
        let b = argmax_subpixel(&sm);
        prop_assert_eq!(a.x as usize, b.x as usize);
        prop_assert_eq!(a.y as usize, b.y as usize);
    }

    // Adding a constant to every cell does not change the softmax.
    #[test]
    fn softmax_shift_invariant(vals in grid_values(36), c in -50.0..50.0f64) {
        let shape = GridShape::new(6, 6);
        let g = HeatmapGrid::from_vec(shape, vals.clone());
        let shifted = HeatmapGrid::from_vec(shape, vals.iter().map(|v| v + c).collect());
        let a = softmax_temperature(&g, 0.2).unwrap();
        let b = softmax_temperature(&shifted, 0.2).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    // The identity transform reproduces the base exactly, for any base.
    #[test]
    fn warp_identity(vals in grid_values(49)) {
        let shape = GridShape::new(7, 7);
        let base = HeatmapGrid::from_vec(shape, vals);
        let out = warp_affine(&base, &THETA_IDENTITY);
        for (a, b) in out.data.iter().zip(&base.data) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    // Warping is linear in the base values.
    #[test]
    fn warp_linear_in_base(
        vals in grid_values(36),
        scale in -3.0..3.0f64,
        tx in -0.4..0.4f64,
        ty in -0.4..0.4f64,
    ) {
        let shape = GridShape::new(6, 6);
        let theta = [1.1, 0.2, tx, -0.1, 0.9, ty];
        let base = HeatmapGrid::from_vec(shape, vals.clone());
        let scaled = HeatmapGrid::from_vec(shape, vals.iter().map(|v| v * scale).collect());
        let a = warp_affine(&base, &theta);
        let b = warp_affine(&scaled, &theta);
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x * scale - y).abs() < 1e-9);
        }
    }

    // Fusion is jointly linear in (target, source).
    #[test]
    fn fusion_linearity(
        t in grid_values(16),
        s in grid_values(16),
        w in grid_values(256),
        alpha in -2.0..2.0f64,
    ) {
        let shape = GridShape::new(4, 4);
        let weights = WeightMatrix {
            n_target: 16,
            n_source: 16,
            data: w,
        };
        let target = HeatmapGrid::from_vec(shape, t.clone());
        let source = HeatmapGrid::from_vec(shape, s.clone());
        let ta = HeatmapGrid::from_vec(shape, t.iter().map(|v| v * alpha).collect());
        let sa = HeatmapGrid::from_vec(shape, s.iter().map(|v| v * alpha).collect());
        let plain = fuse_pair(&target, &source, &weights).unwrap();
        let scaled = fuse_pair(&ta, &sa, &weights).unwrap();
        for (x, y) in plain.data.iter().zip(&scaled.data) {
            prop_assert!((x * alpha - y).abs() < 1e-9);
        }
    }
}
