//! Randomized invariants over the analytic pipeline.

use proptest::prelude::*;
use upright::geometry::{
    angle_error, orientation_vector, pixel_to_sphere, rotation_from_tilt, sphere_to_pixel,
    EquirectGrid, TiltAngles, UnitVector,
};
use upright::lut::{denormalize_x, denormalize_y, generate_lut, normalize_x, normalize_y, LutDirection};
use upright::remap::{remap, Interp};

fn angles_strategy() -> impl Strategy<Value = TiltAngles> {
    (-90.0f64..=90.0, -90.0f64..=90.0).prop_map(|(p, r)| TiltAngles::new(p, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_is_orthonormal(a in angles_strategy()) {
        let r = rotation_from_tilt(a);
        prop_assert!(r.orthonormality_residual() < 1e-12);
        prop_assert!((r.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_transpose_inverts(a in angles_strategy(), x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.1f64..1.0) {
        let r = rotation_from_tilt(a);
        let v = UnitVector::new(x, y, z).unwrap();
        let fwd = UnitVector::from_rotated(&r, v);
        let back = UnitVector::from_rotated(&r.transpose(), fwd);
        prop_assert!((back.x() - v.x()).abs() < 1e-12);
        prop_assert!((back.y() - v.y()).abs() < 1e-12);
        prop_assert!((back.z() - v.z()).abs() < 1e-12);
    }

    #[test]
    fn angle_error_symmetric_nonnegative(a in angles_strategy(), b in angles_strategy()) {
        let e1 = angle_error(a, b);
        let e2 = angle_error(b, a);
        prop_assert!((e1 - e2).abs() < 1e-9);
        prop_assert!((0.0..=180.0).contains(&e1));
    }

    #[test]
    fn orientation_vector_is_unit(a in angles_strategy()) {
        let v = orientation_vector(a);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_round_trip(u in 0usize..64, v in 0usize..32) {
        let grid = EquirectGrid::new(32, 64).unwrap();
        let dir = pixel_to_sphere(u as f64, v as f64, grid).unwrap();
        prop_assume!(dir.x().abs() > 1e-12 || dir.y().abs() > 1e-12);
        let (x, y) = sphere_to_pixel(dir, grid);
        let dx = (x - u as f64).rem_euclid(64.0);
        prop_assert!(dx.min(64.0 - dx) < 1e-9);
        prop_assert!((y - v as f64).abs() < 1e-9);
    }

    #[test]
    fn normalize_round_trip(sx in -0.49f64..511.49, sy in -0.49f64..255.49) {
        // x wraps into [-1, 1), so compare pixel coordinates modulo width
        let x = denormalize_x(normalize_x(sx, 512), 512);
        let d = (x - sx).rem_euclid(512.0);
        prop_assert!(d.min(512.0 - d) < 1e-9);
        prop_assert!((denormalize_y(normalize_y(sy, 256), 256) - sy).abs() < 1e-9);
    }

    #[test]
    fn lut_values_in_range(a in angles_strategy()) {
        let grid = EquirectGrid::new(16, 32).unwrap();
        for dir in [LutDirection::ForwardTilt, LutDirection::InverseUpright] {
            let lut = generate_lut(a, grid, dir);
            for &v in lut.data() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn remap_preserves_bounds(a in angles_strategy(), seed in 0u64..1000) {
        let grid = EquirectGrid::new(16, 32).unwrap();
        let img = upright::dataset::synth_panorama(seed, grid, upright::dataset::PanoramaStyle::Boxes);
        let lut = generate_lut(a, grid, LutDirection::ForwardTilt);
        let out = remap(&img, &lut, Interp::Bilinear).unwrap();
        let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        for &v in out.data() {
            prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
        }
    }

    #[test]
    fn remap_constant_is_constant(a in angles_strategy()) {
        let grid = EquirectGrid::new(16, 32).unwrap();
        let mut img = upright::image::EquirectImage::zeros(1, 16, 32);
        img.data_mut().iter_mut().for_each(|v| *v = 0.625);
        let lut = generate_lut(a, grid, LutDirection::InverseUpright);
        let out = remap(&img, &lut, Interp::Bilinear).unwrap();
        for &v in out.data() {
            prop_assert!((v - 0.625).abs() < 1e-6);
        }
    }
}
