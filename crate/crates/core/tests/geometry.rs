mod common;

use std::f64::consts::PI;

use panobench::geometry::{
    class_components, erp_to_sphere, furniture_view_cameras, render_nfov, seam_continuity, sphere_to_erp,
    CameraSpec, SphereDirection,
};
use panobench::{ClassRaster, Panorama, Raster};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{id, registry, signal_panorama, sphere_signal};

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Look-at construction of the view ray: forward from (yaw, pitch), right
/// from world-up × forward, up from forward × right.
fn oracle_ray(cam: &CameraSpec, x: f64, y: f64) -> [f64; 3] {
    let (sp, cp) = cam.pitch.sin_cos();
    let (sy, cy) = cam.yaw.sin_cos();
    let fwd = [cp * sy, sp, cp * cy];
    let right = normalize([fwd[2], 0.0, -fwd[0]]);
    let up = [
        fwd[1] * right[2] - fwd[2] * right[1],
        fwd[2] * right[0] - fwd[0] * right[2],
        fwd[0] * right[1] - fwd[1] * right[0],
    ];
    let focal = cam.out_width as f64 / 2.0 / (cam.hfov / 2.0).tan();
    let a = (x - cam.out_width as f64 / 2.0) / focal;
    let b = -(y - cam.out_height as f64 / 2.0) / focal;
    normalize([
        fwd[0] + a * right[0] + b * up[0],
        fwd[1] + a * right[1] + b * up[1],
        fwd[2] + a * right[2] + b * up[2],
    ])
}

#[test]
fn erp_sphere_round_trip_ten_thousand_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (w, h) = (2048, 1024);
    for _ in 0..10_000 {
        let u = rng.gen_range(0.0..w as f64);
        let v = rng.gen_range(1e-6..h as f64 - 1e-6);
        let d = erp_to_sphere(u, v, w, h).unwrap();
        let (u2, v2) = sphere_to_erp(d, w, h);
        let du = (u2 - u).abs().min(w as f64 - (u2 - u).abs());
        assert!(du < 1e-9 && (v2 - v).abs() < 1e-9, "({u}, {v}) -> ({u2}, {v2})");

        let lon = rng.gen_range(-PI..PI);
        let lat = rng.gen_range(-PI / 2.0 + 1e-6..PI / 2.0 - 1e-6);
        let (u3, v3) = sphere_to_erp(SphereDirection { lon, lat }, w, h);
        let back = erp_to_sphere(u3 % w as f64, v3, w, h).unwrap();
        let dl = (back.lon - lon).abs();
        assert!(dl.min(2.0 * PI - dl) < 1e-9 && (back.lat - lat).abs() < 1e-9);
    }
}

#[test]
fn reprojection_matches_analytic_signal() {
    let pano = signal_panorama(2048, 1024);
    let template = CameraSpec::default();
    let poses = [(0.0, 0.0), (1.3, 0.4), (-2.6, -0.7), (PI - 0.01, 1.2), (0.5, -1.4)];
    for (yaw, pitch) in poses {
        let cam = template.with_orientation(yaw, pitch);
        let view = render_nfov(&pano, &cam).unwrap();
        let mut err = 0.0;
        for y in 0..cam.out_height {
            for x in 0..cam.out_width {
                let truth = sphere_signal(oracle_ray(&cam, x as f64 + 0.5, y as f64 + 0.5));
                for (c, t) in truth.iter().enumerate() {
                    err += (view.get(x, y, c) as f64 - t).abs();
                }
            }
        }
        let mae = err / (cam.out_width * cam.out_height * 3) as f64;
        assert!(mae < 0.02, "pose ({yaw}, {pitch}): MAE {mae}");
        assert!(mae < 1e-3, "bilinear error on a smooth signal should be tiny, got {mae}");
    }
}

#[test]
fn column_shift_equals_yaw_shift() {
    let pano = signal_panorama(256, 128);
    let cam = CameraSpec::new(0.3, 0.2, PI / 2.0, 64, 64).unwrap();
    for shift in [1isize, 17, -40, 128] {
        let rolled = pano.roll_columns(shift);
        let dyaw = shift as f64 * 2.0 * PI / 256.0;
        let a = render_nfov(&pano, &cam).unwrap();
        let b = render_nfov(&rolled, &cam.with_orientation(cam.yaw + dyaw, cam.pitch)).unwrap();
        let worst = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0f32, f32::max);
        assert!(worst <= 1e-6, "shift {shift}: {worst}");
    }
}

#[test]
fn seam_score_of_continuous_signal_is_small() {
    let pano = signal_panorama(512, 256);
    assert!(seam_continuity(&pano) < 0.02);
    assert!((seam_continuity(&pano.roll_columns(256)) - seam_continuity(&pano)).abs() < 0.02);
    let ramp = Raster::from_fn(512, 256, 1, |x, _, _| x as f32 / 511.0).unwrap();
    assert!((seam_continuity(&Panorama::new(ramp).unwrap()) - 1.0).abs() < 1e-6);
}

/// Union-find over 4-neighbours with horizontal wrap.
fn union_find_components(r: &ClassRaster, class: u8) -> Vec<usize> {
    let (w, h) = (r.width(), r.height());
    let mut parent: Vec<usize> = (0..w * h).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for y in 0..h {
        for x in 0..w {
            if r.get(x, y) != class {
                continue;
            }
            let here = y * w + x;
            let right = ((x + 1) % w, y);
            let down = (x, y + 1);
            for (nx, ny) in [right, down] {
                if ny < h && r.get(nx, ny) == class {
                    let (a, b) = (find(&mut parent, here), find(&mut parent, ny * w + nx));
                    parent[a] = b;
                }
            }
        }
    }
    let mut sizes = std::collections::HashMap::new();
    for i in 0..w * h {
        if r.data()[i] == class {
            let root = find(&mut parent, i);
            *sizes.entry(root).or_insert(0usize) += 1;
        }
    }
    let mut v: Vec<usize> = sizes.into_values().collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn components_match_union_find(cells in proptest::collection::vec(prop_oneof![3 => Just(0u8), 1 => Just(5u8)], 16 * 8)) {
        let r = ClassRaster::new(16, 8, cells, registry()).unwrap();
        let mut sizes: Vec<usize> = class_components(&r, 5).iter().map(Vec::len).collect();
        sizes.sort_unstable();
        prop_assert_eq!(sizes, union_find_components(&r, 5));
    }

    #[test]
    fn every_admissible_component_gets_a_camera(cells in proptest::collection::vec(prop_oneof![3 => Just(0u8), 1 => Just(5u8), 1 => Just(6u8)], 16 * 8)) {
        let r = ClassRaster::new(16, 8, cells, registry()).unwrap();
        let sel = furniture_view_cameras(&r, &[5, 6], &CameraSpec::default(), Some(3)).unwrap();
        let admissible = [5u8, 6].iter().flat_map(|c| union_find_components(&r, *c)).filter(|s| *s >= 3).count();
        prop_assert_eq!(sel.views.len() + sel.skipped.len(), admissible);
        for v in &sel.views {
            prop_assert!(v.camera.pitch.abs() <= PI / 2.0 && v.camera.yaw.abs() <= PI);
        }
    }
}

#[test]
fn camera_points_at_sofa_centroid() {
    let (w, h) = (64, 32);
    let sofa = id("Sofa");
    let mut data = vec![0u8; w * h];
    for y in 18..22 {
        for x in 40..46 {
            data[y * w + x] = sofa;
        }
    }
    let r = ClassRaster::new(w, h, data, registry()).unwrap();
    let sel = furniture_view_cameras(&r, &[sofa], &CameraSpec::default(), None).unwrap();
    assert_eq!(sel.views.len(), 1);
    let cam = sel.views[0].camera;
    let expect_lon = (43.0 / 64.0) * 2.0 * PI - PI;
    let expect_lat = PI / 2.0 - (20.0 / 32.0) * PI;
    assert!((cam.yaw - expect_lon).abs() < 1e-9);
    assert!((cam.pitch - expect_lat).abs() < 0.01);
}
