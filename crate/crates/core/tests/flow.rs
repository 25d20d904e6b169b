mod common;

use std::f64::consts::PI;

use common::*;
use erp_inpaint::flow::*;
use erp_inpaint::geometry::{geodesic_distance, PixelCoord};
use erp_inpaint::{ErpFrame, FlowField};
use proptest::prelude::*;

fn warp_ref(src: &ErpFrame, flow: &FlowField) -> Vec<f64> {
    let d = src.dims();
    let ch = src.channels();
    let mut out = Vec::new();
    for y in 0..d.height {
        for x in 0..d.width {
            let (dx, dy) = flow.get(x, y);
            for c in 0..ch {
                out.push(bilinear_ref(
                    |i, j| src.get(i, j, c) as f64,
                    d.width,
                    d.height,
                    x as f64 + dx,
                    y as f64 + dy,
                ));
            }
        }
    }
    out
}

#[test]
fn warp_matches_reference_loop() {
    let mut r = rng(1);
    for (w, h) in [(16, 8), (30, 15), (64, 32)] {
        let d = dims(w, h);
        let src = random_frame(&mut r, d, 3);
        let flow = random_flow(&mut r, d, 7.0);
        let out = warp_bilinear(&src, &flow).unwrap();
        for (a, b) in out.data().iter().zip(warp_ref(&src, &flow)) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_flow_is_identity_and_integer_yaw_is_roll() {
    let mut r = rng(2);
    let d = dims(304, 152);
    let src = random_frame(&mut r, d, 3);
    assert_eq!(warp_bilinear(&src, &FlowField::zeros(d)).unwrap(), src);
    for k in [-5i32, 1, 2, 303, 304, 610] {
        let out = warp_bilinear(&src, &FlowField::constant(d, k as f32, 0.0)).unwrap();
        assert_eq!(out, src.roll_h(-k as isize));
    }
}

#[test]
fn warp_is_shift_equivariant() {
    let mut r = rng(3);
    let d = dims(40, 20);
    let src = random_frame(&mut r, d, 2);
    let flow = random_flow(&mut r, d, 3.0);
    for k in [1isize, 7, 39] {
        let a = warp_bilinear(&src.roll_h(k), &flow.roll_h(k)).unwrap();
        let b = warp_bilinear(&src, &flow).unwrap().roll_h(k);
        assert!(max_abs_diff(&a, &b) < 1e-6);
    }
}

#[test]
fn validity_matches_brute_force_recount() {
    let mut r = rng(4);
    let d = dims(48, 24);
    let fwd = random_flow(&mut r, d, 2.0);
    let bwd = random_flow(&mut r, d, 2.0);
    let eps = 3f64.to_radians();
    let vm = flow_validity_map(&fwd, &bwd, eps).unwrap();
    let mut count = 0;
    for y in 0..d.height {
        for x in 0..d.width {
            let (dx, dy) = fwd.get(x, y);
            let (qx, qy) = (x as f64 + dx, y as f64 + dy);
            let bx = bilinear_ref(|i, j| bwd.get(i, j).0, d.width, d.height, qx, qy);
            let by = bilinear_ref(|i, j| bwd.get(i, j).1, d.width, d.height, qx, qy);
            let e = angle(
                unit_vec(x as f64, y as f64, d),
                unit_vec(qx + bx, qy + by, d),
            );
            let got = vm.error()[y * d.width + x];
            assert!((got - e).abs() < 1e-6, "({x},{y}) {got} vs {e}");
            if e < eps - 1e-9 {
                assert!(vm.is_valid(x, y));
            }
            if e > eps + 1e-9 {
                assert!(!vm.is_valid(x, y));
            }
            count += vm.is_valid(x, y) as usize;
        }
    }
    assert_eq!(count, vm.valid_count());
}

#[test]
fn negative_or_nan_eps_is_rejected() {
    let d = dims(8, 4);
    let f = FlowField::zeros(d);
    assert!(flow_validity_map(&f, &f, -1e-3).is_err());
    assert!(flow_validity_map(&f, &f, f64::NAN).is_err());
    assert!(flow_validity_map(&f, &FlowField::zeros(dims(8, 6)), 0.1).is_err());
}

#[test]
fn eps_zero_rejects_everything() {
    let d = dims(8, 4);
    let f = FlowField::zeros(d);
    assert_eq!(flow_validity_map(&f, &f, 0.0).unwrap().valid_count(), 0);
    assert_eq!(
        flow_validity_map(&f, &f, 1e-12).unwrap().valid_count(),
        d.len()
    );
}

#[test]
fn same_pixel_error_is_larger_at_equator() {
    let d = dims(304, 152);
    let fwd = FlowField::constant(d, 0.5, 0.0);
    let vm = flow_validity_map(&fwd, &FlowField::zeros(d), 1.0).unwrap();
    let e = |y: usize| vm.error()[y * d.width];
    assert!(e(1) < e(76));
    assert!(e(150) < e(75));
}

#[test]
fn smooth_flow_with_numeric_inverse_is_valid() {
    let d = dims(128, 64);
    let (w, h) = (d.width as f64, d.height as f64);
    let ff = |x: f64, y: f64| {
        (
            1.5 * (2.0 * PI * y / h).sin() + 0.7 * (2.0 * PI * x / w).cos(),
            0.8 * (2.0 * PI * x / w).sin() * (PI * y / h).sin(),
        )
    };
    let fwd = FlowField::from_fn(d, |x, y| {
        let (a, b) = ff(x as f64, y as f64);
        (a as f32, b as f32)
    });
    // Fixed-point inversion of p + Ff(p) = q at every integer q.
    let bwd = FlowField::from_fn(d, |x, y| {
        let (qx, qy) = (x as f64, y as f64);
        let (mut px, mut py) = (qx, qy);
        for _ in 0..100 {
            let (a, b) = ff(px, py);
            px = qx - a;
            py = qy - b;
        }
        ((px - qx) as f32, (py - qy) as f32)
    });
    let vm = flow_validity_map(&fwd, &bwd, DEFAULT_EPS_DEG.to_radians()).unwrap();
    let (mut pass, mut total) = (0, 0);
    for y in 2..d.height - 2 {
        for x in 0..d.width {
            total += 1;
            pass += vm.is_valid(x, y) as usize;
        }
    }
    assert!(pass as f64 / total as f64 >= 0.99, "{pass}/{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validity_is_monotone_in_eps(seed in any::<u64>(), e1 in 0.0f64..0.2, e2 in 0.0f64..0.2) {
        let mut r = rng(seed);
        let d = dims(24, 12);
        let fwd = random_flow(&mut r, d, 2.0);
        let bwd = random_flow(&mut r, d, 2.0);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let a = flow_validity_map(&fwd, &bwd, lo).unwrap();
        let b = flow_validity_map(&fwd, &bwd, hi).unwrap();
        prop_assert!(a.valid().is_subset_of(b.valid()));
        let rethreshold = a.with_eps(hi);
        prop_assert_eq!(rethreshold.valid(), b.valid());
    }

    #[test]
    fn roundtrip_position_matches_definition(seed in any::<u64>(), x in 0usize..24, y in 0usize..12) {
        let mut r = rng(seed);
        let d = dims(24, 12);
        let fwd = random_flow(&mut r, d, 3.0);
        let bwd = random_flow(&mut r, d, 3.0);
        let p = PixelCoord::new(x as f64, y as f64);
        let rt = roundtrip_position(p, &fwd, &bwd);
        let (dx, dy) = fwd.get(x, y);
        let (qx, qy) = (x as f64 + dx, y as f64 + dy);
        let bx = bilinear_ref(|i, j| bwd.get(i, j).0, 24, 12, qx, qy);
        let by = bilinear_ref(|i, j| bwd.get(i, j).1, 24, 12, qx, qy);
        prop_assert!((rt.x - qx - bx).abs() < 1e-9 && (rt.y - qy - by).abs() < 1e-9);
        let e = geodesic_distance(p, rt, d);
        prop_assert!((e - flow_validity_map(&fwd, &bwd, 0.0).unwrap().error()[y * 24 + x]).abs() < 1e-12);
    }
}
