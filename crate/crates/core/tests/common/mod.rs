#![allow(dead_code)]

use std::f64::consts::PI;

use erp_inpaint::{ErpFrame, FlowField, FrameDims, MaskFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dims(w: usize, h: usize) -> FrameDims {
    FrameDims::new(w, h).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut ChaCha8Rng, d: FrameDims, ch: usize) -> ErpFrame {
    ErpFrame::from_fn(d, ch, |_, _, _| rng.random::<f32>())
}

pub fn random_flow(rng: &mut ChaCha8Rng, d: FrameDims, amp: f32) -> FlowField {
    FlowField::from_fn(d, |_, _| {
        (rng.random_range(-amp..amp), rng.random_range(-amp..amp))
    })
}

pub fn random_mask(rng: &mut ChaCha8Rng, d: FrameDims, p: f64) -> MaskFrame {
    MaskFrame::from_fn(d, |_, _| rng.random_bool(p))
}

/// Reference bilinear sampler: wrap in x, clamp in y, all four taps.
pub fn bilinear_ref(get: impl Fn(usize, usize) -> f64, w: usize, h: usize, x: f64, y: f64) -> f64 {
    let yc = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor(), yc.floor());
    let (fx, fy) = (x - x0, yc - y0);
    let xa = (x0 as i64).rem_euclid(w as i64) as usize;
    let xb = (xa + 1) % w;
    let ya = y0 as usize;
    let yb = (ya + 1).min(h - 1);
    get(xa, ya) * (1.0 - fx) * (1.0 - fy)
        + get(xb, ya) * fx * (1.0 - fy)
        + get(xa, yb) * (1.0 - fx) * fy
        + get(xb, yb) * fx * fy
}

/// Colatitude-based unit vector, the textbook ERP convention.
pub fn unit_vec(x: f64, y: f64, d: FrameDims) -> [f64; 3] {
    let phi = 2.0 * PI * (x + 0.5) / d.width as f64 - PI;
    let colat = PI * (y + 0.5) / d.height as f64;
    [
        colat.sin() * phi.cos(),
        colat.sin() * phi.sin(),
        colat.cos(),
    ]
}

pub fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot: f64 = (0..3).map(|i| a[i] * b[i]).sum();
    dot.clamp(-1.0, 1.0).acos()
}

pub fn max_abs_diff(a: &ErpFrame, b: &ErpFrame) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (*p as f64 - *q as f64).abs())
        .fold(0.0, f64::max)
}
