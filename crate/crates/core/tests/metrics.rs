mod common;

use common::*;
use erp_inpaint::metrics::*;
use erp_inpaint::{DistortionMap, ErpFrame, FrameDims, MaskFrame};
use proptest::prelude::*;
use rand::Rng;

fn mse_ref(a: &ErpFrame, b: &ErpFrame, w: impl Fn(usize, usize) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let d = a.get(x, y, c) as f64 - b.get(x, y, c) as f64;
                num += w(x, y) * d * d;
                den += w(x, y);
            }
        }
    }
    num / den
}

fn psnr_ref(mse: f64) -> f64 {
    10.0 * (1.0 / mse).log10()
}

/// Direct per-window SSIM with a 2D Gaussian kernel; returns
/// `(window centre, channel-averaged SSIM)` for every contained window.
fn ssim_windows(a: &ErpFrame, b: &ErpFrame) -> Vec<((usize, usize), f64)> {
    let (win, sigma) = (11usize, 1.5f64);
    let r = win / 2;
    let mut k2d = vec![0.0; win * win];
    for j in 0..win {
        for i in 0..win {
            let (dx, dy) = (i as f64 - r as f64, j as f64 - r as f64);
            k2d[j * win + i] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = k2d.iter().sum();
    k2d.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let ch = a.channels();
    let mut out = Vec::new();
    for y0 in 0..=a.height() - win {
        for x0 in 0..=a.width() - win {
            let mut acc = 0.0;
            for c in 0..ch {
                let at = |f: &ErpFrame, i: usize, j: usize| f.get(x0 + i, y0 + j, c) as f64;
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..win {
                    for i in 0..win {
                        ma += k2d[j * win + i] * at(a, i, j);
                        mb += k2d[j * win + i] * at(b, i, j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..win {
                    for i in 0..win {
                        let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                        va += k2d[j * win + i] * da * da;
                        vb += k2d[j * win + i] * db * db;
                        cov += k2d[j * win + i] * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            out.push(((x0 + r, y0 + r), acc / ch as f64));
        }
    }
    out
}

fn weighted_mean(items: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (w, v) in items {
        num += w * v;
        den += w;
    }
    num / den
}

fn noisy(r: &mut rand_chacha::ChaCha8Rng, f: &ErpFrame, amp: f32) -> ErpFrame {
    ErpFrame::from_fn(f.dims(), f.channels(), |x, y, c| {
        (f.get(x, y, c) + r.random_range(-amp..amp)).clamp(0.0, 1.0)
    })
}

#[test]
fn psnr_variants_match_reference() {
    let mut r = rng(1);
    let d = dims(40, 20);
    let a = random_frame(&mut r, d, 3);
    let b = noisy(&mut r, &a, 0.1);
    let dmap = DistortionMap::erp(d);
    assert!((psnr(&a, &b, 1.0).unwrap() - psnr_ref(mse_ref(&a, &b, |_, _| 1.0))).abs() < 1e-9);
    let ws = psnr_ref(mse_ref(&a, &b, |x, y| dmap.get(x, y)));
    assert!((ws_psnr(&a, &b, &dmap, 1.0).unwrap() - ws).abs() < 1e-9);
    let uniform = DistortionMap::uniform(d);
    assert!((ws_psnr(&a, &b, &uniform, 1.0).unwrap() - psnr(&a, &b, 1.0).unwrap()).abs() < 1e-9);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    assert!(psnr(&a, &random_frame(&mut r, dims(40, 22), 3), 1.0).is_err());
    assert!(psnr(&a, &b, 0.0).is_err());
}

#[test]
fn pole_errors_cost_less_than_equator_errors() {
    let mut r = rng(2);
    let d = dims(64, 32);
    let a = random_frame(&mut r, d, 3);
    let perturb = |row: usize| {
        let mut b = a.clone();
        for x in 0..64 {
            for c in 0..3 {
                b.set(x, row, c, 1.0 - a.get(x, row, c));
            }
        }
        b
    };
    let (pole, equator) = (perturb(1), perturb(16));
    let dmap = DistortionMap::erp(d);
    let p = ws_psnr(&a, &pole, &dmap, 1.0).unwrap();
    let e = ws_psnr(&a, &equator, &dmap, 1.0).unwrap();
    assert!(p > e);
    let ps = ws_ssim(&a, &pole, &dmap, &SsimParams::default()).unwrap();
    let es = ws_ssim(&a, &equator, &dmap, &SsimParams::default()).unwrap();
    assert!(ps > es);
}

#[test]
fn ssim_matches_direct_windows() {
    let mut r = rng(3);
    let d = dims(30, 18);
    let a = random_frame(&mut r, d, 3);
    let b = noisy(&mut r, &a, 0.2);
    let windows = ssim_windows(&a, &b);
    let mean = windows.iter().map(|(_, v)| v).sum::<f64>() / windows.len() as f64;
    let params = SsimParams::default();
    assert!((ssim(&a, &b, &params).unwrap() - mean).abs() < 1e-6);
    let dmap = DistortionMap::erp(d);
    let ws = weighted_mean(windows.iter().map(|((x, y), v)| (dmap.get(*x, *y), *v)));
    assert!((ws_ssim(&a, &b, &dmap, &params).unwrap() - ws).abs() < 1e-6);
    let uniform = DistortionMap::uniform(d);
    assert!(
        (ws_ssim(&a, &b, &uniform, &params).unwrap() - ssim(&a, &b, &params).unwrap()).abs() < 1e-9
    );
}

#[test]
fn ssim_edge_cases() {
    let mut r = rng(4);
    let d = dims(24, 16);
    let a = random_frame(&mut r, d, 1);
    let params = SsimParams::default();
    assert!((ssim(&a, &a, &params).unwrap() - 1.0).abs() < 1e-12);
    let inv = ErpFrame::from_fn(d, 1, |x, y, _| 1.0 - a.get(x, y, 0));
    assert!(ssim(&a, &inv, &params).unwrap() < 0.1);
    let tiny = random_frame(&mut r, dims(10, 10), 1);
    assert!(ssim(&tiny, &tiny, &params).is_err());
}

#[test]
fn masked_metrics_full_mask_equals_whole_frame() {
    let mut r = rng(5);
    let d = dims(32, 16);
    let gt: Vec<ErpFrame> = (0..3).map(|_| random_frame(&mut r, d, 3)).collect();
    let pred: Vec<ErpFrame> = gt.iter().map(|g| noisy(&mut r, g, 0.05)).collect();
    let dmap = DistortionMap::erp(d);
    let params = SsimParams::default();
    let full = vec![MaskFrame::full(d); 3];
    let whole = sequence_metrics(&pred, &gt, &dmap, &params).unwrap();
    let masked = masked_region_metrics(&pred, &gt, &full, &dmap, &params).unwrap();
    for (a, b) in whole.reports().iter().zip(masked.reports()) {
        assert_eq!(a.frames, b.frames);
        for (x, y) in a.per_frame.iter().zip(&b.per_frame) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn masked_metrics_match_direct_computation() {
    let mut r = rng(6);
    let d = dims(32, 24);
    let gt = vec![random_frame(&mut r, d, 3), random_frame(&mut r, d, 3)];
    let pred: Vec<ErpFrame> = gt.iter().map(|g| noisy(&mut r, g, 0.1)).collect();
    let block = MaskFrame::from_fn(d, |x, y| (3..9).contains(&x) && (14..20).contains(&y));
    let masks = vec![block.clone(), MaskFrame::empty(d)];
    let dmap = DistortionMap::erp(d);
    let set = masked_region_metrics(&pred, &gt, &masks, &dmap, &SsimParams::default()).unwrap();
    assert_eq!(set.psnr.frames, vec![0]);

    let (p, g) = (&pred[0], &gt[0]);
    let m = |x: usize, y: usize| block.get(x, y) as u8 as f64;
    assert!((set.psnr.per_frame[0] - psnr_ref(mse_ref(p, g, m))).abs() < 1e-9);
    let wm = |x: usize, y: usize| m(x, y) * dmap.get(x, y);
    assert!((set.ws_psnr.per_frame[0] - psnr_ref(mse_ref(p, g, wm))).abs() < 1e-9);

    let touches = |cx: usize, cy: usize| {
        (cy - 5..=cy + 5).any(|y| (cx - 5..=cx + 5).any(|x| block.get(x, y)))
    };
    let windows: Vec<_> = ssim_windows(p, g)
        .into_iter()
        .filter(|((x, y), _)| touches(*x, *y))
        .collect();
    let s = windows.iter().map(|(_, v)| v).sum::<f64>() / windows.len() as f64;
    assert!((set.ssim.per_frame[0] - s).abs() < 1e-6);
    let ws = weighted_mean(windows.iter().map(|((x, y), v)| (dmap.get(*x, *y), *v)));
    assert!((set.ws_ssim.per_frame[0] - ws).abs() < 1e-6);
}

#[test]
fn all_empty_masks_give_empty_reports() {
    let mut r = rng(7);
    let d = dims(16, 16);
    let gt = vec![random_frame(&mut r, d, 1)];
    let set = masked_region_metrics(
        &gt,
        &gt,
        &[MaskFrame::empty(d)],
        &DistortionMap::erp(d),
        &SsimParams::default(),
    )
    .unwrap();
    assert!(set.is_empty());
    assert_eq!(set.psnr.mean, None);
}

fn dims_prop() -> FrameDims {
    dims(24, 16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ws_metrics_are_symmetric_and_roll_invariant(seed in any::<u64>(), k in 1isize..24) {
        let mut r = rng(seed);
        let d = dims_prop();
        let a = random_frame(&mut r, d, 3);
        let b = noisy(&mut r, &a, 0.2);
        let dmap = DistortionMap::erp(d);
        let v = ws_psnr(&a, &b, &dmap, 1.0).unwrap();
        prop_assert!((v - ws_psnr(&b, &a, &dmap, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!((v - ws_psnr(&a.roll_h(k), &b.roll_h(k), &dmap, 1.0).unwrap()).abs() < 1e-9);
        let s = ssim(&a, &b, &SsimParams::default()).unwrap();
        prop_assert!((s - ssim(&b, &a, &SsimParams::default()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error(seed in any::<u64>(), s1 in 0.01f32..0.5, s2 in 0.01f32..0.5) {
        prop_assume!((s1 - s2).abs() > 1e-3);
        let mut r = rng(seed);
        let d = dims_prop();
        let a = random_frame(&mut r, d, 1);
        let noise = random_frame(&mut r, d, 1);
        let with = |s: f32| ErpFrame::from_fn(d, 1, |x, y, _| a.get(x, y, 0) + s * (noise.get(x, y, 0) - 0.5));
        let dmap = DistortionMap::erp(d);
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(psnr(&a, &with(lo), 1.0).unwrap() > psnr(&a, &with(hi), 1.0).unwrap());
        prop_assert!(ws_psnr(&a, &with(lo), &dmap, 1.0).unwrap() > ws_psnr(&a, &with(hi), &dmap, 1.0).unwrap());
    }
}
