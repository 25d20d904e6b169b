//! Seeded random moving-mask sequences.
//!
//! Each region is a smoothed random star polygon with its own constant drift
//! velocity. Horizontal motion wraps across the seam; vertical motion
//! bounces between the limits that keep the blob inside the frame. Initial
//! rows are stratified: the admissible centre range is split into one band
//! per region and each region starts in a different band.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::MaskFrame;
use crate::geometry::FrameDims;

const VERTICES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskGenConfig {
    pub seed: u64,
    pub dims: FrameDims,
    pub frames: usize,
    pub regions: usize,
    /// Nominal blob radius in pixels, `[min, max]`.
    pub radius_range: (f64, f64),
    /// Drift speed in pixels per frame, `[min, max]`.
    pub speed_range: (f64, f64),
    /// Relative radial jitter of the polygon vertices, in `[0, 1]`.
    pub irregularity: f64,
}

impl MaskGenConfig {
    /// Defaults scaled to the frame height: radii `H/16 ..= H/7`, speed
    /// `0.5 ..= 2` px/frame, irregularity `0.5`.
    pub fn new(seed: u64, dims: FrameDims, frames: usize, regions: usize) -> Self {
        let h = dims.height as f64;
        Self {
            seed,
            dims,
            frames,
            regions,
            radius_range: (h / 16.0, h / 7.0),
            speed_range: (0.5, 2.0),
            irregularity: 0.5,
        }
    }

    /// Largest distance of a polygon vertex from its centre.
    pub fn max_extent(&self) -> f64 {
        self.radius_range.1 * (1.0 + self.irregularity / 2.0)
    }

    /// Smallest distance of a polygon vertex from its centre.
    pub fn min_extent(&self) -> f64 {
        self.radius_range.0 * (1.0 - self.irregularity / 2.0)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.frames == 0 {
            return bad("frame count must be at least 1");
        }
        if self.regions == 0 {
            return bad("region count must be at least 1");
        }
        let (r0, r1) = self.radius_range;
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return bad("radius range must satisfy 0 < min <= max");
        }
        let (s0, s1) = self.speed_range;
        if !(s0 >= 0.0 && s0 <= s1 && s1.is_finite()) {
            return bad("speed range must satisfy 0 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.irregularity) {
            return bad("irregularity must lie in [0, 1]");
        }
        let extent = self.max_extent();
        let FrameDims { width, height } = self.dims;
        if 2.0 * extent + 1.0 > height as f64 || 2.0 * extent + 1.0 > width as f64 {
            return Err(Error::InvalidParameter(format!(
                "regions up to {:.1} px across do not fit a {width}x{height} frame",
                2.0 * extent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTrack {
    pub radius: f64,
    /// Latitude band the region started in.
    pub band: usize,
    /// Centre `(x, y)` in every frame.
    pub centers: Vec<(f64, f64)>,
    pub velocity: (f64, f64),
    /// Polygon vertices relative to the centre.
    pub polygon: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMaskInfo {
    /// 4-connected components, with horizontal wrap.
    pub components: usize,
    /// Pairs of regions whose pixels overlap or touch in this frame.
    pub merged_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    pub config: MaskGenConfig,
    pub masks: Vec<MaskFrame>,
    pub regions: Vec<RegionTrack>,
    pub frame_info: Vec<FrameMaskInfo>,
}

impl MaskSequence {
    pub fn coverage(&self, t: usize) -> f64 {
        self.masks[t].count() as f64 / self.config.dims.len() as f64
    }
}

pub fn gen_mask_sequence(cfg: &MaskGenConfig) -> Result<MaskSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let FrameDims { width, height } = cfg.dims;
    let (w, h) = (width as f64, height as f64);
    let extent = cfg.max_extent();
    let lo = extent;
    let hi = h - 1.0 - extent;
    let band_h = (hi - lo) / cfg.regions as f64;

    let mut bands: Vec<usize> = (0..cfg.regions).collect();
    bands.shuffle(&mut rng);

    let mut regions = Vec::with_capacity(cfg.regions);
    for &band in &bands {
        let radius = rng.random_range(cfg.radius_range.0..=cfg.radius_range.1);
        let polygon = random_polygon(&mut rng, radius, cfg.irregularity);
        let cx = rng.random_range(0.0..w);
        let cy = if band_h > 0.0 {
            lo + band_h * (band as f64 + rng.random_range(0.0..1.0))
        } else {
            lo
        };
        let dir = rng.random_range(0.0..TAU);
        let speed = rng.random_range(cfg.speed_range.0..=cfg.speed_range.1);
        let velocity = (speed * dir.cos(), speed * dir.sin());
        let centers = (0..cfg.frames)
            .map(|t| {
                let t = t as f64;
                (
                    (cx + velocity.0 * t).rem_euclid(w),
                    bounce(cy + velocity.1 * t, lo, hi),
                )
            })
            .collect();
        regions.push(RegionTrack {
            radius,
            band,
            centers,
            velocity,
            polygon,
        });
    }

    let mut masks = Vec::with_capacity(cfg.frames);
    let mut frame_info = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let rasters: Vec<MaskFrame> = regions
            .iter()
            .map(|r| rasterize(&r.polygon, r.centers[t], cfg.dims))
            .collect();
        let mut mask = MaskFrame::empty(cfg.dims);
        for r in &rasters {
            for (m, v) in mask.data_mut().iter_mut().zip(r.data()) {
                *m |= *v;
            }
        }
        let mut merged_pairs = Vec::new();
        for i in 0..rasters.len() {
            for j in i + 1..rasters.len() {
                if touches(&rasters[i], &rasters[j]) {
                    merged_pairs.push((i, j));
                }
            }
        }
        frame_info.push(FrameMaskInfo {
            components: count_components(&mask),
            merged_pairs,
        });
        masks.push(mask);
    }

    Ok(MaskSequence {
        config: *cfg,
        masks,
        regions,
        frame_info,
    })
}

/// Reflects `v` into `[lo, hi]` (triangle wave).
fn bounce(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let m = (v - lo).rem_euclid(2.0 * span);
    if m <= span {
        lo + m
    } else {
        lo + 2.0 * span - m
    }
}

fn random_polygon(rng: &mut ChaCha8Rng, radius: f64, irregularity: f64) -> Vec<(f64, f64)> {
    let raw: Vec<f64> = (0..VERTICES)
        .map(|_| 1.0 + irregularity * rng.random_range(-0.5..=0.5))
        .collect();
    let step = TAU / VERTICES as f64;
    let jitter: Vec<f64> = (0..VERTICES)
        .map(|_| irregularity * 0.3 * step * rng.random_range(-1.0..=1.0))
        .collect();
    (0..VERTICES)
        .map(|i| {
            let prev = raw[(i + VERTICES - 1) % VERTICES];
            let next = raw[(i + 1) % VERTICES];
            let r = radius * (0.25 * prev + 0.5 * raw[i] + 0.25 * next);
            let a = i as f64 * step + jitter[i];
            (r * a.cos(), r * a.sin())
        })
        .collect()
}

fn point_in_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn rasterize(poly: &[(f64, f64)], center: (f64, f64), dims: FrameDims) -> MaskFrame {
    let (w, h) = (dims.width as f64, dims.height as f64);
    let extent = poly.iter().map(|(x, y)| x.hypot(*y)).fold(0.0f64, f64::max);
    let mut mask = MaskFrame::empty(dims);
    let y0 = (center.1 - extent).floor().max(0.0) as usize;
    let y1 = ((center.1 + extent).ceil()).min(h - 1.0) as usize;
    let x0 = (center.0 - extent).floor() as i64;
    let x1 = (center.0 + extent).ceil() as i64;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let dx = px as f64 - center.0;
            let dy = py as f64 - center.1;
            if point_in_polygon(dx, dy, poly) {
                let col = px.rem_euclid(w as i64) as usize;
                mask.set(col, py, true);
            }
        }
    }
    mask
}

fn touches(a: &MaskFrame, b: &MaskFrame) -> bool {
    let FrameDims { width, height } = a.dims();
    for y in 0..height {
        for x in 0..width {
            if !a.get(x, y) {
                continue;
            }
            if b.get(x, y) || b.get((x + 1) % width, y) || b.get((x + width - 1) % width, y) {
                return true;
            }
            if (y > 0 && b.get(x, y - 1)) || (y + 1 < height && b.get(x, y + 1)) {
                return true;
            }
        }
    }
    false
}

/// Number of 4-connected components, columns wrapping around the seam.
pub fn count_components(mask: &MaskFrame) -> usize {
    let FrameDims { width, height } = mask.dims();
    let mut seen = vec![false; width * height];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..width * height {
        if seen[start] || !mask.data()[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            let mut nbrs = [None; 4];
            nbrs[0] = Some(y * width + (x + 1) % width);
            nbrs[1] = Some(y * width + (x + width - 1) % width);
            if y > 0 {
                nbrs[2] = Some(i - width);
            }
            if y + 1 < height {
                nbrs[3] = Some(i + width);
            }
            for n in nbrs.into_iter().flatten() {
                if !seen[n] && mask.data()[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    count
}
