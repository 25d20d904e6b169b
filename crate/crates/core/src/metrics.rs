//! PSNR, SSIM and their sphere-weighted variants (WS-PSNR, WS-SSIM).
//!
//! The weighted variants take a [`DistortionMap`]. WS-PSNR weights each
//! squared error by the map, WS-SSIM weights each local SSIM value by the
//! map value at the window centre. Identical inputs give a PSNR of
//! `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ErpFrame, MaskFrame};
use crate::geometry::{DistortionMap, FrameDims};

#[inline]
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn check_pair(a: &ErpFrame, b: &ErpFrame) -> Result<()> {
    a.ensure_same_shape(b, "compared frame")
}

fn check_peak(peak: f64) -> Result<()> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "peak must be positive, got {peak}"
        )));
    }
    Ok(())
}

/// Weighted mean squared error. `weight(pixel)` returns `None` to skip a pixel.
fn weighted_mse(a: &ErpFrame, b: &ErpFrame, weight: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let ch = a.channels();
    let (da, db) = (a.data(), b.data());
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..a.dims().len() {
        let Some(w) = weight(p) else { continue };
        let mut se = 0.0;
        for c in 0..ch {
            let d = da[p * ch + c] as f64 - db[p * ch + c] as f64;
            se += d * d;
        }
        num += w * se;
        den += w * ch as f64;
    }
    (den > 0.0).then(|| num / den)
}

pub fn psnr(a: &ErpFrame, b: &ErpFrame, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    check_peak(peak)?;
    let mse = weighted_mse(a, b, |_| Some(1.0)).expect("non-empty frame");
    Ok(psnr_from_mse(mse, peak))
}

pub fn ws_psnr(a: &ErpFrame, b: &ErpFrame, dmap: &DistortionMap, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    check_peak(peak)?;
    a.dims().ensure_eq(dmap.dims(), "distortion map")?;
    let w = dmap.weights();
    let mse = weighted_mse(a, b, |p| Some(w[p]))
        .ok_or_else(|| Error::InvalidParameter("distortion weights sum to zero".into()))?;
    Ok(psnr_from_mse(mse, peak))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

impl SsimParams {
    pub fn gaussian(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.peak).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.peak).powi(2)
    }

    fn validate(&self, dims: FrameDims) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "SSIM window must be odd, got {}",
                self.window
            )));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(
                "SSIM sigma must be positive".into(),
            ));
        }
        check_peak(self.peak)?;
        if dims.width < self.window || dims.height < self.window {
            return Err(Error::InvalidParameter(format!(
                "{}x{} frame is smaller than the {} px SSIM window",
                dims.width, dims.height, self.window
            )));
        }
        Ok(())
    }
}

/// Local SSIM at every fully-contained window position, averaged over
/// channels. Entry `(x, y)` belongs to the window centred on frame pixel
/// `(x + r, y + r)` with `r = window / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    pub values: Vec<f64>,
}

impl SsimMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Separable Gaussian filter restricted to fully-contained windows.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (j, gj) in g.iter().enumerate() {
                s += gj * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

pub fn ssim_map(a: &ErpFrame, b: &ErpFrame, params: &SsimParams) -> Result<SsimMap> {
    check_pair(a, b)?;
    let dims = a.dims();
    params.validate(dims)?;
    let (w, h, ch) = (dims.width, dims.height, a.channels());
    let g = params.gaussian();
    let (c1, c2) = (params.c1(), params.c2());
    let ow = w - params.window + 1;
    let oh = h - params.window + 1;
    let mut values = vec![0.0; ow * oh];

    for c in 0..ch {
        let xa: Vec<f64> = a
            .data()
            .iter()
            .skip(c)
            .step_by(ch)
            .map(|v| *v as f64)
            .collect();
        let xb: Vec<f64> = b
            .data()
            .iter()
            .skip(c)
            .step_by(ch)
            .map(|v| *v as f64)
            .collect();
        let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p * q).collect();
        let mu_a = filter_valid(&xa, w, h, &g);
        let mu_b = filter_valid(&xb, w, h, &g);
        let e_aa = filter_valid(&aa, w, h, &g);
        let e_bb = filter_valid(&bb, w, h, &g);
        let e_ab = filter_valid(&ab, w, h, &g);
        for i in 0..ow * oh {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            values[i] += s / ch as f64;
        }
    }
    Ok(SsimMap {
        width: ow,
        height: oh,
        radius: params.window / 2,
        values,
    })
}

pub fn ssim(a: &ErpFrame, b: &ErpFrame, params: &SsimParams) -> Result<f64> {
    Ok(ssim_map(a, b, params)?.mean())
}

pub fn ws_ssim(
    a: &ErpFrame,
    b: &ErpFrame,
    dmap: &DistortionMap,
    params: &SsimParams,
) -> Result<f64> {
    a.dims().ensure_eq(dmap.dims(), "distortion map")?;
    let map = ssim_map(a, b, params)?;
    weighted_ssim(&map, dmap, |_, _| true)
        .ok_or_else(|| Error::InvalidParameter("distortion weights sum to zero".into()))
}

fn weighted_ssim(
    map: &SsimMap,
    dmap: &DistortionMap,
    include: impl Fn(usize, usize) -> bool,
) -> Option<f64> {
    let r = map.radius;
    let mut num = 0.0;
    let mut den = 0.0;
    for y in 0..map.height {
        for x in 0..map.width {
            if !include(x, y) {
                continue;
            }
            let w = dmap.get(x + r, y + r);
            num += w * map.get(x, y);
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    /// Frame index of every entry in `per_frame`.
    pub frames: Vec<usize>,
    pub per_frame: Vec<f64>,
    /// Arithmetic mean of `per_frame`; `None` when no frame was evaluated.
    pub mean: Option<f64>,
}

impl MetricReport {
    fn new(metric: &str) -> Self {
        Self {
            metric: metric.to_string(),
            frames: Vec::new(),
            per_frame: Vec::new(),
            mean: None,
        }
    }

    fn push(&mut self, frame: usize, v: f64) {
        self.frames.push(frame);
        self.per_frame.push(v);
    }

    fn finish(mut self) -> Self {
        if !self.per_frame.is_empty() {
            self.mean = Some(self.per_frame.iter().sum::<f64>() / self.per_frame.len() as f64);
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.per_frame.is_empty()
    }

    pub fn value_at(&self, frame: usize) -> Option<f64> {
        self.frames
            .iter()
            .position(|f| *f == frame)
            .map(|i| self.per_frame[i])
    }
}

/// PSNR, SSIM, WS-PSNR and WS-SSIM reports, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub psnr: MetricReport,
    pub ssim: MetricReport,
    pub ws_psnr: MetricReport,
    pub ws_ssim: MetricReport,
}

impl MetricSet {
    fn new() -> Self {
        Self {
            psnr: MetricReport::new("psnr"),
            ssim: MetricReport::new("ssim"),
            ws_psnr: MetricReport::new("ws_psnr"),
            ws_ssim: MetricReport::new("ws_ssim"),
        }
    }

    fn finish(self) -> Self {
        Self {
            psnr: self.psnr.finish(),
            ssim: self.ssim.finish(),
            ws_psnr: self.ws_psnr.finish(),
            ws_ssim: self.ws_ssim.finish(),
        }
    }

    pub fn reports(&self) -> [&MetricReport; 4] {
        [&self.psnr, &self.ssim, &self.ws_psnr, &self.ws_ssim]
    }

    pub fn is_empty(&self) -> bool {
        self.psnr.is_empty()
    }
}

fn check_sequences(pred: &[ErpFrame], gt: &[ErpFrame]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "predicted frames",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    for (p, g) in pred.iter().zip(gt) {
        check_pair(p, g)?;
    }
    Ok(())
}

/// Whole-frame metrics for every frame of a sequence.
pub fn sequence_metrics(
    pred: &[ErpFrame],
    gt: &[ErpFrame],
    dmap: &DistortionMap,
    params: &SsimParams,
) -> Result<MetricSet> {
    check_sequences(pred, gt)?;
    let mut set = MetricSet::new();
    for (t, (p, g)) in pred.iter().zip(gt).enumerate() {
        set.psnr.push(t, psnr(p, g, params.peak)?);
        set.ssim.push(t, ssim(p, g, params)?);
        set.ws_psnr.push(t, ws_psnr(p, g, dmap, params.peak)?);
        set.ws_ssim.push(t, ws_ssim(p, g, dmap, params)?);
    }
    Ok(set.finish())
}

/// Metrics restricted to masked pixels: the PSNR variants use masked pixels
/// only, the SSIM variants use windows whose footprint touches the mask.
/// Frames with an empty mask are left out of the reports.
pub fn masked_region_metrics(
    pred: &[ErpFrame],
    gt: &[ErpFrame],
    masks: &[MaskFrame],
    dmap: &DistortionMap,
    params: &SsimParams,
) -> Result<MetricSet> {
    check_sequences(pred, gt)?;
    if masks.len() != pred.len() {
        return Err(Error::LengthMismatch {
            what: "masks",
            expected: pred.len(),
            got: masks.len(),
        });
    }
    let mut set = MetricSet::new();
    for (t, ((p, g), m)) in pred.iter().zip(gt).zip(masks).enumerate() {
        let dims = p.dims();
        dims.ensure_eq(m.dims(), "mask")?;
        dims.ensure_eq(dmap.dims(), "distortion map")?;
        if m.is_clear() {
            continue;
        }
        let md = m.data();
        let w = dmap.weights();
        let mse = weighted_mse(p, g, |i| md[i].then_some(1.0)).expect("mask not empty");
        let wmse = weighted_mse(p, g, |i| md[i].then_some(w[i]));

        let map = ssim_map(p, g, params)?;
        let touched = window_touches_mask(m, params.window);
        let uniform = DistortionMap::uniform(dims);
        let inside = |x: usize, y: usize| touched[y * map.width + x];
        let s = weighted_ssim(&map, &uniform, inside).expect("mask not empty");

        set.psnr.push(t, psnr_from_mse(mse, params.peak));
        set.ssim.push(t, s);
        if let Some(wmse) = wmse {
            set.ws_psnr.push(t, psnr_from_mse(wmse, params.peak));
        }
        if let Some(ws) = weighted_ssim(&map, dmap, inside) {
            set.ws_ssim.push(t, ws);
        }
    }
    Ok(set.finish())
}

/// For every fully-contained window position, whether any masked pixel lies
/// inside the window.
fn window_touches_mask(mask: &MaskFrame, window: usize) -> Vec<bool> {
    let FrameDims {
        width: w,
        height: h,
    } = mask.dims();
    // summed-area table with a zero border
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                mask.get(x, y) as u32 + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x]
                    - sat[y * (w + 1) + x];
        }
    }
    let ow = w - window + 1;
    let oh = h - window + 1;
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let (x1, y1) = (x + window, y + window);
            let s = sat[y1 * (w + 1) + x1] + sat[y * (w + 1) + x]
                - sat[y * (w + 1) + x1]
                - sat[y1 * (w + 1) + x];
            out.push(s > 0);
        }
    }
    out
}
