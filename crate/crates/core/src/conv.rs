//! Forward-only kernels for ERP feature maps: seam- and pole-continuous
//! padding, dilated convolution, adaptive combination of dilated branches,
//! distortion guidance and distortion-guided deformable sampling.
//!
//! Weights are always inputs; nothing here is trained.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::ErpFrame;
use crate::geometry::{DistortionMap, FrameDims};

/// Feature maps share the interleaved frame layout; values are unbounded.
pub type FeatureMap = ErpFrame;

/// Default number of deformable sampling taps (a 3x3 footprint).
pub const DEFAULT_TAPS: usize = 9;

/// Pads `pad` pixels on every side.
///
/// Columns wrap around the seam. Rows beyond a pole continue over it: the
/// `k`-th padded row above row 0 is row `k - 1` rolled by `W / 2`, and the
/// same mirror rule applies below the last row.
pub fn circular_pad(x: &FeatureMap, pad: usize) -> Result<FeatureMap> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let FrameDims {
        width: w,
        height: h,
    } = x.dims();
    if w % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "pole padding needs an even width, got {w}"
        )));
    }
    if pad > h {
        return Err(Error::InvalidParameter(format!(
            "padding {pad} exceeds frame height {h}"
        )));
    }
    let out_dims = FrameDims::new(w + 2 * pad, h + 2 * pad)?;
    let half = w / 2;
    let (w_i, h_i, pad_i) = (w as isize, h as isize, pad as isize);
    Ok(ErpFrame::from_fn(out_dims, x.channels(), |px, py, c| {
        let r = py as isize - pad_i;
        let (src_row, shift) = if r < 0 {
            ((-r - 1) as usize, half)
        } else if r >= h_i {
            ((2 * h_i - 1 - r) as usize, half)
        } else {
            (r as usize, 0)
        };
        let col = (px as isize - pad_i + shift as isize).rem_euclid(w_i) as usize;
        x.get(col, src_row, c)
    }))
}

/// Inverse of [`circular_pad`].
pub fn crop(x: &FeatureMap, pad: usize) -> Result<FeatureMap> {
    let FrameDims { width, height } = x.dims();
    if 2 * pad >= width || 2 * pad >= height {
        return Err(Error::InvalidParameter(format!(
            "cannot crop {pad} from {width}x{height}"
        )));
    }
    let dims = FrameDims::new(width - 2 * pad, height - 2 * pad)?;
    Ok(ErpFrame::from_fn(dims, x.channels(), |cx, cy, c| {
        x.get(cx + pad, cy + pad, c)
    }))
}

/// Convolution weights laid out `[c_out][c_in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    c_out: usize,
    c_in: usize,
    size: usize,
    weights: Vec<f32>,
}

impl ConvKernel {
    pub fn new(c_out: usize, c_in: usize, size: usize, weights: Vec<f32>) -> Result<Self> {
        if c_out == 0 || c_in == 0 {
            return Err(Error::InvalidParameter(
                "kernel needs at least one channel".into(),
            ));
        }
        if size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "kernel size must be odd, got {size}"
            )));
        }
        let expected = c_out * c_in * size * size;
        if weights.len() != expected {
            return Err(Error::LengthMismatch {
                what: "kernel weights",
                expected,
                got: weights.len(),
            });
        }
        Ok(Self {
            c_out,
            c_in,
            size,
            weights,
        })
    }

    pub fn from_fn(
        c_out: usize,
        c_in: usize,
        size: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut w = Vec::with_capacity(c_out * c_in * size * size);
        for o in 0..c_out {
            for i in 0..c_in {
                for ky in 0..size {
                    for kx in 0..size {
                        w.push(f(o, i, ky, kx));
                    }
                }
            }
        }
        Self::new(c_out, c_in, size, w)
    }

    /// 1x1 kernel copying every channel.
    pub fn identity(channels: usize) -> Self {
        Self::from_fn(
            channels,
            channels,
            1,
            |o, i, _, _| if o == i { 1.0 } else { 0.0 },
        )
        .expect("valid identity kernel")
    }

    #[inline]
    pub fn c_out(&self) -> usize {
        self.c_out
    }

    #[inline]
    pub fn c_in(&self) -> usize {
        self.c_in
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.c_in + i) * self.size + ky) * self.size + kx]
    }
}

/// Same-size dilated cross-correlation over a [`circular_pad`]ded input.
pub fn dilated_conv2d(x: &FeatureMap, kernel: &ConvKernel, dilation: usize) -> Result<FeatureMap> {
    if x.channels() != kernel.c_in {
        return Err(Error::ChannelMismatch {
            what: "convolution input",
            expected: kernel.c_in,
            got: x.channels(),
        });
    }
    if dilation == 0 {
        return Err(Error::InvalidParameter(
            "dilation must be at least 1".into(),
        ));
    }
    let pad = dilation * (kernel.size - 1) / 2;
    let padded = circular_pad(x, pad)?;
    let dims = x.dims();
    let (k, c_in, c_out) = (kernel.size, kernel.c_in, kernel.c_out);
    let pw = padded.width();
    let src = padded.data();
    let mut out = vec![0.0f32; dims.len() * c_out];
    let mut acc = vec![0.0f64; c_out];
    for y in 0..dims.height {
        for xo in 0..dims.width {
            acc.fill(0.0);
            for ky in 0..k {
                let sy = y + ky * dilation;
                for kx in 0..k {
                    let sx = xo + kx * dilation;
                    let base = (sy * pw + sx) * c_in;
                    for i in 0..c_in {
                        let v = src[base + i] as f64;
                        for (o, a) in acc.iter_mut().enumerate() {
                            *a += kernel.weight(o, i, ky, kx) as f64 * v;
                        }
                    }
                }
            }
            let base = dims.index(xo, y) * c_out;
            for (o, a) in acc.iter().enumerate() {
                out[base + o] = *a as f32;
            }
        }
    }
    ErpFrame::from_vec(dims, c_out, out)
}

/// Mixing weights for [`acdconv_forward`]; at every pixel they sum to one.
#[derive(Debug, Clone, PartialEq)]
pub enum CombineWeights {
    Scalar(Vec<f32>),
    /// One `H x W` map per branch, row-major.
    PerPixel(Vec<Vec<f32>>),
}

impl CombineWeights {
    fn len(&self) -> usize {
        match self {
            CombineWeights::Scalar(w) => w.len(),
            CombineWeights::PerPixel(w) => w.len(),
        }
    }

    fn validate(&self, dims: FrameDims) -> Result<()> {
        const TOL: f64 = 1e-4;
        match self {
            CombineWeights::Scalar(w) => {
                let s: f64 = w.iter().map(|v| *v as f64).sum();
                if (s - 1.0).abs() > TOL {
                    return Err(Error::InvalidParameter(format!(
                        "branch weights sum to {s}, expected 1"
                    )));
                }
            }
            CombineWeights::PerPixel(maps) => {
                for m in maps {
                    if m.len() != dims.len() {
                        return Err(Error::LengthMismatch {
                            what: "per-pixel branch weights",
                            expected: dims.len(),
                            got: m.len(),
                        });
                    }
                }
                for p in 0..dims.len() {
                    let s: f64 = maps.iter().map(|m| m[p] as f64).sum();
                    if (s - 1.0).abs() > TOL {
                        return Err(Error::InvalidParameter(format!(
                            "branch weights at pixel {p} sum to {s}, expected 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn at(&self, branch: usize, pixel: usize) -> f32 {
        match self {
            CombineWeights::Scalar(w) => w[branch],
            CombineWeights::PerPixel(w) => w[branch][pixel],
        }
    }
}

/// Weighted sum of dilated convolutions, one branch per `(kernel, dilation)`.
pub fn acdconv_forward(
    x: &FeatureMap,
    kernels: &[ConvKernel],
    dilations: &[usize],
    weights: &CombineWeights,
) -> Result<FeatureMap> {
    if kernels.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one branch required".into(),
        ));
    }
    for (what, n) in [
        ("dilations", dilations.len()),
        ("branch weights", weights.len()),
    ] {
        if n != kernels.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: kernels.len(),
                got: n,
            });
        }
    }
    let c_out = kernels[0].c_out;
    if let Some(k) = kernels.iter().find(|k| k.c_out != c_out) {
        return Err(Error::ChannelMismatch {
            what: "branch output",
            expected: c_out,
            got: k.c_out,
        });
    }
    let dims = x.dims();
    weights.validate(dims)?;

    let mut out = ErpFrame::zeros(dims, c_out);
    for (b, (kernel, &dilation)) in kernels.iter().zip(dilations).enumerate() {
        let branch = dilated_conv2d(x, kernel, dilation)?;
        for (i, (o, v)) in out.data_mut().iter_mut().zip(branch.data()).enumerate() {
            *o += weights.at(b, i / c_out) * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Pointwise transform `G = activation(scale * w + bias)` applied to the
/// distortion map. Stored as TOML with keys `scale`, `bias`, `activation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    pub scale: f64,
    pub bias: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            bias: 0.0,
            activation: Activation::Identity,
        }
    }
}

impl GuidanceParams {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("guidance params serialize")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s).map_err(|e| Error::Coefficients(e.to_string()))?;
        if !p.scale.is_finite() || !p.bias.is_finite() {
            return Err(Error::Coefficients("scale and bias must be finite".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s)
    }
}

/// Per-pixel gain derived from the distortion map.
#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    dims: FrameDims,
    gain: Vec<f64>,
}

impl Guidance {
    pub fn constant(dims: FrameDims, g: f64) -> Self {
        Self {
            dims,
            gain: vec![g; dims.len()],
        }
    }

    pub fn from_vec(dims: FrameDims, gain: Vec<f64>) -> Result<Self> {
        if gain.len() != dims.len() {
            return Err(Error::LengthMismatch {
                what: "guidance",
                expected: dims.len(),
                got: gain.len(),
            });
        }
        Ok(Self { dims, gain })
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }
}

/// Distortion guidance. Without parameters the guidance is the map itself.
pub fn dgg_forward(dmap: &DistortionMap, params: Option<&GuidanceParams>) -> Guidance {
    let gain = match params {
        None => dmap.weights().to_vec(),
        Some(p) => dmap
            .weights()
            .iter()
            .map(|w| p.activation.apply(p.scale * w + p.bias))
            .collect(),
    };
    Guidance {
        dims: dmap.dims(),
        gain,
    }
}

/// Offsets and modulation logits for `taps` sampling positions per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformParams {
    taps: usize,
    /// `H x W x 2K`, `(dx, dy)` per tap.
    offsets: Vec<f32>,
    /// `H x W x K`.
    modulation_logits: Vec<f32>,
    guidance: Guidance,
}

impl DeformParams {
    pub fn new(
        taps: usize,
        offsets: Vec<f32>,
        modulation_logits: Vec<f32>,
        guidance: Guidance,
    ) -> Result<Self> {
        if taps == 0 {
            return Err(Error::InvalidParameter("at least one tap required".into()));
        }
        let n = guidance.dims.len();
        if offsets.len() != n * 2 * taps {
            return Err(Error::LengthMismatch {
                what: "deformable offsets",
                expected: n * 2 * taps,
                got: offsets.len(),
            });
        }
        if modulation_logits.len() != n * taps {
            return Err(Error::LengthMismatch {
                what: "modulation logits",
                expected: n * taps,
                got: modulation_logits.len(),
            });
        }
        let finite = offsets
            .iter()
            .chain(&modulation_logits)
            .all(|v| v.is_finite())
            && guidance.gain.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(
                "deformable parameters must be finite".into(),
            ));
        }
        Ok(Self {
            taps,
            offsets,
            modulation_logits,
            guidance,
        })
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.guidance.dims
    }

    #[inline]
    pub fn taps(&self) -> usize {
        self.taps
    }

    #[inline]
    pub fn offset(&self, pixel: usize, k: usize) -> (f64, f64) {
        let i = (pixel * self.taps + k) * 2;
        (self.offsets[i] as f64, self.offsets[i + 1] as f64)
    }

    #[inline]
    pub fn logit(&self, pixel: usize, k: usize) -> f64 {
        self.modulation_logits[pixel * self.taps + k] as f64
    }

    #[inline]
    pub fn guidance(&self) -> &Guidance {
        &self.guidance
    }
}

/// Distortion-guided deformable sampling.
///
/// For every pixel `p` and tap `k`, with guidance `g = G(p)`:
/// position `p + base_flow(p) + g * offset_k(p)`, modulation
/// `sigmoid(g * logit_k(p))`; the output is the mean over taps of the
/// modulated bilinear samples.
pub fn deformable_sample(
    feat: &FeatureMap,
    base_flow: &FlowField,
    params: &DeformParams,
) -> Result<FeatureMap> {
    let dims = feat.dims();
    dims.ensure_eq(base_flow.dims(), "base flow")?;
    dims.ensure_eq(params.dims(), "deformable parameters")?;
    let ch = feat.channels();
    let k_taps = params.taps;
    let mut out = vec![0.0f32; dims.len() * ch];
    let mut px = vec![0.0f32; ch];
    let mut acc = vec![0.0f64; ch];
    for y in 0..dims.height {
        for x in 0..dims.width {
            let i = dims.index(x, y);
            let g = params.guidance.gain[i];
            let base = base_flow.target(x, y);
            acc.fill(0.0);
            for k in 0..k_taps {
                let (ox, oy) = params.offset(i, k);
                let m = sigmoid(g * params.logit(i, k));
                feat.sample_into(base.x + g * ox, base.y + g * oy, &mut px);
                for (a, v) in acc.iter_mut().zip(&px) {
                    *a += m * *v as f64;
                }
            }
            for (c, a) in acc.iter().enumerate() {
                out[i * ch + c] = (*a / k_taps as f64) as f32;
            }
        }
    }
    ErpFrame::from_vec(dims, ch, out)
}
