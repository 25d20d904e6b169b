//! Frame and mask containers.

use crate::error::{Error, Result};
use crate::geometry::{BilinearTaps, FrameDims};

/// Interleaved `H x W x C` image in ERP layout. Colour frames hold values in
/// `[0, 1]`; the same container is used for unbounded feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpFrame {
    dims: FrameDims,
    channels: usize,
    data: Vec<f32>,
}

impl ErpFrame {
    pub fn zeros(dims: FrameDims, channels: usize) -> Self {
        Self::filled(dims, channels, 0.0)
    }

    pub fn filled(dims: FrameDims, channels: usize, value: f32) -> Self {
        assert!(channels > 0, "frame needs at least one channel");
        Self {
            dims,
            channels,
            data: vec![value; dims.len() * channels],
        }
    }

    pub fn from_vec(dims: FrameDims, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter(
                "frame needs at least one channel".into(),
            ));
        }
        if data.len() != dims.len() * channels {
            return Err(Error::LengthMismatch {
                what: "frame data",
                expected: dims.len() * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    pub fn from_fn(
        dims: FrameDims,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(dims.len() * channels);
        for y in 0..dims.height {
            for x in 0..dims.width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            dims,
            channels,
            data,
        }
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.dims.index(x, y) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let i = self.dims.index(x, y) * self.channels + c;
        self.data[i] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = self.dims.index(x, y) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear sample at a continuous position (horizontal wrap, vertical clamp).
    pub fn sample_into(&self, x: f64, y: f64, out: &mut [f32]) {
        let taps = BilinearTaps::new(x, y, self.dims);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = taps.apply(&self.data, self.channels, c) as f32;
        }
    }

    /// Circular horizontal shift: output column `x` holds input column `x - k`.
    pub fn roll_h(&self, k: isize) -> Self {
        let w = self.dims.width as isize;
        Self::from_fn(self.dims, self.channels, |x, y, c| {
            let sx = (x as isize - k).rem_euclid(w) as usize;
            self.get(sx, y, c)
        })
    }

    /// Sets every channel of masked pixels to `value`.
    pub fn clear_masked(&mut self, mask: &MaskFrame, value: f32) -> Result<()> {
        self.dims.ensure_eq(mask.dims(), "mask")?;
        let ch = self.channels;
        for (i, _) in mask.data().iter().enumerate().filter(|(_, m)| **m) {
            self.data[i * ch..(i + 1) * ch].fill(value);
        }
        Ok(())
    }

    pub(crate) fn ensure_same_shape(&self, other: &ErpFrame, what: &'static str) -> Result<()> {
        self.dims.ensure_eq(other.dims, what)?;
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch {
                what,
                expected: self.channels,
                got: other.channels,
            });
        }
        Ok(())
    }
}

/// Binary occupancy per pixel; `true` marks a pixel to inpaint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskFrame {
    dims: FrameDims,
    data: Vec<bool>,
}

impl MaskFrame {
    pub fn empty(dims: FrameDims) -> Self {
        Self {
            dims,
            data: vec![false; dims.len()],
        }
    }

    pub fn full(dims: FrameDims) -> Self {
        Self {
            dims,
            data: vec![true; dims.len()],
        }
    }

    pub fn from_vec(dims: FrameDims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::LengthMismatch {
                what: "mask data",
                expected: dims.len(),
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: FrameDims, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                data.push(f(x, y));
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[self.dims.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        let i = self.dims.index(x, y);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|m| **m).count()
    }

    pub fn is_clear(&self) -> bool {
        !self.data.iter().any(|m| *m)
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskFrame) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    pub fn roll_h(&self, k: isize) -> Self {
        let w = self.dims.width as isize;
        Self::from_fn(self.dims, |x, y| {
            self.get((x as isize - k).rem_euclid(w) as usize, y)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: usize, h: usize) -> FrameDims {
        FrameDims::new(w, h).unwrap()
    }

    #[test]
    fn integer_sample_is_exact() {
        let f = ErpFrame::from_fn(dims(5, 3), 2, |x, y, c| (x * 7 + y * 3 + c) as f32 * 0.013);
        let mut out = [0.0f32; 2];
        for y in 0..3 {
            for x in 0..5 {
                f.sample_into(x as f64, y as f64, &mut out);
                assert_eq!(out, [f.get(x, y, 0), f.get(x, y, 1)]);
            }
        }
    }

    #[test]
    fn sample_blends_across_seam() {
        let f = ErpFrame::from_fn(dims(4, 1), 1, |x, _, _| x as f32);
        let mut out = [0.0f32];
        f.sample_into(3.5, 0.0, &mut out);
        assert_eq!(out[0], 1.5);
    }

    #[test]
    fn roll_then_unroll() {
        let f = ErpFrame::from_fn(dims(6, 2), 1, |x, y, _| (x + 10 * y) as f32);
        assert_eq!(f.roll_h(4).roll_h(-4), f);
        assert_eq!(f.roll_h(1).get(0, 1, 0), f.get(5, 1, 0));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(ErpFrame::from_vec(dims(2, 2), 3, vec![0.0; 11]).is_err());
        assert!(MaskFrame::from_vec(dims(2, 2), vec![false; 3]).is_err());
    }

    #[test]
    fn clear_masked_only_touches_mask() {
        let d = dims(3, 2);
        let mut f = ErpFrame::filled(d, 3, 0.5);
        let m = MaskFrame::from_fn(d, |x, y| x == 1 && y == 0);
        f.clear_masked(&m, 0.0).unwrap();
        assert_eq!(f.pixel(1, 0), &[0.0, 0.0, 0.0]);
        assert_eq!(f.pixel(0, 0), &[0.5, 0.5, 0.5]);
    }
}
