//! Equirectangular (ERP) pixel/sphere mapping, geodesic distance and the
//! latitude distortion weights.
//!
//! Pixel `(x, y)` maps to longitude `phi = 2*pi*(x + 0.5)/W - pi` and polar
//! angle `theta = pi*(y + 0.5)/H`, so row 0 sits next to the north pole and
//! `theta` is a colatitude in `(0, pi)`.
//!
//! # Trig convention for the geodesic distance
//!
//! The arc length is evaluated in the law-of-cosines form
//!
//! ```text
//! E(a, b) = acos(cos(lat_a) cos(lat_b) cos(phi_a - phi_b) + sin(lat_a) sin(lat_b))
//! ```
//!
//! where `lat = pi/2 - theta` is the latitude. Written with the colatitude
//! directly, the same expression is `sin(theta_a) sin(theta_b) cos(dphi) +
//! cos(theta_a) cos(theta_b)`. The angle whose cosine multiplies `cos(dphi)`
//! is therefore the latitude, and the unit vector used by [`sph_to_unit_vec`]
//! is `(cos(lat) cos(phi), cos(lat) sin(phi), sin(lat))` with `+z` at the top
//! row. With this pairing the distance agrees with `acos(u . v)` for the unit
//! vectors of the two pixels (checked in the tests against the 3D dot product).
//! Pairing `cos(dphi)` with `cos(theta)` of the colatitude instead would fold
//! the whole frame onto one hemisphere and make horizontal errors vanish at
//! the equator rather than at the poles.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: usize,
    pub height: usize,
}

impl FrameDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::InvalidDims {
                width,
                height,
                reason: "width must be at least 2",
            });
        }
        if height < 1 {
            return Err(Error::InvalidDims {
                width,
                height,
                reason: "height must be at least 1",
            });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub(crate) fn ensure_eq(&self, other: FrameDims, what: &'static str) -> Result<()> {
        if *self != other {
            return Err(Error::DimMismatch {
                what,
                expected: *self,
                got: other,
            });
        }
        Ok(())
    }
}

/// Continuous pixel position. Integer values are pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Longitude `phi` and polar angle (colatitude) `theta`, both in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub phi: f64,
    pub theta: f64,
}

impl SphericalCoord {
    #[inline]
    pub fn latitude(&self) -> f64 {
        PI / 2.0 - self.theta
    }
}

/// Maps an in-frame pixel position to spherical coordinates.
pub fn pix_to_sph(p: PixelCoord, dims: FrameDims) -> Result<SphericalCoord> {
    let in_range = p.x.is_finite()
        && p.y.is_finite()
        && p.x >= 0.0
        && p.x < dims.width as f64
        && p.y >= 0.0
        && p.y < dims.height as f64;
    if !in_range {
        return Err(Error::OutOfRange {
            x: p.x,
            y: p.y,
            dims,
        });
    }
    Ok(pix_to_sph_unchecked(p, dims))
}

/// Same mapping as [`pix_to_sph`] without the range check. Out-of-frame
/// positions continue analytically: `x` is periodic in `W`, and `y` beyond a
/// border lands past the pole, which the unit-vector form handles correctly.
#[inline]
pub fn pix_to_sph_unchecked(p: PixelCoord, dims: FrameDims) -> SphericalCoord {
    SphericalCoord {
        phi: TAU * (p.x + 0.5) / dims.width as f64 - PI,
        theta: PI * (p.y + 0.5) / dims.height as f64,
    }
}

/// Inverse of [`pix_to_sph`]. The returned `x` lies in `[-0.5, W - 0.5]`.
#[inline]
pub fn sph_to_pix(s: SphericalCoord, dims: FrameDims) -> PixelCoord {
    PixelCoord {
        x: (s.phi + PI) * dims.width as f64 / TAU - 0.5,
        y: s.theta * dims.height as f64 / PI - 0.5,
    }
}

#[inline]
pub fn sph_to_unit_vec(s: SphericalCoord) -> [f64; 3] {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let (sin_p, cos_p) = s.phi.sin_cos();
    // cos(lat) = sin(theta), sin(lat) = cos(theta)
    [sin_t * cos_p, sin_t * sin_p, cos_t]
}

/// Spherical coordinates of a (not necessarily normalised) direction.
#[inline]
pub fn unit_vec_to_sph(v: [f64; 3]) -> SphericalCoord {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    SphericalCoord {
        phi: v[1].atan2(v[0]),
        theta: (v[2] / norm).clamp(-1.0, 1.0).acos(),
    }
}

#[inline]
pub fn pix_to_unit_vec(p: PixelCoord, dims: FrameDims) -> [f64; 3] {
    sph_to_unit_vec(pix_to_sph_unchecked(p, dims))
}

#[inline]
pub fn unit_vec_to_pix(v: [f64; 3], dims: FrameDims) -> PixelCoord {
    sph_to_pix(unit_vec_to_sph(v), dims)
}

/// Great-circle angle between two pixel positions, in radians.
///
/// Accepts any finite positions, including round-trip targets that left the
/// frame (see [`pix_to_sph_unchecked`]).
pub fn geodesic_distance(a: PixelCoord, b: PixelCoord, dims: FrameDims) -> f64 {
    let sa = pix_to_sph_unchecked(a, dims);
    let sb = pix_to_sph_unchecked(b, dims);
    spherical_distance(sa, sb)
}

/// Arc length between two spherical positions.
///
/// The law-of-cosines argument is rewritten as `1 - 2h` with
/// `h = sin^2(dlat/2) + cos(lat_a) cos(lat_b) sin^2(dphi/2)`, which is the
/// same quantity but keeps full precision for short arcs; `h` is clamped to
/// `[0, 1]` (the argument to `[-1, 1]`) before inverting.
#[inline]
pub fn spherical_distance(a: SphericalCoord, b: SphericalCoord) -> f64 {
    let (la, lb) = (a.latitude(), b.latitude());
    let s_lat = ((la - lb) / 2.0).sin();
    let s_phi = ((a.phi - b.phi) / 2.0).sin();
    let h = s_lat * s_lat + la.cos() * lb.cos() * s_phi * s_phi;
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// ERP area weight of row `row` in a frame of height `height`.
#[inline]
pub fn distortion_weight(row: usize, height: usize) -> f64 {
    let n = height as f64;
    ((row as f64 + 0.5 - n / 2.0) * PI / n).cos()
}

/// Per-pixel weights over a frame. Built from [`distortion_weight`] the map
/// is column-constant and symmetric about the equator; arbitrary weights can
/// be supplied for testing and for the weighted metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMap {
    dims: FrameDims,
    weights: Vec<f64>,
}

impl DistortionMap {
    pub fn erp(dims: FrameDims) -> Self {
        let mut weights = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            let w = distortion_weight(y, dims.height);
            weights.extend(std::iter::repeat_n(w, dims.width));
        }
        Self { dims, weights }
    }

    pub fn uniform(dims: FrameDims) -> Self {
        Self {
            dims,
            weights: vec![1.0; dims.len()],
        }
    }

    pub fn from_weights(dims: FrameDims, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != dims.len() {
            return Err(Error::LengthMismatch {
                what: "distortion weights",
                expected: dims.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "distortion weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self { dims, weights })
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[self.dims.index(x, y)]
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let w = self.dims.width;
        &self.weights[y * w..(y + 1) * w]
    }
}

pub fn build_distortion_map(dims: FrameDims) -> DistortionMap {
    DistortionMap::erp(dims)
}

/// The four source pixels and weights of a bilinear sample, with horizontal
/// wrap-around and vertical clamping. Taps with zero weight are kept so the
/// caller can decide whether to skip them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl BilinearTaps {
    pub fn new(x: f64, y: f64, dims: FrameDims) -> Self {
        let w = dims.width;
        let h = dims.height;
        let y = y.clamp(0.0, (h - 1) as f64);
        let y0f = y.floor();
        let fy = y - y0f;
        let y0 = y0f as usize;
        let y1 = (y0 + 1).min(h - 1);

        let x0f = x.floor();
        let fx = x - x0f;
        let x0 = (x0f as i64).rem_euclid(w as i64) as usize;
        let x1 = if x0 + 1 == w { 0 } else { x0 + 1 };

        Self {
            index: [
                dims.index(x0, y0),
                dims.index(x1, y0),
                dims.index(x0, y1),
                dims.index(x1, y1),
            ],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }

    /// Interpolates one channel of an interleaved buffer.
    #[inline]
    pub fn apply<T: Copy + Into<f64>>(&self, data: &[T], channels: usize, c: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..4 {
            let wk = self.weight[k];
            if wk != 0.0 {
                acc += wk * data[self.index[k] * channels + c].into();
            }
        }
        acc
    }
}
