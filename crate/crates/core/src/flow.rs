//! Optical flow fields, bilinear warping and the geodesic forward/backward
//! consistency check.
//!
//! Flows are stored in ERP pixel units as interleaved `(dx, dy)` pairs of
//! `f32`, the same layout as Middlebury `.flo` files. All position arithmetic
//! is done in `f64`.

use crate::error::{Error, Result};
use crate::frame::{ErpFrame, MaskFrame};
use crate::geometry::{geodesic_distance, BilinearTaps, FrameDims, PixelCoord};

/// Default consistency threshold in degrees.
pub const DEFAULT_EPS_DEG: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dims: FrameDims,
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(dims: FrameDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len() * 2],
        }
    }

    pub fn constant(dims: FrameDims, dx: f32, dy: f32) -> Self {
        Self::from_fn(dims, |_, _| (dx, dy))
    }

    pub fn from_fn(dims: FrameDims, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut data = Vec::with_capacity(dims.len() * 2);
        for y in 0..dims.height {
            for x in 0..dims.width {
                let (dx, dy) = f(x, y);
                data.push(dx);
                data.push(dy);
            }
        }
        Self { dims, data }
    }

    pub fn from_vec(dims: FrameDims, data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.len() * 2 {
            return Err(Error::LengthMismatch {
                what: "flow data",
                expected: dims.len() * 2,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "flow contains non-finite values".into(),
            ));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = self.dims.index(x, y) * 2;
        (self.data[i] as f64, self.data[i + 1] as f64)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dx: f32, dy: f32) {
        let i = self.dims.index(x, y) * 2;
        self.data[i] = dx;
        self.data[i + 1] = dy;
    }

    /// Position reached from integer pixel `(x, y)` by following the flow.
    #[inline]
    pub fn target(&self, x: usize, y: usize) -> PixelCoord {
        let (dx, dy) = self.get(x, y);
        PixelCoord::new(x as f64 + dx, y as f64 + dy)
    }

    pub fn roll_h(&self, k: isize) -> Self {
        let w = self.dims.width as isize;
        Self::from_fn(self.dims, |x, y| {
            let i = self.dims.index((x as isize - k).rem_euclid(w) as usize, y) * 2;
            (self.data[i], self.data[i + 1])
        })
    }
}

/// `out(p) = src(p + flow(p))`, sampled bilinearly with horizontal wrap and
/// vertical clamp.
pub fn warp_bilinear(src: &ErpFrame, flow: &FlowField) -> Result<ErpFrame> {
    let dims = src.dims();
    dims.ensure_eq(flow.dims(), "flow")?;
    let ch = src.channels();
    let mut out = ErpFrame::zeros(dims, ch);
    let mut px = vec![0.0f32; ch];
    for y in 0..dims.height {
        for x in 0..dims.width {
            let q = flow.target(x, y);
            src.sample_into(q.x, q.y, &mut px);
            for (c, v) in px.iter().enumerate() {
                out.set(x, y, c, *v);
            }
        }
    }
    Ok(out)
}

/// Flow vector at a continuous position.
pub fn lookup_flow_bilinear(flow: &FlowField, q: PixelCoord) -> (f64, f64) {
    let taps = BilinearTaps::new(q.x, q.y, flow.dims);
    (taps.apply(&flow.data, 2, 0), taps.apply(&flow.data, 2, 1))
}

/// Forward-then-backward position `p + Ff(p) + Fb(p + Ff(p))`.
///
/// The backward flow is interpolated bilinearly at the (generally
/// non-integer) forward target. The result is not wrapped horizontally.
pub fn roundtrip_position(p: PixelCoord, fwd: &FlowField, bwd: &FlowField) -> PixelCoord {
    let (dx, dy) = lookup_flow_bilinear(fwd, p);
    let q = p.offset(dx, dy);
    let (bx, by) = lookup_flow_bilinear(bwd, q);
    q.offset(bx, by)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMap {
    dims: FrameDims,
    eps: f64,
    valid: MaskFrame,
    error: Vec<f64>,
}

impl ValidityMap {
    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    /// Threshold in radians the map was computed with.
    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y)
    }

    #[inline]
    pub fn valid(&self) -> &MaskFrame {
        &self.valid
    }

    /// Round-trip geodesic error in radians, row-major.
    #[inline]
    pub fn error(&self) -> &[f64] {
        &self.error
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.dims.len() as f64
    }

    /// Re-thresholds the stored errors.
    pub fn with_eps(&self, eps: f64) -> Self {
        let valid = MaskFrame::from_vec(self.dims, self.error.iter().map(|e| *e < eps).collect())
            .expect("same length");
        Self {
            dims: self.dims,
            eps,
            valid,
            error: self.error.clone(),
        }
    }
}

/// Per-pixel round-trip geodesic error of `fwd` followed by `bwd`; a pixel
/// is valid when the error is strictly below `eps` (radians).
pub fn flow_validity_map(fwd: &FlowField, bwd: &FlowField, eps: f64) -> Result<ValidityMap> {
    let dims = fwd.dims();
    dims.ensure_eq(bwd.dims(), "backward flow")?;
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "consistency threshold must be non-negative, got {eps}"
        )));
    }
    let mut error = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        for x in 0..dims.width {
            let p = PixelCoord::new(x as f64, y as f64);
            let q = fwd.target(x, y);
            let (bx, by) = lookup_flow_bilinear(bwd, q);
            error.push(geodesic_distance(p, q.offset(bx, by), dims));
        }
    }
    let valid = MaskFrame::from_vec(dims, error.iter().map(|e| *e < eps).collect())?;
    Ok(ValidityMap {
        dims,
        eps,
        valid,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dims(w: usize, h: usize) -> FrameDims {
        FrameDims::new(w, h).unwrap()
    }

    fn ramp(d: FrameDims) -> ErpFrame {
        ErpFrame::from_fn(d, 2, |x, y, c| {
            ((x * 31 + y * 17 + c * 5) % 97) as f32 / 97.0
        })
    }

    #[test]
    fn zero_flow_is_identity() {
        let d = dims(9, 5);
        let f = ramp(d);
        assert_eq!(warp_bilinear(&f, &FlowField::zeros(d)).unwrap(), f);
    }

    #[test]
    fn integer_flow_is_circular_shift() {
        let d = dims(9, 5);
        let f = ramp(d);
        for k in [-12i32, -3, 1, 4, 9] {
            let out = warp_bilinear(&f, &FlowField::constant(d, k as f32, 0.0)).unwrap();
            // out(x) = f(x + k), i.e. rolled by -k
            assert_eq!(out, f.roll_h(-(k as isize)));
        }
    }

    #[test]
    fn warp_rejects_dim_mismatch() {
        let f = ramp(dims(4, 2));
        assert!(warp_bilinear(&f, &FlowField::zeros(dims(4, 3))).is_err());
    }

    #[test]
    fn lookup_at_grid_and_constant() {
        let d = dims(6, 4);
        let flow = FlowField::from_fn(d, |x, y| (x as f32 * 0.5, -(y as f32)));
        assert_eq!(
            lookup_flow_bilinear(&flow, PixelCoord::new(3.0, 2.0)),
            (1.5, -2.0)
        );
        let c = FlowField::constant(d, 1.25, -0.75);
        for q in [(0.3, 0.7), (5.9, 3.9), (-4.2, 10.0)] {
            assert_eq!(
                lookup_flow_bilinear(&c, PixelCoord::new(q.0, q.1)),
                (1.25, -0.75)
            );
        }
    }

    #[test]
    fn lookup_blends_last_and_first_column() {
        let d = dims(4, 1);
        let flow = FlowField::from_fn(d, |x, _| match x {
            0 => (2.0, -1.0),
            3 => (6.0, 3.0),
            _ => (100.0, 100.0),
        });
        // x = W - 0.5: halfway between column 3 and column 0
        let v = lookup_flow_bilinear(&flow, PixelCoord::new(3.5, 0.0));
        assert_eq!(v, (4.0, 1.0));
    }

    #[test]
    fn inverse_constant_flows_round_trip() {
        let d = dims(16, 8);
        let p = PixelCoord::new(3.0, 5.0);
        let zero = FlowField::zeros(d);
        assert_eq!(roundtrip_position(p, &zero, &zero), p);
        let f = FlowField::constant(d, 3.0, 0.0);
        let b = FlowField::constant(d, -3.0, 0.0);
        assert_eq!(roundtrip_position(p, &f, &b), p);
        let vm = flow_validity_map(&f, &b, 0.4f64.to_radians()).unwrap();
        assert_eq!(vm.valid_count(), d.len());
    }

    #[test]
    fn same_sign_flows_fail_on_equator() {
        // odd height: middle row sits on the equator
        let d = dims(64, 33);
        let k = 2.0f32;
        let f = FlowField::constant(d, k, 0.0);
        let vm = flow_validity_map(&f, &f, 0.4f64.to_radians()).unwrap();
        let expected = 2.0 * k as f64 * 2.0 * PI / 64.0;
        let e = vm.error()[d.index(10, 16)];
        assert!((e - expected).abs() < 1e-12, "{e} vs {expected}");
        assert!(!vm.is_valid(10, 16));
    }

    #[test]
    fn zero_eps_validates_nothing() {
        let d = dims(8, 4);
        let z = FlowField::zeros(d);
        let vm = flow_validity_map(&z, &z, 0.0).unwrap();
        assert_eq!(vm.valid_count(), 0);
        assert!(flow_validity_map(&z, &z, -1.0).is_err());
    }

    #[test]
    fn from_vec_rejects_nan() {
        let d = dims(2, 1);
        assert!(FlowField::from_vec(d, vec![0.0, f32::NAN, 0.0, 0.0]).is_err());
    }
}
