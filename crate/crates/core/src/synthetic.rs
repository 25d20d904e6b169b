//! Ground-truth sequences: a static panorama seen by a rotating camera, with
//! the exact optical flow between consecutive frames.
//!
//! Frame `k` of a sequence with per-frame rotation `R` shows direction
//! `R^-k u` at the pixel whose unit vector is `u`, so content at pixel `p` in
//! frame `t` moves to the pixel of `R u(p)` in frame `t + 1`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::ErpFrame;
use crate::geometry::{pix_to_unit_vec, unit_vec_to_pix, FrameDims, PixelCoord};

/// Trig residue below this many pixels is treated as exact. It lets
/// whole-pixel yaws produce exact integer flows and exact column shifts.
pub const GRID_SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

/// Proper rotation stored as an orthonormal 3x3 matrix (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Rotation about the vertical axis; positive yaw moves content towards
    /// larger `x`.
    pub fn yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation about the forward (`phi = 0`) axis.
    pub fn roll(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    /// Rotation about the horizontal axis at `phi = pi/2`.
    pub fn pitch(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    /// Yaw by a whole number of pixel columns of a `width`-wide frame.
    pub fn yaw_columns(columns: f64, width: usize) -> Self {
        Self::yaw(2.0 * PI * columns / width as f64)
    }

    /// From a unit quaternion `(w, x, y, z)`; the norm must be 1 within 1e-12.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitRotation((n - 1.0).abs()));
        }
        Ok(Self {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        })
    }

    /// Checks orthonormality (within 1e-9) and a positive determinant.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let r = Self { m };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dev = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| self.m[i][k] * self.m[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((dot - target).abs());
            }
        }
        let det = self.determinant();
        if !dev.is_finite() || dev > 1e-9 || det < 0.0 {
            return Err(Error::NonUnitRotation(dev.max((det - 1.0).abs())));
        }
        Ok(())
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Self { m }
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::IDENTITY, |acc, _| self.compose(&acc))
    }

    #[inline]
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `(w, x, y, z)` with `w >= 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let m = &self.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        if q[0] < 0.0 {
            [-q[0], -q[1], -q[2], -q[3]]
        } else {
            q
        }
    }
}

/// Pixel position of `R u(p)`, with trig residue snapped to the grid.
#[inline]
fn rotated_pixel(rot: &Rotation, p: PixelCoord, dims: FrameDims) -> PixelCoord {
    let q = unit_vec_to_pix(rot.apply(pix_to_unit_vec(p, dims)), dims);
    PixelCoord::new(snap(q.x), snap(q.y))
}

/// Renders the panorama as seen after rotating the camera by `rot`:
/// `out(p) = pano(pixel(R^-1 u(p)))`.
pub fn rotate_panorama(pano: &ErpFrame, rot: &Rotation) -> Result<ErpFrame> {
    rot.validate()?;
    let dims = pano.dims();
    let inv = rot.inverse();
    let ch = pano.channels();
    let mut out = ErpFrame::zeros(dims, ch);
    let mut px = vec![0.0f32; ch];
    for y in 0..dims.height {
        for x in 0..dims.width {
            let src = rotated_pixel(&inv, PixelCoord::new(x as f64, y as f64), dims);
            pano.sample_into(src.x, src.y, &mut px);
            for (c, v) in px.iter().enumerate() {
                out.set(x, y, c, *v);
            }
        }
    }
    Ok(out)
}

/// Exact flow of the rotation `rot` at a continuous position, with the
/// horizontal component wrapped to `(-W/2, W/2]`.
pub fn rotation_flow_at(rot: &Rotation, p: PixelCoord, dims: FrameDims) -> (f64, f64) {
    // measure against the mapped position of p itself so that the identity
    // and pure yaws cancel exactly
    let here = rotated_pixel(&Rotation::IDENTITY, p, dims);
    let there = rotated_pixel(rot, p, dims);
    let w = dims.width as f64;
    let mut dx = (there.x - here.x).rem_euclid(w);
    if dx > w / 2.0 {
        dx -= w;
    }
    (snap(dx), snap(there.y - here.y))
}

/// Flow field taking frame `t` to frame `t + 1` under camera rotation `rot`.
pub fn flow_from_rotation(rot: &Rotation, dims: FrameDims) -> Result<FlowField> {
    rot.validate()?;
    Ok(FlowField::from_fn(dims, |x, y| {
        let (dx, dy) = rotation_flow_at(rot, PixelCoord::new(x as f64, y as f64), dims);
        (dx as f32, dy as f32)
    }))
}

/// Smooth seam-free colour pattern built from sinusoids of random
/// directions on the sphere.
pub fn procedural_panorama(seed: u64, dims: FrameDims) -> ErpFrame {
    const WAVES: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waves = Vec::with_capacity(3 * WAVES);
    for _ in 0..3 * WAVES {
        let z: f64 = rng.random_range(-1.0..1.0);
        let a: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).sqrt();
        let dir = [r * a.cos(), r * a.sin(), z];
        let freq: f64 = rng.random_range(1.0..12.0);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let amp: f64 = rng.random_range(0.3..1.0);
        waves.push((dir, freq, phase, amp));
    }
    let mut u_cache = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        for x in 0..dims.width {
            u_cache.push(pix_to_unit_vec(PixelCoord::new(x as f64, y as f64), dims));
        }
    }
    ErpFrame::from_fn(dims, 3, |x, y, c| {
        let u = u_cache[dims.index(x, y)];
        let mut s = 0.0;
        let mut norm = 0.0;
        for (dir, freq, phase, amp) in &waves[c * WAVES..(c + 1) * WAVES] {
            let d = dir[0] * u[0] + dir[1] * u[1] + dir[2] * u[2];
            s += amp * (freq * d + phase).sin();
            norm += amp;
        }
        (0.5 + 0.5 * s / norm) as f32
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<ErpFrame>,
    /// `flows_fwd[t]` maps frame `t` to `t + 1`.
    pub flows_fwd: Vec<FlowField>,
    /// `flows_bwd[t]` maps frame `t + 1` back to `t`.
    pub flows_bwd: Vec<FlowField>,
    /// Per-step camera rotation.
    pub rotation_per_frame: Rotation,
    /// Cumulative rotation of every frame.
    pub rotations: Vec<Rotation>,
}

pub fn gen_sequence(pano: &ErpFrame, step: &Rotation, frames: usize) -> Result<SyntheticSequence> {
    if frames < 2 {
        return Err(Error::InvalidParameter(format!(
            "synthetic sequence needs at least 2 frames, got {frames}"
        )));
    }
    step.validate()?;
    let dims = pano.dims();
    let mut rotations = Vec::with_capacity(frames);
    let mut cur = Rotation::IDENTITY;
    for _ in 0..frames {
        rotations.push(cur);
        cur = step.compose(&cur);
    }
    let rendered = rotations
        .iter()
        .map(|r| rotate_panorama(pano, r))
        .collect::<Result<Vec<_>>>()?;
    let fwd = flow_from_rotation(step, dims)?;
    let bwd = flow_from_rotation(&step.inverse(), dims)?;
    Ok(SyntheticSequence {
        frames: rendered,
        flows_fwd: vec![fwd; frames - 1],
        flows_bwd: vec![bwd; frames - 1],
        rotation_per_frame: *step,
        rotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: usize, h: usize) -> FrameDims {
        FrameDims::new(w, h).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let d = dims(32, 16);
        let pano = procedural_panorama(7, d);
        assert_eq!(rotate_panorama(&pano, &Rotation::IDENTITY).unwrap(), pano);
        assert_eq!(
            flow_from_rotation(&Rotation::IDENTITY, d).unwrap(),
            FlowField::zeros(d)
        );
    }

    #[test]
    fn whole_column_yaw_is_shift() {
        let d = dims(40, 20);
        let pano = procedural_panorama(1, d);
        for k in [1isize, 3, -2, 19] {
            let r = Rotation::yaw_columns(k as f64, 40);
            assert_eq!(rotate_panorama(&pano, &r).unwrap(), pano.roll_h(k));
            assert_eq!(
                flow_from_rotation(&r, d).unwrap(),
                FlowField::constant(d, k as f32, 0.0)
            );
        }
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(Rotation::from_quaternion(1.0, 0.1, 0.0, 0.0).is_err());
        let h = 0.5f64.sqrt();
        let r = Rotation::from_quaternion(h, 0.0, 0.0, h).unwrap();
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let bad = Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]],
        };
        let pano = ErpFrame::zeros(dims(8, 4), 1);
        assert!(rotate_panorama(&pano, &bad).is_err());
        let reflection = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(Rotation::from_matrix(reflection).is_err());
    }

    #[test]
    fn quaternion_round_trip() {
        let r = Rotation::yaw(0.3)
            .compose(&Rotation::pitch(-0.2))
            .compose(&Rotation::roll(1.1));
        let q = r.to_quaternion();
        let back = Rotation::from_quaternion(q[0], q[1], q[2], q[3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.m[i][j] - back.m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_sequences() {
        let d = dims(24, 12);
        let pano = procedural_panorama(3, d);
        assert!(gen_sequence(&pano, &Rotation::IDENTITY, 1).is_err());
        let s = gen_sequence(&pano, &Rotation::IDENTITY, 2).unwrap();
        assert_eq!(s.frames[0], s.frames[1]);
        assert!(s
            .flows_fwd
            .iter()
            .chain(&s.flows_bwd)
            .all(|f| *f == FlowField::zeros(d)));
    }

    #[test]
    fn two_column_steps() {
        let d = dims(30, 15);
        let pano = procedural_panorama(5, d);
        let s = gen_sequence(&pano, &Rotation::yaw_columns(2.0, 30), 5).unwrap();
        for (k, f) in s.frames.iter().enumerate() {
            assert_eq!(*f, pano.roll_h(2 * k as isize));
        }
    }

    #[test]
    fn panorama_in_unit_range_and_seeded() {
        let d = dims(64, 32);
        let a = procedural_panorama(11, d);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, procedural_panorama(11, d));
        assert_ne!(a, procedural_panorama(12, d));
    }
}
