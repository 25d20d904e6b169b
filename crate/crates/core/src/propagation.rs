//! Image-space propagation of masked pixels along geodesically consistent
//! flow.
//!
//! A masked pixel `p` of frame `t` is filled from an adjacent frame when
//! three conditions hold: the forward/backward round trip of the flow at `p`
//! is below the geodesic threshold, `p` is still masked, and the flow target
//! in the adjacent frame is unmasked. The filled value is the adjacent frame
//! warped by the flow; every other pixel is copied through unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_validity_map, FlowField, ValidityMap};
use crate::frame::{ErpFrame, MaskFrame};
use crate::geometry::{BilinearTaps, PixelCoord};

/// Conservative mask lookup at a continuous position: `true` if any pixel
/// contributing to the bilinear sample at `q` is masked. Taps with zero
/// weight (e.g. at exact grid positions) do not contribute.
pub fn mask_target_check(mask: &MaskFrame, q: PixelCoord) -> bool {
    let taps = BilinearTaps::new(q.x, q.y, mask.dims());
    let data = mask.data();
    (0..4).any(|k| taps.weight[k] != 0.0 && data[taps.index[k]])
}

/// Pixels that may be filled from the adjacent frame:
/// `valid(p) && mask(p) && !mask_adj(p + flow(p))`.
pub fn propagation_mask(
    mask: &MaskFrame,
    mask_adj: &MaskFrame,
    flow: &FlowField,
    validity: &ValidityMap,
) -> Result<MaskFrame> {
    let dims = mask.dims();
    dims.ensure_eq(mask_adj.dims(), "adjacent mask")?;
    dims.ensure_eq(flow.dims(), "flow")?;
    dims.ensure_eq(validity.dims(), "validity map")?;
    Ok(MaskFrame::from_fn(dims, |x, y| {
        mask.get(x, y) && validity.is_valid(x, y) && !mask_target_check(mask_adj, flow.target(x, y))
    }))
}

/// Fills the pixels of `fill` with `adj` warped by `flow`; all other pixels
/// are copied from `frame` bit for bit.
pub fn propagate_step(
    frame: &ErpFrame,
    adj: &ErpFrame,
    flow: &FlowField,
    fill: &MaskFrame,
) -> Result<ErpFrame> {
    let mut out = frame.clone();
    propagate_into(&mut out, adj, flow, fill)?;
    Ok(out)
}

fn propagate_into(
    frame: &mut ErpFrame,
    adj: &ErpFrame,
    flow: &FlowField,
    fill: &MaskFrame,
) -> Result<usize> {
    frame.ensure_same_shape(adj, "adjacent frame")?;
    let dims = frame.dims();
    dims.ensure_eq(flow.dims(), "flow")?;
    dims.ensure_eq(fill.dims(), "fill mask")?;
    let mut px = vec![0.0f32; frame.channels()];
    let mut filled = 0;
    for y in 0..dims.height {
        for x in 0..dims.width {
            if !fill.get(x, y) {
                continue;
            }
            let q = flow.target(x, y);
            adj.sample_into(q.x, q.y, &mut px);
            for (c, v) in px.iter().enumerate() {
                frame.set(x, y, c, *v);
            }
            filled += 1;
        }
    }
    Ok(filled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Consistency threshold in radians.
    pub eps: f64,
    /// Number of backward+forward sweep pairs.
    pub passes: usize,
}

impl PropagationConfig {
    pub fn from_degrees(eps_deg: f64, passes: usize) -> Self {
        Self {
            eps: eps_deg.to_radians(),
            passes,
        }
    }
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self::from_degrees(crate::flow::DEFAULT_EPS_DEG, 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub frames: Vec<ErpFrame>,
    pub residual_masks: Vec<MaskFrame>,
    /// Pixels filled per frame, summed over all sweeps.
    pub fill_counts: Vec<usize>,
    /// Sweep pairs actually run; fewer than requested when a pass filled nothing.
    pub passes_run: usize,
}

impl PropagationResult {
    pub fn total_filled(&self) -> usize {
        self.fill_counts.iter().sum()
    }

    pub fn residual_counts(&self) -> Vec<usize> {
        self.residual_masks.iter().map(MaskFrame::count).collect()
    }
}

/// Propagates over a whole sequence.
///
/// `fwd[t]` maps frame `t` to `t + 1` and `bwd[t]` maps `t + 1` back to `t`.
/// Each pass runs a backward-in-time sweep (frame `t` pulls from `t + 1` via
/// `fwd[t]`, for `t = T-2 ..= 0`) followed by a forward-in-time sweep (frame
/// `t` pulls from `t - 1` via `bwd[t - 1]`, for `t = 1 ..= T-1`). Masks are
/// updated after every frame, so a pixel filled once becomes a source for its
/// neighbours and is never written again. Passes stop early once a full pass
/// fills nothing, since later passes would be identical.
pub fn propagate_sequence(
    frames: &[ErpFrame],
    masks: &[MaskFrame],
    fwd: &[FlowField],
    bwd: &[FlowField],
    cfg: &PropagationConfig,
) -> Result<PropagationResult> {
    let t_len = frames.len();
    if t_len == 0 {
        return Err(Error::InvalidParameter("empty frame sequence".into()));
    }
    if masks.len() != t_len {
        return Err(Error::LengthMismatch {
            what: "masks",
            expected: t_len,
            got: masks.len(),
        });
    }
    for (what, flows) in [("forward flows", fwd), ("backward flows", bwd)] {
        if flows.len() != t_len - 1 {
            return Err(Error::LengthMismatch {
                what,
                expected: t_len - 1,
                got: flows.len(),
            });
        }
    }
    if cfg.passes == 0 {
        return Err(Error::InvalidParameter("passes must be at least 1".into()));
    }
    let dims = frames[0].dims();
    for f in frames {
        frames[0].ensure_same_shape(f, "frame")?;
    }
    for m in masks {
        dims.ensure_eq(m.dims(), "mask")?;
    }
    for f in fwd.iter().chain(bwd) {
        dims.ensure_eq(f.dims(), "flow")?;
    }

    // validity of pulling t from t+1 (fwd then bwd) and t+1 from t (bwd then fwd)
    let valid_next: Vec<ValidityMap> = fwd
        .iter()
        .zip(bwd)
        .map(|(f, b)| flow_validity_map(f, b, cfg.eps))
        .collect::<Result<_>>()?;
    let valid_prev: Vec<ValidityMap> = fwd
        .iter()
        .zip(bwd)
        .map(|(f, b)| flow_validity_map(b, f, cfg.eps))
        .collect::<Result<_>>()?;

    let mut out: Vec<ErpFrame> = frames.to_vec();
    let mut cur: Vec<MaskFrame> = masks.to_vec();
    let mut fill_counts = vec![0usize; t_len];
    let mut passes_run = 0;

    for _ in 0..cfg.passes {
        passes_run += 1;
        let mut pass_filled = 0;

        for t in (0..t_len - 1).rev() {
            let fill = propagation_mask(&cur[t], &cur[t + 1], &fwd[t], &valid_next[t])?;
            let (head, tail) = out.split_at_mut(t + 1);
            let n = propagate_into(&mut head[t], &tail[0], &fwd[t], &fill)?;
            clear_filled(&mut cur[t], &fill);
            fill_counts[t] += n;
            pass_filled += n;
        }

        for t in 1..t_len {
            let fill = propagation_mask(&cur[t], &cur[t - 1], &bwd[t - 1], &valid_prev[t - 1])?;
            let (head, tail) = out.split_at_mut(t);
            let n = propagate_into(&mut tail[0], &head[t - 1], &bwd[t - 1], &fill)?;
            clear_filled(&mut cur[t], &fill);
            fill_counts[t] += n;
            pass_filled += n;
        }

        if pass_filled == 0 {
            break;
        }
    }

    Ok(PropagationResult {
        frames: out,
        residual_masks: cur,
        fill_counts,
        passes_run,
    })
}

fn clear_filled(mask: &mut MaskFrame, fill: &MaskFrame) {
    for (m, f) in mask.data_mut().iter_mut().zip(fill.data()) {
        if *f {
            *m = false;
        }
    }
}
