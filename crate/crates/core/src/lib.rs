//! Geometric core of distortion-aware inpainting for omnidirectional
//! (equirectangular) video.
//!
//! - [`geometry`]: pixel/sphere mapping, geodesic distance, distortion weights
//! - [`flow`]: flow fields, bilinear warping, geodesic flow validity
//! - [`propagation`]: filling masked pixels along consistent flow
//! - [`conv`]: circular padding, dilated convolution, adaptive branch
//!   combination, distortion-guided deformable sampling
//! - [`metrics`]: PSNR, SSIM, WS-PSNR, WS-SSIM
//! - [`maskgen`]: seeded moving-mask sequences
//! - [`synthetic`]: rotating-camera sequences with exact flow
//! - [`io`]: PNG, `.flo`, PGM and manifest files

pub mod conv;
pub mod error;
pub mod flow;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod maskgen;
pub mod metrics;
pub mod propagation;
pub mod synthetic;

pub use error::{Error, Result};
pub use flow::{FlowField, ValidityMap};
pub use frame::{ErpFrame, MaskFrame};
pub use geometry::{DistortionMap, FrameDims, PixelCoord, SphericalCoord};
