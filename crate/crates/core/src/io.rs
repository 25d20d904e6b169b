//! File formats: PNG frames and masks, Middlebury-style `.flo` flow files,
//! binary PGM maps and JSON sequence manifests.
//!
//! Sequences live in directories with one file per frame named `%05d.png`
//! (or `%05d.flo` for flows).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::{ErpFrame, MaskFrame};
use crate::geometry::FrameDims;

/// `"PIEH"` read as a little-endian `f32` is 202021.25.
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("{index:05}.{ext}")
}

fn decode_image(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ImageReader::with_format(std::io::Cursor::new(bytes), ImageFormat::Png)
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
}

fn dims_of(img: &DynamicImage) -> Result<FrameDims> {
    FrameDims::new(img.width() as usize, img.height() as usize)
}

/// Reads an 8- or 16-bit grey or RGB PNG into `[0, 1]`. Alpha is dropped.
pub fn read_frame(path: impl AsRef<Path>) -> Result<ErpFrame> {
    let path = path.as_ref();
    let img = decode_image(path)?;
    let dims = dims_of(&img)?;
    let grey = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() as u8 > 1;
    let data: Vec<f32> = match (grey, sixteen) {
        (true, false) => img
            .to_luma8()
            .into_raw()
            .iter()
            .map(|v| *v as f32 / 255.0)
            .collect(),
        (true, true) => img
            .to_luma16()
            .into_raw()
            .iter()
            .map(|v| *v as f32 / 65535.0)
            .collect(),
        (false, false) => img
            .to_rgb8()
            .into_raw()
            .iter()
            .map(|v| *v as f32 / 255.0)
            .collect(),
        (false, true) => img
            .to_rgb16()
            .into_raw()
            .iter()
            .map(|v| *v as f32 / 65535.0)
            .collect(),
    };
    ErpFrame::from_vec(dims, if grey { 1 } else { 3 }, data)
}

/// Writes a 1- or 3-channel frame, clamping to `[0, 1]` and rounding.
pub fn write_frame(path: impl AsRef<Path>, frame: &ErpFrame, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let encode_err = |source| Error::Decode {
        path: path.to_path_buf(),
        source,
    };
    let quant = |max: f32| -> Vec<f32> {
        frame
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * max).round())
            .collect()
    };
    let img: DynamicImage = match (frame.channels(), depth) {
        (1, BitDepth::Eight) => {
            let raw = quant(255.0).into_iter().map(|v| v as u8).collect();
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap())
        }
        (1, BitDepth::Sixteen) => {
            let raw = quant(65535.0).into_iter().map(|v| v as u16).collect();
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap())
        }
        (3, BitDepth::Eight) => {
            let raw = quant(255.0).into_iter().map(|v| v as u8).collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap())
        }
        (3, BitDepth::Sixteen) => {
            let raw = quant(65535.0).into_iter().map(|v| v as u16).collect();
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).unwrap())
        }
        (c, _) => {
            return Err(Error::InvalidParameter(format!(
                "PNG frames need 1 or 3 channels, got {c}"
            )))
        }
    };
    img.save_with_format(path, ImageFormat::Png)
        .map_err(encode_err)
}

/// Reads a mask PNG; any grey value above 127 is masked.
pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskFrame> {
    let path = path.as_ref();
    let img = decode_image(path)?;
    let dims = dims_of(&img)?;
    let data = img.to_luma8().into_raw().iter().map(|v| *v > 127).collect();
    MaskFrame::from_vec(dims, data)
}

/// Writes a mask as an 8-bit single-channel PNG (0 / 255).
pub fn write_mask(path: impl AsRef<Path>, mask: &MaskFrame) -> Result<()> {
    let path = path.as_ref();
    let FrameDims { width, height } = mask.dims();
    let raw = mask
        .data()
        .iter()
        .map(|m| if *m { 255u8 } else { 0 })
        .collect();
    let img = ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(width as u32, height as u32, raw).unwrap();
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
}

/// Encodes a flow as `.flo`: magic, width and height as little-endian
/// `i32`, then row-major interleaved little-endian `f32` `(dx, dy)` pairs.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let FrameDims { width, height } = flow.dims();
    let mut out = Vec::with_capacity(12 + flow.data().len() * 4);
    out.extend_from_slice(&FLO_MAGIC);
    out.extend_from_slice(&(width as i32).to_le_bytes());
    out.extend_from_slice(&(height as i32).to_le_bytes());
    for v in flow.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::FlowFormat(format!(
            "file too short for a header ({} bytes)",
            bytes.len()
        )));
    }
    let magic = &bytes[0..4];
    if magic != FLO_MAGIC {
        let mut swapped = FLO_MAGIC;
        swapped.reverse();
        if magic == swapped {
            return Err(Error::FlowFormat(
                "big-endian flow file; only little-endian .flo is supported".into(),
            ));
        }
        return Err(Error::FlowFormat(format!("bad magic {magic:02x?}")));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 2 || height < 1 || width > 1 << 20 || height > 1 << 20 {
        return Err(Error::FlowFormat(format!(
            "implausible size {width}x{height}"
        )));
    }
    let dims = FrameDims::new(width as usize, height as usize)?;
    let expected = 12 + dims.len() * 8;
    if bytes.len() != expected {
        return Err(Error::FlowFormat(format!(
            "expected {expected} bytes for {width}x{height}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FlowField::from_vec(dims, data)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes).map_err(|e| match e {
        Error::FlowFormat(m) => Error::FlowFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

/// Writes a binary (`P5`) PGM. Samples above 255 switch to 16-bit big-endian.
pub fn write_pgm(
    path: impl AsRef<Path>,
    dims: FrameDims,
    maxval: u16,
    samples: &[u16],
) -> Result<()> {
    let path = path.as_ref();
    if samples.len() != dims.len() {
        return Err(Error::LengthMismatch {
            what: "PGM samples",
            expected: dims.len(),
            got: samples.len(),
        });
    }
    if maxval == 0 {
        return Err(Error::InvalidParameter(
            "PGM maxval must be positive".into(),
        ));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n{}\n", dims.width, dims.height, maxval)?;
        if maxval < 256 {
            let bytes: Vec<u8> = samples.iter().map(|s| (*s).min(maxval) as u8).collect();
            w.write_all(&bytes)?;
        } else {
            for s in samples {
                w.write_all(&(*s).min(maxval).to_be_bytes())?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM written by [`write_pgm`]; returns dims, maxval, samples.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(FrameDims, u16, Vec<u16>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::InvalidParameter(format!("{}: {m}", path.display()));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let dims = FrameDims::new(num(&fields[1])?, num(&fields[2])?)?;
    let maxval = num(&fields[3])?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("bad maxval"));
    }
    let body = &bytes[pos.min(bytes.len())..];
    let samples: Vec<u16> = if maxval < 256 {
        body.iter().map(|b| *b as u16).collect()
    } else {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if samples.len() != dims.len() {
        return Err(bad("sample count does not match header"));
    }
    Ok((dims, maxval as u16, samples))
}

/// Sorted list of files with the given extension in `dir`.
pub fn list_files(dir: impl AsRef<Path>, ext: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationInfo {
    /// Per-step rotation as a unit quaternion `(w, x, y, z)`.
    pub step_quaternion: [f64; 4],
    /// Cumulative rotation of every frame.
    pub frame_quaternions: Vec<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub yaw_deg_per_frame: Option<f64>,
}

/// Describes a sequence on disk. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub frames: Vec<PathBuf>,
    #[serde(default)]
    pub masks: Vec<PathBuf>,
    #[serde(default)]
    pub flows_fwd: Vec<PathBuf>,
    #[serde(default)]
    pub flows_bwd: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rotation: Option<RotationInfo>,
}

impl SequenceManifest {
    pub fn dims(&self) -> Result<FrameDims> {
        FrameDims::new(self.width, self.height)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    /// Checks counts, file existence and that every file agrees on the
    /// frame size. Only headers are decoded for PNGs; flows are read fully.
    pub fn validate(&self, base: impl AsRef<Path>) -> Result<()> {
        let base = base.as_ref();
        let dims = self.dims()?;
        let t = self.frame_count;
        let err = |m: String| Err(Error::Manifest(m));
        if self.frames.len() != t {
            return err(format!(
                "{} frames listed, frame_count is {t}",
                self.frames.len()
            ));
        }
        if !self.masks.is_empty() && self.masks.len() != t {
            return err(format!("{} masks listed for {t} frames", self.masks.len()));
        }
        for (name, flows) in [("forward", &self.flows_fwd), ("backward", &self.flows_bwd)] {
            if !flows.is_empty() && flows.len() + 1 != t {
                return err(format!(
                    "{} {name} flows listed for {t} frames",
                    flows.len()
                ));
            }
        }
        for p in self.frames.iter().chain(&self.masks) {
            let full = base.join(p);
            let (w, h) = image::image_dimensions(&full).map_err(|source| Error::Decode {
                path: full.clone(),
                source,
            })?;
            if (w as usize, h as usize) != (dims.width, dims.height) {
                return err(format!(
                    "{} is {w}x{h}, expected {}x{}",
                    full.display(),
                    dims.width,
                    dims.height
                ));
            }
        }
        for p in self.flows_fwd.iter().chain(&self.flows_bwd) {
            let f = read_flo(base.join(p))?;
            if f.dims() != dims {
                return err(format!(
                    "{} is {}x{}, expected {}x{}",
                    p.display(),
                    f.dims().width,
                    f.dims().height,
                    dims.width,
                    dims.height
                ));
            }
        }
        Ok(())
    }
}
