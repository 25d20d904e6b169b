use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use erp_inpaint::io::{self as eio, BitDepth, RotationInfo, SequenceManifest};
use erp_inpaint::maskgen::{gen_mask_sequence, FrameMaskInfo, MaskGenConfig, RegionTrack};
use erp_inpaint::metrics::{masked_region_metrics, sequence_metrics, MetricSet, SsimParams};
use erp_inpaint::propagation::{propagate_sequence, PropagationConfig};
use erp_inpaint::synthetic::{gen_sequence, procedural_panorama, Rotation};
use erp_inpaint::{flow, DistortionMap, ErpFrame, FlowField, FrameDims, MaskFrame};

#[derive(Parser)]
#[command(
    name = "erp-inpaint",
    version,
    about = "Geodesic flow-consistent propagation for equirectangular video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill masked pixels along geodesically consistent flow.
    Propagate {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        flows_fwd: PathBuf,
        #[arg(long)]
        flows_bwd: PathBuf,
        #[arg(long, default_value_t = flow::DEFAULT_EPS_DEG)]
        eps_deg: f64,
        #[arg(long, default_value_t = 2)]
        passes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward/backward geodesic consistency of a flow pair.
    ValidateFlow {
        #[arg(long)]
        fwd: PathBuf,
        #[arg(long)]
        bwd: PathBuf,
        #[arg(long, default_value_t = flow::DEFAULT_EPS_DEG)]
        eps_deg: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        err_out: Option<PathBuf>,
    },
    /// PSNR, SSIM, WS-PSNR and WS-SSIM per frame.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded moving-blob mask sequence.
    GenMasks {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 304)]
        width: usize,
        #[arg(long, default_value_t = 152)]
        height: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        regions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Procedural panorama under constant yaw, with analytic flows.
    GenSynthetic {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 304)]
        width: usize,
        #[arg(long, default_value_t = 152)]
        height: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, allow_hyphen_values = true)]
        yaw_deg_per_frame: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-row distortion weights as an 8-bit PGM.
    DistortionMap {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Propagate {
            frames,
            masks,
            flows_fwd,
            flows_bwd,
            eps_deg,
            passes,
            out,
        } => propagate(
            &frames, &masks, &flows_fwd, &flows_bwd, eps_deg, passes, &out,
        ),
        Command::ValidateFlow {
            fwd,
            bwd,
            eps_deg,
            out,
            err_out,
        } => validate_flow(&fwd, &bwd, eps_deg, &out, err_out.as_deref()),
        Command::Metrics {
            pred,
            gt,
            masks,
            out,
        } => metrics(&pred, &gt, masks.as_deref(), &out),
        Command::GenMasks {
            seed,
            width,
            height,
            frames,
            regions,
            out,
        } => gen_masks(seed, FrameDims::new(width, height)?, frames, regions, &out),
        Command::GenSynthetic {
            seed,
            width,
            height,
            frames,
            yaw_deg_per_frame,
            out,
        } => gen_synthetic(
            seed,
            FrameDims::new(width, height)?,
            frames,
            yaw_deg_per_frame,
            &out,
        ),
        Command::DistortionMap { width, height, out } => {
            let dims = FrameDims::new(width, height)?;
            let map = DistortionMap::erp(dims);
            let samples: Vec<u16> = map
                .weights()
                .iter()
                .map(|w| (w * 255.0).round() as u16)
                .collect();
            eio::write_pgm(&out, dims, 255, &samples)?;
            Ok(())
        }
    }
}

fn files(dir: &Path, ext: &str, what: &str) -> Result<Vec<PathBuf>> {
    let list = eio::list_files(dir, ext).with_context(|| format!("listing {what}"))?;
    if list.is_empty() {
        bail!("no .{ext} files in {what} directory {}", dir.display());
    }
    Ok(list)
}

fn read_frames(dir: &Path, what: &str) -> Result<Vec<ErpFrame>> {
    files(dir, "png", what)?
        .iter()
        .map(|p| eio::read_frame(p).map_err(Into::into))
        .collect()
}

fn read_masks(dir: &Path) -> Result<Vec<MaskFrame>> {
    files(dir, "png", "mask")?
        .iter()
        .map(|p| eio::read_mask(p).map_err(Into::into))
        .collect()
}

fn read_flows(dir: &Path, what: &str) -> Result<Vec<FlowField>> {
    files(dir, "flo", what)?
        .iter()
        .map(|p| eio::read_flo(p).map_err(Into::into))
        .collect()
}

fn check_dims(expected: FrameDims, got: FrameDims, what: &str, i: usize) -> Result<()> {
    if expected != got {
        bail!(
            "{what} {i} is {}x{}, expected {}x{}",
            got.width,
            got.height,
            expected.width,
            expected.height
        );
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct PropagateSummary {
    frames: usize,
    eps_deg: f64,
    passes: usize,
    passes_run: usize,
    total_filled: usize,
    fill_counts: Vec<usize>,
    residual_counts: Vec<usize>,
}

fn propagate(
    frames_dir: &Path,
    masks_dir: &Path,
    fwd_dir: &Path,
    bwd_dir: &Path,
    eps_deg: f64,
    passes: usize,
    out: &Path,
) -> Result<()> {
    if eps_deg.is_nan() || eps_deg < 0.0 {
        bail!("--eps-deg must be non-negative, got {eps_deg}");
    }
    let mut frames = read_frames(frames_dir, "frame")?;
    let masks = read_masks(masks_dir)?;
    let fwd = read_flows(fwd_dir, "forward flow")?;
    let bwd = read_flows(bwd_dir, "backward flow")?;
    let t = frames.len();
    if masks.len() != t {
        bail!("{} masks for {t} frames", masks.len());
    }
    if fwd.len() + 1 != t || bwd.len() + 1 != t {
        bail!(
            "{t} frames need {} flows each way, got {} forward and {} backward",
            t - 1,
            fwd.len(),
            bwd.len()
        );
    }
    let dims = frames[0].dims();
    for (i, f) in frames.iter().enumerate() {
        check_dims(dims, f.dims(), "frame", i)?;
    }
    for (i, m) in masks.iter().enumerate() {
        check_dims(dims, m.dims(), "mask", i)?;
    }
    for (i, (f, b)) in fwd.iter().zip(&bwd).enumerate() {
        check_dims(dims, f.dims(), "forward flow", i)?;
        check_dims(dims, b.dims(), "backward flow", i)?;
    }

    for (f, m) in frames.iter_mut().zip(&masks) {
        f.clear_masked(m, 0.0)?;
    }
    let cfg = PropagationConfig::from_degrees(eps_deg, passes);
    let res = propagate_sequence(&frames, &masks, &fwd, &bwd, &cfg)?;

    let frames_out = out.join("frames");
    let masks_out = out.join("masks");
    ensure_dir(&frames_out)?;
    ensure_dir(&masks_out)?;
    for (i, (f, m)) in res.frames.iter().zip(&res.residual_masks).enumerate() {
        eio::write_frame(
            frames_out.join(eio::frame_file_name(i, "png")),
            f,
            BitDepth::Eight,
        )?;
        eio::write_mask(masks_out.join(eio::frame_file_name(i, "png")), m)?;
    }
    let summary = PropagateSummary {
        frames: t,
        eps_deg,
        passes,
        passes_run: res.passes_run,
        total_filled: res.total_filled(),
        residual_counts: res.residual_counts(),
        fill_counts: res.fill_counts,
    };
    write_json(&out.join("summary.json"), &summary)
}

fn validate_flow(
    fwd: &Path,
    bwd: &Path,
    eps_deg: f64,
    out: &Path,
    err_out: Option<&Path>,
) -> Result<()> {
    if eps_deg.is_nan() || eps_deg < 0.0 {
        bail!("--eps-deg must be non-negative, got {eps_deg}");
    }
    let f = eio::read_flo(fwd)?;
    let b = eio::read_flo(bwd)?;
    check_dims(f.dims(), b.dims(), "backward flow", 0)?;
    let vm = flow::flow_validity_map(&f, &b, eps_deg.to_radians())?;
    eio::write_mask(out, vm.valid())?;
    if let Some(path) = err_out {
        let samples: Vec<u16> = vm
            .error()
            .iter()
            .map(|e| {
                (e / std::f64::consts::PI * 65535.0)
                    .round()
                    .clamp(0.0, 65535.0) as u16
            })
            .collect();
        eio::write_pgm(path, vm.dims(), 65535, &samples)?;
    }
    println!(
        "valid {} of {} pixels ({:.4})",
        vm.valid_count(),
        vm.dims().len(),
        vm.valid_fraction()
    );
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn write_report(path: &Path, set: &MetricSet) -> Result<()> {
    let mut s = String::from("frame,psnr,ssim,ws_psnr,ws_ssim\n");
    let [psnr, ssim, ws_psnr, ws_ssim] = set.reports();
    for (i, frame) in psnr.frames.iter().enumerate() {
        s.push_str(&format!(
            "{frame},{},{},{},{}\n",
            fmt_value(psnr.per_frame[i]),
            fmt_value(ssim.per_frame[i]),
            fmt_value(ws_psnr.per_frame[i]),
            fmt_value(ws_ssim.per_frame[i]),
        ));
    }
    let mean = |r: &erp_inpaint::metrics::MetricReport| r.mean.map(fmt_value).unwrap_or_default();
    s.push_str(&format!(
        "mean,{},{},{},{}\n",
        mean(psnr),
        mean(ssim),
        mean(ws_psnr),
        mean(ws_ssim)
    ));
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(s.as_bytes())?;
    Ok(())
}

fn metrics(pred_dir: &Path, gt_dir: &Path, masks_dir: Option<&Path>, out: &Path) -> Result<()> {
    let pred = read_frames(pred_dir, "predicted frame")?;
    let gt = read_frames(gt_dir, "ground-truth frame")?;
    if pred.len() != gt.len() {
        bail!(
            "{} predicted frames for {} ground-truth frames",
            pred.len(),
            gt.len()
        );
    }
    let dims = gt[0].dims();
    for (i, (p, g)) in pred.iter().zip(&gt).enumerate() {
        check_dims(dims, g.dims(), "ground-truth frame", i)?;
        check_dims(dims, p.dims(), "predicted frame", i)?;
        if p.channels() != g.channels() {
            bail!(
                "frame {i}: {} predicted channels vs {} ground-truth",
                p.channels(),
                g.channels()
            );
        }
    }
    let dmap = DistortionMap::erp(dims);
    let params = SsimParams::default();
    let set = match masks_dir {
        Some(dir) => {
            let masks = read_masks(dir)?;
            if masks.len() != gt.len() {
                bail!("{} masks for {} frames", masks.len(), gt.len());
            }
            for (i, m) in masks.iter().enumerate() {
                check_dims(dims, m.dims(), "mask", i)?;
            }
            masked_region_metrics(&pred, &gt, &masks, &dmap, &params)?
        }
        None => sequence_metrics(&pred, &gt, &dmap, &params)?,
    };
    write_report(out, &set)
}

#[derive(Serialize)]
struct MaskManifest<'a> {
    config: &'a MaskGenConfig,
    files: Vec<String>,
    coverage: Vec<f64>,
    regions: &'a [RegionTrack],
    frame_info: &'a [FrameMaskInfo],
}

fn gen_masks(seed: u64, dims: FrameDims, frames: usize, regions: usize, out: &Path) -> Result<()> {
    let cfg = MaskGenConfig::new(seed, dims, frames, regions);
    let seq = gen_mask_sequence(&cfg)?;
    ensure_dir(out)?;
    let mut names = Vec::with_capacity(frames);
    for (i, m) in seq.masks.iter().enumerate() {
        let name = eio::frame_file_name(i, "png");
        eio::write_mask(out.join(&name), m)?;
        names.push(name);
    }
    let manifest = MaskManifest {
        config: &seq.config,
        files: names,
        coverage: (0..frames).map(|t| seq.coverage(t)).collect(),
        regions: &seq.regions,
        frame_info: &seq.frame_info,
    };
    write_json(&out.join("masks.json"), &manifest)
}

fn gen_synthetic(
    seed: u64,
    dims: FrameDims,
    frames: usize,
    yaw_deg: f64,
    out: &Path,
) -> Result<()> {
    if !yaw_deg.is_finite() {
        bail!("--yaw-deg-per-frame must be finite");
    }
    let pano = procedural_panorama(seed, dims);
    let step = Rotation::yaw(yaw_deg.to_radians());
    let seq = gen_sequence(&pano, &step, frames)?;

    let dirs = ["frames", "flows_fwd", "flows_bwd"].map(|d| out.join(d));
    for d in &dirs {
        ensure_dir(d)?;
    }
    let mut manifest = SequenceManifest {
        width: dims.width,
        height: dims.height,
        frame_count: frames,
        frames: Vec::with_capacity(frames),
        masks: Vec::new(),
        flows_fwd: Vec::with_capacity(frames - 1),
        flows_bwd: Vec::with_capacity(frames - 1),
        seed: Some(seed),
        rotation: Some(RotationInfo {
            step_quaternion: step.to_quaternion(),
            frame_quaternions: seq.rotations.iter().map(Rotation::to_quaternion).collect(),
            yaw_deg_per_frame: Some(yaw_deg),
        }),
    };
    for (i, f) in seq.frames.iter().enumerate() {
        let rel = Path::new("frames").join(eio::frame_file_name(i, "png"));
        eio::write_frame(out.join(&rel), f, BitDepth::Eight)?;
        manifest.frames.push(rel);
    }
    for (i, (f, b)) in seq.flows_fwd.iter().zip(&seq.flows_bwd).enumerate() {
        let rf = Path::new("flows_fwd").join(eio::frame_file_name(i, "flo"));
        let rb = Path::new("flows_bwd").join(eio::frame_file_name(i, "flo"));
        eio::write_flo(out.join(&rf), f)?;
        eio::write_flo(out.join(&rb), b)?;
        manifest.flows_fwd.push(rf);
        manifest.flows_bwd.push(rb);
    }
    manifest.save(out.join("manifest.json"))?;
    Ok(())
}
