//! Command-line grammar and the subcommand implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nucseg_core::color_transform::transform_region;
use nucseg_core::preprocess::{enhance_contrast, partition_blocks};
use nucseg_core::synthetic::{generate, SynthParams};
use nucseg_core::{aji, segment, ChannelMode, LabelMap, PipelineConfig, RgbImage};
use rayon::prelude::*;

use crate::annotation::{parse_annotation_xml, rasterize_polygons};
use crate::image_io::{
    load_image, load_label_png, read_text, save_label_png, save_mask_png, save_rgb_png, write_atomic,
};
use crate::overlay::render_overlay;

#[derive(Debug, Parser)]
#[command(name = "nucseg", version, about = "Unsupervised nuclei instance segmentation for H&E tiles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image into a 16-bit instance label PNG.
    Segment(SegmentArgs),
    /// Score predicted label maps against ground truth with AJI.
    Evaluate(EvaluateArgs),
    /// Segment with the P channel and with CIE L*, and score both.
    Ablate(AblateArgs),
    /// Write a synthetic image and its ground-truth labels.
    Synth(SynthArgs),
    /// Print the P/Q/R energy fractions of every block as CSV.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub image: PathBuf,
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "mask.png")]
    pub out: PathBuf,
    /// Also write the image with instance boundaries drawn on it.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Write block decisions and per-pass label maps here.
    #[arg(long)]
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground truth, as annotation XML or 16-bit label PNG. Repeatable.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Predicted 16-bit label PNG, paired with --gt in order. Repeatable.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Write a per-image CSV report.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    pub image: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of nuclei (default 40).
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    pub image: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Segment(a) => run_segment(&a, out),
        Command::Evaluate(a) => run_evaluate(&a, out),
        Command::Ablate(a) => run_ablate(&a, out),
        Command::Synth(a) => run_synth(&a, out),
        Command::Energy(a) => run_energy(&a, out),
    }
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = read_text(p)?;
            PipelineConfig::parse(&text).with_context(|| format!("{}: invalid configuration", p.display()))
        }
    }
}

/// Ground truth from annotation XML (rasterized at `w × h`) or a label PNG.
pub fn load_ground_truth(path: &Path, w: usize, h: usize) -> Result<LabelMap> {
    let is_xml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    if !is_xml {
        return Ok(load_label_png(path)?);
    }
    let ann = parse_annotation_xml(path)?;
    for warning in &ann.warnings {
        eprintln!("warning: {}: {warning}", path.display());
    }
    Ok(rasterize_polygons(&ann.polygons, w, h))
}

fn run_segment(a: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let img = load_image(&a.image)?;
    let seg = segment(&img, &cfg).with_context(|| format!("{}: segmentation failed", a.image.display()))?;
    save_label_png(&a.out, &seg.labels)?;
    if let Some(path) = &a.overlay {
        save_rgb_png(path, &render_overlay(&img, &seg.labels))?;
    }
    if let Some(dir) = &a.debug_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
        let json = serde_json::to_string_pretty(&seg.records)?;
        write_atomic(&dir.join("blocks.json"), json.as_bytes())?;
        write_atomic(&dir.join("config.txt"), cfg.to_config_string().as_bytes())?;
        save_mask_png(&dir.join("binary.png"), &seg.mask)?;
        for (i, lm) in seg.refine.trace.iter().enumerate() {
            save_label_png(&dir.join(format!("iter_{:02}.png", i + 1)), lm)?;
        }
    }
    for c in &seg.degenerate_channels {
        eprintln!("warning: channel {c} has no spread between its contrast percentiles and was left unchanged");
    }
    writeln!(
        out,
        "instances={} iterations={} converged={}",
        seg.labels.count, seg.refine.iterations, seg.refine.converged
    )?;
    Ok(())
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub aji: f64,
    pub gt_instances: u32,
    pub pred_instances: u32,
}

pub fn evaluate_pair(gt: &Path, pred: &Path) -> Result<EvalRow> {
    let p = load_label_png(pred)?;
    let g = load_ground_truth(gt, p.width, p.height)?;
    let score = aji(&g, &p).with_context(|| format!("{} vs {}", gt.display(), pred.display()))?;
    let image_id = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(EvalRow { image_id, aji: score, gt_instances: g.count, pred_instances: p.count })
}

/// CSV report with a trailing row of means.
pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("image_id,aji,gt_instances,pred_instances\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.image_id, r.aji, r.gt_instances, r.pred_instances);
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let _ = writeln!(
        s,
        "mean,{},{},{}",
        mean(|r| r.aji),
        mean(|r| r.gt_instances as f64),
        mean(|r| r.pred_instances as f64)
    );
    s
}

fn run_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    if a.gt.len() != a.pred.len() {
        bail!("got {} --gt files but {} --pred files", a.gt.len(), a.pred.len());
    }
    let rows = a.gt.par_iter().zip(&a.pred).map(|(g, p)| evaluate_pair(g, p)).collect::<Result<Vec<_>>>()?;
    for r in &rows {
        writeln!(
            out,
            "{}: aji={:?} gt_instances={} pred_instances={}",
            r.image_id, r.aji, r.gt_instances, r.pred_instances
        )?;
    }
    if rows.len() > 1 {
        writeln!(out, "mean: aji={:?}", rows.iter().map(|r| r.aji).sum::<f64>() / rows.len() as f64)?;
    }
    if let Some(path) = &a.csv {
        write_atomic(path, report_csv(&rows).as_bytes())?;
    }
    Ok(())
}

fn run_ablate(a: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let img = load_image(&a.image)?;
    let gt = load_ground_truth(&a.gt, img.width(), img.height())?;
    for mode in [ChannelMode::P, ChannelMode::L] {
        let seg = segment(&img, &cfg.clone().with_channel(mode))?;
        writeln!(out, "channel={mode} aji={:?} instances={}", aji(&gt, &seg.labels)?, seg.labels.count)?;
    }
    Ok(())
}

fn run_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut params = SynthParams::with_seed(a.seed);
    if let Some(count) = a.count {
        params.count = count;
    }
    let syn = generate(&params)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("{}: cannot create directory", a.out_dir.display()))?;
    let image = a.out_dir.join(format!("synth_{:04}.png", a.seed));
    let gt = a.out_dir.join(format!("synth_{:04}_gt.png", a.seed));
    save_rgb_png(&image, &syn.image)?;
    save_label_png(&gt, &syn.labels)?;
    writeln!(out, "{} {} instances={}", image.display(), gt.display(), syn.labels.count)?;
    Ok(())
}

/// `(x0, y0, w, h, fractions)`; fractions are `None` for constant blocks.
pub type BlockEnergy = (usize, usize, usize, usize, Option<[f64; 3]>);

/// Per-block energy fractions of `img`.
pub fn block_energies(img: &RgbImage, cfg: &PipelineConfig) -> Result<Vec<BlockEnergy>> {
    let enhanced = enhance_contrast(img, cfg.contrast_low, cfg.contrast_high)?.image;
    let grid = partition_blocks(&enhanced, cfg.block_size)?;
    Ok(grid
        .blocks
        .par_iter()
        .map(|b| (b.x0, b.y0, b.w, b.h, transform_region(&enhanced, b, ChannelMode::P).energy))
        .collect())
}

fn run_energy(a: &EnergyArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let img = load_image(&a.image)?;
    let rows = block_energies(&img, &cfg)?;
    writeln!(out, "x0,y0,w,h,p,q,r")?;
    let mut sum = [0.0; 3];
    let mut n = 0;
    for (x0, y0, w, h, e) in &rows {
        match e {
            Some(f) => {
                writeln!(out, "{x0},{y0},{w},{h},{},{},{}", f[0], f[1], f[2])?;
                for (acc, v) in sum.iter_mut().zip(f) {
                    *acc += v;
                }
                n += 1;
            }
            None => writeln!(out, "{x0},{y0},{w},{h},,,")?,
        }
    }
    if n > 0 {
        let n = n as f64;
        writeln!(out, "mean,,,,{},{},{}", sum[0] / n, sum[1] / n, sum[2] / n)?;
    }
    Ok(())
}
