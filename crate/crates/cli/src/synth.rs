use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use fnsf_core::{synth_scene, synth_sequence, FlowField, PointCloud, SynthConfig};

use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, write_cloud, write_flow};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    /// `FNSF` binary (`.bin`).
    Bin,
    /// Whitespace text (`.xyz`).
    Xyz,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Total source points.
    #[arg(long, default_value_t = 20_000)]
    pub points: usize,
    /// Number of rigidly moving boxes.
    #[arg(long, default_value_t = 2)]
    pub movers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian sampling noise, meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Apparent motion of the static world, `x,y,z` meters.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ego: Option<Vec<f64>>,
    /// Write a constant-velocity sequence of this many frames instead of a pair.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, value_enum, default_value_t = FileFormat::Bin)]
    pub format: FileFormat,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(a: &SynthArgs) -> CliResult<()> {
    let mut cfg = SynthConfig::with_random_movers(a.points, a.movers, a.seed);
    cfg.noise_sigma = a.noise;
    if let Some(e) = &a.ego {
        cfg.ego_translation = [e[0], e[1], e[2]];
    }
    cfg.validate()?;
    ensure_dir(&a.out)?;
    let ext = match a.format {
        FileFormat::Bin => "bin",
        FileFormat::Xyz => "xyz",
    };
    let mut manifest = RunManifest::new(serde_json::json!({ "args": a, "generator": cfg }));
    match a.frames {
        None => {
            let pair = synth_scene(&cfg, a.seed)?;
            let files = [
                a.out.join(format!("source.{ext}")),
                a.out.join(format!("target.{ext}")),
                a.out.join(format!("gt_flow.{ext}")),
            ];
            write_cloud(&pair.source.cast::<f32>(), &files[0])?;
            write_cloud(&pair.target.cast::<f32>(), &files[1])?;
            let gt: FlowField<f32> = pair.gt_flow.as_ref().expect("generator sets gt").cast();
            write_flow(&gt, &files[2])?;
            for f in &files {
                manifest = manifest.output(f);
            }
            println!(
                "wrote {} source / {} target points to {}",
                pair.source.len(),
                pair.target.len(),
                a.out.display()
            );
        }
        Some(n) => {
            if n < 2 {
                return Err(CliError::usage("--frames must be >= 2"));
            }
            let seq = synth_sequence(&cfg, n, a.seed)?;
            for (k, frame) in seq.frames.iter().enumerate() {
                let f = a.out.join(format!("frame_{k:03}.{ext}"));
                write_cloud(&frame.cast::<f32>(), &f)?;
                manifest = manifest.output(&f);
            }
            // where every frame-0 point truly is in the last frame
            let last = PointCloud::new(seq.ground_truth_positions(0, n - 1))?;
            let f = a.out.join(format!("frame_000_at_{:03}.{ext}", n - 1));
            write_cloud(&last.cast::<f32>(), &f)?;
            manifest = manifest.output(&f);
            println!("wrote {n} frames to {}", a.out.display());
        }
    }
    manifest.write(&a.out.join("manifest.json"))
}
