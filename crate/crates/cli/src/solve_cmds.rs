use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::Value;

use fnsf_core::solver::{accumulate as accumulate_frames, TimingMs};
use fnsf_core::{solve, MetricReport, ScenePair, SolveConfig};

use crate::args::{method_name, EngineKind, SolveArgs};
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, fmt_opt, read_cloud, read_flow, write_cloud, write_flow};
use crate::manifest::{manifest_path, write_json, RunManifest};

pub const METRICS_HEADER: [&str; 10] = [
    "scene_id",
    "method",
    "epe_m",
    "acc5",
    "acc10",
    "angle_rad",
    "pre_ms",
    "query_ms_total",
    "network_ms_total",
    "total_ms",
];

/// One row of the metrics CSV.
pub fn metrics_row(scene: &str, method: &str, m: &MetricReport, t: Option<&TimingMs>) -> Vec<String> {
    let mut row = vec![
        scene.to_string(),
        method.to_string(),
        format!("{:.6}", m.epe_m),
        format!("{:.4}", m.acc5_pct),
        format!("{:.4}", m.acc10_pct),
        format!("{:.6}", m.angle_err_rad),
    ];
    row.extend(
        [
            t.map(|t| t.pre_compute_ms),
            t.map(|t| t.loss_query_ms_total),
            t.map(|t| t.network_ms_total),
            t.map(|t| t.total_ms),
        ]
        .map(|v| fmt_opt(v, 3)),
    );
    row
}

pub fn header_row() -> Vec<String> {
    METRICS_HEADER.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Estimated flow file (`.xyz`/`.txt` text, otherwise binary).
    #[arg(short, long)]
    pub out: PathBuf,
    /// JSON solve record [default: <out>.json]
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Ground-truth flow; adds metrics to the record.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub solve: SolveArgs,
}

/// JSON record of one solve.
#[derive(Debug, Serialize)]
pub struct SolveRecord {
    pub method: String,
    pub source: String,
    pub target: String,
    pub source_points: usize,
    pub target_points: usize,
    pub config: SolveConfig,
    pub iterations_run: usize,
    pub final_loss: f64,
    pub dt_bytes: Option<u64>,
    pub timing: TimingMs,
    pub metrics: Option<MetricReport>,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn flow(a: &FlowArgs) -> CliResult<()> {
    let cfg = a.solve.config(EngineKind::Kd);
    cfg.validate()?;
    let source = read_cloud(&a.source)?;
    let target = read_cloud(&a.target)?;
    let gt = a.gt.as_deref().map(read_flow).transpose()?;
    if let Some(g) = &gt {
        if g.len() != source.len() {
            return Err(CliError::usage(format!(
                "gt flow has {} rows, source has {} points",
                g.len(),
                source.len()
            )));
        }
    }
    let pair = ScenePair::new(source, target);
    let est = solve(&pair, &cfg)?;
    let metrics = gt
        .as_ref()
        .map(|g| MetricReport::evaluate(&est.flow, g))
        .transpose()?;
    write_flow(&est.flow, &a.out)?;
    let record_path = a.record.clone().unwrap_or_else(|| with_suffix(&a.out, ".json"));
    let record = SolveRecord {
        method: method_name(&cfg),
        source: a.source.display().to_string(),
        target: a.target.display().to_string(),
        source_points: pair.source.len(),
        target_points: pair.target.len(),
        config: cfg,
        iterations_run: est.iterations_run,
        final_loss: est.final_loss,
        dt_bytes: est.dt_bytes,
        timing: est.timing.ms(),
        metrics,
    };
    write_json(&record_path, &record)?;
    RunManifest::new(serde_json::to_value(a)?)
        .output(&a.out)
        .output(&record_path)
        .write(&manifest_path(&a.out))?;
    println!(
        "{} iterations, loss {:.6}, total {:.1} ms",
        est.iterations_run,
        est.final_loss,
        record.timing.total_ms
    );
    if let Some(m) = metrics {
        println!("epe {:.4} m, acc5 {:.2}%, acc10 {:.2}%", m.epe_m, m.acc5_pct, m.acc10_pct);
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Estimated flow.
    pub est: PathBuf,
    /// Ground-truth flow.
    pub gt: PathBuf,
    /// Solve record supplying method and timing columns.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// [default: file stem of EST]
    #[arg(long)]
    pub scene_id: Option<String>,
    /// [default: from the record, else "unknown"]
    #[arg(long)]
    pub method: Option<String>,
    /// Append the row to this CSV (header written when the file is new).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn read_record(path: &Path) -> CliResult<(Option<String>, TimingMs)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text)?;
    let t = &v["timing"];
    let f = |k: &str| {
        t[k].as_f64()
            .ok_or_else(|| CliError::usage(format!("{}: timing.{k} missing", path.display())))
    };
    let timing = TimingMs {
        pre_compute_ms: f("pre_compute_ms")?,
        loss_query_ms_mean: f("loss_query_ms_mean")?,
        loss_query_ms_total: f("loss_query_ms_total")?,
        network_ms_mean: f("network_ms_mean")?,
        network_ms_total: f("network_ms_total")?,
        total_ms: f("total_ms")?,
    };
    Ok((v["method"].as_str().map(str::to_string), timing))
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let est = read_flow(&a.est)?;
    let gt = read_flow(&a.gt)?;
    let m = MetricReport::evaluate(&est, &gt)?;
    let (rec_method, timing) = match &a.record {
        Some(p) => {
            let (m, t) = read_record(p)?;
            (m, Some(t))
        }
        None => (None, None),
    };
    let scene = a.scene_id.clone().unwrap_or_else(|| {
        a.est
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let method = a
        .method
        .clone()
        .or(rec_method)
        .unwrap_or_else(|| "unknown".to_string());
    let row = metrics_row(&scene, &method, &m, timing.as_ref());
    print!("{}", csv_text(&[header_row(), row.clone()])?);
    if let Some(path) = &a.csv {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let rows = if fresh { vec![header_row(), row] } else { vec![row] };
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        f.write_all(csv_text(&rows)?.as_bytes())
            .map_err(|e| CliError::io(path, e))?;
        RunManifest::new(serde_json::to_value(a)?)
            .output(path)
            .write(&manifest_path(path))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct AccumulateArgs {
    /// Frame files in time order.
    pub frames: Vec<PathBuf>,
    /// Index of the frame everything is integrated into [default: last]
    #[arg(long)]
    pub reference: Option<usize>,
    /// Densified cloud.
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
}

pub fn accumulate(a: &AccumulateArgs) -> CliResult<()> {
    if a.frames.len() < 2 {
        return Err(CliError::usage("accumulate needs at least 2 frame files"));
    }
    let reference = a.reference.unwrap_or(a.frames.len() - 1);
    if reference >= a.frames.len() {
        return Err(CliError::usage(format!(
            "--reference {reference} out of range for {} frames",
            a.frames.len()
        )));
    }
    let cfg = a.solve.config(EngineKind::Kd);
    cfg.validate()?;
    let frames = a
        .frames
        .iter()
        .map(|p| read_cloud(p))
        .collect::<CliResult<Vec<_>>>()?;
    let dense = accumulate_frames(&frames, &cfg, reference)?;
    write_cloud(&dense, &a.out)?;
    RunManifest::new(serde_json::to_value(a)?)
        .output(&a.out)
        .write(&manifest_path(&a.out))?;
    println!("wrote {} points to {}", dense.len(), a.out.display());
    Ok(())
}
