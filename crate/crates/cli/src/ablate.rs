use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fnsf_core::{solve, synth_scene, Error, LossConfig, MetricReport, ScenePair, SynthConfig};

use crate::args::{EngineKind, SolveArgs};
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, ensure_dir, fmt_opt, read_cloud, read_flow, write_text};
use crate::manifest::RunManifest;
use crate::svg;

pub const ABLATE_HEADER: [&str; 11] = [
    "cell_m",
    "status",
    "epe_m",
    "acc5",
    "acc10",
    "angle_rad",
    "build_ms",
    "query_ms_mean",
    "total_ms",
    "iterations",
    "dt_bytes",
];

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    /// DT cell sizes in meters, comma separated; duplicates are dropped.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.2,0.1")]
    pub cells: Vec<f64>,
    /// Source cloud; a scene is generated when omitted.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Ground-truth flow for the metric columns.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Generated scene size.
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    #[arg(long, default_value_t = 2)]
    pub movers: usize,
    /// Output directory (ablate.csv, ablate.svg, manifest.json).
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
}

/// Drops repeated values, keeping first occurrences in order.
pub fn dedup_cells(cells: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &c in cells {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn load_scene(a: &AblateArgs) -> CliResult<ScenePair<f32>> {
    match (&a.source, &a.target) {
        (Some(s), Some(t)) => {
            let mut pair = ScenePair::new(read_cloud(s)?, read_cloud(t)?);
            if let Some(g) = &a.gt {
                pair = pair.with_gt(read_flow(g)?)?;
            }
            Ok(pair)
        }
        _ => {
            let seed = a.solve.seed;
            let cfg = SynthConfig::with_random_movers(a.points, a.movers, seed);
            Ok(synth_scene(&cfg, seed)?.cast())
        }
    }
}

pub fn run(a: &AblateArgs) -> CliResult<()> {
    let cells = dedup_cells(&a.cells);
    if cells.is_empty() {
        return Err(CliError::usage("--cells is empty"));
    }
    if let Some(c) = cells.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
        return Err(CliError::usage(format!("cell sizes must be > 0, got {c}")));
    }
    let pair = load_scene(a)?;
    ensure_dir(&a.out)?;
    let base = a.solve.config(EngineKind::Kd);
    let mut rows = vec![ABLATE_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut epes = Vec::new();
    let mut mem = Vec::new();
    for &cell in &cells {
        let cfg = fnsf_core::SolveConfig {
            loss: LossConfig::Dt {
                cell,
                margin: a.solve.margin,
                budget_bytes: a.solve.budget_bytes,
                squared: a.solve.squared,
            },
            ..base
        };
        let mut row = vec![format!("{cell}")];
        match solve(&pair, &cfg) {
            Ok(est) => {
                let m = pair
                    .gt_flow
                    .as_ref()
                    .map(|g| MetricReport::evaluate(&est.flow, g))
                    .transpose()?;
                let t = est.timing.ms();
                row.push("ok".into());
                row.push(fmt_opt(m.map(|m| m.epe_m), 6));
                row.push(fmt_opt(m.map(|m| m.acc5_pct), 4));
                row.push(fmt_opt(m.map(|m| m.acc10_pct), 4));
                row.push(fmt_opt(m.map(|m| m.angle_err_rad), 6));
                row.push(format!("{:.3}", t.pre_compute_ms));
                row.push(format!("{:.3}", t.loss_query_ms_mean));
                row.push(format!("{:.3}", t.total_ms));
                row.push(est.iterations_run.to_string());
                row.push(est.dt_bytes.map(|b| b.to_string()).unwrap_or_default());
                epes.push(m.map(|m| m.epe_m).unwrap_or(f64::NAN));
                mem.push(est.dt_bytes.unwrap_or(0) as f64);
            }
            Err(Error::MemoryBudget { required, budget }) => {
                eprintln!("cell {cell}: grid needs {required} bytes, budget {budget}; skipped");
                row.push("over_budget".into());
                row.extend(std::iter::repeat_n(String::new(), 9));
                epes.push(f64::NAN);
                mem.push(f64::NAN);
            }
            Err(e) => return Err(CliError::from(e).context(format!("cell {cell}"))),
        }
        rows.push(row);
    }
    let csv_path = a.out.join("ablate.csv");
    write_text(&csv_path, &csv_text(&rows)?)?;
    let svg_path = a.out.join("ablate.svg");
    write_text(
        &svg_path,
        &svg::lines(
            "DT cell size ablation (each series scaled to its maximum)",
            "cell (m)",
            "relative value",
            &cells,
            &[("EPE".to_string(), epes), ("DT memory".to_string(), mem)],
            true,
        ),
    )?;
    RunManifest::new(serde_json::json!({ "args": a, "cells": cells }))
        .output(&csv_path)
        .output(&svg_path)
        .write(&a.out.join("manifest.json"))?;
    print!("{}", csv_text(&rows)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_keeps_order() {
        assert_eq!(dedup_cells(&[0.5, 1.0, 0.5, 0.1, 1.0]), [0.5, 1.0, 0.1]);
    }
}
