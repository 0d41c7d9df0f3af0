use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use serde::Serialize;

use fnsf_core::solver::TimingMs;
use fnsf_core::{solve, synth_scene, MetricReport, ScenePair, SynthConfig};

use crate::args::{method_name, parse_method, EngineKind, LossKind, ModelKind, SolveArgs};
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, ensure_dir, write_text};
use crate::manifest::RunManifest;
use crate::solve_cmds::{header_row, metrics_row};
use crate::svg;

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Scene sizes (source points), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "20000")]
    pub points: Vec<usize>,
    /// Scenes per size; scene `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 3)]
    pub scenes: usize,
    #[arg(long, default_value_t = 2)]
    pub movers: usize,
    /// Methods as `<dt|cd>-<mlp|linear>`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "cd-mlp,cd-linear,dt-mlp,dt-linear")]
    pub methods: Vec<String>,
    /// Concurrent solves; also capped by FNSF_THREADS.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory (bench.csv, bench.svg, manifest.json).
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
}

/// Worker count after applying the FNSF_THREADS cap.
pub fn worker_count(requested: usize, jobs: usize) -> usize {
    let cap = std::env::var("FNSF_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(usize::MAX);
    requested.max(1).min(cap).min(jobs.max(1))
}

struct Job {
    scene: usize,
    method: usize,
}

struct Outcome {
    metrics: MetricReport,
    timing: TimingMs,
}

pub fn run(a: &BenchArgs) -> CliResult<()> {
    if a.scenes == 0 || a.points.is_empty() {
        return Err(CliError::usage("bench needs at least one scene"));
    }
    let methods: Vec<(LossKind, ModelKind)> = a
        .methods
        .iter()
        .map(|m| parse_method(m).map_err(CliError::usage))
        .collect::<CliResult<_>>()?;
    let configs: Vec<_> = methods
        .iter()
        .map(|&(l, m)| a.solve.config_for(m, l, EngineKind::Brute))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    ensure_dir(&a.out)?;

    let mut scenes: Vec<(String, ScenePair<f32>)> = Vec::new();
    for &n in &a.points {
        for i in 0..a.scenes {
            let seed = a.solve.seed + i as u64;
            let pair = synth_scene(&SynthConfig::with_random_movers(n, a.movers, seed), seed)?;
            scenes.push((format!("n{n}_s{seed}"), pair.cast()));
        }
    }
    let jobs: Vec<Job> = (0..scenes.len())
        .flat_map(|scene| (0..configs.len()).map(move |method| Job { scene, method }))
        .collect();
    let results: Mutex<Vec<Option<CliResult<Outcome>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = worker_count(a.workers, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let (name, pair) = &scenes[job.scene];
                let cfg = &configs[job.method];
                let out = solve(pair, cfg)
                    .and_then(|est| {
                        let gt = pair.gt_flow.as_ref().expect("generated scenes carry gt");
                        Ok(Outcome {
                            metrics: MetricReport::evaluate(&est.flow, gt)?,
                            timing: est.timing.ms(),
                        })
                    })
                    .map_err(|e| CliError::from(e).context(format!("scene {name}, method {}", method_name(cfg))));
                results.lock().unwrap()[k] = Some(out);
            });
        }
    });

    let results = results.into_inner().unwrap();
    let mut rows = vec![header_row()];
    // mean per-phase time per method, for the chart
    let mut phases = vec![vec![0.0; configs.len()]; 4];
    for (job, r) in jobs.iter().zip(results) {
        let o = r.expect("every job ran")?;
        let name = &scenes[job.scene].0;
        rows.push(metrics_row(name, &method_name(&configs[job.method]), &o.metrics, Some(&o.timing)));
        let t = o.timing;
        let other = (t.total_ms - t.pre_compute_ms - t.loss_query_ms_total - t.network_ms_total).max(0.0);
        for (p, v) in [t.pre_compute_ms, t.loss_query_ms_total, t.network_ms_total, other]
            .into_iter()
            .enumerate()
        {
            phases[p][job.method] += v / scenes.len() as f64;
        }
    }
    let csv_path = a.out.join("bench.csv");
    write_text(&csv_path, &csv_text(&rows)?)?;
    let svg_path = a.out.join("bench.svg");
    let names: Vec<String> = configs.iter().map(method_name).collect();
    write_text(
        &svg_path,
        &svg::stacked_bars(
            "Mean solve time per method",
            "time (ms)",
            &names,
            &["pre-compute", "loss query", "network", "other"].map(String::from),
            &phases,
        ),
    )?;
    RunManifest::new(serde_json::json!({ "args": a, "solve_configs": configs, "workers": workers }))
        .output(&csv_path)
        .output(&svg_path)
        .write(&a.out.join("manifest.json"))?;
    print!("{}", csv_text(&rows)?);
    Ok(())
}
