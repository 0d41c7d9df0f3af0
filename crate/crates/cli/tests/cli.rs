use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fnsf() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fnsf"));
    c.env_remove("FNSF_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    fnsf().args(args).output().expect("spawn fnsf")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "fnsf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, points: usize, seed: u64, format: &str) {
    ok(&[
        "synth",
        "--points",
        &points.to_string(),
        "--movers",
        "2",
        "--seed",
        &seed.to_string(),
        "--format",
        format,
        "-o",
        s(dir),
    ]);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn csv_header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

fn write_xyz(path: &Path, rows: &[[f32; 3]]) {
    let text: String = rows.iter().map(|r| format!("{} {} {}\n", r[0], r[1], r[2])).collect();
    fs::write(path, text).unwrap();
}

#[test]
fn synth_writes_three_files_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene7");
    ok(&["synth", "--movers", "2", "--points", "20000", "--seed", "7", "-o", s(&dir)]);
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["gt_flow.bin", "manifest.json", "source.bin", "target.bin"]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    for key in ["command", "config", "version", "platform", "timestamp", "outputs"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 3000, 11, "bin");
    synth(&b, 3000, 11, "bin");
    for f in ["source.bin", "target.bin", "gt_flow.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn negative_movers_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["synth", "--movers", "-1", "-o", s(tmp.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn synth_sequence_writes_frames_and_truth() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("seq");
    ok(&["synth", "--points", "2000", "--frames", "3", "--format", "xyz", "-o", s(&dir)]);
    for f in ["frame_000.xyz", "frame_001.xyz", "frame_002.xyz", "frame_000_at_002.xyz"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    assert_eq!(line_count(&dir.join("frame_000.xyz")), line_count(&dir.join("frame_000_at_002.xyz")));
    let out = run(&["synth", "--frames", "1", "-o", s(&dir)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flow_writes_one_row_per_source_point_and_a_record() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 1500, 3, "xyz");
    let flow = tmp.path().join("flow.xyz");
    ok(&[
        "flow",
        "--loss",
        "dt",
        "--cell",
        "0.1",
        "--max-iters",
        "20",
        "--gt",
        s(&dir.join("gt_flow.xyz")),
        s(&dir.join("source.xyz")),
        s(&dir.join("target.xyz")),
        "-o",
        s(&flow),
    ]);
    assert_eq!(line_count(&flow), line_count(&dir.join("source.xyz")));
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("flow.xyz.json")).unwrap()).unwrap();
    for key in [
        "pre_compute_ms",
        "loss_query_ms_mean",
        "loss_query_ms_total",
        "network_ms_mean",
        "network_ms_total",
        "total_ms",
    ] {
        assert!(rec["timing"][key].as_f64().is_some(), "timing.{key} missing");
    }
    assert_eq!(rec["method"], "dt-mlp");
    assert!(rec["dt_bytes"].as_u64().unwrap() > 0);
    assert!(rec["metrics"]["epe_m"].as_f64().unwrap().is_finite());
    assert!(tmp.path().join("flow.xyz.manifest.json").exists());
}

#[test]
fn flow_chamfer_baseline_runs() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 1000, 4, "bin");
    let flow = tmp.path().join("flow.bin");
    ok(&[
        "flow",
        "--loss",
        "cd",
        "--trunc",
        "2.0",
        "--engine",
        "kd",
        "--model",
        "linear",
        "--max-iters",
        "10",
        s(&dir.join("source.bin")),
        s(&dir.join("target.bin")),
        "-o",
        s(&flow),
    ]);
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("flow.bin.json")).unwrap()).unwrap();
    assert_eq!(rec["method"], "cd-linear");
    assert!(rec["dt_bytes"].is_null());
    assert!(rec["metrics"].is_null());
}

#[test]
fn flow_with_missing_target_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src.xyz");
    write_xyz(&src, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let out = run(&[
        "flow",
        s(&src),
        s(&tmp.path().join("nope.xyz")),
        "-o",
        s(&tmp.path().join("f.xyz")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn flow_over_budget_is_a_resource_error() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 500, 5, "bin");
    let out = run(&[
        "flow",
        "--budget-bytes",
        "1024",
        s(&dir.join("source.bin")),
        s(&dir.join("target.bin")),
        "-o",
        s(&tmp.path().join("f.bin")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 800, 6, "xyz");
    let gt = dir.join("gt_flow.xyz");
    let csv_path = tmp.path().join("metrics.csv");
    let stdout = ok(&["eval", s(&gt), s(&gt), "--scene-id", "s6", "--csv", s(&csv_path)]);
    assert!(stdout.starts_with("scene_id,method,epe_m,acc5,acc10,angle_rad,"));
    ok(&["eval", s(&gt), s(&gt), "--scene-id", "s6", "--csv", s(&csv_path)]);
    let rows = csv_rows(&csv_path);
    assert_eq!(rows.len(), 2, "header written once, one row per call");
    let r = &rows[0];
    assert_eq!(&r[..6], ["s6", "unknown", "0.000000", "100.0000", "100.0000", "0.000000"]);
    assert!(r[6..].iter().all(String::is_empty));
}

#[test]
fn eval_of_flow_output_is_finite_and_uses_the_record() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 1200, 8, "bin");
    let flow = tmp.path().join("est.bin");
    ok(&[
        "flow",
        "--max-iters",
        "15",
        s(&dir.join("source.bin")),
        s(&dir.join("target.bin")),
        "-o",
        s(&flow),
    ]);
    let stdout = ok(&[
        "eval",
        s(&flow),
        s(&dir.join("gt_flow.bin")),
        "--record",
        s(&tmp.path().join("est.bin.json")),
    ]);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "est");
    assert_eq!(row[1], "dt-mlp");
    for v in &row[2..] {
        assert!(v.parse::<f64>().unwrap().is_finite(), "{v}");
    }
}

#[test]
fn eval_with_mismatched_lengths_fails() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a.xyz"), tmp.path().join("b.xyz"));
    write_xyz(&a, &[[0.0; 3], [1.0, 0.0, 0.0]]);
    write_xyz(&b, &[[0.0; 3]]);
    let out = run(&["eval", s(&a), s(&b)]);
    assert_ne!(code(&out), 0);
}

fn bench(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["bench", "-o", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("bench.csv")
}

#[test]
fn bench_emits_one_row_per_scene_and_method() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("bench");
    let csv_path = bench(&dir, &["--points", "600", "--scenes", "3", "--max-iters", "5", "--workers", "2"]);
    let header = csv_header(&csv_path);
    assert_eq!(
        header,
        [
            "scene_id",
            "method",
            "epe_m",
            "acc5",
            "acc10",
            "angle_rad",
            "pre_ms",
            "query_ms_total",
            "network_ms_total",
            "total_ms"
        ]
    );
    let rows = csv_rows(&csv_path);
    assert_eq!(rows.len(), 12);
    for r in &rows {
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert!(f(6) + f(7) + f(8) <= f(9) + 1e-3, "phases exceed total in {r:?}");
    }
    let mut methods: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    methods.sort();
    methods.dedup();
    assert_eq!(methods, ["cd-linear", "cd-mlp", "dt-linear", "dt-mlp"]);
    assert!(fs::read_to_string(dir.join("bench.svg")).unwrap().starts_with("<svg"));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn bench_is_deterministic_apart_from_timing() {
    let tmp = TempDir::new().unwrap();
    let args = ["--points", "400", "--scenes", "2", "--max-iters", "4", "--workers", "2"];
    let a = csv_rows(&bench(&tmp.path().join("a"), &args));
    let b = csv_rows(&bench(&tmp.path().join("b"), &args));
    let strip = |rows: Vec<Vec<String>>| rows.into_iter().map(|r| r[..6].to_vec()).collect::<Vec<_>>();
    assert_eq!(strip(a), strip(b));
}

#[test]
fn bench_rejects_unknown_method() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["bench", "--methods", "dt-cnn", "-o", s(tmp.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn dt_beats_chamfer_on_total_time_at_50k_points() {
    let tmp = TempDir::new().unwrap();
    let csv_path = bench(
        &tmp.path().join("bench"),
        &["--points", "50000", "--scenes", "3", "--methods", "cd-mlp,dt-mlp", "--max-iters", "2"],
    );
    let rows = csv_rows(&csv_path);
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        let total = |r: &Vec<String>| r[9].parse::<f64>().unwrap();
        assert_eq!((pair[0][1].as_str(), pair[1][1].as_str()), ("cd-mlp", "dt-mlp"));
        assert!(
            total(&pair[1]) < total(&pair[0]),
            "{}: dt-mlp {} ms vs cd-mlp {} ms",
            pair[0][0],
            total(&pair[1]),
            total(&pair[0])
        );
    }
}

#[test]
fn ablate_grid_dedups_and_memory_grows() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("ablate");
    ok(&[
        "ablate-grid",
        "--cells",
        "1.0,0.5,0.5,0.2,0.1,1.0",
        "--points",
        "2000",
        "--max-iters",
        "30",
        "-o",
        s(&dir),
    ]);
    let rows = csv_rows(&dir.join("ablate.csv"));
    assert_eq!(rows.len(), 4);
    let cells: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(cells, ["1", "0.5", "0.2", "0.1"]);
    let mem: Vec<u64> = rows.iter().map(|r| r[10].parse().unwrap()).collect();
    assert!(mem.windows(2).all(|w| w[0] < w[1]), "{mem:?}");
    assert!(rows.iter().all(|r| r[1] == "ok"));
    assert!(dir.join("ablate.svg").exists());
}

#[test]
fn ablate_grid_reports_over_budget_cells_and_continues() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("ablate");
    ok(&[
        "ablate-grid",
        "--cells",
        "1.0,0.05",
        "--points",
        "1000",
        "--max-iters",
        "5",
        "--budget-bytes",
        "4000000",
        "-o",
        s(&dir),
    ]);
    let rows = csv_rows(&dir.join("ablate.csv"));
    assert_eq!(rows[0][1], "ok");
    assert_eq!(rows[1][1], "over_budget");
    assert!(rows[1][2..].iter().all(String::is_empty));
}

#[test]
fn accumulate_two_identical_frames_doubles_the_cloud() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 800, 9, "xyz");
    let src = dir.join("source.xyz");
    let out = tmp.path().join("dense.xyz");
    ok(&["accumulate", s(&src), s(&src), "--max-iters", "5", "-o", s(&out)]);
    assert_eq!(line_count(&out), 2 * line_count(&src));
    assert!(tmp.path().join("dense.xyz.manifest.json").exists());
}

#[test]
fn accumulate_rejects_bad_reference_and_single_frame() {
    let tmp = TempDir::new().unwrap();
    let f = tmp.path().join("f.xyz");
    write_xyz(&f, &[[0.0; 3], [1.0, 2.0, 3.0]]);
    let o = tmp.path().join("o.xyz");
    assert_eq!(code(&run(&["accumulate", s(&f), s(&f), "--reference", "2", "-o", s(&o)])), 2);
    assert_eq!(code(&run(&["accumulate", s(&f), "-o", s(&o)])), 2);
}

#[test]
fn config_file_supplies_flags() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scene");
    synth(&dir, 700, 10, "bin");
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# baseline\nloss = cd\nmodel=linear\nmax-iters=3\nbidirectional=true\n").unwrap();
    let flow = tmp.path().join("f.bin");
    ok(&[
        "flow",
        "--config",
        s(&cfg),
        s(&dir.join("source.bin")),
        s(&dir.join("target.bin")),
        "-o",
        s(&flow),
    ]);
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("f.bin.json")).unwrap()).unwrap();
    assert_eq!(rec["method"], "cd-linear");
    assert_eq!(rec["iterations_run"], 3);

    fs::write(&cfg, "no-such-flag=1\n").unwrap();
    let out = run(&["flow", "--config", s(&cfg), "a", "b", "-o", s(&flow)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_cap_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("bench");
    let out = fnsf()
        .env("FNSF_THREADS", "1")
        .args(["bench", "--points", "300", "--scenes", "2", "--max-iters", "2", "--workers", "4", "-o"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["workers"], 1);
}
