use std::path::Path;

use fnsf_core::pointcloud::{load_flow, save_flow};
use fnsf_core::{load_cloud, save_cloud, CloudFormat, FlowField, PointCloud};

use crate::error::{CliError, CliResult};

pub fn read_cloud(path: &Path) -> CliResult<PointCloud<f32>> {
    load_cloud(path, CloudFormat::from_path(path)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_flow(path: &Path) -> CliResult<FlowField<f32>> {
    load_flow(path, CloudFormat::from_path(path)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn write_cloud(cloud: &PointCloud<f32>, path: &Path) -> CliResult<()> {
    Ok(save_cloud(cloud, path, CloudFormat::from_path(path))?)
}

pub fn write_flow(flow: &FlowField<f32>, path: &Path) -> CliResult<()> {
    Ok(save_flow(flow, path, CloudFormat::from_path(path))?)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Renders rows (header first) as CSV text.
pub fn csv_text(rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}
