//! Scene-flow accuracy metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pointcloud::FlowField;
use crate::scalar::{cross3, dot3, norm3, sub3, Real, Vec3};

/// Guard on the relative-error denominator.
pub const EPS_REL: f64 = 1e-12;
/// Vectors shorter than this contribute zero angle error.
pub const ANGLE_MIN_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub epe_m: f64,
    pub acc5_pct: f64,
    pub acc10_pct: f64,
    pub angle_err_rad: f64,
    pub count: usize,
}

fn pairs<'a, T: Real>(
    est: &'a FlowField<T>,
    gt: &'a FlowField<T>,
) -> Result<impl Iterator<Item = (Vec3<f64>, Vec3<f64>)> + 'a> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated vs ground-truth flow",
            left: est.len(),
            right: gt.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::EmptyCloud("flow for evaluation"));
    }
    Ok(est
        .vectors()
        .iter()
        .zip(gt.vectors())
        .map(|(e, g)| (e.map(|v| v.as_f64()), g.map(|v| v.as_f64()))))
}

/// Mean end-point error, meters.
pub fn epe<T: Real>(est: &FlowField<T>, gt: &FlowField<T>) -> Result<f64> {
    let n = est.len() as f64;
    Ok(pairs(est, gt)?.map(|(e, g)| norm3(sub3(e, g))).sum::<f64>() / n)
}

fn acc<T: Real>(est: &FlowField<T>, gt: &FlowField<T>, abs: f64, rel: f64) -> Result<f64> {
    let n = est.len() as f64;
    let hits = pairs(est, gt)?
        .filter(|&(e, g)| {
            let err = norm3(sub3(e, g));
            err < abs || err / norm3(g).max(EPS_REL) < rel
        })
        .count();
    Ok(100.0 * hits as f64 / n)
}

/// Percent of points with error under 5 cm or 5 % of the true flow length.
pub fn acc_strict<T: Real>(est: &FlowField<T>, gt: &FlowField<T>) -> Result<f64> {
    acc(est, gt, 0.05, 0.05)
}

/// Percent of points with error under 10 cm or 10 % of the true flow length.
pub fn acc_relaxed<T: Real>(est: &FlowField<T>, gt: &FlowField<T>) -> Result<f64> {
    acc(est, gt, 0.1, 0.1)
}

/// Mean angle between estimated and true flow vectors, radians.
pub fn angle_error<T: Real>(est: &FlowField<T>, gt: &FlowField<T>) -> Result<f64> {
    let n = est.len() as f64;
    let total: f64 = pairs(est, gt)?
        .map(|(e, g)| {
            let (ne, ng) = (norm3(e), norm3(g));
            if ne < ANGLE_MIN_NORM || ng < ANGLE_MIN_NORM {
                0.0
            } else {
                // same angle as acos of the normalized dot product, without
                // its rounding blow-up near 0 and pi
                norm3(cross3(e, g)).atan2(dot3(e, g))
            }
        })
        .sum();
    Ok(total / n)
}

impl MetricReport {
    pub fn evaluate<T: Real>(est: &FlowField<T>, gt: &FlowField<T>) -> Result<Self> {
        Ok(Self {
            epe_m: epe(est, gt)?,
            acc5_pct: acc_strict(est, gt)?,
            acc10_pct: acc_relaxed(est, gt)?,
            angle_err_rad: angle_error(est, gt)?,
            count: est.len(),
        })
    }
}
