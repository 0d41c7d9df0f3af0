//! Point clouds, flow fields and the seeded synthetic scene generator.

mod io;
mod synth;

pub use io::{load_cloud, load_flow, read_cloud, save_cloud, save_flow, write_cloud, CloudFormat};
pub use synth::{
    synth_scene, synth_sequence, MoverConfig, RigidMotion, SceneDescriptor, SceneSequence,
    SynthConfig,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{cast3, is_finite3, Real, Vec3};

/// Unordered set of 3D points in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<T: Real = f64> {
    points: Vec<Vec3<T>>,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud, rejecting NaN/Inf coordinates.
    pub fn new(points: Vec<Vec3<T>>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !is_finite3(*p)) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3<T>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cast<S: Real>(&self) -> PointCloud<S> {
        PointCloud {
            points: self.points.iter().map(|&p| cast3(p)).collect(),
        }
    }

    /// Cloud moved by a per-point flow.
    pub fn displaced(&self, flow: &FlowField<T>) -> Result<Self> {
        if flow.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "flow vs cloud",
                left: flow.len(),
                right: self.len(),
            });
        }
        let points = self
            .points
            .iter()
            .zip(flow.vectors())
            .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
            .collect();
        PointCloud::new(points)
    }

    /// Concatenation of several clouds, in order.
    pub fn union<'a>(clouds: impl IntoIterator<Item = &'a PointCloud<T>>) -> Self {
        let points = clouds
            .into_iter()
            .flat_map(|c| c.points.iter().copied())
            .collect();
        Self { points }
    }
}

/// Per-point 3D motion vectors, aligned with a source cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowField<T: Real = f64> {
    vectors: Vec<Vec3<T>>,
}

impl<T: Real> FlowField<T> {
    pub fn new(vectors: Vec<Vec3<T>>) -> Result<Self> {
        if let Some(index) = vectors.iter().position(|v| !is_finite3(*v)) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { vectors })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![[T::zero(); 3]; n],
        }
    }

    pub fn vectors(&self) -> &[Vec3<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn cast<S: Real>(&self) -> FlowField<S> {
        FlowField {
            vectors: self.vectors.iter().map(|&v| cast3(v)).collect(),
        }
    }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    pub fn inflate(&self, pad: f64) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] -= pad;
            out.max[a] += pad;
        }
        out
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Tight bounding box of a cloud, inflated by `pad` on every side.
pub fn bounds<T: Real>(cloud: &PointCloud<T>, pad: f64) -> Result<Aabb> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("bounds"));
    }
    if !(pad >= 0.0) || !pad.is_finite() {
        return Err(Error::invalid(format!("pad must be finite and >= 0, got {pad}")));
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in cloud.points() {
        for a in 0..3 {
            let v = p[a].as_f64();
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    }
    Ok(Aabb { min, max }.inflate(pad))
}

/// Uniform subset of `n` points without replacement, in original order.
///
/// Returns the cloud unchanged (identity index map) when `n >= len`.
pub fn subsample<T: Real>(
    cloud: &PointCloud<T>,
    n: usize,
    seed: u64,
) -> Result<(PointCloud<T>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("subsample size must be >= 1"));
    }
    if n >= cloud.len() {
        return Ok((cloud.clone(), (0..cloud.len()).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = rand::seq::index::sample(&mut rng, cloud.len(), n).into_vec();
    index.sort_unstable();
    let points = index.iter().map(|&i| cloud.points[i]).collect();
    Ok((PointCloud { points }, index))
}

/// A source/target pair with optional ground-truth flow for the source.
#[derive(Debug, Clone)]
pub struct ScenePair<T: Real = f64> {
    pub source: PointCloud<T>,
    pub target: PointCloud<T>,
    pub gt_flow: Option<FlowField<T>>,
    pub seed: u64,
    pub descriptor: Option<SceneDescriptor>,
}

impl<T: Real> ScenePair<T> {
    pub fn new(source: PointCloud<T>, target: PointCloud<T>) -> Self {
        Self {
            source,
            target,
            gt_flow: None,
            seed: 0,
            descriptor: None,
        }
    }

    pub fn with_gt(mut self, gt: FlowField<T>) -> Result<Self> {
        if gt.len() != self.source.len() {
            return Err(Error::LengthMismatch {
                what: "gt flow vs source",
                left: gt.len(),
                right: self.source.len(),
            });
        }
        self.gt_flow = Some(gt);
        Ok(self)
    }

    pub fn cast<S: Real>(&self) -> ScenePair<S> {
        ScenePair {
            source: self.source.cast(),
            target: self.target.cast(),
            gt_flow: self.gt_flow.as_ref().map(FlowField::cast),
            seed: self.seed,
            descriptor: self.descriptor.clone(),
        }
    }
}
