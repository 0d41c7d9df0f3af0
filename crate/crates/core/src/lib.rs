//! Scene flow between two point clouds by runtime optimization of a
//! coordinate model, with either a truncated Chamfer loss or a
//! distance-transform loss.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`). The aliases at the
//! bottom of this file pin the common instantiations.

pub mod dt;
pub mod error;
pub mod kdtree;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pointcloud;
pub mod scalar;
pub mod solver;

pub use dt::{build_dt, build_for_pair, DtMap, DtQuery, GridSpec, OccupancyGrid};
pub use error::{Error, Result};
pub use kdtree::KdTree;
pub use loss::{chamfer, chamfer_kd, dt_loss, ChamferKd, Direction, LossReport};
pub use metrics::{acc_relaxed, acc_strict, angle_error, epe, MetricReport};
pub use model::{
    AdamConfig, AdamState, EncoderSpec, FlowModel, LinearModel, LinearParams, MlpParams,
};
pub use pointcloud::{
    bounds, load_cloud, save_cloud, subsample, synth_scene, synth_sequence, Aabb, CloudFormat,
    FlowField, PointCloud, ScenePair, SynthConfig,
};
pub use scalar::{Real, Vec3};
pub use solver::{
    accumulate, solve, FlowEstimate, LossConfig, ModelConfig, SolveConfig, TimingBreakdown,
};

pub type PointCloud32 = PointCloud<f32>;
pub type PointCloud64 = PointCloud<f64>;
pub type FlowField32 = FlowField<f32>;
pub type FlowField64 = FlowField<f64>;
pub type ScenePair32 = ScenePair<f32>;
pub type ScenePair64 = ScenePair<f64>;
pub type MlpParams32 = MlpParams<f32>;
pub type MlpParams64 = MlpParams<f64>;
pub type LinearModel32 = LinearModel<f32>;
pub type LinearModel64 = LinearModel<f64>;
pub type FlowEstimate32 = FlowEstimate<f32>;
pub type FlowEstimate64 = FlowEstimate<f64>;
