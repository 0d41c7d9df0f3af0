//! Runtime optimization of a flow model against a fixed target, and Euler
//! accumulation of a frame sequence through per-pair solves.

use std::time::Instant;

use serde::Serialize;

use crate::dt::{build_for_pair, DtMap, DEFAULT_BUDGET_BYTES, DEFAULT_CELL, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::loss::{chamfer, dt_loss, ChamferKd, Direction, LossReport, DEFAULT_TRUNC};
use crate::model::{
    AdamConfig, AdamState, EncoderSpec, FlowModel, LinearModel, MlpParams, DEFAULT_DEPTH,
    DEFAULT_VOXEL, DEFAULT_WIDTH,
};
use crate::pointcloud::{bounds, FlowField, PointCloud, ScenePair};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Mlp {
        width: usize,
        depth: usize,
    },
    Linear {
        voxel: f64,
        /// Gaussian width; `None` means twice the voxel edge.
        sigma: Option<f64>,
        tv_weight: f64,
    },
}

impl ModelConfig {
    pub fn mlp() -> Self {
        ModelConfig::Mlp {
            width: DEFAULT_WIDTH,
            depth: DEFAULT_DEPTH,
        }
    }

    pub fn linear() -> Self {
        ModelConfig::Linear {
            voxel: DEFAULT_VOXEL,
            sigma: None,
            tv_weight: 1.0,
        }
    }

    /// Adam step size suited to the family. One linear-model parameter feeds
    /// the flow of every point within a few encoder voxels, so it takes
    /// smaller steps than an MLP weight.
    pub fn default_lr(&self) -> f64 {
        match self {
            ModelConfig::Mlp { .. } => AdamConfig::default().lr,
            ModelConfig::Linear { .. } => LINEAR_LR,
        }
    }
}

pub const LINEAR_LR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChamferEngine {
    Brute,
    #[default]
    Kd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossConfig {
    Chamfer {
        trunc: f64,
        direction: Direction,
        engine: ChamferEngine,
    },
    Dt {
        cell: f64,
        margin: f64,
        budget_bytes: u64,
        /// Sum squared distances instead of raw ones.
        squared: bool,
    },
}

impl LossConfig {
    pub fn chamfer(engine: ChamferEngine) -> Self {
        LossConfig::Chamfer {
            trunc: DEFAULT_TRUNC,
            direction: Direction::Forward,
            engine,
        }
    }

    pub fn dt(cell: f64) -> Self {
        LossConfig::Dt {
            cell,
            margin: DEFAULT_MARGIN,
            budget_bytes: DEFAULT_BUDGET_BYTES,
            squared: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub lr: f64,
    pub max_iters: usize,
    pub patience: usize,
    /// Relative improvement of the best loss that resets the patience count.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::mlp(),
            loss: LossConfig::dt(DEFAULT_CELL),
            lr: AdamConfig::default().lr,
            max_iters: 1000,
            patience: 30,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl SolveConfig {
    /// Defaults with the given model and loss, and the model's default lr.
    pub fn new(model: ModelConfig, loss: LossConfig) -> Self {
        Self {
            model,
            loss,
            lr: model.default_lr(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::invalid("min_delta must be >= 0"));
        }
        match self.model {
            ModelConfig::Mlp { width, depth } if width == 0 || depth == 0 => {
                return Err(Error::invalid("mlp width and depth must be >= 1"))
            }
            ModelConfig::Linear { tv_weight, .. } if !(tv_weight >= 0.0) => {
                return Err(Error::invalid("tv weight must be >= 0"))
            }
            _ => {}
        }
        match self.loss {
            LossConfig::Chamfer { trunc, .. } if !(trunc > 0.0) => {
                Err(Error::invalid("chamfer truncation must be > 0"))
            }
            LossConfig::Dt { cell, margin, .. } if !(cell > 0.0) || !(margin >= 0.0) => {
                Err(Error::invalid("dt cell must be > 0 and margin >= 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Wall-clock phases of one solve, nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TimingBreakdown {
    pub pre_compute_ns: u64,
    pub loss_query_ns_total: u64,
    pub loss_query_ns_mean: u64,
    /// Forward, backward and optimizer step.
    pub network_ns_total: u64,
    pub network_ns_mean: u64,
    pub total_ns: u64,
}

/// Millisecond view used in JSON solve records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingMs {
    pub pre_compute_ms: f64,
    pub loss_query_ms_mean: f64,
    pub loss_query_ms_total: f64,
    pub network_ms_mean: f64,
    pub network_ms_total: f64,
    pub total_ms: f64,
}

impl TimingBreakdown {
    pub fn ms(&self) -> TimingMs {
        let f = |ns: u64| ns as f64 / 1e6;
        TimingMs {
            pre_compute_ms: f(self.pre_compute_ns),
            loss_query_ms_mean: f(self.loss_query_ns_mean),
            loss_query_ms_total: f(self.loss_query_ns_total),
            network_ms_mean: f(self.network_ns_mean),
            network_ms_total: f(self.network_ns_total),
            total_ms: f(self.total_ns),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowEstimate<T: Real> {
    pub flow: FlowField<T>,
    /// Parameters that achieved `final_loss`.
    pub model: FlowModel<T>,
    pub iterations_run: usize,
    pub final_loss: f64,
    /// Objective at every iteration, before that iteration's update.
    pub loss_history: Vec<f64>,
    pub timing: TimingBreakdown,
    /// Distance-map size for DT solves.
    pub dt_bytes: Option<u64>,
}

enum Engine<T: Real> {
    Brute {
        target: PointCloud<T>,
        trunc: f64,
        direction: Direction,
    },
    Kd(ChamferKd<T>),
    Dt {
        map: DtMap,
        squared: bool,
    },
}

impl<T: Real> Engine<T> {
    fn eval(&self, deformed: &PointCloud<T>) -> Result<LossReport<T>> {
        match self {
            Engine::Brute {
                target,
                trunc,
                direction,
            } => chamfer(deformed, target, *trunc, *direction),
            Engine::Kd(kd) => kd.eval(deformed),
            Engine::Dt { map, squared } => Ok(dt_loss(map, deformed, *squared)),
        }
    }
}

fn init_model<T: Real>(pair: &ScenePair<T>, cfg: &ModelConfig, seed: u64) -> Result<FlowModel<T>> {
    Ok(match *cfg {
        ModelConfig::Mlp { width, depth } => FlowModel::Mlp(MlpParams::init(width, depth, seed)?),
        ModelConfig::Linear {
            voxel,
            sigma,
            tv_weight,
        } => {
            let b = bounds(&pair.source, 0.0)?.union(&bounds(&pair.target, 0.0)?);
            FlowModel::Linear {
                model: LinearModel::new(EncoderSpec::covering(&b, voxel, sigma)?),
                tv_weight,
            }
        }
    })
}

fn ns(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

/// Fits a flow model so the displaced source matches the target under the
/// configured loss. Returns the best-loss parameters seen.
pub fn solve<T: Real>(pair: &ScenePair<T>, cfg: &SolveConfig) -> Result<FlowEstimate<T>> {
    cfg.validate()?;
    if pair.source.is_empty() {
        return Err(Error::EmptyCloud("solve source"));
    }
    if pair.target.is_empty() {
        return Err(Error::EmptyCloud("solve target"));
    }
    let start = Instant::now();

    let t = Instant::now();
    let engine = match cfg.loss {
        LossConfig::Chamfer {
            trunc,
            direction,
            engine: ChamferEngine::Brute,
        } => Engine::Brute {
            target: pair.target.clone(),
            trunc,
            direction,
        },
        LossConfig::Chamfer {
            trunc,
            direction,
            engine: ChamferEngine::Kd,
        } => Engine::Kd(ChamferKd::new(&pair.target, trunc, direction)?),
        LossConfig::Dt {
            cell,
            margin,
            budget_bytes,
            squared,
        } => Engine::Dt {
            map: build_for_pair(&pair.source, &pair.target, cell, margin, budget_bytes)?,
            squared,
        },
    };
    let pre_compute_ns = ns(t);
    let dt_bytes = match &engine {
        Engine::Dt { map, .. } => Some(map.bytes()),
        _ => None,
    };

    let mut model = init_model(pair, &cfg.model, cfg.seed)?;
    let mut adam = AdamState::new(
        model.num_params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    )?;

    let mut best_loss = f64::INFINITY;
    let mut best_params = model.params().to_vec();
    let mut plateau_ref = f64::INFINITY;
    let mut stall = 0usize;
    let mut history = Vec::new();
    let (mut loss_ns, mut net_ns) = (0u64, 0u64);
    let mut iterations = 0;
    let mut tape = None;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let t = Instant::now();
        let flow = model.forward_into(&pair.source, &mut tape).map_err(|e| match e {
            Error::NonFiniteLayer { .. } | Error::NonFiniteValue(_) => Error::Diverged {
                iteration: it,
                loss: f64::NAN,
            },
            e => e,
        })?;
        let deformed = pair.source.displaced(&flow)?;
        net_ns += ns(t);

        let t = Instant::now();
        let report = engine.eval(&deformed)?;
        loss_ns += ns(t);

        let t = Instant::now();
        let reg = model.regularizer()?;
        let mut loss = report.value.as_f64();
        if let Some((v, _)) = &reg {
            loss += v.as_f64();
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss,
            });
        }
        history.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(model.params());
        }
        if it == 0 || plateau_ref - loss > cfg.min_delta * plateau_ref.abs() {
            plateau_ref = loss;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= cfg.patience || it + 1 == cfg.max_iters {
            net_ns += ns(t);
            break;
        }

        let tape = tape.as_mut().expect("forward filled the tape");
        let mut grad = model.backward_mut(tape, &report.dpoint)?;
        if let Some((_, g)) = reg {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        adam.step(model.params_mut(), &grad).map_err(|e| match e {
            Error::NonFiniteValue(_) => Error::Diverged {
                iteration: it,
                loss,
            },
            e => e,
        })?;
        net_ns += ns(t);
    }

    model.params_mut().copy_from_slice(&best_params);
    let flow = model.eval(&pair.source)?;
    let n = iterations as u64;
    Ok(FlowEstimate {
        flow,
        model,
        iterations_run: iterations,
        final_loss: best_loss,
        loss_history: history,
        timing: TimingBreakdown {
            pre_compute_ns,
            loss_query_ns_total: loss_ns,
            loss_query_ns_mean: loss_ns / n,
            network_ns_total: net_ns,
            network_ns_mean: net_ns / n,
            total_ns: ns(start),
        },
        dt_bytes,
    })
}

/// Advances every frame before `target_frame` into it by Euler steps through
/// the per-pair models: a point of frame `j` moves by model `j` (fitted on
/// frames `j -> j+1`), then by model `j+1` evaluated at its new position, and
/// so on. Frames after `target_frame` are not used. Returns the advanced
/// frames in order.
pub fn advance_frames<T: Real>(
    frames: &[PointCloud<T>],
    cfg: &SolveConfig,
    target_frame: usize,
) -> Result<Vec<PointCloud<T>>> {
    if frames.len() < 2 {
        return Err(Error::invalid("accumulation needs at least 2 frames"));
    }
    if target_frame >= frames.len() {
        return Err(Error::invalid(format!(
            "target frame {target_frame} out of range for {} frames",
            frames.len()
        )));
    }
    let mut models = Vec::with_capacity(target_frame);
    for k in 0..target_frame {
        let pair = ScenePair::new(frames[k].clone(), frames[k + 1].clone());
        models.push(solve(&pair, cfg)?.model);
    }
    let mut out = Vec::with_capacity(target_frame);
    for (j, frame) in frames[..target_frame].iter().enumerate() {
        let mut pts = frame.clone();
        for m in &models[j..] {
            let f = m.eval(&pts)?;
            pts = pts.displaced(&f)?;
        }
        out.push(pts);
    }
    Ok(out)
}

/// Union of the advanced earlier frames and the target frame.
pub fn accumulate<T: Real>(
    frames: &[PointCloud<T>],
    cfg: &SolveConfig,
    target_frame: usize,
) -> Result<PointCloud<T>> {
    let advanced = advance_frames(frames, cfg, target_frame)?;
    Ok(PointCloud::union(
        advanced.iter().chain(std::iter::once(&frames[target_frame])),
    ))
}
