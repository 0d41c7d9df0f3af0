use clap::{Args, ValueEnum};
use serde::Serialize;

use fnsf_core::loss::Direction;
use fnsf_core::solver::ChamferEngine;
use fnsf_core::{LossConfig, ModelConfig, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Distance-transform loss.
    Dt,
    /// Truncated Chamfer loss.
    Cd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Brute,
    Kd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Linear,
}

/// Model, loss and optimizer flags shared by every solving command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = LossKind::Dt)]
    pub loss: LossKind,
    /// Nearest-neighbour engine for the Chamfer loss [default: kd, brute for bench]
    #[arg(long, value_enum)]
    pub engine: Option<EngineKind>,
    #[arg(long, value_enum, default_value_t = ModelKind::Mlp)]
    pub model: ModelKind,
    /// DT grid cell edge, meters.
    #[arg(long, default_value_t = 0.1)]
    pub cell: f64,
    /// Padding of the DT grid around both clouds, meters.
    #[arg(long, default_value_t = 2.0)]
    pub margin: f64,
    /// Chamfer truncation distance, meters.
    #[arg(long, default_value_t = 2.0)]
    pub trunc: f64,
    /// Add the target-to-source Chamfer term.
    #[arg(long)]
    pub bidirectional: bool,
    /// Sum squared DT distances.
    #[arg(long)]
    pub squared: bool,
    /// Refuse DT grids needing more than this many bytes.
    #[arg(long, default_value_t = 8 << 30)]
    pub budget_bytes: u64,
    /// Adam step size [default: 8e-3 for mlp, 1e-3 for linear]
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    /// Relative improvement of the best loss that resets patience.
    #[arg(long, default_value_t = 1e-4)]
    pub min_delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Number of linear layers in the MLP.
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    /// Encoder voxel edge of the linear model, meters.
    #[arg(long, default_value_t = 2.0)]
    pub voxel: f64,
    /// Gaussian width of the encoder [default: 2 x voxel]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// TV weight of the linear model.
    #[arg(long, default_value_t = 1.0)]
    pub tv_weight: f64,
}

impl SolveArgs {
    pub fn config(&self, default_engine: EngineKind) -> SolveConfig {
        self.config_for(self.model, self.loss, default_engine)
    }

    pub fn config_for(&self, model: ModelKind, loss: LossKind, default_engine: EngineKind) -> SolveConfig {
        let model = match model {
            ModelKind::Mlp => ModelConfig::Mlp {
                width: self.width,
                depth: self.depth,
            },
            ModelKind::Linear => ModelConfig::Linear {
                voxel: self.voxel,
                sigma: self.sigma,
                tv_weight: self.tv_weight,
            },
        };
        let loss = match loss {
            LossKind::Dt => LossConfig::Dt {
                cell: self.cell,
                margin: self.margin,
                budget_bytes: self.budget_bytes,
                squared: self.squared,
            },
            LossKind::Cd => LossConfig::Chamfer {
                trunc: self.trunc,
                direction: if self.bidirectional {
                    Direction::Bidirectional
                } else {
                    Direction::Forward
                },
                engine: match self.engine.unwrap_or(default_engine) {
                    EngineKind::Brute => ChamferEngine::Brute,
                    EngineKind::Kd => ChamferEngine::Kd,
                },
            },
        };
        SolveConfig {
            lr: self.lr.unwrap_or(model.default_lr()),
            max_iters: self.max_iters,
            patience: self.patience,
            min_delta: self.min_delta,
            seed: self.seed,
            ..SolveConfig::new(model, loss)
        }
    }
}

/// Short label such as `dt-mlp`.
pub fn method_name(cfg: &SolveConfig) -> String {
    let loss = match cfg.loss {
        LossConfig::Dt { .. } => "dt",
        LossConfig::Chamfer { .. } => "cd",
    };
    let model = match cfg.model {
        ModelConfig::Mlp { .. } => "mlp",
        ModelConfig::Linear { .. } => "linear",
    };
    format!("{loss}-{model}")
}

/// Parses `cd-mlp` style method labels.
pub fn parse_method(s: &str) -> Result<(LossKind, ModelKind), String> {
    let (l, m) = s
        .split_once('-')
        .ok_or_else(|| format!("method {s:?} is not <loss>-<model>"))?;
    let loss = LossKind::from_str(l, true)?;
    let model = ModelKind::from_str(m, true)?;
    Ok((loss, model))
}
