//! Flow models with exact reverse-mode gradients, and the Adam optimizer.

mod adam;
mod encoding;
mod linear;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use encoding::{blend_weights, gaussian_encode, BlendEntry, EncoderSpec, DEFAULT_VOXEL};
pub use linear::{tv_reg, LinearModel, LinearParams, LinearTape, TV_EPS};
pub use mlp::{layer_shapes, MlpParams, MlpTape};

use crate::error::Result;
use crate::pointcloud::{FlowField, PointCloud};
use crate::scalar::{Real, Vec3};

/// Default depth (linear layers) and width of the coordinate MLP.
pub const DEFAULT_DEPTH: usize = 8;
pub const DEFAULT_WIDTH: usize = 128;

/// Either model family behind one interface for the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowModel<T: Real> {
    Mlp(MlpParams<T>),
    Linear {
        model: LinearModel<T>,
        /// Weight `lambda` of the `lambda / 2 * TV(W)` term.
        tv_weight: f64,
    },
}

#[derive(Debug, Clone)]
pub enum ModelTape<T: Real> {
    Mlp(MlpTape<T>),
    Linear(LinearTape<T>),
}

impl<T: Real> FlowModel<T> {
    pub fn forward(&self, points: &PointCloud<T>) -> Result<(FlowField<T>, ModelTape<T>)> {
        match self {
            FlowModel::Mlp(p) => {
                let (f, t) = p.forward(points)?;
                Ok((f, ModelTape::Mlp(t)))
            }
            FlowModel::Linear { model, .. } => {
                let (f, t) = model.forward(points)?;
                Ok((f, ModelTape::Linear(t)))
            }
        }
    }

    /// [`Self::forward`] that refills `tape` in place when it already holds
    /// buffers of the right family.
    pub fn forward_into(&self, points: &PointCloud<T>, tape: &mut Option<ModelTape<T>>) -> Result<FlowField<T>> {
        match self {
            FlowModel::Mlp(p) => {
                if !matches!(tape, Some(ModelTape::Mlp(_))) {
                    *tape = Some(ModelTape::Mlp(MlpTape::default()));
                }
                let Some(ModelTape::Mlp(t)) = tape else { unreachable!() };
                p.forward_into(points, t)
            }
            FlowModel::Linear { .. } => {
                let (f, t) = self.forward(points)?;
                *tape = Some(t);
                Ok(f)
            }
        }
    }

    pub fn eval(&self, points: &PointCloud<T>) -> Result<FlowField<T>> {
        Ok(self.forward(points)?.0)
    }

    /// Flat gradient of `sum_i <dflow_i, f_i>`, aligned with [`Self::params`].
    pub fn backward(&self, tape: &ModelTape<T>, dflow: &[Vec3<T>]) -> Result<Vec<T>> {
        match (self, tape) {
            (FlowModel::Mlp(p), ModelTape::Mlp(t)) => Ok(p.backward(t, dflow)?.as_slice().to_vec()),
            (FlowModel::Linear { model, .. }, ModelTape::Linear(t)) => {
                Ok(model.backward(t, dflow)?.as_slice().to_vec())
            }
            _ => Err(crate::error::Error::invalid("tape does not belong to this model family")),
        }
    }

    /// [`Self::backward`] allowed to reuse scratch space held by the tape.
    pub fn backward_mut(&self, tape: &mut ModelTape<T>, dflow: &[Vec3<T>]) -> Result<Vec<T>> {
        match (self, tape) {
            (FlowModel::Mlp(p), ModelTape::Mlp(t)) => Ok(p.backward_mut(t, dflow)?.as_slice().to_vec()),
            (m, t) => m.backward(t, dflow),
        }
    }

    /// Parameter-only penalty and its flat gradient (zero for the MLP).
    pub fn regularizer(&self) -> Result<Option<(T, Vec<T>)>> {
        match self {
            FlowModel::Linear { model, tv_weight } if *tv_weight > 0.0 => {
                let (v, g) = tv_reg(&model.params)?;
                let half = T::of(0.5 * tv_weight);
                Ok(Some((v * half, g.as_slice().iter().map(|&x| x * half).collect())))
            }
            _ => Ok(None),
        }
    }

    pub fn params(&self) -> &[T] {
        match self {
            FlowModel::Mlp(p) => p.as_slice(),
            FlowModel::Linear { model, .. } => model.params.as_slice(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        match self {
            FlowModel::Mlp(p) => p.as_mut_slice(),
            FlowModel::Linear { model, .. } => model.params.as_mut_slice(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }
}
