//! Shifted-Gaussian encodings of virtual grid points and the sparse blending
//! that carries grid encodings to arbitrary points.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pointcloud::Aabb;
use crate::scalar::{Real, Vec3};

/// Default voxel edge of the virtual grid, meters.
pub const DEFAULT_VOXEL: f64 = 2.0;

/// Per-axis virtual grid points plus the Gaussian width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncoderSpec {
    pub origin: [f64; 3],
    pub counts: [usize; 3],
    pub voxel: f64,
    pub sigma: f64,
}

impl EncoderSpec {
    pub fn new(origin: [f64; 3], counts: [usize; 3], voxel: f64, sigma: f64) -> Result<Self> {
        if !(voxel > 0.0) || !voxel.is_finite() {
            return Err(Error::invalid("encoder voxel must be > 0"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("encoder sigma must be > 0"));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("encoder needs at least one grid point per axis"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("non-finite encoder origin"));
        }
        Ok(Self {
            origin,
            counts,
            voxel,
            sigma,
        })
    }

    /// Grid centered on `bounds` with at least two points per axis;
    /// `sigma = None` uses twice the voxel edge.
    pub fn covering(bounds: &Aabb, voxel: f64, sigma: Option<f64>) -> Result<Self> {
        let ext = bounds.extent();
        let mut origin = [0.0; 3];
        let mut counts = [0usize; 3];
        for a in 0..3 {
            let cells = (ext[a] / voxel).ceil().max(1.0);
            counts[a] = cells as usize + 1;
            let span = cells * voxel;
            origin[a] = bounds.min[a] - 0.5 * (span - ext[a]);
        }
        Self::new(origin, counts, voxel, sigma.unwrap_or(2.0 * voxel))
    }

    pub fn axis(&self, a: usize) -> Vec<f64> {
        (0..self.counts[a])
            .map(|i| self.origin[a] + i as f64 * self.voxel)
            .collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Linear vertex index, x fastest.
    #[inline]
    pub fn vertex(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }
}

/// `out[i][j] = exp(-(coords[i] - grid[j])^2 / (2 sigma^2))`, row-major.
pub fn gaussian_encode<T: Real>(coords: &[T], grid: &[T], sigma: T) -> Vec<T> {
    let two_s2 = T::of(2.0) * sigma * sigma;
    let mut out = Vec::with_capacity(coords.len() * grid.len());
    for &c in coords {
        for &g in grid {
            let d = c - g;
            out.push((-(d * d) / two_s2).exp());
        }
    }
    out
}

/// The 8 voxel corners around a point and their trilinear weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendEntry<T> {
    pub indices: [usize; 8],
    pub weights: [T; 8],
}

/// Trilinear blending over the encoder voxel containing `p`. Coordinates
/// outside the grid are clamped onto it. Corner `c` offsets the lower vertex
/// by `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
pub fn blend_weights<T: Real>(p: Vec3<T>, spec: &EncoderSpec) -> BlendEntry<T> {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let n = spec.counts[a];
        if n == 1 {
            continue;
        }
        let u = ((p[a].as_f64() - spec.origin[a]) / spec.voxel).clamp(0.0, (n - 1) as f64);
        let f = (u.floor() as usize).min(n - 2);
        lo[a] = f;
        hi[a] = f + 1;
        t[a] = u - f as f64;
    }
    let mut indices = [0usize; 8];
    let mut weights = [T::zero(); 8];
    for c in 0..8 {
        let bit = |a: usize| (c >> a) & 1 == 1;
        let idx = |a: usize| if bit(a) { hi[a] } else { lo[a] };
        let w = |a: usize| if bit(a) { t[a] } else { 1.0 - t[a] };
        indices[c] = spec.vertex(idx(0), idx(1), idx(2));
        weights[c] = T::of(w(0) * w(1) * w(2));
    }
    BlendEntry { indices, weights }
}
