//! Linear flow model over a Kronecker-structured Gaussian encoding.
//!
//! The parameter tensor `W` (`Wx x Wy x Wz x 3`) is mapped to per-vertex
//! encoded values `G = W x1 Px x2 Py x3 Pz`, where `Pa` is the Gaussian
//! encoding of axis `a`'s grid points against themselves. Each mode product
//! is a small GEMM, so the full Kronecker matrix is never formed. A point's
//! flow is the trilinear blend of `G` over its 8 surrounding vertices.

use crate::error::{Error, Result};
use crate::pointcloud::{FlowField, PointCloud};
use crate::scalar::{Real, Vec3};

use super::encoding::{blend_weights, gaussian_encode, BlendEntry, EncoderSpec};

/// Smoothing inside the TV square root.
pub const TV_EPS: f64 = 1e-12;

/// Dense `Wx x Wy x Wz x 3` tensor; vertex index x fastest, channel innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T: Real = f32> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> LinearParams<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product::<usize>() * 3],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let want = dims.iter().product::<usize>() * 3;
        if data.len() != want {
            return Err(Error::LengthMismatch {
                what: "linear params",
                left: data.len(),
                right: want,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("linear parameter"));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize, c: usize) -> T {
        self.data[(i + self.dims[0] * (j + self.dims[1] * k)) * 3 + c]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, c: usize, v: T) {
        let d = self.dims;
        self.data[(i + d[0] * (j + d[1] * k)) * 3 + c] = v;
    }
}

/// In-place `out = M x_axis tensor` (or `M^T` when `transpose`), `M` square.
fn mode_product<T: Real>(tensor: &[T], dims: [usize; 3], axis: usize, m: &[T], transpose: bool) -> Vec<T> {
    let n = dims[axis];
    let mut out = vec![T::zero(); tensor.len()];
    let m_strides = if transpose {
        (1, n as isize)
    } else {
        (n as isize, 1)
    };
    match axis {
        0 => {
            // per (y, z): n x 3 block with row stride 3
            let block = n * 3;
            for (src, dst) in tensor.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
                T::gemm(n, n, 3, T::one(), m, m_strides, src, (3, 1), T::zero(), dst, (3, 1));
            }
        }
        1 => {
            // per z: n x (Wx * 3) slab
            let row = dims[0] * 3;
            let block = row * n;
            for (src, dst) in tensor.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
                T::gemm(
                    n,
                    n,
                    row,
                    T::one(),
                    m,
                    m_strides,
                    src,
                    (row as isize, 1),
                    T::zero(),
                    dst,
                    (row as isize, 1),
                );
            }
        }
        _ => {
            let row = dims[0] * dims[1] * 3;
            T::gemm(
                n,
                n,
                row,
                T::one(),
                m,
                m_strides,
                tensor,
                (row as isize, 1),
                T::zero(),
                &mut out,
                (row as isize, 1),
            );
        }
    }
    out
}

/// Encoder grid, its per-axis encoding matrices and the parameters `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real = f32> {
    spec: EncoderSpec,
    /// `Wa x Wa` Gaussian encodings of the grid points of each axis.
    phi: [Vec<T>; 3],
    pub params: LinearParams<T>,
}

/// Blend entries recorded by [`LinearModel::forward`].
#[derive(Debug, Clone)]
pub struct LinearTape<T> {
    dims: [usize; 3],
    blends: Vec<BlendEntry<T>>,
}

impl<T> LinearTape<T> {
    pub fn blends(&self) -> &[BlendEntry<T>] {
        &self.blends
    }
}

impl<T: Real> LinearModel<T> {
    /// Model with `W = 0`.
    pub fn new(spec: EncoderSpec) -> Self {
        let phi = [0, 1, 2].map(|a| {
            let g: Vec<T> = spec.axis(a).into_iter().map(T::of).collect();
            gaussian_encode(&g, &g, T::of(spec.sigma))
        });
        let params = LinearParams::zeros(spec.counts);
        Self { spec, phi, params }
    }

    pub fn with_params(spec: EncoderSpec, params: LinearParams<T>) -> Result<Self> {
        if params.dims != spec.counts {
            return Err(Error::invalid("parameter dims do not match the encoder grid"));
        }
        let mut m = Self::new(spec);
        m.params = params;
        Ok(m)
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn encoding(&self, axis: usize) -> &[T] {
        &self.phi[axis]
    }

    /// Encoded value of every grid vertex: `W x1 Px x2 Py x3 Pz`.
    pub fn grid_values(&self) -> Vec<T> {
        let d = self.params.dims;
        let t = mode_product(&self.params.data, d, 0, &self.phi[0], false);
        let t = mode_product(&t, d, 1, &self.phi[1], false);
        mode_product(&t, d, 2, &self.phi[2], false)
    }

    pub fn forward(&self, points: &PointCloud<T>) -> Result<(FlowField<T>, LinearTape<T>)> {
        let g = self.grid_values();
        let mut flow = Vec::with_capacity(points.len());
        let mut blends = Vec::with_capacity(points.len());
        for p in points.points() {
            let b = blend_weights(*p, &self.spec);
            let mut f = [T::zero(); 3];
            for (&i, &w) in b.indices.iter().zip(&b.weights) {
                for c in 0..3 {
                    f[c] += w * g[i * 3 + c];
                }
            }
            flow.push(f);
            blends.push(b);
        }
        let flow = FlowField::new(flow).map_err(|_| Error::NonFiniteValue("linear model output"))?;
        Ok((
            flow,
            LinearTape {
                dims: self.params.dims,
                blends,
            },
        ))
    }

    /// Flow only, no tape.
    pub fn eval(&self, points: &PointCloud<T>) -> Result<FlowField<T>> {
        Ok(self.forward(points)?.0)
    }

    /// Gradient with respect to the encoded vertex values `G`; nonzero only
    /// on vertices touched by some point's blend.
    pub fn grid_gradient(&self, tape: &LinearTape<T>, dflow: &[Vec3<T>]) -> Result<Vec<T>> {
        if tape.dims != self.params.dims {
            return Err(Error::invalid("tape was recorded with a different grid"));
        }
        if dflow.len() != tape.blends.len() {
            return Err(Error::LengthMismatch {
                what: "dflow vs tape points",
                left: dflow.len(),
                right: tape.blends.len(),
            });
        }
        let mut dg = vec![T::zero(); self.params.data.len()];
        for (b, d) in tape.blends.iter().zip(dflow) {
            for (&i, &w) in b.indices.iter().zip(&b.weights) {
                for c in 0..3 {
                    dg[i * 3 + c] += w * d[c];
                }
            }
        }
        Ok(dg)
    }

    /// Gradient of `sum_i <dflow_i, f_i>` with respect to `W`.
    pub fn backward(&self, tape: &LinearTape<T>, dflow: &[Vec3<T>]) -> Result<LinearParams<T>> {
        let d = self.params.dims;
        let dg = self.grid_gradient(tape, dflow)?;
        let t = mode_product(&dg, d, 0, &self.phi[0], true);
        let t = mode_product(&t, d, 1, &self.phi[1], true);
        let data = mode_product(&t, d, 2, &self.phi[2], true);
        Ok(LinearParams { dims: d, data })
    }
}

/// Total variation of `W`: mean over `(Wx-1)(Wy-1)(Wz-1)` forward-difference
/// sites of `sqrt(|dx|^2 + |dy|^2 + |dz|^2)`, differences taken over all
/// three flow channels together. Returns the value and its gradient.
///
/// The square root is smoothed as `sqrt(s + eps) - sqrt(eps)` so a constant
/// tensor scores exactly zero.
pub fn tv_reg<T: Real>(params: &LinearParams<T>) -> Result<(T, LinearParams<T>)> {
    let [nx, ny, nz] = params.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::invalid("total variation needs >= 2 grid points per axis"));
    }
    let eps = T::of(TV_EPS);
    let root_eps = eps.sqrt();
    let norm = T::one() / T::of_usize((nx - 1) * (ny - 1) * (nz - 1));
    let idx = |i: usize, j: usize, k: usize| (i + nx * (j + ny * k)) * 3;
    let w = &params.data;
    let mut grad = vec![T::zero(); w.len()];
    let mut value = T::zero();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let o = idx(i, j, k);
                let ox = idx(i + 1, j, k);
                let oy = idx(i, j + 1, k);
                let oz = idx(i, j, k + 1);
                let mut d = [[T::zero(); 3]; 3];
                let mut s = T::zero();
                for c in 0..3 {
                    d[0][c] = w[o + c] - w[ox + c];
                    d[1][c] = w[o + c] - w[oy + c];
                    d[2][c] = w[o + c] - w[oz + c];
                    s += d[0][c] * d[0][c] + d[1][c] * d[1][c] + d[2][c] * d[2][c];
                }
                let r = (s + eps).sqrt();
                value += r - root_eps;
                let inv = norm / r;
                for c in 0..3 {
                    grad[o + c] += (d[0][c] + d[1][c] + d[2][c]) * inv;
                    grad[ox + c] -= d[0][c] * inv;
                    grad[oy + c] -= d[1][c] * inv;
                    grad[oz + c] -= d[2][c] * inv;
                }
            }
        }
    }
    Ok((
        value * norm,
        LinearParams {
            dims: params.dims,
            data: grad,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(counts: [usize; 3], seed: u64) -> LinearModel<f64> {
        let spec = EncoderSpec::new([0.0, -1.0, 0.5], counts, 1.0, 2.0).unwrap();
        let mut m = LinearModel::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.params.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    fn random_points(m: &LinearModel<f64>, n: usize, seed: u64) -> PointCloud<f64> {
        let s = m.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [0, 1, 2].map(|a| s.origin[a] + rng.random::<f64>() * (s.counts[a] - 1) as f64 * s.voxel)
                })
                .collect(),
        )
        .unwrap()
    }

    /// Row of the combined encoding for vertex `(i, j, k)`:
    /// `Px[i,:] (x) Py[j,:] (x) Pz[k,:]`, materialized element by element.
    fn kron_row(m: &LinearModel<f64>, i: usize, j: usize, k: usize) -> Vec<f64> {
        let [nx, ny, nz] = m.spec().counts;
        let mut row = vec![0.0; nx * ny * nz];
        for c in 0..nz {
            for b in 0..ny {
                for a in 0..nx {
                    row[a + nx * (b + ny * c)] =
                        m.encoding(0)[i * nx + a] * m.encoding(1)[j * ny + b] * m.encoding(2)[k * nz + c];
                }
            }
        }
        row
    }

    #[test]
    fn zero_weights_zero_flow() {
        let spec = EncoderSpec::new([0.0; 3], [3, 3, 3], 1.0, 2.0).unwrap();
        let m = LinearModel::<f64>::new(spec);
        let pts = PointCloud::new(vec![[0.3, 1.2, 1.9], [2.0, 0.0, 0.0]]).unwrap();
        assert!(m.eval(&pts).unwrap().vectors().iter().all(|f| *f == [0.0; 3]));
    }

    #[test]
    fn single_vertex_grid_is_constant() {
        let spec = EncoderSpec::new([1.0, 1.0, 1.0], [1, 1, 1], 2.0, 4.0).unwrap();
        let params = LinearParams::from_vec([1, 1, 1], vec![0.5, -1.0, 2.0]).unwrap();
        let m = LinearModel::with_params(spec, params).unwrap();
        // the lone vertex encodes itself with exp(0) = 1
        let pts = PointCloud::new(vec![[0.0, 0.0, 0.0], [7.0, -3.0, 2.0]]).unwrap();
        for f in m.eval(&pts).unwrap().vectors() {
            assert_eq!(*f, [0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn mode_products_match_naive_kronecker() {
        let m = random_model([4, 4, 4], 1);
        let pts = random_points(&m, 200, 2);
        let flow = m.eval(&pts).unwrap();
        for (p, f) in pts.points().iter().zip(flow.vectors()) {
            let b = blend_weights(*p, m.spec());
            let mut expect = [0.0; 3];
            for (&v, &w) in b.indices.iter().zip(&b.weights) {
                let (i, j, k) = (v % 4, (v / 4) % 4, v / 16);
                let row = kron_row(&m, i, j, k);
                for c in 0..3 {
                    let dot: f64 = row.iter().enumerate().map(|(r, e)| e * m.params.as_slice()[r * 3 + c]).sum();
                    expect[c] += w * dot;
                }
            }
            for c in 0..3 {
                assert!((f[c] - expect[c]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn flow_is_continuous_across_voxel_faces() {
        let m = random_model([4, 3, 3], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut p = [rng.random::<f64>() * 3.0, -1.0 + rng.random::<f64>() * 2.0, 0.5 + rng.random::<f64>() * 2.0];
            p[0] = 1.0; // voxel face on the x axis
            let mut q = p;
            p[0] -= 1e-10;
            q[0] += 1e-10;
            let f = m.eval(&PointCloud::new(vec![p, q]).unwrap()).unwrap();
            for c in 0..3 {
                assert!((f.vectors()[0][c] - f.vectors()[1][c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn grid_gradient_support_is_blend_support() {
        let m = random_model([5, 4, 4], 5);
        let pts = PointCloud::new(vec![[0.3, -0.6, 0.9], [3.5, 1.7, 2.2]]).unwrap();
        let (_, tape) = m.forward(&pts).unwrap();
        let dg = m.grid_gradient(&tape, &[[1.0, -2.0, 0.5], [0.3, 0.3, 0.3]]).unwrap();
        let mut touched = vec![false; m.spec().vertex_count()];
        for b in tape.blends() {
            for (&i, &w) in b.indices.iter().zip(&b.weights) {
                if w != 0.0 {
                    touched[i] = true;
                }
            }
        }
        for (v, t) in touched.iter().enumerate() {
            let nz = (0..3).any(|c| dg[v * 3 + c] != 0.0);
            assert_eq!(nz, *t, "vertex {v}");
        }
    }

    #[test]
    fn narrow_encoding_localizes_parameter_gradient() {
        // with sigma far below the voxel, the encodings approach the identity and
        // the W-gradient inherits the blend support
        let spec = EncoderSpec::new([0.0; 3], [4, 4, 4], 1.0, 0.05).unwrap();
        let m = LinearModel::<f64>::new(spec);
        let pts = PointCloud::new(vec![[1.2, 0.4, 2.9]]).unwrap();
        let (_, tape) = m.forward(&pts).unwrap();
        let g = m.backward(&tape, &[[1.0, 1.0, 1.0]]).unwrap();
        let touched: Vec<usize> = tape.blends()[0].indices.to_vec();
        for v in 0..64 {
            let mag = (0..3).map(|c| g.as_slice()[v * 3 + c].abs()).fold(0.0, f64::max);
            if touched.contains(&v) {
                assert!(mag > 1e-3);
            } else {
                assert!(mag < 1e-80, "vertex {v}: {mag}");
            }
        }
    }

    #[test]
    fn tv_examples() {
        let mut w = LinearParams::<f64>::zeros([3, 4, 2]);
        for v in w.as_mut_slice() {
            *v = 0.7;
        }
        let (value, grad) = tv_reg(&w).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));

        let s = -0.35;
        let mut ramp = LinearParams::<f64>::zeros([4, 3, 3]);
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..4 {
                    ramp.set(i, j, k, 1, s * i as f64 + 2.0);
                }
            }
        }
        let (value, _) = tv_reg(&ramp).unwrap();
        // smoothing shifts each site by at most sqrt(eps)
        assert!((value - s.abs()).abs() <= TV_EPS.sqrt());

        // the same slope on all three channels is sqrt(3) |s|
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..4 {
                    for c in 0..3 {
                        ramp.set(i, j, k, c, s * i as f64);
                    }
                }
            }
        }
        let (value, _) = tv_reg(&ramp).unwrap();
        assert!((value - 3f64.sqrt() * s.abs()).abs() <= TV_EPS.sqrt());

        assert!(tv_reg(&LinearParams::<f64>::zeros([1, 3, 3])).is_err());
    }
}
