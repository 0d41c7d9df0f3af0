//! Coordinate MLP `3 -> width -> ... -> width -> 3` with ReLU hidden layers
//! and a hand-written reverse pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pointcloud::{FlowField, PointCloud};
use crate::scalar::{Real, Vec3};

/// Flat parameter vector plus layer shapes. Layer `l` stores its
/// `out x in` row-major weights followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T: Real = f32> {
    width: usize,
    depth: usize,
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    data: Vec<T>,
}

/// Layer `(fan_in, fan_out)` list: `depth` linear layers in total
/// (first, `depth - 2` hidden, last), with at least the first and last.
pub fn layer_shapes(width: usize, depth: usize) -> Vec<(usize, usize)> {
    let mut shapes = vec![(3, width)];
    for _ in 2..depth {
        shapes.push((width, width));
    }
    shapes.push((width, 3));
    shapes
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(width: usize, depth: usize) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(Error::invalid("mlp width and depth must be >= 1"));
        }
        let shapes = layer_shapes(width, depth);
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for &(i, o) in &shapes {
            offsets.push(total);
            total += o * i + o;
        }
        Ok(Self {
            width,
            depth,
            shapes,
            offsets,
            data: vec![T::zero(); total],
        })
    }

    /// Uniform fan-in initialization (`|w| <= 1/sqrt(fan_in)`), zero biases.
    pub fn init(width: usize, depth: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(width, depth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..p.shapes.len() {
            let (fan_in, fan_out) = p.shapes[l];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = p.offsets[l];
            for w in &mut p.data[off..off + fan_in * fan_out] {
                *w = T::of(rng.random_range(-bound..=bound));
            }
        }
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Same shapes, zero values.
    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![T::zero(); self.data.len()],
            ..self.clone()
        }
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (i, o) = self.shapes[l];
        let off = self.offsets[l];
        let (w, b) = self.data[off..off + o * i + o].split_at(o * i);
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let (i, o) = self.shapes[l];
        let off = self.offsets[l];
        self.data[off..off + o * i + o].split_at_mut(o * i)
    }

    /// Flow for every point; the tape keeps each layer's input for
    /// [`MlpParams::backward`].
    pub fn forward(&self, points: &PointCloud<T>) -> Result<(FlowField<T>, MlpTape<T>)> {
        let mut tape = MlpTape::default();
        let flow = self.forward_into(points, &mut tape)?;
        Ok((flow, tape))
    }

    /// [`MlpParams::forward`] recording into an existing tape, reusing its buffers.
    pub fn forward_into(&self, points: &PointCloud<T>, tape: &mut MlpTape<T>) -> Result<FlowField<T>> {
        let n = points.len();
        let layers = self.shapes.len();
        tape.shapes.clone_from(&self.shapes);
        tape.n = n;
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.acts.truncate(layers + 1);
        tape.acts[0].clear();
        tape.acts[0].extend(points.points().iter().flat_map(|p| p.iter().copied()));
        let last = layers - 1;
        let wt = &mut tape.scratch[0];
        for (l, &(fan_in, fan_out)) in self.shapes.iter().enumerate() {
            let (w, b) = self.layer(l);
            // contiguous w^T packs faster than a strided view
            wt.clear();
            wt.extend((0..fan_in * fan_out).map(|k| w[(k % fan_out) * fan_in + k / fan_out]));
            let (done, rest) = tape.acts.split_at_mut(l + 1);
            let input = &done[l];
            let out = &mut rest[0];
            out.clear();
            for _ in 0..n {
                out.extend_from_slice(b);
            }
            // out (n x fan_out) += input (n x fan_in) * w^T (fan_in x fan_out)
            T::gemm(
                n,
                fan_in,
                fan_out,
                T::one(),
                input,
                (fan_in as isize, 1),
                wt,
                (fan_out as isize, 1),
                T::one(),
                out,
                (fan_out as isize, 1),
            );
            if !all_finite(out) {
                return Err(Error::NonFiniteLayer { layer: l });
            }
            if l < last {
                for v in out.iter_mut() {
                    *v = if *v > T::zero() { *v } else { T::zero() };
                }
            }
        }
        let flow = tape.acts[layers].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        FlowField::new(flow)
    }

    /// Gradient of `sum_i <dflow_i, f_i>` with respect to every parameter.
    pub fn backward(&self, tape: &MlpTape<T>, dflow: &[Vec3<T>]) -> Result<MlpParams<T>> {
        let mut scratch = [Vec::new(), Vec::new()];
        self.backward_with(tape, &tape.acts, dflow, &mut scratch)
    }

    /// [`MlpParams::backward`] using the tape's own scratch buffers.
    pub fn backward_mut(&self, tape: &mut MlpTape<T>, dflow: &[Vec3<T>]) -> Result<MlpParams<T>> {
        let mut scratch = std::mem::take(&mut tape.scratch);
        let out = self.backward_with(tape, &tape.acts, dflow, &mut scratch);
        tape.scratch = scratch;
        out
    }

    fn backward_with(
        &self,
        tape: &MlpTape<T>,
        acts: &[Vec<T>],
        dflow: &[Vec3<T>],
        scratch: &mut [Vec<T>; 2],
    ) -> Result<MlpParams<T>> {
        if tape.shapes != self.shapes || acts.len() != self.shapes.len() + 1 {
            return Err(Error::invalid("tape was recorded with a different network"));
        }
        if dflow.len() != tape.n {
            return Err(Error::LengthMismatch {
                what: "dflow vs tape points",
                left: dflow.len(),
                right: tape.n,
            });
        }
        let n = tape.n;
        let mut grads = self.zeros_like();
        let [g, gin] = scratch;
        g.clear();
        g.extend(dflow.iter().flat_map(|d| d.iter().copied()));
        for l in (0..self.shapes.len()).rev() {
            let (fan_in, fan_out) = self.shapes[l];
            let input = &acts[l];
            {
                let (dw, db) = grads.layer_mut(l);
                // dw (fan_out x fan_in) = g^T (fan_out x n) * input (n x fan_in)
                T::gemm(
                    fan_out,
                    n,
                    fan_in,
                    T::one(),
                    g,
                    (1, fan_out as isize),
                    input,
                    (fan_in as isize, 1),
                    T::zero(),
                    dw,
                    (fan_in as isize, 1),
                );
                for row in g.chunks_exact(fan_out) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += *v;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            gin.clear();
            gin.resize(n * fan_in, T::zero());
            // gin (n x fan_in) = g (n x fan_out) * w (fan_out x fan_in)
            T::gemm(
                n,
                fan_out,
                fan_in,
                T::one(),
                g,
                (fan_out as isize, 1),
                w,
                (fan_in as isize, 1),
                T::zero(),
                gin,
                (fan_in as isize, 1),
            );
            for (d, h) in gin.iter_mut().zip(input) {
                *d = if *h > T::zero() { *d } else { T::zero() };
            }
            std::mem::swap(g, gin);
        }
        Ok(grads)
    }
}

/// Lane-parallel finiteness scan; `v * 0` is NaN exactly for NaN and infinities.
fn all_finite<T: Real>(xs: &[T]) -> bool {
    let mut acc = [T::zero(); 16];
    let mut chunks = xs.chunks_exact(16);
    for c in &mut chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a = *a + *v * T::zero();
        }
    }
    acc.iter().chain(chunks.remainder()).all(|v| v.is_finite())
}

/// Activations recorded by [`MlpParams::forward`].
#[derive(Debug, Clone, Default)]
pub struct MlpTape<T: Real> {
    shapes: Vec<(usize, usize)>,
    n: usize,
    /// `acts[l]` is the input of layer `l` (`n x fan_in`, row-major); the
    /// last entry is the network output.
    acts: Vec<Vec<T>>,
    scratch: [Vec<T>; 2],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud<f64> {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    #[test]
    fn parameter_count_for_default_shape() {
        let p = MlpParams::<f32>::init(128, 8, 0).unwrap();
        assert_eq!(
            p.num_params(),
            3 * 128 + 128 + 6 * (128 * 128 + 128) + 128 * 3 + 3
        );
        assert_eq!(p.shapes().len(), 8);
    }

    #[test]
    fn minimal_shape() {
        let p = MlpParams::<f64>::init(1, 1, 0).unwrap();
        assert_eq!(p.shapes(), &[(3, 1), (1, 3)]);
        assert!(MlpParams::<f64>::init(0, 3, 0).is_err());
        assert!(MlpParams::<f64>::init(3, 0, 0).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpParams::<f64>::init(16, 4, 9).unwrap();
        let b = MlpParams::<f64>::init(16, 4, 9).unwrap();
        let c = MlpParams::<f64>::init(16, 4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for l in 0..a.shapes().len() {
            let (fan_in, _) = a.shapes()[l];
            let (w, bias) = a.layer(l);
            let bound = 1.0 / (fan_in as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
            assert!(bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_parameters_give_zero_flow() {
        let p = MlpParams::<f64>::zeros(8, 4).unwrap();
        let (flow, _) = p.forward(&cloud(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]])).unwrap();
        assert!(flow.vectors().iter().all(|f| *f == [0.0; 3]));
    }

    #[test]
    fn hand_checked_affine_map() {
        // width 3, two layers: first = identity with bias 1 (keeps inputs
        // positive so ReLU is inactive), last = [[2,0,0],[0,3,0],[1,1,1]].
        let mut p = MlpParams::<f64>::zeros(3, 2).unwrap();
        {
            let (w, b) = p.layer_mut(0);
            w.copy_from_slice(&[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
            b.copy_from_slice(&[1., 1., 1.]);
        }
        {
            let (w, b) = p.layer_mut(1);
            w.copy_from_slice(&[2., 0., 0., 0., 3., 0., 1., 1., 1.]);
            b.copy_from_slice(&[0., 0., -1.]);
        }
        let (flow, _) = p.forward(&cloud(&[[1.0, 2.0, 3.0]])).unwrap();
        // hidden = (2,3,4); out = (4, 9, 9 - 1)
        assert_eq!(flow.vectors()[0], [4.0, 9.0, 8.0]);
    }

    #[test]
    fn single_linear_gradient_is_outer_product() {
        // last layer gradient = dflow^T * hidden input
        let p = MlpParams::<f64>::init(4, 2, 3).unwrap();
        let pts = cloud(&[[0.3, -0.2, 0.9], [1.0, 0.4, -0.5]]);
        let (_, tape) = p.forward(&pts).unwrap();
        let dflow = vec![[1.0, 0.0, -1.0], [0.5, 2.0, 0.0]];
        let g = p.backward(&tape, &dflow).unwrap();
        let (dw, db) = g.layer(1);
        let hidden = &tape.acts[1];
        for o in 0..3 {
            for i in 0..4 {
                let expect: f64 = (0..2).map(|n| dflow[n][o] * hidden[n * 4 + i]).sum();
                assert!((dw[o * 4 + i] - expect).abs() < 1e-14);
            }
            assert!((db[o] - (dflow[0][o] + dflow[1][o])).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = MlpParams::<f64>::init(8, 3, 1).unwrap();
        let pts = cloud(&[[0.1, 0.2, 0.3]; 4]);
        let (_, tape) = p.forward(&pts).unwrap();
        let g = p.backward(&tape, &[[0.0; 3]; 4]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_tape() {
        let p = MlpParams::<f64>::init(8, 3, 1).unwrap();
        let q = MlpParams::<f64>::init(8, 4, 1).unwrap();
        let (_, tape) = p.forward(&cloud(&[[0.1, 0.2, 0.3]])).unwrap();
        assert!(q.backward(&tape, &[[1.0; 3]]).is_err());
        assert!(p.backward(&tape, &[[1.0; 3]; 2]).is_err());
    }

    #[test]
    fn forward_reports_non_finite_layer() {
        let mut p = MlpParams::<f64>::init(4, 3, 1).unwrap();
        p.layer_mut(1).1[0] = f64::MAX;
        p.layer_mut(2).0.fill(f64::MAX);
        let err = p.forward(&cloud(&[[0.1, 0.2, 0.3]])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLayer { layer: 2 }), "{err}");
    }
}
