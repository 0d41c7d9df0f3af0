//! Loss evaluators returning a scalar and its gradient with respect to every
//! deformed point: truncated Chamfer (linear scan or k-d tree) and the
//! distance-transform lookup loss.

use std::time::Instant;

use serde::Serialize;

use crate::dt::DtMap;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::pointcloud::PointCloud;
use crate::scalar::{Real, Vec3};

/// Chamfer truncation radius, meters.
pub const DEFAULT_TRUNC: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Deformed source to target only.
    #[default]
    Forward,
    /// Adds the target-to-deformed term.
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    pub value: T,
    /// `d value / d deformed[i]`.
    pub dpoint: Vec<Vec3<T>>,
    pub eval_time_ns: u64,
}

fn check_pair<T: Real>(deformed: &PointCloud<T>, target: &PointCloud<T>, trunc: f64) -> Result<()> {
    if deformed.is_empty() {
        return Err(Error::EmptyCloud("chamfer deformed cloud"));
    }
    if target.is_empty() {
        return Err(Error::EmptyCloud("chamfer target cloud"));
    }
    if !(trunc > 0.0) {
        return Err(Error::invalid("chamfer truncation must be > 0"));
    }
    Ok(())
}

/// Struct-of-arrays copy of a cloud for the linear scan.
struct Soa<T> {
    x: Vec<T>,
    y: Vec<T>,
    z: Vec<T>,
}

impl<T: Real> Soa<T> {
    fn new(points: &[Vec3<T>]) -> Self {
        Self {
            x: points.iter().map(|p| p[0]).collect(),
            y: points.iter().map(|p| p[1]).collect(),
            z: points.iter().map(|p| p[2]).collect(),
        }
    }

    /// Nearest point with ties to the smallest index. Distances are computed
    /// a block at a time so the inner loops vectorize; only a block whose
    /// minimum beats the incumbent is rescanned for its argmin.
    fn nearest(&self, q: Vec3<T>, buf: &mut [T]) -> (usize, T) {
        let n = self.x.len();
        let mut best = (usize::MAX, T::infinity());
        let mut start = 0;
        while start < n {
            let end = (start + buf.len()).min(n);
            let d = &mut buf[..end - start];
            let (xs, ys, zs) = (&self.x[start..end], &self.y[start..end], &self.z[start..end]);
            for i in 0..d.len() {
                let dx = q[0] - xs[i];
                let dy = q[1] - ys[i];
                let dz = q[2] - zs[i];
                d[i] = dx * dx + dy * dy + dz * dz;
            }
            let m = d.iter().fold(T::infinity(), |a, &b| if b < a { b } else { a });
            if m < best.1 {
                let i = d.iter().position(|&v| v == m).unwrap();
                best = (start + i, m);
            }
            start = end;
        }
        best
    }
}

const SCAN_BLOCK: usize = 512;

/// Accumulates one Chamfer direction given a nearest-neighbor oracle. Kept
/// shared so both engines sum in exactly the same order.
fn directed<T: Real>(
    queries: &[Vec3<T>],
    refs: &[Vec3<T>],
    trunc_sq: T,
    mut nearest: impl FnMut(Vec3<T>) -> (usize, T),
    // gradient sink: (query index, reference index, gradient w.r.t. query)
    mut grad: impl FnMut(usize, usize, Vec3<T>),
) -> T {
    let two = T::of(2.0);
    let mut total = T::zero();
    for (qi, &q) in queries.iter().enumerate() {
        let (ri, d) = nearest(q);
        if d > trunc_sq {
            total += trunc_sq;
            continue;
        }
        total += d;
        let r = refs[ri];
        grad(qi, ri, [two * (q[0] - r[0]), two * (q[1] - r[1]), two * (q[2] - r[2])]);
    }
    total
}

fn add_to<T: Real>(acc: &mut Vec3<T>, g: Vec3<T>) {
    acc[0] += g[0];
    acc[1] += g[1];
    acc[2] += g[2];
}

/// Truncated Chamfer distance by linear scan.
///
/// Each term is a squared nearest-neighbor distance; terms whose distance
/// exceeds `trunc` count as `trunc^2` with zero gradient.
pub fn chamfer<T: Real>(
    deformed: &PointCloud<T>,
    target: &PointCloud<T>,
    trunc: f64,
    direction: Direction,
) -> Result<LossReport<T>> {
    check_pair(deformed, target, trunc)?;
    let t0 = Instant::now();
    let trunc_sq = T::of(trunc * trunc);
    let (dp, tp) = (deformed.points(), target.points());
    let mut dpoint = vec![[T::zero(); 3]; dp.len()];
    let mut buf = vec![T::zero(); SCAN_BLOCK];
    let tsoa = Soa::new(tp);
    let mut value = directed(dp, tp, trunc_sq, |q| tsoa.nearest(q, &mut buf), |qi, _, g| {
        add_to(&mut dpoint[qi], g)
    });
    if direction == Direction::Bidirectional {
        let dsoa = Soa::new(dp);
        value += directed(tp, dp, trunc_sq, |q| dsoa.nearest(q, &mut buf), |_, ri, g| {
            add_to(&mut dpoint[ri], [-g[0], -g[1], -g[2]])
        });
    }
    Ok(LossReport {
        value,
        dpoint,
        eval_time_ns: t0.elapsed().as_nanos() as u64,
    })
}

/// Chamfer engine holding a k-d tree over the fixed target, built once.
#[derive(Debug, Clone)]
pub struct ChamferKd<T: Real> {
    target: PointCloud<T>,
    tree: KdTree<T>,
    trunc: f64,
    direction: Direction,
}

impl<T: Real> ChamferKd<T> {
    pub fn new(target: &PointCloud<T>, trunc: f64, direction: Direction) -> Result<Self> {
        if !(trunc > 0.0) {
            return Err(Error::invalid("chamfer truncation must be > 0"));
        }
        Ok(Self {
            target: target.clone(),
            tree: KdTree::build(target)?,
            trunc,
            direction,
        })
    }

    pub fn eval(&self, deformed: &PointCloud<T>) -> Result<LossReport<T>> {
        check_pair(deformed, &self.target, self.trunc)?;
        let t0 = Instant::now();
        let trunc_sq = T::of(self.trunc * self.trunc);
        let (dp, tp) = (deformed.points(), self.target.points());
        let mut dpoint = vec![[T::zero(); 3]; dp.len()];
        let mut value = directed(dp, tp, trunc_sq, |q| self.tree.nearest(q), |qi, _, g| {
            add_to(&mut dpoint[qi], g)
        });
        if self.direction == Direction::Bidirectional {
            let dtree = KdTree::build(deformed)?;
            value += directed(tp, dp, trunc_sq, |q| dtree.nearest(q), |_, ri, g| {
                add_to(&mut dpoint[ri], [-g[0], -g[1], -g[2]])
            });
        }
        Ok(LossReport {
            value,
            dpoint,
            eval_time_ns: t0.elapsed().as_nanos() as u64,
        })
    }
}

/// One-shot k-d tree Chamfer; same value and gradients as [`chamfer`].
pub fn chamfer_kd<T: Real>(
    deformed: &PointCloud<T>,
    target: &PointCloud<T>,
    trunc: f64,
    direction: Direction,
) -> Result<LossReport<T>> {
    check_pair(deformed, target, trunc)?;
    ChamferKd::new(target, trunc, direction)?.eval(deformed)
}

/// Sum of interpolated distance-map values at the deformed points, or of
/// their squares when `squared` is set.
pub fn dt_loss<T: Real>(map: &DtMap, deformed: &PointCloud<T>, squared: bool) -> LossReport<T> {
    let t0 = Instant::now();
    let mut value = T::zero();
    let two = T::of(2.0);
    let dpoint = deformed
        .points()
        .iter()
        .map(|&p| {
            let q = map.query(p);
            if squared {
                value += q.value * q.value;
                let s = two * q.value;
                [s * q.gradient[0], s * q.gradient[1], s * q.gradient[2]]
            } else {
                value += q.value;
                q.gradient
            }
        })
        .collect();
    LossReport {
        value,
        dpoint,
        eval_time_ns: t0.elapsed().as_nanos() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::{build_dt, rasterize, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(p: &[[f64; 3]]) -> PointCloud<f64> {
        PointCloud::new(p.to_vec()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud<f64> {
        let pts = (0..n)
            .map(|_| {
                [
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                ]
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn identical_clouds_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cloud(&mut rng, 100, 3.0);
        for dir in [Direction::Forward, Direction::Bidirectional] {
            let r = chamfer(&c, &c, 2.0, dir).unwrap();
            assert_eq!(r.value, 0.0);
            assert!(r.dpoint.iter().all(|g| *g == [0.0; 3]));
        }
    }

    #[test]
    fn three_four_five_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[3.0, 4.0, 0.0]]);
        let r = chamfer(&a, &b, f64::INFINITY, Direction::Bidirectional).unwrap();
        assert_eq!(r.value, 50.0);
        // both terms pull the single deformed point toward (3, 4, 0)
        assert_eq!(r.dpoint[0], [-12.0, -16.0, 0.0]);
        let r = chamfer(&a, &b, 2.0, Direction::Bidirectional).unwrap();
        assert_eq!(r.value, 8.0);
        assert_eq!(r.dpoint[0], [0.0; 3]);
        let f = chamfer(&a, &b, f64::INFINITY, Direction::Forward).unwrap();
        assert_eq!(f.value, 25.0);
        for engine in [chamfer_kd::<f64>, chamfer::<f64>] {
            assert_eq!(engine(&a, &b, 2.0, Direction::Bidirectional).unwrap().value, 8.0);
        }
    }

    #[test]
    fn rejects_empty_and_bad_trunc() {
        let a = cloud(&[[0.0; 3]]);
        let e = PointCloud::<f64>::empty();
        assert!(chamfer(&a, &e, 2.0, Direction::Forward).is_err());
        assert!(chamfer(&e, &a, 2.0, Direction::Forward).is_err());
        assert!(chamfer_kd(&e, &a, 2.0, Direction::Forward).is_err());
        assert!(chamfer(&a, &a, 0.0, Direction::Forward).is_err());
    }

    #[test]
    fn kd_matches_brute_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..500 {
            let n = rng.random_range(1..60);
            let m = rng.random_range(1..60);
            // a coarse lattice forces exact distance ties
            let snap = |c: PointCloud<f64>| {
                PointCloud::new(c.points().iter().map(|p| p.map(|v| v.round())).collect()).unwrap()
            };
            let mut a = random_cloud(&mut rng, n, 4.0);
            let mut b = random_cloud(&mut rng, m, 4.0);
            if case % 2 == 0 {
                a = snap(a);
                b = snap(b);
            }
            let dir = if case % 3 == 0 {
                Direction::Bidirectional
            } else {
                Direction::Forward
            };
            let x = chamfer(&a, &b, 2.0, dir).unwrap();
            let y = chamfer_kd(&a, &b, 2.0, dir).unwrap();
            assert_eq!(x.value, y.value, "case {case}");
            assert_eq!(x.dpoint, y.dpoint, "case {case}");
        }
    }

    fn fd_check(f: impl Fn(&PointCloud<f64>) -> LossReport<f64>, x: &PointCloud<f64>, tol: f64) {
        let r = f(x);
        let h = 1e-6;
        for i in 0..x.len() {
            for a in 0..3 {
                let mut p = x.points().to_vec();
                p[i][a] += h;
                let up = f(&PointCloud::new(p.clone()).unwrap()).value;
                p[i][a] -= 2.0 * h;
                let dn = f(&PointCloud::new(p).unwrap()).value;
                let fd = (up - dn) / (2.0 * h);
                let g = r.dpoint[i][a];
                let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
                assert!(err <= tol, "point {i} axis {a}: fd {fd} vs {g}");
            }
        }
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_cloud(&mut rng, 12, 1.5);
        let b = random_cloud(&mut rng, 15, 1.5);
        for dir in [Direction::Forward, Direction::Bidirectional] {
            fd_check(|x| chamfer(x, &b, 2.0, dir).unwrap(), &a, 1e-4);
        }
    }

    #[test]
    fn dt_loss_examples() {
        let spec = GridSpec::new([0.0; 3], 1.0, [8, 8, 3]).unwrap();
        let occ_pts = cloud(&[[0.5, 0.5, 0.5], [3.5, 4.5, 0.5]]);
        let map = build_dt(&rasterize(&occ_pts, &spec).unwrap()).unwrap();
        let r = dt_loss(&map, &occ_pts, false);
        assert_eq!(r.value, 0.0);

        let single = build_dt(&rasterize(&cloud(&[[0.5, 0.5, 0.5]]), &spec).unwrap()).unwrap();
        let r = dt_loss(&single, &cloud(&[[3.5, 4.5, 0.5]]), false);
        assert!((r.value - 5.0).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = PointCloud::new(
            (0..50)
                .map(|_| [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(0.0..3.0)])
                .collect(),
        )
        .unwrap();
        let total = dt_loss(&single, &q, false);
        assert!(total.value >= 0.0);
        let sum: f64 = q.points().iter().map(|&p| single.query(p).value).sum();
        assert!((total.value - sum).abs() <= 1e-12 * sum.max(1.0));
        let sq = dt_loss(&single, &q, true);
        let sum_sq: f64 = q.points().iter().map(|&p| single.query(p).value.powi(2)).sum();
        assert!((sq.value - sum_sq).abs() <= 1e-12 * sum_sq.max(1.0));
    }

    #[test]
    fn dt_loss_gradient_matches_finite_differences() {
        let spec = GridSpec::new([0.0; 3], 0.5, [16, 16, 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tgt = PointCloud::new(
            (0..20)
                .map(|_| [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)])
                .collect(),
        )
        .unwrap();
        let map = build_dt(&rasterize(&tgt, &spec).unwrap()).unwrap();
        // interior points away from cell-center planes, where the
        // interpolant is smooth
        let pts: Vec<_> = (0..10)
            .map(|_| {
                [0, 1, 2].map(|_| {
                    let c = rng.random_range(1..14) as f64 * 0.5 + 0.25;
                    c + rng.random_range(0.05..0.2)
                })
            })
            .collect();
        let x = PointCloud::new(pts).unwrap();
        for squared in [false, true] {
            fd_check(|p| dt_loss(&map, p, squared), &x, 1e-4);
        }
    }
}
