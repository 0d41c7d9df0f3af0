//! Exact Euclidean distance-transform maps over a voxelized target cloud.
//!
//! Target points are binned into cells; every cell then stores the Euclidean
//! distance from its center to the nearest occupied cell center. The map is
//! built with the separable lower-envelope squared EDT (one 1D pass per axis
//! in integer cell units) and queried with trilinear interpolation, which
//! yields a loss value and its gradient in closed form.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pointcloud::{bounds, PointCloud};
use crate::scalar::{Real, Vec3};

/// Default cell edge in meters.
pub const DEFAULT_CELL: f64 = 0.1;
/// Default padding around the source/target bounds, meters.
pub const DEFAULT_MARGIN: f64 = 2.0;
/// Default memory budget for a dense map build (8 GiB).
pub const DEFAULT_BUDGET_BYTES: u64 = 8 << 30;

/// Scratch f64 squared distances + stored f32 distances + occupancy flags.
const BUILD_BYTES_PER_CELL: u64 = 8 + 4 + 1;

const DUMP_MAGIC: &[u8; 4] = b"FDTM";
const DUMP_VERSION: u32 = 1;

/// Uniform voxel lattice. Cell `(i, j, k)` spans
/// `origin + [i, i+1) * cell` per axis; its center is at `i + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub cell: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], cell: f64, dims: [usize; 3]) -> Result<Self> {
        if !(cell > 0.0) || !cell.is_finite() {
            return Err(Error::invalid(format!("cell must be > 0, got {cell}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid dims must be >= 1"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("non-finite grid origin"));
        }
        Ok(Self { origin, cell, dims })
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Bytes held by the finished map.
    pub fn map_bytes(&self) -> u64 {
        self.cell_count() as u64 * std::mem::size_of::<f32>() as u64
    }

    /// Peak bytes needed while building the map.
    pub fn build_bytes(&self) -> u64 {
        (self.dims[0] as u64)
            .saturating_mul(self.dims[1] as u64)
            .saturating_mul(self.dims[2] as u64)
            .saturating_mul(BUILD_BYTES_PER_CELL)
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn center(&self, c: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + (c[0] as f64 + 0.5) * self.cell,
            self.origin[1] + (c[1] as f64 + 0.5) * self.cell,
            self.origin[2] + (c[2] as f64 + 0.5) * self.cell,
        ]
    }

    pub fn max_corner(&self) -> [f64; 3] {
        [
            self.origin[0] + self.dims[0] as f64 * self.cell,
            self.origin[1] + self.dims[1] as f64 * self.cell,
            self.origin[2] + self.dims[2] as f64 * self.cell,
        ]
    }

    /// Cell containing `p`, treating the grid as a closed box (points on the
    /// upper faces belong to the last cell).
    pub fn cell_of(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.cell;
            let n = self.dims[a] as f64;
            // tolerate rounding on the faces
            if !(u >= -1e-9) || u > n + 1e-9 {
                return None;
            }
            c[a] = (u.max(0.0).floor() as usize).min(self.dims[a] - 1);
        }
        Some(c)
    }
}

/// Grid covering the union bounds of both clouds padded by `margin`;
/// `dims = ceil(extent / cell)` per axis (at least 1).
pub fn make_grid<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    cell: f64,
    margin: f64,
    budget_bytes: u64,
) -> Result<GridSpec> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud("grid construction"));
    }
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::invalid(format!("cell must be > 0, got {cell}")));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::invalid(format!("margin must be >= 0, got {margin}")));
    }
    let b = bounds(source, 0.0)?.union(&bounds(target, 0.0)?).inflate(margin);
    let ext = b.extent();
    let mut dims = [1usize; 3];
    for a in 0..3 {
        // the relative slack keeps exact multiples (70 / 0.1) from rounding up
        let n = (ext[a] / cell * (1.0 - 1e-12)).ceil();
        if n > (usize::MAX >> 8) as f64 {
            return Err(Error::MemoryBudget {
                required: u64::MAX,
                budget: budget_bytes,
            });
        }
        dims[a] = (n as usize).max(1);
    }
    let spec = GridSpec::new(b.min, cell, dims)?;
    let required = spec.build_bytes();
    if required > budget_bytes {
        return Err(Error::MemoryBudget {
            required,
            budget: budget_bytes,
        });
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            occupied: vec![false; spec.cell_count()],
        }
    }

    pub fn set(&mut self, c: [usize; 3]) {
        let i = self.spec.index(c);
        self.occupied[i] = true;
    }

    pub fn get(&self, c: [usize; 3]) -> bool {
        self.occupied[self.spec.index(c)]
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

/// Marks every cell hit by a target point.
pub fn rasterize<T: Real>(target: &PointCloud<T>, spec: &GridSpec) -> Result<OccupancyGrid> {
    let mut occ = OccupancyGrid::empty(*spec);
    for (index, p) in target.points().iter().enumerate() {
        let p = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
        let c = spec.cell_of(p).ok_or(Error::OutsideGrid {
            index,
            x: p[0],
            y: p[1],
            z: p[2],
        })?;
        occ.set(c);
    }
    Ok(occ)
}

/// Exact 1D squared distance transform (lower envelope of parabolas):
/// `out[i] = min_j f[j] + (i - j)^2`. `f64::INFINITY` marks empty sites.
pub fn edt1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    edt1d_into(f, &mut out, &mut v, &mut z);
    out
}

fn edt1d_into(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        let mut s = 0.0;
        while k >= 0 {
            let vk = v[k as usize];
            s = (fq - (f[vk] + (vk * vk) as f64)) / (2.0 * (q - vk) as f64);
            if s <= z[k as usize] {
                k -= 1;
            } else {
                break;
            }
        }
        if k < 0 {
            k = 0;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
        } else {
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
        }
        z[k as usize + 1] = f64::INFINITY;
    }
    if k < 0 {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Applies [`edt1d`] along every line parallel to `axis` in place.
fn edt_pass(buf: &mut [f64], dims: [usize; 3], axis: usize) {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let (oa, ob) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for b in 0..dims[ob] {
        for a in 0..dims[oa] {
            let mut c = [0usize; 3];
            c[oa] = a;
            c[ob] = b;
            let base = c[0] + dims[0] * (c[1] + dims[1] * c[2]);
            if stride == 1 {
                edt1d_into(&buf[base..base + n], &mut out, &mut v, &mut z);
                buf[base..base + n].copy_from_slice(&out);
            } else {
                for (i, l) in line.iter_mut().enumerate() {
                    *l = buf[base + i * stride];
                }
                edt1d_into(&line, &mut out, &mut v, &mut z);
                for (i, o) in out.iter().enumerate() {
                    buf[base + i * stride] = *o;
                }
            }
        }
    }
}

/// Squared distances in cell units with the axis passes in the given order.
pub fn squared_edt(occ: &OccupancyGrid, order: [usize; 3]) -> Vec<f64> {
    let mut buf: Vec<f64> = occ
        .occupied
        .iter()
        .map(|&o| if o { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in order {
        edt_pass(&mut buf, occ.spec.dims, axis);
    }
    buf
}

/// Dense distance map in meters, one `f32` per cell center, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DtMap {
    spec: GridSpec,
    dist: Vec<f32>,
}

/// Interpolated distance and its gradient with respect to the query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtQuery<T> {
    pub value: T,
    pub gradient: Vec3<T>,
}

impl DtMap {
    pub fn from_values(spec: GridSpec, dist: Vec<f32>) -> Result<Self> {
        if dist.len() != spec.cell_count() {
            return Err(Error::LengthMismatch {
                what: "distances vs grid cells",
                left: dist.len(),
                right: spec.cell_count(),
            });
        }
        if dist.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::NonFiniteValue("distance map entry"));
        }
        Ok(Self { spec, dist })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.dist
    }

    pub fn at(&self, c: [usize; 3]) -> f32 {
        self.dist[self.spec.index(c)]
    }

    pub fn bytes(&self) -> u64 {
        self.spec.map_bytes()
    }

    /// Trilinear interpolation over the 8 surrounding cell centers. Points
    /// outside the center lattice are clamped onto it, and the gradient is
    /// zero along every clamped axis.
    pub fn query<T: Real>(&self, p: Vec3<T>) -> DtQuery<T> {
        let s = &self.spec;
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut live = [true; 3];
        for a in 0..3 {
            let n = s.dims[a];
            let u = (p[a].as_f64() - s.origin[a]) / s.cell - 0.5;
            let hi = (n - 1) as f64;
            let uc = if u < 0.0 {
                live[a] = false;
                0.0
            } else if u > hi {
                live[a] = false;
                hi
            } else {
                u
            };
            if n == 1 {
                live[a] = false;
                continue;
            }
            let f = (uc.floor() as usize).min(n - 2);
            i0[a] = f;
            i1[a] = f + 1;
            t[a] = uc - f as f64;
        }
        let d = |x: usize, y: usize, z: usize| -> f64 {
            self.dist[x + s.dims[0] * (y + s.dims[1] * z)] as f64
        };
        let c000 = d(i0[0], i0[1], i0[2]);
        let c100 = d(i1[0], i0[1], i0[2]);
        let c010 = d(i0[0], i1[1], i0[2]);
        let c110 = d(i1[0], i1[1], i0[2]);
        let c001 = d(i0[0], i0[1], i1[2]);
        let c101 = d(i1[0], i0[1], i1[2]);
        let c011 = d(i0[0], i1[1], i1[2]);
        let c111 = d(i1[0], i1[1], i1[2]);
        let [tx, ty, tz] = t;
        // along x
        let c00 = c000 + (c100 - c000) * tx;
        let c10 = c010 + (c110 - c010) * tx;
        let c01 = c001 + (c101 - c001) * tx;
        let c11 = c011 + (c111 - c011) * tx;
        // along y
        let c0 = c00 + (c10 - c00) * ty;
        let c1 = c01 + (c11 - c01) * ty;
        let value = c0 + (c1 - c0) * tz;

        let inv = 1.0 / s.cell;
        let gx = if live[0] {
            let e0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * ty;
            let e1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * ty;
            (e0 + (e1 - e0) * tz) * inv
        } else {
            0.0
        };
        let gy = if live[1] {
            ((c10 - c00) + ((c11 - c01) - (c10 - c00)) * tz) * inv
        } else {
            0.0
        };
        let gz = if live[2] { (c1 - c0) * inv } else { 0.0 };
        DtQuery {
            value: T::of(value),
            gradient: [T::of(gx), T::of(gy), T::of(gz)],
        }
    }

    /// Debug dump: `b"FDTM"`, `u32` version, origin `3 x f64`, cell `f64`,
    /// dims `3 x u64`, then the `f32` values (x fastest); little-endian.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        for o in self.spec.origin {
            out.write_all(&o.to_le_bytes())?;
        }
        out.write_all(&self.spec.cell.to_le_bytes())?;
        for d in self.spec.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.dist.len() * 4);
        for v in &self.dist {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<dt dump>", e))?;
        let bad = |reason: &str| Error::Parse {
            path: "<dt dump>".into(),
            index: 0,
            reason: reason.into(),
        };
        const HEADER: usize = 4 + 4 + 24 + 8 + 24;
        if bytes.len() < HEADER || &bytes[..4] != DUMP_MAGIC {
            return Err(bad("missing FDTM header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != DUMP_VERSION {
            return Err(bad("unsupported version"));
        }
        let origin = [f64_at(8), f64_at(16), f64_at(24)];
        let cell = f64_at(32);
        let dims = [u64_at(40) as usize, u64_at(48) as usize, u64_at(56) as usize];
        let spec = GridSpec::new(origin, cell, dims)?;
        let payload = &bytes[HEADER..];
        if payload.len() != spec.cell_count() * 4 {
            return Err(bad("payload size does not match dims"));
        }
        let dist = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DtMap::from_values(spec, dist)
    }
}

/// Exact distance map of an occupancy grid.
pub fn build_dt(occ: &OccupancyGrid) -> Result<DtMap> {
    if !occ.occupied.iter().any(|&o| o) {
        return Err(Error::EmptyOccupancy);
    }
    let sq = squared_edt(occ, [0, 1, 2]);
    let cell = occ.spec.cell;
    let dist = sq.into_iter().map(|d| (d.sqrt() * cell) as f32).collect();
    Ok(DtMap {
        spec: occ.spec,
        dist,
    })
}

/// Grid sizing, rasterization and map build in one call.
pub fn build_for_pair<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    cell: f64,
    margin: f64,
    budget_bytes: u64,
) -> Result<DtMap> {
    let spec = make_grid(source, target, cell, margin, budget_bytes)?;
    build_dt(&rasterize(target, &spec)?)
}

/// All-pairs nearest occupied cell; quadratic, for verification only.
pub fn dt_brute_oracle(occ: &OccupancyGrid) -> DtMap {
    let s = occ.spec;
    let mut occupied = Vec::new();
    for z in 0..s.dims[2] {
        for y in 0..s.dims[1] {
            for x in 0..s.dims[0] {
                if occ.get([x, y, z]) {
                    occupied.push([x as i64, y as i64, z as i64]);
                }
            }
        }
    }
    let mut dist = Vec::with_capacity(s.cell_count());
    for z in 0..s.dims[2] as i64 {
        for y in 0..s.dims[1] as i64 {
            for x in 0..s.dims[0] as i64 {
                let best = occupied
                    .iter()
                    .map(|o| (o[0] - x).pow(2) + (o[1] - y).pow(2) + (o[2] - z).pow(2))
                    .min()
                    .map_or(f64::INFINITY, |d| d as f64);
                dist.push((best.sqrt() * s.cell) as f32);
            }
        }
    }
    DtMap { spec: s, dist }
}
