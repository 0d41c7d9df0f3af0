//! Seeded synthetic street scenes: static box structures and poles along a
//! road, rigid box movers on it, no ground plane.
//!
//! The target frame is re-sampled from the moved surfaces rather than being the
//! moved source points, so the pair carries no point correspondences and the
//! two clouds generally differ in size.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};

use super::{FlowField, PointCloud, ScenePair};

const MAX_YAW_DEG: f64 = 15.0;
const MAX_TRANSLATION: f64 = 3.0;
const PLACEMENT_TRIES: usize = 500;
const POINTS_PER_STRUCTURE: usize = 2500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoverConfig {
    /// Points sampled on the mover in the source frame.
    pub points: usize,
    /// Box size (length, width, height) in meters.
    pub extents: [f64; 3],
    /// Box center at t-1; drawn on the road when `None`.
    pub center: Option<[f64; 3]>,
    /// Initial heading of the box about +z, degrees.
    pub heading_deg: f64,
    /// Rotation about the box center between frames, degrees (|yaw| <= 15).
    pub yaw_deg: f64,
    /// Translation between frames, meters (norm <= 3).
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    /// Points on the static structures in the source frame.
    pub background_points: usize,
    /// Scene spans `[-hx, hx] x [-hy, hy]` in the ground plane.
    pub half_extent: [f64; 2],
    /// Number of static structures (buildings and poles).
    pub structures: usize,
    pub movers: Vec<MoverConfig>,
    /// Apparent motion of the static world between frames.
    pub ego_translation: [f64; 3],
    /// Isotropic Gaussian sampling noise, meters.
    pub noise_sigma: f64,
    /// Relative spread of per-body target counts around the source counts.
    pub count_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            background_points: 16_000,
            half_extent: [20.0, 20.0],
            structures: 12,
            movers: Vec::new(),
            ego_translation: [0.0; 3],
            noise_sigma: 0.0,
            count_jitter: 0.05,
        }
    }
}

impl SynthConfig {
    /// A street scene with `movers` car-sized boxes whose sizes and motions are
    /// drawn from `seed`; roughly 8% of `total_points` go to each mover. The
    /// number of structures and the scene extent grow with the point count so
    /// surface sampling density stays roughly constant.
    pub fn with_random_movers(total_points: usize, movers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_7665_7273);
        let per_mover = ((total_points as f64) * 0.08).round() as usize;
        let mover_total = (per_mover * movers).min(total_points / 2);
        let per_mover = if movers == 0 { 0 } else { mover_total / movers };
        let movers = (0..movers)
            .map(|_| {
                let speed = rng.random_range(0.5..2.5);
                let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                MoverConfig {
                    points: per_mover,
                    extents: [
                        rng.random_range(3.5..5.0),
                        rng.random_range(1.7..2.1),
                        rng.random_range(1.4..1.8),
                    ],
                    center: None,
                    heading_deg: rng.random_range(-10.0..10.0),
                    yaw_deg: rng.random_range(-8.0..8.0),
                    translation: [dir * speed, rng.random_range(-0.3..0.3), 0.0],
                }
            })
            .collect::<Vec<_>>();
        let structures = (total_points / POINTS_PER_STRUCTURE).clamp(2, 12);
        // the road needs room for every mover to be placed without overlap
        let half = (20.0 * (structures as f64 / 12.0).sqrt()).max(10.0 + 2.0 * movers.len() as f64);
        Self {
            background_points: total_points - per_mover * movers.len(),
            half_extent: [half, half],
            structures,
            movers,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.half_extent) || self.half_extent.iter().any(|&h| h < 5.0) {
            return Err(Error::invalid("half_extent must be finite and >= 5 m"));
        }
        if !finite(&self.ego_translation) {
            return Err(Error::invalid("non-finite ego translation"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.count_jitter) {
            return Err(Error::invalid("count jitter must be in [0, 1)"));
        }
        if self.background_points > 0 && self.structures == 0 {
            return Err(Error::invalid("background points need at least one structure"));
        }
        if self.background_points + self.movers.iter().map(|m| m.points).sum::<usize>() == 0 {
            return Err(Error::invalid("scene has no points"));
        }
        for (i, m) in self.movers.iter().enumerate() {
            if !finite(&m.extents) || m.extents.iter().any(|&e| e <= 0.0) {
                return Err(Error::invalid(format!("mover {i}: extents must be positive")));
            }
            if !finite(&m.translation) || !m.yaw_deg.is_finite() || !m.heading_deg.is_finite() {
                return Err(Error::invalid(format!("mover {i}: non-finite motion")));
            }
            if m.yaw_deg.abs() > MAX_YAW_DEG {
                return Err(Error::invalid(format!("mover {i}: |yaw| exceeds {MAX_YAW_DEG} deg")));
            }
            let t = m.translation;
            if (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt() > MAX_TRANSLATION {
                return Err(Error::invalid(format!("mover {i}: translation exceeds {MAX_TRANSLATION} m")));
            }
            if let Some(c) = m.center {
                if !finite(&c) {
                    return Err(Error::invalid(format!("mover {i}: non-finite center")));
                }
            }
        }
        Ok(())
    }
}

/// `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidMotion {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self::translation([0.0; 3])
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: t,
        }
    }

    /// Yaw by `yaw` radians about the vertical axis through `pivot`, then
    /// translate by `t`.
    pub fn yaw_about(pivot: [f64; 3], yaw: f64, t: [f64; 3]) -> Self {
        if yaw == 0.0 {
            return Self::translation(t);
        }
        let (s, c) = yaw.sin_cos();
        let rotation = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let rp = mat_vec(&rotation, pivot);
        let translation = [
            pivot[0] - rp[0] + t[0],
            pivot[1] - rp[1] + t[1],
            pivot[2] - rp[2] + t[2],
        ];
        Self { rotation, translation }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = mat_vec(&self.rotation, p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    /// `(R p - p) + t`; exactly `t` for a pure translation.
    pub fn flow(&self, p: [f64; 3]) -> [f64; 3] {
        let r = mat_vec(&self.rotation, p);
        [
            (r[0] - p[0]) + self.translation[0],
            (r[1] - p[1]) + self.translation[1],
            (r[2] - p[2]) + self.translation[2],
        ]
    }
}

fn mat_vec(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

/// What a generated pair was made of: body motions (index 0 is the static
/// background) and the owning body of each source point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneDescriptor {
    pub config: SynthConfig,
    pub motions: Vec<RigidMotion>,
    pub source_owner: Vec<u16>,
}

/// Oriented box resting on (or floating above) the ground plane.
#[derive(Debug, Clone, Copy)]
struct BoxBody {
    center: [f64; 3],
    extents: [f64; 3],
    heading: f64,
}

impl BoxBody {
    /// Surface area without the bottom face.
    fn area(&self) -> f64 {
        let [l, w, h] = self.extents;
        l * w + 2.0 * (l * h + w * h)
    }

    fn footprint_radius(&self) -> f64 {
        0.5 * (self.extents[0].powi(2) + self.extents[1].powi(2)).sqrt()
    }

    fn sample_surface<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        let [l, w, h] = self.extents;
        let faces = [l * w, w * h, w * h, l * h, l * h];
        let total: f64 = faces.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut face = faces.len() - 1;
        for (i, a) in faces.iter().enumerate() {
            if pick < *a {
                face = i;
                break;
            }
            pick -= a;
        }
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>() - 0.5;
        let local = match face {
            0 => [u * l, v * w, 0.5 * h],
            1 => [0.5 * l, u * w, v * h],
            2 => [-0.5 * l, u * w, v * h],
            3 => [u * l, 0.5 * w, v * h],
            _ => [u * l, -0.5 * w, v * h],
        };
        let (s, c) = self.heading.sin_cos();
        [
            self.center[0] + c * local[0] - s * local[1],
            self.center[1] + s * local[0] + c * local[1],
            self.center[2] + local[2],
        ]
    }
}

struct Layout {
    structures: Vec<BoxBody>,
    movers: Vec<BoxBody>,
    motions: Vec<RigidMotion>,
}

fn build_layout<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<Layout> {
    let [hx, hy] = cfg.half_extent;
    let mut structures = Vec::with_capacity(cfg.structures);
    for s in 0..cfg.structures {
        let side = if s % 2 == 0 { 1.0 } else { -1.0 };
        let x = rng.random_range(-hx + 3.0..hx - 3.0);
        let body = if s % 3 == 2 {
            let h = rng.random_range(3.0..4.5);
            BoxBody {
                center: [x, side * rng.random_range(0.36 * hy..0.44 * hy), 0.5 * h],
                extents: [0.3, 0.3, h],
                heading: 0.0,
            }
        } else {
            let ext = [
                rng.random_range(3.0..10.0),
                rng.random_range(2.0..4.0),
                rng.random_range(2.5..5.0),
            ];
            BoxBody {
                center: [x, side * rng.random_range(0.6 * hy..0.85 * hy), 0.5 * ext[2]],
                extents: ext,
                heading: rng.random_range(-0.2..0.2),
            }
        };
        structures.push(body);
    }

    let mut movers: Vec<BoxBody> = Vec::with_capacity(cfg.movers.len());
    let mut motions = vec![RigidMotion::translation(cfg.ego_translation)];
    for (i, m) in cfg.movers.iter().enumerate() {
        let heading = m.heading_deg.to_radians();
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let center = m.center.unwrap_or_else(|| {
                [
                    rng.random_range(-0.6 * hx..0.6 * hx),
                    rng.random_range(-0.2 * hy..0.2 * hy),
                    0.2 + 0.5 * m.extents[2],
                ]
            });
            let body = BoxBody {
                center,
                extents: m.extents,
                heading,
            };
            let moved = [
                center[0] + m.translation[0],
                center[1] + m.translation[1],
            ];
            let clear = movers.iter().zip(&cfg.movers).all(|(other, om)| {
                let gap = body.footprint_radius() + other.footprint_radius() + 1.0;
                let d0 = ((center[0] - other.center[0]).powi(2)
                    + (center[1] - other.center[1]).powi(2))
                .sqrt();
                let d1 = ((moved[0] - other.center[0] - om.translation[0]).powi(2)
                    + (moved[1] - other.center[1] - om.translation[1]).powi(2))
                .sqrt();
                d0 > gap && d1 > gap
            });
            if clear || m.center.is_some() {
                placed = Some(body);
                break;
            }
        }
        let body = placed.ok_or_else(|| Error::invalid(format!("could not place mover {i} without overlap")))?;
        let t = [
            m.translation[0] + cfg.ego_translation[0],
            m.translation[1] + cfg.ego_translation[1],
            m.translation[2] + cfg.ego_translation[2],
        ];
        motions.push(RigidMotion::yaw_about(body.center, m.yaw_deg.to_radians(), t));
        movers.push(body);
    }
    Ok(Layout {
        structures,
        movers,
        motions,
    })
}

/// Source-frame points of one body group. Background points are split across
/// the structures in proportion to their surface area.
fn sample_group<R: Rng>(bodies: &[BoxBody], n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    if n == 0 || bodies.is_empty() {
        return Vec::new();
    }
    let total: f64 = bodies.iter().map(BoxBody::area).sum();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random::<f64>() * total;
        let mut body = &bodies[bodies.len() - 1];
        for b in bodies {
            if pick < b.area() {
                body = b;
                break;
            }
            pick -= b.area();
        }
        out.push(body.sample_surface(rng));
    }
    out
}

fn jittered<R: Rng>(n: usize, jitter: f64, rng: &mut R) -> usize {
    if n == 0 || jitter == 0.0 {
        return n;
    }
    let f = 1.0 + rng.random_range(-jitter..=jitter);
    ((n as f64) * f).round().max(1.0) as usize
}

fn add_noise<R: Rng>(p: [f64; 3], noise: Option<&Normal<f64>>, rng: &mut R) -> [f64; 3] {
    match noise {
        Some(d) => [p[0] + d.sample(rng), p[1] + d.sample(rng), p[2] + d.sample(rng)],
        None => p,
    }
}

struct Body<'a> {
    shapes: &'a [BoxBody],
    points: usize,
}

fn bodies<'a>(cfg: &SynthConfig, layout: &'a Layout) -> Vec<Body<'a>> {
    let mut out = vec![Body {
        shapes: &layout.structures,
        points: cfg.background_points,
    }];
    for (i, m) in cfg.movers.iter().enumerate() {
        out.push(Body {
            shapes: std::slice::from_ref(&layout.movers[i]),
            points: m.points,
        });
    }
    out
}

/// Generates a source/target pair with exact rigid ground-truth flow.
///
/// Deterministic for a fixed `(config, seed)`.
pub fn synth_scene(config: &SynthConfig, seed: u64) -> Result<ScenePair<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_layout(config, &mut rng)?;
    let noise = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut source = Vec::new();
    let mut gt = Vec::new();
    let mut owner = Vec::new();
    let mut target = Vec::new();
    for (b, body) in bodies(config, &layout).iter().enumerate() {
        let motion = layout.motions[b];
        for q in sample_group(body.shapes, body.points, &mut rng) {
            let p = add_noise(q, noise.as_ref(), &mut rng);
            source.push(p);
            gt.push(motion.flow(p));
            owner.push(b as u16);
        }
        let n_target = jittered(body.points, config.count_jitter, &mut rng);
        for q in sample_group(body.shapes, n_target, &mut rng) {
            target.push(add_noise(motion.apply(q), noise.as_ref(), &mut rng));
        }
    }

    Ok(ScenePair {
        source: PointCloud::new(source)?,
        target: PointCloud::new(target)?,
        gt_flow: Some(FlowField::new(gt)?),
        seed,
        descriptor: Some(SceneDescriptor {
            config: config.clone(),
            motions: layout.motions,
            source_owner: owner,
        }),
    })
}

/// Frames of a constant-velocity sequence: every body repeats its rigid
/// motion between consecutive frames.
#[derive(Debug, Clone)]
pub struct SceneSequence {
    pub frames: Vec<PointCloud<f64>>,
    pub owners: Vec<Vec<u16>>,
    pub motions: Vec<RigidMotion>,
}

impl SceneSequence {
    /// Where the points of `frame` truly are at frame `to` (`to >= frame`).
    pub fn ground_truth_positions(&self, frame: usize, to: usize) -> Vec<[f64; 3]> {
        assert!(frame <= to && to < self.frames.len());
        self.frames[frame]
            .points()
            .iter()
            .zip(&self.owners[frame])
            .map(|(&p, &o)| {
                let m = &self.motions[o as usize];
                (frame..to).fold(p, |q, _| m.apply(q))
            })
            .collect()
    }
}

pub fn synth_sequence(config: &SynthConfig, frames: usize, seed: u64) -> Result<SceneSequence> {
    config.validate()?;
    if frames == 0 {
        return Err(Error::invalid("sequence needs at least one frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_layout(config, &mut rng)?;
    let noise = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let groups = bodies(config, &layout);
    let mut out_frames = Vec::with_capacity(frames);
    let mut owners = Vec::with_capacity(frames);
    for k in 0..frames {
        let mut pts = Vec::new();
        let mut own = Vec::new();
        for (b, body) in groups.iter().enumerate() {
            let motion = layout.motions[b];
            let n = if k == 0 {
                body.points
            } else {
                jittered(body.points, config.count_jitter, &mut rng)
            };
            for q in sample_group(body.shapes, n, &mut rng) {
                let moved = (0..k).fold(q, |p, _| motion.apply(p));
                pts.push(add_noise(moved, noise.as_ref(), &mut rng));
                own.push(b as u16);
            }
        }
        out_frames.push(PointCloud::new(pts)?);
        owners.push(own);
    }
    Ok(SceneSequence {
        frames: out_frames,
        owners,
        motions: layout.motions,
    })
}
