//! Deterministic synthetic scenes built from analytic primitives.
//!
//! Every scene is a list of [`Surface`]s (rectangles and open cylinders)
//! sampled uniformly at `density` points per square meter. Ground lies on
//! `z = 0`, the scene spans `[-extent/2, extent/2]` along x and a vehicle lane
//! along the x axis (`|y| < LANE_HALF_WIDTH`) is kept free of obstacles.
//!
//! | kind            | geometry                                              | unconstrained |
//! |-----------------|-------------------------------------------------------|---------------|
//! | Corridor        | walls at `y = ±2`, 3 m tall, plus the ground strip    | x             |
//! | FlatGround      | one horizontal plane                                  | x, y, yaw     |
//! | WallOnly        | a 10 m wall at `y = 4` plus ground                    | x             |
//! | Clutter         | ground with cylinders and yawed boxes                 | none          |
//! | ForestCorridor  | ground strip with two jittered rows of trunks         | none (weak x) |
//! | ObjectChange    | the Clutter scene, plus an elevated box in the session | none          |

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Obstacles stay clear of `|y| < LANE_HALF_WIDTH`.
pub const LANE_HALF_WIDTH: f64 = 1.5;
pub const CORRIDOR_HALF_WIDTH: f64 = 2.0;
pub const WALL_HEIGHT: f64 = 3.0;
pub const WALL_WIDTH: f64 = 10.0;
pub const WALL_OFFSET: f64 = 4.0;
/// Obstacles per square meter of ground in Clutter scenes.
pub const CLUTTER_OBJECT_DENSITY: f64 = 0.06;
/// Footprint, height and ground clearance of the added object.
pub const CHANGE_OBJECT_SIZE: [f64; 3] = [4.5, 1.8, 1.2];
pub const CHANGE_OBJECT_CLEARANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Corridor,
    FlatGround,
    WallOnly,
    Clutter,
    ForestCorridor,
    ObjectChange,
}

impl SceneKind {
    pub const ALL: [SceneKind; 6] = [
        SceneKind::Corridor,
        SceneKind::FlatGround,
        SceneKind::WallOnly,
        SceneKind::Clutter,
        SceneKind::ForestCorridor,
        SceneKind::ObjectChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::Corridor => "corridor",
            SceneKind::FlatGround => "flat_ground",
            SceneKind::WallOnly => "wall_only",
            SceneKind::Clutter => "clutter",
            SceneKind::ForestCorridor => "forest_corridor",
            SceneKind::ObjectChange => "object_change",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SceneKind::Corridor => 1,
            SceneKind::FlatGround => 2,
            SceneKind::WallOnly => 3,
            // ObjectChange shares the Clutter layout so its reference is a
            // plain Clutter scene.
            SceneKind::Clutter | SceneKind::ObjectChange => 4,
            SceneKind::ForestCorridor => 5,
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        SceneKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key || k.as_str().replace('_', "") == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scene kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Scene length along x (and width for open ground), meters.
    #[serde(default = "default_extent")]
    pub extent: f64,
    /// Points per square meter.
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub seed: u64,
    /// ObjectChange only: added points as a fraction of the reference count.
    #[serde(default = "default_change_fraction")]
    pub change_fraction: f64,
}

fn default_extent() -> f64 {
    40.0
}
fn default_density() -> f64 {
    100.0
}
fn default_change_fraction() -> f64 {
    0.03
}

impl SceneSpec {
    pub fn new(kind: SceneKind, seed: u64) -> Self {
        Self {
            kind,
            extent: default_extent(),
            density: default_density(),
            seed,
            change_fraction: default_change_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidArgument("extent must be positive".into()));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidArgument("density must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.change_fraction) {
            return Err(Error::InvalidArgument("change_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// An analytic surface patch with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// `origin + s u + t v` for `s, t` in `[0, 1]`; normal along `u x v`.
    Rect {
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
    },
    /// Open vertical cylinder standing on `base`.
    Cylinder {
        base: Vector3<f64>,
        radius: f64,
        height: f64,
    },
}

impl Surface {
    pub fn area(&self) -> f64 {
        match *self {
            Surface::Rect { u, v, .. } => u.cross(&v).norm(),
            Surface::Cylinder { radius, height, .. } => TAU * radius * height,
        }
    }

    /// Uniform sample with its outward normal.
    pub fn sample(&self, rng: &mut GaussianStream) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            Surface::Rect { origin, u, v } => {
                let (s, t) = (rng.uniform(), rng.uniform());
                (origin + u * s + v * t, u.cross(&v).normalize())
            }
            Surface::Cylinder { base, radius, height } => {
                let a = rng.uniform() * TAU;
                let h = rng.uniform() * height;
                let n = Vector3::new(a.cos(), a.sin(), 0.0);
                (base + n * radius + Vector3::z() * h, n)
            }
        }
    }

    /// Number of samples at `density`.
    pub fn sample_count(&self, density: f64) -> usize {
        (density * self.area()).round() as usize
    }
}

fn ground(x_half: f64, y_half: f64) -> Surface {
    Surface::Rect {
        origin: Vector3::new(-x_half, -y_half, 0.0),
        u: Vector3::new(2.0 * x_half, 0.0, 0.0),
        v: Vector3::new(0.0, 2.0 * y_half, 0.0),
    }
}

/// Wall in the plane `y = y0` spanning `x0..x0+length`, facing `-sign(y0)`.
fn wall(y0: f64, x0: f64, length: f64, height: f64) -> Surface {
    let along = Vector3::new(length, 0.0, 0.0);
    let up = Vector3::new(0.0, 0.0, height);
    let origin = Vector3::new(x0, y0, 0.0);
    if y0 > 0.0 {
        Surface::Rect { origin, u: along, v: up }
    } else {
        Surface::Rect { origin, u: up, v: along }
    }
}

/// Side and top faces of a box yawed about z, bottom at `z0`. With `bottom`,
/// the downward face is included too.
pub fn box_faces(center: [f64; 2], yaw: f64, size: [f64; 3], z0: f64, bottom: bool) -> Vec<Surface> {
    let [a, b, h] = size;
    let ex = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let ey = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    let ez = Vector3::z();
    let c = Vector3::new(center[0], center[1], z0);
    let (xa, yb, zh) = (ex * a, ey * b, ez * h);
    let mut faces = vec![
        Surface::Rect { origin: c + xa / 2.0 - yb / 2.0, u: yb, v: zh },
        Surface::Rect { origin: c - xa / 2.0 - yb / 2.0, u: zh, v: yb },
        Surface::Rect { origin: c + yb / 2.0 - xa / 2.0, u: zh, v: xa },
        Surface::Rect { origin: c - yb / 2.0 - xa / 2.0, u: xa, v: zh },
        Surface::Rect { origin: c - xa / 2.0 - yb / 2.0 + zh, u: xa, v: yb },
    ];
    if bottom {
        faces.push(Surface::Rect { origin: c - xa / 2.0 - yb / 2.0, u: yb, v: xa });
    }
    faces
}

/// Lateral position `|y| >= LANE_HALF_WIDTH + clearance` drawn uniformly.
fn off_lane_y(rng: &mut GaussianStream, half: f64, clearance: f64) -> f64 {
    let lo = LANE_HALF_WIDTH + clearance;
    let hi = (half - clearance).max(lo);
    let y = rng.uniform_range(lo, hi);
    if rng.uniform() < 0.5 {
        -y
    } else {
        y
    }
}

fn clutter_surfaces(half: f64, rng: &mut GaussianStream) -> Vec<Surface> {
    let mut surfaces = vec![ground(half, half)];
    let objects = (CLUTTER_OBJECT_DENSITY * (2.0 * half).powi(2)).round().max(4.0) as usize;
    for i in 0..objects {
        if i % 2 == 0 {
            let radius = rng.uniform_range(0.2, 0.6);
            let height = rng.uniform_range(1.0, 4.0);
            let x = rng.uniform_range(-half + radius, half - radius);
            let y = off_lane_y(rng, half, radius);
            surfaces.push(Surface::Cylinder {
                base: Vector3::new(x, y, 0.0),
                radius,
                height,
            });
        } else {
            let size = [rng.uniform_range(1.0, 3.0), rng.uniform_range(1.0, 3.0), rng.uniform_range(0.8, 2.5)];
            let yaw = rng.uniform_range(0.0, TAU);
            let reach = 0.5 * (size[0].hypot(size[1]));
            let x = rng.uniform_range(-half + reach, half - reach);
            let y = off_lane_y(rng, half, reach);
            surfaces.extend(box_faces([x, y], yaw, size, 0.0, false));
        }
    }
    surfaces
}

fn forest_surfaces(half: f64, rng: &mut GaussianStream) -> Vec<Surface> {
    let mut surfaces = vec![ground(half, CORRIDOR_HALF_WIDTH + 1.0)];
    let spacing = 1.2;
    let rows = (2.0 * half / spacing).floor() as usize;
    for side in [-1.0, 1.0] {
        for i in 0..rows {
            let x = -half + spacing * (i as f64 + 0.5) + rng.uniform_range(-0.3, 0.3);
            let y = side * (CORRIDOR_HALF_WIDTH + rng.uniform_range(-0.2, 0.3));
            surfaces.push(Surface::Cylinder {
                base: Vector3::new(x, y, 0.0),
                radius: rng.uniform_range(0.12, 0.3),
                height: rng.uniform_range(4.0, 8.0),
            });
        }
    }
    surfaces
}

/// Surfaces of the (reference) scene.
pub fn scene_surfaces(spec: &SceneSpec) -> Result<Vec<Surface>> {
    spec.validate()?;
    let half = spec.extent / 2.0;
    let mut rng = GaussianStream::keyed(spec.seed, &[spec.kind.tag(), 0]);
    Ok(match spec.kind {
        SceneKind::Corridor => vec![
            ground(half, CORRIDOR_HALF_WIDTH),
            wall(CORRIDOR_HALF_WIDTH, -half, spec.extent, WALL_HEIGHT),
            wall(-CORRIDOR_HALF_WIDTH, -half, spec.extent, WALL_HEIGHT),
        ],
        SceneKind::FlatGround => vec![ground(half, half)],
        SceneKind::WallOnly => vec![
            ground(half, half),
            wall(WALL_OFFSET, -WALL_WIDTH / 2.0, WALL_WIDTH, WALL_HEIGHT),
        ],
        SceneKind::Clutter | SceneKind::ObjectChange => clutter_surfaces(half, &mut rng),
        SceneKind::ForestCorridor => forest_surfaces(half, &mut rng),
    })
}

/// A sampled scene: points with analytic normals, and the index of the
/// surface each point came from.
#[derive(Debug, Clone)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
    pub cloud: PointCloud,
    pub surface_ids: Vec<usize>,
}

fn sample_surfaces(surfaces: &[Surface], counts: &[usize], rng: &mut GaussianStream) -> Result<(PointCloud, Vec<usize>)> {
    let total: usize = counts.iter().sum();
    let mut points = Vec::with_capacity(total);
    let mut normals = Vec::with_capacity(total);
    let mut ids = Vec::with_capacity(total);
    for (i, (s, &n)) in surfaces.iter().zip(counts).enumerate() {
        for _ in 0..n {
            let (p, nrm) = s.sample(rng);
            points.push(p);
            normals.push(nrm);
            ids.push(i);
        }
    }
    Ok((PointCloud::with_normals(points, normals)?, ids))
}

/// Samples the reference scene of `spec`.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    let surfaces = scene_surfaces(spec)?;
    let counts: Vec<usize> = surfaces.iter().map(|s| s.sample_count(spec.density)).collect();
    let mut rng = GaussianStream::keyed(spec.seed, &[spec.kind.tag(), 1]);
    let (cloud, surface_ids) = sample_surfaces(&surfaces, &counts, &mut rng)?;
    Ok(Scene {
        surfaces,
        cloud,
        surface_ids,
    })
}

/// Points of the scene described by `spec`, without normals.
pub fn generate(spec: &SceneSpec) -> Result<PointCloud> {
    Ok(build_scene(spec)?.cloud.without_normals())
}

/// Faces of the object added to an ObjectChange session.
pub fn change_object_faces(spec: &SceneSpec) -> Vec<Surface> {
    box_faces([0.15 * spec.extent, 0.0], 0.0, CHANGE_OBJECT_SIZE, CHANGE_OBJECT_CLEARANCE, true)
}

/// Reference and session clouds for an ObjectChange spec. The session is the
/// reference followed by `round(change_fraction * reference.len())` points
/// sampled on an elevated box standing in the lane.
pub fn generate_pair(spec: &SceneSpec) -> Result<(PointCloud, PointCloud)> {
    if spec.kind != SceneKind::ObjectChange {
        return Err(Error::InvalidArgument(format!(
            "scene pairs are only defined for object_change, not {}",
            spec.kind
        )));
    }
    let reference = generate(spec)?;
    let added = (spec.change_fraction * reference.len() as f64).round() as usize;
    let faces = change_object_faces(spec);
    let areas: Vec<f64> = faces.iter().map(Surface::area).collect();
    let total_area: f64 = areas.iter().sum();
    // Largest-remainder split of `added` across faces by area.
    let exact: Vec<f64> = areas.iter().map(|a| added as f64 * a / total_area).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..faces.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())));
    let missing = added - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    let mut rng = GaussianStream::keyed(spec.seed, &[SceneKind::ObjectChange.tag(), 2]);
    let (object, _) = sample_surfaces(&faces, &counts, &mut rng)?;
    let session = reference.concat(&object.without_normals());
    Ok((reference, session))
}
