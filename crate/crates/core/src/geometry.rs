//! Planar poses, path interpolation and the camera → ground plane → satellite
//! pixel projection chain.
//!
//! Conventions:
//! - world frame: x east, y north (meters); heading counter-clockwise from +x,
//!   wrapped to (−π, π].
//! - camera frame: z forward, x right, y down; zero pitch and roll.
//! - vehicle frame: x forward, y left.
//! - satellite image is north-up: pixel u grows east, pixel v grows south.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KeyValues;

/// Database image identifier.
pub type ImageId = u32;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - 2.0 * PI * ((theta - PI) / (2.0 * PI)).ceil();
    // ceil can land one period low when theta - PI is a tiny negative multiple
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// A planar georeferenced pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }

    /// Maps a point in this pose's vehicle frame (x forward, y left) to the world.
    pub fn vehicle_to_world(&self, forward: f64, left: f64) -> WorldPoint {
        let (s, c) = self.theta.sin_cos();
        WorldPoint::new(self.x + forward * c - left * s, self.y + forward * s + left * c)
    }
}

/// A point on the ground plane in world meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64) -> Self {
        WorldPoint { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Pinhole intrinsics plus mounting height above the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera height above the ground plane (meters).
    pub height: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.height > 0.0
            && self.cx >= 0.0
            && self.cx < self.image_w as f64
            && self.cy >= 0.0
            && self.cy < self.image_h as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Depth along the optical axis at which the ray through image row `v`
    /// meets the ground plane, or `None` at and above the horizon.
    pub fn ground_depth(&self, v: f64) -> Option<f64> {
        let dv = v - self.cy;
        (dv > 0.0).then(|| self.fy * self.height / dv)
    }

    pub fn from_key_values(kv: &KeyValues) -> std::result::Result<Self, String> {
        let cam = CameraIntrinsics {
            fx: kv.require("fx")?,
            fy: kv.require("fy")?,
            cx: kv.require("cx")?,
            cy: kv.require("cy")?,
            height: kv.require("height")?,
            image_w: kv.require("image_w")?,
            image_h: kv.require("image_h")?,
        };
        cam.validate().map_err(|e| e.to_string())?;
        Ok(cam)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("fx", self.fx);
        kv.insert("fy", self.fy);
        kv.insert("cx", self.cx);
        kv.insert("cy", self.cy);
        kv.insert("height", self.height);
        kv.insert("image_w", self.image_w);
        kv.insert("image_h", self.image_h);
        kv
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        Self::from_key_values(&kv).map_err(|m| Error::parse(path, m))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_values().to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Mapping between satellite pixels and world meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatGeoref {
    /// World x of the corner of pixel (0, 0).
    pub origin_x: f64,
    /// World y of the corner of pixel (0, 0).
    pub origin_y: f64,
    pub meters_per_pixel: f64,
    pub image_w: u32,
    pub image_h: u32,
}

/// Continuous satellite pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatPixel {
    pub u: f64,
    pub v: f64,
}

impl SatPixel {
    /// Nearest-pixel index `(column, row)` of the pixel containing this point.
    pub fn index(&self) -> (usize, usize) {
        (self.u.floor() as usize, self.v.floor() as usize)
    }
}

impl SatGeoref {
    pub fn validate(&self) -> Result<()> {
        let ok = self.meters_per_pixel > 0.0
            && self.meters_per_pixel.is_finite()
            && self.origin_x.is_finite()
            && self.origin_y.is_finite()
            && self.image_w > 0
            && self.image_h > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid georeference {self:?}")))
        }
    }

    /// World coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> WorldPoint {
        WorldPoint::new(
            self.origin_x + (col as f64 + 0.5) * self.meters_per_pixel,
            self.origin_y - (row as f64 + 0.5) * self.meters_per_pixel,
        )
    }

    pub fn from_key_values(kv: &KeyValues) -> std::result::Result<Self, String> {
        let geo = SatGeoref {
            origin_x: kv.require("origin_x")?,
            origin_y: kv.require("origin_y")?,
            meters_per_pixel: kv.require("meters_per_pixel")?,
            image_w: kv.require("image_w")?,
            image_h: kv.require("image_h")?,
        };
        geo.validate().map_err(|e| e.to_string())?;
        Ok(geo)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("origin_x", self.origin_x);
        kv.insert("origin_y", self.origin_y);
        kv.insert("meters_per_pixel", self.meters_per_pixel);
        kv.insert("image_w", self.image_w);
        kv.insert("image_h", self.image_h);
        kv
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        Self::from_key_values(&kv).map_err(|m| Error::parse(path, m))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_values().to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Where a path sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    DatabaseImage(ImageId),
    Interpolated,
}

/// A pose along the (interpolated) vehicle path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub pose: Pose2D,
    pub source: SampleSource,
}

/// Planar distance between two poses; heading is ignored.
pub fn delta_location(a: &Pose2D, b: &Pose2D) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Interpolates between `a` and `b`; heading follows the shorter arc.
pub fn interpolate_pose(a: &Pose2D, b: &Pose2D, t: f64) -> Pose2D {
    let dtheta = wrap_angle(b.theta - a.theta);
    Pose2D::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.theta + t * dtheta)
}

/// Densifies a database path. Every database pose is kept (tagged with its id)
/// and each segment is split into equal pieces no longer than `spacing`.
pub fn interpolate_path(db_poses: &[(ImageId, Pose2D)], spacing: f64) -> Result<Vec<PathSample>> {
    if db_poses.len() < 2 {
        return Err(Error::PathTooShort(db_poses.len()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
    }
    let mut out = Vec::new();
    for (i, window) in db_poses.windows(2).enumerate() {
        let (id_a, a) = window[0];
        let (_, b) = window[1];
        if i == 0 {
            out.push(PathSample {
                pose: a,
                source: SampleSource::DatabaseImage(id_a),
            });
        }
        let len = delta_location(&a, &b);
        let pieces = ((len / spacing) - 1e-9).ceil().max(1.0) as usize;
        for j in 1..pieces {
            out.push(PathSample {
                pose: interpolate_pose(&a, &b, j as f64 / pieces as f64),
                source: SampleSource::Interpolated,
            });
        }
        out.push(PathSample {
            pose: b,
            source: SampleSource::DatabaseImage(window[1].0),
        });
    }
    Ok(out)
}

/// Back-projects an image pixel with known depth (distance along the optical
/// axis) to the ground plane in world coordinates. Returns `None` when the
/// depth is not a positive finite number.
pub fn pixel_depth_to_world(u: f64, v: f64, depth: f64, cam: &CameraIntrinsics, pose: &Pose2D) -> Option<WorldPoint> {
    let _ = v; // the vertical camera coordinate is dropped on the ground plane
    if !(depth > 0.0 && depth.is_finite()) {
        return None;
    }
    let x_cam = (u - cam.cx) / cam.fx * depth;
    Some(pose.vehicle_to_world(depth, -x_cam))
}

/// Maps a world point into continuous satellite pixel coordinates, or `None`
/// when it falls outside the image.
pub fn world_to_sat_pixel(p: &WorldPoint, geo: &SatGeoref) -> Option<SatPixel> {
    let u = (p.x - geo.origin_x) / geo.meters_per_pixel;
    let v = (geo.origin_y - p.y) / geo.meters_per_pixel;
    let inside = u >= 0.0 && u < geo.image_w as f64 && v >= 0.0 && v < geo.image_h as f64;
    inside.then_some(SatPixel { u, v })
}

/// Outcome of pushing one ground-image sample through the projection chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected {
    Kept {
        /// Nearest satellite pixel `(column, row)`.
        pixel: (usize, usize),
        location: WorldPoint,
    },
    InvalidDepth,
    OutOfRange,
    OutOfBounds,
}

/// Back-projects a sample through `pose` and looks up its satellite pixel,
/// rejecting invalid depth, points farther than `max_range` meters from the
/// camera and points outside the satellite image.
pub fn project_to_satellite(
    u: f64,
    v: f64,
    depth: f64,
    cam: &CameraIntrinsics,
    pose: &Pose2D,
    geo: &SatGeoref,
    max_range: f64,
) -> Projected {
    let Some(location) = pixel_depth_to_world(u, v, depth, cam, pose) else {
        return Projected::InvalidDepth;
    };
    if location.distance(&pose.position()) > max_range {
        return Projected::OutOfRange;
    }
    match world_to_sat_pixel(&location, geo) {
        Some(px) => Projected::Kept {
            pixel: px.index(),
            location,
        },
        None => Projected::OutOfBounds,
    }
}

/// Reads a pose CSV (`id,x,y,theta`). A header line starting with `id` is skipped.
pub fn read_pose_csv(path: &Path) -> Result<Vec<(ImageId, Pose2D)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_csv(&text).map_err(|m| Error::parse(path, m))
}

pub fn parse_pose_csv(text: &str) -> std::result::Result<Vec<(ImageId, Pose2D)>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(format!("line {}: expected 4 fields", lineno + 1));
        }
        let bad = |f: &str| format!("line {}: bad field `{f}`", lineno + 1);
        let id: ImageId = fields[0].parse().map_err(|_| bad(fields[0]))?;
        let mut nums = [0.0f64; 3];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad(f))?;
            if !slot.is_finite() {
                return Err(bad(f));
            }
        }
        out.push((id, Pose2D::new(nums[0], nums[1], nums[2])));
    }
    Ok(out)
}

pub fn format_pose_csv(poses: &[(ImageId, Pose2D)]) -> String {
    let mut out = String::from("id,x,y,theta\n");
    for (id, p) in poses {
        let _ = writeln!(out, "{id},{},{},{}", p.x, p.y, p.theta);
    }
    out
}

pub fn write_pose_csv(path: &Path, poses: &[(ImageId, Pose2D)]) -> Result<()> {
    std::fs::write(path, format_pose_csv(poses)).map_err(|e| Error::io(path, e))
}
