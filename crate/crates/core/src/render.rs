//! Software rasterizer for silhouettes and depth, and the silhouette-IoU pose
//! confidence.
//!
//! Camera convention (OpenCV): a model point `x` at pose `r` sits at
//! `r·x + (0, 0, t_z)` in the camera frame, and projects to pixel coordinates
//! `u = fx·X/Z + cx`, `v = fy·Y/Z + cy`. Pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)` and is sampled at its centre.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rotation::{Rotation, Vec3};
use crate::shape::{Geometry, Primitive, ShapeModel, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Distance from the camera to the model origin, in model units.
    pub t_z: f64,
}

impl CameraIntrinsics {
    /// 224×224, f = 300 px, centred principal point, object at four bounding radii.
    pub fn default_for_radius(bounding_radius: f64) -> Self {
        Self {
            fx: 300.0,
            fy: 300.0,
            cx: 112.0,
            cy: 112.0,
            width: 224,
            height: 224,
            t_z: 4.0 * bounding_radius,
        }
    }

    pub fn default_for(model: &ShapeModel) -> Self {
        Self::default_for_radius(model.bounding_radius())
    }

    /// Same view at `factor`× the resolution.
    pub fn supersampled(&self, factor: usize) -> Self {
        let f = factor as f64;
        Self {
            fx: self.fx * f,
            fy: self.fy * f,
            cx: self.cx * f,
            cy: self.cy * f,
            width: self.width * factor,
            height: self.height * factor,
            t_z: self.t_z,
        }
    }

    pub fn validate(&self, bounding_radius: f64) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("raster must be at least 1×1".into()));
        }
        if !(self.t_z > bounding_radius) {
            return Err(Error::BehindCamera(self.t_z - bounding_radius));
        }
        Ok(())
    }
}

/// Binary silhouette, row-major, `true` = foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SilhouetteMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SilhouetteMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "mask bits vs width × height",
                left: bits.len(),
                right: width * height,
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[j * self.width + i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn check_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::MaskSize {
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }

    /// Binary PGM (P5), foreground 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    /// Reads a binary PGM; any nonzero pixel is foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (header, data) = parse_pgm_header(bytes)?;
        let [w, h, maxval] = header;
        if maxval > 255 {
            return Err(Error::parse("PGM", "only 8-bit PGM is supported"));
        }
        if data.len() < w * h {
            return Err(Error::parse("PGM", format!("expected {} pixels, found {}", w * h, data.len())));
        }
        Ok(Self {
            width: w,
            height: h,
            bits: data[..w * h].iter().map(|&v| v != 0).collect(),
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }
}

fn parse_pgm_header(bytes: &[u8]) -> Result<([usize; 3], &[u8])> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::parse("PGM", "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse("PGM", "malformed header"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    Ok((fields, bytes.get(pos + 1..).unwrap_or(&[])))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Camera-frame depth per pixel; `f64::INFINITY` where nothing is hit.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.depth[j * self.width + i]
    }

    pub fn mask(&self) -> SilhouetteMask {
        SilhouetteMask {
            width: self.width,
            height: self.height,
            bits: self.depth.iter().map(|d| d.is_finite()).collect(),
        }
    }

    /// Debug view: near = 255, far = 1, background = 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let fg = self.depth.iter().copied().filter(|d| d.is_finite());
        let (lo, hi) = fg.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
        let span = (hi - lo).max(1e-300);
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.depth.iter().map(|&d| {
            if d.is_finite() {
                (255.0 - 254.0 * (d - lo) / span).round() as u8
            } else {
                0
            }
        }));
        out
    }
}

struct Projected {
    uv: [(f64, f64); 3],
    area: f64,
    normal: Vec3,
    offset: f64,
}

/// Renders `mesh` at pose `r`: silhouette and nearest-surface depth.
pub fn rasterize_mesh(mesh: &TriangleMesh, r: &Rotation, cam: &CameraIntrinsics) -> Result<(SilhouetteMask, DepthBuffer)> {
    cam.validate(0.0)?;
    let m = r.matrix().0;
    let t = Vec3::new(0.0, 0.0, cam.t_z);
    let cam_pts: Vec<Vec3> = mesh.vertices().iter().map(|v| m * v + t).collect();
    let zmin = cam_pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    if !(zmin > 1e-9 * cam.t_z) {
        return Err(Error::BehindCamera(zmin));
    }
    let project = |p: &Vec3| (cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy);

    let mut tris = Vec::with_capacity(mesh.triangles().len());
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); cam.height];
    for t in mesh.triangles() {
        let c = t.map(|i| cam_pts[i]);
        let uv = c.map(|p| project(&p));
        let area = (uv[1].0 - uv[0].0) * (uv[2].1 - uv[0].1) - (uv[1].1 - uv[0].1) * (uv[2].0 - uv[0].0);
        if area == 0.0 {
            continue;
        }
        let vmin = uv.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let vmax = uv.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        // Rows whose centre j + 0.5 lies in [vmin, vmax].
        let j0 = (vmin - 0.5).ceil().max(0.0);
        let j1 = (vmax - 0.5).floor().min(cam.height as f64 - 1.0);
        if j0 > j1 {
            continue;
        }
        let normal = (c[1] - c[0]).cross(&(c[2] - c[0]));
        let id = tris.len() as u32;
        tris.push(Projected {
            uv,
            area,
            normal,
            offset: normal.dot(&c[0]),
        });
        for row in &mut rows[j0 as usize..=j1 as usize] {
            row.push(id);
        }
    }

    let mut depth = vec![f64::INFINITY; cam.width * cam.height];
    exec::for_each_row(&mut depth, cam.width, |j, row| {
        let y = j as f64 + 0.5;
        for &id in &rows[j] {
            let tri = &tris[id as usize];
            let [a, b, c] = tri.uv;
            let umin = a.0.min(b.0).min(c.0);
            let umax = a.0.max(b.0).max(c.0);
            let i0 = (umin - 0.5).ceil().max(0.0);
            let i1 = (umax - 0.5).floor().min(cam.width as f64 - 1.0);
            if i0 > i1 {
                continue;
            }
            let s = tri.area.signum();
            for (i, cell) in row.iter_mut().enumerate().take(i1 as usize + 1).skip(i0 as usize) {
                let x = i as f64 + 0.5;
                let edge = |p: (f64, f64), q: (f64, f64)| s * ((q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0));
                if edge(a, b) < 0.0 || edge(b, c) < 0.0 || edge(c, a) < 0.0 {
                    continue;
                }
                let ray = Vec3::new((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
                let denom = tri.normal.dot(&ray);
                if denom == 0.0 {
                    continue;
                }
                let z = tri.offset / denom;
                if z > 0.0 && z < *cell {
                    *cell = z;
                }
            }
        }
    });
    let buffer = DepthBuffer {
        width: cam.width,
        height: cam.height,
        depth,
    };
    Ok((buffer.mask(), buffer))
}

/// Renders a model at pose `r`. Spheres are ray-cast exactly (their image does
/// not depend on `r`); everything else goes through the pre-meshed surface.
pub fn rasterize(model: &ShapeModel, r: &Rotation, cam: &CameraIntrinsics) -> Result<(SilhouetteMask, DepthBuffer)> {
    cam.validate(model.bounding_radius())?;
    match model.geometry() {
        Geometry::Primitive(Primitive::Sphere { radius }) => Ok(raycast_sphere(*radius, cam)),
        _ => rasterize_mesh(model.render_mesh(), r, cam),
    }
}

/// Sphere of radius `rho` centred at `(0, 0, t_z)`: nearest root of
/// `|z·d − c|² = ρ²` along each pixel ray `z·d`, `d = ((u−cx)/fx, (v−cy)/fy, 1)`.
fn raycast_sphere(rho: f64, cam: &CameraIntrinsics) -> (SilhouetteMask, DepthBuffer) {
    let mut depth = vec![f64::INFINITY; cam.width * cam.height];
    exec::for_each_row(&mut depth, cam.width, |j, row| {
        let dy = (j as f64 + 0.5 - cam.cy) / cam.fy;
        for (i, out) in row.iter_mut().enumerate() {
            let dx = (i as f64 + 0.5 - cam.cx) / cam.fx;
            let a = dx * dx + dy * dy + 1.0;
            let b = cam.t_z;
            let c = cam.t_z * cam.t_z - rho * rho;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                *out = (b - disc.sqrt()) / a;
            }
        }
    });
    let buffer = DepthBuffer {
        width: cam.width,
        height: cam.height,
        depth,
    };
    (buffer.mask(), buffer)
}

/// Intersection over union; two empty masks agree perfectly.
pub fn iou(a: &SilhouetteMask, b: &SilhouetteMask) -> Result<f64> {
    b.check_size(a.width, a.height)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// IoU between the silhouette rendered at `r_est` and a predicted full-object mask.
pub fn pose_confidence(
    model: &ShapeModel,
    r_est: &Rotation,
    predicted: &SilhouetteMask,
    cam: &CameraIntrinsics,
) -> Result<f64> {
    predicted.check_size(cam.width, cam.height)?;
    let (rendered, _) = rasterize(model, r_est, cam)?;
    iou(&rendered, predicted)
}

/// Synthetic occlusion: erases a band of the silhouette, growing from a
/// randomly chosen side of its bounding box, until `ceil(fraction·count)`
/// foreground pixels are gone. The last column (or row) of the band may be
/// partially erased so the erased count is exact.
pub fn occlude(mask: &SilhouetteMask, fraction: f64, seed: u64) -> Result<SilhouetteMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("occlusion fraction {fraction} not in [0, 1]")));
    }
    let mut out = mask.clone();
    let target = (fraction * mask.count() as f64).ceil() as usize;
    if target == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side: u8 = rng.random_range(0..4);
    let (w, h) = (mask.width, mask.height);
    // Scan order: lines perpendicular to the growth direction.
    let lines: Vec<Vec<(usize, usize)>> = match side {
        0 => (0..w).map(|i| (0..h).map(|j| (i, j)).collect()).collect(),
        1 => (0..w).rev().map(|i| (0..h).map(|j| (i, j)).collect()).collect(),
        2 => (0..h).map(|j| (0..w).map(|i| (i, j)).collect()).collect(),
        _ => (0..h).rev().map(|j| (0..w).map(|i| (i, j)).collect()).collect(),
    };
    let mut erased = 0;
    'outer: for line in lines {
        for (i, j) in line {
            if out.get(i, j) {
                out.set(i, j, false);
                erased += 1;
                if erased == target {
                    break 'outer;
                }
            }
        }
    }
    Ok(out)
}

/// Samples `n` visible surface points of `model` seen at pose `r_gt`, returned
/// in the model frame. Foreground pixels are drawn uniformly without
/// replacement (with replacement when fewer than `n` exist) and back-projected
/// through the depth buffer.
pub fn sample_visible_points(
    model: &ShapeModel,
    r_gt: &Rotation,
    cam: &CameraIntrinsics,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let (_, depth) = rasterize(model, r_gt, cam)?;
    let fg: Vec<usize> = (0..depth.depth.len()).filter(|&k| depth.depth[k].is_finite()).collect();
    if fg.is_empty() {
        return Err(Error::EmptySilhouette);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if n <= fg.len() {
        rand::seq::index::sample(&mut rng, fg.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..fg.len())).collect()
    };
    let t = Vec3::new(0.0, 0.0, cam.t_z);
    Ok(picks
        .into_iter()
        .map(|k| {
            let pix = fg[k];
            let (i, j) = (pix % cam.width, pix / cam.width);
            let z = depth.depth[pix];
            let x = Vec3::new(
                (i as f64 + 0.5 - cam.cx) / cam.fx * z,
                (j as f64 + 0.5 - cam.cy) / cam.fy * z,
                z,
            );
            r_gt.inverse_rotate(&(x - t))
        })
        .collect())
}
