//! Triangle meshes: OBJ loading, watertightness, point–triangle distance,
//! generalized winding numbers and tessellations of the analytic primitives.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rotation::Vec3;

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    open_edges: usize,
}

impl TriangleMesh {
    /// Builds a mesh, dropping zero-area triangles. Closed meshes are
    /// reoriented so that their normals point outward.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= nv)) {
            return Err(Error::InvalidMesh(format!(
                "triangle {t:?} references a vertex beyond {nv}"
            )));
        }
        let scale = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let min_area = 1e-14 * scale * scale;
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() * 0.5 > min_area
            })
            .collect();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no non-degenerate triangles".into()));
        }
        let open_edges = count_open_edges(&triangles);
        let mut mesh = Self {
            vertices,
            triangles,
            open_edges,
        };
        if mesh.is_watertight() && mesh.signed_volume() < 0.0 {
            for t in &mut mesh.triangles {
                t.swap(1, 2);
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.open_edges == 0
    }

    pub fn open_edges(&self) -> usize {
        self.open_edges
    }

    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            let q = closest_point_on_triangle(p, &a, &b, &c);
            best = best.min((q - p).norm_squared());
        }
        best.sqrt()
    }

    /// Generalized winding number of the surface around `p`
    /// (≈1 inside, ≈0 outside for an outward-oriented closed mesh).
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let mut total = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i] - p);
            total += solid_angle(&a, &b, &c);
        }
        total / (4.0 * PI)
    }

    /// Signed distance: negative inside. Requires a watertight mesh.
    pub fn signed_distance(&self, p: &Vec3) -> Result<f64> {
        if !self.is_watertight() {
            return Err(Error::NotWatertight {
                open_edges: self.open_edges,
            });
        }
        Ok(self.signed_distance_unchecked(p))
    }

    pub(crate) fn signed_distance_unchecked(&self, p: &Vec3) -> f64 {
        let d = self.distance(p);
        if self.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }

    /// Parses the `v`/`f` subset of Wavefront OBJ; polygons are fan-triangulated.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let ctx = || format!("OBJ line {}", lineno + 1);
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let coords: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(ctx(), e.to_string()))?;
                    if coords.len() != 3 {
                        return Err(Error::parse(ctx(), "vertex needs 3 coordinates"));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| Error::parse(ctx(), format!("bad face index {tok:?}")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            return Err(Error::parse(ctx(), "face index 0"));
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(Error::parse(ctx(), format!("face index {i} out of range")));
                        }
                        idx.push(resolved as usize);
                    }
                    if idx.len() < 3 {
                        return Err(Error::parse(ctx(), "face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn from_obj_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj_str(&text)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {:.17e} {:.17e} {:.17e}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }
}

fn count_open_edges(triangles: &[[usize; 3]]) -> usize {
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    edges.values().filter(|&&c| c != 2).count()
}

/// Solid angle subtended by triangle `(a, b, c)` seen from the origin
/// (Van Oosterom–Strackee).
fn solid_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

// ---------------------------------------------------------------------------
// Tessellations. All are closed and outward-oriented.

/// Orients each triangle of a convex, origin-centred mesh outward.
fn orient_convex(vertices: &[Vec3], triangles: &mut [[usize; 3]]) {
    for t in triangles.iter_mut() {
        let [a, b, c] = t.map(|i| vertices[i]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&((a + b + c) / 3.0)) < 0.0 {
            t.swap(1, 2);
        }
    }
}

/// Axis-aligned box with half-extent `h`, each face split into `k × k` quads.
pub fn box_mesh(h: f64, k: usize) -> TriangleMesh {
    let k = k.max(1);
    let mut vertices = Vec::new();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut triangles = Vec::new();
    let mut vid = |g: [i64; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(g).or_insert_with(|| {
            let to = |c: i64| h * (2.0 * c as f64 / k as f64 - 1.0);
            vertices.push(Vec3::new(to(g[0]), to(g[1]), to(g[2])));
            vertices.len() - 1
        })
    };
    let ki = k as i64;
    for axis in 0..3 {
        for side in [0, ki] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..ki {
                for j in 0..ki {
                    let mut corner = |di: i64, dj: i64| {
                        let mut g = [0i64; 3];
                        g[axis] = side;
                        g[u] = i + di;
                        g[v] = j + dj;
                        vid(g, &mut vertices)
                    };
                    let (a, b, c, d) = (corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1));
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
            }
        }
    }
    orient_convex(&vertices, &mut triangles);
    TriangleMesh::new(vertices, triangles).expect("box mesh is valid")
}

/// Icosphere of radius `r` with `subdiv` midpoint subdivisions (20·4^s faces).
pub fn icosphere(r: f64, subdiv: usize) -> TriangleMesh {
    let base = icosahedron_mesh(1.0);
    let mut vertices: Vec<Vec3> = base.vertices.clone();
    let mut triangles = base.triangles.clone();
    for _ in 0..subdiv {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for t in &triangles {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                    vertices.len() - 1
                });
            }
            next.push([t[0], m[0], m[2]]);
            next.push([t[1], m[1], m[0]]);
            next.push([t[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= r;
    }
    TriangleMesh::new(vertices, triangles).expect("icosphere is valid")
}

/// Solid of revolution about z between `z = -h` and `z = h`: radius `r_bottom`
/// at the base and `r_top` at the top (`r_top = 0` gives a cone).
pub fn revolution_mesh(r_bottom: f64, r_top: f64, h: f64, segments: usize) -> TriangleMesh {
    let n = segments.max(3);
    let mut vertices = Vec::new();
    let ring = |r: f64, z: f64, vertices: &mut Vec<Vec3>| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
                vertices.len() - 1
            })
            .collect()
    };
    let bottom = ring(r_bottom, -h, &mut vertices);
    vertices.push(Vec3::new(0.0, 0.0, -h));
    let bc = vertices.len() - 1;
    let mut triangles = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([bc, bottom[j], bottom[i]]);
    }
    if r_top > 0.0 {
        let top = ring(r_top, h, &mut vertices);
        vertices.push(Vec3::new(0.0, 0.0, h));
        let tc = vertices.len() - 1;
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([tc, top[i], top[j]]);
            triangles.push([bottom[i], bottom[j], top[j]]);
            triangles.push([bottom[i], top[j], top[i]]);
        }
    } else {
        vertices.push(Vec3::new(0.0, 0.0, h));
        let apex = vertices.len() - 1;
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([bottom[i], bottom[j], apex]);
        }
    }
    TriangleMesh::new(vertices, triangles).expect("revolution mesh is valid")
}

/// Regular tetrahedron with vertices at `(±1, ±1, ±1)` (even sign count),
/// scaled to circumradius `r`.
pub fn tetrahedron_mesh(r: f64) -> TriangleMesh {
    let s = r / 3f64.sqrt();
    let vertices = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let mut triangles = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    orient_convex(&vertices, &mut triangles);
    TriangleMesh::new(vertices, triangles).expect("tetrahedron is valid")
}

/// Regular icosahedron with vertices at cyclic permutations of `(0, ±1, ±φ)`,
/// scaled to circumradius `r`.
pub fn icosahedron_mesh(r: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let s = r / (1.0 + phi * phi).sqrt();
    let mut vertices = Vec::new();
    for &a in &[-1.0, 1.0] {
        for &b in &[-phi, phi] {
            vertices.push(Vec3::new(0.0, a, b) * s);
            vertices.push(Vec3::new(a, b, 0.0) * s);
            vertices.push(Vec3::new(b, 0.0, a) * s);
        }
    }
    let edge = 2.0 * s;
    let adjacent = |i: usize, j: usize| ((vertices[i] - vertices[j]).norm() - edge).abs() < 1e-9 * r;
    let mut triangles = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                    triangles.push([i, j, k]);
                }
            }
        }
    }
    orient_convex(&vertices, &mut triangles);
    TriangleMesh::new(vertices, triangles).expect("icosahedron is valid")
}
