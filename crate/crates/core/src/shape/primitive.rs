//! Analytic solids centred at the origin, with closed-form signed distances.

use serde::{Deserialize, Serialize};

use super::mesh::{self, closest_point_on_triangle, TriangleMesh};
use super::symmetry::{finite_rotation_group, GroupName, SymmetrySpec};
use crate::rotation::Vec3;

/// Sizes are in model units. Axial solids run along z from `-half_height`
/// to `half_height`; the cone's apex is at `+half_height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere { radius: f64 },
    Cube { half_extent: f64 },
    Cylinder { radius: f64, half_height: f64 },
    Cone { radius: f64, half_height: f64 },
    Tetrahedron { circumradius: f64 },
    Icosahedron { circumradius: f64 },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Cube { .. } => "cube",
            Self::Cylinder { .. } => "cylinder",
            Self::Cone { .. } => "cone",
            Self::Tetrahedron { .. } => "tetrahedron",
            Self::Icosahedron { .. } => "icosahedron",
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let sizes: &[f64] = match self {
            Self::Sphere { radius } => &[*radius],
            Self::Cube { half_extent } => &[*half_extent],
            Self::Cylinder { radius, half_height } | Self::Cone { radius, half_height } => {
                &[*radius, *half_height]
            }
            Self::Tetrahedron { circumradius } | Self::Icosahedron { circumradius } => {
                &[*circumradius]
            }
        };
        if sizes.iter().all(|s| *s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!(
                "{} sizes must be positive and finite",
                self.name()
            )))
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Self::Sphere { radius } => radius,
            Self::Cube { half_extent } => half_extent * 3f64.sqrt(),
            Self::Cylinder { radius, half_height } | Self::Cone { radius, half_height } => {
                radius.hypot(half_height)
            }
            Self::Tetrahedron { circumradius } | Self::Icosahedron { circumradius } => circumradius,
        }
    }

    /// The solid's proper symmetry group.
    pub fn symmetry(&self) -> SymmetrySpec {
        match self {
            Self::Sphere { .. } => SymmetrySpec::Full,
            Self::Cube { .. } => finite_rotation_group(GroupName::Octahedral),
            Self::Cylinder { .. } => SymmetrySpec::AxisContinuous {
                axis: Vec3::z(),
                flip: true,
            },
            Self::Cone { .. } => SymmetrySpec::AxisContinuous {
                axis: Vec3::z(),
                flip: false,
            },
            Self::Tetrahedron { .. } => finite_rotation_group(GroupName::Tetrahedral),
            Self::Icosahedron { .. } => finite_rotation_group(GroupName::Icosahedral),
        }
    }

    /// Tessellation used for rasterization. Polyhedra are meshed exactly;
    /// curved solids get 5120 triangles.
    pub fn mesh(&self) -> TriangleMesh {
        match *self {
            Self::Sphere { radius } => mesh::icosphere(radius, 4),
            Self::Cube { half_extent } => mesh::box_mesh(half_extent, 1),
            Self::Cylinder {
                radius,
                half_height,
            } => mesh::revolution_mesh(radius, radius, half_height, 1280),
            Self::Cone {
                radius,
                half_height,
            } => mesh::revolution_mesh(radius, 0.0, half_height, 2560),
            Self::Tetrahedron { circumradius } => mesh::tetrahedron_mesh(circumradius),
            Self::Icosahedron { circumradius } => mesh::icosahedron_mesh(circumradius),
        }
    }
}

/// A primitive with any precomputation its distance function needs.
#[derive(Clone, Debug)]
pub(crate) struct PrimitiveSdf {
    primitive: Primitive,
    polytope: Option<ConvexPolytope>,
}

impl PrimitiveSdf {
    pub fn new(primitive: Primitive) -> Self {
        let polytope = match primitive {
            Primitive::Tetrahedron { .. } | Primitive::Icosahedron { .. } => {
                Some(ConvexPolytope::from_mesh(&primitive.mesh()))
            }
            _ => None,
        };
        Self {
            primitive,
            polytope,
        }
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        match self.primitive {
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Cube { half_extent } => sd_box(p, half_extent),
            Primitive::Cylinder {
                radius,
                half_height,
            } => sd_cylinder(p, radius, half_height),
            Primitive::Cone {
                radius,
                half_height,
            } => sd_cone(p, radius, half_height),
            Primitive::Tetrahedron { .. } | Primitive::Icosahedron { .. } => {
                self.polytope.as_ref().expect("polytope precomputed").eval(p)
            }
        }
    }
}

fn sd_box(p: &Vec3, h: f64) -> f64 {
    let q = p.abs() - Vec3::repeat(h);
    q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
}

fn sd_cylinder(p: &Vec3, r: f64, h: f64) -> f64 {
    let dx = p.x.hypot(p.y) - r;
    let dz = p.z.abs() - h;
    dx.max(dz).min(0.0) + dx.max(0.0).hypot(dz.max(0.0))
}

/// Cone with base radius `r` at `z = -h` and apex at `z = +h`.
fn sd_cone(p: &Vec3, r: f64, h: f64) -> f64 {
    let qx = p.x.hypot(p.y);
    let qz = p.z;
    // Closest point on the base disc edge segment (in the (ρ, z) half-plane).
    let ca_x = qx - qx.min(if qz < 0.0 { r } else { 0.0 });
    let ca_z = qz.abs() - h;
    // Closest point on the slanted side, from apex (0, h) to rim (r, -h).
    let (k2x, k2z) = (-r, 2.0 * h);
    let t = (((0.0 - qx) * k2x + (h - qz) * k2z) / (k2x * k2x + k2z * k2z)).clamp(0.0, 1.0);
    let cb_x = qx + k2x * t;
    let cb_z = qz - h + k2z * t;
    let s = if cb_x < 0.0 && ca_z < 0.0 { -1.0 } else { 1.0 };
    s * (ca_x * ca_x + ca_z * ca_z).min(cb_x * cb_x + cb_z * cb_z).sqrt()
}

/// Convex polyhedron: inside, the distance is the nearest face plane;
/// outside, the nearest point over its triangles.
#[derive(Clone, Debug)]
struct ConvexPolytope {
    planes: Vec<(Vec3, f64)>,
    triangles: Vec<[Vec3; 3]>,
}

impl ConvexPolytope {
    fn from_mesh(m: &TriangleMesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..m.triangles().len()).map(|i| m.triangle(i)).collect();
        let planes = triangles
            .iter()
            .map(|[a, b, c]| {
                let n = (b - a).cross(&(c - a)).normalize();
                (n, n.dot(a))
            })
            .collect();
        Self { planes, triangles }
    }

    fn eval(&self, p: &Vec3) -> f64 {
        let inside = self
            .planes
            .iter()
            .map(|(n, d)| n.dot(p) - d)
            .fold(f64::NEG_INFINITY, f64::max);
        if inside <= 0.0 {
            return inside;
        }
        self.triangles
            .iter()
            .map(|[a, b, c]| (closest_point_on_triangle(p, a, b, c) - p).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}
