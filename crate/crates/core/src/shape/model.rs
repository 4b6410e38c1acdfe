//! Shape models: geometry + symmetry + optional texture marker, acting as the
//! exact signed-distance and per-point feature oracles.

use std::path::Path;

use super::mesh::TriangleMesh;
use super::primitive::{Primitive, PrimitiveSdf};
use super::symmetry::SymmetrySpec;
use crate::error::{Error, Result};
use crate::rotation::Vec3;

/// Dimension of the built-in feature: three orbit-canonical coordinates plus
/// a marker flag.
pub const FEATURE_DIM: usize = 4;

#[derive(Clone, Debug)]
pub enum Geometry {
    Primitive(Primitive),
    Mesh(TriangleMesh),
}

/// A textured surface patch: every point whose direction from the origin lies
/// within `angular_radius` of `center`'s direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marker {
    center: Vec3,
    direction: Vec3,
    cos_radius: f64,
    angular_radius: f64,
}

impl Marker {
    pub fn new(center: Vec3, angular_radius: f64) -> Result<Self> {
        let n = center.norm();
        if !(n > 0.0 && n.is_finite()) || !(angular_radius > 0.0 && angular_radius < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(
                "marker needs a nonzero centre and an angular radius in (0, π)".into(),
            ));
        }
        Ok(Self {
            center,
            direction: center / n,
            cos_radius: angular_radius.cos(),
            angular_radius,
        })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn angular_radius(&self) -> f64 {
        self.angular_radius
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let n = p.norm();
        n > 0.0 && p.dot(&self.direction) >= self.cos_radius * n
    }
}

/// Externally computed per-point features with nearest-point lookup.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    points: Vec<Vec3>,
    features: Vec<f64>,
    dim: usize,
}

impl FeatureTable {
    pub fn new(points: Vec<Vec3>, features: Vec<f64>, dim: usize) -> Result<Self> {
        if points.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("feature table needs points and dim ≥ 1".into()));
        }
        if features.len() != points.len() * dim {
            return Err(Error::LengthMismatch {
                what: "feature values vs points × dim",
                left: features.len(),
                right: points.len() * dim,
            });
        }
        Ok(Self {
            points,
            features,
            dim,
        })
    }

    /// Parses CSV rows `x,y,z,f1,f2,...`. Blank lines, `#` comments and a
    /// non-numeric header row are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut features = Vec::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if points.is_empty() && dim.is_none() => {
                    dim = Some(0); // header seen
                    continue;
                }
                Err(e) => return Err(Error::parse(format!("feature CSV line {}", lineno + 1), e.to_string())),
            };
            if fields.len() < 4 {
                return Err(Error::parse(
                    format!("feature CSV line {}", lineno + 1),
                    "need x,y,z and at least one feature",
                ));
            }
            let d = fields.len() - 3;
            match dim {
                Some(k) if k != 0 && k != d => {
                    return Err(Error::parse(
                        format!("feature CSV line {}", lineno + 1),
                        format!("expected {k} features, found {d}"),
                    ))
                }
                _ => dim = Some(d),
            }
            points.push(Vec3::new(fields[0], fields[1], fields[2]));
            features.extend_from_slice(&fields[3..]);
        }
        Self::new(points, features, dim.unwrap_or(0))
    }

    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Feature of the stored point nearest to `p` (ties: smallest index).
    pub fn lookup(&self, p: &Vec3) -> &[f64] {
        let mut best = (0, f64::INFINITY);
        for (i, q) in self.points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        &self.features[best.0 * self.dim..(best.0 + 1) * self.dim]
    }
}

#[derive(Clone, Debug)]
enum SdfBackend {
    Analytic(PrimitiveSdf),
    Mesh,
}

/// A CAD model: geometry, its proper symmetry and an optional marker.
#[derive(Clone, Debug)]
pub struct ShapeModel {
    geometry: Geometry,
    sdf: SdfBackend,
    symmetry: SymmetrySpec,
    marker: Option<Marker>,
    render_mesh: TriangleMesh,
    bounding_radius: f64,
    features: Option<FeatureTable>,
}

impl ShapeModel {
    /// Builds a model. A marker must sit on the surface.
    pub fn new(geometry: Geometry, symmetry: SymmetrySpec, marker: Option<Marker>) -> Result<Self> {
        let (sdf, render_mesh, bounding_radius) = match &geometry {
            Geometry::Primitive(p) => {
                p.validate()?;
                (SdfBackend::Analytic(PrimitiveSdf::new(*p)), p.mesh(), p.bounding_radius())
            }
            Geometry::Mesh(m) => (SdfBackend::Mesh, m.clone(), m.bounding_radius()),
        };
        let model = Self {
            geometry,
            sdf,
            symmetry,
            marker,
            render_mesh,
            bounding_radius,
            features: None,
        };
        if let Some(mk) = &model.marker {
            model.require_sdf()?;
            let distance = model.sdf_unchecked(&mk.center()).abs();
            if distance >= 1e-6 * model.bounding_radius {
                return Err(Error::MarkerOffSurface { distance });
            }
        }
        Ok(model)
    }

    /// A primitive with its natural symmetry group.
    pub fn primitive(p: Primitive) -> Result<Self> {
        Self::new(Geometry::Primitive(p), p.symmetry(), None)
    }

    /// Built-in objects: the five plain solids (`cone`, `cube`, `cylinder`,
    /// `icosa`, `tet`), `sphere`, and the marked `sphereX`, `cylO`, `tetX`.
    pub fn preset(name: &str) -> Result<Self> {
        let sphere = Primitive::Sphere { radius: 1.0 };
        let cylinder = Primitive::Cylinder {
            radius: 0.6,
            half_height: 1.0,
        };
        let tet = Primitive::Tetrahedron { circumradius: 1.2 };
        match name {
            "sphere" => Self::primitive(sphere),
            "cube" => Self::primitive(Primitive::Cube { half_extent: 1.0 }),
            "cylinder" | "cyl" => Self::primitive(cylinder),
            "cone" => Self::primitive(Primitive::Cone {
                radius: 0.8,
                half_height: 1.0,
            }),
            "tet" | "tetrahedron" => Self::primitive(tet),
            "icosa" | "icosahedron" => Self::primitive(Primitive::Icosahedron { circumradius: 1.2 }),
            "sphereX" => {
                let marker = Marker::new(Vec3::new(0.0, 0.0, 1.0), 25f64.to_radians())?;
                Self::new(Geometry::Primitive(sphere), sphere.symmetry(), Some(marker))
            }
            "cylO" => {
                let marker = Marker::new(Vec3::new(0.6, 0.0, 0.0), 25f64.to_radians())?;
                Self::new(Geometry::Primitive(cylinder), cylinder.symmetry(), Some(marker))
            }
            "tetX" => {
                // The face opposite vertex (1,1,1); its inradius point is at
                // distance R/3, and a 45° cone stays inside that face.
                let centre = -Vec3::repeat(1.0).normalize() * (1.2 / 3.0);
                let marker = Marker::new(centre, 45f64.to_radians())?;
                Self::new(Geometry::Primitive(tet), tet.symmetry(), Some(marker))
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown object preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn with_features(mut self, table: FeatureTable) -> Self {
        self.features = Some(table);
        self
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn symmetry(&self) -> &SymmetrySpec {
        &self.symmetry
    }

    pub fn marker(&self) -> Option<&Marker> {
        self.marker.as_ref()
    }

    pub fn render_mesh(&self) -> &TriangleMesh {
        &self.render_mesh
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Errors when signed distances are unavailable (open mesh).
    pub fn require_sdf(&self) -> Result<()> {
        match (&self.sdf, &self.geometry) {
            (SdfBackend::Mesh, Geometry::Mesh(m)) if !m.is_watertight() => Err(Error::NotWatertight {
                open_edges: m.open_edges(),
            }),
            _ => Ok(()),
        }
    }

    pub fn sdf_eval(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        self.require_sdf()?;
        Ok(crate::exec::map_slice(points, |p| self.sdf_unchecked(p)))
    }

    pub(crate) fn sdf_unchecked(&self, p: &Vec3) -> f64 {
        match (&self.sdf, &self.geometry) {
            (SdfBackend::Analytic(a), _) => a.eval(p),
            (SdfBackend::Mesh, Geometry::Mesh(m)) => m.signed_distance_unchecked(p),
            (SdfBackend::Mesh, Geometry::Primitive(_)) => unreachable!("primitives use closed forms"),
        }
    }

    /// The built-in feature: orbit-canonical coordinates and a marker flag.
    /// Marked points keep their raw coordinates.
    pub fn canonical_feature(&self, p: &Vec3) -> [f64; FEATURE_DIM] {
        if self.marker.is_some_and(|m| m.contains(p)) {
            return [p.x, p.y, p.z, 1.0];
        }
        let c = self.symmetry.canonicalize(p);
        [c.x, c.y, c.z, 0.0]
    }

    /// Dimension of [`ShapeModel::write_feature`]'s output.
    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(FEATURE_DIM, FeatureTable::dim)
    }

    /// Writes the feature of `p`: imported features when present, otherwise
    /// the built-in canonical feature.
    pub fn write_feature(&self, p: &Vec3, out: &mut [f64]) {
        match &self.features {
            Some(t) => out.copy_from_slice(t.lookup(p)),
            None => out.copy_from_slice(&self.canonical_feature(p)),
        }
    }
}

/// Names accepted by [`ShapeModel::preset`].
pub const PRESETS: &[&str] = &["sphere", "cube", "cylinder", "cone", "tet", "icosa", "sphereX", "cylO", "tetX"];
