//! The JSON run configuration. Every field has a default, so `{}` is a
//! valid config; `--print-config` shows the resolved values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rotdist::encoding::EncodingSpec;
use rotdist::render::CameraIntrinsics;
use rotdist::shape::{FeatureTable, Geometry, GroupName, Marker, Primitive, ShapeModel, SymmetrySpec, TriangleMesh};
use rotdist::surrogate::{LrSchedule, Optimizer, TrainConfig};
use rotdist::{Rotation, Vec3};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub object: ObjectConfig,
    /// `null` derives the camera from the object's bounding radius.
    pub camera: Option<CameraIntrinsics>,
    /// Ground-truth pose `[qw, qx, qy, qz]` (model → camera).
    pub pose: [f64; 4],
    /// Points sampled inside the rendered silhouette.
    pub n_points: usize,
    pub grid: GridConfig,
    pub beta_s: f64,
    pub beta_f: f64,
    pub score_mode: ScoreMode,
    pub encoding: EncodingSpec,
    pub sampler: SamplerConfig,
    pub train: TrainSection,
    pub modes: ModeConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        // A generic pose: no symmetry axis aligned with the camera.
        let r = Rotation::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 0.9);
        Self {
            object: ObjectConfig::default(),
            camera: None,
            pose: r.wxyz(),
            n_points: 100,
            grid: GridConfig::default(),
            beta_s: 50.0,
            beta_f: 50.0,
            score_mode: ScoreMode::FeatureAndShape,
            encoding: EncodingSpec::default(),
            sampler: SamplerConfig::default(),
            train: TrainSection::default(),
            modes: ModeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    /// Built-in object name; exclusive with `primitive` and `obj`.
    pub preset: Option<String>,
    pub primitive: Option<Primitive>,
    /// Path to a watertight Wavefront OBJ mesh.
    pub obj: Option<PathBuf>,
    /// Overrides the natural symmetry (required for `obj`).
    pub symmetry: Option<SymmetryConfig>,
    pub marker: Option<MarkerConfig>,
    /// CSV `x,y,z,f1,…` of externally computed point features.
    pub features: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymmetryConfig {
    Finite { group: GroupName },
    Axis { axis: [f64; 3], flip: bool },
    Full,
    None,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerConfig {
    pub center: [f64; 3],
    pub angular_radius_deg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Base level of the precomputed (training-pool) distribution.
    pub level: u32,
    pub refine_rounds: u32,
    pub refine_top_k: usize,
    /// Flat grid level used by `eval`.
    pub eval_level: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            level: 4,
            refine_rounds: 4,
            refine_top_k: 20_000,
            eval_level: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreMode {
    #[serde(rename = "S")]
    Shape,
    #[serde(rename = "F")]
    Feature,
    #[serde(rename = "F+S")]
    FeatureAndShape,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub top_pool: usize,
    pub n_mode: usize,
    pub n_uniform: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            top_pool: 20_000,
            n_mode: 3000,
            n_uniform: 1095,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    /// Batch size the sampler counts must add up to.
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            schedule: t.schedule,
            batch_size: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub rel_threshold: f64,
    pub merge_deg: f64,
    pub mass_deg: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            rel_threshold: 0.5,
            merge_deg: 5.0,
            mass_deg: 5.0,
        }
    }
}

impl RunConfig {
    /// Reads `path`; relative object paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.object.obj, &mut cfg.object.features].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampler;
        if s.n_mode + s.n_uniform + 1 != self.train.batch_size {
            bail!(
                "sampler: n_mode + n_uniform + 1 = {} but train.batch_size = {}",
                s.n_mode + s.n_uniform + 1,
                self.train.batch_size
            );
        }
        if s.n_mode > s.top_pool {
            bail!("sampler.n_mode ({}) exceeds sampler.top_pool ({})", s.n_mode, s.top_pool);
        }
        if self.n_points == 0 {
            bail!("n_points must be at least 1");
        }
        if !(self.beta_s >= 0.0 && self.beta_f >= 0.0) {
            bail!("beta_s and beta_f must be nonnegative");
        }
        self.encoding.validate().context("encoding")?;
        self.train_config().validate().context("train")?;
        for p in [&self.object.obj, &self.object.features].into_iter().flatten() {
            if !p.exists() {
                bail!("object: file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn pose(&self) -> Result<Rotation> {
        let [w, x, y, z] = self.pose;
        Rotation::from_wxyz(w, x, y, z).context("pose")
    }

    /// Temperatures after applying the score mode.
    pub fn betas(&self) -> (f64, f64) {
        match self.score_mode {
            ScoreMode::Shape => (self.beta_s, 0.0),
            ScoreMode::Feature => (0.0, self.beta_f),
            ScoreMode::FeatureAndShape => (self.beta_s, self.beta_f),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let (beta_s, beta_f) = self.betas();
        TrainConfig {
            steps: self.train.steps,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            schedule: self.train.schedule,
            seed: self.seed,
            encoding: self.encoding,
            beta_s,
            beta_f,
            top_pool: self.sampler.top_pool,
            n_mode: self.sampler.n_mode,
            n_uniform: self.sampler.n_uniform,
            pool_level: self.grid.level,
            pool_refine_rounds: self.grid.refine_rounds,
            pool_refine_top_k: self.grid.refine_top_k,
        }
    }

    pub fn camera(&self, model: &ShapeModel) -> CameraIntrinsics {
        self.camera.unwrap_or_else(|| CameraIntrinsics::default_for(model))
    }

    pub fn build_model(&self) -> Result<ShapeModel> {
        let o = &self.object;
        let sources = [o.preset.is_some(), o.primitive.is_some(), o.obj.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            bail!("object: give only one of `preset`, `primitive`, `obj`");
        }
        let symmetry = o.symmetry.as_ref().map(SymmetryConfig::build).transpose()?;
        let marker = o
            .marker
            .map(|m| Marker::new(Vec3::from(m.center), m.angular_radius_deg.to_radians()))
            .transpose()
            .context("object.marker")?;
        let model = if let Some(path) = &o.obj {
            let mesh = TriangleMesh::from_obj_file(path).with_context(|| format!("object.obj {}", path.display()))?;
            let symmetry = symmetry.context("object.symmetry is required for an OBJ mesh")?;
            ShapeModel::new(Geometry::Mesh(mesh), symmetry, marker)?
        } else if let Some(p) = o.primitive {
            ShapeModel::new(Geometry::Primitive(p), symmetry.unwrap_or_else(|| p.symmetry()), marker).context("object.primitive")?
        } else {
            let name = o.preset.as_deref().unwrap_or("cube");
            let preset = ShapeModel::preset(name).context("object.preset")?;
            if symmetry.is_none() && marker.is_none() {
                preset
            } else {
                ShapeModel::new(
                    preset.geometry().clone(),
                    symmetry.unwrap_or_else(|| preset.symmetry().clone()),
                    marker.or(preset.marker().copied()),
                )
                .context("object")?
            }
        };
        Ok(match &o.features {
            Some(path) => model.with_features(FeatureTable::from_csv_file(path).with_context(|| format!("object.features {}", path.display()))?),
            None => model,
        })
    }
}

impl SymmetryConfig {
    fn build(&self) -> Result<SymmetrySpec> {
        Ok(match self {
            Self::Finite { group } => SymmetrySpec::named(*group),
            Self::Axis { axis, flip } => SymmetrySpec::axis(Vec3::from(*axis), *flip).context("object.symmetry")?,
            Self::Full => SymmetrySpec::Full,
            Self::None => SymmetrySpec::trivial(),
        })
    }
}
