//! Supervision distributions: SDF and feature scores of an image-aligned
//! point cloud, their combined unnormalized density over rotation sets, and
//! the samplers built on top of it.
//!
//! A rotation `R` is always an object pose (model → camera). The cloud stores
//! visible surface points in the camera frame without translation,
//! `x′ = R_g·x`; a candidate `R` is scored by mapping the cloud back into the
//! model frame, `R⁻¹·x′`, and asking whether it lands on the surface with the
//! expected features. Every `R_g·g` with `g` a symmetry of the model scores
//! zero.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{generate_grid, grid_size, GridCell, MAX_MATERIALIZED_LEVEL, SO3_VOLUME};
use crate::render::{sample_visible_points, CameraIntrinsics};
use crate::rotation::{sample_haar_with, Mat3, Rotation, Vec3};
use crate::shape::ShapeModel;

/// Camera-aligned visible points with their ground-truth features.
#[derive(Clone, Debug)]
pub struct ImageAlignedCloud {
    points: Vec<Vec3>,
    features: Vec<f64>,
    dim: usize,
    source_rotation: Rotation,
}

impl ImageAlignedCloud {
    /// Builds a cloud from model-frame surface points seen at pose `r_gt`.
    pub fn from_model_points(model: &ShapeModel, model_points: &[Vec3], r_gt: &Rotation) -> Result<Self> {
        if model_points.is_empty() {
            return Err(Error::InvalidArgument("a point cloud needs at least one point".into()));
        }
        let dim = model.feature_dim();
        let mut features = vec![0.0; model_points.len() * dim];
        for (p, out) in model_points.iter().zip(features.chunks_mut(dim)) {
            model.write_feature(p, out);
        }
        let m = r_gt.matrix().0;
        Ok(Self {
            points: model_points.iter().map(|p| m * p).collect(),
            features,
            dim,
            source_rotation: *r_gt,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_rotation(&self) -> &Rotation {
        &self.source_rotation
    }
}

/// Renders `model` at `r_gt`, samples `n_points` visible points and records
/// their features.
pub fn build_image_aligned_cloud(
    model: &ShapeModel,
    r_gt: &Rotation,
    camera: &CameraIntrinsics,
    n_points: usize,
    seed: u64,
) -> Result<ImageAlignedCloud> {
    let pts = sample_visible_points(model, r_gt, camera, n_points, seed)?;
    ImageAlignedCloud::from_model_points(model, &pts, r_gt)
}

/// Scores one candidate: `(max_j |sdf(R⁻¹x′_j)|, mean_j ‖G(R⁻¹x′_j) − z_j‖)`.
/// The model must have signed distances available (see [`ShapeModel::require_sdf`]).
fn score_pair(model: &ShapeModel, cloud: &ImageAlignedCloud, rt: &Mat3, buf: &mut [f64]) -> (f64, f64) {
    let mut m = 0.0f64;
    let mut o = 0.0;
    for (j, x) in cloud.points.iter().enumerate() {
        let y = rt * x;
        m = m.max(model.sdf_unchecked(&y).abs());
        model.write_feature(&y, buf);
        let z = cloud.feature(j);
        o += buf.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    (m, o / cloud.len() as f64)
}

/// SDF and feature scores for every rotation, in input order.
pub fn score_rotations(model: &ShapeModel, cloud: &ImageAlignedCloud, rotations: &[Rotation]) -> Result<(Vec<f64>, Vec<f64>)> {
    model.require_sdf()?;
    let dim = cloud.dim;
    let pairs = exec::map_slice(rotations, |r| {
        let mut buf = vec![0.0; dim];
        score_pair(model, cloud, &r.matrix().0.transpose(), &mut buf)
    });
    Ok(pairs.into_iter().unzip())
}

/// Shape score `m′ = max_j |sdf(R⁻¹x′_j)|`.
pub fn sdf_score(model: &ShapeModel, cloud: &ImageAlignedCloud, r: &Rotation) -> Result<f64> {
    model.require_sdf()?;
    let rt = r.matrix().0.transpose();
    Ok(cloud.points.iter().map(|x| model.sdf_unchecked(&(rt * x)).abs()).fold(0.0, f64::max))
}

/// Feature score `o′ = mean_j ‖G(R⁻¹x′_j) − z_j‖₂`.
pub fn feat_score(model: &ShapeModel, cloud: &ImageAlignedCloud, r: &Rotation) -> f64 {
    let rt = r.matrix().0.transpose();
    let mut buf = vec![0.0; cloud.dim];
    let mut total = 0.0;
    for (j, x) in cloud.points.iter().enumerate() {
        model.write_feature(&(rt * x), &mut buf);
        total += buf.iter().zip(cloud.feature(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    total / cloud.len() as f64
}

/// A scored rotation set with its normalized distribution.
///
/// Each entry carries the Haar volume of the cell it stands for, so sets
/// mixing grid levels (after refinement) normalize correctly:
/// `prob_i ∝ weight_i · volume_i` and `density_i = prob_i / volume_i`.
/// For an equivolumetric set this is `prob_i = weight_i / Σ weight`.
#[derive(Clone, Debug)]
pub struct ScoredDistribution {
    rotations: Vec<Rotation>,
    sdf_scores: Vec<f64>,
    feat_scores: Vec<f64>,
    volumes: Vec<f64>,
    weights: Vec<f64>,
    probs: Vec<f64>,
    densities: Vec<f64>,
    beta_s: f64,
    beta_f: f64,
}

impl ScoredDistribution {
    /// Weights `exp(−β_s m′ − β_f o′)`, normalized after shifting by the
    /// minimum combined score.
    pub fn from_scores(
        rotations: Vec<Rotation>,
        sdf_scores: Vec<f64>,
        feat_scores: Vec<f64>,
        volumes: Vec<f64>,
        beta_s: f64,
        beta_f: f64,
    ) -> Result<Self> {
        let n = rotations.len();
        if n == 0 {
            return Err(Error::InvalidArgument("distribution needs at least one rotation".into()));
        }
        for (what, len) in [("sdf scores", sdf_scores.len()), ("feature scores", feat_scores.len()), ("volumes", volumes.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    left: len,
                    right: n,
                });
            }
        }
        if !(beta_s >= 0.0 && beta_f >= 0.0) {
            return Err(Error::InvalidArgument("temperatures must be nonnegative".into()));
        }
        if let Some(i) = volumes.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::NonPositive {
                kind: "cell volume",
                index: i,
                value: volumes[i],
            });
        }
        let combined: Vec<f64> = sdf_scores
            .iter()
            .zip(&feat_scores)
            .map(|(m, o)| beta_s * m + beta_f * o)
            .collect();
        if let Some(i) = combined.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("score {i} is not finite")));
        }
        let s_min = combined.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = combined.iter().map(|s| (-s).exp()).collect();
        let shifted: Vec<f64> = combined.iter().zip(&volumes).map(|(s, v)| (s_min - s).exp() * v).collect();
        let total: f64 = shifted.iter().sum();
        let probs: Vec<f64> = shifted.iter().map(|e| e / total).collect();
        let densities = probs.iter().zip(&volumes).map(|(p, v)| p / v).collect();
        Ok(Self {
            rotations,
            sdf_scores,
            feat_scores,
            volumes,
            weights,
            probs,
            densities,
            beta_s,
            beta_f,
        })
    }

    /// Equal cells covering SO(3): volume π²/N each.
    pub fn equivolumetric(
        rotations: Vec<Rotation>,
        sdf_scores: Vec<f64>,
        feat_scores: Vec<f64>,
        beta_s: f64,
        beta_f: f64,
    ) -> Result<Self> {
        let v = SO3_VOLUME / rotations.len().max(1) as f64;
        let volumes = vec![v; rotations.len()];
        Self::from_scores(rotations, sdf_scores, feat_scores, volumes, beta_s, beta_f)
    }

    /// Same scores, new temperatures.
    pub fn with_temperatures(&self, beta_s: f64, beta_f: f64) -> Result<Self> {
        Self::from_scores(
            self.rotations.clone(),
            self.sdf_scores.clone(),
            self.feat_scores.clone(),
            self.volumes.clone(),
            beta_s,
            beta_f,
        )
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn sdf_scores(&self) -> &[f64] {
        &self.sdf_scores
    }

    pub fn feat_scores(&self) -> &[f64] {
        &self.feat_scores
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn beta_s(&self) -> f64 {
        self.beta_s
    }

    pub fn beta_f(&self) -> f64 {
        self.beta_f
    }

    /// True when every entry has the same cell volume.
    pub fn is_equivolumetric(&self) -> bool {
        self.volumes.iter().all(|v| *v == self.volumes[0])
    }

    /// Shannon entropy of `probs`, in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        exec::argmin_by_key(self.len(), |i| -self.densities[i]).map_or(0, |(i, _)| i)
    }

    /// Indices of the `k` highest-density entries (ties: smaller index first).
    pub fn top_indices(&self, k: usize) -> Vec<usize> {
        crate::grid::top_k_indices(&self.densities, k)
    }

    /// Smallest density-ranked prefix holding at least `mass` probability.
    pub fn top_mass_indices(&self, mass: f64) -> Vec<usize> {
        let order = self.top_indices(self.len());
        let mut acc = 0.0;
        let mut out = Vec::new();
        for i in order {
            out.push(i);
            acc += self.probs[i];
            if acc >= mass {
                break;
            }
        }
        out
    }

    /// CSV: `qw,qx,qy,qz,m_sdf,o_feat,weight,prob` under a
    /// `# beta_s=… beta_f=… n=… volume=pi^2` header. Sets with mixed cell
    /// sizes get a trailing `volume` column.
    pub fn to_csv(&self) -> String {
        let mixed = !self.is_equivolumetric();
        let mut s = format!(
            "# beta_s={} beta_f={} n={} volume=pi^2\nqw,qx,qy,qz,m_sdf,o_feat,weight,prob{}\n",
            self.beta_s,
            self.beta_f,
            self.len(),
            if mixed { ",volume" } else { "" }
        );
        for i in 0..self.len() {
            let [w, x, y, z] = self.rotations[i].wxyz();
            let _ = write!(
                s,
                "{w:.16e},{x:.16e},{y:.16e},{z:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.sdf_scores[i], self.feat_scores[i], self.weights[i], self.probs[i]
            );
            if mixed {
                let _ = write!(s, ",{:.16e}", self.volumes[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Parses [`ScoredDistribution::to_csv`] output. Probabilities are
    /// recomputed from the scores and temperatures.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let ctx = |line: usize| format!("distribution CSV line {line}");
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(ctx(1), "empty file"))?;
        let meta: HashMap<&str, &str> = header
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let beta = |k: &str| -> Result<f64> {
            meta.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(ctx(1), format!("missing or invalid {k}")))
        };
        let (beta_s, beta_f) = (beta("beta_s")?, beta("beta_f")?);
        let (_, columns) = lines.next().ok_or_else(|| Error::parse(ctx(2), "missing column header"))?;
        let mixed = columns.trim().ends_with(",volume");
        let (mut rots, mut m, mut o, mut vols) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(ctx(i + 1), e.to_string()))?;
            let want = if mixed { 9 } else { 8 };
            if v.len() != want {
                return Err(Error::parse(ctx(i + 1), format!("expected {want} columns, found {}", v.len())));
            }
            rots.push(Rotation::from_wxyz(v[0], v[1], v[2], v[3])?);
            m.push(v[4]);
            o.push(v[5]);
            if mixed {
                vols.push(v[8]);
            }
        }
        if mixed {
            Self::from_scores(rots, m, o, vols, beta_s, beta_f)
        } else {
            Self::equivolumetric(rots, m, o, beta_s, beta_f)
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// Scores `rotations` (taken as an equivolumetric cover of SO(3)).
/// `β_f = 0` gives the shape-only ("S") distribution, `β_s = 0` the
/// feature-only ("F") one.
pub fn tabulate_distribution(
    model: &ShapeModel,
    cloud: &ImageAlignedCloud,
    rotations: &[Rotation],
    beta_s: f64,
    beta_f: f64,
) -> Result<ScoredDistribution> {
    let (m, o) = score_rotations(model, cloud, rotations)?;
    ScoredDistribution::equivolumetric(rotations.to_vec(), m, o, beta_s, beta_f)
}

/// A tabulation over grid cells of possibly different levels that together
/// partition SO(3).
#[derive(Clone, Debug)]
pub struct CellDistribution {
    pub cells: Vec<GridCell>,
    pub dist: ScoredDistribution,
}

impl CellDistribution {
    /// Probability mass of every cell of the full grid at `level`, indexed as
    /// in `generate_grid(level)`. Finer cells add to their ancestor; coarser
    /// cells spread evenly over their descendants.
    pub fn masses_at_level(&self, level: u32) -> Result<Vec<f64>> {
        if level > MAX_MATERIALIZED_LEVEL {
            return Err(Error::GridTooLarge {
                level,
                max: MAX_MATERIALIZED_LEVEL,
            });
        }
        let mut mass = vec![0.0; grid_size(level)];
        for (c, p) in self.cells.iter().zip(self.dist.probs()) {
            match c.ancestor(level) {
                Some(a) => mass[a.index()] += p,
                None => {
                    let desc = c.children(level - c.level);
                    let share = p / desc.len() as f64;
                    desc.iter().for_each(|d| mass[d.index()] += share);
                }
            }
        }
        Ok(mass)
    }
}

/// Tabulates the full grid at `base_level`, then `refine_rounds` times
/// replaces the `top_k` highest-density cells by their 8 children and scores
/// those. The result still partitions SO(3), so probabilities stay
/// normalized with each cell's own volume.
pub fn precompute_gt_distribution(
    model: &ShapeModel,
    cloud: &ImageAlignedCloud,
    base_level: u32,
    refine_rounds: u32,
    top_k: usize,
    beta_s: f64,
    beta_f: f64,
) -> Result<CellDistribution> {
    let grid = generate_grid(base_level)?;
    let mut cells = grid.cells().to_vec();
    let mut rotations = grid.into_rotations();
    let (mut m, mut o) = score_rotations(model, cloud, &rotations)?;
    let volumes = |cells: &[GridCell]| cells.iter().map(GridCell::volume).collect::<Vec<_>>();
    let mut dist = ScoredDistribution::from_scores(rotations.clone(), m.clone(), o.clone(), volumes(&cells), beta_s, beta_f)?;
    for _ in 0..refine_rounds {
        let mut refine = vec![false; cells.len()];
        for i in dist.top_indices(top_k) {
            refine[i] = true;
        }
        let children: Vec<GridCell> = cells
            .iter()
            .zip(&refine)
            .filter(|(_, r)| **r)
            .flat_map(|(c, _)| c.children(1))
            .collect();
        let child_rot = exec::map_slice(&children, GridCell::rotation);
        let (cm, co) = score_rotations(model, cloud, &child_rot)?;
        // Replace each refined cell by its children, in place.
        let n_new = cells.len() + children.len() - children.len() / 8;
        let (mut nc, mut nr, mut nm, mut no) = (
            Vec::with_capacity(n_new),
            Vec::with_capacity(n_new),
            Vec::with_capacity(n_new),
            Vec::with_capacity(n_new),
        );
        let mut k = 0;
        for i in 0..cells.len() {
            if refine[i] {
                nc.extend_from_slice(&children[k..k + 8]);
                nr.extend_from_slice(&child_rot[k..k + 8]);
                nm.extend_from_slice(&cm[k..k + 8]);
                no.extend_from_slice(&co[k..k + 8]);
                k += 8;
            } else {
                nc.push(cells[i]);
                nr.push(rotations[i]);
                nm.push(m[i]);
                no.push(o[i]);
            }
        }
        (cells, rotations, m, o) = (nc, nr, nm, no);
        dist = ScoredDistribution::from_scores(rotations.clone(), m.clone(), o.clone(), volumes(&cells), beta_s, beta_f)?;
    }
    Ok(CellDistribution { cells, dist })
}

/// Mode-focused training batch: `n_mode` draws without replacement from the
/// `top_pool` highest-density rotations, `n_uniform` Haar draws, then `r_gt`.
pub fn mode_focused_sample(
    dist: &ScoredDistribution,
    r_gt: &Rotation,
    top_pool: usize,
    n_mode: usize,
    n_uniform: usize,
    seed: u64,
) -> Result<Vec<Rotation>> {
    if top_pool > dist.len() {
        return Err(Error::PoolTooLarge {
            pool: top_pool,
            len: dist.len(),
        });
    }
    let pool = dist.top_indices(top_pool);
    sample_from_pool(dist.rotations(), &pool, r_gt, n_mode, n_uniform, seed)
}

/// The sampling half of [`mode_focused_sample`], with a precomputed pool.
pub fn sample_from_pool(
    rotations: &[Rotation],
    pool: &[usize],
    r_gt: &Rotation,
    n_mode: usize,
    n_uniform: usize,
    seed: u64,
) -> Result<Vec<Rotation>> {
    if n_mode > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n_mode} mode rotations without replacement from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_mode + n_uniform + 1);
    out.extend(index::sample(&mut rng, pool.len(), n_mode).into_iter().map(|k| rotations[pool[k]]));
    out.extend(sample_haar_with(&mut rng, n_uniform));
    out.push(*r_gt);
    Ok(out)
}

/// A local maximum of a distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub index: usize,
    pub rotation: Rotation,
    pub density: f64,
    /// Probability of the entries assigned to this mode.
    pub mass: f64,
}

/// Peaks of the density: entries above `rel_threshold × max density`, taken
/// in decreasing density and kept only if farther than `merge_radius`
/// (radians) from every peak already kept. Every entry within `mass_radius`
/// of some peak contributes its probability to the nearest one.
pub fn find_modes(dist: &ScoredDistribution, rel_threshold: f64, merge_radius: f64, mass_radius: f64) -> Vec<Mode> {
    let max = dist.densities[dist.argmax()];
    let mut cand: Vec<usize> = (0..dist.len()).filter(|&i| dist.densities[i] >= rel_threshold * max).collect();
    cand.sort_by(|&a, &b| dist.densities[b].total_cmp(&dist.densities[a]).then(a.cmp(&b)));
    let merge_cos = (merge_radius / 2.0).cos();
    let mut modes: Vec<Mode> = Vec::new();
    for i in cand {
        let r = dist.rotations[i];
        if modes.iter().all(|m| m.rotation.abs_dot(&r) < merge_cos) {
            modes.push(Mode {
                index: i,
                rotation: r,
                density: dist.densities[i],
                mass: 0.0,
            });
        }
    }
    let mass_cos = (mass_radius / 2.0).cos();
    let assigned = exec::map_slice(&dist.rotations, |r| {
        let mut best = (usize::MAX, mass_cos);
        for (k, m) in modes.iter().enumerate() {
            let d = m.rotation.abs_dot(r);
            if d >= best.1 {
                best = (k, d);
            }
        }
        best.0
    });
    for (i, k) in assigned.into_iter().enumerate() {
        if k != usize::MAX {
            modes[k].mass += dist.probs[i];
        }
    }
    modes
}

/// Connected components of `rotations` under the relation "geodesic distance
/// ≤ radius". Returns a component label per entry, labels numbered from 0 in
/// order of first appearance.
pub fn connected_components(rotations: &[Rotation], radius: f64) -> Vec<usize> {
    // Unit quaternions within angle θ are within chord 2·sin(θ/4) (for the
    // sign-aligned pair); bucket the canonical quaternions on a 4-D lattice of
    // that pitch and test neighbouring buckets, including the antipodal ones.
    let chord = 2.0 * (radius / 4.0).sin();
    let key = |q: [f64; 4]| q.map(|c| (c / chord).floor() as i64);
    let mut buckets: HashMap<[i64; 4], Vec<usize>> = HashMap::new();
    for (i, r) in rotations.iter().enumerate() {
        buckets.entry(key(r.wxyz())).or_default().push(i);
    }
    let mut parent: Vec<usize> = (0..rotations.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let cos_half = (radius / 2.0).cos();
    for (i, r) in rotations.iter().enumerate() {
        let q = r.wxyz();
        for base in [q, q.map(|c| -c)] {
            let k = key(base);
            for d in 0..81 {
                let off = [d % 3, d / 3 % 3, d / 9 % 3, d / 27].map(|o| o as i64 - 1);
                let nk = [k[0] + off[0], k[1] + off[1], k[2] + off[2], k[3] + off[3]];
                if let Some(list) = buckets.get(&nk) {
                    for &j in list {
                        if j > i && r.abs_dot(&rotations[j]) >= cos_half {
                            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                            if a != b {
                                parent[a.max(b)] = a.min(b);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut labels = vec![0; rotations.len()];
    let mut ids: HashMap<usize, usize> = HashMap::new();
    for (i, label) in labels.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        let next = ids.len();
        *label = *ids.entry(root).or_insert(next);
    }
    labels
}

/// Geodesic distance from `r` to the circle `{base·Rot(axis, α)}`, optionally
/// unioned with its flipped copy `{base·Rot(axis, α)·F}` for a half-turn `F`
/// about an axis perpendicular to `axis`.
pub fn distance_to_axial_set(r: &Rotation, base: &Rotation, axis: &Vec3, flip: bool) -> f64 {
    // In the frame of `base`, d = base⁻¹·r. The best α aligns the rotation
    // Rot(axis, −α)·d with the identity; for unit quaternion d = (w, v) the
    // optimal residual angle is 2·acos(√(w² + (v·a)²)).
    let a = axis.normalize();
    let d = base.inverse().compose(r);
    let best = |d: &Rotation| {
        let [w, x, y, z] = d.wxyz();
        let c = (w * w + (x * a.x + y * a.y + z * a.z).powi(2)).sqrt().min(1.0);
        2.0 * c.acos()
    };
    let mut out = best(&d);
    if flip {
        let perp = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let perp = (perp - a * a.dot(&perp)).normalize();
        let f = Rotation::from_axis_angle(perp, PI);
        out = out.min(best(&d.compose(&f.inverse())));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::mean_nn_spacing;
    use crate::rotation::{geodesic_angle, sample_haar};

    fn cube_cloud(r_gt: &Rotation) -> (ShapeModel, ImageAlignedCloud) {
        let m = ShapeModel::preset("cube").unwrap();
        let cam = CameraIntrinsics::default_for(&m);
        let c = build_image_aligned_cloud(&m, r_gt, &cam, 100, 7).unwrap();
        (m, c)
    }

    fn generic_pose() -> Rotation {
        Rotation::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 0.9)
    }

    #[test]
    fn identity_cloud_is_in_the_model_frame() {
        let m = ShapeModel::preset("cube").unwrap();
        let cam = CameraIntrinsics::default_for(&m);
        let pts = sample_visible_points(&m, &Rotation::identity(), &cam, 100, 7).unwrap();
        let c = build_image_aligned_cloud(&m, &Rotation::identity(), &cam, 100, 7).unwrap();
        assert_eq!(c.points(), pts.as_slice());
    }

    #[test]
    fn features_round_trip() {
        let r = generic_pose();
        let (m, c) = cube_cloud(&r);
        for j in 0..c.len() {
            let f = m.canonical_feature(&r.inverse_rotate(&c.points()[j]));
            for (a, b) in f.iter().zip(c.feature(j)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Oracle: each cloud point, translated into the camera frame, lies on the
    /// ray through a pixel centre at the depth where that ray enters the
    /// (rotated) cube, found by the slab method.
    #[test]
    fn cloud_matches_slab_raycast() {
        let r = Rotation::rz(PI / 2.0);
        let (m, c) = cube_cloud(&r);
        let cam = CameraIntrinsics::default_for(&m);
        let rinv = r.inverse();
        for x in c.points() {
            let pc = x + Vec3::new(0.0, 0.0, cam.t_z);
            let (u, v) = (cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy);
            assert!((u - u.floor() - 0.5).abs() < 1e-9 && (v - v.floor() - 0.5).abs() < 1e-9);
            let dir = Vec3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
            // Ray in the model frame: origin R⁻¹(−t), direction R⁻¹·dir.
            let o = rinv.rotate(&Vec3::new(0.0, 0.0, -cam.t_z));
            let d = rinv.rotate(&dir);
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                let (a, b) = ((-1.0 - o[k]) / d[k], (1.0 - o[k]) / d[k]);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
            assert!(t0 <= t1);
            assert!((pc.z - t0).abs() < 1e-9, "{} vs {}", pc.z, t0);
        }
    }

    #[test]
    fn scores_vanish_on_the_symmetry_orbit() {
        let r = generic_pose();
        let (m, c) = cube_cloud(&r);
        let tol = 0.5 * (4.0 * 3f64.sqrt() + 3f64.sqrt()) / 300.0;
        for g in m.symmetry().elements().unwrap() {
            let rg = r.compose(g);
            assert!(sdf_score(&m, &c, &rg).unwrap() < 1e-9);
            assert!(feat_score(&m, &c, &rg) < 1e-9);
        }
        assert!(sdf_score(&m, &c, &r).unwrap() <= tol);
        assert!(feat_score(&m, &c, &r) < 1e-12);
    }

    #[test]
    fn sdf_score_is_max_abs_pointwise() {
        let r = Rotation::identity();
        let (m, c) = cube_cloud(&r);
        let cand = Rotation::rz(PI / 4.0);
        let oracle = c
            .points()
            .iter()
            .map(|x| {
                let y = cand.inverse_rotate(x);
                let q = y.abs() - Vec3::repeat(1.0);
                (q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)).abs()
            })
            .fold(0.0, f64::max);
        assert!((sdf_score(&m, &c, &cand).unwrap() - oracle).abs() < 1e-12);
        assert!(oracle > 0.1);
    }

    #[test]
    fn marker_breaks_sphere_symmetry() {
        let m = ShapeModel::preset("sphereX").unwrap();
        let cam = CameraIntrinsics::default_for(&m);
        // Look at the marker (model +z) from the camera: rotate +z toward −z_cam.
        let r = Rotation::rx(PI);
        let c = build_image_aligned_cloud(&m, &r, &cam, 100, 3).unwrap();
        assert!((0..c.len()).any(|j| c.feature(j)[3] == 1.0));
        let antipode_axis = Rotation::from_axis_angle(-m.marker().unwrap().center(), PI);
        assert!(feat_score(&m, &c, &r.compose(&antipode_axis)) > 0.0);
        let other = Rotation::from_axis_angle(Vec3::x(), PI);
        assert!(feat_score(&m, &c, &r.compose(&other)) > 0.1);
        assert!(feat_score(&m, &c, &r) < 1e-12);
    }

    #[test]
    fn distribution_invariants() {
        let rots = sample_haar(500, 1);
        let m: Vec<f64> = (0..500).map(|i| (i % 17) as f64 * 0.01).collect();
        let o: Vec<f64> = (0..500).map(|i| (i % 5) as f64 * 0.02).collect();
        let d = ScoredDistribution::equivolumetric(rots.clone(), m.clone(), o.clone(), 50.0, 50.0).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..500 {
            assert!((d.weights()[i] - (-50.0 * m[i] - 50.0 * o[i]).exp()).abs() < 1e-12);
            assert!((d.densities()[i] - d.probs()[i] / (PI * PI / 500.0)).abs() < 1e-12 * d.densities()[i]);
        }
        let single = ScoredDistribution::equivolumetric(vec![rots[0]], vec![3.0], vec![1.0], 50.0, 50.0).unwrap();
        assert_eq!(single.probs(), &[1.0]);
        // Huge scores underflow the raw weights but not the probabilities.
        let far = ScoredDistribution::equivolumetric(rots[..2].to_vec(), vec![100.0, 100.01], vec![0.0, 0.0], 50.0, 0.0).unwrap();
        assert!(far.weights()[0] == 0.0 && (far.probs()[0] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-12);
        // Sharpening: entropy non-increasing in β.
        let mut last = f64::INFINITY;
        for beta in [0.0, 1.0, 5.0, 20.0, 50.0, 200.0] {
            let e = d.with_temperatures(beta, 50.0).unwrap().entropy();
            assert!(e <= last + 1e-12);
            last = e;
        }
        assert!(ScoredDistribution::equivolumetric(vec![], vec![], vec![], 1.0, 1.0).is_err());
        assert!(ScoredDistribution::equivolumetric(rots[..2].to_vec(), vec![0.0], vec![0.0, 0.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rots = sample_haar(20, 2);
        let m: Vec<f64> = (0..20).map(|i| i as f64 * 0.013).collect();
        let o: Vec<f64> = (0..20).map(|i| i as f64 * 0.007).collect();
        let d = ScoredDistribution::equivolumetric(rots, m, o, 50.0, 25.0).unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("# beta_s=50 beta_f=25 n=20 volume=pi^2\nqw,qx,qy,qz,m_sdf,o_feat,weight,prob\n"));
        let back = ScoredDistribution::from_csv_str(&text).unwrap();
        for i in 0..20 {
            assert!((back.probs()[i] - d.probs()[i]).abs() < 1e-15);
            assert!(back.rotations()[i].angle_to(&d.rotations()[i]) < 1e-12);
        }
        assert!(ScoredDistribution::from_csv_str("# beta_s=1\nqw\n").is_err());
    }

    #[test]
    fn tabulation_is_symmetry_equivariant() {
        let r = generic_pose();
        let (m, c) = cube_cloud(&r);
        let grid = generate_grid(2).unwrap();
        let d = tabulate_distribution(&m, &c, grid.rotations(), 50.0, 50.0).unwrap();
        // Right-composing the evaluation set by g leaves every probability unchanged.
        for g in m.symmetry().elements().unwrap().iter().step_by(5) {
            let moved: Vec<Rotation> = grid.rotations().iter().map(|q| q.compose(g)).collect();
            let dg = tabulate_distribution(&m, &c, &moved, 50.0, 50.0).unwrap();
            for (a, b) in d.probs().iter().zip(dg.probs()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        // A cloud built from the symmetric pose r·g gives the same tabulation.
        let g = m.symmetry().elements().unwrap()[7];
        let cam = CameraIntrinsics::default_for(&m);
        let cg = build_image_aligned_cloud(&m, &r.compose(&g), &cam, 100, 7).unwrap();
        let dg = tabulate_distribution(&m, &cg, grid.rotations(), 50.0, 50.0).unwrap();
        for (a, b) in d.probs().iter().zip(dg.probs()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn refinement_partitions_and_sharpens() {
        let r = generic_pose();
        let (m, c) = cube_cloud(&r);
        let base = precompute_gt_distribution(&m, &c, 1, 0, 10, 50.0, 50.0).unwrap();
        let flat = tabulate_distribution(&m, &c, generate_grid(1).unwrap().rotations(), 50.0, 50.0).unwrap();
        assert_eq!(base.dist.probs(), flat.probs());
        let refined = precompute_gt_distribution(&m, &c, 1, 3, 200, 50.0, 50.0).unwrap();
        let vol: f64 = refined.dist.volumes().iter().sum();
        assert!((vol - PI * PI).abs() < 1e-9);
        assert_eq!(refined.cells.len(), 576 + 3 * 200 * 7);
        assert!((refined.dist.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let best = refined.dist.rotations()[refined.dist.argmax()];
        let err = m.symmetry().elements().unwrap().iter().map(|g| geodesic_angle(&best, &r.compose(g))).fold(f64::INFINITY, f64::min);
        let base_best = base.dist.rotations()[base.dist.argmax()];
        let base_err = m.symmetry().elements().unwrap().iter().map(|g| geodesic_angle(&base_best, &r.compose(g))).fold(f64::INFINITY, f64::min);
        assert!(err < base_err);

        // Coarsening back to the base level recovers a partition of unity;
        // unrefined cells keep their own mass, split evenly when refining.
        let coarse = refined.masses_at_level(1).unwrap();
        assert!((coarse.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (c, p) in refined.cells.iter().zip(refined.dist.probs()) {
            if c.level == 1 {
                assert_eq!(coarse[c.index()], *p);
            }
        }
        assert_eq!(base.masses_at_level(1).unwrap(), base.dist.probs());
        let split = base.masses_at_level(2).unwrap();
        assert!((split[0] - base.dist.probs()[0] / 8.0).abs() < 1e-18);
        assert!((split.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampler_composition() {
        let rots = sample_haar(100, 3);
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = ScoredDistribution::equivolumetric(rots.clone(), scores, vec![0.0; 100], 1.0, 0.0).unwrap();
        let gt = Rotation::rx(0.2);
        let s = mode_focused_sample(&d, &gt, 20, 10, 5, 9).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(s[15], gt);
        // Mode draws come from the 20 lowest scores, without repetition.
        let mut picked: Vec<usize> = s[..10].iter().map(|r| rots.iter().position(|q| q == r).unwrap()).collect();
        assert!(picked.iter().all(|&i| i < 20));
        picked.sort();
        picked.dedup();
        assert_eq!(picked.len(), 10);
        assert_eq!(mode_focused_sample(&d, &gt, 20, 0, 0, 9).unwrap(), vec![gt]);
        assert_eq!(s, mode_focused_sample(&d, &gt, 20, 10, 5, 9).unwrap());
        assert!(matches!(mode_focused_sample(&d, &gt, 101, 10, 5, 9), Err(Error::PoolTooLarge { .. })));
        assert!(mode_focused_sample(&d, &gt, 5, 10, 5, 9).is_err());
    }

    #[test]
    fn components_of_separated_clusters() {
        let spacing = mean_nn_spacing(&generate_grid(2).unwrap(), 200, 1);
        let mut rots = Vec::new();
        for k in 0..36 {
            rots.push(Rotation::rz(2.0 * PI * k as f64 / 36.0));
        }
        let circle = connected_components(&rots, 0.2);
        assert!(circle.iter().all(|&l| l == 0));
        rots.push(Rotation::rx(PI / 2.0));
        let labels = connected_components(&rots, 0.2);
        assert_eq!(labels[36], 1);
        assert!(spacing > 0.0);
        // Antipodal quaternions (w ≈ 0 on both sides of the sign cut) connect.
        let a = Rotation::from_axis_angle(Vec3::x(), PI - 0.01);
        let b = Rotation::from_axis_angle(Vec3::x(), PI + 0.01);
        assert_eq!(connected_components(&[a, b], 0.05), vec![0, 0]);
    }

    #[test]
    fn axial_set_distance() {
        let base = generic_pose();
        for alpha in [0.0, 1.0, 2.5, -2.0] {
            let on = base.compose(&Rotation::rz(alpha));
            assert!(distance_to_axial_set(&on, &base, &Vec3::z(), false) < 1e-7);
            let flipped = on.compose(&Rotation::rx(PI));
            assert!(distance_to_axial_set(&flipped, &base, &Vec3::z(), true) < 1e-7);
            assert!(distance_to_axial_set(&flipped, &base, &Vec3::z(), false) > 1.0);
        }
        // Brute-force α scan as oracle.
        for r in sample_haar(20, 8) {
            let scan = (0..3600)
                .map(|k| geodesic_angle(&r, &base.compose(&Rotation::rz(2.0 * PI * k as f64 / 3600.0))))
                .fold(f64::INFINITY, f64::min);
            let d = distance_to_axial_set(&r, &base, &Vec3::z(), false);
            assert!(d <= scan + 1e-12 && scan - d < 1e-3);
        }
    }
}
