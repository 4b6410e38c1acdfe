//! Hierarchical equivolumetric grids on SO(3).
//!
//! A level-ℓ grid crosses the 12·4^ℓ HEALPix pixel centres of the sphere
//! (`nside = 2^ℓ`) with 6·2^ℓ in-plane tilts, giving 72·8^ℓ rotations of equal
//! Haar volume π²/N. A cell `(pixel, tilt)` maps to `Rz(φ)·Ry(θ)·Rz(ψ)·B`, where
//! `(θ, φ)` is the pixel centre, `ψ = 2π(tilt + ½)/(6·2^ℓ)` and `B = Rx(60°)` is
//! a fixed body-frame offset that keeps the identity away from the Hopf
//! coordinate pole (right multiplication preserves Haar volume).
//!
//! Pixels use the nested numbering, so the four children of pixel `p` at the
//! next level are `4p..4p+4` and the two child tilts of `t` are `2t, 2t+1`:
//! refining every cell of a level-ℓ grid reproduces the level-(ℓ+1) grid.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::rotation::Rotation;

/// Highest level [`generate_grid`] will materialize (2 359 296 rotations).
pub const MAX_MATERIALIZED_LEVEL: u32 = 5;

/// Total Haar volume of SO(3) under the normalization used throughout.
pub const SO3_VOLUME: f64 = PI * PI;

/// Number of rotations in a full grid at `level`.
pub fn grid_size(level: u32) -> usize {
    72usize << (3 * level)
}

/// Haar volume of a single cell at `level`.
pub fn cell_volume(level: u32) -> f64 {
    SO3_VOLUME / grid_size(level) as f64
}

/// One cell of the hierarchical grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub level: u32,
    /// Nested HEALPix pixel index at `nside = 2^level`.
    pub pixel: u64,
    pub tilt: u64,
}

impl GridCell {
    pub fn rotation(&self) -> Rotation {
        let nside = 1u64 << self.level;
        let (z, phi) = pix2zphi_nest(nside, self.pixel);
        let n_tilt = 6u64 << self.level;
        let psi = 2.0 * PI * (self.tilt as f64 + 0.5) / n_tilt as f64;
        hopf_rotation(z, phi, psi)
    }

    pub fn volume(&self) -> f64 {
        cell_volume(self.level)
    }

    /// The cell at `level` (≤ own level) containing this one.
    pub fn ancestor(&self, level: u32) -> Option<GridCell> {
        let up = self.level.checked_sub(level)?;
        Some(GridCell {
            level,
            pixel: self.pixel >> (2 * up),
            tilt: self.tilt >> up,
        })
    }

    /// Position in [`generate_grid`]`(self.level)`.
    pub fn index(&self) -> usize {
        (self.pixel * (6u64 << self.level) + self.tilt) as usize
    }

    /// The `8^sub_levels` descendants of this cell, `sub_levels` levels down.
    pub fn children(&self, sub_levels: u32) -> Vec<GridCell> {
        let mut out = vec![*self];
        for _ in 0..sub_levels {
            out = out
                .iter()
                .flat_map(|c| {
                    (0..4u64).flat_map(move |a| {
                        (0..2u64).map(move |b| GridCell {
                            level: c.level + 1,
                            pixel: 4 * c.pixel + a,
                            tilt: 2 * c.tilt + b,
                        })
                    })
                })
                .collect();
        }
        out
    }
}

/// `Rz(φ)·Ry(θ)·Rz(ψ)·B` with `cos θ = z`, built directly as a quaternion.
fn hopf_rotation(z: f64, phi: f64, psi: f64) -> Rotation {
    let c = ((1.0 + z) * 0.5).max(0.0).sqrt();
    let s = ((1.0 - z) * 0.5).max(0.0).sqrt();
    let (sp, cp) = ((phi + psi) * 0.5).sin_cos();
    let (sm, cm) = ((phi - psi) * 0.5).sin_cos();
    let h = nalgebra::Quaternion::new(c * cp, -s * sm, s * cm, c * sp);
    // B = Rx(π/3): (cos π/6, sin π/6, 0, 0).
    let b = nalgebra::Quaternion::new(0.75f64.sqrt(), 0.5, 0.0, 0.0);
    Rotation::from_quaternion_unchecked(h * b)
}

/// Extracts the even bits of `v` (bit-deinterleave).
fn compress_bits(mut v: u64) -> u64 {
    v &= 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v >> 4)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v >> 8)) & 0x0000_ffff_0000_ffff;
    v = (v | (v >> 16)) & 0x0000_0000_ffff_ffff;
    v
}

const JRLL: [i64; 12] = [2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4];
const JPLL: [i64; 12] = [1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7];

/// Centre `(z = cos θ, φ)` of a nested-scheme HEALPix pixel.
pub fn pix2zphi_nest(nside: u64, pix: u64) -> (f64, f64) {
    let npface = nside * nside;
    let npix = 12 * npface;
    let face = (pix / npface) as usize;
    let ipf = pix % npface;
    let ix = compress_bits(ipf) as i64;
    let iy = compress_bits(ipf >> 1) as i64;
    let ns = nside as i64;
    let fact2 = 4.0 / npix as f64;

    let jr = JRLL[face] * ns - ix - iy - 1;
    let (nr, z, kshift) = if jr < ns {
        (jr, 1.0 - (jr * jr) as f64 * fact2, 0)
    } else if jr > 3 * ns {
        let nr = 4 * ns - jr;
        (nr, (nr * nr) as f64 * fact2 - 1.0, 0)
    } else {
        let fact1 = (2 * ns) as f64 * fact2;
        (ns, (2 * ns - jr) as f64 * fact1, (jr - ns) & 1)
    };

    let mut jp = (JPLL[face] * nr + ix - iy + 1 + kshift) / 2;
    if jp > 4 * ns {
        jp -= 4 * ns;
    }
    if jp < 1 {
        jp += 4 * ns;
    }
    let phi = (jp as f64 - (kshift + 1) as f64 * 0.5) * (FRAC_PI_2 / nr as f64);
    (z, phi)
}

/// A set of grid cells with their rotations.
///
/// Full grids (from [`generate_grid`]) hold all 72·8^ℓ cells of one level.
/// Refined grids (from [`refine_top_cells`]) hold a subset of finer cells and
/// record, for each, the index of its ancestor in the grid it was refined from.
#[derive(Clone, Debug)]
pub struct So3Grid {
    level: u32,
    cells: Vec<GridCell>,
    rotations: Vec<Rotation>,
    parent_index: Option<Vec<usize>>,
}

impl So3Grid {
    /// Builds a grid from arbitrary cells. `level` is the finest cell level.
    pub fn from_cells(cells: Vec<GridCell>) -> Self {
        let level = cells.iter().map(|c| c.level).max().unwrap_or(0);
        let rotations = exec::map_slice(&cells, GridCell::rotation);
        Self {
            level,
            cells,
            rotations,
            parent_index: None,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
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

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn parent_index(&self) -> Option<&[usize]> {
        self.parent_index.as_deref()
    }

    /// Per-entry Haar cell volumes.
    pub fn volumes(&self) -> Vec<f64> {
        self.cells.iter().map(GridCell::volume).collect()
    }

    pub fn into_rotations(self) -> Vec<Rotation> {
        self.rotations
    }

    /// True when this is a complete single-level grid.
    pub fn is_full(&self) -> bool {
        self.parent_index.is_none()
            && self.cells.len() == grid_size(self.level)
            && self.cells.iter().all(|c| c.level == self.level)
    }
}

/// Full equivolumetric grid at `level` (72·8^level rotations).
pub fn generate_grid(level: u32) -> Result<So3Grid> {
    if level > MAX_MATERIALIZED_LEVEL {
        return Err(Error::GridTooLarge {
            level,
            max: MAX_MATERIALIZED_LEVEL,
        });
    }
    let n_tilt = 6u64 << level;
    let n = grid_size(level);
    let cells: Vec<GridCell> = (0..n as u64)
        .map(|i| GridCell {
            level,
            pixel: i / n_tilt,
            tilt: i % n_tilt,
        })
        .collect();
    Ok(So3Grid::from_cells(cells))
}

/// Index of the grid rotation nearest to `r` (smallest index on ties).
pub fn nearest_index(grid: &So3Grid, r: &Rotation) -> usize {
    nearest_in(grid.rotations(), r)
}

/// Nearest rotation in an arbitrary slice by linear scan.
pub fn nearest_in(rotations: &[Rotation], r: &Rotation) -> usize {
    assert!(!rotations.is_empty(), "nearest lookup in an empty set");
    exec::argmin_by_key(rotations.len(), |i| -rotations[i].abs_dot(r))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Indices of the `top_k` largest weights, ordered by weight descending and
/// then by index ascending.
pub(crate) fn top_k_indices(weights: &[f64], top_k: usize) -> Vec<usize> {
    let k = top_k.min(weights.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| {
        weights[*b]
            .partial_cmp(&weights[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Subdivides the `top_k` highest-weight cells of `grid` by `sub_levels`
/// levels, returning their deduplicated descendants.
pub fn refine_top_cells(
    grid: &So3Grid,
    weights: &[f64],
    top_k: usize,
    sub_levels: u32,
) -> Result<So3Grid> {
    if weights.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "weights vs grid",
            left: weights.len(),
            right: grid.len(),
        });
    }
    if top_k > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "top_k {top_k} exceeds grid size {}",
            grid.len()
        )));
    }
    if sub_levels == 0 {
        return Err(Error::InvalidArgument("sub_levels must be >= 1".into()));
    }
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    let mut parents = Vec::new();
    for i in top_k_indices(weights, top_k) {
        for c in grid.cells[i].children(sub_levels) {
            if seen.insert(c) {
                cells.push(c);
                parents.push(i);
            }
        }
    }
    let mut out = So3Grid::from_cells(cells);
    out.parent_index = Some(parents);
    Ok(out)
}

/// Mean geodesic distance (radians) from grid points to their nearest other
/// grid point, estimated over up to `sample` points chosen with `seed`
/// (all points when the grid is no larger than `sample`).
pub fn mean_nn_spacing(grid: &So3Grid, sample: usize, seed: u64) -> f64 {
    let rs = grid.rotations();
    let n = rs.len();
    if n < 2 {
        return 0.0;
    }
    let picks: Vec<usize> = if n <= sample {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, n, sample).into_vec()
    };
    let dists = exec::map_slice(&picks, |&i| {
        let mut best = 0.0f64;
        for (j, r) in rs.iter().enumerate() {
            if j != i {
                best = best.max(r.abs_dot(&rs[i]));
            }
        }
        2.0 * best.min(1.0).acos()
    });
    dists.iter().sum::<f64>() / dists.len() as f64
}
