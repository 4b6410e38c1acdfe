//! Rotation encodings fed to the surrogate network: NeRF-style positional
//! encodings of the matrix entries (`ipdf_pe`) or of a rotated cube
//! (`cube_pe`), and stacked real Wigner-D blocks (`wigner`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{Mat3, Rotation, Vec3};

pub const MAX_WIGNER_DEGREE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    IpdfPe,
    CubePe,
    Wigner,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    #[serde(default = "default_n_freq")]
    pub n_freq: usize,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default)]
    pub include_raw: bool,
}

fn default_n_freq() -> usize {
    3
}

fn default_max_degree() -> usize {
    5
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self::cube_pe(3)
    }
}

impl EncodingSpec {
    pub fn cube_pe(n_freq: usize) -> Self {
        Self {
            kind: EncodingKind::CubePe,
            n_freq,
            max_degree: default_max_degree(),
            include_raw: false,
        }
    }

    pub fn ipdf_pe(n_freq: usize, include_raw: bool) -> Self {
        Self {
            kind: EncodingKind::IpdfPe,
            n_freq,
            max_degree: default_max_degree(),
            include_raw,
        }
    }

    pub fn wigner(max_degree: usize) -> Self {
        Self {
            kind: EncodingKind::Wigner,
            n_freq: default_n_freq(),
            max_degree,
            include_raw: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EncodingKind::IpdfPe | EncodingKind::CubePe if self.n_freq == 0 => Err(
                Error::InvalidArgument("positional encodings need n_freq >= 1".into()),
            ),
            EncodingKind::Wigner if self.max_degree > MAX_WIGNER_DEGREE => {
                Err(Error::InvalidArgument(format!(
                    "wigner max_degree {} exceeds {MAX_WIGNER_DEGREE}",
                    self.max_degree
                )))
            }
            _ => Ok(()),
        }
    }

    /// Length of the encoding vector.
    pub fn dim(&self) -> usize {
        match self.kind {
            EncodingKind::IpdfPe => 18 * self.n_freq + if self.include_raw { 9 } else { 0 },
            EncodingKind::CubePe => 48 * self.n_freq,
            EncodingKind::Wigner => wigner_dim(self.max_degree),
        }
    }

    pub fn encode(&self, r: &Rotation) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(r, &mut out);
        out
    }

    /// Appends the encoding of `r` to `out`.
    pub fn encode_into(&self, r: &Rotation, out: &mut Vec<f64>) {
        match self.kind {
            EncodingKind::IpdfPe => {
                let m = r.matrix().row_major();
                if self.include_raw {
                    out.extend_from_slice(&m);
                }
                nerf_pe_into(&m, self.n_freq, out);
            }
            EncodingKind::CubePe => {
                let verts: Vec<f64> = cube_vertices()
                    .iter()
                    .flat_map(|v| {
                        let w = r.rotate(v);
                        [w.x, w.y, w.z]
                    })
                    .collect();
                for v in verts.chunks(3) {
                    nerf_pe_into(v, self.n_freq, out);
                }
            }
            EncodingKind::Wigner => {
                for block in wigner_blocks(r, self.max_degree) {
                    out.extend_from_slice(&block.data);
                }
            }
        }
    }
}

/// `Σ_{l=0}^{L} (2l+1)²`.
pub fn wigner_dim(max_degree: usize) -> usize {
    (0..=max_degree).map(|l| (2 * l + 1).pow(2)).sum()
}

/// NeRF positional encoding: for each frequency `2^k`, `k = 0..n_freq`, the
/// pairs `(sin(2^k x_i), cos(2^k x_i))` over all components (frequency-major).
pub fn nerf_pe(x: &[f64], n_freq: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() * n_freq);
    nerf_pe_into(x, n_freq, &mut out);
    out
}

fn nerf_pe_into(x: &[f64], n_freq: usize, out: &mut Vec<f64>) {
    for k in 0..n_freq {
        let f = (1u64 << k) as f64;
        for &v in x {
            let (s, c) = (f * v).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
}

/// Cube vertices `(±1, ±1, ±1)/√3`, lexicographic in the sign pattern
/// (`−` before `+`, x slowest).
pub fn cube_vertices() -> [Vec3; 8] {
    let s = 1.0 / 3f64.sqrt();
    let mut out = [Vec3::zeros(); 8];
    for (i, v) in out.iter_mut().enumerate() {
        let sign = |bit: usize| if (i >> bit) & 1 == 1 { s } else { -s };
        *v = Vec3::new(sign(2), sign(1), sign(0));
    }
    out
}

pub fn cube_pe(r: &Rotation, n_freq: usize) -> Vec<f64> {
    EncodingSpec::cube_pe(n_freq).encode(r)
}

pub fn ipdf_pe(r: &Rotation, n_freq: usize, include_raw: bool) -> Vec<f64> {
    EncodingSpec::ipdf_pe(n_freq, include_raw).encode(r)
}

pub fn wigner_encoding(r: &Rotation, max_degree: usize) -> Vec<f64> {
    EncodingSpec::wigner(max_degree).encode(r)
}

/// A square `(2l+1)×(2l+1)` block, row-major, indexed by `m, n ∈ [−l, l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerBlock {
    pub degree: usize,
    pub data: Vec<f64>,
}

impl WignerBlock {
    fn zeros(degree: usize) -> Self {
        let s = 2 * degree + 1;
        Self {
            degree,
            data: vec![0.0; s * s],
        }
    }

    pub fn size(&self) -> usize {
        2 * self.degree + 1
    }

    #[inline]
    pub fn get(&self, m: i64, n: i64) -> f64 {
        let l = self.degree as i64;
        let s = self.size();
        self.data[(m + l) as usize * s + (n + l) as usize]
    }

    #[inline]
    fn set(&mut self, m: i64, n: i64, v: f64) {
        let l = self.degree as i64;
        let s = self.size();
        self.data[(m + l) as usize * s + (n + l) as usize] = v;
    }

    pub fn matmul(&self, other: &WignerBlock) -> WignerBlock {
        let s = self.size();
        let mut out = WignerBlock::zeros(self.degree);
        for i in 0..s {
            for k in 0..s {
                let a = self.data[i * s + k];
                for j in 0..s {
                    out.data[i * s + j] += a * other.data[k * s + j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> WignerBlock {
        let s = self.size();
        let mut out = WignerBlock::zeros(self.degree);
        for i in 0..s {
            for j in 0..s {
                out.data[j * s + i] = self.data[i * s + j];
            }
        }
        out
    }
}

/// Degree-1 block: the rotation matrix in real-harmonic order `(y, z, x)`.
fn degree_one(m: &Mat3) -> WignerBlock {
    // Real harmonic index m ∈ {−1, 0, 1} ↔ Cartesian axis {y, z, x}.
    const AXIS: [usize; 3] = [1, 2, 0];
    let mut b = WignerBlock::zeros(1);
    for (i, &ai) in AXIS.iter().enumerate() {
        for (j, &aj) in AXIS.iter().enumerate() {
            b.data[i * 3 + j] = m[(ai, aj)];
        }
    }
    b
}

/// Real Wigner-D blocks `D^0 .. D^L`, computed by the Ivanic–Ruedenberg
/// recursion from `D^1`.
pub fn wigner_blocks(r: &Rotation, max_degree: usize) -> Vec<WignerBlock> {
    let mut blocks = Vec::with_capacity(max_degree + 1);
    blocks.push(WignerBlock {
        degree: 0,
        data: vec![1.0],
    });
    if max_degree == 0 {
        return blocks;
    }
    let r1 = degree_one(&r.matrix().0);
    blocks.push(r1.clone());
    for l in 2..=max_degree {
        let next = recurse(&r1, &blocks[l - 1], l as i64);
        blocks.push(next);
    }
    blocks
}

fn recurse(r1: &WignerBlock, prev: &WignerBlock, l: i64) -> WignerBlock {
    // Helper P from the recursion; `i ∈ {−1, 0, 1}` selects a row of D^1.
    let p = |i: i64, a: i64, b: i64| -> f64 {
        let ri1 = r1.get(i, 1);
        let rim1 = r1.get(i, -1);
        let ri0 = r1.get(i, 0);
        if b == l {
            ri1 * prev.get(a, l - 1) - rim1 * prev.get(a, -l + 1)
        } else if b == -l {
            ri1 * prev.get(a, -l + 1) + rim1 * prev.get(a, l - 1)
        } else {
            ri0 * prev.get(a, b)
        }
    };
    let u_term = |m: i64, n: i64| p(0, m, n);
    let v_term = |m: i64, n: i64| -> f64 {
        if m == 0 {
            p(1, 1, n) + p(-1, -1, n)
        } else if m > 0 {
            let d: f64 = if m == 1 { 1.0 } else { 0.0 };
            p(1, m - 1, n) * (1.0 + d).sqrt() - p(-1, -m + 1, n) * (1.0 - d)
        } else {
            let d: f64 = if m == -1 { 1.0 } else { 0.0 };
            p(1, m + 1, n) * (1.0 - d) + p(-1, -m - 1, n) * (1.0 + d).sqrt()
        }
    };
    let w_term = |m: i64, n: i64| -> f64 {
        if m > 0 {
            p(1, m + 1, n) + p(-1, -m - 1, n)
        } else {
            p(1, m - 1, n) - p(-1, -m + 1, n)
        }
    };

    let mut out = WignerBlock::zeros(l as usize);
    for m in -l..=l {
        for n in -l..=l {
            let d: f64 = if m == 0 { 1.0 } else { 0.0 };
            let denom = if n.abs() == l {
                (2 * l * (2 * l - 1)) as f64
            } else {
                ((l + n) * (l - n)) as f64
            };
            let am = m.abs();
            let u = (((l + m) * (l - m)) as f64 / denom).sqrt();
            let v = 0.5 * ((1.0 + d) * ((l + am - 1) * (l + am)) as f64 / denom).sqrt() * (1.0 - 2.0 * d);
            let w = -0.5 * (((l - am - 1) * (l - am)) as f64 / denom).sqrt() * (1.0 - d);
            let mut val = 0.0;
            if u != 0.0 {
                val += u * u_term(m, n);
            }
            if v != 0.0 {
                val += v * v_term(m, n);
            }
            if w != 0.0 {
                val += w * w_term(m, n);
            }
            out.set(m, n, val);
        }
    }
    out
}
