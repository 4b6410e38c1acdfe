//! Proper symmetry groups and orbit-canonical coordinates.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{Mat3, Rotation, Vec3};

const LEX_TOL: f64 = 1e-9;

/// Named finite rotation groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    Tetrahedral,
    Octahedral,
    Icosahedral,
    Cyclic(u32),
}

/// The proper symmetry of a shape.
#[derive(Clone, Debug)]
pub enum SymmetrySpec {
    /// A finite rotation group, stored both as rotations and as matrices.
    Finite {
        group: Vec<Rotation>,
        matrices: Vec<Mat3>,
    },
    /// Rotations about `axis`; with `flip`, also the half-turns exchanging
    /// its two ends.
    AxisContinuous { axis: Vec3, flip: bool },
    /// Every rotation (the sphere).
    Full,
}

impl SymmetrySpec {
    /// Validates `group` as a finite rotation group (identity, closure, inverses).
    pub fn finite(group: Vec<Rotation>) -> Result<Self> {
        if group.is_empty() {
            return Err(Error::NotAGroup("empty element list".into()));
        }
        let find = |r: &Rotation| group.iter().position(|g| g.angle_to(r) < 1e-7);
        if find(&Rotation::identity()).is_none() {
            return Err(Error::NotAGroup("identity missing".into()));
        }
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                if group[i].angle_to(&group[j]) < 1e-7 {
                    return Err(Error::NotAGroup(format!("elements {i} and {j} coincide")));
                }
            }
        }
        for (i, a) in group.iter().enumerate() {
            if find(&a.inverse()).is_none() {
                return Err(Error::NotAGroup(format!("inverse of element {i} missing")));
            }
            for (j, b) in group.iter().enumerate() {
                if find(&a.compose(b)).is_none() {
                    return Err(Error::NotAGroup(format!(
                        "product of elements {i} and {j} missing"
                    )));
                }
            }
        }
        let matrices = group.iter().map(|g| snap(g.matrix().0)).collect();
        Ok(Self::Finite { group, matrices })
    }

    pub fn named(name: GroupName) -> Self {
        finite_rotation_group(name)
    }

    pub fn axis(axis: Vec3, flip: bool) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("symmetry axis must be nonzero".into()));
        }
        Ok(Self::AxisContinuous {
            axis: axis / n,
            flip,
        })
    }

    pub fn trivial() -> Self {
        finite_rotation_group(GroupName::Cyclic(1))
    }

    /// Finite group elements, or `None` for continuous symmetry.
    pub fn elements(&self) -> Option<&[Rotation]> {
        match self {
            Self::Finite { group, .. } => Some(group),
            _ => None,
        }
    }

    /// Matrices of a finite group (entries snapped to integers where exact),
    /// in the same order as [`SymmetrySpec::elements`].
    pub fn matrices(&self) -> Option<&[Mat3]> {
        match self {
            Self::Finite { matrices, .. } => Some(matrices),
            _ => None,
        }
    }

    /// Orbit-canonical representative of `p`.
    pub fn canonicalize(&self, p: &Vec3) -> Vec3 {
        match self {
            Self::Finite { matrices, .. } => {
                let mut best = *p;
                for m in matrices {
                    let q = m * p;
                    if lex_cmp(&q, &best) == Ordering::Greater {
                        best = q;
                    }
                }
                best
            }
            Self::AxisContinuous { axis, flip } => {
                let z = axis.dot(p);
                let rho = (p - axis * z).norm();
                Vec3::new(rho, 0.0, if *flip { z.abs() } else { z })
            }
            Self::Full => Vec3::new(p.norm(), 0.0, 0.0),
        }
    }
}

/// Lexicographic comparison treating coordinates within `LEX_TOL` as equal.
fn lex_cmp(a: &Vec3, b: &Vec3) -> Ordering {
    for k in 0..3 {
        let d = a[k] - b[k];
        if d > LEX_TOL {
            return Ordering::Greater;
        }
        if d < -LEX_TOL {
            return Ordering::Less;
        }
    }
    Ordering::Equal
}

/// Rounds entries within 1e-12 of an integer so signed-permutation groups act exactly.
fn snap(mut m: Mat3) -> Mat3 {
    for v in m.iter_mut() {
        let r = v.round();
        if (*v - r).abs() < 1e-12 {
            *v = r;
        }
    }
    m
}

/// Closes `generators` under composition.
fn closure(generators: &[Rotation]) -> Vec<Rotation> {
    let mut group = vec![Rotation::identity()];
    let mut queue: VecDeque<Rotation> = VecDeque::from([Rotation::identity()]);
    while let Some(a) = queue.pop_front() {
        for g in generators {
            let c = a.compose(g);
            if !group.iter().any(|h| h.angle_to(&c) < 1e-7) {
                group.push(c);
                queue.push_back(c);
            }
        }
    }
    group
}

/// Builds a named finite group from standard generators.
///
/// Generators: cyclic permutation of axes (3-fold about (1,1,1)) together with
/// a half-turn about x (tetrahedral), a quarter-turn about z (octahedral), or a
/// half-turn about x and a 5-fold turn about (0, 1, φ) (icosahedral). Cyclic
/// groups turn about z.
pub fn finite_rotation_group(name: GroupName) -> SymmetrySpec {
    let cyc = Rotation::from_matrix(&Mat3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0));
    let half_x = Rotation::rx(std::f64::consts::PI);
    let generators = match name {
        GroupName::Tetrahedral => vec![cyc, half_x],
        GroupName::Octahedral => vec![cyc, Rotation::rz(std::f64::consts::FRAC_PI_2)],
        GroupName::Icosahedral => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let five = Rotation::from_axis_angle(Vec3::new(0.0, 1.0, phi), 0.4 * std::f64::consts::PI);
            vec![cyc, half_x, five]
        }
        GroupName::Cyclic(n) => {
            let n = n.max(1);
            vec![Rotation::rz(2.0 * std::f64::consts::PI / n as f64)]
        }
    };
    let group = closure(&generators);
    let matrices = group.iter().map(|g| snap(g.matrix().0)).collect();
    SymmetrySpec::Finite { group, matrices }
}
