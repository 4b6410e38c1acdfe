//! Evaluation metrics: grid log-likelihood, spread, recall at an angular
//! threshold, and confidence-threshold accuracy curves.

use serde::Serialize;

use crate::distribution::{distance_to_axial_set, ScoredDistribution};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{cell_volume, nearest_in, nearest_index, So3Grid};
use crate::rotation::{geodesic_angle, Rotation, Vec3};
use crate::shape::SymmetrySpec;

/// The set of rotations equivalent to a ground-truth pose.
#[derive(Clone, Debug)]
pub enum GtSet {
    Discrete(Vec<Rotation>),
    /// `{base·Rot(axis, α)}`, plus its half-turned copy when `flip`.
    Axial { base: Rotation, axis: Vec3, flip: bool },
    /// Every rotation is equivalent (the sphere).
    All,
}

impl GtSet {
    /// All poses indistinguishable from `r_gt` under `sym`: `r_gt·g`.
    pub fn from_symmetry(r_gt: &Rotation, sym: &SymmetrySpec) -> Self {
        match sym {
            SymmetrySpec::Finite { group, .. } => Self::Discrete(group.iter().map(|g| r_gt.compose(g)).collect()),
            SymmetrySpec::AxisContinuous { axis, flip } => Self::Axial {
                base: *r_gt,
                axis: *axis,
                flip: *flip,
            },
            SymmetrySpec::Full => Self::All,
        }
    }

    /// Geodesic distance (radians) from `r` to the set.
    pub fn distance(&self, r: &Rotation) -> f64 {
        match self {
            Self::Discrete(set) => set.iter().map(|g| geodesic_angle(r, g)).fold(f64::INFINITY, f64::min),
            Self::Axial { base, axis, flip } => distance_to_axial_set(r, base, axis, *flip),
            Self::All => 0.0,
        }
    }

    /// Finite representatives: the set itself, or `n` evenly spaced points on
    /// each circle of a continuous set. `All` has none.
    pub fn representatives(&self, n: usize) -> Vec<Rotation> {
        match self {
            Self::Discrete(set) => set.clone(),
            Self::Axial { base, axis, flip } => {
                let circle: Vec<Rotation> = (0..n)
                    .map(|k| base.compose(&Rotation::from_axis_angle(*axis, 2.0 * std::f64::consts::PI * k as f64 / n as f64)))
                    .collect();
                if !flip {
                    return circle;
                }
                let a = axis.normalize();
                let perp = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                let f = Rotation::from_axis_angle(perp - a * a.dot(&perp), std::f64::consts::PI);
                let flipped: Vec<Rotation> = circle.iter().map(|r| r.compose(&f)).collect();
                circle.into_iter().chain(flipped).collect()
            }
            Self::All => Vec::new(),
        }
    }
}

/// Mean log density (nats) at the grid entries nearest to each ground truth.
pub fn log_likelihood(dist: &ScoredDistribution, gt_set: &[Rotation]) -> Result<f64> {
    if gt_set.is_empty() {
        return Err(Error::InvalidArgument("log-likelihood needs at least one ground truth".into()));
    }
    let total: f64 = gt_set
        .iter()
        .map(|g| dist.densities()[nearest_in(dist.rotations(), g)].ln())
        .sum();
    Ok(total / gt_set.len() as f64)
}

/// Mean log density (nats) of a histogram over the full grid (`masses[i]`
/// is the probability of cell `i`), read at the cells nearest to each
/// ground truth.
pub fn log_likelihood_masses(grid: &So3Grid, masses: &[f64], gt_set: &[Rotation]) -> Result<f64> {
    if masses.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "cell masses vs grid",
            left: masses.len(),
            right: grid.len(),
        });
    }
    if gt_set.is_empty() {
        return Err(Error::InvalidArgument("log-likelihood needs at least one ground truth".into()));
    }
    let vol = cell_volume(grid.level());
    let total: f64 = gt_set.iter().map(|g| (masses[nearest_index(grid, g)] / vol).ln()).sum();
    Ok(total / gt_set.len() as f64)
}

/// Expected angular distance to the ground-truth set, in degrees.
pub fn spread(dist: &ScoredDistribution, gt: &GtSet) -> f64 {
    let d = exec::map_range(dist.len(), |i| dist.probs()[i] * gt.distance(&dist.rotations()[i]));
    d.iter().sum::<f64>().to_degrees()
}

/// Fraction of estimates within `theta_deg` of their ground truth. With a
/// symmetry group, the error is the minimum over `gt·g`.
pub fn ar_at_threshold(estimates: &[Rotation], gts: &[Rotation], theta_deg: f64, group: Option<&[Rotation]>) -> Result<f64> {
    if estimates.len() != gts.len() {
        return Err(Error::LengthMismatch {
            what: "estimates vs ground truths",
            left: estimates.len(),
            right: gts.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("recall needs at least one estimate".into()));
    }
    let hits = estimates
        .iter()
        .zip(gts)
        .filter(|(e, g)| symmetric_error(e, g, group).to_degrees() < theta_deg)
        .count();
    Ok(hits as f64 / estimates.len() as f64)
}

/// `min_g geodesic(e, gt·g)` in radians (plain geodesic without a group).
pub fn symmetric_error(estimate: &Rotation, gt: &Rotation, group: Option<&[Rotation]>) -> f64 {
    match group {
        Some(gs) => gs
            .iter()
            .map(|g| geodesic_angle(estimate, &gt.compose(g)))
            .fold(f64::INFINITY, f64::min),
        None => geodesic_angle(estimate, gt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub retained: f64,
    /// `None` when no sample survives the threshold.
    pub accuracy: Option<f64>,
}

/// For each confidence level `t` (ascending): fraction of samples with
/// confidence ≥ t, and the fraction of those with error < `theta_correct_deg`.
pub fn threshold_accuracy_curve(
    confidences: &[f64],
    errors_deg: &[f64],
    theta_correct_deg: f64,
    levels: &[f64],
) -> Result<Vec<CurvePoint>> {
    if confidences.len() != errors_deg.len() {
        return Err(Error::LengthMismatch {
            what: "confidences vs errors",
            left: confidences.len(),
            right: errors_deg.len(),
        });
    }
    if levels.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("confidence levels must be sorted ascending".into()));
    }
    let n = confidences.len();
    Ok(levels
        .iter()
        .map(|&t| {
            let kept: Vec<usize> = (0..n).filter(|&i| confidences[i] >= t).collect();
            let correct = kept.iter().filter(|&&i| errors_deg[i] < theta_correct_deg).count();
            CurvePoint {
                threshold: t,
                retained: if n == 0 { 0.0 } else { kept.len() as f64 / n as f64 },
                accuracy: (!kept.is_empty()).then(|| correct as f64 / kept.len() as f64),
            }
        })
        .collect())
}

/// CSV `threshold,retained,accuracy`; empty sets print `undefined`.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("threshold,retained,accuracy\n");
    for p in curve {
        let acc = p.accuracy.map_or_else(|| "undefined".to_string(), |a| format!("{a}"));
        s.push_str(&format!("{},{},{}\n", p.threshold, p.retained, acc));
    }
    s
}

/// Metrics of one distribution against one ground-truth pose.
#[derive(Clone, Debug, Serialize)]
pub struct EvalSample {
    pub view: usize,
    pub gt: [f64; 4],
    pub estimate: [f64; 4],
    pub ll_nats: f64,
    pub spread_deg: f64,
    pub error_deg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub ll_nats: f64,
    pub spread_deg: f64,
    pub ar30: f64,
    pub samples: Vec<EvalSample>,
}

impl EvalReport {
    /// Averages over samples; `ar30` counts samples with error below 30°.
    pub fn from_samples(samples: Vec<EvalSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("evaluation produced no samples".into()));
        }
        let n = samples.len() as f64;
        Ok(Self {
            ll_nats: samples.iter().map(|s| s.ll_nats).sum::<f64>() / n,
            spread_deg: samples.iter().map(|s| s.spread_deg).sum::<f64>() / n,
            ar30: samples.iter().filter(|s| s.error_deg < 30.0).count() as f64 / n,
            samples,
        })
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("view,gt_qw,gt_qx,gt_qy,gt_qz,est_qw,est_qx,est_qy,est_qz,ll_nats,spread_deg,error_deg\n");
        for r in &self.samples {
            let [a, b, c, d] = r.gt;
            let [e, f, g, h] = r.estimate;
            s.push_str(&format!(
                "{},{a:.16e},{b:.16e},{c:.16e},{d:.16e},{e:.16e},{f:.16e},{g:.16e},{h:.16e},{},{},{}\n",
                r.view, r.ll_nats, r.spread_deg, r.error_deg
            ));
        }
        s
    }
}

/// Evaluates `dist` against the ground-truth set of `r_gt`: LL at the set's
/// representatives (`n_continuous` per circle for continuous sets), spread,
/// and the symmetric error of the highest-density rotation.
pub fn evaluate(dist: &ScoredDistribution, r_gt: &Rotation, sym: &SymmetrySpec, n_continuous: usize, view: usize) -> Result<EvalSample> {
    let gt = GtSet::from_symmetry(r_gt, sym);
    let reps = match &gt {
        GtSet::All => vec![*r_gt],
        other => other.representatives(n_continuous),
    };
    let est = dist.rotations()[dist.argmax()];
    Ok(EvalSample {
        view,
        gt: r_gt.wxyz(),
        estimate: est.wxyz(),
        ll_nats: log_likelihood(dist, &reps)?,
        spread_deg: spread(dist, &gt),
        error_deg: gt.distance(&est).to_degrees(),
    })
}
