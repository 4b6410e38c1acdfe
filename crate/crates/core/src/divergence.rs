//! Divergences between (possibly unnormalized) weight vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    SqL2,
    Kl,
    Gkl,
    L1,
}

/// `kind(a_mu ‖ a_nu)`. `kl` and `gkl` require strictly positive entries;
/// `kl` assumes both inputs are normalized.
pub fn divergence(kind: DivergenceKind, a_mu: &[f64], a_nu: &[f64]) -> Result<f64> {
    if a_mu.len() != a_nu.len() {
        return Err(Error::LengthMismatch {
            what: "divergence inputs",
            left: a_mu.len(),
            right: a_nu.len(),
        });
    }
    match kind {
        DivergenceKind::SqL2 => Ok(a_mu.iter().zip(a_nu).map(|(m, n)| (m - n) * (m - n)).sum()),
        DivergenceKind::L1 => Ok(a_mu.iter().zip(a_nu).map(|(m, n)| (m - n).abs()).sum()),
        DivergenceKind::Kl => {
            check_positive("kl", a_mu)?;
            check_positive("kl", a_nu)?;
            Ok(a_mu.iter().zip(a_nu).map(|(m, n)| m * (m / n).ln()).sum())
        }
        DivergenceKind::Gkl => {
            check_positive("gkl", a_mu)?;
            check_positive("gkl", a_nu)?;
            Ok(a_mu.iter().zip(a_nu).map(|(m, n)| gkl_term(*m, *n)).sum())
        }
    }
}

pub fn gkl(a_mu: &[f64], a_nu: &[f64]) -> Result<f64> {
    divergence(DivergenceKind::Gkl, a_mu, a_nu)
}

/// `(−ln(ν/μ) + ν/μ − 1)·μ`, evaluated without cancellation for ν ≈ μ.
fn gkl_term(mu: f64, nu: f64) -> f64 {
    let x = nu / mu - 1.0;
    // x − ln(1 + x) ≥ 0, accurate near 0 via ln_1p.
    mu * (x - x.ln_1p())
}

fn check_positive(kind: &'static str, a: &[f64]) -> Result<()> {
    match a.iter().position(|v| !(*v > 0.0)) {
        Some(index) => Err(Error::NonPositive {
            kind,
            index,
            value: a[index],
        }),
        None => Ok(()),
    }
}
