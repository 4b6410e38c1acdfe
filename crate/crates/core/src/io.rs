//! Rotation-record CSV files: `qw,qx,qy,qz` rows, optionally followed by a
//! `weight` column, with `#` comment lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::So3Grid;
use crate::rotation::Rotation;

fn push_record(out: &mut String, r: &Rotation) {
    let [w, x, y, z] = r.wxyz();
    write!(out, "{w:.16e},{x:.16e},{y:.16e},{z:.16e}").expect("write to string");
}

/// CSV of rotations, with a `weight` column when `weights` is given.
pub fn rotations_to_csv(rotations: &[Rotation], weights: Option<&[f64]>) -> Result<String> {
    if let Some(w) = weights {
        if w.len() != rotations.len() {
            return Err(Error::LengthMismatch {
                what: "weights vs rotations",
                left: w.len(),
                right: rotations.len(),
            });
        }
    }
    let mut out = String::from(if weights.is_some() { "qw,qx,qy,qz,weight\n" } else { "qw,qx,qy,qz\n" });
    for (i, r) in rotations.iter().enumerate() {
        push_record(&mut out, r);
        if let Some(w) = weights {
            write!(out, ",{:.16e}", w[i]).expect("write to string");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Grid export: `# so3grid level=<ℓ> count=<n>` followed by the records.
pub fn grid_to_csv(grid: &So3Grid) -> String {
    let mut out = format!("# so3grid level={} count={}\n", grid.level(), grid.len());
    out.push_str(&rotations_to_csv(grid.rotations(), None).expect("no weights"));
    out
}

/// Parses rotation records; the optional header row and `#` lines are
/// skipped. Returns the weights when a fifth column is present.
pub fn rotations_from_csv(text: &str) -> Result<(Vec<Rotation>, Option<Vec<f64>>)> {
    let mut rotations = Vec::new();
    let mut weights: Option<Vec<f64>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("qw") {
            continue;
        }
        let ctx = || format!("rotation CSV line {}", lineno + 1);
        let fields = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::parse(ctx(), format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let has_weight = match fields.len() {
            4 => false,
            5 => true,
            n => return Err(Error::parse(ctx(), format!("expected 4 or 5 fields, found {n}"))),
        };
        if rotations.is_empty() {
            weights = has_weight.then(Vec::new);
        } else if has_weight != weights.is_some() {
            return Err(Error::parse(ctx(), "inconsistent number of columns"));
        }
        rotations.push(Rotation::from_wxyz(fields[0], fields[1], fields[2], fields[3]).map_err(|e| Error::parse(ctx(), e.to_string()))?);
        if let Some(w) = weights.as_mut() {
            w.push(fields[4]);
        }
    }
    Ok((rotations, weights))
}

pub fn read_rotations(path: &Path) -> Result<(Vec<Rotation>, Option<Vec<f64>>)> {
    rotations_from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
