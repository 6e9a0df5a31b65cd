use std::ops::Range;

use super::{same_grid, TransferFunction};
use crate::error::{contract, Result};

/// Magnitudes are clamped below at this value before taking logs.
pub const MAG_FLOOR: f64 = 1e-6;

fn log_mag(c: &num_complex::Complex64) -> f64 {
    c.norm().max(MAG_FLOOR).log10()
}

fn check_grids(a: &TransferFunction, b: &TransferFunction) -> Result<()> {
    if same_grid(&a.freqs, &b.freqs) {
        Ok(())
    } else {
        Err(contract(format!("frequency grids differ ({} vs {} points)", a.freqs.len(), b.freqs.len())))
    }
}

/// Mean absolute magnitude error in dB: `(20 / m) * sum |log10|Y| - log10|Y'||`.
pub fn error_db(target: &TransferFunction, candidate: &TransferFunction) -> Result<f64> {
    check_grids(target, candidate)?;
    let m = target.m() as f64;
    let sum: f64 = target.s21.iter().zip(&candidate.s21).map(|(y, c)| (log_mag(y) - log_mag(c)).abs()).sum();
    Ok(20.0 / m * sum)
}

/// Grid points within `threshold_db` of the response peak.
pub fn passband(tf: &TransferFunction, threshold_db: f64) -> Vec<bool> {
    let db = tf.mag_db();
    let peak = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    db.iter().map(|v| *v >= peak - threshold_db).collect()
}

/// Smallest index range covering the pass-band of `tf`.
pub fn passband_range(tf: &TransferFunction, threshold_db: f64) -> Range<usize> {
    let band = passband(tf, threshold_db);
    let first = band.iter().position(|b| *b).unwrap_or(0);
    let last = band.iter().rposition(|b| *b).map_or(0, |i| i + 1);
    first..last.max(first)
}

pub fn passband_iou(target: &TransferFunction, candidate: &TransferFunction, threshold_db: f64) -> Result<f64> {
    check_grids(target, candidate)?;
    Ok(band_iou(&passband(target, threshold_db), &passband(candidate, threshold_db)))
}

pub(crate) fn band_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Loss at the best in-band point: `-max 20 log10 |s21|` over `band`.
pub fn insertion_loss(candidate: &TransferFunction, band: Range<usize>) -> Result<f64> {
    if band.is_empty() || band.end > candidate.m() {
        return Err(contract(format!("insertion-loss band {band:?} is empty or exceeds {} samples", candidate.m())));
    }
    let db = candidate.mag_db();
    let best = db[band].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(-best)
}
