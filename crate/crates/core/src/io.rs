//! On-disk formats: `design/v1` and `target/v1` JSON documents.
//!
//! Floats are written in scientific notation with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use std::path::Path;

use num_complex::Complex64;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::evaluator::TransferFunction;
use crate::geometry::{CircuitDesign, Resonator};

pub const DESIGN_FORMAT: &str = "design/v1";
pub const TARGET_FORMAT: &str = "target/v1";

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn raw17<E: serde::ser::Error>(v: f64) -> std::result::Result<Box<RawValue>, E> {
    if !v.is_finite() {
        return Err(E::custom(format!("cannot serialize non-finite float {v}")));
    }
    RawValue::from_string(fmt17(v)).map_err(E::custom)
}

pub(crate) fn ser_f17<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    raw17::<S::Error>(*v)?.serialize(s)
}

pub(crate) fn ser_f17_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&raw17::<S::Error>(*x)?)?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorRecord {
    #[serde(serialize_with = "ser_f17")]
    pub cx: f64,
    #[serde(serialize_with = "ser_f17")]
    pub cy: f64,
    pub slit_dir: u8,
    #[serde(serialize_with = "ser_f17")]
    pub slit_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub format: String,
    pub n: usize,
    #[serde(serialize_with = "ser_f17")]
    pub side: f64,
    pub resonators: Vec<ResonatorRecord>,
}

impl DesignFile {
    pub fn from_design(design: &CircuitDesign) -> Self {
        Self {
            format: DESIGN_FORMAT.to_string(),
            n: design.n(),
            side: design.side(),
            resonators: design
                .resonators
                .iter()
                .map(|r| ResonatorRecord {
                    cx: r.center[0],
                    cy: r.center[1],
                    slit_dir: r.slit_dir,
                    slit_offset: r.slit_offset,
                })
                .collect(),
        }
    }

    pub fn to_design(&self) -> Result<CircuitDesign> {
        check_format(&self.format, DESIGN_FORMAT)?;
        if self.n != self.resonators.len() {
            return Err(Error::Format(format!(
                "design declares n = {} but lists {} resonators",
                self.n,
                self.resonators.len()
            )));
        }
        let design = CircuitDesign {
            resonators: self
                .resonators
                .iter()
                .map(|r| Resonator {
                    center: [r.cx, r.cy],
                    side: self.side,
                    slit_dir: r.slit_dir,
                    slit_offset: r.slit_offset,
                })
                .collect(),
            boundary: None,
        };
        design.validate()?;
        Ok(design)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    pub format: String,
    #[serde(serialize_with = "ser_f17_vec")]
    pub freqs: Vec<f64>,
    #[serde(serialize_with = "ser_f17_vec")]
    pub s21_mag: Vec<f64>,
}

impl TargetFile {
    pub fn from_transfer(tf: &TransferFunction) -> Self {
        Self {
            format: TARGET_FORMAT.to_string(),
            freqs: tf.freqs.clone(),
            s21_mag: tf.s21.iter().map(|c| c.norm()).collect(),
        }
    }

    /// Magnitudes become zero-phase complex samples.
    pub fn to_transfer(&self) -> Result<TransferFunction> {
        check_format(&self.format, TARGET_FORMAT)?;
        if self.freqs.len() != self.s21_mag.len() {
            return Err(Error::Format(format!(
                "target has {} frequencies but {} magnitudes",
                self.freqs.len(),
                self.s21_mag.len()
            )));
        }
        if self.s21_mag.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Format("target magnitudes must be finite and non-negative".into()));
        }
        TransferFunction::new(self.freqs.clone(), self.s21_mag.iter().map(|&m| Complex64::new(m, 0.0)).collect())
    }
}

pub(crate) fn check_format(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Format(format!("expected format \"{expected}\", found \"{found}\"")))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_design(path: &Path, design: &CircuitDesign) -> Result<()> {
    write_json(path, &DesignFile::from_design(design))
}

pub fn load_design(path: &Path) -> Result<CircuitDesign> {
    read_json::<DesignFile>(path)?.to_design()
}

pub fn save_target(path: &Path, tf: &TransferFunction) -> Result<()> {
    write_json(path, &TargetFile::from_transfer(tf))
}

pub fn load_target(path: &Path) -> Result<TransferFunction> {
    read_json::<TargetFile>(path)?.to_transfer()
}
