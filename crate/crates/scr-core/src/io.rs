//! File formats at the toolkit boundary: design tables and reports in JSON
//! with unit-suffixed field names, traces and tabular results in CSV. All
//! in-memory values are SI; conversion happens here and nowhere else.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitDesign, ModeLabel};
use crate::electron::{ElectronArms, LeverArms};
use crate::error::{Error, Result};
use crate::material::{sheet_inductance, wire_inductance};
use crate::resonance::S21Trace;
use crate::verify::ReferenceFrequency;

/// Column layout of a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    /// Header `frequency_hz,re,im`, linear-amplitude quadratures.
    ReIm,
    /// Header `frequency_hz,magnitude_db,phase_rad`.
    DbPhase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilmRecord {
    r_sq_ohm: f64,
    #[serde(rename = "t_c_K")]
    t_c_k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignRecord {
    name: String,
    length_mm: f64,
    width_um: f64,
    #[serde(rename = "c_a_fF")]
    c_a_ff: f64,
    #[serde(rename = "c_b_fF")]
    c_b_ff: f64,
    #[serde(rename = "c_x_fF")]
    c_x_ff: f64,
    #[serde(rename = "c_ca_fF")]
    c_ca_ff: f64,
    #[serde(rename = "c_cb_fF")]
    c_cb_ff: f64,
    #[serde(rename = "l_nH", default, skip_serializing_if = "Option::is_none")]
    l_nh: Option<f64>,
    #[serde(rename = "l_sq_pH", default, skip_serializing_if = "Option::is_none")]
    l_sq_ph: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    film: Option<FilmRecord>,
    #[serde(rename = "l_t_nH", default)]
    l_t_nh: f64,
}

impl DesignRecord {
    fn resolve(self) -> Result<CircuitDesign> {
        let length = self.length_mm * 1e-3;
        let width = self.width_um * 1e-6;
        let sources =
            self.l_nh.is_some() as u8 + self.l_sq_ph.is_some() as u8 + self.film.is_some() as u8;
        if sources != 1 {
            return Err(Error::Validation(format!(
                "{}: specify exactly one inductance source (l_nH, l_sq_pH, or film), got {sources}",
                self.name
            )));
        }
        let inductance = if let Some(l_nh) = self.l_nh {
            l_nh * 1e-9
        } else if let Some(l_sq_ph) = self.l_sq_ph {
            wire_inductance(l_sq_ph * 1e-12, length, width)?
        } else {
            let film = self.film.as_ref().unwrap();
            wire_inductance(sheet_inductance(film.r_sq_ohm, film.t_c_k)?, length, width)?
        };
        let design = CircuitDesign {
            name: self.name,
            length,
            width,
            c_a: self.c_a_ff * 1e-15,
            c_b: self.c_b_ff * 1e-15,
            c_x: self.c_x_ff * 1e-15,
            c_ca: self.c_ca_ff * 1e-15,
            c_cb: self.c_cb_ff * 1e-15,
            inductance,
            tail_inductance: self.l_t_nh * 1e-9,
        };
        design
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(design)
    }

    fn from_design(design: &CircuitDesign) -> Self {
        Self {
            name: design.name.clone(),
            length_mm: design.length / 1e-3,
            width_um: design.width / 1e-6,
            c_a_ff: design.c_a / 1e-15,
            c_b_ff: design.c_b / 1e-15,
            c_x_ff: design.c_x / 1e-15,
            c_ca_ff: design.c_ca / 1e-15,
            c_cb_ff: design.c_cb / 1e-15,
            l_nh: Some(design.inductance / 1e-9),
            l_sq_ph: None,
            film: None,
            l_t_nh: design.tail_inductance / 1e-9,
        }
    }
}

fn parse_err(path: &Path, err: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {err}", path.display()))
}

/// Loads a JSON design table, resolving the inductance from an explicit
/// value, a sheet inductance, or film properties, and validating each entry.
pub fn load_designs(path: impl AsRef<Path>) -> Result<Vec<CircuitDesign>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let records: Vec<DesignRecord> =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let designs: Vec<CircuitDesign> = records
        .into_iter()
        .map(DesignRecord::resolve)
        .collect::<Result<_>>()?;
    for (i, d) in designs.iter().enumerate() {
        if designs[..i].iter().any(|other| other.name == d.name) {
            return Err(Error::Validation(format!(
                "duplicate design name {}",
                d.name
            )));
        }
    }
    Ok(designs)
}

/// Writes a design table; the inductance is serialized as an explicit value.
pub fn save_designs(path: impl AsRef<Path>, designs: &[CircuitDesign]) -> Result<()> {
    let records: Vec<DesignRecord> = designs.iter().map(DesignRecord::from_design).collect();
    save_json(path, &records)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceRecord {
    name: String,
    label: ModeLabel,
    frequency_hz: f64,
}

/// Loads reference frequencies as a JSON list of (name, label, frequency_hz).
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<ReferenceFrequency>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let records: Vec<ReferenceRecord> =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    Ok(records
        .into_iter()
        .map(|r| ReferenceFrequency {
            name: r.name,
            label: r.label,
            frequency: r.frequency_hz,
        })
        .collect())
}

/// Writes reference frequencies in the `load_references` schema.
pub fn save_references(path: impl AsRef<Path>, references: &[ReferenceFrequency]) -> Result<()> {
    let records: Vec<ReferenceRecord> = references
        .iter()
        .map(|r| ReferenceRecord {
            name: r.name.clone(),
            label: r.label,
            frequency_hz: r.frequency,
        })
        .collect();
    save_json(path, &records)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmRecord {
    dalpha_a_dx_per_um: f64,
    #[serde(default)]
    dalpha_a_dy_per_um: f64,
    dalpha_b_dx_per_um: f64,
    #[serde(default)]
    dalpha_b_dy_per_um: f64,
}

/// Loads per-electron lever-arm derivatives from a JSON list; file values
/// are per micrometer.
pub fn load_arms(path: impl AsRef<Path>) -> Result<LeverArms> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let records: Vec<ArmRecord> =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let arms = LeverArms {
        per_electron: records
            .into_iter()
            .map(|r| ElectronArms {
                dalpha_a_dx: r.dalpha_a_dx_per_um * 1e6,
                dalpha_a_dy: r.dalpha_a_dy_per_um * 1e6,
                dalpha_b_dx: r.dalpha_b_dx_per_um * 1e6,
                dalpha_b_dy: r.dalpha_b_dy_per_um * 1e6,
            })
            .collect(),
    };
    arms.validate()?;
    Ok(arms)
}

#[derive(Serialize, Deserialize)]
struct ReImRow {
    frequency_hz: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct DbPhaseRow {
    frequency_hz: f64,
    magnitude_db: f64,
    phase_rad: f64,
}

/// Reads a trace CSV in the given format; frequencies must be strictly
/// increasing.
pub fn load_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<S21Trace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let expected: &[&str] = match format {
        TraceFormat::ReIm => &["frequency_hz", "re", "im"],
        TraceFormat::DbPhase => &["frequency_hz", "magnitude_db", "phase_rad"],
    };
    if headers != expected {
        return Err(parse_err(
            path,
            format!("trace header {headers:?} does not match {expected:?}"),
        ));
    }

    let mut frequencies = Vec::new();
    let mut values = Vec::new();
    match format {
        TraceFormat::ReIm => {
            for (i, row) in reader.deserialize::<ReImRow>().enumerate() {
                let row = row.map_err(|e| parse_err(path, format!("row {}: {e}", i + 2)))?;
                frequencies.push(row.frequency_hz);
                values.push(Complex64::new(row.re, row.im));
            }
        }
        TraceFormat::DbPhase => {
            for (i, row) in reader.deserialize::<DbPhaseRow>().enumerate() {
                let row = row.map_err(|e| parse_err(path, format!("row {}: {e}", i + 2)))?;
                frequencies.push(row.frequency_hz);
                values.push(Complex64::from_polar(
                    10f64.powf(row.magnitude_db / 20.0),
                    row.phase_rad,
                ));
            }
        }
    }
    for (i, pair) in frequencies.windows(2).enumerate() {
        if !(pair[1] > pair[0]) {
            return Err(Error::Validation(format!(
                "{}: row {}: frequency {:e} does not increase past {:e}",
                path.display(),
                i + 3,
                pair[1],
                pair[0]
            )));
        }
    }
    S21Trace::new(frequencies, values, None).map_err(|e| Error::Validation(e.to_string()))
}

/// Writes a trace CSV in the given format.
pub fn save_trace(path: impl AsRef<Path>, trace: &S21Trace, format: TraceFormat) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (&f, v) in trace.frequencies.iter().zip(&trace.values) {
        match format {
            TraceFormat::ReIm => writer
                .serialize(ReImRow {
                    frequency_hz: f,
                    re: v.re,
                    im: v.im,
                })
                .map_err(|e| parse_err(path, e))?,
            TraceFormat::DbPhase => writer
                .serialize(DbPhaseRow {
                    frequency_hz: f,
                    magnitude_db: 20.0 * v.norm().max(1e-300).log10(),
                    phase_rad: v.arg(),
                })
                .map_err(|e| parse_err(path, e))?,
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path.as_ref(), text)?;
    Ok(())
}

/// Writes serializable records as a headered CSV.
pub fn save_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path.as_ref(), bytes)?;
    Ok(())
}
