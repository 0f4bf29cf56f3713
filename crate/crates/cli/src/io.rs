//! Pulse, sensor and survey files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gunloc_core::{Position, PulseSet, SensorObservation};
use serde::{Deserialize, Serialize};

/// One pulse: a row of a pulse file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub shot_id: String,
    pub sensor_id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub arrival_time_s: f64,
    #[serde(default)]
    pub amplitude_dbspl: Option<f64>,
    #[serde(default)]
    pub snr_db: Option<f64>,
}

impl PulseRecord {
    pub fn from_observation(shot_id: &str, o: &SensorObservation) -> Self {
        Self {
            shot_id: shot_id.to_string(),
            sensor_id: o.sensor_id.clone(),
            x_m: o.position.x,
            y_m: o.position.y,
            z_m: o.position.z,
            arrival_time_s: o.arrival_time,
            amplitude_dbspl: o.amplitude_dbspl,
            snr_db: o.snr_db,
        }
    }

    pub fn observation(&self) -> SensorObservation {
        SensorObservation {
            sensor_id: self.sensor_id.clone(),
            position: Position::new(self.x_m, self.y_m, self.z_m),
            arrival_time: self.arrival_time_s,
            amplitude_dbspl: self.amplitude_dbspl,
            snr_db: self.snr_db,
        }
    }

    fn check(&self) -> Result<()> {
        if self.shot_id.is_empty() || self.sensor_id.is_empty() {
            bail!("shot_id and sensor_id must be non-empty");
        }
        let numbers = [
            ("x_m", self.x_m),
            ("y_m", self.y_m),
            ("z_m", self.z_m),
            ("arrival_time_s", self.arrival_time_s),
        ];
        if let Some((name, v)) = numbers.iter().find(|(_, v)| !v.is_finite()) {
            bail!("{name} = {v} is not finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// CSV or JSON with the native column names (chosen by extension).
    Pulse,
    /// CSV with the published supplemental column names.
    Supplemental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PulseFormat {
    Csv,
    Json,
}

impl PulseFormat {
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => PulseFormat::Json,
            _ => PulseFormat::Csv,
        }
    }
}

pub fn read_pulses(path: &Path, format: InputFormat) -> Result<Vec<PulseRecord>> {
    let file = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
    let reader = BufReader::new(file);
    let records = match (format, PulseFormat::for_path(path)) {
        (InputFormat::Supplemental, _) => read_supplemental(reader),
        (InputFormat::Pulse, PulseFormat::Json) => read_pulse_json(reader),
        (InputFormat::Pulse, PulseFormat::Csv) => read_pulse_csv(reader),
    };
    records.with_context(|| path.display().to_string())
}

pub fn read_pulse_csv<R: Read>(reader: R) -> Result<Vec<PulseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PulseRecord>().enumerate() {
        // Row 1 is the header.
        let row_no = i + 2;
        let rec = row.map_err(|e| anyhow!("row {row_no}: {}", csv_message(&e)))?;
        rec.check().map_err(|e| anyhow!("row {row_no}: {e}"))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_pulse_json<R: Read>(reader: R) -> Result<Vec<PulseRecord>> {
    let rows: Vec<serde_json::Value> =
        serde_json::from_reader(reader).map_err(|e| anyhow!("expected a JSON array of pulse records: {e}"))?;
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let rec: PulseRecord = serde_json::from_value(v).map_err(|e| anyhow!("record {}: {e}", i + 1))?;
            rec.check().map_err(|e| anyhow!("record {}: {e}", i + 1))?;
            Ok(rec)
        })
        .collect()
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(field) => format!("field {}: {}", field + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    }
}

/// Column aliases accepted by the supplemental adapter, in order of preference.
const SUPPLEMENTAL_COLUMNS: [(&str, &[&str]); 7] = [
    (
        "shot",
        &["shot_id", "shot", "incident_id", "incident", "tuple_id", "tuple"],
    ),
    ("sensor", &["sensor_id", "sensor", "sensor_name", "sensorid"]),
    ("x", &["x_m", "x", "easting_m", "easting"]),
    ("y", &["y_m", "y", "northing_m", "northing"]),
    ("z", &["z_m", "z", "elevation_m", "elevation", "height_m"]),
    (
        "time",
        &[
            "arrival_time_s",
            "arrival_time",
            "pulse_time_s",
            "pulse_time",
            "toa_s",
            "toa",
            "time_s",
            "time",
        ],
    ),
    ("fp", &["firing_position", "fp"]),
];

/// Reads a CSV whose headers follow the supplemental data's naming. Elevation
/// defaults to zero; a firing-position column, when present, prefixes the shot
/// id as `<fp>/<shot>`.
pub fn read_supplemental<R: Read>(reader: R) -> Result<Vec<PulseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let find = |key: &str| -> Option<usize> {
        let (_, aliases) = SUPPLEMENTAL_COLUMNS.iter().find(|(k, _)| *k == key)?;
        aliases.iter().find_map(|a| headers.iter().position(|h| h == a))
    };
    let required = |key: &str| find(key).ok_or_else(|| anyhow!("no column for {key} in header {headers:?}"));
    let (shot, sensor, x, y, time) = (
        required("shot")?,
        required("sensor")?,
        required("x")?,
        required("y")?,
        required("time")?,
    );
    let (z, fp) = (find("z"), find("fp"));

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| anyhow!("row {row_no}: {e}"))?;
        let text = |col: usize| row.get(col).unwrap_or("").to_string();
        let number = |col: usize, name: &str| -> Result<f64> {
            let s = row.get(col).unwrap_or("");
            s.parse::<f64>()
                .map_err(|_| anyhow!("row {row_no}: {name} {s:?} is not a number"))
        };
        let shot_id = match fp {
            Some(c) => format!("{}/{}", text(c), text(shot)),
            None => text(shot),
        };
        let rec = PulseRecord {
            shot_id,
            sensor_id: text(sensor),
            x_m: number(x, "x")?,
            y_m: number(y, "y")?,
            z_m: match z {
                Some(c) if !row.get(c).unwrap_or("").is_empty() => number(c, "z")?,
                _ => 0.0,
            },
            arrival_time_s: number(time, "arrival time")?,
            amplitude_dbspl: None,
            snr_db: None,
        };
        rec.check().map_err(|e| anyhow!("row {row_no}: {e}"))?;
        out.push(rec);
    }
    Ok(out)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Writes pulse records: times to the microsecond, positions to the millimetre.
pub fn write_pulses<W: Write>(mut w: W, records: &[PulseRecord], format: PulseFormat) -> Result<()> {
    match format {
        PulseFormat::Json => {
            serde_json::to_writer_pretty(&mut w, records)?;
            writeln!(w)?;
        }
        PulseFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record([
                "shot_id",
                "sensor_id",
                "x_m",
                "y_m",
                "z_m",
                "arrival_time_s",
                "amplitude_dbspl",
                "snr_db",
            ])?;
            for r in records {
                out.write_record([
                    r.shot_id.clone(),
                    r.sensor_id.clone(),
                    format!("{:.3}", r.x_m),
                    format!("{:.3}", r.y_m),
                    format!("{:.3}", r.z_m),
                    format!("{:.6}", r.arrival_time_s),
                    opt(r.amplitude_dbspl, 2),
                    opt(r.snr_db, 2),
                ])?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Groups records by shot id (sorted) into validated pulse sets.
pub fn group_shots(records: &[PulseRecord]) -> Result<BTreeMap<String, PulseSet>> {
    let mut grouped: BTreeMap<String, Vec<SensorObservation>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.shot_id.clone()).or_default().push(r.observation());
    }
    grouped
        .into_iter()
        .map(|(id, obs)| {
            let set = PulseSet::new(id.clone(), obs).with_context(|| format!("shot {id}"))?;
            Ok((id, set))
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct SensorRecord {
    pub sensor_id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

pub fn read_sensors(path: &Path) -> Result<BTreeMap<String, Position>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("{}: cannot open", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SensorRecord>().enumerate() {
        let row = row.map_err(|e| anyhow!("{}: row {}: {}", path.display(), i + 2, csv_message(&e)))?;
        out.insert(row.sensor_id, Position::new(row.x_m, row.y_m, row.z_m));
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
pub struct SurveyRecord {
    pub firing_position: String,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub z_m: f64,
    #[serde(default)]
    pub temperature_c: Option<f64>,
}

pub fn read_survey(path: &Path) -> Result<BTreeMap<String, SurveyRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("{}: cannot open", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SurveyRecord>().enumerate() {
        let row = row.map_err(|e| anyhow!("{}: row {}: {}", path.display(), i + 2, csv_message(&e)))?;
        out.insert(row.firing_position.clone(), row);
    }
    Ok(out)
}

/// Parses `a,b` or `a,b,c` into numbers.
pub fn parse_tuple(s: &str, min: usize, max: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    if parts.len() < min || parts.len() > max || parts.iter().any(|v| !v.is_finite()) {
        return Err(format!("expected {min} to {max} finite comma-separated numbers"));
    }
    Ok(parts)
}

/// Opens `path` for writing, or stdout when absent.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            File::create(p).with_context(|| format!("{}: cannot create", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}
