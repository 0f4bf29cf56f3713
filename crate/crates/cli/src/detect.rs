use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use gunloc_core::pulse::{DEFAULT_TAU, DEFAULT_THRESHOLD};
use gunloc_core::{detect_pulses, AudioSegment, Position};
use rayon::prelude::*;

use crate::io::{self, PulseFormat, PulseRecord};
use crate::{Outcome, OutputArgs};

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// WAV files, one per sensor; the file stem is the sensor id.
    #[arg(required = true)]
    pub wavs: Vec<PathBuf>,
    /// CSV of sensor positions (sensor_id, x_m, y_m, z_m). Without it positions are written as zero.
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    /// Kernel half-width, seconds.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Minimum response of a reported pulse.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Time of the first sample of every file, seconds.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub start_epoch: f64,
    /// Shot id written on every row.
    #[arg(long, default_value = "pool")]
    pub shot_id: String,
    /// Output format; defaults from the output extension.
    #[arg(long, value_enum)]
    pub format: Option<PulseFormat>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn sensor_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("{}: cannot derive a sensor id from the file name", path.display()))
}

pub fn run(args: &DetectArgs) -> Result<Outcome> {
    let sensors = args.sensors.as_deref().map(io::read_sensors).transpose()?;
    let per_file: Vec<Vec<PulseRecord>> = args
        .wavs
        .par_iter()
        .map(|path| -> Result<Vec<PulseRecord>> {
            let id = sensor_id(path)?;
            let position = match &sensors {
                Some(map) => *map
                    .get(&id)
                    .ok_or_else(|| anyhow!("{}: sensor {id} missing from the sensors file", path.display()))?,
                None => Position::default(),
            };
            let seg = AudioSegment::from_wav_path(path, args.start_epoch)?;
            let pulses = detect_pulses(&seg, args.tau, args.threshold).with_context(|| path.display().to_string())?;
            Ok(pulses
                .into_iter()
                .map(|p| PulseRecord {
                    shot_id: args.shot_id.clone(),
                    sensor_id: id.clone(),
                    x_m: position.x,
                    y_m: position.y,
                    z_m: position.z,
                    arrival_time_s: p.arrival_time,
                    amplitude_dbspl: p.peak_amplitude_dbspl.is_finite().then_some(p.peak_amplitude_dbspl),
                    snr_db: None,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    if sensors.is_none() {
        eprintln!("note: no --sensors file given; positions written as 0,0,0");
    }
    let mut records: Vec<PulseRecord> = per_file.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.arrival_time_s
            .total_cmp(&b.arrival_time_s)
            .then_with(|| a.sensor_id.cmp(&b.sensor_id))
    });
    let format = args.format.unwrap_or_else(|| {
        args.out
            .output
            .as_deref()
            .map(PulseFormat::for_path)
            .unwrap_or(PulseFormat::Csv)
    });
    io::write_pulses(io::output(args.out.output.as_deref())?, &records, format)?;
    Ok(Outcome::Success)
}
