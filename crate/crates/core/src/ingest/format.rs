//! Recording directory layout:
//!
//! ```text
//! <dir>/meta.json          device id and one entry per sensor
//! <dir>/<sensor>.csv       `t,value` (pressure, Pa) or `t,x,y,z` (acceleration)
//! <dir>/<sensor>.fifo.csv  `t,total_samples`, free-running sensors only
//! ```
//!
//! The `t` column repeats the uniform grid implied by the metadata. It is
//! checked against the grid on load and otherwise ignored.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccelSensor, ClockModel, FifoReadout, Recording, Samples, SensorTrace, TraceKind};

pub const META_FILE: &str = "meta.json";
const PRESSURE_NAME: &str = "pressure";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    device_id: String,
    sensors: Vec<SensorMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    applied_model: Option<ClockModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SensorMeta {
    name: String,
    kind: TraceKind,
    sample_rate_hz: f64,
    start_time_s: f64,
    unit: String,
    externally_triggered: bool,
}

fn grid_tolerance(rate: f64) -> f64 {
    1e-6 + 1e-3 / rate
}

pub fn write_recording(rec: &Recording, dir: &Path) -> Result<()> {
    rec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sensors = vec![SensorMeta {
        name: PRESSURE_NAME.into(),
        kind: TraceKind::Pressure,
        sample_rate_hz: rec.pressure.sample_rate_hz,
        start_time_s: rec.pressure.start_time_s,
        unit: "Pa".into(),
        externally_triggered: true,
    }];
    for s in &rec.accel {
        if s.name == PRESSURE_NAME || s.name.contains(['/', '\\', '.']) || s.name.is_empty() {
            return Err(Error::invalid(format!("sensor name {:?} is not usable as a file name", s.name)));
        }
        sensors.push(SensorMeta {
            name: s.name.clone(),
            kind: TraceKind::Accel3,
            sample_rate_hz: s.trace.sample_rate_hz,
            start_time_s: s.trace.start_time_s,
            unit: s.unit.clone(),
            externally_triggered: s.externally_triggered,
        });
    }
    let meta = Meta { device_id: rec.device_id.clone(), sensors, applied_model: rec.applied_model };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(&meta_path, "meta", e.to_string()))?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    write_trace(&dir.join(format!("{PRESSURE_NAME}.csv")), &rec.pressure)?;
    for s in &rec.accel {
        write_trace(&dir.join(format!("{}.csv", s.name)), &s.trace)?;
        if let Some(log) = &s.fifo_log {
            write_fifo(&dir.join(format!("{}.fifo.csv", s.name)), log)?;
        }
    }
    Ok(())
}

fn write_trace(path: &Path, trace: &SensorTrace) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match &trace.samples {
        Samples::Scalar(v) => {
            writeln!(w, "t,value").map_err(io)?;
            for (n, x) in v.iter().enumerate() {
                writeln!(w, "{:.9},{}", trace.time_of(n), x).map_err(io)?;
            }
        }
        Samples::Vec3(v) => {
            writeln!(w, "t,x,y,z").map_err(io)?;
            for (n, [x, y, z]) in v.iter().enumerate() {
                writeln!(w, "{:.9},{},{},{}", trace.time_of(n), x, y, z).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn write_fifo(path: &Path, log: &[FifoReadout]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,total_samples").map_err(io)?;
    for r in log {
        writeln!(w, "{},{}", r.t_s, r.total_samples).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_recording(dir: &Path) -> Result<Recording> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, "meta", e.to_string()))?;

    let mut pressure = None;
    let mut accel = Vec::new();
    for (i, s) in meta.sensors.iter().enumerate() {
        let field = |f: &str| format!("sensors[{i}].{f}");
        if !(s.sample_rate_hz.is_finite() && s.sample_rate_hz > 0.0) {
            return Err(Error::format(&meta_path, field("sample_rate_hz"), "must be positive"));
        }
        if !s.start_time_s.is_finite() {
            return Err(Error::format(&meta_path, field("start_time_s"), "must be finite"));
        }
        let csv_path = dir.join(format!("{}.csv", s.name));
        let samples = read_samples(&csv_path, s)?;
        let trace =
            SensorTrace { kind: s.kind, sample_rate_hz: s.sample_rate_hz, start_time_s: s.start_time_s, samples };
        trace.validate().map_err(|e| Error::format(&csv_path, "samples", e.to_string()))?;
        match s.kind {
            TraceKind::Pressure => {
                if pressure.replace(trace).is_some() {
                    return Err(Error::format(&meta_path, "sensors", "more than one pressure trace"));
                }
            }
            TraceKind::Accel3 => {
                let fifo_path = dir.join(format!("{}.fifo.csv", s.name));
                let fifo_log = match (fifo_path.exists(), s.externally_triggered) {
                    (true, false) => Some(read_fifo(&fifo_path)?),
                    (false, true) => None,
                    (true, true) => {
                        return Err(Error::format(
                            &fifo_path,
                            "externally_triggered",
                            "FIFO log present for an externally triggered sensor",
                        ))
                    }
                    (false, false) => {
                        return Err(Error::format(
                            &fifo_path,
                            "externally_triggered",
                            "free-running sensor lacks a FIFO log",
                        ))
                    }
                };
                accel.push(AccelSensor {
                    name: s.name.clone(),
                    unit: s.unit.clone(),
                    externally_triggered: s.externally_triggered,
                    trace,
                    fifo_log,
                });
            }
            TraceKind::Scalar => {
                return Err(Error::format(&meta_path, field("kind"), "derived scalar traces are not stored"));
            }
        }
    }
    let pressure = pressure.ok_or_else(|| Error::format(&meta_path, "sensors", "recording lacks pressure trace"))?;
    let rec = Recording { device_id: meta.device_id, pressure, accel, applied_model: meta.applied_model };
    rec.validate().map_err(|e| Error::format(&meta_path, "sensors", e.to_string()))?;
    Ok(rec)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, "file", format!("{other:?}")),
    })
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, want: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::format(path, "header", e.to_string()))?;
    if headers.iter().ne(want.iter().copied()) {
        return Err(Error::format(
            path,
            "header",
            format!("expected `{}`, found `{}`", want.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn parse(path: &Path, row: usize, col: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("{col} (row {row})"), format!("not a number: {s:?}")))
}

fn read_samples(path: &PathBuf, s: &SensorMeta) -> Result<Samples> {
    let mut rdr = reader(path)?;
    let columns: &[&str] = match s.kind {
        TraceKind::Pressure | TraceKind::Scalar => &["t", "value"],
        TraceKind::Accel3 => &["t", "x", "y", "z"],
    };
    check_header(path, &mut rdr, columns)?;
    let tol = grid_tolerance(s.sample_rate_hz);
    let mut scalars = Vec::new();
    let mut vectors = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| Error::format(path, format!("row {row}"), e.to_string()))?;
        if record.len() != columns.len() {
            return Err(Error::format(path, format!("row {row}"), format!("expected {} columns", columns.len())));
        }
        let t = parse(path, row, "t", &record[0])?;
        let grid = s.start_time_s + n as f64 / s.sample_rate_hz;
        if (t - grid).abs() > tol {
            return Err(Error::format(
                path,
                format!("t (row {row})"),
                format!(
                    "{t} is off the {} Hz grid (expected {grid:.9}); sample rate and sample count disagree",
                    s.sample_rate_hz
                ),
            ));
        }
        match s.kind {
            TraceKind::Accel3 => vectors.push([
                parse(path, row, "x", &record[1])?,
                parse(path, row, "y", &record[2])?,
                parse(path, row, "z", &record[3])?,
            ]),
            _ => scalars.push(parse(path, row, "value", &record[1])?),
        }
    }
    Ok(match s.kind {
        TraceKind::Accel3 => Samples::Vec3(vectors),
        _ => Samples::Scalar(scalars),
    })
}

fn read_fifo(path: &Path) -> Result<Vec<FifoReadout>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["t", "total_samples"])?;
    let mut out: Vec<FifoReadout> = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| Error::format(path, format!("row {row}"), e.to_string()))?;
        let t_s = parse(path, row, "t", &record[0])?;
        let total_samples: u64 = record
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::format(path, format!("total_samples (row {row})"), "not a non-negative integer"))?;
        if let Some(prev) = out.last() {
            if !(t_s > prev.t_s) {
                return Err(Error::format(path, format!("t (row {row})"), "timestamps must be strictly increasing"));
            }
            if total_samples < prev.total_samples {
                return Err(Error::format(
                    path,
                    format!("total_samples (row {row})"),
                    format!("count decreases from {} to {total_samples}", prev.total_samples),
                ));
            }
        }
        out.push(FifoReadout { t_s, total_samples });
    }
    if out.is_empty() {
        return Err(Error::format(path, "rows", "empty FIFO log"));
    }
    Ok(out)
}
