//! Record files: header `time_s,force_<patch>_<axis>...,disp_<sensor>...`, one row per sample.
//! Sensor sidecar: header `name,x,y,z,axis`, one row per displacement channel.

use super::measured::{Axis, SensorChannel, SensorLayout};
use super::record::{Channel, RawRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

const TIME: &str = "time_s";
const FORCE: &str = "force_";
const DISP: &str = "disp_";
const SIDECAR: [&str; 5] = ["name", "x", "y", "z", "axis"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn parse_number<T: Real>(field: &str, line: usize, column: &str) -> Result<T> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column `{column}`: `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column `{column}`: non-finite value"),
        });
    }
    Ok(T::lit(v))
}

pub fn read_record_csv<T: Real>(text: &str) -> Result<RawRecord<T>> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some(TIME) {
        return Err(Error::Schema(format!(
            "line 1: first column must be `{TIME}`"
        )));
    }
    enum Kind {
        Force,
        Disp,
    }
    let mut columns = Vec::new();
    for name in header.iter().skip(1) {
        if let Some(rest) = name.strip_prefix(FORCE).filter(|r| !r.is_empty()) {
            columns.push((Kind::Force, rest.to_string()));
        } else if let Some(rest) = name.strip_prefix(DISP).filter(|r| !r.is_empty()) {
            columns.push((Kind::Disp, rest.to_string()));
        } else {
            return Err(Error::Schema(format!(
                "line 1: column `{name}` is neither `{FORCE}<patch>_<axis>` nor `{DISP}<sensor>`"
            )));
        }
    }
    if !columns.iter().any(|(k, _)| matches!(k, Kind::Force)) {
        return Err(Error::Schema("line 1: record has no force column".into()));
    }
    let mut time = Vec::new();
    let mut data: Vec<Vec<T>> = vec![Vec::new(); columns.len()];
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        time.push(parse_number(&row[0], line, TIME)?);
        for (c, col) in data.iter_mut().enumerate() {
            col.push(parse_number(&row[c + 1], line, &header[c + 1])?);
        }
    }
    let mut force = Vec::new();
    let mut displacement = Vec::new();
    for ((kind, name), values) in columns.into_iter().zip(data) {
        let ch = Channel { name, values };
        match kind {
            Kind::Force => force.push(ch),
            Kind::Disp => displacement.push(ch),
        }
    }
    Ok(RawRecord {
        time,
        force,
        displacement,
    })
}

pub fn write_record_csv<T: Real>(record: &RawRecord<T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![TIME.to_string()];
    header.extend(record.force.iter().map(|c| format!("{FORCE}{}", c.name)));
    header.extend(
        record
            .displacement
            .iter()
            .map(|c| format!("{DISP}{}", c.name)),
    );
    w.write_record(&header).map_err(csv_error)?;
    for (n, t) in record.time.iter().enumerate() {
        let mut row = vec![format!("{:e}", t.to_f64_lossy())];
        for c in record.force.iter().chain(&record.displacement) {
            let v = c.values.get(n).ok_or_else(|| {
                Error::Dimension(format!(
                    "channel `{}` is shorter than the time column",
                    c.name
                ))
            })?;
            row.push(format!("{:e}", v.to_f64_lossy()));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_sidecar<T: Real>(text: &str) -> Result<SensorLayout<T>> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != SIDECAR {
        return Err(Error::Schema(format!(
            "line 1: sidecar header must be `{}`",
            SIDECAR.join(",")
        )));
    }
    let mut channels = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let axis = Axis::parse(&row[4]).ok_or_else(|| Error::Parse {
            line,
            message: format!("axis `{}` is not x, y or z", &row[4]),
        })?;
        channels.push(SensorChannel {
            name: row[0].to_string(),
            position: [
                parse_number(&row[1], line, "x")?,
                parse_number(&row[2], line, "y")?,
                parse_number(&row[3], line, "z")?,
            ],
            axis,
        });
    }
    Ok(SensorLayout { channels })
}

pub fn write_sidecar<T: Real>(layout: &SensorLayout<T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SIDECAR).map_err(csv_error)?;
    for c in &layout.channels {
        let p = c.position.map(|v| format!("{}", v.to_f64_lossy()));
        w.write_record([c.name.as_str(), &p[0], &p[1], &p[2], c.axis.as_str()])
            .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}
