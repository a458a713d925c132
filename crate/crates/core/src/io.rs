//! File formats: trace CSV with a JSON sidecar, and atomic writes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamsim::{ScanAxis, ScanTrace, TraceMetadata};
use crate::error::{Error, Result};

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Seconds from `SOURCE_DATE_EPOCH`, the only timestamp source used, so
/// outputs stay byte-identical when it is unset.
pub fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

/// Numeric rows of a CSV with `#` comments and an optional header line.
/// Errors carry 1-based line numbers.
pub fn parse_csv_rows(text: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if !header_seen && rows.is_empty() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            header_seen = true;
            if fields.len() != columns {
                return Err(Error::Parse { line: line_no, message: format!("header has {} columns, expected {columns}", fields.len()) });
            }
            continue;
        }
        if fields.len() != columns {
            return Err(Error::Parse { line: line_no, message: format!("expected {columns} fields, found {}", fields.len()) });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: line_no, message: format!("not a finite number: {f:?}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Sidecar written next to every trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub axis: ScanAxis,
    pub points: usize,
    pub metadata: TraceMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_date_epoch: Option<u64>,
}

pub fn trace_to_csv(trace: &ScanTrace) -> String {
    let mut s = String::with_capacity(trace.values.len() * 80 + 128);
    let m = &trace.metadata;
    let _ = writeln!(s, "# config_hash={} seed={}", m.config_hash, m.seed);
    s.push_str("axis,coordinate,mean_photon,stderr\n");
    for ((c, v), e) in trace.coordinates.iter().zip(&trace.values).zip(&trace.stderr) {
        let _ = writeln!(s, "{},{c:.16e},{v:.16e},{e:.16e}", trace.axis.as_str());
    }
    s
}

/// Writes `<stem>.csv` and `<stem>.json`; returns the CSV path.
pub fn write_trace(dir: &Path, stem: &str, trace: &ScanTrace) -> Result<PathBuf> {
    trace.validate()?;
    let csv = dir.join(format!("{stem}.csv"));
    write_atomic(&csv, trace_to_csv(trace).as_bytes())?;
    let sidecar = TraceSidecar {
        axis: trace.axis,
        points: trace.values.len(),
        metadata: trace.metadata.clone(),
        source_date_epoch: source_date_epoch(),
    };
    write_atomic(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok(csv)
}

/// Parses trace CSV text; metadata comes from the caller.
pub fn trace_from_csv(text: &str, metadata: TraceMetadata) -> Result<ScanTrace> {
    let mut axis = None;
    let mut coordinates = Vec::new();
    let mut values = Vec::new();
    let mut stderr = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != "axis,coordinate,mean_photon,stderr" {
                return Err(Error::Parse { line: line_no, message: "expected header axis,coordinate,mean_photon,stderr".into() });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse { line: line_no, message: format!("expected 4 fields, found {}", fields.len()) });
        }
        let a = ScanAxis::parse(fields[0])
            .ok_or_else(|| Error::Parse { line: line_no, message: format!("unknown axis {:?}", fields[0]) })?;
        if *axis.get_or_insert(a) != a {
            return Err(Error::Parse { line: line_no, message: "mixed axes in one trace".into() });
        }
        let num = |f: &str| {
            f.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line: line_no, message: format!("not a finite number: {f:?}") })
        };
        coordinates.push(num(fields[1])?);
        values.push(num(fields[2])?);
        stderr.push(num(fields[3])?);
    }
    let axis = axis.ok_or_else(|| Error::Parse { line: text.lines().count().max(1), message: "trace has no data rows".into() })?;
    let trace = ScanTrace { axis, coordinates, values, stderr, metadata };
    trace.validate()?;
    Ok(trace)
}

/// Reads `<stem>.csv` together with its `<stem>.json` sidecar.
pub fn read_trace(csv_path: &Path) -> Result<ScanTrace> {
    let text = std::fs::read_to_string(csv_path)?;
    let sidecar_path = csv_path.with_extension("json");
    let sidecar_text = std::fs::read_to_string(&sidecar_path)?;
    let sidecar: TraceSidecar =
        serde_json::from_str(&sidecar_text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    let trace = trace_from_csv(&text, sidecar.metadata)?;
    if trace.axis != sidecar.axis || trace.values.len() != sidecar.points {
        return Err(Error::InvalidInput(format!("{} does not match its sidecar", csv_path.display())));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamsim::Engine;

    fn trace() -> ScanTrace {
        ScanTrace {
            axis: ScanAxis::Z,
            coordinates: vec![0.0, 1e-7, 2e-7],
            values: vec![0.1, 1.0 / 3.0, 0.2],
            stderr: vec![0.0, 0.01, 0.02],
            metadata: TraceMetadata {
                mean_atom_number: 0.34,
                seed: 9,
                config_hash: "ab".into(),
                engine: Engine::SteadyState,
                fixed_position: [0.0, 0.0],
                mean_velocity: 830.0,
            },
        }
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = trace();
        let path = write_trace(dir.path(), "z", &t).unwrap();
        assert_eq!(read_trace(&path).unwrap(), t);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=ab seed=9\n"));
    }

    #[test]
    fn corrupt_csv_reports_line() {
        let text = "# c\naxis,coordinate,mean_photon,stderr\nz,0,1,0\nz,1e-7,oops,0\n";
        match trace_from_csv(text, trace().metadata) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match parse_csv_rows("x,y\n1,2\n3\n", 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.txt"), b"x").unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}
