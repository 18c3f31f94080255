//! CSV tables with JSON metadata sidecars.
//!
//! A data file `name.csv` is accompanied by `name.json`. Numbers are written
//! in shortest round-trip scientific notation so identical inputs give
//! byte-identical files, and every file is written to a temporary file in the
//! target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{invalid, Error, Result};
use crate::forward::{MeasurementTrace, PointCounts, ReadoutParams, SamplingPlan};
use crate::kernels::SensingKernel;
use crate::sensitivity::SensitivityPoint;
use crate::waveforms::SampledWaveform;

/// Named numeric columns of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| invalid(format!("missing column `{name}`")))
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// `dir/name.csv` → `dir/name.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_table(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(invalid("one header per column required"));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(invalid("columns differ in length"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| format!("{:e}", c[i])))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut columns = vec![Vec::new(); headers.len()];
    for (line, record) in r.records().enumerate() {
        let record = record?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v = field.parse::<f64>().map_err(|_| {
                invalid(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            col.push(v);
        }
    }
    Ok(Table { headers, columns })
}

fn uniform_grid(times: &[f64], path: &Path) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(invalid(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::BadGrid(format!(
            "{}: times must increase",
            path.display()
        )));
    }
    for (i, &t) in times.iter().enumerate() {
        if (t - times[0] - i as f64 * dt).abs() > 1e-6 * dt {
            return Err(Error::BadGrid(format!(
                "{}: samples are not uniformly spaced",
                path.display()
            )));
        }
    }
    Ok((times[0], dt))
}

fn object(meta: &Value) -> Map<String, Value> {
    match meta {
        Value::Object(m) => m.clone(),
        Value::Null => Map::new(),
        other => Map::from_iter([("meta".to_owned(), other.clone())]),
    }
}

/// Writes `time_s,<column>` and a sidecar with the grid and `meta`.
pub fn write_waveform(path: &Path, w: &SampledWaveform, column: &str, meta: &Value) -> Result<()> {
    let times: Vec<f64> = w.times().collect();
    write_table(path, &["time_s", column], &[&times, w.values()])?;
    let mut side = object(meta);
    side.insert("dt".into(), w.dt().into());
    side.insert("t0".into(), w.t0().into());
    side.insert("len".into(), w.len().into());
    write_json(&sidecar_path(path), &side)
}

/// Reads a two-column waveform; the second column holds the values.
pub fn read_waveform(path: &Path) -> Result<SampledWaveform> {
    let table = read_table(path)?;
    if table.headers.len() < 2 {
        return Err(invalid(format!(
            "{}: expected time and value columns",
            path.display()
        )));
    }
    let (t0, dt) = uniform_grid(&table.columns[0], path)?;
    SampledWaveform::new(dt, t0, table.columns[1].clone())
}

/// Oscilloscope record in volts, converted with the `volts_to_tesla` factor
/// from its sidecar.
pub fn import_scope_trace(path: &Path) -> Result<SampledWaveform> {
    let side: Map<String, Value> = read_json(&sidecar_path(path))?;
    let factor = side
        .get("volts_to_tesla")
        .and_then(Value::as_f64)
        .ok_or_else(|| {
            invalid(format!(
                "{}: sidecar lacks a numeric `volts_to_tesla`",
                path.display()
            ))
        })?;
    if !(factor.is_finite() && factor != 0.0) {
        return Err(invalid("volts_to_tesla must be finite and non-zero"));
    }
    Ok(read_waveform(path)?.scaled(factor))
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelSidecar {
    tau: f64,
    alpha: f64,
    omega_rabi: f64,
    t_min: f64,
    bandwidth: f64,
    baseline: f64,
    response_scale: f64,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

pub fn write_kernel(path: &Path, kernel: &SensingKernel, meta: &Value) -> Result<()> {
    let times: Vec<f64> = kernel.samples.times().collect();
    write_table(path, &["time_s", "k"], &[&times, kernel.samples.values()])?;
    write_json(
        &sidecar_path(path),
        &KernelSidecar {
            tau: kernel.tau,
            alpha: kernel.alpha,
            omega_rabi: kernel.omega_rabi,
            t_min: kernel.t_min,
            bandwidth: kernel.bandwidth,
            baseline: kernel.baseline,
            response_scale: kernel.response_scale,
            extra: object(meta),
        },
    )
}

pub fn read_kernel(path: &Path) -> Result<SensingKernel> {
    let side: KernelSidecar = read_json(&sidecar_path(path))?;
    let table = read_table(path)?;
    let (t0, dt) = uniform_grid(table.column("time_s")?, path)?;
    Ok(SensingKernel {
        samples: SampledWaveform::new(dt, t0, table.column("k")?.to_vec())?,
        tau: side.tau,
        alpha: side.alpha,
        omega_rabi: side.omega_rabi,
        t_min: side.t_min,
        bandwidth: side.bandwidth,
        baseline: side.baseline,
        response_scale: side.response_scale,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceSidecar {
    plan: SamplingPlan,
    readout: Option<ReadoutParams>,
    baseline: f64,
    calibration: f64,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// Columns `time_s,p,field_T`, plus raw counts when the trace has them.
pub fn write_trace(path: &Path, trace: &MeasurementTrace, meta: &Value) -> Result<()> {
    let mut headers = vec!["time_s", "p", "field_T"];
    let mut cols: Vec<Vec<f64>> = vec![
        trace.times.clone(),
        trace.p_values.clone(),
        trace.field_values.clone(),
    ];
    if let Some(counts) = &trace.counts {
        headers.extend(["signal", "bright", "dark"]);
        cols.push(counts.iter().map(|c| c.signal).collect());
        cols.push(counts.iter().map(|c| c.bright).collect());
        cols.push(counts.iter().map(|c| c.dark).collect());
    }
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_table(path, &headers, &refs)?;
    write_json(
        &sidecar_path(path),
        &TraceSidecar {
            plan: trace.plan,
            readout: trace.readout,
            baseline: trace.baseline,
            calibration: trace.calibration,
            extra: object(meta),
        },
    )
}

pub fn read_trace(path: &Path) -> Result<MeasurementTrace> {
    let side: TraceSidecar = read_json(&sidecar_path(path))?;
    let table = read_table(path)?;
    let mut trace = MeasurementTrace::from_probabilities(
        side.plan,
        table.column("p")?.to_vec(),
        side.baseline,
        side.calibration,
        side.readout,
    )?;
    if let (Ok(s), Ok(b), Ok(d)) = (
        table.column("signal"),
        table.column("bright"),
        table.column("dark"),
    ) {
        trace.counts = Some(
            s.iter()
                .zip(b)
                .zip(d)
                .map(|((&signal, &bright), &dark)| PointCounts {
                    signal,
                    bright,
                    dark,
                })
                .collect(),
        );
    }
    Ok(trace)
}

pub fn write_tradeoff(path: &Path, points: &[SensitivityPoint], meta: &Value) -> Result<()> {
    let col = |f: fn(&SensitivityPoint) -> f64| points.iter().map(f).collect::<Vec<f64>>();
    let (a, tau, t_min, b) = (
        col(|p| p.alpha),
        col(|p| p.tau),
        col(|p| p.t_min),
        col(|p| p.b_min),
    );
    write_table(
        path,
        &["alpha_rad", "tau_s", "t_min_s", "b_min_T"],
        &[&a, &tau, &t_min, &b],
    )?;
    write_json(&sidecar_path(path), &object(meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ideal_response, SamplingPlan};
    use crate::kernels::{analytic_kernel, PulsePairSpec};
    use crate::waveforms::TimeGrid;
    use serde_json::json;

    fn kernel() -> SensingKernel {
        let spec = PulsePairSpec::from_rabi_and_alpha(
            2.0 * std::f64::consts::PI * 125e6,
            1.2,
            1.17e10,
            1.76e11,
        )
        .unwrap();
        analytic_kernel(&spec, &TimeGrid::symmetric(10e-12, 2.5e-9).unwrap()).unwrap()
    }

    #[test]
    fn table_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let a = [0.1, -3.3e-12, 1.0 / 3.0];
        let b = [f64::MIN_POSITIVE, 2.0, -0.0];
        write_table(&path, &["a", "b"], &[&a, &b]).unwrap();
        let t = read_table(&path).unwrap();
        assert_eq!(t.headers, ["a", "b"]);
        assert_eq!(t.column("a").unwrap(), a);
        assert_eq!(t.column("b").unwrap(), b);
        assert!(t.column("c").is_err());
    }

    #[test]
    fn kernel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let k = kernel();
        write_kernel(&path, &k, &json!({"source": "analytic"})).unwrap();
        let back = read_kernel(&path).unwrap();
        assert_eq!(back.tau, k.tau);
        assert_eq!(back.samples.values(), k.samples.values());
        assert!((back.samples.dt() - k.samples.dt()).abs() < 1e-24);
        let side: Value = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(side["source"], "analytic");
        assert!(side["t_min"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let k = kernel();
        let signal =
            SampledWaveform::on_range(5e-12, -5e-9, 5e-9, |t| 1e-4 * (-(t / 1e-9).powi(2)).exp())
                .unwrap();
        let plan = SamplingPlan::new(-2e-9, 2e-9, 50e-12).unwrap().with_seed(9);
        let trace = ideal_response(&k, &signal, &plan, 1.76e11).unwrap();
        write_trace(&path, &trace, &Value::Null).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.p_values, trace.p_values);
        assert_eq!(back.plan, trace.plan);
        assert_eq!(back.calibration, trace.calibration);
    }

    #[test]
    fn scope_import_applies_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scope.csv");
        fs::write(&path, "time_s,volts\n0,0.5\n1e-10,1.0\n2e-10,-0.25\n").unwrap();
        assert!(import_scope_trace(&path).is_err());
        fs::write(sidecar_path(&path), r#"{"volts_to_tesla": 2e-3}"#).unwrap();
        let w = import_scope_trace(&path).unwrap();
        assert_eq!(w.values(), [1e-3, 2e-3, -0.5e-3]);
        assert!((w.dt() - 1e-10).abs() < 1e-22);
    }

    #[test]
    fn uneven_times_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        fs::write(&path, "time_s,v\n0,1\n1,2\n3,4\n").unwrap();
        assert!(matches!(read_waveform(&path), Err(Error::BadGrid(_))));
    }

    #[test]
    fn identical_writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let w = SampledWaveform::on_range(1e-11, 0.0, 1e-9, |t| (t * 1e10).sin()).unwrap();
        write_waveform(&p1, &w, "field_T", &json!({"kind": "test"})).unwrap();
        write_waveform(&p2, &w, "field_T", &json!({"kind": "test"})).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read(sidecar_path(&p1)).unwrap(),
            fs::read(sidecar_path(&p2)).unwrap()
        );
        let back = read_waveform(&p1).unwrap();
        assert_eq!(back.values(), w.values());
    }
}
