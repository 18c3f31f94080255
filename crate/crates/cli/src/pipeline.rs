//! Scenario stages: kernel, input waveform, measured trace, reconstruction.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qmag_core::io::{
    write_atomic, write_json, write_kernel, write_trace, write_tradeoff, write_waveform,
};
use qmag_core::units::angular_to_hz;
use qmag_core::waveforms::{
    disk_reversal_transient, distorted_pulse_pair, domain_wall_transient, step_pulse, tof_pair,
};
use qmag_core::{
    analytic_kernel, estimate_tof, fwhm, min_detectable_field, sample_trace, simulate_kernel,
    tradeoff_curve, wiener_deconvolve, DistortionModel, MeasurementTrace, PulsePairSpec,
    ReadoutParams, Responder, SampledWaveform, SamplingPlan, SensingKernel, StimulusConfig,
    TimeGrid,
};
use serde_json::{json, Value};

use crate::config::{KernelMethod, ResponseModel, Scenario, Signal, Sweep};

/// Kernel plus the drive it was simulated from, if any.
pub struct KernelBuild {
    pub kernel: SensingKernel,
    pub drive: Option<SampledWaveform>,
}

pub fn build_kernel(
    sc: &Scenario,
    spec: &PulsePairSpec,
    distortion: &DistortionModel,
) -> qmag_core::Result<KernelBuild> {
    match sc.kernel {
        KernelMethod::Analytic { step } => {
            let grid = TimeGrid::symmetric(step, spec.tau / 2.0 + 0.5e-9)?;
            Ok(KernelBuild {
                kernel: analytic_kernel(spec, &grid)?.two_level_response(),
                drive: None,
            })
        }
        KernelMethod::Simulated {
            drive_dt,
            stimulus_width,
            step,
        } => {
            let drive = distorted_pulse_pair(spec, drive_dt, distortion)?;
            let stim = StimulusConfig {
                width: stimulus_width,
                grid_step: step,
                ..StimulusConfig::default_for(&sc.nv, drive_dt)
            };
            Ok(KernelBuild {
                kernel: simulate_kernel(&sc.nv, &drive, spec, &stim)?,
                drive: Some(drive),
            })
        }
    }
}

/// Input waveform; for a time-of-flight pair this is the undelayed copy.
pub fn synthesize(signal: &Signal) -> qmag_core::Result<SampledWaveform> {
    match signal {
        Signal::DomainWall(wall, grid) => domain_wall_transient(wall, grid),
        Signal::Disk {
            scenario,
            grid,
            starts,
        } => {
            // one transient long enough for every segment, then alternate its sign
            let first = starts[0];
            let last = starts[starts.len() - 1];
            let span = TimeGrid::new(grid.step, grid.start - last, grid.end - first)?;
            let base = disk_reversal_transient(scenario, &span)?;
            grid.sample(|t| {
                let k = starts.iter().rposition(|&s| s <= t).unwrap_or(0);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * base.value_at(t - starts[k])
            })
        }
        Signal::Step {
            amplitude,
            rise,
            duration,
            grid,
        }
        | Signal::TofPair {
            amplitude,
            rise,
            duration,
            grid,
            ..
        } => step_pulse(*amplitude, *rise, *duration, grid),
        Signal::File(w) => Ok(w.clone()),
    }
}

pub fn measure(
    sc: &Scenario,
    build: &KernelBuild,
    signal: &SampledWaveform,
    plan: &SamplingPlan,
    readout: &ReadoutParams,
) -> qmag_core::Result<MeasurementTrace> {
    let responder = match (sc.response, &build.drive) {
        (ResponseModel::Spin, Some(drive)) => Responder::Full {
            params: &sc.nv,
            drive,
            signal,
            kernel: &build.kernel,
        },
        _ => Responder::Ideal {
            kernel: &build.kernel,
            signal,
            gamma: sc.nv.gyromagnetic_ratio,
        },
    };
    sample_trace(&responder, plan, readout)
}

fn noiseless(
    sc: &Scenario,
    build: &KernelBuild,
    signal: &SampledWaveform,
    plan: &SamplingPlan,
    readout: &ReadoutParams,
) -> qmag_core::Result<MeasurementTrace> {
    let plan = SamplingPlan {
        trigger_jitter_rms: 0.0,
        ..*plan
    };
    measure(sc, build, signal, &plan, &readout.noiseless())
}

pub fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()).max(1);
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt()
}

pub fn waveform_metrics(w: &SampledWaveform) -> Value {
    let i = w.argmax_abs();
    json!({
        "peak_T": w.values()[i],
        "peak_time_s": w.time(i),
        "fwhm_s": fwhm(w).ok(),
    })
}

pub fn kernel_metrics(k: &SensingKernel) -> Value {
    json!({
        "tau_s": k.tau,
        "alpha_rad": k.alpha,
        "rabi_rad_s": k.omega_rabi,
        "t_min_s": k.t_min,
        "baseline": k.baseline,
        "response_scale": k.response_scale,
        "integral_s": k.integral(),
    })
}

/// Compact decimal label for file names: 67.5 → "67.5", 90 → "90".
pub fn label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

struct Writer<'a> {
    sc: &'a Scenario,
    config: Value,
}

impl Writer<'_> {
    fn meta(&self, stage: &str, point: &Value) -> Value {
        json!({
            "scenario": self.sc.name(),
            "seed": self.sc.seed(),
            "stage": stage,
            "point": point,
            "config": self.config,
        })
    }
}

fn io<T>(r: qmag_core::Result<T>, path: &Path) -> Result<T> {
    r.with_context(|| format!("writing {}", path.display()))
}

/// Runs every configured stage and writes the artifacts under `out`.
/// Returns the summary also written to `out/summary.json`.
pub fn run(sc: &Scenario, out: &Path) -> Result<Value> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let w = Writer {
        sc,
        config: serde_json::to_value(&sc.file)?,
    };
    let scenario_path = out.join("scenario.toml");
    io(
        write_atomic(&scenario_path, toml::to_string(&sc.file)?.as_bytes()),
        &scenario_path,
    )?;

    let mut summary = serde_json::Map::new();
    summary.insert("scenario".into(), sc.name().into());
    summary.insert("seed".into(), sc.seed().into());

    if let Some(sens) = &sc.sensitivity {
        summary.insert("sensitivity".into(), run_sensitivity(sc, sens, out, &w)?);
    }

    let points: Vec<(Option<String>, PulsePairSpec, Option<f64>)> = match &sc.sweep {
        Sweep::None => vec![(None, sc.pulse, None)],
        Sweep::Alpha(alphas) => alphas
            .iter()
            .zip(sc.file.sweep.alpha_deg.iter().flatten())
            .map(|(&a, &deg)| {
                Ok((
                    Some(format!("alpha_{}", label(deg))),
                    sc.pulse_with_alpha(a)?,
                    None,
                ))
            })
            .collect::<qmag_core::Result<_>>()
            .context("building the swept pulse pairs")?,
        Sweep::Lambda(ls) => ls
            .iter()
            .map(|&l| (Some(format!("lambda_{}", label(l))), sc.pulse, Some(l)))
            .collect(),
    };

    // a λ sweep shares one kernel, one input and one measured trace
    let mut shared: Option<Prepared> = None;
    let mut results = Vec::new();
    for (name, spec, lambda) in points {
        let dir = match &name {
            Some(n) => out.join(n),
            None => out.to_path_buf(),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let point = json!({
            "alpha_rad": spec.alpha,
            "tau_s": spec.tau,
            "rabi_rad_s": spec.rabi,
            "lambda": lambda,
        });
        let metrics = match &sc.signal {
            None => kernel_stage(sc, &spec, &dir, &w, &point)?.1,
            Some(Signal::TofPair { delays, .. }) => run_tof(sc, &spec, delays, &dir, &w, &point)?,
            Some(signal) => {
                if shared.is_none() || lambda.is_none() {
                    shared = Some(prepare(sc, &spec, signal)?);
                }
                let (build, input, noisy, clean) = shared.as_ref().expect("just set");
                measurement_stage(
                    sc, &spec, build, input, noisy, clean, lambda, &dir, &w, &point,
                )?
            }
        };
        let metrics_path = dir.join("metrics.json");
        io(write_json(&metrics_path, &metrics), &metrics_path)?;
        results.push(json!({ "point": name, "metrics": metrics }));
    }
    summary.insert("points".into(), Value::Array(results));
    let summary = Value::Object(summary);
    let path = out.join("summary.json");
    io(write_json(&path, &summary), &path)?;
    Ok(summary)
}

type Prepared = (
    KernelBuild,
    SampledWaveform,
    MeasurementTrace,
    MeasurementTrace,
);

/// Kernel, input and the noisy and noiseless traces of one pulse setting.
fn prepare(sc: &Scenario, spec: &PulsePairSpec, signal: &Signal) -> Result<Prepared> {
    let build = build_kernel(sc, spec, &sc.distortion).context("computing the sensing kernel")?;
    let input = synthesize(signal).context("synthesizing the input waveform")?;
    let plan = sc.plan.expect("checked with the signal");
    let readout = sc.readout.expect("checked with the signal");
    let noisy = measure(sc, &build, &input, &plan, &readout).context("sampling the trace")?;
    let clean =
        noiseless(sc, &build, &input, &plan, &readout).context("sampling the noiseless trace")?;
    Ok((build, input, noisy, clean))
}

fn kernel_stage(
    sc: &Scenario,
    spec: &PulsePairSpec,
    dir: &Path,
    w: &Writer<'_>,
    point: &Value,
) -> Result<(KernelBuild, Value)> {
    let build = build_kernel(sc, spec, &sc.distortion).context("computing the sensing kernel")?;
    let metrics = write_kernel_files(sc, spec, &build, dir, w, point)?;
    Ok((build, metrics))
}

/// Writes the kernel, the undistorted kernel when a distortion is set, and the drive.
fn write_kernel_files(
    sc: &Scenario,
    spec: &PulsePairSpec,
    build: &KernelBuild,
    dir: &Path,
    w: &Writer<'_>,
    point: &Value,
) -> Result<Value> {
    let path = dir.join("kernel.csv");
    io(
        write_kernel(&path, &build.kernel, &w.meta("kernel", point)),
        &path,
    )?;
    let mut metrics = json!({ "kernel": kernel_metrics(&build.kernel) });
    if !matches!(sc.distortion, DistortionModel::None) {
        let ideal = build_kernel(sc, spec, &DistortionModel::None)
            .context("computing the undistorted kernel")?;
        let path = dir.join("kernel_ideal.csv");
        io(
            write_kernel(&path, &ideal.kernel, &w.meta("kernel_ideal", point)),
            &path,
        )?;
        metrics["kernel_ideal"] = kernel_metrics(&ideal.kernel);
        if ideal.kernel.t_min > 0.0 {
            metrics["t_min_ratio"] = (build.kernel.t_min / ideal.kernel.t_min).into();
        }
    }
    if let Some(drive) = &build.drive {
        let path = dir.join("drive.csv");
        io(
            write_waveform(&path, drive, "b1_T", &w.meta("drive", point)),
            &path,
        )?;
    }
    Ok(metrics)
}

#[allow(clippy::too_many_arguments)]
fn measurement_stage(
    sc: &Scenario,
    spec: &PulsePairSpec,
    build: &KernelBuild,
    input: &SampledWaveform,
    noisy: &MeasurementTrace,
    clean: &MeasurementTrace,
    lambda: Option<f64>,
    dir: &Path,
    w: &Writer<'_>,
    point: &Value,
) -> Result<Value> {
    let gamma = sc.nv.gyromagnetic_ratio;
    let mut metrics = write_kernel_files(sc, spec, build, dir, w, point)?;
    let path = dir.join("input.csv");
    io(
        write_waveform(&path, input, "field_T", &w.meta("waveform", point)),
        &path,
    )?;
    let path = dir.join("trace.csv");
    io(write_trace(&path, noisy, &w.meta("measure", point)), &path)?;

    let field = noisy.field_waveform()?;
    metrics["input"] = waveform_metrics(input);
    metrics["trace"] = waveform_metrics(&clean.field_waveform()?);
    metrics["trace"]["points"] = noisy.len().into();
    metrics["trace"]["noise_rms_T"] =
        rms_difference(&noisy.field_values, &clean.field_values).into();
    metrics["trace"]["noisy_peak_T"] = waveform_metrics(&field)["peak_T"].clone();
    if let Some(r) = noisy.readout {
        metrics["trace"]["reference_counts"] = r.reference_counts().into();
        if let Ok(b) = min_detectable_field(
            build.kernel.alpha,
            build.kernel.tau,
            r.contrast,
            gamma,
            r.reference_counts(),
        ) {
            metrics["b_min_T"] = b.into();
        }
    }

    if let Some(recon) = &sc.recon {
        if let Some(tau3) = recon.display_filter {
            let filtered = noisy
                .display_filtered(tau3)
                .context("filtering the trace for display")?;
            let path = dir.join("trace_filtered.csv");
            io(
                write_trace(&path, &filtered, &w.meta("display_filter", point)),
                &path,
            )?;
        }
        let cfg = qmag_core::WienerConfig {
            lambda: lambda.unwrap_or(recon.wiener.lambda),
            ..recon.wiener
        };
        let rec = wiener_deconvolve(noisy, &build.kernel, gamma, &cfg)
            .context("deconvolving the trace")?;
        let rec_clean = wiener_deconvolve(clean, &build.kernel, gamma, &cfg)
            .context("deconvolving the noiseless trace")?;
        let path = dir.join("reconstruction.csv");
        let mut meta = w.meta("deconvolve", point);
        meta["wiener"] = serde_json::to_value(cfg)?;
        io(write_waveform(&path, &rec, "field_T", &meta), &path)?;
        let mut m = waveform_metrics(&rec_clean);
        m["lambda"] = cfg.lambda.into();
        m["noise_rms_T"] = rms_difference(rec.values(), rec_clean.values()).into();
        metrics["reconstruction"] = m;
    }
    Ok(metrics)
}

fn run_tof(
    sc: &Scenario,
    spec: &PulsePairSpec,
    delays: &[f64],
    dir: &Path,
    w: &Writer<'_>,
    point: &Value,
) -> Result<Value> {
    let (build, kmetrics) = kernel_stage(sc, spec, dir, w, point)?;
    let base = synthesize(sc.signal.as_ref().expect("tof signal"))
        .context("synthesizing the base waveform")?;
    let plan = sc.plan.expect("checked with the signal");
    let readout = sc.readout.expect("checked with the signal");
    let mut rows = Vec::new();
    for (i, &delay) in delays.iter().enumerate() {
        let sub: PathBuf = dir.join(format!("tof_{}ps", label(delay * 1e12)));
        fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
        let (a, b) = tof_pair(&base, delay).context("shifting the base waveform")?;
        // disjoint seed blocks per run seed keep neighbouring runs independent
        let seed_a = sc.seed().wrapping_mul(1 << 16).wrapping_add(2 * i as u64);
        let pa = plan.with_seed(seed_a);
        let pb = plan.with_seed(seed_a.wrapping_add(1));
        let ta = measure(sc, &build, &a, &pa, &readout).context("sampling trace A")?;
        let tb = measure(sc, &build, &b, &pb, &readout).context("sampling trace B")?;
        let mut p = point.clone();
        p["nominal_delay_s"] = delay.into();
        for (name, wf, tr) in [("a", &a, &ta), ("b", &b, &tb)] {
            let path = sub.join(format!("input_{name}.csv"));
            io(
                write_waveform(&path, wf, "field_T", &w.meta("waveform", &p)),
                &path,
            )?;
            let path = sub.join(format!("trace_{name}.csv"));
            io(write_trace(&path, tr, &w.meta("measure", &p)), &path)?;
        }
        let r = estimate_tof(&ta, &tb, &sc.tof)
            .with_context(|| format!("estimating the delay for δt = {delay:e} s"))?;
        let result = tof_json(&r, Some(delay));
        let mut out = result.clone();
        out["tof_config"] = serde_json::to_value(sc.tof)?;
        out["traces"] = json!(["trace_a.csv", "trace_b.csv"]);
        let path = sub.join("tof.json");
        io(write_json(&path, &out), &path)?;
        rows.push(result);
    }
    Ok(json!({ "kernel": kmetrics["kernel"], "tof": rows }))
}

pub fn tof_json(r: &qmag_core::ToFResult, nominal: Option<f64>) -> Value {
    let mut v = json!({
        "delay_s": r.delay,
        "uncertainty_s": r.uncertainty,
        "fit_uncertainty_s": r.fit_uncertainty,
        "peak_amplitude": r.peak_amplitude,
        "width_s": r.width,
        "snr": r.snr,
    });
    if let Some(d) = nominal {
        v["nominal_delay_s"] = d.into();
        v["error_s"] = (r.delay - d).into();
    }
    v
}

fn run_sensitivity(
    sc: &Scenario,
    sens: &crate::config::Sensitivity,
    out: &Path,
    w: &Writer<'_>,
) -> Result<Value> {
    let readout = sc.readout.expect("checked with the sensitivity section");
    let gamma = sc.nv.gyromagnetic_ratio;
    let c0 = readout.reference_counts();
    let mut curves = Vec::new();
    for &rabi in &sens.rabi {
        let mhz = label(angular_to_hz(rabi) / 1e6);
        let points = tradeoff_curve(&sens.alphas, rabi, readout.contrast, gamma, c0)
            .with_context(|| format!("trade-off curve at {mhz} MHz"))?;
        let path = out.join(format!("tradeoff_{mhz}mhz.csv"));
        io(
            write_tradeoff(
                &path,
                &points,
                &w.meta("sensitivity", &json!({ "rabi_rad_s": rabi })),
            ),
            &path,
        )?;
        curves.push(json!({ "rabi_mhz": angular_to_hz(rabi) / 1e6, "file": path.file_name().map(|f| f.to_string_lossy().into_owned()) }));
    }
    let mut kernels = Vec::new();
    for &alpha in &sens.kernel_alphas {
        let spec = sc
            .pulse_with_alpha(alpha)
            .context("pulse pair for the kernel family")?;
        let build =
            build_kernel(sc, &spec, &sc.distortion).context("computing a kernel of the family")?;
        let path = out.join(format!("kernel_alpha_{}.csv", label(alpha.to_degrees())));
        io(
            write_kernel(
                &path,
                &build.kernel,
                &w.meta("kernel", &json!({ "alpha_rad": alpha })),
            ),
            &path,
        )?;
        kernels.push(kernel_metrics(&build.kernel));
    }
    let b_min = min_detectable_field(sc.pulse.alpha, sc.pulse.tau, readout.contrast, gamma, c0)
        .context("sensitivity of the configured pulse")?;
    Ok(json!({
        "reference_counts": c0,
        "b_min_T": b_min,
        "curves": curves,
        "kernels": kernels,
    }))
}
