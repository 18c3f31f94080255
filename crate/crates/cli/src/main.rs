//! `qmag`: time-resolved NV magnetometry scenarios from the command line.
//!
//! Exit status 0 on success, 2 for configuration or usage errors and 3 when
//! a numerical stage fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod pipeline;
mod presets;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use qmag_core::io::{
    read_kernel, read_trace, read_waveform, write_json, write_kernel, write_trace, write_tradeoff,
    write_waveform,
};
use qmag_core::recon::Window;
use qmag_core::units::{deg_to_rad, hz_to_angular, NV_GAMMA_HZ_PER_T};
use qmag_core::{
    estimate_tof, min_detectable_field, tradeoff_curve, wiener_deconvolve, ToFConfig, WienerConfig,
};
use serde_json::json;

use config::{ConfigError, Scenario};
use pipeline::KernelBuild;

#[derive(Parser)]
#[command(
    name = "qmag",
    version,
    about = "Time-resolved magnetometry with a single NV spin"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline of a scenario file or bundled preset.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { config: String },
    /// Compute the sensing kernel of a scenario.
    Kernel {
        config: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Override the rotation angle at fixed Rabi frequency.
        #[arg(long)]
        alpha_deg: Option<f64>,
    },
    /// Synthesize the input waveform of a scenario.
    Waveform {
        config: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Delay the waveform (time-of-flight scenarios).
        #[arg(long, default_value_t = 0.0)]
        delay_ps: f64,
    },
    /// Sample a noisy trace with the scenario's plan and readout.
    Measure {
        config: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Input waveform CSV; synthesized from the scenario when absent.
        #[arg(long)]
        signal: Option<PathBuf>,
        /// Kernel CSV; computed from the scenario when absent.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Wiener-deconvolve a trace by a kernel.
    Deconvolve {
        trace: PathBuf,
        kernel: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Raised-cosine taper fraction at each end of the record.
        #[arg(long, default_value_t = 0.05)]
        taper: f64,
        #[arg(long, default_value_t = NV_GAMMA_HZ_PER_T / 1e9)]
        gamma_ghz_per_t: f64,
    },
    /// Delay of trace B relative to trace A.
    Tof {
        trace_a: PathBuf,
        trace_b: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 32)]
        bootstrap: usize,
    },
    /// Minimum detectable field against time resolution.
    Sensitivity {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 125.0)]
        rabi_mhz: f64,
        #[arg(long, default_value_t = 0.35)]
        contrast: f64,
        /// Reference counts C0 per point.
        #[arg(long, default_value_t = 2.4e5)]
        reference_counts: f64,
        #[arg(long, default_value_t = 5.0)]
        alpha_min_deg: f64,
        #[arg(long, default_value_t = 90.0)]
        alpha_max_deg: f64,
        #[arg(long, default_value_t = 35)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(3)
            }
        }
    }
}

fn config_error(what: impl std::fmt::Display, e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError::single(what.to_string(), e.to_string()).into()
}

fn load(config: &str) -> Result<Scenario> {
    Ok(config::load(config)?)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => {
            let mut sc = load(&config)?;
            if let Some(seed) = seed {
                sc.file.seed = seed;
                if let Some(plan) = &mut sc.plan {
                    plan.rng_seed = seed;
                }
            }
            let dir = out.unwrap_or_else(|| sc.output_dir());
            let summary = pipeline::run(&sc, &dir)?;
            print_summary(&summary);
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Validate { config } => {
            let sc = load(&config)?;
            println!("{config}: ok ({})", sc.name());
            Ok(())
        }
        Command::Kernel {
            config,
            out,
            alpha_deg,
        } => {
            let sc = load(&config)?;
            let spec = match alpha_deg {
                Some(a) => sc
                    .pulse_with_alpha(deg_to_rad(a))
                    .map_err(|e| config_error("--alpha-deg", e))?,
                None => sc.pulse,
            };
            let build = pipeline::build_kernel(&sc, &spec, &sc.distortion)
                .context("computing the sensing kernel")?;
            let meta = json!({ "scenario": sc.name(), "stage": "kernel", "config": sc.file, "alpha_rad": spec.alpha });
            write_kernel(&out, &build.kernel, &meta)?;
            println!(
                "kernel τ = {:.3} ns, α = {:.2}°, t_min = {:.3} ns → {}",
                spec.tau * 1e9,
                spec.alpha.to_degrees(),
                build.kernel.t_min * 1e9,
                out.display()
            );
            Ok(())
        }
        Command::Waveform {
            config,
            out,
            delay_ps,
        } => {
            let sc = load(&config)?;
            let signal = sc
                .signal
                .as_ref()
                .ok_or_else(|| config_error(&config, "scenario has no [signal] section"))?;
            let mut w = pipeline::synthesize(signal).context("synthesizing the input waveform")?;
            if delay_ps != 0.0 {
                w = qmag_core::waveforms::shift_waveform(&w, delay_ps * 1e-12)?;
            }
            let meta = json!({ "scenario": sc.name(), "stage": "waveform", "config": sc.file, "delay_s": delay_ps * 1e-12 });
            write_waveform(&out, &w, "field_T", &meta)?;
            println!(
                "{} samples, peak |B| = {:.3e} T → {}",
                w.len(),
                w.max_abs(),
                out.display()
            );
            Ok(())
        }
        Command::Measure {
            config,
            out,
            signal,
            kernel,
            seed,
        } => {
            let sc = load(&config)?;
            let (Some(mut plan), Some(readout)) = (sc.plan, sc.readout) else {
                return Err(config_error(
                    &config,
                    "measuring needs [plan] and [readout] sections",
                ));
            };
            if let Some(s) = seed {
                plan.rng_seed = s;
            }
            let input = match (&signal, &sc.signal) {
                (Some(p), _) => read_input(p, read_waveform)?,
                (None, Some(s)) => {
                    pipeline::synthesize(s).context("synthesizing the input waveform")?
                }
                (None, None) => {
                    return Err(config_error(
                        &config,
                        "no --signal given and the scenario has no [signal] section",
                    ));
                }
            };
            let build = match &kernel {
                Some(p) => KernelBuild {
                    kernel: read_input(p, read_kernel)?,
                    drive: None,
                },
                None => pipeline::build_kernel(&sc, &sc.pulse, &sc.distortion)
                    .context("computing the sensing kernel")?,
            };
            let trace = pipeline::measure(&sc, &build, &input, &plan, &readout)
                .context("sampling the trace")?;
            let meta = json!({
                "scenario": sc.name(),
                "stage": "measure",
                "config": sc.file,
                "signal_file": signal,
                "kernel_file": kernel,
            });
            write_trace(&out, &trace, &meta)?;
            println!(
                "{} points, C0 = {:.3e} → {}",
                trace.len(),
                readout.reference_counts(),
                out.display()
            );
            Ok(())
        }
        Command::Deconvolve {
            trace,
            kernel,
            out,
            lambda,
            taper,
            gamma_ghz_per_t,
        } => {
            let t = read_input(&trace, read_trace)?;
            let k = read_input(&kernel, read_kernel)?;
            if !(0.0..=0.5).contains(&taper) {
                return Err(config_error(
                    "--taper",
                    "taper fraction must lie in [0, 0.5]",
                ));
            }
            if !(gamma_ghz_per_t > 0.0) {
                return Err(config_error(
                    "--gamma-ghz-per-t",
                    "gyromagnetic ratio must be positive",
                ));
            }
            let cfg = WienerConfig {
                lambda,
                window: if taper == 0.0 {
                    Window::None
                } else {
                    Window::Taper { fraction: taper }
                },
                ..WienerConfig::new(lambda)
            };
            cfg.validate().map_err(|e| config_error("--lambda", e))?;
            let gamma = hz_to_angular(gamma_ghz_per_t * 1e9);
            let rec = wiener_deconvolve(&t, &k, gamma, &cfg).context("deconvolving the trace")?;
            let meta = json!({
                "stage": "deconvolve",
                "trace_file": trace,
                "kernel_file": kernel,
                "gamma_rad_per_s_t": gamma,
                "wiener": cfg,
            });
            write_waveform(&out, &rec, "field_T", &meta)?;
            println!("reconstruction with λ = {lambda} → {}", out.display());
            Ok(())
        }
        Command::Tof {
            trace_a,
            trace_b,
            out,
            lambda,
            bootstrap,
        } => {
            let a = read_input(&trace_a, read_trace)?;
            let b = read_input(&trace_b, read_trace)?;
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(config_error(
                    "--lambda",
                    "regularization λ must be positive",
                ));
            }
            let cfg = ToFConfig {
                lambda,
                bootstrap,
                ..ToFConfig::default()
            };
            let r = estimate_tof(&a, &b, &cfg).context("estimating the delay")?;
            let mut v = pipeline::tof_json(&r, None);
            v["tof_config"] = serde_json::to_value(cfg)?;
            v["traces"] = json!([trace_a, trace_b]);
            write_json(&out, &v)?;
            println!(
                "δt = {:.2} ± {:.2} ps (fit {:.2} ps) → {}",
                r.delay * 1e12,
                r.uncertainty * 1e12,
                r.fit_uncertainty * 1e12,
                out.display()
            );
            Ok(())
        }
        Command::Sensitivity {
            out,
            rabi_mhz,
            contrast,
            reference_counts,
            alpha_min_deg,
            alpha_max_deg,
            points,
        } => {
            if !(alpha_min_deg > 0.0
                && alpha_max_deg <= 90.0
                && alpha_max_deg > alpha_min_deg
                && points >= 2)
            {
                return Err(config_error(
                    "--alpha-min-deg/--alpha-max-deg/--points",
                    "need 0 < alpha_min < alpha_max ≤ 90 and at least two points",
                ));
            }
            if !(rabi_mhz > 0.0 && contrast > 0.0 && contrast < 1.0 && reference_counts > 0.0) {
                return Err(config_error(
                    "--rabi-mhz/--contrast/--reference-counts",
                    "Rabi frequency and counts must be positive, contrast in (0, 1)",
                ));
            }
            let gamma = hz_to_angular(NV_GAMMA_HZ_PER_T);
            let rabi = hz_to_angular(rabi_mhz * 1e6);
            let alphas: Vec<f64> = (0..points)
                .map(|i| {
                    deg_to_rad(
                        alpha_min_deg
                            + (alpha_max_deg - alpha_min_deg) * i as f64 / (points - 1) as f64,
                    )
                })
                .collect();
            let curve = tradeoff_curve(&alphas, rabi, contrast, gamma, reference_counts)
                .context("trade-off curve")?;
            let meta = json!({
                "stage": "sensitivity",
                "rabi_rad_s": rabi,
                "contrast": contrast,
                "reference_counts": reference_counts,
                "gamma_rad_per_s_t": gamma,
            });
            write_tradeoff(&out, &curve, &meta)?;
            let b = min_detectable_field(
                std::f64::consts::FRAC_PI_2,
                std::f64::consts::PI / rabi,
                contrast,
                gamma,
                reference_counts,
            )?;
            println!(
                "B_min(α = 90°) = {:.2} µT; {} points → {}",
                b * 1e6,
                curve.len(),
                out.display()
            );
            Ok(())
        }
    }
}

/// Reads an input file; failures are configuration errors.
fn read_input<T>(path: &Path, read: impl Fn(&Path) -> qmag_core::Result<T>) -> Result<T> {
    read(path).map_err(|e| config_error(path.display(), e))
}

fn print_summary(summary: &serde_json::Value) {
    let name = summary["scenario"].as_str().unwrap_or("");
    if let Some(s) = summary.get("sensitivity") {
        println!(
            "{name}: B_min = {:.2} µT at the configured pulse",
            s["b_min_T"].as_f64().unwrap_or(f64::NAN) * 1e6
        );
    }
    for p in summary["points"].as_array().into_iter().flatten() {
        let label = p["point"].as_str().unwrap_or(name);
        let m = &p["metrics"];
        let mut parts = vec![format!(
            "t_min {:.3} ns",
            m["kernel"]["t_min_s"].as_f64().unwrap_or(f64::NAN) * 1e9
        )];
        if let Some(r) = m.get("t_min_ratio").and_then(|v| v.as_f64()) {
            parts.push(format!("distorted/ideal {r:.4}"));
        }
        if let Some(t) = m.get("trace") {
            parts.push(format!(
                "trace FWHM {} ns, noise {:.2} µT",
                fmt_ns(&t["fwhm_s"]),
                t["noise_rms_T"].as_f64().unwrap_or(f64::NAN) * 1e6
            ));
        }
        if let Some(r) = m.get("reconstruction") {
            parts.push(format!(
                "recon FWHM {} ns, noise {:.2} µT",
                fmt_ns(&r["fwhm_s"]),
                r["noise_rms_T"].as_f64().unwrap_or(f64::NAN) * 1e6
            ));
        }
        for t in m
            .get("tof")
            .and_then(|v| v.as_array())
            .into_iter()
            .flatten()
        {
            parts.push(format!(
                "δt {:.0} ps → {:.1} ± {:.1} ps",
                t["nominal_delay_s"].as_f64().unwrap_or(f64::NAN) * 1e12,
                t["delay_s"].as_f64().unwrap_or(f64::NAN) * 1e12,
                t["uncertainty_s"].as_f64().unwrap_or(f64::NAN) * 1e12
            ));
        }
        println!("{label}: {}", parts.join("; "));
    }
}

fn fmt_ns(v: &serde_json::Value) -> String {
    v.as_f64()
        .map_or_else(|| "n/a".to_owned(), |s| format!("{:.3}", s * 1e9))
}
