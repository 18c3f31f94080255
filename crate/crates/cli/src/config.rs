//! Scenario files: TOML in laboratory units (MHz, ns, ps, mT, nm), resolved
//! into the SI structures of `qmag_core`.

use std::fmt;
use std::path::{Path, PathBuf};

use qmag_core::io::{import_scope_trace, read_waveform};
use qmag_core::recon::Window;
use qmag_core::units::{angular_to_hz, bohr_per_nm2_to_amperes, deg_to_rad, hz_to_angular};
use qmag_core::waveforms::{Chirality, DiskReversalScenario, DistortionModel, DomainWallScenario};
use qmag_core::{
    NvParams, PulsePairSpec, ReadoutParams, SampledWaveform, SamplingPlan, TimeGrid, ToFConfig,
    WienerConfig,
};
use serde::{Deserialize, Serialize};

use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `out/<name>` when absent.
    pub output: Option<String>,
    #[serde(default)]
    pub nv: NvSection,
    pub pulse: PulseSection,
    #[serde(default)]
    pub distortion: DistortionSection,
    pub signal: Option<SignalSection>,
    pub plan: Option<PlanSection>,
    pub readout: Option<ReadoutSection>,
    pub recon: Option<ReconSection>,
    pub tof: Option<TofSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    pub sensitivity: Option<SensitivitySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NvSection {
    pub bias_field_mt: f64,
    pub zero_field_splitting_ghz: f64,
    pub gamma_ghz_per_t: f64,
    pub axis_polar_deg: f64,
    pub axis_azimuth_deg: f64,
}

impl Default for NvSection {
    fn default() -> Self {
        Self {
            bias_field_mt: 36.0,
            zero_field_splitting_ghz: 2.87,
            gamma_ghz_per_t: 28.0345,
            axis_polar_deg: 54.0,
            axis_azimuth_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Closed-form two-level kernel.
    #[default]
    Analytic,
    /// Lab-frame spin simulation of the (possibly distorted) pulse pair.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub rabi_mhz: Option<f64>,
    pub tau_ns: Option<f64>,
    pub alpha_deg: Option<f64>,
    #[serde(default)]
    pub detuning_mhz: f64,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "default_kernel_step")]
    pub kernel_step_ps: f64,
    #[serde(default = "default_drive_dt")]
    pub drive_dt_ps: f64,
    #[serde(default = "default_stimulus_width")]
    pub stimulus_width_ps: f64,
}

fn default_kernel_step() -> f64 {
    10.0
}

fn default_drive_dt() -> f64 {
    1.0
}

fn default_stimulus_width() -> f64 {
    20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    #[default]
    None,
    LowPass,
    EnvelopeLowPass,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    #[serde(default)]
    pub kind: DistortionKind,
    pub f3db_ghz: Option<f64>,
    /// Impulse response CSV (1/s), relative to the scenario file.
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    DomainWall,
    DiskReversal,
    StepPulse,
    TofPair,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub kind: SignalKind,
    pub t_start_ns: Option<f64>,
    pub t_end_ns: Option<f64>,
    pub dt_ps: Option<f64>,
    pub surface_magnetization_mub_nm2: Option<f64>,
    pub standoff_nm: Option<f64>,
    pub velocity_m_s: Option<f64>,
    pub diameter_nm: Option<f64>,
    pub wall_width_nm: Option<f64>,
    pub resolution_nm: Option<f64>,
    pub chirality: Option<Chirality>,
    /// Start times of successive reversals; each one flips the disk back.
    pub starts_ns: Option<Vec<f64>>,
    pub amplitude_mt: Option<f64>,
    pub rise_ns: Option<f64>,
    pub duration_ns: Option<f64>,
    pub delays_ps: Option<Vec<f64>>,
    pub path: Option<String>,
    /// Treat `path` as an oscilloscope record in volts with a `volts_to_tesla` sidecar.
    pub scope: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// Linear convolution with the kernel.
    #[default]
    Convolution,
    /// Full spin propagation at every delay.
    Spin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub t_start_ns: f64,
    pub t_end_ns: f64,
    pub step_ps: f64,
    #[serde(default)]
    pub jitter_ps: f64,
    #[serde(default)]
    pub response: ResponseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub contrast: f64,
    /// C0 directly; otherwise all of the four rate and time fields.
    pub reference_counts: Option<f64>,
    pub cw_rate_cps: Option<f64>,
    pub integration_ns: Option<f64>,
    pub sequence_ns: Option<f64>,
    pub total_s: Option<f64>,
    #[serde(default = "yes")]
    pub shot_noise: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSection {
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_taper")]
    pub taper: f64,
    #[serde(default = "default_recon_padding")]
    pub padding: usize,
    /// Zero-phase display smoothing of the raw trace.
    pub display_filter_ns: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_taper() -> f64 {
    0.05
}

fn default_recon_padding() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofSection {
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_taper")]
    pub taper: f64,
    #[serde(default = "default_tof_padding")]
    pub padding: usize,
    #[serde(default = "default_min_snr")]
    pub min_snr: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_tof_padding() -> usize {
    4
}

fn default_min_snr() -> f64 {
    3.0
}

fn default_bootstrap() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_deg: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    /// Rabi frequencies of the trade-off curves; the pulse's when absent.
    pub rabi_mhz: Option<Vec<f64>>,
    #[serde(default = "default_alpha_min")]
    pub alpha_min_deg: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max_deg: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Rotation angles whose kernels are written alongside the curves.
    #[serde(default)]
    pub kernels_alpha_deg: Vec<f64>,
}

fn default_alpha_min() -> f64 {
    5.0
}

fn default_alpha_max() -> f64 {
    90.0
}

fn default_points() -> usize {
    35
}

/// One problem found in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub column: Option<usize>,
    /// Dotted field path, or several joined by ", ".
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: ")?,
            (Some(l), None) => write!(f, "line {l}: ")?,
            _ => {}
        }
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

/// Configuration failure; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError {
    pub source_name: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl ConfigError {
    pub fn single(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            source_name: source_name.into(),
            diagnostics: vec![Diagnostic {
                line: None,
                column: None,
                field: String::new(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {d}", self.source_name)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `field` (`section.key` or `key`) in `text`. Falls back to
/// the section header when the key itself is absent.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = field.rsplit_once('.').unwrap_or(("", field));
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_owned();
            if current == section || (section.is_empty() && current == key) {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelMethod {
    Analytic {
        step: f64,
    },
    Simulated {
        drive_dt: f64,
        stimulus_width: f64,
        step: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    DomainWall(DomainWallScenario, TimeGrid),
    Disk {
        scenario: DiskReversalScenario,
        grid: TimeGrid,
        starts: Vec<f64>,
    },
    Step {
        amplitude: f64,
        rise: f64,
        duration: f64,
        grid: TimeGrid,
    },
    TofPair {
        amplitude: f64,
        rise: f64,
        duration: f64,
        grid: TimeGrid,
        delays: Vec<f64>,
    },
    File(SampledWaveform),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    None,
    Alpha(Vec<f64>),
    Lambda(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recon {
    pub wiener: WienerConfig,
    pub display_filter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub rabi: Vec<f64>,
    pub alphas: Vec<f64>,
    pub kernel_alphas: Vec<f64>,
}

/// A fully checked scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub nv: NvParams,
    pub pulse: PulsePairSpec,
    pub kernel: KernelMethod,
    pub distortion: DistortionModel,
    pub signal: Option<Signal>,
    pub plan: Option<SamplingPlan>,
    pub response: ResponseModel,
    pub readout: Option<ReadoutParams>,
    pub recon: Option<Recon>,
    pub tof: ToFConfig,
    pub sweep: Sweep,
    pub sensitivity: Option<Sensitivity>,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.file.output {
            Some(d) => PathBuf::from(d),
            None => Path::new("out").join(&self.file.name),
        }
    }

    /// Pulse pair with the configured Rabi frequency and rotation angle `alpha`.
    pub fn pulse_with_alpha(&self, alpha: f64) -> qmag_core::Result<PulsePairSpec> {
        PulsePairSpec::from_rabi_and_alpha(
            self.pulse.rabi,
            alpha,
            self.pulse.carrier,
            self.nv.gyromagnetic_ratio,
        )
    }
}

/// Reads `arg` as a file, or as the name of a bundled preset.
pub fn read_source(arg: &str) -> Result<(String, String, PathBuf), ConfigError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single(arg, format!("cannot read scenario: {e}")))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((arg.to_owned(), text, base));
    }
    match presets::get(arg) {
        Some(text) => Ok((format!("preset {arg}"), text.to_owned(), PathBuf::new())),
        None => Err(ConfigError::single(
            arg,
            format!(
                "no such file or preset (presets: {})",
                presets::NAMES.join(", ")
            ),
        )),
    }
}

pub fn load(arg: &str) -> Result<Scenario, ConfigError> {
    let (name, text, base) = read_source(arg)?;
    parse(&name, &text, &base)
}

pub fn parse(source_name: &str, text: &str, base: &Path) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (Some(line), Some(column))
            }
            None => (None, None),
        };
        ConfigError {
            source_name: source_name.to_owned(),
            diagnostics: vec![Diagnostic {
                line,
                column,
                field: String::new(),
                message: e.message().trim().to_owned(),
            }],
        }
    })?;
    let mut checker = Checker {
        text,
        diagnostics: Vec::new(),
    };
    let scenario = resolve(file, base, &mut checker);
    match scenario {
        Some(s) if checker.diagnostics.is_empty() => Ok(s),
        _ => Err(ConfigError {
            source_name: source_name.to_owned(),
            diagnostics: checker.diagnostics,
        }),
    }
}

struct Checker<'a> {
    text: &'a str,
    diagnostics: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn report(&mut self, fields: &[&str], message: impl Into<String>) {
        let line = fields.iter().find_map(|f| locate(self.text, f));
        self.diagnostics.push(Diagnostic {
            line,
            column: None,
            field: fields.join(", "),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: f64, what: &str) -> bool {
        let ok = v > 0.0 && v.is_finite();
        if !ok {
            self.report(&[field], format!("{what} must be positive"));
        }
        ok
    }

    fn non_negative(&mut self, field: &str, v: f64, what: &str) -> bool {
        let ok = v >= 0.0 && v.is_finite();
        if !ok {
            self.report(&[field], format!("{what} must be non-negative"));
        }
        ok
    }

    fn required<T: Copy>(&mut self, field: &str, v: Option<T>, kind: &str) -> Option<T> {
        if v.is_none() {
            self.report(&[field], format!("required for kind {kind}"));
        }
        v
    }

    fn core(&mut self, field: &str, r: qmag_core::Result<()>) -> bool {
        match r {
            Ok(()) => true,
            Err(e) => {
                self.report(&[field], e.to_string());
                false
            }
        }
    }
}

fn resolve(file: ScenarioFile, base: &Path, c: &mut Checker<'_>) -> Option<Scenario> {
    if file.name.trim().is_empty() {
        c.report(&["name"], "scenario name must not be empty");
    }
    let nv = resolve_nv(&file.nv, c);
    let pulse = resolve_pulse(&file.pulse, &nv, c);
    let kernel = resolve_kernel_method(&file.pulse, c);
    let carrier = nv.resonance_lower() + hz_to_angular(file.pulse.detuning_mhz * 1e6);
    let distortion = resolve_distortion(&file.distortion, angular_to_hz(carrier), base, c);
    let signal = file
        .signal
        .as_ref()
        .and_then(|s| resolve_signal(s, &file.nv, base, c));
    let plan = file
        .plan
        .as_ref()
        .and_then(|p| resolve_plan(p, file.seed, c));
    let response = file.plan.as_ref().map(|p| p.response).unwrap_or_default();
    let readout = file.readout.as_ref().and_then(|r| resolve_readout(r, c));
    let recon = file.recon.as_ref().and_then(|r| resolve_recon(r, c));
    let tof = resolve_tof(file.tof.as_ref(), c);
    let sweep = resolve_sweep(&file.sweep, c);

    if file.signal.is_some() {
        if file.plan.is_none() {
            c.report(
                &["plan"],
                "a [plan] section is required to measure the signal",
            );
        }
        if file.readout.is_none() {
            c.report(
                &["readout"],
                "a [readout] section is required to measure the signal",
            );
        }
    }
    if file.recon.is_some() && file.signal.is_none() {
        c.report(&["recon"], "reconstruction needs a [signal] section");
    }
    if matches!(sweep, Sweep::Lambda(_)) && file.recon.is_none() {
        c.report(&["sweep.lambda"], "a λ sweep needs a [recon] section");
    }
    if response == ResponseModel::Spin && file.pulse.kernel != KernelKind::Simulated {
        c.report(
            &["plan.response", "pulse.kernel"],
            "spin response requires kernel = \"simulated\" for a consistent calibration",
        );
    }
    if !matches!(file.distortion.kind, DistortionKind::None)
        && file.pulse.kernel != KernelKind::Simulated
    {
        c.report(
            &["distortion.kind", "pulse.kernel"],
            "a distorted drive only enters through kernel = \"simulated\"",
        );
    }
    if let (Some(plan), Some(k)) = (&file.plan, kernel) {
        let kstep = match k {
            KernelMethod::Analytic { step } | KernelMethod::Simulated { step, .. } => step,
        };
        let ratio = plan.step_ps * 1e-12 / kstep;
        if file.recon.is_some()
            && (ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio)
        {
            c.report(
                &["plan.step_ps", "pulse.kernel_step_ps"],
                "the sampling step must be an integer multiple of the kernel step",
            );
        }
    }
    let is_tof = matches!(signal, Some(Signal::TofPair { .. }));
    if file.tof.is_some() && !is_tof {
        c.report(&["tof"], "[tof] applies only to signal kind tof_pair");
    }
    if is_tof && !matches!(sweep, Sweep::None) {
        c.report(
            &["sweep"],
            "sweeps are not supported with signal kind tof_pair",
        );
    }

    let sensitivity = file.sensitivity.as_ref().and_then(|s| {
        if file.readout.is_none() {
            c.report(
                &["sensitivity"],
                "the sensitivity trade-off needs a [readout] section",
            );
        }
        resolve_sensitivity(s, pulse.as_ref(), c)
    });

    Some(Scenario {
        nv,
        pulse: pulse?,
        kernel: kernel?,
        distortion: distortion?,
        signal,
        plan,
        response,
        readout,
        recon,
        tof: tof?,
        sweep,
        sensitivity,
        file,
    })
}

fn resolve_nv(s: &NvSection, c: &mut Checker<'_>) -> NvParams {
    c.positive(
        "nv.zero_field_splitting_ghz",
        s.zero_field_splitting_ghz,
        "zero-field splitting",
    );
    c.positive(
        "nv.gamma_ghz_per_t",
        s.gamma_ghz_per_t,
        "gyromagnetic ratio",
    );
    if !s.bias_field_mt.is_finite() {
        c.report(&["nv.bias_field_mt"], "bias field must be finite");
    }
    let nv = NvParams {
        zero_field_splitting: hz_to_angular(s.zero_field_splitting_ghz * 1e9),
        gyromagnetic_ratio: hz_to_angular(s.gamma_ghz_per_t * 1e9),
        bias_field: s.bias_field_mt * 1e-3,
        axis_polar: deg_to_rad(s.axis_polar_deg),
        axis_azimuth: deg_to_rad(s.axis_azimuth_deg),
    };
    if c.diagnostics.is_empty() {
        c.core("nv", nv.validate());
    }
    nv
}

fn resolve_pulse(s: &PulseSection, nv: &NvParams, c: &mut Checker<'_>) -> Option<PulsePairSpec> {
    let gamma = nv.gyromagnetic_ratio;
    let carrier = nv.resonance_lower() + hz_to_angular(s.detuning_mhz * 1e6);
    let mut ok = true;
    if let Some(v) = s.rabi_mhz {
        ok &= c.positive("pulse.rabi_mhz", v, "Rabi frequency");
    }
    if let Some(v) = s.tau_ns {
        ok &= c.positive("pulse.tau_ns", v, "sequence duration");
    }
    if let Some(v) = s.alpha_deg {
        ok &= c.positive("pulse.alpha_deg", v, "rotation angle");
    }
    if !ok {
        return None;
    }
    let rabi = s.rabi_mhz.map(|v| hz_to_angular(v * 1e6));
    let tau = s.tau_ns.map(|v| v * 1e-9);
    let alpha = s.alpha_deg.map(deg_to_rad);
    let spec = match (rabi, tau, alpha) {
        (Some(r), Some(t), Some(a)) => {
            let implied = r * t / 2.0;
            if (implied - a).abs() > 1e-6 * a {
                c.report(
                    &["pulse.alpha_deg", "pulse.rabi_mhz", "pulse.tau_ns"],
                    format!(
                        "inconsistent: alpha_deg = {} but rabi_mhz·tau_ns gives Ωτ/2 = {:.6} deg; give two of the three or make alpha = Ωτ/2",
                        s.alpha_deg.unwrap_or_default(),
                        implied.to_degrees()
                    ),
                );
                return None;
            }
            PulsePairSpec::from_rabi_and_tau(r, t, carrier, gamma)
        }
        (Some(r), Some(t), None) => PulsePairSpec::from_rabi_and_tau(r, t, carrier, gamma),
        (Some(r), None, Some(a)) => PulsePairSpec::from_rabi_and_alpha(r, a, carrier, gamma),
        (None, Some(t), Some(a)) => PulsePairSpec::from_tau_and_alpha(t, a, carrier, gamma),
        _ => {
            c.report(&["pulse"], "give two of rabi_mhz, tau_ns and alpha_deg");
            return None;
        }
    };
    match spec {
        Ok(spec) => Some(spec),
        Err(e) => {
            c.report(&["pulse"], e.to_string());
            None
        }
    }
}

fn resolve_kernel_method(s: &PulseSection, c: &mut Checker<'_>) -> Option<KernelMethod> {
    let mut ok = c.positive("pulse.kernel_step_ps", s.kernel_step_ps, "kernel step");
    let step = s.kernel_step_ps * 1e-12;
    match s.kernel {
        KernelKind::Analytic => ok.then_some(KernelMethod::Analytic { step }),
        KernelKind::Simulated => {
            ok &= c.positive("pulse.drive_dt_ps", s.drive_dt_ps, "drive time step");
            ok &= c.positive(
                "pulse.stimulus_width_ps",
                s.stimulus_width_ps,
                "stimulus width",
            );
            ok.then_some(KernelMethod::Simulated {
                drive_dt: s.drive_dt_ps * 1e-12,
                stimulus_width: s.stimulus_width_ps * 1e-12,
                step,
            })
        }
    }
}

fn resolve_distortion(
    s: &DistortionSection,
    carrier_hz: f64,
    base: &Path,
    c: &mut Checker<'_>,
) -> Option<DistortionModel> {
    let f3db = |c: &mut Checker<'_>| -> Option<f64> {
        match s.f3db_ghz {
            None => {
                c.report(
                    &["distortion.f3db_ghz"],
                    "required for this distortion kind",
                );
                None
            }
            Some(f) => c
                .positive("distortion.f3db_ghz", f, "cut-off frequency")
                .then_some(f * 1e9),
        }
    };
    match s.kind {
        DistortionKind::None => Some(DistortionModel::None),
        DistortionKind::LowPass => f3db(c).map(|f3db_hz| DistortionModel::LowPass { f3db_hz }),
        DistortionKind::EnvelopeLowPass => {
            f3db(c).map(|f3db_hz| DistortionModel::EnvelopeLowPass {
                f3db_hz,
                carrier_hz,
            })
        }
        DistortionKind::Measured => {
            let Some(p) = &s.path else {
                c.report(&["distortion.path"], "required for kind measured");
                return None;
            };
            match read_waveform(&base.join(p)) {
                Ok(h) => Some(DistortionModel::Measured { impulse: Some(h) }),
                Err(e) => {
                    c.report(
                        &["distortion.path"],
                        format!("cannot read impulse response {p}: {e}"),
                    );
                    None
                }
            }
        }
    }
}

fn resolve_grid(s: &SignalSection, c: &mut Checker<'_>) -> Option<TimeGrid> {
    let kind = kind_name(s.kind);
    let start = c.required("signal.t_start_ns", s.t_start_ns, kind);
    let end = c.required("signal.t_end_ns", s.t_end_ns, kind);
    let dt = c.required("signal.dt_ps", s.dt_ps, kind);
    let (start, end, dt) = (start?, end?, dt?);
    if !c.positive("signal.dt_ps", dt, "signal time step") {
        return None;
    }
    if !(end > start) {
        c.report(
            &["signal.t_end_ns", "signal.t_start_ns"],
            "signal range is empty",
        );
        return None;
    }
    TimeGrid::new(dt * 1e-12, start * 1e-9, end * 1e-9).ok()
}

fn kind_name(k: SignalKind) -> &'static str {
    match k {
        SignalKind::DomainWall => "domain_wall",
        SignalKind::DiskReversal => "disk_reversal",
        SignalKind::StepPulse => "step_pulse",
        SignalKind::TofPair => "tof_pair",
        SignalKind::File => "file",
    }
}

fn forbid_foreign(s: &SignalSection, allowed: &[&str], c: &mut Checker<'_>) {
    let present = [
        ("t_start_ns", s.t_start_ns.is_some()),
        ("t_end_ns", s.t_end_ns.is_some()),
        ("dt_ps", s.dt_ps.is_some()),
        (
            "surface_magnetization_mub_nm2",
            s.surface_magnetization_mub_nm2.is_some(),
        ),
        ("standoff_nm", s.standoff_nm.is_some()),
        ("velocity_m_s", s.velocity_m_s.is_some()),
        ("diameter_nm", s.diameter_nm.is_some()),
        ("wall_width_nm", s.wall_width_nm.is_some()),
        ("resolution_nm", s.resolution_nm.is_some()),
        ("chirality", s.chirality.is_some()),
        ("starts_ns", s.starts_ns.is_some()),
        ("amplitude_mt", s.amplitude_mt.is_some()),
        ("rise_ns", s.rise_ns.is_some()),
        ("duration_ns", s.duration_ns.is_some()),
        ("delays_ps", s.delays_ps.is_some()),
        ("path", s.path.is_some()),
        ("scope", s.scope.is_some()),
    ];
    for (name, set) in present {
        if set && !allowed.contains(&name) {
            c.report(
                &[&format!("signal.{name}")],
                format!("not used by signal kind {}", kind_name(s.kind)),
            );
        }
    }
}

const GRID: [&str; 3] = ["t_start_ns", "t_end_ns", "dt_ps"];

fn resolve_signal(
    s: &SignalSection,
    nv: &NvSection,
    base: &Path,
    c: &mut Checker<'_>,
) -> Option<Signal> {
    let polar = deg_to_rad(nv.axis_polar_deg);
    let azimuth = deg_to_rad(nv.axis_azimuth_deg);
    match s.kind {
        SignalKind::DomainWall => {
            forbid_foreign(
                s,
                &[
                    &GRID[..],
                    &[
                        "surface_magnetization_mub_nm2",
                        "standoff_nm",
                        "velocity_m_s",
                    ],
                ]
                .concat(),
                c,
            );
            let grid = resolve_grid(s, c);
            let ms = s.surface_magnetization_mub_nm2.unwrap_or(25.0);
            let z = s.standoff_nm.unwrap_or(150.0);
            let v = s.velocity_m_s.unwrap_or(100.0);
            let mut ok = c.positive("signal.standoff_nm", z, "standoff");
            ok &= c.positive("signal.velocity_m_s", v, "wall velocity");
            if !ms.is_finite() {
                c.report(
                    &["signal.surface_magnetization_mub_nm2"],
                    "surface magnetization must be finite",
                );
                ok = false;
            }
            let wall = DomainWallScenario {
                surface_magnetization: bohr_per_nm2_to_amperes(ms),
                standoff: z * 1e-9,
                velocity: v,
                nv_polar: polar,
                nv_azimuth: azimuth,
            };
            (ok && c.core("signal", wall.validate())).then_some(Signal::DomainWall(wall, grid?))
        }
        SignalKind::DiskReversal => {
            forbid_foreign(
                s,
                &[
                    &GRID[..],
                    &[
                        "surface_magnetization_mub_nm2",
                        "standoff_nm",
                        "velocity_m_s",
                        "diameter_nm",
                        "wall_width_nm",
                        "resolution_nm",
                        "chirality",
                        "starts_ns",
                    ],
                ]
                .concat(),
                c,
            );
            let grid = resolve_grid(s, c);
            let disk = DiskReversalScenario {
                diameter: s.diameter_nm.unwrap_or(1000.0) * 1e-9,
                surface_magnetization: bohr_per_nm2_to_amperes(
                    s.surface_magnetization_mub_nm2.unwrap_or(75.0),
                ),
                wall_velocity: s.velocity_m_s.unwrap_or(100.0),
                wall_width: s.wall_width_nm.unwrap_or(50.0) * 1e-9,
                standoff: s.standoff_nm.unwrap_or(100.0) * 1e-9,
                nv_polar: polar,
                nv_azimuth: azimuth,
                resolution: s.resolution_nm.unwrap_or(10.0) * 1e-9,
                chirality: s.chirality.unwrap_or(Chirality::Left),
            };
            let mut ok = c.positive("signal.standoff_nm", disk.standoff, "standoff");
            ok &= c.positive("signal.diameter_nm", disk.diameter, "disk diameter");
            ok &= c.positive("signal.velocity_m_s", disk.wall_velocity, "wall velocity");
            ok &= c.positive("signal.wall_width_nm", disk.wall_width, "wall width");
            ok &= c.positive(
                "signal.resolution_nm",
                disk.resolution,
                "quadrature resolution",
            );
            ok = ok && c.core("signal", disk.validate());
            let starts: Vec<f64> = s
                .starts_ns
                .clone()
                .unwrap_or_else(|| vec![0.0])
                .iter()
                .map(|t| t * 1e-9)
                .collect();
            let transit = disk.diameter / disk.wall_velocity;
            if starts.is_empty() {
                c.report(
                    &["signal.starts_ns"],
                    "at least one reversal start is needed",
                );
                ok = false;
            } else if starts.windows(2).any(|w| w[1] < w[0] + transit) {
                c.report(
                    &["signal.starts_ns"],
                    format!(
                        "reversals must be at least one transit ({:.3} ns) apart",
                        transit * 1e9
                    ),
                );
                ok = false;
            }
            ok.then_some(Signal::Disk {
                scenario: disk,
                grid: grid?,
                starts,
            })
        }
        SignalKind::StepPulse | SignalKind::TofPair => {
            let tof = s.kind == SignalKind::TofPair;
            let mut allowed = [&GRID[..], &["amplitude_mt", "rise_ns", "duration_ns"]].concat();
            if tof {
                allowed.push("delays_ps");
            }
            forbid_foreign(s, &allowed, c);
            let kind = kind_name(s.kind);
            let grid = resolve_grid(s, c);
            let amplitude = c.required("signal.amplitude_mt", s.amplitude_mt, kind);
            let rise = c.required("signal.rise_ns", s.rise_ns, kind);
            let duration = c.required("signal.duration_ns", s.duration_ns, kind);
            let (amplitude, rise, duration) = (amplitude?, rise?, duration?);
            let mut ok = c.positive("signal.rise_ns", rise, "rise time");
            ok &= c.positive("signal.duration_ns", duration, "pulse duration");
            if !amplitude.is_finite() {
                c.report(&["signal.amplitude_mt"], "amplitude must be finite");
                ok = false;
            }
            let (amplitude, rise, duration) = (amplitude * 1e-3, rise * 1e-9, duration * 1e-9);
            if !tof {
                return ok.then_some(Signal::Step {
                    amplitude,
                    rise,
                    duration,
                    grid: grid?,
                });
            }
            let delays = match &s.delays_ps {
                None => {
                    c.report(&["signal.delays_ps"], "required for kind tof_pair");
                    return None;
                }
                Some(d) if d.is_empty() => {
                    c.report(&["signal.delays_ps"], "at least one delay is needed");
                    return None;
                }
                Some(d) => d.iter().map(|v| v * 1e-12).collect::<Vec<_>>(),
            };
            if delays.iter().any(|d| !d.is_finite()) {
                c.report(&["signal.delays_ps"], "delays must be finite");
                ok = false;
            }
            ok.then_some(Signal::TofPair {
                amplitude,
                rise,
                duration,
                grid: grid?,
                delays,
            })
        }
        SignalKind::File => {
            forbid_foreign(s, &["path", "scope"], c);
            let Some(p) = &s.path else {
                c.report(&["signal.path"], "required for kind file");
                return None;
            };
            let path = base.join(p);
            let read = if s.scope.unwrap_or(false) {
                import_scope_trace(&path)
            } else {
                read_waveform(&path)
            };
            match read {
                Ok(w) => Some(Signal::File(w)),
                Err(e) => {
                    c.report(&["signal.path"], format!("cannot read waveform {p}: {e}"));
                    None
                }
            }
        }
    }
}

fn resolve_plan(s: &PlanSection, seed: u64, c: &mut Checker<'_>) -> Option<SamplingPlan> {
    let mut ok = c.positive("plan.step_ps", s.step_ps, "sampling step");
    ok &= c.non_negative("plan.jitter_ps", s.jitter_ps, "trigger jitter");
    if !(s.t_end_ns >= s.t_start_ns) {
        c.report(
            &["plan.t_end_ns", "plan.t_start_ns"],
            "sampling range is empty",
        );
        ok = false;
    }
    if !ok {
        return None;
    }
    let plan = SamplingPlan {
        t_start: s.t_start_ns * 1e-9,
        t_end: s.t_end_ns * 1e-9,
        step: s.step_ps * 1e-12,
        trigger_jitter_rms: s.jitter_ps * 1e-12,
        rng_seed: seed,
    };
    c.core("plan", plan.validate()).then_some(plan)
}

fn resolve_readout(s: &ReadoutSection, c: &mut Checker<'_>) -> Option<ReadoutParams> {
    if !(s.contrast > 0.0 && s.contrast < 1.0) {
        c.report(&["readout.contrast"], "contrast must lie in (0, 1)");
        return None;
    }
    let rates = [s.cw_rate_cps, s.integration_ns, s.sequence_ns, s.total_s];
    let readout = match s.reference_counts {
        Some(c0) => {
            if rates.iter().any(Option::is_some) {
                c.report(
                    &["readout.reference_counts"],
                    "give either reference_counts or cw_rate_cps, integration_ns, sequence_ns and total_s",
                );
                return None;
            }
            if !c.positive("readout.reference_counts", c0, "reference counts") {
                return None;
            }
            ReadoutParams::with_reference_counts(s.contrast, c0)
        }
        None => {
            let names = ["cw_rate_cps", "integration_ns", "sequence_ns", "total_s"];
            let mut ok = true;
            for (name, v) in names.iter().zip(rates) {
                let field = format!("readout.{name}");
                match v {
                    None => {
                        c.report(&[&field], "required when reference_counts is absent");
                        ok = false;
                    }
                    Some(v) => ok &= c.positive(&field, v, name),
                }
            }
            if !ok {
                return None;
            }
            let [rate, int, seq, total] = rates.map(Option::unwrap_or_default);
            ReadoutParams::new(s.contrast, rate, int * 1e-9, seq * 1e-9, total)
        }
    };
    match readout {
        Ok(r) => Some(if s.shot_noise { r } else { r.noiseless() }),
        Err(e) => {
            c.report(&["readout"], e.to_string());
            None
        }
    }
}

fn taper(field: &str, v: f64, c: &mut Checker<'_>) -> Option<Window> {
    if !(0.0..=0.5).contains(&v) {
        c.report(&[field], "taper fraction must lie in [0, 0.5]");
        return None;
    }
    Some(if v == 0.0 {
        Window::None
    } else {
        Window::Taper { fraction: v }
    })
}

fn resolve_recon(s: &ReconSection, c: &mut Checker<'_>) -> Option<Recon> {
    let mut ok = c.non_negative("recon.lambda", s.lambda, "regularization λ");
    if s.padding == 0 {
        c.report(&["recon.padding"], "padding factor must be at least 1");
        ok = false;
    }
    if let Some(f) = s.display_filter_ns {
        ok &= c.positive("recon.display_filter_ns", f, "display filter time constant");
    }
    let window = taper("recon.taper", s.taper, c)?;
    ok.then_some(Recon {
        wiener: WienerConfig {
            lambda: s.lambda,
            window,
            padding: s.padding,
        },
        display_filter: s.display_filter_ns.map(|f| f * 1e-9),
    })
}

fn resolve_tof(s: Option<&TofSection>, c: &mut Checker<'_>) -> Option<ToFConfig> {
    let Some(s) = s else {
        return Some(ToFConfig::default());
    };
    let mut ok = c.positive("tof.lambda", s.lambda, "regularization λ");
    ok &= c.positive("tof.min_snr", s.min_snr, "minimum SNR");
    if s.padding == 0 {
        c.report(&["tof.padding"], "padding factor must be at least 1");
        ok = false;
    }
    let window = taper("tof.taper", s.taper, c)?;
    ok.then_some(ToFConfig {
        lambda: s.lambda,
        window,
        padding: s.padding,
        min_snr: s.min_snr,
        bootstrap: s.bootstrap,
    })
}

fn resolve_sweep(s: &SweepSection, c: &mut Checker<'_>) -> Sweep {
    match (&s.alpha_deg, &s.lambda) {
        (Some(_), Some(_)) => {
            c.report(
                &["sweep.alpha_deg", "sweep.lambda"],
                "sweep one parameter at a time",
            );
            Sweep::None
        }
        (Some(a), None) => {
            if a.is_empty() || a.iter().any(|v| !(*v > 0.0 && *v < 180.0)) {
                c.report(
                    &["sweep.alpha_deg"],
                    "rotation angles must lie in (0, 180) deg",
                );
            }
            Sweep::Alpha(a.iter().map(|v| deg_to_rad(*v)).collect())
        }
        (None, Some(l)) => {
            if l.is_empty() || l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                c.report(
                    &["sweep.lambda"],
                    "regularization values must be non-negative",
                );
            }
            Sweep::Lambda(l.clone())
        }
        (None, None) => Sweep::None,
    }
}

fn resolve_sensitivity(
    s: &SensitivitySection,
    pulse: Option<&PulsePairSpec>,
    c: &mut Checker<'_>,
) -> Option<Sensitivity> {
    let rabi: Vec<f64> = match &s.rabi_mhz {
        Some(r) => {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                c.report(
                    &["sensitivity.rabi_mhz"],
                    "Rabi frequencies must be positive",
                );
                return None;
            }
            r.iter().map(|v| hz_to_angular(v * 1e6)).collect()
        }
        None => vec![pulse?.rabi],
    };
    let (lo, hi) = (s.alpha_min_deg, s.alpha_max_deg);
    if !(lo > 0.0 && hi <= 90.0 && hi > lo) {
        c.report(
            &["sensitivity.alpha_min_deg", "sensitivity.alpha_max_deg"],
            "rotation angle range must satisfy 0 < alpha_min_deg < alpha_max_deg ≤ 90",
        );
        return None;
    }
    if s.points < 2 {
        c.report(&["sensitivity.points"], "at least two points are needed");
        return None;
    }
    if s.kernels_alpha_deg
        .iter()
        .any(|v| !(*v > 0.0 && *v < 180.0))
    {
        c.report(
            &["sensitivity.kernels_alpha_deg"],
            "rotation angles must lie in (0, 180) deg",
        );
        return None;
    }
    let alphas = (0..s.points)
        .map(|i| deg_to_rad(lo + (hi - lo) * i as f64 / (s.points - 1) as f64))
        .collect();
    Some(Sensitivity {
        rabi,
        alphas,
        kernel_alphas: s.kernels_alpha_deg.iter().map(|v| deg_to_rad(*v)).collect(),
    })
}
