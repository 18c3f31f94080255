use std::f64::consts::FRAC_PI_2;

use qmag_core::forward::{
    full_response, ideal_response, sample_trace, ReadoutParams, Responder, SamplingPlan,
};
use qmag_core::kernels::{
    analytic_kernel, analytic_kernel_value, simulate_kernel, PulsePairSpec, SensingKernel,
    StimulusConfig,
};
use qmag_core::recon::{discrete_kernel, estimate_tof, wiener_deconvolve, ToFConfig, WienerConfig};
use qmag_core::spin::NvParams;
use qmag_core::units::{bohr_per_nm2_to_amperes, deg_to_rad, hz_to_angular};
use qmag_core::waveforms::{
    disk_reversal_transient, domain_wall_transient, pulse_pair, step_pulse, tof_pair, Chirality,
    DiskReversalScenario, DomainWallScenario, SampledWaveform, TimeGrid,
};

fn nv() -> NvParams {
    NvParams::nv(0.036)
}

fn spec(rabi_hz: f64, alpha: f64) -> PulsePairSpec {
    let p = nv();
    PulsePairSpec::from_rabi_and_alpha(
        hz_to_angular(rabi_hz),
        alpha,
        p.resonance_lower(),
        p.gyromagnetic_ratio,
    )
    .unwrap()
}

fn two_level(spec: &PulsePairSpec, step: f64) -> SensingKernel {
    analytic_kernel(
        spec,
        &TimeGrid::symmetric(step, spec.tau / 2.0 + 0.5e-9).unwrap(),
    )
    .unwrap()
    .two_level_response()
}

fn asymmetry(k: &SensingKernel) -> f64 {
    let v = k.samples.values();
    let n = v.len();
    let peak = k.samples.max_abs();
    (0..n)
        .map(|i| (v[i] - v[n - 1 - i]).abs())
        .fold(0.0, f64::max)
        / peak
}

fn sup_error_vs_analytic(k: &SensingKernel, spec: &PulsePairSpec) -> f64 {
    let peak = analytic_kernel_value(spec.rabi, spec.tau, 0.0);
    k.samples
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - analytic_kernel_value(spec.rabi, spec.tau, k.samples.time(i))).abs())
        .fold(0.0, f64::max)
        / peak
}

#[test]
fn time_symmetric_drive_gives_even_kernel() {
    let p = nv();
    let nominal = spec(125e6, FRAC_PI_2);
    let dt = 1e-12;
    let n = (nominal.tau / dt).round() as usize;
    // Detuned rectangular pulse, symmetric about t = 0.
    let carrier = p.resonance_lower() + hz_to_angular(40e6);
    let drive = SampledWaveform::from_fn(dt, -nominal.tau / 2.0 + dt / 2.0, n, |t| {
        nominal.drive_amplitude * (carrier * t).cos()
    })
    .unwrap();
    let stim = StimulusConfig {
        range: Some((-2.5e-9, 2.5e-9)),
        ..StimulusConfig::default_for(&p, dt)
    };
    let k = simulate_kernel(&p, &drive, &nominal, &stim).unwrap();
    assert!(k.samples.max_abs() > 0.05, "{}", k.samples.max_abs());
    assert!(asymmetry(&k) < 1e-4, "{}", asymmetry(&k));
}

#[test]
fn weak_drive_kernel_converges_to_closed_form() {
    let p = nv();
    let nominal = spec(5e6, FRAC_PI_2);
    let dt = 2e-12;
    let drive = pulse_pair(&nominal, dt).unwrap();
    let mut errors = Vec::new();
    for sigma in [800e-12, 400e-12, 200e-12] {
        let stim = StimulusConfig {
            width: sigma,
            grid_step: 1e-9,
            ..StimulusConfig::default_for(&p, dt)
        };
        let k = simulate_kernel(&p, &drive, &nominal, &stim).unwrap();
        assert!(asymmetry(&k) < 0.01, "asymmetry {}", asymmetry(&k));
        errors.push(sup_error_vs_analytic(&k, &nominal));
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.01, "{errors:?}");
}

fn wall(scale: f64) -> DomainWallScenario {
    DomainWallScenario {
        surface_magnetization: scale * bohr_per_nm2_to_amperes(25.0),
        standoff: 150e-9,
        velocity: 100.0,
        nv_polar: deg_to_rad(54.0),
        nv_azimuth: 0.0,
    }
}

#[test]
fn ideal_response_is_linear() {
    let g = nv().gyromagnetic_ratio;
    let k = two_level(&spec(125e6, FRAC_PI_2), 10e-12);
    let grid = TimeGrid::symmetric(10e-12, 20e-9).unwrap();
    let a = domain_wall_transient(&wall(1.0), &grid).unwrap();
    let b = step_pulse(2e-4, 1e-9, 3e-9, &grid).unwrap();
    let plan = SamplingPlan::new(-8e-9, 8e-9, 50e-12).unwrap();
    let sum = ideal_response(&k, &a.scaled(0.7).add(&b.scaled(-1.3)).unwrap(), &plan, g).unwrap();
    let ra = ideal_response(&k, &a, &plan, g).unwrap();
    let rb = ideal_response(&k, &b, &plan, g).unwrap();
    let scale = sum.delta_p().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for ((s, x), y) in sum.delta_p().iter().zip(ra.delta_p()).zip(rb.delta_p()) {
        assert!((s - (0.7 * x - 1.3 * y)).abs() <= 1e-12 * scale);
    }
}

#[test]
fn full_response_approaches_convolution_for_weak_signals() {
    let p = nv();
    let g = p.gyromagnetic_ratio;
    let nominal = spec(125e6, FRAC_PI_2);
    let dt = 1e-12;
    let drive = pulse_pair(&nominal, dt).unwrap();
    let k = simulate_kernel(&p, &drive, &nominal, &StimulusConfig::default_for(&p, dt)).unwrap();
    let grid = TimeGrid::symmetric(dt, 12e-9).unwrap();
    let plan = SamplingPlan::new(-4e-9, 4e-9, 250e-12).unwrap();
    let sup_diff = |scale: f64| {
        let s = domain_wall_transient(&wall(scale), &grid).unwrap();
        let ideal = ideal_response(&k, &s, &plan, g).unwrap();
        plan.times()
            .iter()
            .zip(&ideal.p_values)
            .map(|(&t, &q)| (full_response(&p, &drive, &s, t).unwrap() - q).abs())
            .fold(0.0, f64::max)
    };
    let d: Vec<f64> = [0.4, 0.2, 0.1].into_iter().map(sup_diff).collect();
    assert!(d[0] > 1.5 * d[1] && d[1] > 1.5 * d[2], "{d:?}");

    // Ten times the Methods wall drives the response out of the linear regime.
    let weak = domain_wall_transient(&wall(0.1), &grid).unwrap();
    let strong = weak.scaled(10.0);
    let t = -0.5e-9;
    let p0 = full_response(
        &p,
        &drive,
        &SampledWaveform::zeros(dt, -12e-9, grid.len()).unwrap(),
        t,
    )
    .unwrap();
    let linear = 10.0 * (full_response(&p, &drive, &weak, t).unwrap() - p0);
    let actual = full_response(&p, &drive, &strong, t).unwrap() - p0;
    assert!(
        (actual - linear).abs() > 0.01 * linear.abs(),
        "{actual} vs {linear}"
    );
}

fn p_noise(c0: f64) -> f64 {
    let k = two_level(&spec(125e6, FRAC_PI_2), 10e-12);
    let zero = SampledWaveform::zeros(10e-12, -5e-9, 1001).unwrap();
    let responder = Responder::Ideal {
        kernel: &k,
        signal: &zero,
        gamma: nv().gyromagnetic_ratio,
    };
    let readout = ReadoutParams::with_reference_counts(0.35, c0).unwrap();
    let values: Vec<f64> = (0..1000)
        .map(|seed| {
            let plan = SamplingPlan::new(0.0, 0.0, 1e-9).unwrap().with_seed(seed);
            sample_trace(&responder, &plan, &readout).unwrap().p_values[0]
        })
        .collect();
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[test]
fn shot_noise_scales_as_inverse_root_counts() {
    let ratio = p_noise(1e4) / p_noise(1e5);
    assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn trigger_jitter_adds_its_variance_to_the_response() {
    let g = nv().gyromagnetic_ratio;
    let k = two_level(&spec(125e6, FRAC_PI_2), 10e-12);
    let area = 1e-3 / g;
    let spike = SampledWaveform::on_range(10e-12, -10e-9, 10e-9, |t| {
        if t.abs() < 5e-12 {
            area / 10e-12
        } else {
            0.0
        }
    })
    .unwrap();
    let responder = Responder::Ideal {
        kernel: &k,
        signal: &spike,
        gamma: g,
    };
    let readout = ReadoutParams::with_reference_counts(0.35, 1e5)
        .unwrap()
        .noiseless();
    let plan = SamplingPlan::new(-6e-9, 6e-9, 50e-12).unwrap();
    let sigma_j = 0.8e-9;
    let mut mean = vec![0.0; plan.len()];
    let seeds = 400;
    for seed in 0..seeds {
        let tr = sample_trace(
            &responder,
            &plan.with_seed(seed).with_jitter(sigma_j),
            &readout,
        )
        .unwrap();
        for (m, d) in mean.iter_mut().zip(tr.delta_p()) {
            *m += d / seeds as f64;
        }
    }
    let clean = sample_trace(&responder, &plan, &readout).unwrap().delta_p();
    let variance = |w: &[f64]| {
        let t = plan.times();
        let norm: f64 = w.iter().sum();
        let mu: f64 = w.iter().zip(&t).map(|(w, t)| w * t).sum::<f64>() / norm;
        w.iter()
            .zip(&t)
            .map(|(w, t)| w * (t - mu).powi(2))
            .sum::<f64>()
            / norm
    };
    let added = variance(&mean) - variance(&clean);
    assert!(
        (added / (sigma_j * sigma_j) - 1.0).abs() < 0.1,
        "{}",
        added.sqrt()
    );
}

fn noisy_trace(seed: u64) -> (qmag_core::MeasurementTrace, SensingKernel) {
    let g = nv().gyromagnetic_ratio;
    let k = two_level(&spec(125e6, FRAC_PI_2), 10e-12);
    let signal =
        domain_wall_transient(&wall(1.0), &TimeGrid::symmetric(10e-12, 30e-9).unwrap()).unwrap();
    let responder = Responder::Ideal {
        kernel: &k,
        signal: &signal,
        gamma: g,
    };
    let readout = ReadoutParams::with_reference_counts(0.35, 2.4e5).unwrap();
    let plan = SamplingPlan::new(-15e-9, 15e-9, 50e-12)
        .unwrap()
        .with_seed(seed);
    (sample_trace(&responder, &plan, &readout).unwrap(), k)
}

#[test]
fn wiener_output_scales_with_trace() {
    let g = nv().gyromagnetic_ratio;
    let (trace, k) = noisy_trace(3);
    let c = -2.75;
    let mut scaled = trace.clone();
    for p in scaled.p_values.iter_mut() {
        *p = trace.baseline + c * (*p - trace.baseline);
    }
    let cfg = WienerConfig::new(0.2);
    let a = wiener_deconvolve(&trace, &k, g, &cfg).unwrap();
    let b = wiener_deconvolve(&scaled, &k, g, &cfg).unwrap();
    let peak = b.max_abs();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((c * x - y).abs() <= 1e-12 * peak);
    }
}

#[test]
fn wiener_gain_bound_holds() {
    let g = nv().gyromagnetic_ratio;
    for seed in 0..5 {
        let (trace, k) = noisy_trace(seed);
        let (_, kd) = discrete_kernel(&k, trace.step()).unwrap();
        let dc: f64 = kd.iter().sum();
        let e_in: f64 = trace.delta_p().iter().map(|v| v * v).sum();
        for lambda in [0.05, 0.2, 1.0, 5.0] {
            let out = wiener_deconvolve(&trace, &k, g, &WienerConfig::new(lambda)).unwrap();
            let e_out: f64 = out.values().iter().map(|b| (g * b).powi(2)).sum();
            let bound = e_in / (2.0 * lambda * dc.abs()).powi(2);
            assert!(e_out <= bound, "λ {lambda}: {e_out} > {bound}");
        }
    }
}

fn tof_traces(delay: f64, seed: u64) -> (qmag_core::MeasurementTrace, qmag_core::MeasurementTrace) {
    let g = nv().gyromagnetic_ratio;
    let k = two_level(&spec(125e6, FRAC_PI_2), 5e-12);
    let base = step_pulse(
        0.5e-3,
        1e-9,
        4e-9,
        &TimeGrid::new(5e-12, -15e-9, 25e-9).unwrap(),
    )
    .unwrap();
    let (a, b) = tof_pair(&base, delay).unwrap();
    let readout = ReadoutParams::with_reference_counts(0.35, 6e6).unwrap();
    let plan = SamplingPlan::new(-8e-9, 16e-9, 10e-12).unwrap();
    let run = |s: &SampledWaveform, seed: u64| {
        let r = Responder::Ideal {
            kernel: &k,
            signal: s,
            gamma: g,
        };
        sample_trace(&r, &plan.with_seed(seed), &readout).unwrap()
    };
    (run(&a, 2 * seed + 100), run(&b, 2 * seed + 101))
}

#[test]
fn tof_is_antisymmetric() {
    let cfg = ToFConfig::default();
    for seed in 0..3 {
        let (a, b) = tof_traces(500e-12, seed);
        let ab = estimate_tof(&a, &b, &cfg).unwrap();
        let ba = estimate_tof(&b, &a, &cfg).unwrap();
        let tol = 3.0 * ab.uncertainty.hypot(ba.uncertainty);
        assert!(
            (ab.delay + ba.delay).abs() < tol,
            "{} vs {}",
            ab.delay,
            ba.delay
        );
    }
}

#[test]
fn tof_recovers_a_ladder_of_delays() {
    let cfg = ToFConfig::default();
    for (i, delay) in [250e-12, 500e-12, 750e-12].into_iter().enumerate() {
        let (a, b) = tof_traces(delay, 10 + i as u64);
        let r = estimate_tof(&a, &b, &cfg).unwrap();
        assert!(
            (r.delay - delay).abs() < 3.0 * r.uncertainty,
            "{delay}: {} ± {}",
            r.delay,
            r.uncertainty
        );
        assert!(r.fit_uncertainty > 0.0);
    }
}

fn disk() -> DiskReversalScenario {
    DiskReversalScenario {
        diameter: 1e-6,
        surface_magnetization: bohr_per_nm2_to_amperes(75.0),
        wall_velocity: 100.0,
        wall_width: 50e-9,
        standoff: 100e-9,
        nv_polar: deg_to_rad(54.0),
        nv_azimuth: deg_to_rad(90.0),
        resolution: 10e-9,
        chirality: Chirality::Left,
    }
}

#[test]
fn disk_transient_peaks_mid_transit() {
    let s = disk();
    let transit = s.diameter / s.wall_velocity;
    let w = disk_reversal_transient(&s, &TimeGrid::new(50e-12, 0.0, transit).unwrap()).unwrap();
    let v = w.values();
    let n = v.len();
    // Reversal flips the projected field; the wall under the sensor gives the fastest swing.
    for i in 0..n {
        assert!(
            (v[i] + v[n - 1 - i]).abs() < 1e-9 * v[0].abs().max(1e-12) + 1e-12,
            "not odd at {i}"
        );
    }
    let slope: Vec<f64> = v.windows(2).map(|p| (p[1] - p[0]) / w.dt()).collect();
    let (imax, peak) = slope
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, x)| (i, x.abs()))
        .unwrap();
    let t_peak = w.time(imax) + 0.5 * w.dt();
    assert!(
        (t_peak - transit / 2.0).abs() < 0.5e-9,
        "peak at {t_peak:e}"
    );
    let above = slope.iter().filter(|x| x.abs() >= peak / 2.0).count() as f64 * w.dt();
    println!("swing duration {above:e}");
    assert!((0.3e-9..3e-9).contains(&above), "duration {above:e}");
    // Away from the wall the field barely moves.
    assert!(slope[0].abs() < 0.05 * peak);
}
