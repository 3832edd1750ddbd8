//! Squared envelope spectrum interpretation of raw signals and extracted
//! features, fault-frequency location, and the experiment harnesses
//! (depth, hyperparameter, and noise sweeps).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::data::{add_noise_to_dataset, Dataset, GraphSample};
use crate::error::{Error, Result};
use crate::nn::{build_model, train, train_lowpass, LowpassModel, SgwnModel, TrainConfig};
use crate::parallel::map_items;
use crate::seed::subseed;

/// Default prominence threshold over the median magnitude.
pub const DEFAULT_KAPPA: f64 = 3.0;

/// A squared-envelope magnitude spectrum with its frequency axis.
#[derive(Debug, Clone, Serialize)]
pub struct SesResult {
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub fs: f64,
    pub source: String,
}

/// Envelope via the frequency-domain analytic signal: zero the negative
/// frequencies, double the positive ones, keep DC and Nyquist. The squared
/// envelope has its mean removed before the final magnitude spectrum so DC
/// does not mask low-frequency peaks.
pub fn squared_envelope_spectrum(signal: &[f64], fs: f64) -> Result<SesResult> {
    let n = signal.len();
    if n < 16 {
        return Err(Error::Validation(format!(
            "squared envelope spectrum needs at least 16 samples, got {n}"
        )));
    }
    if !(fs > 0.0) {
        return Err(Error::Validation(format!("fs must be positive, got {fs}")));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // DC and Nyquist stay as-is.
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut sq: Vec<f64> = buf.iter().map(|c| (c * scale).norm_sqr()).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    for v in sq.iter_mut() {
        *v -= mean;
    }

    let mut buf2: Vec<Complex<f64>> = sq.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf2);
    let bins = half + 1;
    let magnitudes: Vec<f64> = buf2[..bins].iter().map(|c| c.norm() / n as f64).collect();
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * fs / n as f64).collect();
    Ok(SesResult { freqs, magnitudes, fs, source: "raw".into() })
}

/// Outcome of a fault-frequency probe around `f_target`.
#[derive(Debug, Clone, Serialize)]
pub struct LocateReport {
    pub f_target: f64,
    pub peak_freq: f64,
    pub peak_magnitude: f64,
    pub median_magnitude: f64,
    pub prominence: f64,
    pub kappa: f64,
    pub located: bool,
}

pub fn locate_fault_frequency(
    ses: &SesResult,
    f_target: f64,
    tol_bins: usize,
) -> Result<LocateReport> {
    locate_with_kappa(ses, f_target, tol_bins, DEFAULT_KAPPA)
}

pub fn locate_with_kappa(
    ses: &SesResult,
    f_target: f64,
    tol_bins: usize,
    kappa: f64,
) -> Result<LocateReport> {
    if f_target >= ses.fs / 2.0 || f_target <= 0.0 {
        return Err(Error::Validation(format!(
            "target frequency {f_target} Hz outside (0, fs/2) = (0, {})",
            ses.fs / 2.0
        )));
    }
    let df = ses.freqs[1] - ses.freqs[0];
    let target_bin = (f_target / df).round() as usize;
    let lo = target_bin.saturating_sub(tol_bins).max(1);
    let hi = (target_bin + tol_bins).min(ses.magnitudes.len() - 1);
    let mut peak_bin = lo;
    for k in lo..=hi {
        if ses.magnitudes[k] > ses.magnitudes[peak_bin] {
            peak_bin = k;
        }
    }
    let peak_magnitude = ses.magnitudes[peak_bin];
    // Median over the non-DC bins for a broadband-robust floor.
    let mut sorted: Vec<f64> = ses.magnitudes[1..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median_magnitude = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let prominence = if median_magnitude > 0.0 {
        peak_magnitude / median_magnitude
    } else if peak_magnitude > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(LocateReport {
        f_target,
        peak_freq: ses.freqs[peak_bin],
        peak_magnitude,
        median_magnitude,
        prominence,
        kappa,
        located: prominence > kappa,
    })
}

/// SES of each theta-filtered first-layer band at one node, plus the SES of
/// the first layer's output at that node.
pub fn feature_ses_report(
    model: &SgwnModel,
    sample: &GraphSample,
    node: usize,
    fs: f64,
) -> Result<Vec<SesResult>> {
    let n = sample.signal.nrows();
    if node >= n {
        return Err(Error::Validation(format!("node {node} out of range for {n} nodes")));
    }
    let (coeffs, outputs) = model.forward_trace(&sample.signal)?;
    let first = &coeffs[0];
    let spec = model.transform().kernel_spec();
    let mut out = Vec::with_capacity(first.num_bands() + 1);
    for b in 0..first.num_bands() {
        let series: Vec<f64> = first.band(b).row(node).iter().cloned().collect();
        let mut ses = squared_envelope_spectrum(&series, fs)?;
        ses.source = spec.band_name(b);
        out.push(ses);
    }
    let series: Vec<f64> = outputs[0].row(node).iter().cloned().collect();
    let mut ses = squared_envelope_spectrum(&series, fs)?;
    ses.source = "layer_output".into();
    out.push(ses);
    Ok(out)
}

/// One sweep table row: a model variant at a depth with its final accuracy.
#[derive(Debug, Clone, Serialize)]
pub struct DepthRow {
    pub model: String,
    pub depth: usize,
    pub test_acc: f64,
}

/// Trains an SGWN and the low-pass baseline at every depth. Cells are
/// independent and deterministic, so they may run concurrently.
pub fn depth_sweep(
    dataset: &Dataset,
    depths: &[usize],
    config: &TrainConfig,
    cells_parallel: bool,
) -> Result<Vec<DepthRow>> {
    if depths.is_empty() {
        return Err(Error::Validation("depth sweep needs at least one depth".into()));
    }
    // One cell per (depth, model) pair, trained independently.
    let cells: Vec<(usize, bool)> = depths
        .iter()
        .flat_map(|&d| [(d, false), (d, true)])
        .collect();
    map_items(cells_parallel, &cells, |&(depth, baseline)| {
        let mut cfg = config.clone();
        cfg.depth = depth;
        if baseline {
            let mut model = LowpassModel::new(
                &dataset.graph,
                depth,
                dataset.feature_dim(),
                cfg.hidden,
                dataset.num_classes(),
                subseed(cfg.seed, "baseline-init"),
            )?;
            let history = train_lowpass(&mut model, dataset, &cfg)?;
            Ok(DepthRow {
                model: "lowpass".into(),
                depth,
                test_acc: history.last().map_or(f64::NAN, |h| h.test_acc),
            })
        } else {
            let mut model = build_model(dataset, &cfg)?;
            let history = train(&mut model, dataset, &cfg)?;
            Ok(DepthRow {
                model: "sgwn".into(),
                depth,
                test_acc: history.last().map_or(f64::NAN, |h| h.test_acc),
            })
        }
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperRow {
    pub scales_j: usize,
    pub order_k: usize,
    pub test_acc: f64,
    pub wall_time_s: f64,
}

/// Grid of (J, K) cells; wall time covers build + train for the cell.
pub fn hyperparam_sweep(
    dataset: &Dataset,
    j_values: &[usize],
    k_values: &[usize],
    config: &TrainConfig,
    cells_parallel: bool,
) -> Result<Vec<HyperRow>> {
    if j_values.is_empty() || k_values.is_empty() {
        return Err(Error::Validation("hyperparameter sweep needs nonempty value lists".into()));
    }
    let cells: Vec<(usize, usize)> = j_values
        .iter()
        .flat_map(|&j| k_values.iter().map(move |&k| (j, k)))
        .collect();
    map_items(cells_parallel, &cells, |&(j, k)| {
        let mut cfg = config.clone();
        cfg.scales_j = j;
        cfg.order_k = k;
        let start = std::time::Instant::now();
        let mut model = build_model(dataset, &cfg)?;
        let history = train(&mut model, dataset, &cfg)?;
        Ok(HyperRow {
            scales_j: j,
            order_k: k,
            test_acc: history.last().map_or(f64::NAN, |h| h.test_acc),
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseRow {
    /// None is the clean reference row.
    pub snr_db: Option<f64>,
    pub test_acc: f64,
}

/// Clean row first, then one row per SNR with noise injected into both the
/// training and test copies before training a fresh model.
pub fn noise_sweep(
    dataset: &Dataset,
    snr_list: &[f64],
    config: &TrainConfig,
    cells_parallel: bool,
) -> Result<Vec<NoiseRow>> {
    let cells: Vec<Option<f64>> = std::iter::once(None)
        .chain(snr_list.iter().map(|&s| Some(s)))
        .collect();
    map_items(cells_parallel, &cells, |&snr| {
        let row = |ds: &Dataset| -> Result<NoiseRow> {
            let mut model = build_model(ds, config)?;
            let history = train(&mut model, ds, config)?;
            Ok(NoiseRow {
                snr_db: snr,
                test_acc: history.last().map_or(f64::NAN, |h| h.test_acc),
            })
        };
        match snr {
            None => row(dataset),
            Some(snr) => {
                let noisy = add_noise_to_dataset(
                    dataset,
                    snr,
                    subseed(config.seed, &format!("noise-sweep/{snr}")),
                )?;
                row(&noisy)
            }
        }
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, ClassSpec, SyntheticSpec};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(n: usize, fs: f64, f: f64, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|t| amp * (2.0 * std::f64::consts::PI * f * t as f64 / fs).cos())
            .collect()
    }

    #[test]
    fn pure_tone_has_flat_ses() {
        let fs = 20480.0;
        let x = tone(4096, fs, 3000.0, 1.0);
        let ses = squared_envelope_spectrum(&x, fs).unwrap();
        // Constant envelope: away from DC everything sits at numerical floor.
        let peak = ses.magnitudes[2..]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(peak < 1e-10, "unexpected SES peak {peak}");
    }

    #[test]
    fn am_signal_peaks_at_modulation_frequency() {
        let fs = 20480.0;
        let n = 4096;
        let fm = 50.0;
        let x: Vec<f64> = (0..n)
            .map(|t| {
                let tt = t as f64 / fs;
                (1.0 + 0.5 * (2.0 * std::f64::consts::PI * fm * tt).cos())
                    * (2.0 * std::f64::consts::PI * 3000.0 * tt).cos()
            })
            .collect();
        let ses = squared_envelope_spectrum(&x, fs).unwrap();
        let df = fs / n as f64;
        let mut peak = 1;
        for k in 2..ses.magnitudes.len() {
            if ses.magnitudes[k] > ses.magnitudes[peak] {
                peak = k;
            }
        }
        assert!((ses.freqs[peak] - fm).abs() <= df, "peak at {} Hz", ses.freqs[peak]);

        let rep = locate_fault_frequency(&ses, fm, 1).unwrap();
        assert!(rep.located);
        assert!(rep.prominence > 10.0, "prominence {}", rep.prominence);
    }

    #[test]
    fn impulse_train_locates_fault_frequency() {
        let fs = 20480.0;
        let n = 8192;
        let fr = 518.03;
        let alpha = (-800.0f64 / fs).exp();
        let spacing = fs / fr;
        let mut env = vec![0.0f64; n];
        let mut cur = 0.0;
        let mut k = 0u64;
        let mut next = 0usize;
        for (t, e) in env.iter_mut().enumerate() {
            cur *= alpha;
            while next == t {
                cur += 1.0;
                k += 1;
                next = (k as f64 * spacing).round() as usize;
            }
            *e = cur;
        }
        let x: Vec<f64> = env
            .iter()
            .enumerate()
            .map(|(t, &e)| e * (2.0 * std::f64::consts::PI * 4000.0 * t as f64 / fs).cos())
            .collect();
        let ses = squared_envelope_spectrum(&x, fs).unwrap();
        let rep = locate_fault_frequency(&ses, fr, 2).unwrap();
        assert!(rep.located, "prominence {}", rep.prominence);
        assert!((rep.peak_freq - fr).abs() <= 2.0 * fs / n as f64);
    }

    #[test]
    fn white_noise_rarely_locates() {
        let fs = 20480.0;
        let mut failures = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ses = squared_envelope_spectrum(&x, fs).unwrap();
            let rep = locate_fault_frequency(&ses, 50.0, 1).unwrap();
            if !rep.located {
                failures += 1;
            }
        }
        assert!(failures >= 18, "only {failures}/20 failed to locate");
    }

    #[test]
    fn zero_signal_not_located() {
        let ses = squared_envelope_spectrum(&[0.0; 64], 1000.0).unwrap();
        let rep = locate_fault_frequency(&ses, 100.0, 2).unwrap();
        assert!(!rep.located);
        assert_eq!(rep.peak_magnitude, 0.0);
        assert_eq!(rep.prominence, 0.0);
    }

    #[test]
    fn locate_rejects_out_of_band_target() {
        let ses = squared_envelope_spectrum(&[1.0; 64], 1000.0).unwrap();
        assert!(locate_fault_frequency(&ses, 600.0, 1).is_err());
    }

    #[test]
    fn ses_sign_flip_invariant() {
        let x = tone(512, 2048.0, 100.0, 1.3);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = squared_envelope_spectrum(&x, 2048.0).unwrap();
        let b = squared_envelope_spectrum(&neg, 2048.0).unwrap();
        for (p, q) in a.magnitudes.iter().zip(&b.magnitudes) {
            assert_relative_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn ses_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let a = squared_envelope_spectrum(&x, 2048.0).unwrap();
        let b = squared_envelope_spectrum(&scaled, 2048.0).unwrap();
        for (p, q) in a.magnitudes.iter().zip(&b.magnitudes) {
            if *p > 1e-12 {
                assert_relative_eq!(4.0 * p, q, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn ses_rejects_short_input() {
        assert!(squared_envelope_spectrum(&[1.0; 15], 100.0).is_err());
    }

    fn tiny_dataset() -> Dataset {
        let spec = SyntheticSpec {
            sensors: 4,
            fs: 2048.0,
            record_len: 1024,
            phase_step: 0.8,
            classes: vec![
                ClassSpec {
                    name: "healthy".into(),
                    carrier_hz: 300.0,
                    fault_hz: 0.0,
                    impulse_decay: 0.0,
                    coupling: vec![1.0, 0.9, 0.8, 0.7],
                    noise_floor: 0.05,
                },
                ClassSpec {
                    name: "faulty".into(),
                    carrier_hz: 300.0,
                    fault_hz: 128.0,
                    impulse_decay: 400.0,
                    coupling: vec![0.4, 1.0, 0.9, 0.3],
                    noise_floor: 0.05,
                },
            ],
            seed: 3,
        };
        build_dataset(&spec, 32, 0.6, 32).unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 16, hidden: 8, ..TrainConfig::default() }
    }

    #[test]
    fn feature_report_structure() {
        let ds = tiny_dataset();
        let config = quick_config();
        let model = build_model(&ds, &config).unwrap();
        let report = feature_ses_report(&model, &ds.samples[40], 1, ds.metadata.fs).unwrap();
        // J + 1 bands plus the layer output.
        assert_eq!(report.len(), 4);
        assert_eq!(report[0].source, "scaling");
        assert_eq!(report[1].source, "wavelet_1");
        assert_eq!(report[3].source, "layer_output");
        assert!(feature_ses_report(&model, &ds.samples[0], 9, ds.metadata.fs).is_err());
    }

    #[test]
    fn constant_input_kills_wavelet_band_ses() {
        let ds = tiny_dataset();
        let config = quick_config();
        let model = build_model(&ds, &config).unwrap();
        let mut sample = ds.samples[0].clone();
        sample.signal.fill(0.7);
        let report = feature_ses_report(&model, &sample, 0, ds.metadata.fs).unwrap();
        for band in &report[1..3] {
            let peak = band.magnitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(peak < 1e-9, "band {} peak {peak}", band.source);
        }
    }

    #[test]
    fn depth_sweep_consistency() {
        let ds = tiny_dataset();
        let config = quick_config();
        let rows = depth_sweep(&ds, &[2], &config, false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].model, "sgwn");
        assert_eq!(rows[1].model, "lowpass");
        // The SGWN row must equal a plain train run with the same config.
        let mut model = build_model(&ds, &config).unwrap();
        let history = train(&mut model, &ds, &config).unwrap();
        assert_eq!(rows[0].test_acc, history.last().unwrap().test_acc);
        assert!(depth_sweep(&ds, &[], &config, false).is_err());
    }

    #[test]
    fn hyperparam_sweep_grid() {
        let ds = tiny_dataset();
        let config = quick_config();
        let rows = hyperparam_sweep(&ds, &[2, 3], &[2], &config, true).unwrap();
        assert_eq!(rows.len(), 2);
        let mut model = build_model(&ds, &config).unwrap();
        let history = train(&mut model, &ds, &config).unwrap();
        assert_eq!(rows[0].test_acc, history.last().unwrap().test_acc);
        assert!(rows.iter().all(|r| r.wall_time_s >= 0.0));
    }

    #[test]
    fn noise_sweep_rows() {
        let ds = tiny_dataset();
        let config = quick_config();
        let rows = noise_sweep(&ds, &[], &config, false).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].snr_db, None);
        let rows = noise_sweep(&ds, &[10.0], &config, false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].snr_db, Some(10.0));
        // Reproducible.
        let again = noise_sweep(&ds, &[10.0], &config, true).unwrap();
        assert_eq!(rows[1].test_acc.to_bits(), again[1].test_acc.to_bits());
    }
}
