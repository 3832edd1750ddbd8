//! Subcommand implementations. Every command reads the merged config, writes
//! its artifacts under the run directory, and finishes with a manifest.

use std::path::Path;
use std::sync::Arc;

use sgwn_core::analysis::{
    depth_sweep, feature_ses_report, hyperparam_sweep, locate_with_kappa, noise_sweep,
    squared_envelope_spectrum, SesResult, DEFAULT_KAPPA,
};
use sgwn_core::chebyshev::build_operator;
use sgwn_core::data::{
    build_dataset, load_dataset, save_dataset, ClassSpec, Dataset, SyntheticSpec,
};
use sgwn_core::graph::{eigendecompose, laplacian};
use sgwn_core::kernels::{check_admissibility, default_lambda_probe, frame_profile, KernelSpec};
use sgwn_core::nn::{build_model, evaluate, load_model, save_model, train, TrainConfig};
use sgwn_core::seed::subseed;
use sgwn_core::sgwt::WaveletTransform;
use sgwn_core::{Error, Result};

use crate::artifacts::{fmt_f64, svg_line_plot, RunDir, Series};
use crate::config::Config;

fn synthetic_spec(cfg: &Config) -> Result<SyntheticSpec> {
    let num_classes = cfg.get_usize("synth.num_classes")?;
    let mut classes = Vec::with_capacity(num_classes);
    for i in 0..num_classes {
        classes.push(ClassSpec {
            name: cfg.get_str(&format!("synth.class{i}.name"))?.to_string(),
            carrier_hz: cfg.get_f64(&format!("synth.class{i}.carrier_hz"))?,
            fault_hz: cfg.get_f64(&format!("synth.class{i}.fault_hz"))?,
            impulse_decay: cfg.get_f64(&format!("synth.class{i}.impulse_decay"))?,
            coupling: cfg.get_f64_list(&format!("synth.class{i}.coupling"))?,
            noise_floor: cfg.get_f64(&format!("synth.class{i}.noise_floor"))?,
        });
    }
    Ok(SyntheticSpec {
        sensors: cfg.get_usize("synth.sensors")?,
        fs: cfg.get_f64("synth.fs")?,
        record_len: cfg.get_usize("synth.record_len")?,
        phase_step: cfg.get_f64("synth.phase_step")?,
        classes,
        seed: subseed(cfg.seed()?, "dataset"),
    })
}

fn train_config(cfg: &Config) -> Result<TrainConfig> {
    let tc = TrainConfig {
        epochs: cfg.get_usize("train.epochs")?,
        batch_size: cfg.get_usize("train.batch_size")?,
        learning_rate: cfg.get_f64("train.learning_rate")?,
        decay: cfg.get_f64("train.decay")?,
        seed: cfg.seed()?,
        order_k: cfg.get_usize("train.order_k")?,
        scales_j: cfg.get_usize("train.scales_j")?,
        kernel: cfg.get_kernel("train.kernel")?,
        q: cfg.get_f64("train.q")?,
        batchnorm: cfg.get_bool("train.batchnorm")?,
        hidden: cfg.get_usize("train.hidden")?,
        depth: cfg.get_usize("train.depth")?,
        exact: cfg.get_bool("train.exact")?,
        parallel: cfg.jobs()? > 1,
    };
    tc.validate()?;
    Ok(tc)
}

fn load_run_dataset(cfg: &Config, run: &RunDir) -> Result<Dataset> {
    load_dataset(&run.resolve(cfg.get_str("dataset.path")?))
}

pub fn cmd_synth(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "synth")?;
    let spec = synthetic_spec(cfg)?;
    let window = cfg.get_usize("synth.window")?;
    let epsilon = cfg.get_f64("synth.epsilon")?;
    let per_class = cfg.get_usize("synth.samples_per_class")?;
    let dataset = build_dataset(&spec, window, epsilon, per_class)?;
    let rel = cfg.get_str("dataset.path")?.to_string();
    save_dataset(&dataset, &run.resolve(&rel))?;
    run.register(&rel)?;
    run.write_json(
        "dataset.json",
        &serde_json::json!({
            "spec": spec,
            "metadata": dataset.metadata,
            "num_samples": dataset.samples.len(),
            "edges": dataset.graph.edges(),
        }),
    )?;
    if let Some(warning) = &dataset.metadata.warning {
        eprintln!("warning: {warning}");
    }
    run.finish(cfg.resolved())
}

pub fn cmd_train(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "train")?;
    let dataset = load_run_dataset(cfg, &run)?;
    let tc = train_config(cfg)?;
    let mut model = build_model(&dataset, &tc)?;
    let history = train(&mut model, &dataset, &tc)?;

    let rel = cfg.get_str("checkpoint.path")?.to_string();
    save_model(&model, &run.resolve(&rel))?;
    run.register(&rel)?;

    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                fmt_f64(h.lr),
                fmt_f64(h.train_loss),
                fmt_f64(h.test_acc),
            ]
        })
        .collect();
    run.write_csv("history.csv", &["epoch", "lr", "train_loss", "test_acc"], &rows)?;

    let eval = evaluate(&model, dataset.test_samples())?;
    run.write_json(
        "metrics.json",
        &serde_json::json!({
            "test_accuracy": eval.accuracy,
            "confusion": eval.confusion,
            "class_names": dataset.metadata.class_names,
        }),
    )?;

    if cfg.get_bool("plots")? && !history.is_empty() {
        let acc: Vec<(f64, f64)> =
            history.iter().map(|h| (h.epoch as f64, h.test_acc)).collect();
        let loss: Vec<(f64, f64)> =
            history.iter().map(|h| (h.epoch as f64, h.train_loss)).collect();
        let svg = svg_line_plot(
            "training history",
            "epoch",
            "value",
            &[
                Series { name: "test_acc".into(), points: &acc },
                Series { name: "train_loss".into(), points: &loss },
            ],
        );
        run.write_bytes("history.svg", svg.as_bytes())?;
    }
    run.finish(cfg.resolved())
}

pub fn cmd_filters(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "filters")?;
    let spec = KernelSpec::from_family(
        cfg.get_kernel("filters.kernel")?,
        cfg.get_f64("filters.q")?,
        cfg.get_f64("filters.lambda_max")?,
        cfg.get_usize("filters.scales_j")?,
    )?;
    let grid = cfg.get_usize("filters.grid")?;
    let profile = frame_profile(&spec, grid)?;

    let mut header: Vec<String> = vec!["lambda".into()];
    if profile.h.is_some() {
        header.push("h".into());
    }
    for j in 0..spec.num_scales() {
        header.push(format!("g_{}", j + 1));
    }
    header.push("sum_sq".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();

    let rows: Vec<Vec<String>> = (0..grid)
        .map(|i| {
            let mut row = vec![fmt_f64(profile.lambdas[i])];
            if let Some(h) = &profile.h {
                row.push(fmt_f64(h[i]));
            }
            for g in &profile.g {
                row.push(fmt_f64(g[i]));
            }
            row.push(fmt_f64(profile.sum_sq[i]));
            row
        })
        .collect();
    run.write_csv("filters.csv", &header_refs, &rows)?;

    let report = check_admissibility(&spec, default_lambda_probe(&spec));
    run.write_json(
        "admissibility.json",
        &serde_json::json!({
            "kernel": spec,
            "frame_min": profile.min,
            "frame_max": profile.max,
            "admissibility": report,
        }),
    )?;

    if cfg.get_bool("plots")? {
        let mut series = Vec::new();
        let mut curves: Vec<(String, &Vec<f64>)> = Vec::new();
        if let Some(h) = &profile.h {
            curves.push(("h".into(), h));
        }
        for (j, g) in profile.g.iter().enumerate() {
            curves.push((format!("g_{}", j + 1), g));
        }
        curves.push(("sum_sq".into(), &profile.sum_sq));
        let points: Vec<Vec<(f64, f64)>> = curves
            .iter()
            .map(|(_, ys)| profile.lambdas.iter().cloned().zip(ys.iter().cloned()).collect())
            .collect();
        for ((name, _), pts) in curves.iter().zip(&points) {
            series.push(Series { name: name.clone(), points: pts });
        }
        let svg = svg_line_plot("filter bank frequency responses", "lambda", "response", &series);
        run.write_bytes("filters.svg", svg.as_bytes())?;
    }
    run.finish(cfg.resolved())
}

pub fn cmd_transform(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "transform")?;
    let dataset = load_run_dataset(cfg, &run)?;
    let index = cfg.get_usize("transform.sample")?;
    let sample = dataset.samples.get(index).ok_or_else(|| {
        Error::Config(format!(
            "transform.sample: index {index} out of range for {} samples",
            dataset.samples.len()
        ))
    })?;
    let tc = train_config(cfg)?;
    let l = laplacian(&dataset.graph)?;
    if l.lambda_max() <= 0.0 {
        return Err(Error::Config("dataset graph is edgeless".into()));
    }
    let spec = KernelSpec::from_family(tc.kernel, tc.q, l.lambda_max(), tc.scales_j)?;
    let transform = if tc.exact {
        WaveletTransform::Exact { spec, spectrum: Arc::new(eigendecompose(&l)?) }
    } else {
        WaveletTransform::Chebyshev(Arc::new(build_operator(&spec, Arc::new(l), tc.order_k)?))
    };
    let coeffs = transform.forward(&sample.signal)?;

    let mut rows = Vec::new();
    for b in 0..coeffs.num_bands() {
        let name = transform.kernel_spec().band_name(b);
        let band = coeffs.band(b);
        for node in 0..band.nrows() {
            for t in 0..band.ncols() {
                rows.push(vec![
                    name.clone(),
                    node.to_string(),
                    t.to_string(),
                    fmt_f64(band[(node, t)]),
                ]);
            }
        }
    }
    run.write_csv("transform.csv", &["band", "node", "t", "value"], &rows)?;
    run.write_json(
        "transform.json",
        &serde_json::json!({
            "sample": index,
            "label": sample.label,
            "num_bands": coeffs.num_bands(),
            "kernel": transform.kernel_spec(),
        }),
    )?;
    run.finish(cfg.resolved())
}

/// Amplitude-modulated reference vector: 3 kHz carrier, 50 Hz modulation.
fn am_test_vector(fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let tt = t as f64 / fs;
            (1.0 + 0.5 * (2.0 * std::f64::consts::PI * 50.0 * tt).cos())
                * (2.0 * std::f64::consts::PI * 3000.0 * tt).cos()
        })
        .collect()
}

fn ses_rows(results: &[SesResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for (f, m) in r.freqs.iter().zip(&r.magnitudes) {
            rows.push(vec![r.source.clone(), fmt_f64(*f), fmt_f64(*m)]);
        }
    }
    rows
}

pub fn cmd_ses(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "ses")?;
    let input = cfg.get_str("ses.input")?;
    let results: Vec<SesResult> = match input {
        "am" => {
            let fs = cfg.get_f64("synth.fs")?;
            let mut ses = squared_envelope_spectrum(&am_test_vector(fs, 4096), fs)?;
            ses.source = "am_test".into();
            vec![ses]
        }
        "dataset" => {
            let dataset = load_run_dataset(cfg, &run)?;
            let index = cfg.get_usize("ses.sample")?;
            let node = cfg.get_usize("ses.node")?;
            let sample = dataset.samples.get(index).ok_or_else(|| {
                Error::Config(format!(
                    "ses.sample: index {index} out of range for {} samples",
                    dataset.samples.len()
                ))
            })?;
            if cfg.get_bool("ses.checkpoint")? {
                let model = load_model(&run.resolve(cfg.get_str("checkpoint.path")?))?;
                feature_ses_report(&model, sample, node, dataset.metadata.fs)?
            } else {
                let series: Vec<f64> = sample.signal.row(node).iter().cloned().collect();
                vec![squared_envelope_spectrum(&series, dataset.metadata.fs)?]
            }
        }
        other => {
            return Err(Error::Config(format!(
                "ses.input: expected 'dataset' or 'am', got '{other}'"
            )))
        }
    };
    run.write_csv("ses.csv", &["source", "freq_hz", "magnitude"], &ses_rows(&results))?;

    let target = cfg.get_f64("ses.target_hz")?;
    if target > 0.0 {
        let tol = cfg.get_usize("ses.tol_bins")?;
        let reports: Vec<_> = results
            .iter()
            .map(|r| {
                locate_with_kappa(r, target, tol, DEFAULT_KAPPA)
                    .map(|rep| serde_json::json!({"source": r.source, "report": rep}))
            })
            .collect::<Result<_>>()?;
        run.write_json("locate.json", &reports)?;
    }

    if cfg.get_bool("plots")? {
        let points: Vec<Vec<(f64, f64)>> = results
            .iter()
            .map(|r| r.freqs.iter().cloned().zip(r.magnitudes.iter().cloned()).collect())
            .collect();
        let series: Vec<Series> = results
            .iter()
            .zip(&points)
            .map(|(r, pts)| Series { name: r.source.clone(), points: pts })
            .collect();
        let svg = svg_line_plot("squared envelope spectrum", "frequency (Hz)", "magnitude", &series);
        run.write_bytes("ses.svg", svg.as_bytes())?;
    }
    run.finish(cfg.resolved())
}

pub fn cmd_depth_sweep(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "depth-sweep")?;
    let dataset = load_run_dataset(cfg, &run)?;
    let tc = train_config(cfg)?;
    let depths = cfg.get_usize_list("sweep.depths")?;
    let rows = depth_sweep(&dataset, &depths, &tc, cfg.jobs()? > 1)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.model.clone(), r.depth.to_string(), fmt_f64(r.test_acc)])
        .collect();
    run.write_csv("depth_sweep.csv", &["model", "depth", "test_acc"], &csv)?;

    if cfg.get_bool("plots")? {
        let sgwn: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.model == "sgwn")
            .map(|r| (r.depth as f64, r.test_acc))
            .collect();
        let lowpass: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.model == "lowpass")
            .map(|r| (r.depth as f64, r.test_acc))
            .collect();
        let svg = svg_line_plot(
            "accuracy vs depth",
            "depth",
            "test accuracy",
            &[
                Series { name: "sgwn".into(), points: &sgwn },
                Series { name: "lowpass".into(), points: &lowpass },
            ],
        );
        run.write_bytes("depth_sweep.svg", svg.as_bytes())?;
    }
    run.finish(cfg.resolved())
}

pub fn cmd_hyper_sweep(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "hyper-sweep")?;
    let dataset = load_run_dataset(cfg, &run)?;
    let tc = train_config(cfg)?;
    let j_values = cfg.get_usize_list("sweep.j_values")?;
    let k_values = cfg.get_usize_list("sweep.k_values")?;
    let rows = hyperparam_sweep(&dataset, &j_values, &k_values, &tc, cfg.jobs()? > 1)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scales_j.to_string(),
                r.order_k.to_string(),
                fmt_f64(r.test_acc),
                fmt_f64(r.wall_time_s),
            ]
        })
        .collect();
    run.write_csv(
        "hyper_sweep.csv",
        &["scales_j", "order_k", "test_acc", "wall_time_s"],
        &csv,
    )?;
    run.finish(cfg.resolved())
}

pub fn cmd_noise_sweep(cfg: &Config, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "noise-sweep")?;
    let dataset = load_run_dataset(cfg, &run)?;
    let tc = train_config(cfg)?;
    let snrs = cfg.get_f64_list("sweep.snr_db")?;
    let rows = noise_sweep(&dataset, &snrs, &tc, cfg.jobs()? > 1)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.snr_db.map_or_else(|| "clean".to_string(), fmt_f64),
                fmt_f64(r.test_acc),
            ]
        })
        .collect();
    run.write_csv("noise_sweep.csv", &["snr_db", "test_acc"], &csv)?;
    run.finish(cfg.resolved())
}
