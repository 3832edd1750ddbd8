//! Synthetic multi-sensor fault-signal generation, SNR-exact noise injection,
//! dataset assembly, and the SGWD persistence format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{
    max_min_normalize, radius_graph, sliding_window_signals, Graph, GraphSignal,
};
use crate::seed::subseed;

const MAGIC: &[u8; 4] = b"SGWD";
const FORMAT_VERSION: u32 = 1;

/// One fault mode: an impulse train at `fault_hz` gating a carrier tone,
/// scaled per sensor by `coupling`, on top of a white noise floor.
/// `fault_hz = 0` means a healthy standing carrier with no impulses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub carrier_hz: f64,
    pub fault_hz: f64,
    /// Envelope decay rate in 1/s between impulses.
    pub impulse_decay: f64,
    pub coupling: Vec<f64>,
    pub noise_floor: f64,
}

/// Generation recipe for the whole multi-class rig.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub sensors: usize,
    pub fs: f64,
    pub record_len: usize,
    /// Carrier phase lag per sensor index, radians. Nonzero values decorrelate
    /// distant sensors so the radius graph is not trivially complete.
    pub phase_step: f64,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sensors < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 sensors, got {}",
                self.sensors
            )));
        }
        if self.classes.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {}",
                self.classes.len()
            )));
        }
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(Error::Validation(format!("fs must be positive, got {}", self.fs)));
        }
        if self.record_len == 0 {
            return Err(Error::Validation("record length must be positive".into()));
        }
        let nyquist = self.fs / 2.0;
        for (c, class) in self.classes.iter().enumerate() {
            if class.coupling.len() != self.sensors {
                return Err(Error::Validation(format!(
                    "class {c} ({}) has {} coupling entries for {} sensors",
                    class.name,
                    class.coupling.len(),
                    self.sensors
                )));
            }
            if class.carrier_hz < 0.0 || class.carrier_hz >= nyquist {
                return Err(Error::Validation(format!(
                    "class {c} ({}) carrier {} Hz violates the Nyquist limit {} Hz",
                    class.name, class.carrier_hz, nyquist
                )));
            }
            if class.fault_hz < 0.0 || class.fault_hz >= nyquist {
                return Err(Error::Validation(format!(
                    "class {c} ({}) fault frequency {} Hz violates the Nyquist limit {} Hz",
                    class.name, class.fault_hz, nyquist
                )));
            }
            if class.fault_hz > 0.0 && class.impulse_decay <= 0.0 {
                return Err(Error::Validation(format!(
                    "class {c} ({}) has impulses but no positive envelope decay",
                    class.name
                )));
            }
            if class.noise_floor < 0.0 {
                return Err(Error::Validation(format!(
                    "class {c} ({}) has a negative noise floor",
                    class.name
                )));
            }
            if class.coupling.iter().any(|a| !a.is_finite()) {
                return Err(Error::Validation(format!(
                    "class {c} ({}) has a non-finite coupling entry",
                    class.name
                )));
            }
        }
        Ok(())
    }

    /// The default four-class bench rig: one healthy mode and three fault
    /// modes whose repetition rates land on distinct envelope-spectrum bins
    /// at a 256-sample window.
    pub fn default_rig() -> Self {
        SyntheticSpec {
            sensors: 5,
            fs: 20480.0,
            record_len: 64000,
            phase_step: 1.0,
            classes: vec![
                ClassSpec {
                    name: "healthy".into(),
                    carrier_hz: 3000.0,
                    fault_hz: 0.0,
                    impulse_decay: 0.0,
                    coupling: vec![1.0, 1.0, 1.0, 1.0, 1.0],
                    noise_floor: 0.25,
                },
                ClassSpec {
                    name: "inner_race".into(),
                    carrier_hz: 3000.0,
                    fault_hz: 240.0,
                    impulse_decay: 800.0,
                    coupling: vec![1.5, 1.0, 0.6, 0.35, 0.2],
                    noise_floor: 0.25,
                },
                ClassSpec {
                    name: "outer_race".into(),
                    carrier_hz: 3500.0,
                    fault_hz: 480.0,
                    impulse_decay: 800.0,
                    coupling: vec![0.2, 0.5, 1.2, 1.2, 0.4],
                    noise_floor: 0.25,
                },
                ClassSpec {
                    name: "rolling_element".into(),
                    carrier_hz: 2500.0,
                    fault_hz: 720.0,
                    impulse_decay: 800.0,
                    coupling: vec![0.3, 0.2, 0.45, 0.9, 1.5],
                    noise_floor: 0.25,
                },
            ],
            seed: 0,
        }
    }

    /// SHA-256 over the canonical JSON form, hex-encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Exponentially decaying impulse-train envelope sampled at fs: unit kicks at
/// the nearest sample to every k/f_r seconds, multiplicative decay between.
fn impulse_envelope(p: usize, fs: f64, fault_hz: f64, decay: f64) -> Vec<f64> {
    if fault_hz == 0.0 {
        return vec![1.0; p];
    }
    let alpha = (-decay / fs).exp();
    let spacing = fs / fault_hz;
    let mut env = Vec::with_capacity(p);
    let mut cur = 0.0_f64;
    let mut k = 0u64;
    let mut next_impulse = 0usize;
    for t in 0..p {
        cur *= alpha;
        while next_impulse == t {
            cur += 1.0;
            k += 1;
            next_impulse = (k as f64 * spacing).round() as usize;
        }
        env.push(cur);
    }
    env
}

/// One S x P record per class, deterministic given the spec seed.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Vec<DMatrix<f64>>> {
    spec.validate()?;
    let p = spec.record_len;
    let mut records = Vec::with_capacity(spec.classes.len());
    for (c, class) in spec.classes.iter().enumerate() {
        let env = impulse_envelope(p, spec.fs, class.fault_hz, class.impulse_decay);
        let omega = 2.0 * std::f64::consts::PI * class.carrier_hz / spec.fs;
        let mut rec = DMatrix::zeros(spec.sensors, p);
        for s in 0..spec.sensors {
            let phase = spec.phase_step * s as f64;
            let mut rng =
                ChaCha8Rng::seed_from_u64(subseed(spec.seed, &format!("noise/{c}/{s}")));
            for t in 0..p {
                let carrier = (omega * t as f64 + phase).cos();
                let noise: f64 = StandardNormal.sample(&mut rng);
                rec[(s, t)] = class.coupling[s] * env[t] * carrier + class.noise_floor * noise;
            }
        }
        records.push(rec);
    }
    Ok(records)
}

/// Adds white Gaussian noise scaled so that 10*log10(P_s/P_n) equals `snr_db`
/// exactly against the empirical power of the drawn noise sample.
pub fn add_noise(signal: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    let p_s = signal.iter().map(|x| x * x).sum::<f64>() / signal.len().max(1) as f64;
    if p_s == 0.0 || signal.is_empty() {
        return Err(Error::Validation("cannot set an SNR against a zero-power signal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..signal.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let p_draw = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
    if p_draw == 0.0 {
        return Err(Error::Numerical("drawn noise sample has zero power".into()));
    }
    let target_p_n = p_s / 10f64.powf(snr_db / 10.0);
    let scale = (target_p_n / p_draw).sqrt();
    Ok(signal
        .iter()
        .zip(&noise)
        .map(|(x, w)| x + scale * w)
        .collect())
}

/// One windowed node-feature matrix with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub signal: GraphSignal,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub spec_hash: String,
    pub fs: f64,
    pub class_names: Vec<String>,
    pub window: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A windowed, labeled sample collection over one shared sensor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GraphSample>,
    pub graph: Graph,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.metadata.class_names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.signal.ncols())
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &GraphSample> {
        self.metadata.train_indices.iter().map(move |&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &GraphSample> {
        self.metadata.test_indices.iter().map(move |&i| &self.samples[i])
    }

    fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        let d = self.feature_dim();
        let c = self.num_classes();
        for (i, s) in self.samples.iter().enumerate() {
            if s.signal.nrows() != n || s.signal.ncols() != d {
                return Err(Error::Validation(format!(
                    "sample {i} has shape {}x{}, expected {n}x{d}",
                    s.signal.nrows(),
                    s.signal.ncols()
                )));
            }
            if s.label >= c {
                return Err(Error::Validation(format!(
                    "sample {i} has label {} with only {c} classes",
                    s.label
                )));
            }
        }
        for idx in self.metadata.train_indices.iter().chain(&self.metadata.test_indices) {
            if *idx >= self.samples.len() {
                return Err(Error::Validation(format!("split index {idx} out of range")));
            }
        }
        Ok(())
    }
}

/// Generates, normalizes, graphs, windows, and splits in one pass.
/// The sensor graph is built once from the healthy-class record and shared.
pub fn build_dataset(
    spec: &SyntheticSpec,
    window: usize,
    epsilon: f64,
    samples_per_class: usize,
) -> Result<Dataset> {
    if samples_per_class == 0 {
        return Err(Error::Validation("samples_per_class must be positive".into()));
    }
    let records = synthesize(spec)?;
    let normalized: Vec<DMatrix<f64>> = records
        .iter()
        .map(|rec| {
            DMatrix::from_fn(rec.nrows(), rec.ncols(), {
                let rows: Vec<Vec<f64>> = (0..rec.nrows())
                    .map(|s| max_min_normalize(rec.row(s).transpose().as_slice()))
                    .collect();
                move |i, j| rows[i][j]
            })
        })
        .collect();

    let healthy = spec
        .classes
        .iter()
        .position(|c| c.fault_hz == 0.0)
        .unwrap_or(0);
    let graph = radius_graph(&normalized[healthy], epsilon)?;
    let warning = (graph.num_edges() == 0).then(|| {
        format!("epsilon {epsilon} yields an edgeless graph; every node is isolated")
    });

    let mut samples = Vec::with_capacity(spec.classes.len() * samples_per_class);
    for (label, rec) in normalized.iter().enumerate() {
        let windows = sliding_window_signals(rec, window)?;
        if windows.len() < samples_per_class {
            return Err(Error::Validation(format!(
                "class {label} ({}) yields {} windows, need {samples_per_class}",
                spec.classes[label].name,
                windows.len()
            )));
        }
        for signal in windows.into_iter().take(samples_per_class) {
            samples.push(GraphSample { signal, label });
        }
    }

    // Stratified 80/20 split so every class appears in both partitions.
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(spec.seed, "split"));
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for label in 0..spec.classes.len() {
        let mut idx: Vec<usize> = (label * samples_per_class..(label + 1) * samples_per_class)
            .collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let n_train = ((idx.len() as f64) * 0.8).round() as usize;
        train_indices.extend_from_slice(&idx[..n_train]);
        test_indices.extend_from_slice(&idx[n_train..]);
    }

    let ds = Dataset {
        samples,
        graph,
        metadata: DatasetMetadata {
            spec_hash: spec.hash(),
            fs: spec.fs,
            class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
            window,
            epsilon,
            seed: spec.seed,
            train_indices,
            test_indices,
            warning,
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Copy of the dataset with fresh noise injected into every node time series
/// at the given SNR, each (sample, node) pair on its own named sub-seed.
/// Normalized windows carry a large DC offset that holds no information, so
/// the SNR is taken against the mean-removed component of each series.
pub fn add_noise_to_dataset(ds: &Dataset, snr_db: f64, seed: u64) -> Result<Dataset> {
    let mut out = ds.clone();
    for (i, sample) in out.samples.iter_mut().enumerate() {
        for node in 0..sample.signal.nrows() {
            let row: Vec<f64> = sample.signal.row(node).iter().cloned().collect();
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
            let noisy = add_noise(&centered, snr_db, subseed(seed, &format!("noise/{i}/{node}")))?;
            for (t, v) in noisy.into_iter().enumerate() {
                sample.signal[(node, t)] = v + mean;
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    n: usize,
    d: usize,
    num_samples: usize,
    labels: Vec<usize>,
    graph: serde_json::Value,
    metadata: DatasetMetadata,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let header = FileHeader {
        n: ds.num_nodes(),
        d: ds.feature_dim(),
        num_samples: ds.samples.len(),
        labels: ds.samples.iter().map(|s| s.label).collect(),
        graph: ds.graph.to_json(),
        metadata: ds.metadata.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for sample in &ds.samples {
        for i in 0..sample.signal.nrows() {
            for j in 0..sample.signal.ncols() {
                w.write_all(&sample.signal[(i, j)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_at(r: &mut impl IoRead, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    let start = *offset;
    r.read_exact(buf).map_err(|_| Error::Format {
        offset: start,
        message: format!("truncated while reading {what}"),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("dataset file {} not found", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;

    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, &mut offset, "magic bytes")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic bytes {magic:?}, expected {MAGIC:?}"),
        });
    }
    let mut version = [0u8; 4];
    read_exact_at(&mut r, &mut version, &mut offset, "format version")?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        });
    }
    let mut len = [0u8; 8];
    read_exact_at(&mut r, &mut len, &mut offset, "header length")?;
    let header_len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact_at(&mut r, &mut header_bytes, &mut offset, "JSON header")?;
    let header: FileHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Format {
        offset: 16,
        message: format!("invalid JSON header: {e}"),
    })?;
    if header.labels.len() != header.num_samples {
        return Err(Error::Format {
            offset: 16,
            message: format!(
                "header lists {} labels for {} samples",
                header.labels.len(),
                header.num_samples
            ),
        });
    }
    let graph = Graph::from_json(&header.graph)?;
    if graph.num_nodes() != header.n {
        return Err(Error::Format {
            offset: 16,
            message: format!(
                "graph has {} nodes but the header says {}",
                graph.num_nodes(),
                header.n
            ),
        });
    }

    let mut samples = Vec::with_capacity(header.num_samples);
    let mut buf = [0u8; 8];
    for s in 0..header.num_samples {
        let mut signal = DMatrix::zeros(header.n, header.d);
        for i in 0..header.n {
            for j in 0..header.d {
                read_exact_at(&mut r, &mut buf, &mut offset, "sample data")?;
                signal[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        samples.push(GraphSample { signal, label: header.labels[s] });
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format {
            offset,
            message: "trailing bytes after the last sample".into(),
        });
    }

    let ds = Dataset { samples, graph, metadata: header.metadata };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            sensors: 3,
            fs: 2048.0,
            record_len: 640,
            phase_step: 0.8,
            classes: vec![
                ClassSpec {
                    name: "healthy".into(),
                    carrier_hz: 300.0,
                    fault_hz: 0.0,
                    impulse_decay: 0.0,
                    coupling: vec![1.0, 0.8, 0.6],
                    noise_floor: 0.1,
                },
                ClassSpec {
                    name: "faulty".into(),
                    carrier_hz: 300.0,
                    fault_hz: 64.0,
                    impulse_decay: 200.0,
                    coupling: vec![0.5, 1.0, 0.7],
                    noise_floor: 0.1,
                },
            ],
            seed: 7,
        }
    }

    #[test]
    fn default_rig_is_valid() {
        let spec = SyntheticSpec::default_rig();
        spec.validate().unwrap();
        assert_eq!(spec.classes.len(), 4);
        assert_eq!(spec.record_len / 256, 250);
    }

    #[test]
    fn validate_rejects_nyquist_violation() {
        let mut spec = tiny_spec();
        spec.classes[1].fault_hz = 1500.0;
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
        let mut spec = tiny_spec();
        spec.classes[0].carrier_hz = 1024.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn validate_rejects_bad_coupling_and_counts() {
        let mut spec = tiny_spec();
        spec.classes[0].coupling.pop();
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec();
        spec.sensors = 1;
        spec.classes[0].coupling = vec![1.0];
        spec.classes[1].coupling = vec![1.0];
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec();
        spec.classes.truncate(1);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn synthesize_shapes_and_determinism() {
        let spec = tiny_spec();
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].shape(), (3, 640));
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 8;
        let c = synthesize(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn healthy_class_is_pure_carrier_without_noise() {
        let mut spec = tiny_spec();
        spec.classes[0].noise_floor = 0.0;
        let rec = &synthesize(&spec).unwrap()[0];
        let omega = 2.0 * std::f64::consts::PI * 300.0 / 2048.0;
        for s in 0..3 {
            for t in 0..640 {
                let expect =
                    spec.classes[0].coupling[s] * (omega * t as f64 + 0.8 * s as f64).cos();
                assert_relative_eq!(rec[(s, t)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn impulse_spacing_matches_rate() {
        // fs/f_r = 204.8 samples: kicks at samples 0, 205, 410, 614.
        let env = impulse_envelope(800, 20480.0, 100.0, 500.0);
        let alpha = (-500.0f64 / 20480.0).exp();
        for &t in &[205usize, 410, 614] {
            let jump = env[t] - env[t - 1] * alpha;
            assert_relative_eq!(jump, 1.0, epsilon = 1e-12);
        }
        // Strictly decaying between kicks.
        for t in 206..410 {
            assert!(env[t] < env[t - 1]);
        }
        assert_relative_eq!(env[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn envelope_flat_for_healthy() {
        assert_eq!(impulse_envelope(100, 2048.0, 0.0, 0.0), vec![1.0; 100]);
    }

    #[test]
    fn add_noise_exact_snr() {
        let signal: Vec<f64> = (0..4096)
            .map(|t| (2.0 * std::f64::consts::PI * 50.0 * t as f64 / 2048.0).sin())
            .collect();
        let p_s = signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64;
        for snr_db in [0.0, -5.0, 10.0] {
            let noisy = add_noise(&signal, snr_db, 3).unwrap();
            let p_n = noisy
                .iter()
                .zip(&signal)
                .map(|(y, x)| (y - x) * (y - x))
                .sum::<f64>()
                / signal.len() as f64;
            let got = 10.0 * (p_s / p_n).log10();
            assert_relative_eq!(got, snr_db, epsilon = 1e-9);
        }
        // -5 dB puts noise power at 10^0.5 ~ 3.162x signal power.
        let noisy = add_noise(&signal, -5.0, 3).unwrap();
        let p_n = noisy
            .iter()
            .zip(&signal)
            .map(|(y, x)| (y - x) * (y - x))
            .sum::<f64>()
            / signal.len() as f64;
        assert_relative_eq!(p_n / p_s, 10f64.powf(0.5), epsilon = 1e-9);
    }

    #[test]
    fn add_noise_high_snr_correlates() {
        let signal: Vec<f64> = (0..1024).map(|t| (t as f64 * 0.1).sin()).collect();
        let noisy = add_noise(&signal, 60.0, 5).unwrap();
        let dot: f64 = signal.iter().zip(&noisy).map(|(a, b)| a * b).sum();
        let na = signal.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999);
    }

    #[test]
    fn add_noise_zero_signal_rejected() {
        assert!(add_noise(&[0.0; 16], 0.0, 1).is_err());
        assert!(add_noise(&[], 0.0, 1).is_err());
    }

    #[test]
    fn add_noise_deterministic() {
        let signal = vec![1.0, -2.0, 3.0, -4.0];
        assert_eq!(add_noise(&signal, 5.0, 9).unwrap(), add_noise(&signal, 5.0, 9).unwrap());
        assert_ne!(add_noise(&signal, 5.0, 9).unwrap(), add_noise(&signal, 5.0, 10).unwrap());
    }

    #[test]
    fn build_dataset_counts_and_split() {
        let spec = tiny_spec();
        let ds = build_dataset(&spec, 8, 0.5, 40).unwrap();
        assert_eq!(ds.samples.len(), 80);
        assert_eq!(ds.metadata.train_indices.len(), 64);
        assert_eq!(ds.metadata.test_indices.len(), 16);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.feature_dim(), 8);
        assert_eq!(ds.num_nodes(), 3);
        // Balanced labels in both splits.
        for labels in [
            ds.train_samples().map(|s| s.label).collect::<Vec<_>>(),
            ds.test_samples().map(|s| s.label).collect::<Vec<_>>(),
        ] {
            let ones = labels.iter().filter(|&&l| l == 1).count();
            assert_eq!(ones * 2, labels.len());
        }
        // Split is a partition.
        let mut all: Vec<usize> = ds
            .metadata
            .train_indices
            .iter()
            .chain(&ds.metadata.test_indices)
            .cloned()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..80).collect::<Vec<_>>());
        // Signals live in [0, 1] after per-sensor normalization.
        for s in &ds.samples {
            assert!(s.signal.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn build_dataset_insufficient_windows() {
        let spec = tiny_spec();
        assert!(build_dataset(&spec, 8, 0.5, 81).is_err());
    }

    #[test]
    fn build_dataset_hash_stable() {
        let spec = tiny_spec();
        let a = build_dataset(&spec, 8, 0.5, 10).unwrap();
        let b = build_dataset(&spec, 8, 0.5, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata.spec_hash, spec.hash());
    }

    #[test]
    fn build_dataset_edgeless_warning() {
        // cos > 1.0 never holds, so the graph is guaranteed edgeless.
        let ds = build_dataset(&tiny_spec(), 8, 1.0, 10).unwrap();
        assert_eq!(ds.graph.num_edges(), 0);
        assert!(ds.metadata.warning.as_deref().unwrap().contains("edgeless"));
    }

    #[test]
    fn noisy_dataset_copy() {
        let ds = build_dataset(&tiny_spec(), 8, 0.5, 10).unwrap();
        let noisy = add_noise_to_dataset(&ds, 0.0, 42).unwrap();
        assert_eq!(noisy.samples.len(), ds.samples.len());
        assert_ne!(noisy.samples[0].signal, ds.samples[0].signal);
        assert_eq!(noisy.metadata, ds.metadata);
        let again = add_noise_to_dataset(&ds, 0.0, 42).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn dataset_round_trip_bitwise() {
        let dir = std::env::temp_dir().join("sgwn-data-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.sgwd");
        let ds = build_dataset(&tiny_spec(), 8, 0.5, 12).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.signal.iter().zip(b.signal.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dataset_file_size_predicted() {
        let dir = std::env::temp_dir().join("sgwn-data-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("size.sgwd");
        let ds = build_dataset(&tiny_spec(), 8, 0.5, 40).unwrap();
        save_dataset(&ds, &path).unwrap();
        let size = std::fs::metadata(&path).unwrap().len();
        let payload = 8 * 3 * 8 * 80u64;
        assert!(size > payload);
        assert!((size - payload) < payload / 100 + 4096, "header overhead {}", size - payload);
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = std::env::temp_dir().join("sgwn-data-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corrupt.sgwd");
        let ds = build_dataset(&tiny_spec(), 8, 0.5, 5).unwrap();
        save_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other}"),
        }

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        std::fs::write(&path, &bad_version).unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other}"),
        }

        let len = bytes.len();
        bytes.truncate(len - 5);
        std::fs::write(&path, &bytes).unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::Format { offset, message } => {
                assert!(offset > 16);
                assert!(message.contains("sample data"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn load_missing_file() {
        let err = load_dataset(Path::new("/nonexistent/x.sgwd")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }
}
