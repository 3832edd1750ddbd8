//! Flat dotted-key configuration with built-in defaults, a TOML file layer,
//! and `key=value` command-line overrides, validated before any compute.

use std::collections::BTreeMap;
use std::path::Path;

use sgwn_core::data::SyntheticSpec;
use sgwn_core::kernels::KernelFamily;
use sgwn_core::nn::TrainConfig;
use sgwn_core::{Error, Result};
use toml::Value;

/// Per-class fields accepted under `synth.class<i>.`.
const CLASS_FIELDS: &[&str] = &[
    "name",
    "carrier_hz",
    "fault_hz",
    "impulse_decay",
    "coupling",
    "noise_floor",
];

fn defaults() -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    put("seed", Value::Integer(0));
    put("jobs", Value::Integer(1));
    put("plots", Value::Boolean(false));
    put("dataset.path", Value::String("dataset.sgwd".into()));
    put("checkpoint.path", Value::String("model.sgwn".into()));

    let rig = SyntheticSpec::default_rig();
    put("synth.sensors", Value::Integer(rig.sensors as i64));
    put("synth.fs", Value::Float(rig.fs));
    put("synth.record_len", Value::Integer(rig.record_len as i64));
    put("synth.phase_step", Value::Float(rig.phase_step));
    put("synth.num_classes", Value::Integer(rig.classes.len() as i64));
    put("synth.window", Value::Integer(256));
    put("synth.epsilon", Value::Float(0.9));
    put("synth.samples_per_class", Value::Integer(250));
    for (i, class) in rig.classes.iter().enumerate() {
        put(&format!("synth.class{i}.name"), Value::String(class.name.clone()));
        put(&format!("synth.class{i}.carrier_hz"), Value::Float(class.carrier_hz));
        put(&format!("synth.class{i}.fault_hz"), Value::Float(class.fault_hz));
        put(
            &format!("synth.class{i}.impulse_decay"),
            Value::Float(class.impulse_decay),
        );
        put(
            &format!("synth.class{i}.coupling"),
            Value::Array(class.coupling.iter().map(|&c| Value::Float(c)).collect()),
        );
        put(&format!("synth.class{i}.noise_floor"), Value::Float(class.noise_floor));
    }

    let train = TrainConfig::default();
    put("train.epochs", Value::Integer(train.epochs as i64));
    put("train.batch_size", Value::Integer(train.batch_size as i64));
    put("train.learning_rate", Value::Float(train.learning_rate));
    put("train.decay", Value::Float(train.decay));
    put("train.order_k", Value::Integer(train.order_k as i64));
    put("train.scales_j", Value::Integer(train.scales_j as i64));
    put("train.kernel", Value::String(train.kernel.as_str().into()));
    put("train.q", Value::Float(train.q));
    put("train.batchnorm", Value::Boolean(train.batchnorm));
    put("train.hidden", Value::Integer(train.hidden as i64));
    put("train.depth", Value::Integer(train.depth as i64));
    put("train.exact", Value::Boolean(train.exact));

    put("filters.kernel", Value::String("mexican_hat".into()));
    put("filters.scales_j", Value::Integer(5));
    put("filters.q", Value::Float(2.0));
    put("filters.lambda_max", Value::Float(2.0));
    put("filters.grid", Value::Integer(512));

    put("transform.sample", Value::Integer(0));

    put("ses.input", Value::String("dataset".into()));
    put("ses.sample", Value::Integer(0));
    put("ses.node", Value::Integer(0));
    put("ses.target_hz", Value::Float(0.0));
    put("ses.tol_bins", Value::Integer(1));
    put("ses.checkpoint", Value::Boolean(false));

    put("sweep.depths", Value::Array(vec![Value::Integer(2), Value::Integer(10)]));
    put(
        "sweep.j_values",
        Value::Array(vec![Value::Integer(1), Value::Integer(2), Value::Integer(3)]),
    );
    put(
        "sweep.k_values",
        Value::Array(vec![Value::Integer(1), Value::Integer(2), Value::Integer(4)]),
    );
    put(
        "sweep.snr_db",
        Value::Array(vec![Value::Float(0.0), Value::Float(-5.0)]),
    );
    m
}

fn is_known_key(key: &str, defaults: &BTreeMap<String, Value>) -> bool {
    if defaults.contains_key(key) {
        return true;
    }
    // synth.class<i>.<field> for any class index, not just the default four.
    if let Some(rest) = key.strip_prefix("synth.class") {
        if let Some((idx, field)) = rest.split_once('.') {
            return !idx.is_empty()
                && idx.bytes().all(|b| b.is_ascii_digit())
                && CLASS_FIELDS.contains(&field);
        }
    }
    false
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// The merged configuration: defaults, then file, then overrides.
#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let base = defaults();
        let mut values = base.clone();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::MissingInput(format!("config file {}", path.display()))
                } else {
                    Error::Io(e)
                }
            })?;
            let parsed: Value = text
                .parse()
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
            let mut flat = BTreeMap::new();
            flatten("", &parsed, &mut flat);
            for (k, v) in flat {
                if !is_known_key(&k, &base) {
                    return Err(Error::Config(format!("{k}: unknown config key")));
                }
                values.insert(k, v);
            }
        }
        for raw in overrides {
            let (key, text) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{raw}' is not key=value")))?;
            if !is_known_key(key, &base) {
                return Err(Error::Config(format!("{key}: unknown config key")));
            }
            // Parse the value as TOML; anything unparsable is a bare string.
            let value = match format!("v = {text}").parse::<Value>() {
                Ok(Value::Table(mut t)) => t.remove("v").expect("key v just parsed"),
                _ => Value::String(text.to_string()),
            };
            values.insert(key.to_string(), value);
        }
        Ok(Config { values })
    }

    fn get(&self, key: &str) -> Result<&Value> {
        self.values
            .get(key)
            .ok_or_else(|| Error::Config(format!("{key}: missing required config key")))
    }

    pub fn get_i64(&self, key: &str) -> Result<i64> {
        match self.get(key)? {
            Value::Integer(i) => Ok(*i),
            other => Err(Error::Config(format!("{key}: expected integer, got {other}"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get_i64(key)?;
        usize::try_from(v).map_err(|_| Error::Config(format!("{key}: expected nonnegative integer, got {v}")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let v = self.get_i64(key)?;
        u64::try_from(v).map_err(|_| Error::Config(format!("{key}: expected nonnegative integer, got {v}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        match self.get(key)? {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(Error::Config(format!("{key}: expected number, got {other}"))),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            Value::Boolean(b) => Ok(*b),
            other => Err(Error::Config(format!("{key}: expected boolean, got {other}"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        match self.get(key)? {
            Value::String(s) => Ok(s),
            other => Err(Error::Config(format!("{key}: expected string, got {other}"))),
        }
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(Error::Config(format!(
                        "{key}: expected nonnegative integers, got {other}"
                    ))),
                })
                .collect(),
            other => Err(Error::Config(format!("{key}: expected array, got {other}"))),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(Error::Config(format!("{key}: expected numbers, got {other}"))),
                })
                .collect(),
            other => Err(Error::Config(format!("{key}: expected array, got {other}"))),
        }
    }

    pub fn get_kernel(&self, key: &str) -> Result<KernelFamily> {
        self.get_str(key)?.parse().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{key}: {m}")),
            other => other,
        })
    }

    /// Master seed for the run; every component derives a named sub-seed.
    pub fn seed(&self) -> Result<u64> {
        self.get_u64("seed")
    }

    pub fn jobs(&self) -> Result<usize> {
        let jobs = self.get_usize("jobs")?;
        if jobs == 0 {
            return Err(Error::Config("jobs: must be at least 1".into()));
        }
        Ok(jobs)
    }

    /// The fully resolved flat view, for echoing into run manifests.
    pub fn resolved(&self) -> &BTreeMap<String, Value> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_cover_all_getters() {
        let cfg = Config::load(None, &[]).unwrap();
        assert_eq!(cfg.seed().unwrap(), 0);
        assert_eq!(cfg.get_usize("synth.window").unwrap(), 256);
        assert_eq!(cfg.get_f64("synth.epsilon").unwrap(), 0.9);
        assert_eq!(cfg.get_str("synth.class1.name").unwrap(), "inner_race");
        assert_eq!(cfg.get_usize_list("sweep.depths").unwrap(), vec![2, 10]);
        assert_eq!(cfg.get_f64_list("sweep.snr_db").unwrap(), vec![0.0, -5.0]);
        assert_eq!(
            cfg.get_kernel("train.kernel").unwrap(),
            KernelFamily::MexicanHat
        );
    }

    #[test]
    fn overrides_and_file_layering() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "train.epochs = 7\nsynth.epsilon = 0.5").unwrap();
        let cfg = Config::load(
            Some(file.path()),
            &["train.epochs=9".into(), "train.kernel=heat".into()],
        )
        .unwrap();
        assert_eq!(cfg.get_usize("train.epochs").unwrap(), 9);
        assert_eq!(cfg.get_f64("synth.epsilon").unwrap(), 0.5);
        assert_eq!(cfg.get_kernel("train.kernel").unwrap(), KernelFamily::Heat);
    }

    #[test]
    fn unknown_key_reports_field_path() {
        let err = Config::load(None, &["train.epoch=3".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.starts_with("train.epoch")));
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "trian.epochs = 7").unwrap();
        let err = Config::load(Some(file.path()), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.starts_with("trian.epochs")));
    }

    #[test]
    fn class_keys_beyond_defaults_are_known() {
        let cfg = Config::load(
            None,
            &[
                "synth.class4.name=extra".into(),
                "synth.class4.coupling=[1.0,1.0,1.0,1.0,1.0]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.get_str("synth.class4.name").unwrap(), "extra");
        assert!(Config::load(None, &["synth.class4.wrong=1".into()]).is_err());
    }

    #[test]
    fn type_errors_name_the_key() {
        let cfg = Config::load(None, &["train.epochs=oops".into()]).unwrap();
        let err = cfg.get_usize("train.epochs").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.starts_with("train.epochs")));
    }

    #[test]
    fn missing_config_file_is_missing_input() {
        let err = Config::load(Some(Path::new("/nonexistent/sgwn.toml")), &[]).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }
}
