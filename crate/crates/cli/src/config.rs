//! Experiment configuration.
//!
//! Config files are flat `key = value` text; `#` starts a comment and list
//! values are comma separated. Command-line flags override file keys.
//!
//! ```text
//! model = two_state
//! param.a = 0.1
//! k = 0.5, 1
//! n = 50, 100, 200, 400
//! algorithm = cloning
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use scgf_core::estimators::Algorithm;
use scgf_core::model::{registry_model, JumpModel};
use scgf_core::model_file::read_model_file;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Registry { name: String, params: BTreeMap<String, f64> },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub ks: Vec<f64>,
    pub c: f64,
    pub algorithm: Algorithm,
    pub ns: Vec<usize>,
    pub horizon: f64,
    pub burn_in_fraction: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    pub out: PathBuf,
    /// Initial law; defaults to a point mass at state 0.
    pub mu0: Option<Vec<f64>>,
    /// Sweep test function; defaults to the indicator of state 0.
    pub f: Option<Vec<f64>>,
    /// Replicas of the naive path-reweighting estimator in `run` (0 disables it).
    pub naive_replicas: usize,
    /// Write oracle marginal trajectories.
    pub marginals: bool,
    /// Write the event log of replica 0 for every `(k, N)`.
    pub event_log: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Registry {
                name: "two_state".into(),
                params: BTreeMap::new(),
            },
            ks: vec![1.0],
            c: 0.0,
            algorithm: Algorithm::Cloning,
            ns: vec![1000],
            horizon: 100.0,
            burn_in_fraction: 0.5,
            replicas: 20,
            seed: 0,
            threads: None,
            out: PathBuf::from("."),
            mu0: None,
            f: None,
            naive_replicas: 0,
            marginals: false,
            event_log: false,
        }
    }
}

const KEYS: [&str; 17] = [
    "model",
    "model_file",
    "k",
    "c",
    "algorithm",
    "n",
    "horizon",
    "burn_in",
    "replicas",
    "seed",
    "threads",
    "out",
    "mu0",
    "f",
    "naive_replicas",
    "marginals",
    "event_log",
];

/// Parses `key = value` lines into an ordered map; later keys win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim();
        if !(KEYS.contains(&key) || key.starts_with("param.")) {
            return Err(CliError::Config(format!("line {}: unknown key `{key}`", i + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Config(format!("`{key}`: expected true or false, got `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Builds a config from key/value pairs on top of the defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut params = BTreeMap::new();
        let mut name = "two_state".to_string();
        for (key, value) in map {
            match key.as_str() {
                "model" => name = value.clone(),
                "model_file" => cfg.model = ModelSource::File(PathBuf::from(value)),
                "k" => cfg.ks = list(key, value)?,
                "c" => cfg.c = num(key, value)?,
                "algorithm" => cfg.algorithm = value.parse().map_err(|e: scgf_core::Error| CliError::Config(e.to_string()))?,
                "n" => cfg.ns = list(key, value)?,
                "horizon" => cfg.horizon = num(key, value)?,
                "burn_in" => cfg.burn_in_fraction = num(key, value)?,
                "replicas" => cfg.replicas = num(key, value)?,
                "seed" => cfg.seed = num(key, value)?,
                "threads" => cfg.threads = Some(num(key, value)?),
                "out" => cfg.out = PathBuf::from(value),
                "mu0" => cfg.mu0 = Some(list(key, value)?),
                "f" => cfg.f = Some(list(key, value)?),
                "naive_replicas" => cfg.naive_replicas = num(key, value)?,
                "marginals" => cfg.marginals = flag(key, value)?,
                "event_log" => cfg.event_log = flag(key, value)?,
                other => match other.strip_prefix("param.") {
                    Some(p) => {
                        params.insert(p.to_string(), num(key, value)?);
                    }
                    None => return Err(CliError::Config(format!("unknown key `{other}`"))),
                },
            }
        }
        if !matches!(cfg.model, ModelSource::File(_)) {
            cfg.model = ModelSource::Registry { name, params };
        } else if map.contains_key("model") {
            return Err(CliError::Config("give either `model` or `model_file`, not both".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.ks.is_empty() || self.ks.iter().any(|k| !k.is_finite()) {
            return Err(CliError::Config("`k` needs at least one finite value".into()));
        }
        if !self.c.is_finite() {
            return Err(CliError::Config("`c` must be finite".into()));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(CliError::Config("`n` values must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Config("`horizon` must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(CliError::Config("`burn_in` must lie in [0, 1)".into()));
        }
        if self.replicas == 0 {
            return Err(CliError::Config("`replicas` must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("`threads` must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<JumpModel, CliError> {
        match &self.model {
            ModelSource::Registry { name, params } => Ok(registry_model(name, params)?),
            ModelSource::File(path) => Ok(read_model_file(path)?),
        }
    }

    pub fn mu0_for(&self, model: &JumpModel) -> Result<Vec<f64>, CliError> {
        let mu0 = self.mu0.clone().unwrap_or_else(|| point_mass(model.size()));
        if mu0.len() != model.size() {
            return Err(CliError::Config(format!("`mu0` has {} entries, model has {} states", mu0.len(), model.size())));
        }
        Ok(mu0)
    }

    pub fn f_for(&self, model: &JumpModel) -> Result<Vec<f64>, CliError> {
        let f = self.f.clone().unwrap_or_else(|| point_mass(model.size()));
        if f.len() != model.size() {
            return Err(CliError::Config(format!("`f` has {} entries, model has {} states", f.len(), model.size())));
        }
        Ok(f)
    }

    /// Canonical text of every setting that affects results (threads and
    /// output directory excluded).
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        match &self.model {
            ModelSource::Registry { name, params } => {
                let _ = writeln!(s, "model={name}");
                for (k, v) in params {
                    let _ = writeln!(s, "param.{k}={v:?}");
                }
            }
            ModelSource::File(path) => {
                let text = std::fs::read_to_string(path).unwrap_or_default();
                let _ = writeln!(s, "model_file_sha256={}", hex::encode(Sha256::digest(text.as_bytes())));
            }
        }
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "k={}", join(&self.ks));
        let _ = writeln!(s, "c={:?}", self.c);
        let _ = writeln!(s, "algorithm={}", self.algorithm);
        let _ = writeln!(s, "n={}", self.ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "horizon={:?}", self.horizon);
        let _ = writeln!(s, "burn_in={:?}", self.burn_in_fraction);
        let _ = writeln!(s, "replicas={}", self.replicas);
        let _ = writeln!(s, "seed={}", self.seed);
        if let Some(mu0) = &self.mu0 {
            let _ = writeln!(s, "mu0={}", join(mu0));
        }
        if let Some(f) = &self.f {
            let _ = writeln!(s, "f={}", join(f));
        }
        let _ = writeln!(s, "naive_replicas={}", self.naive_replicas);
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Comment line heading every CSV output.
    pub fn provenance(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash(), self.seed)
    }
}

fn point_mass(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; s];
    v[0] = 1.0;
    v
}

/// Reads a config file into key/value pairs.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_params() {
        let map = parse_config_text("model = ring_current # comment\nparam.S = 8\nk = -1, 0.5\nn=10,20\nalgorithm = meanfield_fit\n").unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.ks, vec![-1.0, 0.5]);
        assert_eq!(cfg.ns, vec![10, 20]);
        assert_eq!(cfg.algorithm, Algorithm::MeanfieldFit);
        let model = cfg.load_model().unwrap();
        assert_eq!(model.size(), 8);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("nonsense").is_err());
        assert!(parse_config_text("colour = red").is_err());
        let bad = |k: &str, v: &str| {
            let map: BTreeMap<String, String> = [(k.to_string(), v.to_string())].into();
            ExperimentConfig::from_map(&map).is_err()
        };
        assert!(bad("burn_in", "1"));
        assert!(bad("replicas", "0"));
        assert!(bad("n", "0"));
        assert!(bad("algorithm", "gillespie"));
        assert!(bad("k", "x"));
    }

    #[test]
    fn hash_ignores_threads_and_output() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            threads: Some(8),
            out: PathBuf::from("/elsewhere"),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }
}
