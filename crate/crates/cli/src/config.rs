//! Experiment configuration: flat `key=value` files, CLI overrides, and the
//! canonical echo that goes into every CSV header.
//!
//! Grid keys (`snr1`) may repeat or hold comma-separated lists; scalar keys
//! take their last occurrence. CLI values override file values, which
//! override the defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use detect_core::se::SpectrumAveraging;
use detect_core::system::Dimensions;
use thiserror::Error;

/// Algorithm names accepted in `algos`.
pub const ALGORITHM_NAMES: [&str; 5] =
    ["proposed", "lmmse_ls", "single_lmmse", "ep_ls", "se_predictor"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected key=value, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// How the second-hop SNR follows the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr2Rule {
    /// One fixed SNR2 for every grid point.
    Fixed(f64),
    /// SNR2 = SNR1 + offset (dB).
    OffsetDb(f64),
}

impl Snr2Rule {
    pub fn resolve(&self, snr1_db: f64) -> f64 {
        match *self {
            Snr2Rule::Fixed(v) => v,
            Snr2Rule::OffsetDb(off) => snr1_db + off,
        }
    }
}

/// Where the state-evolution predictor takes its spectra from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectrumSource {
    /// Eigenvalues of one sampled channel pair (trial 0 of the grid point).
    #[default]
    Empirical,
    /// Deterministic Marchenko-Pastur quantiles.
    MarchenkoPastur,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dims: Dimensions,
    pub prior: String,
    pub algos: Vec<String>,
    pub snr1_db: Vec<f64>,
    pub snr2: Snr2Rule,
    pub trials: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub v_min: f64,
    pub v_max: f64,
    pub damping: f64,
    pub stop_tol: f64,
    pub se_spectrum: SpectrumSource,
    pub se_average: SpectrumAveraging,
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
    /// Fill `wall_time_ms` with measured times. Off by default so that
    /// repeated runs of one config stay byte-identical.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: Dimensions::new(128, 256, 512).expect("valid defaults"),
            prior: "qpsk".to_string(),
            algos: vec!["proposed".to_string()],
            snr1_db: vec![10.0],
            snr2: Snr2Rule::OffsetDb(-3.0),
            trials: 100,
            iterations: 20,
            master_seed: 1,
            v_min: 1e-12,
            v_max: 1e12,
            damping: 1.0,
            stop_tol: 1e-8,
            se_spectrum: SpectrumSource::default(),
            se_average: SpectrumAveraging::default(),
            out: None,
            workers: 0,
            timing: false,
        }
    }
}

/// A set of not-yet-applied assignments from one source (file or CLI).
#[derive(Debug, Clone, Default)]
pub struct ConfigPatch {
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub prior: Option<String>,
    pub algos: Option<Vec<String>>,
    pub snr1_db: Option<Vec<f64>>,
    pub snr2: Option<Snr2Rule>,
    pub trials: Option<usize>,
    pub iterations: Option<usize>,
    pub master_seed: Option<u64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub damping: Option<f64>,
    pub stop_tol: Option<f64>,
    pub se_spectrum: Option<SpectrumSource>,
    pub se_average: Option<SpectrumAveraging>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub timing: Option<bool>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: other.to_string(),
            reason: "expected true/false".to_string(),
        }),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ConfigPatch {
    /// Apply one `key = value` assignment. List keys append; scalar keys
    /// replace.
    pub fn assign(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "L" => self.l = Some(parse_num(key, value)?),
            "M" => self.m = Some(parse_num(key, value)?),
            "N" => self.n = Some(parse_num(key, value)?),
            "prior" => self.prior = Some(value.trim().to_string()),
            "algos" | "algo" => {
                self.algos.get_or_insert_with(Vec::new).extend(parse_list(value))
            }
            "snr1" => {
                let list = self.snr1_db.get_or_insert_with(Vec::new);
                for item in parse_list(value) {
                    list.push(parse_num(key, &item)?);
                }
            }
            "snr2" => self.snr2 = Some(Snr2Rule::Fixed(parse_num(key, value)?)),
            "snr2_offset_db" => {
                self.snr2 = Some(Snr2Rule::OffsetDb(parse_num(key, value)?))
            }
            "trials" => self.trials = Some(parse_num(key, value)?),
            "iters" => self.iterations = Some(parse_num(key, value)?),
            "seed" => self.master_seed = Some(parse_num(key, value)?),
            "v_min" => self.v_min = Some(parse_num(key, value)?),
            "v_max" => self.v_max = Some(parse_num(key, value)?),
            "damping" => self.damping = Some(parse_num(key, value)?),
            "stop_tol" => self.stop_tol = Some(parse_num(key, value)?),
            "se_spectrum" => {
                self.se_spectrum = Some(match value.trim() {
                    "empirical" => SpectrumSource::Empirical,
                    "marchenko_pastur" => SpectrumSource::MarchenkoPastur,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: other.to_string(),
                            reason: "expected empirical|marchenko_pastur".to_string(),
                        })
                    }
                })
            }
            "se_average" => {
                self.se_average = Some(match value.trim() {
                    "padded" => SpectrumAveraging::Padded,
                    "nonzero" => SpectrumAveraging::NonzeroOnly,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: other.to_string(),
                            reason: "expected padded|nonzero".to_string(),
                        })
                    }
                })
            }
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "workers" => self.workers = Some(parse_num(key, value)?),
            "timing" => self.timing = Some(parse_bool(key, value)?),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

/// Parse a flat key=value config file into a patch.
pub fn parse_file(path: &Path) -> Result<ConfigPatch, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ConfigPatch, ConfigError> {
    let mut patch = ConfigPatch::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        patch.assign(key.trim(), value)?;
    }
    Ok(patch)
}

impl ExperimentConfig {
    /// Overlay a patch; assigned fields replace the current values.
    pub fn apply(&mut self, patch: &ConfigPatch) -> Result<(), ConfigError> {
        let (mut l, mut m, mut n) =
            (self.dims.source, self.dims.relay, self.dims.dest);
        if let Some(v) = patch.l {
            l = v;
        }
        if let Some(v) = patch.m {
            m = v;
        }
        if let Some(v) = patch.n {
            n = v;
        }
        self.dims = Dimensions::new(l, m, n)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(v) = &patch.prior {
            self.prior = v.clone();
        }
        if let Some(v) = &patch.algos {
            self.algos = v.clone();
        }
        if let Some(v) = &patch.snr1_db {
            self.snr1_db = v.clone();
        }
        if let Some(v) = patch.snr2 {
            self.snr2 = v;
        }
        if let Some(v) = patch.trials {
            self.trials = v;
        }
        if let Some(v) = patch.iterations {
            self.iterations = v;
        }
        if let Some(v) = patch.master_seed {
            self.master_seed = v;
        }
        if let Some(v) = patch.v_min {
            self.v_min = v;
        }
        if let Some(v) = patch.v_max {
            self.v_max = v;
        }
        if let Some(v) = patch.damping {
            self.damping = v;
        }
        if let Some(v) = patch.stop_tol {
            self.stop_tol = v;
        }
        if let Some(v) = patch.se_spectrum {
            self.se_spectrum = v;
        }
        if let Some(v) = patch.se_average {
            self.se_average = v;
        }
        if let Some(v) = &patch.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = patch.workers {
            self.workers = v;
        }
        if let Some(v) = patch.timing {
            self.timing = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.prior != "qpsk" {
            return Err(ConfigError::Invalid(format!(
                "prior `{}` is not supported (only qpsk)",
                self.prior
            )));
        }
        if self.algos.is_empty() {
            return Err(ConfigError::Invalid("algorithm list is empty".into()));
        }
        for a in &self.algos {
            if !ALGORITHM_NAMES.contains(&a.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "unknown algorithm `{a}` (expected one of {})",
                    ALGORITHM_NAMES.join("|")
                )));
            }
        }
        if self.snr1_db.is_empty() {
            return Err(ConfigError::Invalid("snr1 grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iters must be >= 1".into()));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return Err(ConfigError::Invalid(
                "variance bounds must satisfy 0 < v_min < v_max".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(ConfigError::Invalid("damping must lie in (0, 1]".into()));
        }
        if self.stop_tol < 0.0 {
            return Err(ConfigError::Invalid("stop_tol must be >= 0".into()));
        }
        Ok(())
    }

    /// Canonical sorted key=value pairs describing the effective config.
    ///
    /// Only keys that influence the computed rows are echoed; `workers` and
    /// `out` are omitted so the same experiment yields byte-identical CSV
    /// regardless of pool size or destination.
    pub fn echo_pairs(&self) -> Vec<(String, String)> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        map.insert("L".into(), self.dims.source.to_string());
        map.insert("M".into(), self.dims.relay.to_string());
        map.insert("N".into(), self.dims.dest.to_string());
        map.insert("prior".into(), self.prior.clone());
        map.insert("algos".into(), self.algos.join(","));
        map.insert(
            "snr1".into(),
            self.snr1_db.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
        match self.snr2 {
            Snr2Rule::Fixed(v) => {
                map.insert("snr2".into(), v.to_string());
            }
            Snr2Rule::OffsetDb(v) => {
                map.insert("snr2_offset_db".into(), v.to_string());
            }
        }
        map.insert("trials".into(), self.trials.to_string());
        map.insert("iters".into(), self.iterations.to_string());
        map.insert("seed".into(), self.master_seed.to_string());
        map.insert("v_min".into(), self.v_min.to_string());
        map.insert("v_max".into(), self.v_max.to_string());
        map.insert("damping".into(), self.damping.to_string());
        map.insert("stop_tol".into(), self.stop_tol.to_string());
        map.insert(
            "se_spectrum".into(),
            match self.se_spectrum {
                SpectrumSource::Empirical => "empirical".into(),
                SpectrumSource::MarchenkoPastur => "marchenko_pastur".into(),
            },
        );
        map.insert(
            "se_average".into(),
            match self.se_average {
                SpectrumAveraging::Padded => "padded".into(),
                SpectrumAveraging::NonzeroOnly => "nonzero".into(),
            },
        );
        map.insert("timing".into(), self.timing.to_string());
        map.into_iter().collect()
    }
}
