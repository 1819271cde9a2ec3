//! Run configuration, config hashing, and the envelope shared by all JSON
//! artifacts.
//!
//! A run config is a TOML document:
//!
//! ```toml
//! input = "data.csv"
//! label_column = "Class"
//! method = "mi"            # random | mi | support_points
//! seed = 42
//! output_dir = "out"
//!
//! [preprocess]             # optional
//! drop_duplicates = true
//! impute = true
//! missing_tokens = ["", "NA", "NaN", "null"]
//!
//! [mi]                     # only with method = "mi"
//! n_bins = 3
//! binning = "quantile"     # quantile | equal_width
//! k_min = 2
//! k_max = 10
//! allocation = "neyman"    # neyman | optimal | proportional
//! cost_model = "stratum_size"
//!
//! [support_points]         # only with method = "support_points"
//! m = 500
//! max_iter = 2000
//!
//! [bench]                  # only read by the bench command
//! methods = ["random", "mi", "support_points"]
//! seeds = [0, 1, 2]
//! test_fraction = 0.2
//!
//! [logistic]               # only read by the bench command
//! learning_rate = 0.1
//! epochs = 500
//! l2 = 0.001
//! ```
//!
//! Every key except `input` and `label_column` has a default. Command-line
//! flags are applied on top of the file.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LoadOptions, PreprocessPolicy};
use crate::error::{Error, Result};
use crate::evaluation::{BenchmarkConfig, LogisticConfig};
use crate::pipeline::{Method, MethodConfigs, MiConfig};
use crate::support_points::SupportPointConfig;

/// Version of every JSON artifact layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub drop_duplicates: bool,
    pub impute: bool,
    pub missing_tokens: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let policy = PreprocessPolicy::default();
        Self {
            drop_duplicates: policy.drop_duplicates,
            impute: policy.impute,
            missing_tokens: LoadOptions::default().missing_tokens,
        }
    }
}

impl PreprocessConfig {
    pub fn policy(&self) -> PreprocessPolicy {
        PreprocessPolicy {
            drop_duplicates: self.drop_duplicates,
            impute: self.impute,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            missing_tokens: self.missing_tokens.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub label_column: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi: Option<MiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_points: Option<SupportPointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logistic: Option<LogisticConfig>,
}

fn default_method() -> Method {
    Method::Random
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, label_column: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            label_column: label_column.into(),
            method: default_method(),
            seed: 0,
            output_dir: default_output_dir(),
            preprocess: PreprocessConfig::default(),
            mi: None,
            support_points: None,
            bench: None,
            logistic: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks that only the selected method's section is present and that
    /// every section holds valid values.
    pub fn validate_for_undersample(&self) -> Result<()> {
        let stray = match self.method {
            Method::Random => [
                ("mi", self.mi.is_some()),
                ("support_points", self.support_points.is_some()),
            ],
            Method::Mi => [
                ("support_points", self.support_points.is_some()),
                ("mi", false),
            ],
            Method::SupportPoints => [("mi", self.mi.is_some()), ("support_points", false)],
        };
        if let Some((name, _)) = stray.iter().find(|(_, present)| *present) {
            return Err(Error::config(format!(
                "section [{name}] does not apply to method {}",
                self.method
            )));
        }
        self.validate_sections()
    }

    pub fn validate_sections(&self) -> Result<()> {
        if self.label_column.is_empty() {
            return Err(Error::config("label_column is empty"));
        }
        if let Some(mi) = &self.mi {
            mi.validate()?;
        }
        if let Some(sp) = &self.support_points {
            sp.validate()?;
        }
        if let Some(bench) = &self.bench {
            if bench.methods.is_empty() || bench.seeds.is_empty() {
                return Err(Error::config(
                    "bench needs at least one method and one seed",
                ));
            }
            if !(bench.test_fraction > 0.0 && bench.test_fraction < 1.0) {
                return Err(Error::config("test_fraction must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn method_configs(&self) -> MethodConfigs {
        MethodConfigs {
            mi: self.mi.clone().unwrap_or_default(),
            support_points: self.support_points.clone().unwrap_or_default(),
        }
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            methods: self.method_configs(),
            logistic: self.logistic.unwrap_or_default(),
            test_fraction: self.bench.as_ref().map_or(0.2, |b| b.test_fraction),
        }
    }

    pub fn bench_section(&self) -> BenchSection {
        self.bench.clone().unwrap_or_default()
    }

    /// SHA-256 over the canonical JSON form of the config, as hex. The
    /// output directory does not affect results and is left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        hash_json(&canonical)
    }
}

/// SHA-256 of the compact JSON encoding of `value`, as hex.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes to JSON");
    hex::encode(Sha256::digest(&json))
}

/// Envelope around every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub data: T,
}

impl<T> Artifact<T> {
    pub fn new(seed: u64, config_hash: String, data: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            config_hash,
            data,
        }
    }

    pub fn for_run(config: &RunConfig, data: T) -> Self {
        Self::new(config.seed, config.hash(), data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to replay a run: the resolved config plus digests of
/// its inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "manifest schema version {} is not supported",
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
