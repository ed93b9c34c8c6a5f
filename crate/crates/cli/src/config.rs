//! The run configuration file.
//!
//! Every section and every key is optional; missing values take the defaults
//! listed on each type. Unknown keys are rejected.
//!
//! ```toml
//! [model]        # architecture, see ModelConfig
//! [data]         # n, seed, eval_fraction
//! [partition]    # num_clients, alpha, seed
//! [federation]   # rounds, fraction, lr, local_epochs, batch_size,
//!                # availability, seed, masking, parallel
//! [federation.dp]  # clip_norm, sigma, seed (absent: no privacy layer)
//! [gradcheck]    # seed, eps
//! [output]       # dir, timings
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use fedscan::data::PartitionSpec;
use fedscan::fed::FedConfig;
use fedscan::model::ModelConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Volumes generated. Default 40.
    pub n: usize,
    /// Default 0.
    pub seed: u64,
    /// Share of volumes held out at the end of the dataset. Default 0.2.
    pub eval_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n: 40, seed: 0, eval_fraction: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Seeds the fixture model, its batch and the sampled coordinates. Default 0.
    pub seed: u64,
    /// Central-difference step. Default 1e-5.
    pub eps: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { seed: 0, eps: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Default `fedscan-out`.
    pub dir: PathBuf,
    /// Record wall-clock seconds in reports. Default false, which keeps
    /// report files byte-identical across reruns.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("fedscan-out"), timings: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub partition: PartitionSpec,
    pub federation: FedConfig,
    pub gradcheck: GradcheckConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Read `path` (or start from defaults), apply `key.path=value`
    /// overrides in order, then deserialize and validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::io(Stage::Config, format!("{}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::invalid(Stage::Config, format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config = RunConfig::deserialize(Value::Table(table))
            .map_err(|e| CliError::invalid(Stage::Config, e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let table = text.parse::<Table>().map_err(|e| CliError::invalid(Stage::Config, e.to_string()))?;
        let config = RunConfig::deserialize(Value::Table(table))
            .map_err(|e| CliError::invalid(Stage::Config, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: fedscan::Error| CliError::invalid(Stage::Config, e.to_string());
        self.model.validate().map_err(invalid)?;
        self.partition.validate().map_err(invalid)?;
        self.federation.validate().map_err(invalid)?;
        if self.data.n < 2 {
            return Err(CliError::invalid(Stage::Config, "data.n must be at least 2"));
        }
        if !(self.data.eval_fraction > 0.0 && self.data.eval_fraction < 1.0) {
            return Err(CliError::invalid(
                Stage::Config,
                format!("data.eval_fraction {} outside (0, 1)", self.data.eval_fraction),
            ));
        }
        if !(1e-7..=1e-3).contains(&self.gradcheck.eps) {
            return Err(CliError::invalid(
                Stage::Config,
                format!("gradcheck.eps {} outside [1e-7, 1e-3]", self.gradcheck.eps),
            ));
        }
        Ok(())
    }

    /// The fully resolved configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// Set `a.b.c=value` in `table`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise, so `output.dir=/tmp/x` works
/// without quotes.
pub fn apply_override(table: &mut Table, item: &str) -> Result<(), CliError> {
    let bad = |msg: String| CliError::invalid(Stage::Config, msg);
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{item}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("override key `{key}` has an empty segment")));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("split yields at least one segment");
    let mut cursor = table;
    for segment in parents {
        let entry = cursor
            .entry(segment.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| bad(format!("override `{key}`: `{segment}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
