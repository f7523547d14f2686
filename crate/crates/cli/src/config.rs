//! Strict INI experiment configuration.
//!
//! Every key has a default; a config file and `--set section.key=value`
//! overrides may only name known keys. Values are parsed when read, and a
//! bad value is reported with its `section.key`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("unknown config section [{0}]")]
    UnknownSection(String),
    #[error("unknown config key {0}")]
    UnknownKey(String),
    #[error("malformed override {0:?}, expected section.key=value")]
    Override(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
}

pub type ConfigResult<T> = Result<T, ConfigError>;

const DEFAULTS: &[(&str, &str, &str)] = &[
    ("run", "seed", "0"),
    ("run", "dtype", "float64"),
    ("run", "out_dir", "out"),
    ("data", "dim", "1"),
    ("data", "corr", "0, 0.3, 0.6, 0.9"),
    ("data", "shuffled", "false"),
    ("data", "sizes", "8, 16, 32, 64, 128"),
    ("data", "draws", "1000"),
    ("data", "dropout_rate", "0.5"),
    ("data", "image_size", "16"),
    ("data", "n_classes", "8"),
    ("data", "grid", "4"),
    ("data", "patch_noise", "1.0"),
    ("data", "pixel_noise", "0.3"),
    ("data", "rho", "0, 0.5, 0.9, 0.99"),
    ("data", "features", ""),
    ("data", "labels", ""),
    ("data", "test_features", ""),
    ("data", "test_labels", ""),
    ("model", "critic_hidden", "128"),
    ("model", "concat_hidden", "64, 64"),
    ("model", "dot_width", "128"),
    ("model", "prior_hidden", "1000, 200"),
    ("model", "coord_hidden", "512, 512"),
    ("model", "ndm_hidden", "128, 128"),
    ("model", "probe_hidden", "200"),
    ("model", "probe_dropout", "0.1"),
    ("objective", "alpha", "0"),
    ("objective", "beta", "1"),
    ("objective", "gamma", "0.1"),
    ("objective", "estimator", "infonce"),
    ("objective", "scorer", "dot"),
    ("objective", "prior_loss", "saturating"),
    ("objective", "negatives", "all"),
    ("objective", "negative_sweep", "1, 4, 16, 64"),
    ("objective", "exclude_positive", "true"),
    ("objective", "negative_source", "within"),
    ("objective", "occlusion", "off"),
    ("objective", "abs_coord", "0"),
    ("objective", "rel_coord", "0"),
    ("optimizer", "lr0", "default"),
    ("optimizer", "schedule", "constant"),
    ("optimizer", "beta1", "0.9"),
    ("optimizer", "prior_lr0", "1e-3"),
    ("optimizer", "steps", "1000"),
    ("optimizer", "batch", "64"),
    ("eval", "probes", "linear"),
    ("eval", "feature_source", "global"),
    ("eval", "probe_epochs", "30"),
    ("eval", "probe_train", "2000"),
    ("eval", "probe_test", "1000"),
    ("eval", "ndm", "false"),
    ("eval", "ndm_steps", "500"),
    ("eval", "ndm_batch", "128"),
    ("eval", "mine", "false"),
    ("eval", "mine_steps", "500"),
    ("eval", "cases", "20"),
    ("eval", "tol", "1e-4"),
    ("eval", "export_features", "false"),
    ("eval", "checkpoint", "true"),
];

const PATH_KEYS: &[(&str, &str)] = &[
    ("run", "out_dir"),
    ("data", "features"),
    ("data", "labels"),
    ("data", "test_features"),
    ("data", "test_labels"),
];

/// Fully resolved `section.key -> value` table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<(String, String), String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let values = DEFAULTS
            .iter()
            .map(|(s, k, v)| ((s.to_string(), k.to_string()), v.to_string()))
            .collect();
        ExperimentConfig { values }
    }
}

impl ExperimentConfig {
    /// Defaults, then the file (if any), then overrides. Relative paths in
    /// the file are resolved against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> ConfigResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = path {
            let ini = Ini::load_from_file(path).map_err(|e| ConfigError::Read {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            let base = path.parent().unwrap_or(Path::new(""));
            for (section, props) in ini.iter() {
                let section = match section {
                    Some(s) => s,
                    None if props.is_empty() => continue,
                    None => {
                        let key = props.iter().next().map_or("", |(k, _)| k);
                        return Err(ConfigError::UnknownKey(format!("{key} (outside any section)")));
                    }
                };
                if !DEFAULTS.iter().any(|(s, _, _)| *s == section) {
                    return Err(ConfigError::UnknownSection(section.to_string()));
                }
                for (key, value) in props.iter() {
                    let value = if PATH_KEYS.contains(&(section, key)) && !value.is_empty() {
                        base.join(value).to_string_lossy().into_owned()
                    } else {
                        value.to_string()
                    };
                    cfg.set(section, key, &value)?;
                }
            }
        }
        for o in overrides {
            let (lhs, value) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            let (section, key) = lhs.trim().split_once('.').ok_or_else(|| ConfigError::Override(o.clone()))?;
            cfg.set(section, key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> ConfigResult<()> {
        match self.values.get_mut(&(section.to_string(), key.to_string())) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(format!("{section}.{key}"))),
        }
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .unwrap_or_else(|| panic!("{section}.{key} has no default"))
    }

    /// Parses `section.key` with `FromStr`.
    pub fn get<T>(&self, section: &str, key: &str) -> ConfigResult<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(section, key);
        raw.trim().parse().map_err(|e: T::Err| bad(section, key, raw, e))
    }

    /// Comma-separated list; empty or `none` gives an empty list.
    pub fn list<T>(&self, section: &str, key: &str) -> ConfigResult<Vec<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(section, key);
        if raw.trim().is_empty() || raw.trim() == "none" {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|v| v.trim().parse().map_err(|e: T::Err| bad(section, key, raw, e)))
            .collect()
    }

    /// `None` for an empty value.
    pub fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        let raw = self.raw(section, key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// A learning rate, where `default` selects `fallback`.
    pub fn lr(&self, section: &str, key: &str, fallback: f64) -> ConfigResult<f64> {
        if self.raw(section, key).trim() == "default" {
            return Ok(fallback);
        }
        let lr: f64 = self.get(section, key)?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(bad(section, key, self.raw(section, key), "must be positive"));
        }
        Ok(lr)
    }

    pub fn invalid(&self, section: &str, key: &str, reason: impl std::fmt::Display) -> ConfigError {
        bad(section, key, self.raw(section, key), reason)
    }

    /// The resolved configuration rendered back to INI.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for ((section, key), value) in DEFAULTS.iter().map(|(s, k, _)| ((*s, *k), self.raw(s, k))) {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|((s, k), v)| (format!("{s}.{k}"), v.clone())).collect()
    }
}

fn bad(section: &str, key: &str, value: &str, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::Value {
        key: format!("{section}.{key}"),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}
