//! Layered `key = value` settings: command-line flags over the config file
//! over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Every key the config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "data.label_column",
    "split.fractions",
    "net.hidden",
    "net.embed_dim",
    "net.leaky_slope",
    "train.margin",
    "train.learning_rate",
    "train.epochs",
    "train.batch_size",
    "train.pair_count",
    "train.genuine_fraction",
    "train.margin_candidates",
    "train.folds",
    "sds.k",
    "sds.direction",
    "mmd.bandwidth",
    "mixture.classes",
    "mixture.dimension",
    "mixture.radius",
    "mixture.within_sigma",
    "mixture.per_class",
    "experiment.repetitions",
    "experiment.reference",
    "experiment.data",
    "experiment.fractions",
    "experiment.sigmas",
    "experiment.ranking_sigmas",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses a config file. Blank lines and lines starting with `#` are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got `{line}`", n + 1);
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", n + 1);
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Sets `key` when `value` is present, replacing any config-file value.
    pub fn set<T: ToString>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow::anyhow!("invalid value `{v}` for {key}: {e}"))
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.values.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>()
                    .map_err(|e| anyhow::anyhow!("invalid item `{item}` in {key}: {e}"))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Formats a list for [`Settings::set`].
pub fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
