//! Flat `key = value` configuration files and flag/file/default resolution.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; keys may use `-` or `_`. Recognized keys: kappa, t_gen,
//! tau_sim, theta, lambda, gate, min_hits, max_age, delta_t, alpha_ema,
//! iou_thresh, out.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "kappa",
    "t_gen",
    "tau_sim",
    "theta",
    "lambda",
    "gate",
    "min_hits",
    "max_age",
    "delta_t",
    "alpha_ema",
    "iou_thresh",
    "out",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected 'key = value'", i + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{origin}:{}: unknown key '{}'", i + 1, k.trim())));
            }
            if values.insert(key, v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("{origin}:{}: key '{}' given twice", i + 1, k.trim())));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Effective settings of one run, in resolution order flag > file > default.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    pub effective: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            effective: BTreeMap::new(),
        }
    }

    pub fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        let value = match (flag, self.file.raw(key)) {
            (Some(v), _) => v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("config value for '{key}' is invalid: '{raw}'")))?,
            (None, None) => default,
        };
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }
}
