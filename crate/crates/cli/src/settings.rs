//! INI run configuration with flag and environment overrides.

use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::failure::{Failure, Outcome};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "TILTLAB_SEED";

#[derive(Debug, Default)]
pub struct Settings {
    ini: Ini,
}

impl Settings {
    /// Loads `path` and rejects sections or keys outside `allowed`.
    pub fn load(path: Option<&Path>, allowed: &[(&str, &[&str])]) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read config {}: {e}", path.display())))?;
        let ini = Ini::load_from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        for (section, props) in ini.iter() {
            let name = section.unwrap_or("");
            let Some((_, keys)) = allowed.iter().find(|(s, _)| *s == name) else {
                if props.is_empty() {
                    continue;
                }
                return Err(Failure::data(format!("{}: unknown section [{name}]", path.display())));
            };
            if let Some((k, _)) = props.iter().find(|(k, _)| !keys.contains(k)) {
                return Err(Failure::data(format!("{}: unknown key '{k}' in [{name}]", path.display())));
            }
        }
        Ok(Self { ini })
    }

    pub fn ini(&self) -> &Ini {
        &self.ini
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    pub fn parse<T: FromStr>(&self, section: &str, key: &str) -> Outcome<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| v.parse().map_err(|e| Failure::data(format!("[{section}] {key} = '{v}': {e}"))))
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Outcome<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(section, key)?.unwrap_or(default))
    }

    /// `--seed`, else `TILTLAB_SEED`, else `[section] seed`, else `default`.
    pub fn seed(&self, section: &str, flag: Option<u64>, default: u64) -> Outcome<u64> {
        let configured = self.parse_or(section, "seed", default)?;
        override_seed(flag, configured)
    }
}

/// `flag`, else `TILTLAB_SEED`, else `configured`.
pub fn override_seed(flag: Option<u64>, configured: u64) -> Outcome<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| Failure::usage(format!("{SEED_ENV}='{v}': {e}"))),
        Err(_) => Ok(configured),
    }
}
