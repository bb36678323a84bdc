//! `key = value` configuration text shared by every command.
//!
//! Lines are trimmed, `#` starts a comment, blank lines are skipped. Unknown
//! keys are rejected; the first error names its line.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::shield::{ShieldConfig, ShieldMode};
use crate::sim::{Difficulty, Profile};
use crate::train::TrainConfig;

pub(crate) fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::invalid(key, format!("cannot parse `{value}`")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::parse(i + 1, "empty key"));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Every tunable of a run: training, shield and evaluation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Settings {
    pub train: TrainConfig,
    pub shield: ShieldConfig,
    pub eval: EvalConfig,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.shield;
        match key {
            "beta" => s.beta = parse_value(key, value)?,
            "d_c" => s.d_c = parse_value(key, value)?,
            "delta_lin" => s.delta_lin = parse_value(key, value)?,
            "delta_ang" => s.delta_ang = parse_value(key, value)?,
            "max_corrections" => s.max_corrections = parse_value(key, value)?,
            "eta_c" => s.eta = parse_value(key, value)?,
            "shield_mode" => s.mode = value.parse::<ShieldMode>()?,
            _ => {
                if !self.train.set(key, value)? && !self.eval.set(key, value)? {
                    return Err(Error::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Applies config text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, k, v) in parse_lines(text)? {
            self.set(&k, &v).map_err(|e| Error::parse(line, e.to_string()))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides (command-line `--set`).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(o, "override must be `key=value`"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.shield.validate()?;
        Ok(())
    }

    /// Effective configuration in the same text format, loadable again.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# training");
        s.push_str(&self.train.to_text());
        let sh = &self.shield;
        let _ = writeln!(s, "# shield");
        let _ = writeln!(s, "beta = {}", sh.beta);
        let _ = writeln!(s, "d_c = {}", sh.d_c);
        let _ = writeln!(s, "delta_lin = {}", sh.delta_lin);
        let _ = writeln!(s, "delta_ang = {}", sh.delta_ang);
        let _ = writeln!(s, "max_corrections = {}", sh.max_corrections);
        let _ = writeln!(s, "eta_c = {}", sh.eta);
        let _ = writeln!(s, "shield_mode = {}", sh.mode);
        let _ = writeln!(s, "# evaluation");
        s.push_str(&self.eval.to_text());
        s
    }
}

pub(crate) fn parse_profile(key: &str, value: &str) -> Result<Profile> {
    value.parse().map_err(|_| Error::invalid(key, format!("unknown profile `{value}`")))
}

pub(crate) fn parse_difficulty(key: &str, value: &str) -> Result<Difficulty> {
    value
        .parse()
        .map_err(|_| Error::invalid(key, format!("unknown difficulty `{value}`")))
}
