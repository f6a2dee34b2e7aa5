use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::decoder::center_phone;
use crate::error::{Error, Result};

/// Multiplier applied to the acoustic log-score of each phone.
#[derive(Clone, Debug, PartialEq)]
pub struct PhoneScaleMap {
    default: f64,
    scales: BTreeMap<String, f64>,
}

impl Default for PhoneScaleMap {
    fn default() -> Self {
        PhoneScaleMap {
            default: 1.0,
            scales: BTreeMap::new(),
        }
    }
}

impl PhoneScaleMap {
    /// Every phone scaled by `s`.
    pub fn uniform(s: f64) -> Result<Self> {
        check(s)?;
        Ok(PhoneScaleMap {
            default: s,
            scales: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, phone: impl Into<String>, s: f64) -> Result<()> {
        check(s)?;
        self.scales.insert(phone.into(), s);
        Ok(())
    }

    pub fn default_scale(&self) -> f64 {
        self.default
    }

    /// Scale of a unit label, looked up by its center phone.
    pub fn scale(&self, unit_label: &str) -> f64 {
        let p = center_phone(unit_label);
        self.scales.get(p).copied().unwrap_or(self.default)
    }

    pub fn is_identity(&self) -> bool {
        self.default == 1.0 && self.scales.values().all(|&s| s == 1.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scales.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// `phone = scale` lines; the key `default` sets the fallback.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = PhoneScaleMap::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("scale line {}", no + 1), "expected key = value"))?;
            let v: f64 = v.trim().parse().map_err(|_| {
                Error::format(format!("scale line {}", no + 1), format!("bad number {}", v.trim()))
            })?;
            match k.trim() {
                "default" => {
                    check(v)?;
                    map.default = v;
                }
                phone => map.set(phone, v)?,
            }
        }
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("default = {}\n", self.default);
        for (k, v) in &self.scales {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

fn check(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Validation(format!("phone scale {s} must be positive")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_lookup() {
        let m = PhoneScaleMap::parse("default = 0.6\nsil = 1\nv1 = 0.8 # vowel\n").unwrap();
        assert_eq!(m.scale("sil"), 1.0);
        assert_eq!(m.scale("c0-v1+c2"), 0.8);
        assert_eq!(m.scale("c3"), 0.6);
        assert!(PhoneScaleMap::parse("a = -1").is_err());
        assert_eq!(PhoneScaleMap::parse(&m.to_text()).unwrap(), m);
    }
}
