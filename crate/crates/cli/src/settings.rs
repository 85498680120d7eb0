//! Layered `key = value` settings: a config file, overridden by flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use ropelab_core::config::parse_kv;

use crate::exit::usage;

#[derive(Debug, Default)]
pub struct Settings {
    source: String,
    /// Value and its config-file line (0 for flags).
    values: BTreeMap<String, (usize, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let pairs = parse_kv(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(Settings {
            source: path.display().to_string(),
            values: pairs.into_iter().map(|(l, k, v)| (k, (l, v))).collect(),
        })
    }

    /// A flag value, when given, replaces whatever the file said.
    pub fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), (0, v.to_string()));
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn origin(&self, line: usize) -> String {
        if line == 0 {
            "flag".into()
        } else {
            format!("{}:{line}", self.source)
        }
    }

    /// Removes and parses `key`.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                usage(format!("{}: bad value `{v}` for `{key}`: {e}", self.origin(line)))
            }),
        }
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes and parses a comma-separated list.
    pub fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(raw) = self.take::<String>(key)? else {
            return Ok(None);
        };
        raw.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| usage(format!("bad list entry `{s}` for `{key}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Moves every remaining key accepted by `accept` into `apply`, in
    /// sorted key order.
    pub fn drain_into(
        &mut self,
        accept: &[&str],
        mut apply: impl FnMut(&str, &str) -> std::result::Result<(), String>,
    ) -> Result<()> {
        let keys: Vec<String> = self
            .values
            .keys()
            .filter(|k| accept.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in keys {
            let (line, v) = self.values.remove(&k).expect("listed key");
            apply(&k, &v).map_err(|e| usage(format!("{}: {e}", self.origin(line))))?;
        }
        Ok(())
    }

    /// Errors on any key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.values.iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(usage(format!("{}: unknown key `{k}`", self.origin(*line)))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_win() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed = 3\ncount = 5").unwrap();
        let mut s = Settings::load(Some(f.path())).unwrap();
        s.flag("seed", Some(9u64));
        s.flag::<u64>("count", None);
        assert_eq!(s.take::<u64>("seed").unwrap(), Some(9));
        assert_eq!(s.take::<usize>("count").unwrap(), Some(5));
        s.finish().unwrap();
    }

    #[test]
    fn leftovers_are_usage_errors() {
        let mut s = Settings::default();
        s.flag("bogus", Some(1));
        let e = s.finish().unwrap_err();
        assert_eq!(crate::exit::code_for(&e), crate::exit::USAGE);
    }
}
