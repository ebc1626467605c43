//! `--override section.key=value` edits applied on top of a loaded config.

use anyhow::{anyhow, bail, Context, Result};
use serde::{de::DeserializeOwned, Serialize};
use toml::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub section: String,
    pub path: Vec<String>,
    pub value: Value,
}

/// Parses `section.a.b=value`. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn parse(text: &str) -> Result<Override> {
    let (key, raw) = text.split_once('=').ok_or_else(|| anyhow!("override `{text}` is not key=value"))?;
    let mut parts = key.trim().split('.').map(str::to_string);
    let section = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("override `{text}` has an empty key"))?;
    let path: Vec<String> = parts.collect();
    if path.is_empty() || path.iter().any(String::is_empty) {
        bail!("override `{text}` must name a field, e.g. {section}.field=value");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok(Override { section, path, value })
}

/// Applies every override addressed to `section` to `config`. Unknown
/// fields are rejected.
pub fn apply<T: Serialize + DeserializeOwned>(config: &T, section: &str, overrides: &[Override]) -> Result<T> {
    let mine: Vec<&Override> = overrides.iter().filter(|o| o.section == section).collect();
    if mine.is_empty() {
        return toml::Value::try_from(config)?.try_into().context("config round trip");
    }
    let mut root = toml::Value::try_from(config).context("serializing config")?;
    for o in mine {
        let (last, parents) = o.path.split_last().expect("non-empty path");
        let mut node = &mut root;
        for p in parents {
            node = node
                .get_mut(p.as_str())
                .filter(|v| v.is_table())
                .ok_or_else(|| anyhow!("unknown override key {section}.{}", o.path.join(".")))?;
        }
        let table = node.as_table_mut().ok_or_else(|| anyhow!("{section}.{} is not inside a table", o.path.join(".")))?;
        let value = coerce(&o.value, table.get(last.as_str()));
        table.insert(last.clone(), value);
    }
    root.try_into::<T>().map_err(|e| anyhow!("override for `{section}` rejected: {e}"))
}

/// Integers given for float fields are widened.
fn coerce(value: &Value, current: Option<&Value>) -> Value {
    match (value, current) {
        (Value::Integer(i), Some(Value::Float(_))) => Value::Float(*i as f64),
        _ => value.clone(),
    }
}

/// Rejects overrides aimed at sections the command does not have.
pub fn check_sections(overrides: &[Override], allowed: &[&str]) -> Result<()> {
    for o in overrides {
        if !allowed.contains(&o.section.as_str()) {
            bail!("override section `{}` not used by this command (expected one of {})", o.section, allowed.join(", "));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sbrl_core::ppo::PpoConfig;

    #[test]
    fn parses_literals_and_strings() {
        let o = parse("ppo.learning_rate=1e-4").unwrap();
        assert_eq!((o.section.as_str(), o.path.clone()), ("ppo", vec!["learning_rate".to_string()]));
        assert_eq!(o.value, Value::Float(1e-4));
        assert_eq!(parse("env.name=quick").unwrap().value, Value::String("quick".into()));
        assert!(parse("nokey").is_err());
        assert!(parse("ppo=3").is_err());
    }

    #[test]
    fn overrides_win_over_file_values() {
        let base = PpoConfig::default();
        let o = vec![parse("ppo.epochs=3").unwrap(), parse("ppo.learning_rate=1").unwrap(), parse("env.x=1").unwrap()];
        let c = apply(&base, "ppo", &o).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.learning_rate, 1.0);
        assert_eq!(c.gamma, base.gamma);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let o = vec![parse("ppo.no_such_field=1").unwrap()];
        assert!(apply(&PpoConfig::default(), "ppo", &o).is_err());
    }

    #[test]
    fn optional_field_can_be_set() {
        let o = vec![parse("ppo.total_steps=5000").unwrap()];
        assert_eq!(apply(&PpoConfig::default(), "ppo", &o).unwrap().total_steps, Some(5000));
    }
}
