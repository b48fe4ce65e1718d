//! Layered configuration: defaults, then `DVT_SEED`, then the config file,
//! then flags.

use dvt_core::model::{parse_kv, KeyValue};
use dvt_core::{DvtError, Result};

use crate::ConfigArgs;

pub const SEED_ENV: &str = "DVT_SEED";

fn env_seed() -> Result<Option<String>> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim()
                .parse::<u64>()
                .map_err(|_| DvtError::config(format!("{SEED_ENV} = `{v}` is not an unsigned integer")))?;
            Ok(Some(v.trim().to_string()))
        }
        _ => Ok(None),
    }
}

/// Splits `key=value`.
pub fn parse_set(raw: &str) -> Result<(String, String)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| DvtError::config(format!("override `{raw}` is not `key=value`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Builds a config from `base`, applying in increasing priority: `DVT_SEED`,
/// the file, `--set` pairs, the typed `flags`, and `--seed`.
pub fn resolve<C: KeyValue>(mut base: C, args: &ConfigArgs, flags: Vec<(&str, Option<String>)>) -> Result<C> {
    if let Some(seed) = env_seed()? {
        base.apply(&[("seed".to_string(), seed)])?;
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| DvtError::io(path, e))?;
        base.apply(&parse_kv(&text)?)?;
    }
    let sets = args.set.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>>>()?;
    base.apply(&sets)?;
    let typed: Vec<(String, String)> = flags
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    base.apply(&typed)?;
    if let Some(seed) = args.seed {
        base.apply(&[("seed".to_string(), seed.to_string())])?;
    }
    Ok(base)
}

pub fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}
