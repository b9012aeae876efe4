//! Run-config loading: JSON file, dotted `key=value` overrides, seed fallbacks.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use scan2map::bench::RunConfig;
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "SCAN2MAP_SEED";

/// Parses the right-hand side of an override: JSON when it parses as JSON,
/// a plain string otherwise.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` inside `root`, creating objects along the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{assignment}' is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key '{key}' has an empty segment");
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override '{key}' descends into a non-object"))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| anyhow!("override '{key}' descends into a non-object"))?;
    obj.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Error raised while assembling the config, split by whether the user
/// mistyped an argument or supplied bad data.
#[derive(Debug)]
pub enum ConfigError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

/// Builds the run config. Seed precedence: `seed_flag`, then a seed in the
/// file or overrides, then `env_seed`, then 0.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
    seed_flag: Option<u64>,
    env_seed: Option<&str>,
) -> std::result::Result<RunConfig, ConfigError> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))
                .map_err(ConfigError::Data)?;
            serde_json::from_str::<Value>(&text)
                .with_context(|| format!("config {} is not valid JSON", p.display()))
                .map_err(ConfigError::Data)?
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(ConfigError::Data(anyhow!("config must be a JSON object")));
    }
    for o in overrides {
        apply_override(&mut root, o).map_err(ConfigError::Usage)?;
    }
    let obj = root.as_object_mut().expect("checked above");
    if let Some(seed) = seed_flag {
        obj.insert("seed".into(), Value::from(seed));
    } else if !obj.contains_key("seed") {
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::Usage(anyhow!("{SEED_ENV}='{raw}' is not an unsigned integer")))?;
            obj.insert("seed".into(), Value::from(seed));
        }
    }
    let cfg: RunConfig = serde_json::from_value(root)
        .context("invalid run config")
        .map_err(ConfigError::Data)?;
    cfg.validate().context("invalid run config").map_err(ConfigError::Data)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(overrides: &[&str], flag: Option<u64>, env: Option<&str>) -> RunConfig {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        match load_config(None, &o, flag, env) {
            Ok(c) => c,
            Err(e) => panic!("{e:?}"),
        }
    }

    #[test]
    fn dotted_overrides() {
        let cfg = load(&["icp.max_iterations=40", "trials=5", "beam.channels=16", "map_path=a b.ply"], None, None);
        assert_eq!(cfg.icp.max_iterations, 40);
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.beam.channels, 16);
        assert_eq!(cfg.map_path.to_str(), Some("a b.ply"));
        assert_eq!(cfg.icp.max_correspondence, 0.7);
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(load(&[], None, None).seed, 0);
        assert_eq!(load(&[], None, Some("9")).seed, 9);
        assert_eq!(load(&["seed=4"], None, Some("9")).seed, 4);
        assert_eq!(load(&["seed=4"], Some(7), Some("9")).seed, 7);
    }

    #[test]
    fn bad_inputs() {
        let o = |s: &str| vec![s.to_string()];
        assert!(matches!(load_config(None, &o("trials"), None, None), Err(ConfigError::Usage(_))));
        assert!(matches!(load_config(None, &o("trials.x=1"), None, None), Err(ConfigError::Data(_))));
        assert!(matches!(load_config(None, &o("tirals=1"), None, None), Err(ConfigError::Data(_))));
        assert!(matches!(load_config(None, &o("trials=0"), None, None), Err(ConfigError::Data(_))));
        assert!(matches!(load_config(None, &[], None, Some("x")), Err(ConfigError::Usage(_))));
        assert!(matches!(
            load_config(Some(Path::new("/nonexistent/run.json")), &[], None, None),
            Err(ConfigError::Data(_))
        ));
    }

    #[test]
    fn echoed_config_reparses_identically() {
        let cfg = load(&["icp.cauchy_scale=0.5", "perturbation_sigma=[0.2,0.2,0.2,0.1,0.1,0.1]"], Some(3), None);
        let text = serde_json::to_string(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, text).unwrap();
        let back = load_config(Some(&path), &[], None, None).unwrap_or_else(|e| panic!("{e:?}"));
        assert_eq!(back, cfg);
    }
}
