//! Plain `key = value` configuration files for training hyperparameters.
//!
//! Grammar: one assignment per line; `#` starts a comment (whole-line or
//! trailing); blank lines are skipped; a duplicated key keeps the last
//! value. Unknown keys warn rather than fail so configs stay forward
//! compatible; malformed values are hard errors. Precedence is handled by
//! the caller: defaults, then file values, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pipeline::ClassWeights;
use crate::train::TrainConfig;

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`, got {text:?}")]
    Syntax {
        path: String,
        line: usize,
        text: String,
    },
    #[error("configuration key {key}: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("configuration key {key}: {message}")]
    OutOfRange { key: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Keys the training commands understand.
pub const KNOWN_KEYS: [&str; 11] = [
    "epochs",
    "batch_size",
    "validation_split",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "weight_distinction",
    "weight_fail",
    "weight_pass",
    "weight_withdrawn",
];

/// Parses the `key = value` grammar; performs no key validation.
pub fn parse_config_str(text: &str, origin: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                text: raw.trim().to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                text: raw.trim().to_string(),
            });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            log::warn!("{origin}:{}: key {key} set twice; keeping the later value", i + 1);
        }
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> ConfigResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

fn parse_typed<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> ConfigResult<T> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

/// Applies file values onto a [`TrainConfig`]. Unknown keys warn; range
/// errors (for values the training loop would reject anyway) surface here
/// with the offending key name.
pub fn apply_to_train_config(
    values: &BTreeMap<String, String>,
    cfg: &mut TrainConfig,
) -> ConfigResult<()> {
    let mut weights = cfg.class_weights.0;
    for (key, value) in values {
        match key.as_str() {
            "epochs" => cfg.epochs = parse_typed(key, value, "a positive integer")?,
            "batch_size" => cfg.batch_size = parse_typed(key, value, "a positive integer")?,
            "validation_split" => {
                cfg.validation_split = parse_typed(key, value, "a number in [0, 1)")?
            }
            "learning_rate" => cfg.learning_rate = parse_typed(key, value, "a positive number")?,
            "adam_beta1" => cfg.beta1 = parse_typed(key, value, "a number in [0, 1)")?,
            "adam_beta2" => cfg.beta2 = parse_typed(key, value, "a number in [0, 1)")?,
            "adam_eps" => cfg.eps = parse_typed(key, value, "a positive number")?,
            "weight_distinction" => weights[0] = parse_typed(key, value, "a positive number")?,
            "weight_fail" => weights[1] = parse_typed(key, value, "a positive number")?,
            "weight_pass" => weights[2] = parse_typed(key, value, "a positive number")?,
            "weight_withdrawn" => weights[3] = parse_typed(key, value, "a positive number")?,
            other => log::warn!("ignoring unknown configuration key {other:?}"),
        }
    }
    cfg.class_weights = ClassWeights::new(weights).map_err(|e| ConfigError::OutOfRange {
        key: "weight_*".to_string(),
        message: e.to_string(),
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments_comments_and_blanks() {
        let text = "\n# full-line comment\nepochs = 10\nbatch_size=256   # trailing comment\n\nlearning_rate =  0.002\n";
        let map = parse_config_str(text, "test").unwrap();
        assert_eq!(map["epochs"], "10");
        assert_eq!(map["batch_size"], "256");
        assert_eq!(map["learning_rate"], "0.002");
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn last_duplicate_wins() {
        let map = parse_config_str("epochs = 5\nepochs = 9\n", "test").unwrap();
        assert_eq!(map["epochs"], "9");
    }

    #[test]
    fn missing_equals_is_a_syntax_error() {
        let err = parse_config_str("epochs 10", "cfg").unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn applies_values_over_defaults() {
        let map = parse_config_str(
            "epochs = 12\nlearning_rate = 0.005\nweight_pass = 2.5\n",
            "test",
        )
        .unwrap();
        let mut cfg = TrainConfig::default();
        apply_to_train_config(&map, &mut cfg).unwrap();
        assert_eq!(cfg.epochs, 12);
        assert_eq!(cfg.learning_rate, 0.005);
        assert_eq!(cfg.class_weights.0, [1.5, 1.5, 2.5, 1.0]);
        // Untouched values keep their defaults.
        assert_eq!(cfg.batch_size, 1024);
    }

    #[test]
    fn bad_value_names_the_key() {
        let map = parse_config_str("epochs = soon", "test").unwrap();
        let mut cfg = TrainConfig::default();
        match apply_to_train_config(&map, &mut cfg) {
            Err(ConfigError::BadValue { key, .. }) => assert_eq!(key, "epochs"),
            other => panic!("expected BadValue, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_weight_is_rejected() {
        let map = parse_config_str("weight_fail = 0", "test").unwrap();
        let mut cfg = TrainConfig::default();
        assert!(matches!(
            apply_to_train_config(&map, &mut cfg),
            Err(ConfigError::OutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_key_is_tolerated() {
        let map = parse_config_str("mystery = 42\nepochs = 3\n", "test").unwrap();
        let mut cfg = TrainConfig::default();
        apply_to_train_config(&map, &mut cfg).unwrap();
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn known_keys_list_matches_application() {
        // Every advertised key must actually be applied (no typos between
        // the list and the match).
        for key in KNOWN_KEYS {
            let value = "0.5";
            let map = parse_config_str(&format!("{key} = {value}"), "test").unwrap();
            let mut cfg = TrainConfig::default();
            // 0.5 parses for every key type (integers fail, which is fine
            // for epochs/batch_size: use 7 instead there).
            let map = if key == "epochs" || key == "batch_size" {
                parse_config_str(&format!("{key} = 7"), "test").unwrap()
            } else {
                map
            };
            apply_to_train_config(&map, &mut cfg).unwrap();
            let defaults = TrainConfig::default();
            let changed = cfg.epochs != defaults.epochs
                || cfg.batch_size != defaults.batch_size
                || cfg.validation_split != defaults.validation_split
                || cfg.learning_rate != defaults.learning_rate
                || cfg.beta1 != defaults.beta1
                || cfg.beta2 != defaults.beta2
                || cfg.eps != defaults.eps
                || cfg.class_weights != defaults.class_weights;
            assert!(changed, "key {key} had no effect");
        }
    }
}
