//! Flat `key = value` experiment configuration.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::ModelConfig;
use crate::{Error, Result};

/// Floating-point precision used for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Optimization settings. Batch size, step budget and stopping rule are
/// desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Root of every random stream (named sub-seeds are derived from it).
    pub seed: u64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub warmup: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Probability of replacing a node label id by `<unk>` in training.
    pub unk_rate: f64,
    /// Steps between dev evaluations (and accuracy checks); 0 disables.
    pub eval_every: usize,
    /// Steps between `last.ckpt` writes; 0 writes only at the end.
    pub checkpoint_every: usize,
    /// Stop once teacher-forced training accuracy reaches this value;
    /// 0 disables the check.
    pub target_accuracy: f64,
    pub eval_beam: usize,
    pub max_decode_len: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            batch_size: 8,
            max_steps: 2000,
            warmup: 400,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-9,
            unk_rate: 0.33,
            eval_every: 100,
            checkpoint_every: 100,
            target_accuracy: 0.0,
            eval_beam: 1,
            max_decode_len: 40,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.warmup == 0 {
            return bad("warmup must be at least 1".into());
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} {v} outside [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.unk_rate) {
            return bad(format!("unk_rate {} outside [0, 1]", self.unk_rate));
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive".into());
        }
        Ok(())
    }
}

/// Model and training settings in one flat namespace.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn to_map<T: Serialize>(v: &T) -> Map<String, Value> {
    match serde_json::to_value(v).expect("config structs serialize") {
        Value::Object(m) => m,
        _ => unreachable!("config structs are objects"),
    }
}

impl Config {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", no + 1))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    /// Overrides one key, parsing `value` according to the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut model = to_map(&self.model);
        let mut train = to_map(&self.train);
        let (map, is_model) = if model.contains_key(key) {
            (&mut model, true)
        } else if train.contains_key(key) {
            (&mut train, false)
        } else {
            return Err(Error::Config(format!("unknown key `{key}`")));
        };
        let parsed = match &map[key] {
            Value::String(_) => Value::String(value.to_string()),
            _ => serde_json::from_str(value)
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))?,
        };
        map.insert(key.to_string(), parsed);
        let bad = |e: serde_json::Error| Error::Config(format!("bad value `{value}` for `{key}`: {e}"));
        if is_model {
            self.model = serde_json::from_value(Value::Object(model)).map_err(bad)?;
        } else {
            self.train = serde_json::from_value(Value::Object(train)).map_err(bad)?;
        }
        Ok(())
    }

    /// Every key with its value, model keys first, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for map in [to_map(&self.model), to_map(&self.train)] {
            for (k, v) in map {
                let v = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_defaults() {
        let c = Config::parse("# toy\nlayers = 2\nseed=7\nprecision = f64\ncopy = false\n").unwrap();
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.precision, Precision::F64);
        assert!(!c.model.copy);
        assert_eq!(c.model.d_model, 512);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.set("dropout", "0.1").unwrap();
        c.set("warmup", "10").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(Config::parse("colour = blue").is_err());
        assert!(Config::parse("layers = two").is_err());
        assert!(Config::parse("just a line").is_err());
        let mut c = Config::default();
        c.set("warmup", "0").unwrap();
        assert!(c.validate().is_err());
    }
}
