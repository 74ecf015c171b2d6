//! Plain `key = value` run configuration covering both the model shape and
//! the trainer. Unknown keys are errors. `margin` and `dropout_keep` feed
//! both structs so the two can never drift apart.

use crate::error::{Error, Result};
use crate::invalid;
use crate::params::{Composition, ModelConfig, PersonaMode};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Defaults for one model variant. AG uses a tighter variance ceiling
    /// than the other variants.
    pub fn for_mode(mode: PersonaMode) -> Self {
        let mut rc = RunConfig::default();
        rc.model.persona_mode = mode;
        if mode == PersonaMode::Ag {
            rc.model.var_max = 25.0;
        }
        rc
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid!("bad value {value:?} for key {key:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid!("bad boolean {value:?} for key {key:?}")),
    }
}

pub fn parse_persona_mode(value: &str) -> Result<PersonaMode> {
    match value {
        "none" => Ok(PersonaMode::None),
        "t" => Ok(PersonaMode::T),
        "ag" => Ok(PersonaMode::Ag),
        "agt" => Ok(PersonaMode::Agt),
        _ => Err(invalid!("bad persona mode {value:?} (none, t, ag, agt)")),
    }
}

pub fn parse_composition(value: &str) -> Result<Composition> {
    match value {
        "sum" => Ok(Composition::Sum),
        "concat" => Ok(Composition::Concat),
        _ => Err(invalid!("bad composition {value:?} (sum, concat)")),
    }
}

/// Apply one key = value setting.
pub fn apply_key(rc: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "dim" => rc.model.dim = parse(key, value)?,
        "margin" => {
            let m: f64 = parse(key, value)?;
            rc.model.margin = m;
            rc.train.margin = m;
        }
        "var_min" => rc.model.var_min = parse(key, value)?,
        "var_max" => rc.model.var_max = parse(key, value)?,
        "spherical" => rc.model.spherical = parse_bool(key, value)?,
        "dropout_keep" => {
            let p: f64 = parse(key, value)?;
            rc.model.dropout_keep = p;
            rc.train.dropout_keep = p;
        }
        "persona_mode" => rc.model.persona_mode = parse_persona_mode(value)?,
        "composition" => rc.model.composition = parse_composition(value)?,
        "epochs" => rc.train.epochs = parse(key, value)?,
        "batch_size" => rc.train.batch_size = parse(key, value)?,
        "eta0" => rc.train.eta0 = parse(key, value)?,
        "eta_min" => rc.train.eta_min = parse(key, value)?,
        "rmsprop_decay" => rc.train.rmsprop_decay = parse(key, value)?,
        "rmsprop_eps" => rc.train.rmsprop_eps = parse(key, value)?,
        "negatives_per_positive" => rc.train.negatives_per_positive = parse(key, value)?,
        "seed" => rc.train.seed = parse(key, value)?,
        "cosine_pi_variant" => rc.train.cosine_pi_variant = parse_bool(key, value)?,
        _ => return Err(invalid!("unknown config key {key:?}")),
    }
    Ok(())
}

/// Parse a config file's text over a starting configuration. Blank lines and
/// `#` comments are ignored.
pub fn apply_config_text(rc: &mut RunConfig, text: &str, source: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            msg: format!("expected key = value, found {line:?}"),
        })?;
        apply_key(rc, key.trim(), value.trim()).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let mut rc = RunConfig::default();
        let text = "\
# toy run
dim = 10
margin = 2.5
epochs = 50
spherical = false
persona_mode = t
cosine_pi_variant = true
";
        apply_config_text(&mut rc, text, "test.conf").unwrap();
        assert_eq!(rc.model.dim, 10);
        assert_eq!(rc.model.margin, 2.5);
        assert_eq!(rc.train.margin, 2.5);
        assert_eq!(rc.train.epochs, 50);
        assert!(!rc.model.spherical);
        assert_eq!(rc.model.persona_mode, PersonaMode::T);
        assert!(rc.train.cosine_pi_variant);
    }

    #[test]
    fn unknown_key_is_error() {
        let mut rc = RunConfig::default();
        let err = apply_config_text(&mut rc, "learning_rate = 0.1\n", "test.conf").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
        assert!(err.to_string().contains("test.conf:1"));
    }

    #[test]
    fn malformed_line_is_error() {
        let mut rc = RunConfig::default();
        assert!(apply_config_text(&mut rc, "dim 10\n", "c").is_err());
        assert!(apply_config_text(&mut rc, "dim = ten\n", "c").is_err());
    }

    #[test]
    fn ag_mode_defaults_tighten_variance() {
        let rc = RunConfig::for_mode(PersonaMode::Ag);
        assert_eq!(rc.model.var_max, 25.0);
        let rc = RunConfig::for_mode(PersonaMode::Agt);
        assert_eq!(rc.model.var_max, 100.0);
    }
}
