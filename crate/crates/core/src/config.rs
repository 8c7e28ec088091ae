//! Flat `key = value` experiment configuration with built-in presets.
//!
//! Resolution order: preset, then config-file keys, then explicit
//! overrides. A file may name its base with `preset = NAME`.

use std::fmt::Write as _;

use crate::data::{make_minidigits_pair, make_two_moons_pair, DigitStyle, DomainPair};
use crate::error::{Result, ScganError};
use crate::types::{ImageShape, RunConfig};

pub const PRESET_NAMES: [&str; 4] = ["two_moons", "minidigits", "minidigits_hard", "object_style"];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "two_moons" => include_str!("../../../presets/two_moons.cfg"),
        "minidigits" | "digits" => include_str!("../../../presets/minidigits.cfg"),
        "minidigits_hard" => include_str!("../../../presets/minidigits_hard.cfg"),
        "object_style" => include_str!("../../../presets/object_style.cfg"),
        _ => return None,
    })
}

/// Which synthetic pair a run trains on.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    TwoMoons {
        n_per_domain: usize,
        rotation_deg: f64,
        noise_sd: f64,
    },
    MiniDigits {
        n_per_class: usize,
        style: DigitStyle,
        strength: f64,
    },
}

impl DataSpec {
    /// Builds the pair from `seed` (the data stream of the run seed).
    pub fn generate(&self, seed: u64) -> Result<DomainPair> {
        match *self {
            DataSpec::TwoMoons {
                n_per_domain,
                rotation_deg,
                noise_sd,
            } => make_two_moons_pair(n_per_domain, rotation_deg, noise_sd, seed),
            DataSpec::MiniDigits {
                n_per_class,
                style,
                strength,
            } => make_minidigits_pair(n_per_class, style, strength, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub preset: String,
    pub run: RunConfig,
    pub data: DataSpec,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ScganError::Config(vec![format!("line {}: expected key = value", i + 1)]));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| ScganError::Config(vec![format!("{key}: cannot parse {value:?}: {e}")]))
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|w| parse(key, w.trim())).collect()
}

fn join_widths(w: &[usize]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Experiment {
    pub fn preset(name: &str) -> Result<Experiment> {
        let text = preset_text(name)
            .ok_or_else(|| ScganError::Config(vec![format!("unknown preset {name:?} (known: {})", PRESET_NAMES.join(", "))]))?;
        let mut exp = Experiment {
            preset: name.to_string(),
            run: RunConfig::default(),
            data: DataSpec::TwoMoons {
                n_per_domain: 500,
                rotation_deg: 35.0,
                noise_sd: 0.1,
            },
        };
        for (k, v) in parse_kv(text)? {
            if k != "preset" {
                exp.set(&k, &v)?;
            }
        }
        Ok(exp)
    }

    /// Preset, then `file_text` keys, then `overrides`.
    pub fn resolve(default_preset: &str, file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Experiment> {
        let file = file_text.map(parse_kv).transpose()?.unwrap_or_default();
        let base = file
            .iter()
            .chain(overrides)
            .filter(|(k, _)| k == "preset")
            .last()
            .map_or(default_preset, |(_, v)| v.as_str());
        let mut exp = Experiment::preset(base)?;
        for (k, v) in file.iter().chain(overrides) {
            if k != "preset" {
                exp.set(k, v)?;
            }
        }
        exp.run.validate()?;
        Ok(exp)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let r = &mut self.run;
        match key {
            "n_classes" => r.n_classes = parse(key, value)?,
            "latent_dim" => r.latent_dim = parse(key, value)?,
            "image_shape" => r.image_shape = parse::<ImageShape>(key, value)?,
            "hidden" => r.hidden = parse_widths(key, value)?,
            "classifier_hidden" => r.classifier_hidden = parse_widths(key, value)?,
            "alpha" => r.loss_weights.alpha = parse(key, value)?,
            "beta" => r.loss_weights.beta = parse(key, value)?,
            "gamma" => r.loss_weights.gamma = parse(key, value)?,
            "adv_weight" => r.adv_weight = parse(key, value)?,
            "learning_rate" => r.learning_rate = parse(key, value)?,
            "momentum" => r.momentum = parse(key, value)?,
            "pseudo_threshold" => r.pseudo_threshold = parse(key, value)?,
            "pretrain_steps" => r.pretrain_steps = parse(key, value)?,
            "train_steps" => r.train_steps = parse(key, value)?,
            "batch_size" => r.batch_size = parse(key, value)?,
            "seed" => r.seed = parse(key, value)?,
            "d_steps" => r.d_steps = parse(key, value)?,
            "g_steps" => r.g_steps = parse(key, value)?,
            "c_steps" => r.c_steps = parse(key, value)?,
            "checkpoint_every" => r.checkpoint_every = parse(key, value)?,
            "eval_every" => r.eval_every = parse(key, value)?,
            "dataset" => {
                self.data = match value {
                    "two_moons" => DataSpec::TwoMoons {
                        n_per_domain: 500,
                        rotation_deg: 35.0,
                        noise_sd: 0.1,
                    },
                    "minidigits" => DataSpec::MiniDigits {
                        n_per_class: 50,
                        style: DigitStyle::ColorBlend,
                        strength: 1.0,
                    },
                    other => return Err(ScganError::Config(vec![format!("dataset: unknown {other:?}")])),
                }
            }
            "n_per_domain" | "rotation_deg" | "noise_sd" => match &mut self.data {
                DataSpec::TwoMoons {
                    n_per_domain,
                    rotation_deg,
                    noise_sd,
                } => match key {
                    "n_per_domain" => *n_per_domain = parse(key, value)?,
                    "rotation_deg" => *rotation_deg = parse(key, value)?,
                    _ => *noise_sd = parse(key, value)?,
                },
                _ => return Err(ScganError::Config(vec![format!("{key} applies to dataset two_moons only")])),
            },
            "n_per_class" | "style" | "style_strength" => match &mut self.data {
                DataSpec::MiniDigits {
                    n_per_class,
                    style,
                    strength,
                } => match key {
                    "n_per_class" => *n_per_class = parse(key, value)?,
                    "style" => *style = parse(key, value)?,
                    _ => *strength = parse(key, value)?,
                },
                _ => return Err(ScganError::Config(vec![format!("{key} applies to dataset minidigits only")])),
            },
            _ => return Err(ScganError::Config(vec![format!("unknown key {key:?}")])),
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it reproduces `self`.
    pub fn to_kv(&self) -> String {
        let r = &self.run;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("preset", self.preset.clone());
        match &self.data {
            DataSpec::TwoMoons {
                n_per_domain,
                rotation_deg,
                noise_sd,
            } => {
                put("dataset", "two_moons".into());
                put("n_per_domain", n_per_domain.to_string());
                put("rotation_deg", rotation_deg.to_string());
                put("noise_sd", noise_sd.to_string());
            }
            DataSpec::MiniDigits {
                n_per_class,
                style,
                strength,
            } => {
                put("dataset", "minidigits".into());
                put("n_per_class", n_per_class.to_string());
                put("style", style.name().into());
                put("style_strength", strength.to_string());
            }
        }
        put("n_classes", r.n_classes.to_string());
        put("latent_dim", r.latent_dim.to_string());
        put("image_shape", r.image_shape.to_string());
        put("hidden", join_widths(&r.hidden));
        put("classifier_hidden", join_widths(&r.classifier_hidden));
        put("alpha", r.loss_weights.alpha.to_string());
        put("beta", r.loss_weights.beta.to_string());
        put("gamma", r.loss_weights.gamma.to_string());
        put("adv_weight", r.adv_weight.to_string());
        put("learning_rate", r.learning_rate.to_string());
        put("momentum", r.momentum.to_string());
        put("pseudo_threshold", r.pseudo_threshold.to_string());
        put("pretrain_steps", r.pretrain_steps.to_string());
        put("train_steps", r.train_steps.to_string());
        put("batch_size", r.batch_size.to_string());
        put("seed", r.seed.to_string());
        put("d_steps", r.d_steps.to_string());
        put("g_steps", r.g_steps.to_string());
        put("c_steps", r.c_steps.to_string());
        put("checkpoint_every", r.checkpoint_every.to_string());
        put("eval_every", r.eval_every.to_string());
        s
    }
}
