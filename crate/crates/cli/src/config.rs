//! Flat `key = value` simulation config files.
//!
//! ```text
//! # fig3 with RR-C, fewer seeds
//! preset = fig3
//! sampler = rrc
//! seeds = 200
//! ```
//!
//! Keys: `preset`, `sampler`, `timesteps`, `capacity`, `replay_start`,
//! `batch`, `priority` (`uniform` | `modular` | `listed`), `modulus`,
//! `offset`, `decay`, `priorities` (comma-separated), `seeds`, `base_seed`.
//! Settings start from the fig3 preset; a `preset` line resets every field to
//! that preset, and later lines override it.

use std::fmt::Write as _;

use rr_replay::{PriorityScheme, SamplerKind, SimConfig};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SchemeKind {
    Uniform,
    Modular,
    Listed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigBuilder {
    timesteps: usize,
    capacity: usize,
    replay_start: usize,
    batch: usize,
    sampler: SamplerKind,
    scheme: SchemeKind,
    modulus: u64,
    offset: f64,
    decay: f64,
    priorities: Vec<f64>,
    seeds: usize,
    base_seed: u64,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        Self::from_preset("fig3").expect("fig3 preset exists")
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("field '{key}': cannot parse '{value}'"))
}

impl ConfigBuilder {
    pub fn from_preset(name: &str) -> Result<Self, String> {
        let config = SimConfig::preset(name).ok_or_else(|| {
            format!(
                "unknown preset '{name}' (expected one of {})",
                SimConfig::PRESETS.join(", ")
            )
        })?;
        let (scheme, modulus, offset, decay) = match config.priority {
            PriorityScheme::Modular {
                modulus,
                offset,
                decay,
            } => (SchemeKind::Modular, modulus, offset, decay),
            _ => unreachable!("presets use modular priorities"),
        };
        Ok(ConfigBuilder {
            timesteps: config.timesteps,
            capacity: config.capacity,
            replay_start: config.replay_start,
            batch: config.batch,
            sampler: config.sampler,
            scheme,
            modulus,
            offset,
            decay,
            priorities: Vec::new(),
            seeds: config.seeds,
            base_seed: config.base_seed,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "preset" => *self = Self::from_preset(value)?,
            "sampler" => {
                self.sampler = value
                    .parse()
                    .map_err(|e: rr_replay::ReplayError| format!("field 'sampler': {e}"))?
            }
            "timesteps" => self.timesteps = parse(key, value)?,
            "capacity" => self.capacity = parse(key, value)?,
            "replay_start" => self.replay_start = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "priority" => {
                self.scheme = match value {
                    "uniform" => SchemeKind::Uniform,
                    "modular" => SchemeKind::Modular,
                    "listed" => SchemeKind::Listed,
                    other => {
                        return Err(format!(
                            "field 'priority': unknown scheme '{other}' (uniform, modular, listed)"
                        ))
                    }
                }
            }
            "modulus" => self.modulus = parse(key, value)?,
            "offset" => self.offset = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "priorities" => {
                self.priorities = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "seeds" => self.seeds = parse(key, value)?,
            "base_seed" => self.base_seed = parse(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Usage(format!("config line {}: {msg}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn sampler(&mut self, sampler: SamplerKind) -> &mut Self {
        self.sampler = sampler;
        self
    }

    pub fn seeds(&mut self, seeds: usize) -> &mut Self {
        self.seeds = seeds;
        self
    }

    pub fn build(&self) -> Result<SimConfig, CliError> {
        let priority = match self.scheme {
            SchemeKind::Uniform => PriorityScheme::Uniform,
            SchemeKind::Modular => PriorityScheme::Modular {
                modulus: self.modulus,
                offset: self.offset,
                decay: self.decay,
            },
            SchemeKind::Listed => PriorityScheme::Listed {
                priorities: self.priorities.clone(),
                decay: self.decay,
            },
        };
        let config = SimConfig {
            timesteps: self.timesteps,
            capacity: self.capacity,
            replay_start: self.replay_start,
            batch: self.batch,
            sampler: self.sampler,
            priority,
            seeds: self.seeds,
            base_seed: self.base_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Canonical text form of a resolved config; every field appears exactly once
/// in a fixed order, so equal configs serialize identically.
pub fn canonical(config: &SimConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("timesteps", config.timesteps.to_string());
    kv("capacity", config.capacity.to_string());
    kv("replay_start", config.replay_start.to_string());
    kv("batch", config.batch.to_string());
    kv("sampler", config.sampler.to_string());
    match &config.priority {
        PriorityScheme::Uniform => kv("priority", "uniform".into()),
        PriorityScheme::Modular {
            modulus,
            offset,
            decay,
        } => {
            kv("priority", "modular".into());
            kv("modulus", modulus.to_string());
            kv("offset", format!("{offset:?}"));
            kv("decay", format!("{decay:?}"));
        }
        PriorityScheme::Listed { priorities, decay } => {
            kv("priority", "listed".into());
            let list: Vec<String> = priorities.iter().map(|p| format!("{p:?}")).collect();
            kv("priorities", list.join(","));
            kv("decay", format!("{decay:?}"));
        }
    }
    kv("seeds", config.seeds.to_string());
    kv("base_seed", config.base_seed.to_string());
    s
}

/// SHA-256 of the canonical form, hex encoded.
pub fn digest(config: &SimConfig) -> String {
    hex::encode(Sha256::digest(canonical(config).as_bytes()))
}
