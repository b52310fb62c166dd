//! Scenario descriptions, named presets and TOML scenario files.

use std::path::Path;

use arena_core::agents::{AgentConfig, AgentKind};
use arena_core::engine::{AuctionConfig, GameKind};
use arena_core::rewards::SignalKind;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const DEFAULT_EPISODES: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub game_kind: GameKind,
    pub roster: Vec<AgentKind>,
    pub extrinsic_signal: SignalKind,
    pub episodes: usize,
    pub seed: u64,
    /// Overrides on top of the default auction; `game_kind` here is ignored in
    /// favour of the scenario-level field.
    pub auction: AuctionConfig<f64>,
    /// Hyperparameters shared by every agent in the roster.
    pub agent: AgentConfig<f64>,
}

impl Scenario {
    pub fn new(name: &str, game_kind: GameKind, roster: Vec<AgentKind>, signal: SignalKind) -> Self {
        Self {
            name: name.to_string(),
            game_kind,
            roster,
            extrinsic_signal: signal,
            episodes: DEFAULT_EPISODES,
            seed: 0,
            auction: AuctionConfig::default(),
            agent: AgentConfig::default(),
        }
    }

    /// The auction actually played: the override table with the scenario's
    /// game kind.
    pub fn auction_config(&self) -> AuctionConfig<f64> {
        AuctionConfig { game_kind: self.game_kind, ..self.auction.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = self.auction_config();
        cfg.validate().map_err(|e| HarnessError::Scenario(format!("auction: {e}")))?;
        if self.roster.len() != cfg.num_bidders {
            return Err(HarnessError::Scenario(format!(
                "roster has {} agents but the auction has {} bidders",
                self.roster.len(),
                cfg.num_bidders
            )));
        }
        if self.episodes == 0 {
            return Err(HarnessError::Scenario("episodes must be at least 1".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(HarnessError::Scenario(format!("invalid scenario name `{}`", self.name)));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.name, self.seed)
    }

    /// Loads a scenario from a TOML file. A `preset` key selects the base; the
    /// remaining keys (including partial `[auction]` / `[agent]` tables)
    /// override it.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e| HarnessError::Scenario(format!("{e}")))?;
        let base = match table.remove("preset") {
            Some(toml::Value::String(p)) => preset(&p)?,
            Some(other) => return Err(HarnessError::Scenario(format!("`preset` must be a string, got {other}"))),
            None => Scenario::new("custom", GameKind::FpReverse, vec![AgentKind::Sht; 6], SignalKind::Payoff),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        merge(&mut merged, table);
        let scenario: Scenario =
            toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| HarnessError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| HarnessError::Scenario(format!("{}: {e}", path.display())))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Names of all built-in presets.
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["smoke".to_string()];
    for game in ["fp", "sp"] {
        for roster in ["hetero", "sht", "cur", "dra"] {
            for signal in ["payoff", "fairness"] {
                names.push(format!("{game}-{roster}-{signal}"));
            }
        }
    }
    names
}

/// Resolves a named preset: `{fp,sp}-{hetero,sht,cur,dra}-{payoff,fairness}`
/// or `smoke` (FP, heterogeneous, payoff signal, 10 episodes).
pub fn preset(name: &str) -> Result<Scenario, HarnessError> {
    if name == "smoke" {
        let mut s = preset("fp-hetero-payoff")?;
        s.name = "smoke".into();
        s.episodes = 10;
        return Ok(s);
    }
    let unknown = || HarnessError::UnknownPreset(name.to_string());
    let parts: Vec<&str> = name.split('-').collect();
    let [game, roster, signal] = parts[..] else {
        return Err(unknown());
    };
    let game_kind = match game {
        "fp" => GameKind::FpReverse,
        "sp" => GameKind::SpForward,
        _ => return Err(unknown()),
    };
    use AgentKind::*;
    let roster = match roster {
        "hetero" => vec![Sht, Sht, Cur, Cur, Dra, Dra],
        "sht" => vec![Sht; 6],
        "cur" => vec![Cur; 6],
        "dra" => vec![Dra; 6],
        _ => return Err(unknown()),
    };
    let signal = match signal {
        "payoff" => SignalKind::Payoff,
        "fairness" => SignalKind::Fairness,
        _ => return Err(unknown()),
    };
    Ok(Scenario::new(name, game_kind, roster, signal))
}

/// A preset name, a `.toml` scenario file, or a run manifest (`.json`).
pub fn resolve(spec: &str) -> Result<Scenario, HarnessError> {
    let path = Path::new(spec);
    if path.is_file() {
        return match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(crate::run::Manifest::read(path)?.scenario),
            _ => Scenario::from_file(path),
        };
    }
    preset(spec)
}
