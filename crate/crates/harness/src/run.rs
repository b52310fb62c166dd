//! Scenario execution: seeding, metrics streaming, manifests and checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use arena_core::agents::{AgentKind, FspAgent};
use arena_core::engine::{run_episode, Agent, EpisodeLog, Participation};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::HarnessError;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Stream 0 drives the engine, stream `i + 1` seeds bidder `i`.
///
/// Each stream is the first word of ChaCha8 keyed by the master seed with
/// the stream id selecting the ChaCha stream, so streams never share
/// keystream and adding bidders leaves existing streams untouched.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn engine_seed(master: u64) -> u64 {
    stream_seed(master, 0)
}

pub fn agent_seed(master: u64, bidder: usize) -> u64 {
    stream_seed(master, bidder as u64 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub episode: usize,
    pub step: usize,
    pub bidder_id: usize,
    pub agent_kind: AgentKind,
    pub payoff: f64,
    pub reserve: f64,
    pub intrinsic_reward: Option<f64>,
    pub forward_loss: Option<f64>,
    pub inverse_loss: Option<f64>,
    pub epsilon_last: Option<f64>,
    pub price: f64,
    pub participation: Participation,
}

/// Per-episode digest written next to the step metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub signals: Vec<f64>,
    pub cumulated_payoff: Vec<f64>,
    pub payments: Vec<f64>,
    pub j_index: Option<f64>,
}

impl EpisodeRecord {
    fn from_log(episode: usize, log: &EpisodeLog<f64>) -> Self {
        let ledger = log.ledger();
        let payments = ledger.payment_totals();
        let mut cumulated = vec![0.0; log.num_bidders];
        for r in &log.rows {
            cumulated[r.bidder_id] += r.payoff;
        }
        Self {
            episode,
            signals: log.signals.clone(),
            cumulated_payoff: cumulated,
            j_index: arena_core::rewards::jain_index(&payments).ok(),
            payments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub engine: u64,
    pub agents: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub run_id: String,
    pub scenario: Scenario,
    pub seeds: SeedStreams,
    pub core_version: String,
    pub harness_version: String,
    pub scalar: String,
}

impl Manifest {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            version: MANIFEST_VERSION,
            run_id: scenario.run_id(),
            scenario: scenario.clone(),
            seeds: SeedStreams {
                engine: engine_seed(scenario.seed),
                agents: (0..scenario.roster.len()).map(|i| agent_seed(scenario.seed, i)).collect(),
            },
            core_version: arena_core::VERSION.to_string(),
            harness_version: env!("CARGO_PKG_VERSION").to_string(),
            scalar: "f64".into(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })?;
        if m.version != MANIFEST_VERSION {
            return Err(HarnessError::Scenario(format!("{}: unsupported manifest version {}", path.display(), m.version)));
        }
        m.scenario.validate()?;
        Ok(m)
    }
}

/// What a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub episodes: Vec<EpisodeRecord>,
}

/// Runs the scenario into `out_dir`, streaming one [`MetricsRow`] per
/// `(episode, step, bidder)`. Agents keep learning across episodes. Final
/// agent checkpoints go to `checkpoints/bidder_<i>.json`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput, HarnessError> {
    run_scenario_with(scenario, out_dir, |_, _, _| {})
}

/// Like [`run_scenario`], calling `on_episode` after each episode.
pub fn run_scenario_with(
    scenario: &Scenario,
    out_dir: &Path,
    mut on_episode: impl FnMut(&EpisodeRecord, &EpisodeLog<f64>, &[Box<FspAgent<f64>>]),
) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let manifest = Manifest::new(scenario);
    let cfg = scenario.auction_config();
    let mut agents = scenario
        .roster
        .iter()
        .zip(&manifest.seeds.agents)
        .map(|(kind, seed)| FspAgent::new(*kind, scenario.agent.clone(), &cfg, *seed).map(Box::new))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Scenario(format!("agent config: {e}")))?;

    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| HarnessError::io(&manifest_path, e))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let episodes_path = out_dir.join(EPISODES_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(|e| HarnessError::io(&metrics_path, e))?);
    let mut digest = BufWriter::new(File::create(&episodes_path).map_err(|e| HarnessError::io(&episodes_path, e))?);

    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seeds.engine);
    let mut records = Vec::with_capacity(scenario.episodes);
    for episode in 0..scenario.episodes {
        let mut io_error = None;
        let log = run_episode(&mut agents, &cfg, scenario.extrinsic_signal, &mut rng, |rows, agents| {
            for r in rows {
                let d = agents[r.bidder_id].diagnostics();
                let row = MetricsRow {
                    run_id: manifest.run_id.clone(),
                    episode,
                    step: r.step,
                    bidder_id: r.bidder_id,
                    agent_kind: scenario.roster[r.bidder_id],
                    payoff: r.payoff,
                    reserve: r.reserve_after,
                    intrinsic_reward: d.intrinsic_reward,
                    forward_loss: d.forward_loss,
                    inverse_loss: d.inverse_loss,
                    epsilon_last: d.epsilon_last,
                    price: r.price,
                    participation: r.participation,
                };
                let line = serde_json::to_string(&row).expect("row serializes");
                if io_error.is_none() {
                    io_error = writeln!(metrics, "{line}").err();
                }
            }
        })
        .map_err(|e| HarnessError::Episode { episode, message: e.to_string() })?;
        if let Some(e) = io_error {
            return Err(HarnessError::io(&metrics_path, e));
        }
        let record = EpisodeRecord::from_log(episode, &log);
        let json = serde_json::to_string(&record).expect("record serializes");
        writeln!(digest, "{json}").map_err(|e| HarnessError::io(&episodes_path, e))?;
        on_episode(&record, &log, &agents);
        records.push(record);
    }
    metrics.flush().map_err(|e| HarnessError::io(&metrics_path, e))?;
    digest.flush().map_err(|e| HarnessError::io(&episodes_path, e))?;

    let ck_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| HarnessError::io(&ck_dir, e))?;
    for (i, a) in agents.iter().enumerate() {
        let path = ck_dir.join(format!("bidder_{i}.json"));
        let json = serde_json::to_string(&a.checkpoint()).expect("checkpoint serializes");
        std::fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(RunOutput { dir: out_dir.to_path_buf(), manifest, episodes: records })
}

/// Reads the per-episode digests of a finished run.
pub fn read_episodes(dir: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let path = dir.join(EPISODES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse { path: path.clone(), line: i + 1, message: e.to_string() })
        })
        .collect()
}
