//! Summary tables over one or more run directories.

use std::collections::BTreeMap;
use std::path::Path;

use arena_core::agents::AgentKind;
use arena_core::engine::Participation;
use arena_core::rewards::jain_index;
use serde::{Deserialize, Serialize};

use crate::run::{MetricsRow, METRICS_FILE};
use crate::HarnessError;

pub const DEFAULT_SMOOTHING: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// `(episode, value)` in increasing episode order.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<String>,
    pub smoothing: usize,
    /// Mean cumulated payoff per episode, one series per agent kind.
    pub payoff_performance: Vec<Series>,
    /// Jain index of broker payments per episode, averaged over runs.
    pub fairness_performance: Vec<Series>,
    /// Trailing moving average of the per-episode mean intrinsic reward.
    pub intrinsic_reward: Vec<Series>,
    pub forward_loss: Vec<Series>,
}

impl Summary {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("summary serializes");
        std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }

    pub fn payoff_series(&self, kind: AgentKind) -> Option<&Series> {
        self.payoff_performance.iter().find(|s| s.label == kind.label())
    }
}

/// Reads `metrics.jsonl` from every directory and aggregates the rows.
pub fn aggregate(dirs: &[&Path], smoothing: usize) -> Result<Summary, HarnessError> {
    if dirs.is_empty() {
        return Err(HarnessError::EmptyRun("no run directories given".into()));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let path = dir.join(METRICS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let before = rows.len();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let row: MetricsRow = serde_json::from_str(l)
                .map_err(|e| HarnessError::Parse { path: path.clone(), line: i + 1, message: e.to_string() })?;
            if !row.payoff.is_finite() || !row.reserve.is_finite() || !row.price.is_finite() {
                return Err(HarnessError::Parse { path: path.clone(), line: i + 1, message: "non-finite value".into() });
            }
            rows.push((row, format!("{}:{}", path.display(), i + 1)));
        }
        if rows.len() == before {
            return Err(HarnessError::EmptyRun(format!("{} has no rows", path.display())));
        }
    }
    aggregate_rows(rows, smoothing)
}

/// Aggregates rows tagged with their source location (used in error
/// messages). The result does not depend on row order.
pub fn aggregate_rows(mut rows: Vec<(MetricsRow, String)>, smoothing: usize) -> Result<Summary, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyRun("no metrics rows".into()));
    }
    let key = |r: &MetricsRow| (r.run_id.clone(), r.episode, r.bidder_id, r.step);
    rows.sort_by(|a, b| key(&a.0).cmp(&key(&b.0)));
    for w in rows.windows(2) {
        if key(&w[0].0) == key(&w[1].0) {
            return Err(HarnessError::Rows(format!("duplicate row at {} and {}", w[0].1, w[1].1)));
        }
    }

    // (run, episode, bidder) → rows over steps
    let mut runs: BTreeMap<String, BTreeMap<usize, BTreeMap<usize, Vec<&MetricsRow>>>> = BTreeMap::new();
    for (r, _) in &rows {
        runs.entry(r.run_id.clone()).or_default().entry(r.episode).or_default().entry(r.bidder_id).or_default().push(r);
    }

    let mut roster: BTreeMap<&str, BTreeMap<usize, AgentKind>> = BTreeMap::new();
    let mut steps: BTreeMap<&str, usize> = BTreeMap::new();
    for (r, at) in &rows {
        let kinds = roster.entry(r.run_id.as_str()).or_default();
        if let Some(k) = kinds.insert(r.bidder_id, r.agent_kind) {
            if k != r.agent_kind {
                return Err(HarnessError::Rows(format!("{at}: bidder {} changes kind from {k} to {}", r.bidder_id, r.agent_kind)));
            }
        }
        let s = steps.entry(r.run_id.as_str()).or_default();
        *s = (*s).max(r.step + 1);
    }
    for (run, episodes) in &runs {
        let bidders = &roster[run.as_str()];
        for (episode, by_bidder) in episodes {
            for b in bidders.keys() {
                let Some(seq) = by_bidder.get(b) else {
                    return Err(HarnessError::Rows(format!("run {run} episode {episode}: no rows for bidder {b}")));
                };
                for (expected, r) in seq.iter().enumerate() {
                    if r.step != expected {
                        return Err(HarnessError::Rows(format!(
                            "run {run} episode {episode} bidder {b}: missing step {expected}"
                        )));
                    }
                }
                if seq.len() != steps[run.as_str()] {
                    return Err(HarnessError::Rows(format!(
                        "run {run} episode {episode} bidder {b}: missing step {}",
                        seq.len()
                    )));
                }
            }
        }
    }

    let kinds: Vec<AgentKind> = {
        let mut k: Vec<_> = roster.values().flat_map(|m| m.values().copied()).collect();
        k.sort();
        k.dedup();
        k
    };

    // episode → kind → (sum, count) over runs and bidders
    let mut payoff: BTreeMap<AgentKind, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut intrinsic: BTreeMap<AgentKind, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut forward: BTreeMap<AgentKind, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut fairness: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let add = |m: &mut BTreeMap<usize, (f64, usize)>, e: usize, v: f64| {
        let slot = m.entry(e).or_insert((0.0, 0));
        slot.0 += v;
        slot.1 += 1;
    };
    for (run, episodes) in &runs {
        for (&episode, by_bidder) in episodes {
            let mut payments = Vec::with_capacity(by_bidder.len());
            for (b, seq) in by_bidder {
                let kind = roster[run.as_str()][b];
                let cumulated: f64 = seq.iter().map(|r| r.payoff).sum();
                add(payoff.entry(kind).or_default(), episode, cumulated);
                payments.push(seq.iter().filter(|r| r.participation == Participation::Won).map(|r| r.price).sum::<f64>());
                for r in seq {
                    if let Some(v) = r.intrinsic_reward {
                        add(intrinsic.entry(kind).or_default(), episode, v);
                    }
                    if let Some(v) = r.forward_loss {
                        add(forward.entry(kind).or_default(), episode, v);
                    }
                }
            }
            if let Ok(j) = jain_index(&payments) {
                add(&mut fairness, episode, j);
            }
        }
    }

    let mean = |m: &BTreeMap<usize, (f64, usize)>| -> Vec<(usize, f64)> {
        m.iter().map(|(e, (s, c))| (*e, s / *c as f64)).collect()
    };
    let per_kind = |m: &BTreeMap<AgentKind, BTreeMap<usize, (f64, usize)>>, smooth: bool| -> Vec<Series> {
        kinds
            .iter()
            .filter_map(|k| m.get(k).map(|s| (k, s)))
            .map(|(k, s)| {
                let points = mean(s);
                Series { label: k.label().to_string(), points: if smooth { moving_average(&points, smoothing) } else { points } }
            })
            .collect()
    };

    Ok(Summary {
        runs: runs.keys().cloned().collect(),
        smoothing,
        payoff_performance: per_kind(&payoff, false),
        fairness_performance: vec![Series { label: "J-index".into(), points: mean(&fairness) }],
        intrinsic_reward: per_kind(&intrinsic, true),
        forward_loss: per_kind(&forward, true),
    })
}

/// Trailing mean over the last `window` points (fewer at the start).
pub fn moving_average(points: &[(usize, f64)], window: usize) -> Vec<(usize, f64)> {
    let w = window.max(1);
    (0..points.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let slice = &points[lo..=i];
            (points[i].0, slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64)
        })
        .collect()
}
