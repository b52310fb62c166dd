//! Runs the game-theory checks over a directory of JSON instance files.
//!
//! Each file holds one object tagged by `kind`:
//! `potential` (explicit and/or random allocation games), `spa` (second-price
//! best response against a piecewise-linear opponent) or `pareto`
//! (fairness-constrained welfare optimum).

use std::fmt::Write as _;
use std::path::Path;

use arena_core::game_theory::{
    best_response_curve, check_piecewise_linear_form, solve_lambda_star, verify_exact_potential, verify_welfare_optimality,
    ParetoInstance, PotentialGameInstance, SpaInstance,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::run::stream_seed;
use crate::HarnessError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceFile {
    Potential {
        #[serde(default)]
        instances: Vec<PotentialGameInstance<f64>>,
        #[serde(default)]
        random: Option<RandomPotential>,
        tolerance: f64,
    },
    Spa {
        instance: SpaInstance<f64>,
        valuation_points: usize,
        bid_points: usize,
        bid_max: f64,
        /// Residual and anchor tolerance in bid-grid cells.
        tolerance_cells: f64,
    },
    Pareto {
        instance: ParetoInstance<f64>,
        grid: usize,
        rel_slack: f64,
        round_trip_tol: f64,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RandomPotential {
    pub count: usize,
    pub players: usize,
    pub commodities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub file: String,
    pub check: String,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub lines: Vec<CheckLine>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| !l.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let num = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(
                out,
                "{} {:<24} {:<28} value {:>10} threshold {:>10} {}",
                if l.pass { "PASS" } else { "FAIL" },
                l.file,
                l.check,
                num(l.value),
                num(l.threshold),
                l.detail
            );
        }
        let _ = writeln!(
            out,
            "{} checks, {} failed (seed {}, trials {})",
            self.lines.len(),
            self.failures().count(),
            self.seed,
            self.trials
        );
        out
    }
}

/// Checks every `*.json` file in `dir` in file-name order. `trials` is the
/// number of unilateral deviations per potential-game instance; file `k`
/// draws from rng stream `k` of `seed`.
pub fn verify_appendix(dir: &Path, trials: usize, seed: u64) -> Result<VerifyReport, HarnessError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Scenario(format!("no instance files in {}", dir.display())));
    }
    let mut lines = Vec::new();
    for (k, path) in files.iter().enumerate() {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let parsed = std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<InstanceFile>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(file) => lines.extend(check_file(&name, &file, trials, stream_seed(seed, k as u64))),
            Err(e) => lines.push(CheckLine {
                file: name,
                check: "parse".into(),
                value: None,
                threshold: None,
                pass: false,
                detail: e,
            }),
        }
    }
    Ok(VerifyReport { seed, trials, lines })
}

fn line(file: &str, check: &str, value: Option<f64>, threshold: Option<f64>, pass: bool, detail: String) -> CheckLine {
    CheckLine { file: file.to_string(), check: check.to_string(), value, threshold, pass, detail }
}

fn failed(file: &str, check: &str, detail: impl ToString) -> CheckLine {
    line(file, check, None, None, false, detail.to_string())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn check_file(name: &str, file: &InstanceFile, trials: usize, seed: u64) -> Vec<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match file {
        InstanceFile::Potential { instances, random, tolerance } => {
            let mut all = instances.clone();
            if let Some(r) = random {
                all.extend((0..r.count).map(|_| PotentialGameInstance::random(r.players, r.commodities, &mut rng)));
            }
            if all.is_empty() {
                return vec![failed(name, "exact potential", "file holds no instances")];
            }
            let mut worst = 0.0f64;
            for (i, inst) in all.iter().enumerate() {
                match verify_exact_potential(inst, trials, &mut rng) {
                    Ok(d) => worst = worst.max(d),
                    Err(e) => return vec![failed(name, "exact potential", format!("instance {i}: {e}"))],
                }
            }
            let detail = format!("max |Δu − Δφ| over {} instances × {trials} deviations", all.len());
            vec![line(name, "exact potential", Some(worst), Some(*tolerance), worst <= *tolerance, detail)]
        }
        InstanceFile::Spa { instance, valuation_points, bid_points, bid_max, tolerance_cells } => {
            let values = linspace(instance.low[1], instance.high[1], *valuation_points);
            let bids = linspace(0.0, *bid_max, *bid_points);
            let cell = if bids.len() > 1 { bids[1] - bids[0] } else { *bid_max };
            let tol = tolerance_cells * cell;
            let curve = match best_response_curve(instance, &values, &bids) {
                Ok(c) => c,
                Err(e) => return vec![failed(name, "best response", e)],
            };
            let r = check_piecewise_linear_form(&curve, instance.anchors[0], instance.anchors[1], tol);
            let anchor = r.anchor_errors.iter().flatten().fold(None, |m: Option<f64>, e| Some(m.map_or(*e, |m| m.max(*e))));
            let line_detail = match r.line {
                Some((j, d)) => format!("middle branch b = {j:.4}·v + {d:.4}, θ1 = {:.4}, θ2 = {:.4}", r.theta1, r.theta2),
                None => format!("no middle branch, θ1 = {:.4}, θ2 = {:.4}", r.theta1, r.theta2),
            };
            vec![
                line(name, "three-branch order", None, None, r.branches_ordered, line_detail),
                line(
                    name,
                    "middle-branch residual",
                    r.max_residual,
                    Some(tol),
                    r.max_residual.is_none_or(|m| m <= tol),
                    format!("{tolerance_cells} bid-grid cells"),
                ),
                line(
                    name,
                    "anchor error",
                    anchor,
                    Some(tol),
                    anchor.is_none_or(|a| a <= tol),
                    "|j2·θ + d2 − anchor| at observed switches".into(),
                ),
            ]
        }
        InstanceFile::Pareto { instance, grid, rel_slack, round_trip_tol } => {
            let gamma = instance.gamma;
            let report = match verify_welfare_optimality(instance, gamma, *grid) {
                Ok(r) => r,
                Err(e) => return vec![failed(name, "welfare optimality", e)],
            };
            let gap = report.best_rival_welfare.map(|w| (w - report.a_star_welfare) / report.scale);
            let mut out = vec![
                line(
                    name,
                    "welfare optimality",
                    gap,
                    Some(*rel_slack),
                    report.passes(*rel_slack),
                    format!(
                        "(best rival − A*) / scale over {} feasible rivals on a {grid}×{grid} grid",
                        report.feasible_rivals
                    ),
                ),
                line(
                    name,
                    "NE rule equals A*",
                    None,
                    None,
                    report.ne_matches_a_star,
                    format!("λ* = {:.6}", report.lambda_star),
                ),
            ];
            out.push(match solve_lambda_star(instance, gamma, gamma * 1e-9) {
                Ok(lambda) => match instance.a_star_moments(lambda, gamma).ratio() {
                    Some(ratio) => {
                        let err = (ratio - gamma).abs();
                        line(name, "λ* round trip", Some(err), Some(*round_trip_tol), err <= *round_trip_tol, format!("γ = {gamma}"))
                    }
                    None => failed(name, "λ* round trip", "A* never selects one bidder"),
                },
                Err(e) => failed(name, "λ* round trip", e),
            });
            out
        }
    }
}
