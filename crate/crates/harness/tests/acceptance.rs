//! One pass/fail line per acceptance criterion.
//!
//! Criteria 11 and 12 train full six-agent populations for 300 episodes per
//! run and dominate the runtime. `ARENA_ACCEPTANCE_EPISODES` shortens them
//! for local iteration; the printed line states the episode count used.

use std::io::Write;
use std::time::{Duration, Instant};

use arena_core::actor_critic::{ActorCritic, ActorCriticConfig, TrunkInput};
use arena_core::agents::AgentKind;
use arena_core::credit::{CreditBatch, CreditConfig, CreditModel};
use arena_core::curiosity::intrinsic_reward;
use arena_core::engine::{run_round, AuctionConfig, BidAction, BidderAccount, EpisodeLog, GameKind, Participation};
use arena_core::game_theory::{
    best_response_curve, check_piecewise_linear_form, solve_lambda_star, verify_exact_potential, verify_welfare_optimality,
    ParetoInstance, PotentialGameInstance, SpaInstance,
};
use arena_core::gaussian::{grad_log_density, sample_action, GaussianPolicyHead, GradientForm};
use arena_core::rewards::jain_index;
use arena_harness::run::{run_scenario_with, METRICS_FILE};
use arena_harness::{preset, run_scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    /// Training-curve orderings; reported, but a miss does not fail the test.
    qualitative: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn criterion(id: usize, name: &'static str, limit_s: u64, qualitative: bool, f: impl FnOnce() -> Outcome) -> Line {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(limit_s);
    let line = Line { id, name, pass: out.pass && elapsed <= limit, qualitative, detail: out.detail, elapsed, limit };
    report(format_args!(
        "[{}] {:>2}. {:<34} {:>8.1}s / {:>5}s  {}",
        if line.pass { "PASS" } else { "FAIL" },
        line.id,
        line.name,
        line.elapsed.as_secs_f64(),
        line.limit.as_secs(),
        line.detail
    ));
    line
}

// Straight to the stdout handle so the lines survive libtest's capture.
fn report(args: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{args}");
    let _ = out.flush();
}

// ---------------------------------------------------------------------------

fn c1_exact_potential() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let inst = PotentialGameInstance::<f64>::random(5, 4, &mut rng);
        worst = worst.max(verify_exact_potential(&inst, 200, &mut rng).unwrap());
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |Δu − Δφ| = {worst:.2e} (≤ 1e-9)") }
}

fn c2_jain() -> Outcome {
    let mut ok = true;
    for n in 1..=12 {
        ok &= jain_index(&vec![3.7; n]).unwrap() == 1.0;
        let mut one_hot = vec![0.0; n];
        one_hot[n / 2] = 2.5;
        ok &= jain_index(&one_hot).unwrap() == 1.0 / n as f64;
    }
    let exact = ok;
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let j = jain_index(&v).unwrap();
        ok &= j >= 1.0 / n as f64 - 1e-12 && j <= 1.0 + 1e-12;
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        worst_scale = worst_scale.max((jain_index(&scaled).unwrap() - j).abs());
    }
    ok &= worst_scale <= 1e-12;
    Outcome { pass: ok, detail: format!("equal/one-hot exact: {exact}, max scale drift {worst_scale:.1e}") }
}

/// Bivariate normal log density from an arbitrary 2×2 matrix standing in for Σ.
fn log_density_from_sigma(x: [f64; 2], mu: [f64; 2], s: [f64; 4]) -> f64 {
    let det = s[0] * s[3] - s[1] * s[2];
    let inv = [s[3] / det, -s[1] / det, -s[2] / det, s[0] / det];
    let r = [x[0] - mu[0], x[1] - mu[1]];
    let q = r[0] * (inv[0] * r[0] + inv[1] * r[1]) + r[1] * (inv[2] * r[0] + inv[3] * r[1]);
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12)
}

fn c3_policy_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mu = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let l = [rng.random_range(0.3..1.5), 0.0, rng.random_range(-0.8..0.8), rng.random_range(0.3..1.5)];
        let x = [mu[0] + rng.random_range(-2.0..2.0), mu[1] + rng.random_range(-2.0..2.0)];
        let head = GaussianPolicyHead::new(mu.to_vec(), l.to_vec()).unwrap();
        let sg = head.covariance();
        let s = [sg[0], sg[1], sg[2], sg[3]];
        let (d_mu, d_sigma) = grad_log_density(&x, &head, GradientForm::Exact).unwrap();
        let fd = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        let fd_mu: Vec<f64> = (0..2)
            .map(|i| {
                fd(&|e| {
                    let mut m = mu;
                    m[i] += e;
                    log_density_from_sigma(x, m, s)
                })
            })
            .collect();
        let fd_sigma: Vec<f64> = (0..4)
            .map(|i| {
                fd(&|e| {
                    let mut p = s;
                    p[i] += e;
                    log_density_from_sigma(x, mu, p)
                })
            })
            .collect();
        worst = worst.max(rel_err(&d_mu, &fd_mu)).max(rel_err(&d_sigma, &fd_sigma));
    }
    Outcome { pass: worst <= 1e-4, detail: format!("max relative error {worst:.2e} over 100 points (≤ 1e-4)") }
}

fn c4_cholesky_sampling() -> Outcome {
    let head = GaussianPolicyHead::new(vec![0.5, -1.0], vec![0.8, 0.0, 0.3, 0.4]).unwrap();
    let sigma = head.covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let n = 100_000;
    let samples: Vec<Vec<f64>> = (0..n).map(|_| sample_action(&head, &mut rng)).collect();
    let mean: Vec<f64> = (0..2).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    let mut ok = true;
    let mut worst_mu = 0.0f64;
    for i in 0..2 {
        let z = (mean[i] - head.mean[i]).abs() / (sigma[i * 3].sqrt() / (n as f64).sqrt());
        worst_mu = worst_mu.max(z);
        ok &= z < 4.0;
    }
    let mut worst_cov = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let c = samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
            worst_cov = worst_cov.max((c - sigma[i * 2 + j]).abs() / sigma[i * 2 + j].abs());
        }
    }
    ok &= worst_cov < 0.05;
    Outcome { pass: ok, detail: format!("mean error {worst_mu:.2}σ/√n (< 4), max cov error {:.2}% (< 5%)", 100.0 * worst_cov) }
}

fn c5_average_reward_td() -> Outcome {
    // states alternate A, B with rewards 1, 0: ū = 1/2, v(A) − v(B) = 1/2
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let cfg = ActorCriticConfig { critic_lr: 1e-2, ..ActorCriticConfig::default() };
    let mut ac = ActorCritic::<f64>::new(TrunkInput::Features { dim: 2 }, 2, cfg, &mut rng).unwrap();
    let states = [[1.0, 0.0], [0.0, 1.0]];
    let mut action = ac.sample(&states[0], &mut rng).unwrap();
    for k in 0..10_000 {
        let (now, next) = (k % 2, (k + 1) % 2);
        action = ac.update(&states[now], &states[next], &action, [1.0, 0.0][now], &mut rng).unwrap().next_action;
    }
    let gap = ac.critic_value(&states[0]).unwrap() - ac.critic_value(&states[1]).unwrap();
    let (ea, eg) = ((ac.avg_reward - 0.5).abs(), (gap - 0.5).abs());
    Outcome { pass: ea <= 1e-2 && eg <= 5e-2, detail: format!("|ū − ½| = {ea:.1e} (≤ 1e-2), |Δv − ½| = {eg:.1e} (≤ 5e-2)") }
}

fn c6_second_price() -> Outcome {
    let cfg = AuctionConfig::<f64> {
        game_kind: GameKind::SpForward,
        joining_cost: 0.0,
        backoff_cost: 0.0,
        sp_duration: 1,
        ..AuctionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let n = cfg.num_bidders;
    let accounts: Vec<BidderAccount<f64>> = (0..n).map(|i| BidderAccount::new(i, 1e6, 0.0)).collect();
    let top = 1.2 * cfg.valuation_high;
    let grid: Vec<f64> = (0..200).map(|k| top * k as f64 / 199.0).collect();

    // one-shot valuation utility of bidding `b` against fixed rival bids
    let mut truthful_ok = 0;
    let trials = 200;
    for _ in 0..trials {
        let v = rng.random_range(cfg.bid_floor..cfg.valuation_high);
        let rivals: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..cfg.valuation_high)).collect();
        let utility = |b: f64, rng: &mut ChaCha8Rng| {
            let mut actions = vec![Some(BidAction { alpha: 1.0, bid: b })];
            actions.extend(rivals.iter().map(|r| Some(BidAction { alpha: 1.0, bid: *r })));
            let out = run_round(&actions, &accounts, 0, &cfg, rng).unwrap();
            if out.winner == Some(0) { v - out.price } else { 0.0 }
        };
        let best = grid.iter().map(|b| utility(*b, &mut rng)).fold(f64::NEG_INFINITY, f64::max);
        truthful_ok += (utility(v, &mut rng) >= best - 1e-12) as usize;
    }

    let mut price_ok = 0;
    let rounds = 10_000;
    for _ in 0..rounds {
        let actions: Vec<Option<BidAction<f64>>> = (0..n)
            .map(|_| {
                rng.random_bool(0.85).then(|| BidAction { alpha: rng.random_range(0.0..1.0), bid: rng.random_range(0.0..12.0) })
            })
            .collect();
        let out = run_round(&actions, &accounts, 0, &cfg, &mut rng).unwrap();
        let bids: Vec<(usize, f64)> = (0..n)
            .filter(|i| matches!(out.participation[*i], Participation::Won | Participation::Lost))
            .map(|i| (i, out.actions[i].unwrap().bid))
            .collect();
        let ok = match out.winner {
            None => bids.is_empty(),
            Some(w) => {
                let wb = out.actions[w].unwrap().bid;
                let second = bids.iter().filter(|e| e.0 != w).map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
                let expected = if second.is_finite() { second } else { cfg.bid_floor };
                bids.iter().all(|e| e.1 <= wb) && out.price == expected && out.payoffs[w] == wb - expected
            }
        };
        price_ok += ok as usize;
    }
    Outcome {
        pass: truthful_ok == trials && price_ok == rounds,
        detail: format!("truthful optimal {truthful_ok}/{trials}, second price paid {price_ok}/{rounds}"),
    }
}

fn c7_intrinsic_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut ok = 0;
    let mut total = 0;
    let mut check = |lf: f64, eps: f64, u: f64, xi: f64| {
        total += 1;
        let want = xi * lf + (1.0 - xi) * eps * u;
        ok += (intrinsic_reward(lf, eps, u, xi) == want) as usize;
    };
    for xi in [0.0, 1.0] {
        for eps in [0.0, 1.0] {
            for (lf, u) in [(0.0, 0.0), (2.5, -1.5), (0.3, 4.0)] {
                check(lf, eps, u, xi);
            }
        }
    }
    for _ in 0..100 {
        check(rng.random_range(0.0..10.0), rng.random_range(0.0..1.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0));
    }
    Outcome { pass: ok == total, detail: format!("{ok}/{total} tuples exact") }
}

fn c8_credit() -> Outcome {
    const WINDOW: usize = 8;
    const PLANTED: usize = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let model = CreditModel::<f64>::new(WINDOW, 4, CreditConfig::default(), &mut rng);
    let mut simplex = 0;
    for _ in 0..10_000 {
        let x: Vec<Vec<f64>> = (0..WINDOW).map(|_| (0..4).map(|_| rng.random_range(-50.0..50.0)).collect()).collect();
        simplex += model.infer_credit(&x).unwrap().is_simplex(1e-6) as usize;
    }

    let sequence = |rng: &mut ChaCha8Rng| -> (Vec<Vec<f64>>, Vec<f64>) {
        let u: Vec<f64> = (0..WINDOW).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = u.iter().map(|p| vec![*p, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        (x, u)
    };
    let masses: Vec<f64> = (0..5u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = CreditModel::new(WINDOW, 4, CreditConfig::default(), &mut rng);
            let batches: Vec<CreditBatch<f64>> = (0..64)
                .map(|_| {
                    let (x, u) = sequence(&mut rng);
                    CreditBatch::new(x, &u, u[PLANTED]).unwrap()
                })
                .collect();
            m.arm();
            m.train_credit(&batches, 200).unwrap();
            (0..50).map(|_| m.infer_credit(&sequence(&mut rng).0).unwrap().0[PLANTED]).sum::<f64>() / 50.0
        })
        .collect();
    let hits = masses.iter().filter(|m| **m >= 0.5).count();
    Outcome {
        pass: simplex == 10_000 && hits >= 4,
        detail: format!(
            "simplex {simplex}/10000, planted mass ≥ 0.5 in {hits}/5 seeds {:?}",
            masses.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    }
}

fn c9_theorem_one() -> Outcome {
    let inst = SpaInstance::linear([0.0, 0.0], [10.0, 10.0], [12.0, 12.0], [0.5, 0.5], [2.0, 8.0]);
    let bids: Vec<f64> = (0..200).map(|k| 12.0 * k as f64 / 199.0).collect();
    let values: Vec<f64> = (0..200).map(|k| 10.0 * k as f64 / 199.0).collect();
    let cell = bids[1] - bids[0];
    let curve = best_response_curve(&inst, &values, &bids).unwrap();
    let r = check_piecewise_linear_form(&curve, 2.0, 8.0, 2.0 * cell);
    let anchors = r.anchor_errors.iter().flatten().fold(0.0f64, |m, e| m.max(*e)) / cell;
    Outcome {
        pass: r.passes() && r.line.is_some() && r.anchor_errors.iter().all(Option::is_some),
        detail: format!(
            "θ1 = {:.3}, θ2 = {:.3}, residual {:.2} cells, anchor error {anchors:.2} cells (≤ 2)",
            r.theta1,
            r.theta2,
            r.max_residual.unwrap_or(f64::NAN) / cell
        ),
    }
}

fn c10_theorem_two() -> Outcome {
    let inst = ParetoInstance::<f64> { j: [1.0, 1.0], d: [0.0, 0.0], g: None, k: None, gamma: 0.8, omega_low: [0.5, 1.0], omega_high: [2.0, 4.0] };
    let report = verify_welfare_optimality(&inst, inst.gamma, 50).unwrap();
    let mut round_trip = 0.0f64;
    for gamma in [0.3, 0.8, 1.0, 2.5] {
        let lambda = solve_lambda_star(&inst, gamma, 1e-9).unwrap();
        round_trip = round_trip.max((inst.a_star_moments(lambda, gamma).ratio().unwrap() - gamma).abs());
    }
    let gap = report.best_rival_welfare.map_or(f64::NEG_INFINITY, |w| (w - report.a_star_welfare) / report.scale);
    Outcome {
        pass: report.passes(1e-6) && report.feasible_rivals > 0 && round_trip <= 1e-3,
        detail: format!(
            "(best rival − A*)/scale = {gap:.1e} over {} rivals (≤ 1e-6), λ* round trip {round_trip:.1e} (≤ 1e-3)",
            report.feasible_rivals
        ),
    }
}

fn episodes() -> usize {
    std::env::var("ARENA_ACCEPTANCE_EPISODES").ok().and_then(|v| v.parse().ok()).unwrap_or(300)
}

/// Mean over the final quarter of the episodes.
fn final_quartile(values: &[f64]) -> f64 {
    let tail = &values[values.len() - values.len().div_ceil(4)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn c11_hetero_payoff_ordering() -> Outcome {
    let n = episodes();
    let dir = tempfile::tempdir().unwrap();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let mut s = preset("fp-hetero-payoff").unwrap();
        s.seed = seed;
        s.episodes = n;
        let run = run_scenario(&s, &dir.path().join(format!("s{seed}"))).unwrap();
        let per_kind = |kind: AgentKind| {
            let series: Vec<f64> = run
                .episodes
                .iter()
                .map(|e| {
                    let own: Vec<f64> = (0..6).filter(|i| s.roster[*i] == kind).map(|i| e.cumulated_payoff[i]).collect();
                    own.iter().sum::<f64>() / own.len() as f64
                })
                .collect();
            final_quartile(&series)
        };
        let (dra, cur, sht) = (per_kind(AgentKind::Dra), per_kind(AgentKind::Cur), per_kind(AgentKind::Sht));
        wins += (dra > cur && cur > sht) as usize;
        rows.push(format!("s{seed}: DRA {dra:.2} CUR {cur:.2} SHT {sht:.2}"));
        std::fs::remove_file(run.dir.join(METRICS_FILE)).ok();
    }
    Outcome { pass: wins >= 4, detail: format!("DRA > CUR > SHT in {wins}/5 seeds, {n} episodes [{}]", rows.join("; ")) }
}

fn c12_fairness_signal() -> Outcome {
    let n = episodes();
    let dir = tempfile::tempdir().unwrap();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let j = |name: &str| {
            let mut s = preset(name).unwrap();
            s.seed = seed;
            s.episodes = n;
            let run = run_scenario(&s, &dir.path().join(format!("{name}-{seed}"))).unwrap();
            std::fs::remove_file(run.dir.join(METRICS_FILE)).ok();
            final_quartile(&run.episodes.iter().map(|e| e.j_index.unwrap()).collect::<Vec<_>>())
        };
        let (fair, pay) = (j("fp-dra-fairness"), j("fp-dra-payoff"));
        wins += (fair > pay) as usize;
        rows.push(format!("s{seed}: {fair:.3} vs {pay:.3}"));
    }
    Outcome {
        pass: wins >= 4,
        detail: format!("fairness-signal J-index higher in {wins}/5 pairs, {n} episodes [{}]", rows.join("; ")),
    }
}

/// Replays each bidder's reserve from the logged flows.
fn conserved(log: &EpisodeLog<f64>, initial: f64) -> bool {
    let mut reserve = vec![initial; log.num_bidders];
    let mut flows = vec![0.0; log.num_bidders];
    for r in &log.rows {
        let i = r.bidder_id;
        let mut next = reserve[i] - r.carrying_cost + r.round_payoff;
        if r.reset_credit > 0.0 {
            if next + r.reset_credit - initial > 1e-9 || r.penalty <= 0.0 {
                return false;
            }
            next = initial;
        }
        if next != r.reserve_after || r.payoff != r.round_payoff - r.carrying_cost - r.penalty {
            return false;
        }
        reserve[i] = next;
        flows[i] += r.payoff + r.penalty + r.reset_credit;
    }
    reserve.iter().zip(&flows).all(|(fin, f)| (initial + f - fin).abs() <= 1e-9 * initial.max(1.0))
}

fn c13_smoke() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let s = preset("smoke").unwrap();
    let mut conserved_eps = 0;
    let first = run_scenario_with(&s, &dir.path().join("a"), |_, log, _| {
        conserved_eps += conserved(log, log.initial_reserve) as usize;
    })
    .unwrap();
    run_scenario(&s, &dir.path().join("b")).unwrap();
    let a = std::fs::read(first.dir.join(METRICS_FILE)).unwrap();
    let b = std::fs::read(dir.path().join("b").join(METRICS_FILE)).unwrap();
    let identical = a == b && !a.is_empty();
    Outcome {
        pass: conserved_eps == s.episodes && identical,
        detail: format!("conservation {conserved_eps}/{} episodes, replay byte-identical: {identical}", s.episodes),
    }
}

#[test]
fn acceptance() {
    report(format_args!(""));
    let lines = vec![
        criterion(1, "exact potential identity", 5, false, c1_exact_potential),
        criterion(2, "Jain index", 1, false, c2_jain),
        criterion(3, "policy-gradient correctness", 5, false, c3_policy_gradient),
        criterion(4, "Cholesky sampling", 10, false, c4_cholesky_sampling),
        criterion(5, "average-reward TD", 30, false, c5_average_reward_td),
        criterion(6, "second-price mechanics", 10, false, c6_second_price),
        criterion(7, "intrinsic reward algebra", 1, false, c7_intrinsic_algebra),
        criterion(8, "credit weights", 120, false, c8_credit),
        criterion(9, "best-response three-branch form", 60, false, c9_theorem_one),
        criterion(10, "fairness-constrained welfare", 60, false, c10_theorem_two),
        criterion(13, "smoke conservation and replay", 60, false, c13_smoke),
        criterion(11, "FP-HETERO payoff ordering", 30 * 60, true, c11_hetero_payoff_ordering),
        criterion(12, "all-DRA fairness vs payoff signal", 60 * 60, true, c12_fairness_signal),
    ];
    let passed = lines.iter().filter(|l| l.pass).count();
    report(format_args!("acceptance: {passed}/{} criteria pass", lines.len()));
    let hard: Vec<usize> = lines.iter().filter(|l| !l.pass && !l.qualitative).map(|l| l.id).collect();
    assert!(hard.is_empty(), "criteria {hard:?} failed");
}
