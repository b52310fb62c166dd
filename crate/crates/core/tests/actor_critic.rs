use arena_core::actor_critic::{ActorCritic, ActorCriticConfig, TrunkInput};
use arena_core::gaussian::{gaussian_log_density, grad_log_density, sample_action, GaussianPolicyHead, GradientForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Log density of a bivariate normal written directly in terms of an
/// arbitrary (not necessarily symmetric) 2×2 matrix `s` standing in for Σ.
fn log_density_from_sigma(x: [f64; 2], mu: [f64; 2], s: [f64; 4]) -> f64 {
    let det = s[0] * s[3] - s[1] * s[2];
    let inv = [s[3] / det, -s[1] / det, -s[2] / det, s[0] / det];
    let r = [x[0] - mu[0], x[1] - mu[1]];
    let q = r[0] * (inv[0] * r[0] + inv[1] * r[1]) + r[1] * (inv[2] * r[0] + inv[3] * r[1]);
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for _ in 0..100 {
        let mu = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let l = [rng.random_range(0.3..1.5), 0.0, rng.random_range(-0.8..0.8), rng.random_range(0.3..1.5)];
        let x = [mu[0] + rng.random_range(-2.0..2.0), mu[1] + rng.random_range(-2.0..2.0)];
        let head = GaussianPolicyHead::new(mu.to_vec(), l.to_vec()).unwrap();
        let sigma = head.covariance();
        let s = [sigma[0], sigma[1], sigma[2], sigma[3]];
        let (d_mu, d_sigma) = grad_log_density(&x, &head, GradientForm::Exact).unwrap();

        let fd_mu: Vec<f64> = (0..2)
            .map(|i| {
                let (mut p, mut m) = (mu, mu);
                p[i] += h;
                m[i] -= h;
                (log_density_from_sigma(x, p, s) - log_density_from_sigma(x, m, s)) / (2.0 * h)
            })
            .collect();
        let fd_sigma: Vec<f64> = (0..4)
            .map(|i| {
                let (mut p, mut m) = (s, s);
                p[i] += h;
                m[i] -= h;
                (log_density_from_sigma(x, mu, p) - log_density_from_sigma(x, mu, m)) / (2.0 * h)
            })
            .collect();
        assert!(rel_err(&d_mu, &fd_mu) < 1e-4, "mu {d_mu:?} vs {fd_mu:?}");
        assert!(rel_err(&d_sigma, &fd_sigma) < 1e-4, "sigma {d_sigma:?} vs {fd_sigma:?}");
        let direct = log_density_from_sigma(x, mu, s);
        assert!((gaussian_log_density(&x, &head).unwrap() - direct).abs() < 1e-10);
    }
}

#[test]
fn sample_moments() {
    let head = GaussianPolicyHead::new(vec![0.5, -1.0], vec![0.8, 0.0, 0.3, 0.4]).unwrap();
    let sigma = head.covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let samples: Vec<Vec<f64>> = (0..n).map(|_| sample_action(&head, &mut rng)).collect();
    let mean: Vec<f64> = (0..2).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    for i in 0..2 {
        let sd = sigma[i * 2 + i].sqrt();
        assert!((mean[i] - head.mean[i]).abs() < 4.0 * sd / (n as f64).sqrt());
    }
    for i in 0..2 {
        for j in 0..2 {
            let c = samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
            let want = sigma[i * 2 + j];
            assert!((c - want).abs() / want.abs() < 0.05, "cov[{i}{j}] {c} vs {want}");
        }
    }
}

/// Two states visited alternately, reward 1 in `A` and 0 in `B`. The average
/// reward is 1/2 and the differential values satisfy `v(A) - v(B) = 1/2`.
pub fn run_chain(seed: u64, updates: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ActorCriticConfig { critic_lr: 1e-2, ..ActorCriticConfig::default() };
    let mut ac = ActorCritic::new(TrunkInput::Features { dim: 2 }, 2, cfg, &mut rng).unwrap();
    let states = [[1.0, 0.0], [0.0, 1.0]];
    let rewards = [1.0, 0.0];
    let mut action = ac.sample(&states[0], &mut rng).unwrap();
    for k in 0..updates {
        let (now, next) = (k % 2, (k + 1) % 2);
        let step = ac.update(&states[now], &states[next], &action, rewards[now], &mut rng).unwrap();
        action = step.next_action;
    }
    let gap = ac.critic_value(&states[0]).unwrap() - ac.critic_value(&states[1]).unwrap();
    (ac.avg_reward, gap)
}

#[test]
fn average_reward_chain() {
    let (avg, gap) = run_chain(0, 10_000);
    assert!((avg - 0.5).abs() < 1e-2, "ū = {avg}");
    assert!((gap - 0.5).abs() < 5e-2, "v(A) - v(B) = {gap}");
}
