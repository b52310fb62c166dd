use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GameError;
use crate::scalar::Scalar;

/// Players choose which commodities to take (`α_{i,k} = 1`); skipping costs
/// `q_{i,k}` and the shared load `Σ_j α_j·ω_j / C` costs everyone `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialGameInstance<T> {
    /// `q[i][k]`.
    pub backoff_cost: Vec<Vec<T>>,
    /// `ω[i][k]`.
    pub requirement: Vec<Vec<T>>,
    pub capacity: T,
    pub weight: T,
}

impl<T: Scalar> PotentialGameInstance<T> {
    pub fn players(&self) -> usize {
        self.backoff_cost.len()
    }

    pub fn commodities(&self) -> usize {
        self.backoff_cost.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let k = self.commodities();
        if self.players() == 0 || k == 0 {
            return Err(GameError::Instance("need at least one player and one commodity".into()));
        }
        if self.requirement.len() != self.players() {
            return Err(GameError::Shape(format!(
                "q has {} rows, ω has {}",
                self.players(),
                self.requirement.len()
            )));
        }
        if self.backoff_cost.iter().chain(&self.requirement).any(|r| r.len() != k) {
            return Err(GameError::Shape(format!("every row must have {k} commodities")));
        }
        if !(self.capacity > T::zero()) {
            return Err(GameError::Instance("capacity must be positive".into()));
        }
        Ok(())
    }

    /// Random instance with entries in `[0, 1)`, capacity in `[1, 2·|I|·|K|)`
    /// and weight in `[0, 10)`.
    pub fn random<R: Rng + ?Sized>(players: usize, commodities: usize, rng: &mut R) -> Self {
        let mut m = || (0..players).map(|_| (0..commodities).map(|_| T::lit(rng.random())).collect()).collect();
        let backoff_cost = m();
        let requirement = m();
        let capacity = T::lit(1.0 + rng.random::<f64>() * (2 * players * commodities - 1) as f64);
        let weight = T::lit(10.0 * rng.random::<f64>());
        Self { backoff_cost, requirement, capacity, weight }
    }

    fn check_profile(&self, alpha: &[Vec<bool>]) -> Result<(), GameError> {
        self.validate()?;
        if alpha.len() != self.players() || alpha.iter().any(|r| r.len() != self.commodities()) {
            return Err(GameError::Shape(format!(
                "profile must be {}×{}",
                self.players(),
                self.commodities()
            )));
        }
        Ok(())
    }

    fn load(&self, alpha: &[Vec<bool>]) -> T {
        let used: T = alpha
            .iter()
            .zip(&self.requirement)
            .flat_map(|(a, w)| a.iter().zip(w).filter(|(on, _)| **on).map(|(_, w)| *w))
            .sum();
        self.weight * (T::one() - used / self.capacity)
    }

    fn own_term(&self, i: usize, alpha: &[Vec<bool>]) -> T {
        self.backoff_cost[i].iter().zip(&alpha[i]).filter(|(_, on)| !**on).map(|(q, _)| *q).sum()
    }
}

/// `u_i = Σ_k q_{i,k} − Σ_k α_{i,k} q_{i,k} + W(1 − Σ_j α_j·ω_j / C)`.
pub fn player_utility<T: Scalar>(
    i: usize,
    alpha: &[Vec<bool>],
    inst: &PotentialGameInstance<T>,
) -> Result<T, GameError> {
    inst.check_profile(alpha)?;
    if i >= inst.players() {
        return Err(GameError::Shape(format!("player {i} out of range")));
    }
    Ok(inst.own_term(i, alpha) + inst.load(alpha))
}

/// `φ = Σ_{j,k} q_{j,k} − Σ_{j,k} α_{j,k} q_{j,k} + W(1 − Σ_j α_j·ω_j / C)`.
pub fn potential_value<T: Scalar>(alpha: &[Vec<bool>], inst: &PotentialGameInstance<T>) -> Result<T, GameError> {
    inst.check_profile(alpha)?;
    let own: T = (0..inst.players()).map(|i| inst.own_term(i, alpha)).sum();
    Ok(own + inst.load(alpha))
}

fn random_row<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<bool> {
    (0..k).map(|_| rng.random()).collect()
}

/// Largest `|Δu_i − Δφ|` over `trials` random profiles, each paired with a
/// random unilateral deviation of a random player.
pub fn verify_exact_potential<T: Scalar, R: Rng + ?Sized>(
    inst: &PotentialGameInstance<T>,
    trials: usize,
    rng: &mut R,
) -> Result<T, GameError> {
    inst.validate()?;
    let (n, k) = (inst.players(), inst.commodities());
    let mut worst = T::zero();
    for _ in 0..trials {
        let alpha: Vec<Vec<bool>> = (0..n).map(|_| random_row(k, rng)).collect();
        let i = rng.random_range(0..n);
        let mut dev = alpha.clone();
        dev[i] = random_row(k, rng);
        let du = player_utility(i, &alpha, inst)? - player_utility(i, &dev, inst)?;
        let dphi = potential_value(&alpha, inst)? - potential_value(&dev, inst)?;
        worst = worst.max((du - dphi).abs());
    }
    Ok(worst)
}
