use serde::{Deserialize, Serialize};

use super::GameError;
use crate::scalar::Scalar;

/// Midpoint nodes used to integrate over bidder 1's valuation.
const QUADRATURE_NODES: usize = 4096;

/// `u = x(v − p) − (1 − x)c` for one commodity.
pub fn spa_payoff<T: Scalar>(won: bool, valuation: T, price: T, losing_cost: T) -> T {
    if won {
        valuation - price
    } else {
        -losing_cost
    }
}

/// Valuation law on `[l, m]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationDist {
    #[default]
    Uniform,
    /// CDF `((v − l)/(m − l))^exponent`.
    Power { exponent: f64 },
}

impl ValuationDist {
    fn cdf<T: Scalar>(&self, u: T) -> T {
        let u = u.max(T::zero()).min(T::one());
        match *self {
            ValuationDist::Uniform => u,
            ValuationDist::Power { exponent } => u.powf(T::lit(exponent)),
        }
    }
}

/// Two-bidder, one-commodity second-price auction in which bidder 1 plays
/// a fixed increasing strategy `f_1` with `f_1(l_1) = a_1`, `f_1(m_1) = b_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaInstance<T> {
    /// `[l_1, l_2]`.
    pub low: [T; 2],
    /// `[m_1, m_2]`.
    pub high: [T; 2],
    pub budget: [T; 2],
    pub losing_cost: [T; 2],
    /// `(a_1, b_1)`.
    pub anchors: [T; 2],
    /// Interior `(v, f_1(v))` points; `f_1` interpolates linearly through the
    /// anchors and these.
    #[serde(default)]
    pub knots: Vec<[T; 2]>,
    #[serde(default)]
    pub dist: [ValuationDist; 2],
}

impl<T: Scalar> SpaInstance<T> {
    pub fn linear(low: [T; 2], high: [T; 2], budget: [T; 2], losing_cost: [T; 2], anchors: [T; 2]) -> Self {
        Self { low, high, budget, losing_cost, anchors, knots: Vec::new(), dist: Default::default() }
    }

    fn points(&self) -> Vec<[T; 2]> {
        let mut pts = vec![[self.low[0], self.anchors[0]]];
        pts.extend(self.knots.iter().copied());
        pts.push([self.high[0], self.anchors[1]]);
        pts
    }

    pub fn validate(&self) -> Result<(), GameError> {
        for i in 0..2 {
            if !(self.low[i] < self.high[i]) {
                return Err(GameError::Instance(format!("bidder {} support needs l < m", i + 1)));
            }
            if self.losing_cost[i] < T::zero() {
                return Err(GameError::Instance("losing costs must be non-negative".into()));
            }
        }
        let pts = self.points();
        for w in pts.windows(2) {
            if !(w[1][0] > w[0][0]) || w[1][1] < w[0][1] {
                return Err(GameError::Instance("f_1 must be increasing with knots inside (l_1, m_1)".into()));
            }
        }
        if self.anchors[1] > self.budget[0] {
            return Err(GameError::Instance("f_1 bids above bidder 1's budget".into()));
        }
        Ok(())
    }

    /// Bidder 1's strategy.
    pub fn f1(&self, v: T) -> T {
        let pts = self.points();
        if v <= pts[0][0] {
            return pts[0][1];
        }
        for w in pts.windows(2) {
            if v <= w[1][0] {
                let t = (v - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        pts[pts.len() - 1][1]
    }

    /// Opponent bids at quadrature nodes with their probability weights.
    fn opponent_bids(&self) -> (Vec<T>, Vec<T>) {
        let (l, m) = (self.low[0], self.high[0]);
        let n = QUADRATURE_NODES;
        let width = (m - l) / T::from_usize_lossy(n);
        let mut bids = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let lo = T::from_usize_lossy(j) / T::from_usize_lossy(n);
            let hi = T::from_usize_lossy(j + 1) / T::from_usize_lossy(n);
            let mid = l + width * (T::from_usize_lossy(j) + T::lit(0.5));
            bids.push(self.f1(mid));
            weights.push(self.dist[0].cdf(hi) - self.dist[0].cdf(lo));
        }
        (bids, weights)
    }
}

/// Bidder 2's expected utility of every bid in `bids` for each valuation in
/// `v2_grid`; returns the argmax bid per valuation (lowest on ties).
pub fn best_response_curve<T: Scalar>(
    inst: &SpaInstance<T>,
    v2_grid: &[T],
    bid_grid: &[T],
) -> Result<Vec<(T, T)>, GameError> {
    inst.validate()?;
    if v2_grid.is_empty() {
        return Err(GameError::EmptyGrid("valuation grid"));
    }
    let mut bids: Vec<T> = bid_grid.iter().copied().filter(|b| *b <= inst.budget[1]).collect();
    if bids.is_empty() {
        return Err(GameError::EmptyGrid("bid grid within bidder 2's budget"));
    }
    bids.sort_by(|a, b| a.partial_cmp(b).expect("finite bids"));
    let (opp, w) = inst.opponent_bids();
    // opp is nondecreasing, so per-bid masses come from prefix sums
    let mut mass = vec![T::zero(); opp.len() + 1];
    let mut paid = vec![T::zero(); opp.len() + 1];
    for j in 0..opp.len() {
        mass[j + 1] = mass[j] + w[j];
        paid[j + 1] = paid[j] + w[j] * opp[j];
    }
    let total = mass[opp.len()];
    let half = T::lit(0.5);
    let c2 = inst.losing_cost[1];
    let stats: Vec<(T, T, T, T)> = bids
        .iter()
        .map(|b| {
            let below = opp.partition_point(|x| x < b);
            let upto = opp.partition_point(|x| x <= b);
            (mass[below], paid[below], mass[upto] - mass[below], total - mass[upto])
        })
        .collect();
    Ok(v2_grid
        .iter()
        .map(|&v2| {
            let mut best = (bids[0], T::neg_infinity());
            for (b, &(win_mass, win_paid, tie_mass, lose_mass)) in bids.iter().zip(&stats) {
                // ties split the item evenly: half win at price b, half lose
                let u = v2 * win_mass - win_paid + half * tie_mass * (v2 - *b - c2) - c2 * lose_mass;
                if u > best.1 {
                    best = (*b, u);
                }
            }
            (v2, best.0)
        })
        .collect())
}

/// Shape of a best-response curve against the three-branch form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport<T> {
    pub theta1: T,
    pub theta2: T,
    /// `(j_2, d_2)` fitted on the middle branch; absent when it is empty.
    pub line: Option<(T, T)>,
    pub max_residual: Option<T>,
    pub tol: T,
    /// `|j_2 θ_1 + d_2 − a_1|` and `|j_2 θ_2 + d_2 − b_1|` where the branch
    /// switch is observed inside the grid.
    pub anchor_errors: [Option<T>; 2],
    /// Every point before `θ_1` bids at most `a_1` and every point after
    /// `θ_2` at least `b_1`, and the middle branch is contiguous.
    pub branches_ordered: bool,
}

impl<T: Scalar> BranchReport<T> {
    /// Residual and anchors within `tol`, branches in order.
    pub fn passes(&self) -> bool {
        self.branches_ordered
            && self.max_residual.is_none_or(|r| r <= self.tol)
            && self.anchor_errors.iter().flatten().all(|e| *e <= self.tol)
    }
}

/// Least-squares line through the middle branch `a_1 < b < b_1` plus the
/// branch boundaries read off the curve.
pub fn check_piecewise_linear_form<T: Scalar>(curve: &[(T, T)], a1: T, b1: T, tol: T) -> BranchReport<T> {
    let class = |b: T| {
        if b <= a1 {
            0u8
        } else if b >= b1 {
            2
        } else {
            1
        }
    };
    let classes: Vec<u8> = curve.iter().map(|&(_, b)| class(b)).collect();
    let branches_ordered = classes.windows(2).all(|w| w[0] <= w[1]);
    let first_v = curve.first().map_or(T::zero(), |p| p.0);
    let last_v = curve.last().map_or(T::zero(), |p| p.0);
    let boundary = |k: u8| -> (T, bool) {
        // first index whose class reaches k
        match classes.iter().position(|c| *c >= k) {
            None => (last_v, false),
            Some(0) => (first_v, false),
            Some(i) => ((curve[i - 1].0 + curve[i].0) * T::lit(0.5), true),
        }
    };
    let (theta1, seen1) = boundary(1);
    let (theta2, seen2) = boundary(2);
    let middle: Vec<(T, T)> = curve.iter().zip(&classes).filter(|(_, c)| **c == 1).map(|(p, _)| *p).collect();
    let line = fit_line(&middle);
    let max_residual = line.map(|(j, d)| {
        middle.iter().map(|&(v, b)| (b - (j * v + d)).abs()).fold(T::zero(), T::max)
    });
    let anchor_errors = match line {
        Some((j, d)) => [
            seen1.then(|| (j * theta1 + d - a1).abs()),
            seen2.then(|| (j * theta2 + d - b1).abs()),
        ],
        None => [None, None],
    };
    BranchReport { theta1, theta2, line, max_residual, tol, anchor_errors, branches_ordered }
}

fn fit_line<T: Scalar>(pts: &[(T, T)]) -> Option<(T, T)> {
    match pts.len() {
        0 => None,
        1 => Some((T::zero(), pts[0].1)),
        _ => {
            let n = T::from_usize_lossy(pts.len());
            let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
            let my = pts.iter().map(|p| p.1).sum::<T>() / n;
            let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            if sxx == T::zero() {
                return Some((T::zero(), my));
            }
            let j = sxy / sxx;
            Some((j, my - j * mx))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_branches() {
        assert_eq!(spa_payoff(true, 5.0, 3.0, 0.5), 2.0);
        assert_eq!(spa_payoff(false, 5.0, 3.0, 0.5), -0.5);
        assert_eq!(spa_payoff(true, 4.0, 4.0, 1.0), 0.0);
    }

    #[test]
    fn strategy_interpolates() {
        let mut inst = SpaInstance::<f64>::linear([0.0, 0.0], [10.0, 10.0], [20.0, 20.0], [0.0, 0.0], [2.0, 8.0]);
        assert!((inst.f1(5.0) - 5.0).abs() < 1e-12);
        inst.knots = vec![[5.0, 3.0]];
        assert!((inst.f1(5.0) - 3.0).abs() < 1e-12);
        assert!((inst.f1(7.5) - 5.5).abs() < 1e-12);
        inst.knots = vec![[5.0, 9.0]];
        assert!(inst.validate().is_err());
    }

    #[test]
    fn empty_grids_rejected() {
        let inst = SpaInstance::linear([0.0, 0.0], [10.0, 10.0], [20.0, 1.0], [0.0, 0.0], [2.0, 8.0]);
        assert_eq!(best_response_curve(&inst, &[], &[1.0]), Err(GameError::EmptyGrid("valuation grid")));
        assert!(matches!(best_response_curve(&inst, &[1.0], &[5.0]), Err(GameError::EmptyGrid(_))));
    }
}
