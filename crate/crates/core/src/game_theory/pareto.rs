use serde::{Deserialize, Serialize};

use super::GameError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    One,
    Two,
}

/// NE allocation: bidder 1 iff `j_1 v_1 + d_1 ≥ j_2 v_2 + d_2`.
pub fn ne_allocation<T: Scalar>(v1: T, v2: T, j1: T, d1: T, j2: T, d2: T) -> Winner {
    if j1 * v1 + d1 >= j2 * v2 + d2 {
        Winner::One
    } else {
        Winner::Two
    }
}

/// Bidder 1 wins iff `a ω_1 + b ω_2 + c ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneRule<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> HalfPlaneRule<T> {
    /// `A*`: bidder 1 iff `ω_1 (1 + λ) ≥ ω_2 (1 − γλ)`.
    pub fn a_star(lambda: T, gamma: T) -> Self {
        Self { a: T::one() + lambda, b: -(T::one() - gamma * lambda), c: T::zero() }
    }

    pub fn winner(&self, w1: T, w2: T) -> Winner {
        if self.a * w1 + self.b * w2 + self.c >= T::zero() {
            Winner::One
        } else {
            Winner::Two
        }
    }
}

/// Two bidders whose valuations are linear in their resource requirement
/// `ω_i`, drawn independently and uniformly from `[omega_low_i, omega_high_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoInstance<T> {
    /// NE best-response slopes `(j_1, j_2)`.
    pub j: [T; 2],
    /// NE best-response intercepts `(d_1, d_2)`.
    pub d: [T; 2],
    /// Valuation slopes `g_i` in `v_i = g_i ω_i + k_i`; derived from `λ*`
    /// when absent.
    #[serde(default)]
    pub g: Option<[T; 2]>,
    #[serde(default)]
    pub k: Option<[T; 2]>,
    pub gamma: T,
    pub omega_low: [T; 2],
    pub omega_high: [T; 2],
}

/// `E[ω_1 · 1{winner 1}]`, `E[ω_2 · 1{winner 2}]` and `P(winner 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleMoments<T> {
    pub share1: T,
    pub share2: T,
    pub p1: T,
}

impl<T: Scalar> RuleMoments<T> {
    pub fn welfare(&self) -> T {
        self.share1 + self.share2
    }

    /// Restricted-expectation fairness ratio; `None` when either bidder never wins.
    pub fn ratio(&self) -> Option<T> {
        let eps = T::lit(1e-14);
        (self.p1 > eps && self.p1 < T::one() - eps && self.share2 > T::zero()).then(|| self.share1 / self.share2)
    }
}

impl<T: Scalar> ParetoInstance<T> {
    pub fn validate(&self) -> Result<(), GameError> {
        if !(self.gamma > T::zero()) {
            return Err(GameError::Instance("γ must be positive".into()));
        }
        if !(self.j[0] > T::zero() && self.j[1] > T::zero()) {
            return Err(GameError::Instance("j_1, j_2 must be positive".into()));
        }
        for i in 0..2 {
            if !(self.omega_low[i] > T::zero() && self.omega_high[i] >= self.omega_low[i]) {
                return Err(GameError::Instance(format!("ω_{} range must satisfy 0 < low ≤ high", i + 1)));
            }
        }
        Ok(())
    }

    /// Largest requirement; welfare tolerances are relative to it.
    pub fn scale(&self) -> T {
        self.omega_high[0].max(self.omega_high[1])
    }

    /// `(g, k)` that turn the NE rule into `A*` for the given multiplier.
    pub fn valuation_coefficients(&self, lambda: T, gamma: T) -> ([T; 2], [T; 2]) {
        let [j1, j2] = self.j;
        let [d1, d2] = self.d;
        ([(T::one() + lambda) / j1, (T::one() - gamma * lambda) / j2], [-d1 / j1, -d2 / j2])
    }

    /// Exact moments of a half-plane rule under the uniform requirement law.
    pub fn moments(&self, rule: &HalfPlaneRule<T>) -> RuleMoments<T> {
        let [x0, y0] = self.omega_low;
        let [x1, y1] = self.omega_high;
        let half = T::lit(0.5);
        let mean = [(x0 + x1) * half, (y0 + y1) * half];
        let wide = [x1 > x0, y1 > y0];
        let (p1, m1, m2) = match wide {
            [true, true] => {
                let rect = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
                let poly = clip(&rect, rule);
                let (area, mx, my) = polygon_moments(&poly);
                let total = (x1 - x0) * (y1 - y0);
                (area / total, mx / total, my / total)
            }
            [false, true] => {
                let (p, m) = interval_moments(y0, y1, rule.a * x0 + rule.c, rule.b);
                (p, x0 * p, m)
            }
            [true, false] => {
                let (p, m) = interval_moments(x0, x1, rule.b * y0 + rule.c, rule.a);
                (p, m, y0 * p)
            }
            [false, false] => {
                let p = if rule.winner(x0, y0) == Winner::One { T::one() } else { T::zero() };
                (p, x0 * p, y0 * p)
            }
        };
        RuleMoments { share1: m1, share2: mean[1] - m2, p1 }
    }

    /// `A*` moments at multiplier `λ`.
    pub fn a_star_moments(&self, lambda: T, gamma: T) -> RuleMoments<T> {
        self.moments(&HalfPlaneRule::a_star(lambda, gamma))
    }

    /// `n × n` grid of cell midpoints covering the requirement support.
    pub fn grid(&self, n: usize) -> Vec<(T, T)> {
        let axis = |i: usize| -> Vec<T> {
            let (lo, hi) = (self.omega_low[i], self.omega_high[i]);
            (0..n).map(|s| lo + (hi - lo) * (T::from_usize_lossy(s) + T::lit(0.5)) / T::from_usize_lossy(n)).collect()
        };
        let (xs, ys) = (axis(0), axis(1));
        xs.iter().flat_map(|x| ys.iter().map(move |y| (*x, *y))).collect()
    }
}

/// `(P(t ∈ S), E[t · 1{t ∈ S}])` for `t ~ U[lo, hi]`, `S = {α + βt ≥ 0}`.
fn interval_moments<T: Scalar>(lo: T, hi: T, alpha: T, beta: T) -> (T, T) {
    let (s0, s1) = if beta > T::zero() {
        ((-alpha / beta).max(lo), hi)
    } else if beta < T::zero() {
        (lo, (-alpha / beta).min(hi))
    } else if alpha >= T::zero() {
        (lo, hi)
    } else {
        (hi, hi)
    };
    if s1 <= s0 {
        return (T::zero(), T::zero());
    }
    let w = hi - lo;
    ((s1 - s0) / w, (s1 * s1 - s0 * s0) * T::lit(0.5) / w)
}

/// Sutherland–Hodgman clip of a convex polygon to the winner-1 side.
fn clip<T: Scalar>(poly: &[(T, T)], rule: &HalfPlaneRule<T>) -> Vec<(T, T)> {
    let side = |p: (T, T)| rule.a * p.0 + rule.b * p.1 + rule.c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(p), side(q));
        if sp >= T::zero() {
            out.push(p);
        }
        if (sp >= T::zero()) != (sq >= T::zero()) {
            let t = sp / (sp - sq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

/// `(area, ∫x dA, ∫y dA)` of a counter-clockwise polygon.
fn polygon_moments<T: Scalar>(poly: &[(T, T)]) -> (T, T, T) {
    if poly.len() < 3 {
        return (T::zero(), T::zero(), T::zero());
    }
    let (mut a, mut mx, mut my) = (T::zero(), T::zero(), T::zero());
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let cross = p.0 * q.1 - q.0 * p.1;
        a += cross;
        mx += (p.0 + q.0) * cross;
        my += (p.1 + q.1) * cross;
    }
    let six = T::lit(6.0);
    (a * T::lit(0.5), mx / six, my / six)
}

/// Monte Carlo fairness ratio `E[ω_1 |_{A=1}] / E[ω_2 |_{A=2}]` over equally
/// weighted samples, with restricted (unconditional) expectations.
pub fn fairness_ratio<T: Scalar>(rule: impl Fn(T, T) -> Winner, samples: &[(T, T)]) -> Result<T, GameError> {
    let (mut s1, mut s2, mut n1, mut n2) = (T::zero(), T::zero(), 0usize, 0usize);
    for &(w1, w2) in samples {
        match rule(w1, w2) {
            Winner::One => {
                s1 += w1;
                n1 += 1;
            }
            Winner::Two => {
                s2 += w2;
                n2 += 1;
            }
        }
    }
    if n1 == 0 {
        return Err(GameError::EmptyEvent(1));
    }
    if n2 == 0 {
        return Err(GameError::EmptyEvent(2));
    }
    Ok(s1 / s2)
}

const SCAN_POINTS: usize = 256;
const BISECTION_STEPS: usize = 200;

/// Multiplier `λ*` at which `A*` meets the fairness ratio `γ` within `tol`.
pub fn solve_lambda_star<T: Scalar>(inst: &ParetoInstance<T>, gamma: T, tol: T) -> Result<T, GameError> {
    inst.validate()?;
    if !(gamma > T::zero()) {
        return Err(GameError::Instance("γ must be positive".into()));
    }
    let infeasible = |detail: String| GameError::Infeasible { target: gamma.to_f64_lossy(), detail };
    // A* keeps positive coefficients for λ ∈ (−1, 1/γ)
    let (lo, hi) = (-T::one(), T::one() / gamma);
    let at = |s: usize| lo + (hi - lo) * T::from_usize_lossy(s) / T::from_usize_lossy(SCAN_POINTS);
    let gap = |lambda: T| inst.a_star_moments(lambda, gamma).ratio().map(|r| r - gamma);
    let mut prev: Option<(T, T)> = None;
    for s in 1..SCAN_POINTS {
        let lambda = at(s);
        let Some(g) = gap(lambda) else { continue };
        if g.abs() <= tol {
            return Ok(lambda);
        }
        if let Some((pl, pg)) = prev {
            if (pg < T::zero()) != (g < T::zero()) {
                return bisect(pl, lambda, pg, |l| gap(l), tol).ok_or_else(|| infeasible("bisection lost the bracket".into()));
            }
        }
        prev = Some((lambda, g));
    }
    Err(infeasible("no sign change of the ratio gap over λ ∈ (−1, 1/γ)".into()))
}

/// Bisection on a sign change of `f` in `[a, b]`; `fa = f(a)`.
fn bisect<T: Scalar>(mut a: T, mut b: T, mut fa: T, f: impl Fn(T) -> Option<T>, tol: T) -> Option<T> {
    let mut best = a;
    let mut best_gap = fa.abs();
    for _ in 0..BISECTION_STEPS {
        let mid = (a + b) * T::lit(0.5);
        let fm = f(mid)?;
        if fm.abs() < best_gap {
            best = mid;
            best_gap = fm.abs();
        }
        if fm.abs() <= tol {
            return Some(mid);
        }
        if (fm < T::zero()) == (fa < T::zero()) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Some(best)
}

/// Welfare of `A*` against the best fairness-feasible rival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport<T> {
    pub lambda_star: T,
    pub a_star_ratio: T,
    pub a_star_welfare: T,
    pub best_rival_welfare: Option<T>,
    pub feasible_rivals: usize,
    /// The NE rule with `(g, k)` (given or derived) allocates like `A*` on the grid.
    pub ne_matches_a_star: bool,
    pub scale: T,
}

impl<T: Scalar> WelfareReport<T> {
    /// `A*` within `rel_slack · scale` of every feasible rival.
    pub fn passes(&self, rel_slack: T) -> bool {
        self.best_rival_welfare.is_none_or(|w| self.a_star_welfare >= w - rel_slack * self.scale)
    }
}

/// Rivals are threshold rules whose boundary line passes through a point of
/// the `grid × grid` lattice over the support, rotated to every angle at which
/// the fairness ratio crosses `γ` (solved to `1e-12` relative).
pub fn verify_welfare_optimality<T: Scalar>(
    inst: &ParetoInstance<T>,
    gamma: T,
    grid: usize,
) -> Result<WelfareReport<T>, GameError> {
    if grid == 0 {
        return Err(GameError::EmptyGrid("rival lattice"));
    }
    let tol = gamma * T::lit(1e-12);
    let lambda_star = solve_lambda_star(inst, gamma, tol)?;
    let a_star = inst.a_star_moments(lambda_star, gamma);
    let a_star_ratio = a_star.ratio().ok_or(GameError::EmptyEvent(2))?;

    let (g, k) = match (inst.g, inst.k) {
        (Some(g), Some(k)) => (g, k),
        _ => inst.valuation_coefficients(lambda_star, gamma),
    };
    let rule = HalfPlaneRule::a_star(lambda_star, gamma);
    let points = inst.grid(grid);
    let ne_matches_a_star = points.iter().all(|&(w1, w2)| {
        let margin = rule.a * w1 + rule.b * w2;
        let ne = ne_allocation(g[0] * w1 + k[0], g[1] * w2 + k[1], inst.j[0], inst.d[0], inst.j[1], inst.d[1]);
        margin.abs() < T::lit(1e-9) * inst.scale() || ne == rule.winner(w1, w2)
    });

    let angles = 96usize;
    let two_pi = T::lit(std::f64::consts::TAU);
    let mut best: Option<T> = None;
    let mut feasible = 0usize;
    for &(t1, t2) in &points {
        let rival = |theta: T| HalfPlaneRule { a: theta.cos(), b: theta.sin(), c: -(theta.cos() * t1 + theta.sin() * t2) };
        let gap = |theta: T| inst.moments(&rival(theta)).ratio().map(|r| r - gamma);
        let mut prev: Option<(T, T)> = None;
        for s in 0..=angles {
            let theta = two_pi * T::from_usize_lossy(s) / T::from_usize_lossy(angles);
            let Some(g) = gap(theta) else {
                prev = None;
                continue;
            };
            if let Some((pt, pg)) = prev {
                if (pg < T::zero()) != (g < T::zero()) {
                    if let Some(root) = bisect(pt, theta, pg, gap, tol) {
                        let m = inst.moments(&rival(root));
                        if m.ratio().is_some_and(|r| (r - gamma).abs() <= tol) {
                            feasible += 1;
                            let w = m.welfare();
                            best = Some(best.map_or(w, |b: T| b.max(w)));
                        }
                    }
                }
            }
            prev = Some((theta, g));
        }
    }
    Ok(WelfareReport {
        lambda_star,
        a_star_ratio,
        a_star_welfare: a_star.welfare(),
        best_rival_welfare: best,
        feasible_rivals: feasible,
        ne_matches_a_star,
        scale: inst.scale(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ParetoInstance<f64> {
        ParetoInstance {
            j: [1.0, 1.0],
            d: [0.0, 0.0],
            g: None,
            k: None,
            gamma: 1.0,
            omega_low: [1.0, 1.0],
            omega_high: [3.0, 3.0],
        }
    }

    #[test]
    fn ne_rule_examples() {
        assert_eq!(ne_allocation(2.0, 2.0, 1.0, 0.5, 1.0, 0.5), Winner::One);
        assert_eq!(ne_allocation(3.0, 5.0, 1.0, 0.0, 1.0, 0.0), Winner::Two);
    }

    #[test]
    fn polygon_moments_match_rectangle() {
        let inst = square();
        let all = HalfPlaneRule { a: 0.0, b: 0.0, c: 1.0 };
        let m = inst.moments(&all);
        assert!((m.p1 - 1.0).abs() < 1e-12 && (m.share1 - 2.0).abs() < 1e-12 && m.share2.abs() < 1e-12);
        assert_eq!(m.ratio(), None);
        // ω_1 ≥ 2 keeps half the square
        let m = inst.moments(&HalfPlaneRule { a: 1.0, b: 0.0, c: -2.0 });
        assert!((m.p1 - 0.5).abs() < 1e-12);
        assert!((m.share1 - 0.5 * 2.5).abs() < 1e-12);
        assert!((m.share2 - 0.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_supports() {
        let point = ParetoInstance { omega_low: [2.0, 2.0], omega_high: [2.0, 2.0], ..square() };
        for rule in [HalfPlaneRule { a: 1.0, b: -1.0, c: 0.0 }, HalfPlaneRule { a: -1.0, b: 0.0, c: 1.0 }] {
            assert_eq!(point.moments(&rule).welfare(), 2.0);
        }
        let line = ParetoInstance { omega_low: [2.0, 1.0], omega_high: [2.0, 3.0], ..square() };
        let m = line.moments(&HalfPlaneRule::a_star(0.0, 1.0));
        assert!((m.p1 - 0.5).abs() < 1e-12);
        assert!((m.share2 - 0.5 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_events_rejected() {
        let samples = vec![(1.0, 2.0), (2.0, 1.0)];
        assert_eq!(fairness_ratio(|_, _| Winner::One, &samples), Err(GameError::EmptyEvent(2)));
        assert_eq!(fairness_ratio(|_, _| Winner::Two, &samples), Err(GameError::EmptyEvent(1)));
    }
}
