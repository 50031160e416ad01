//! Minimal clerk-set sizes for each construction.
//!
//! All logarithms are base 2, so the constant written `log e` in the
//! formulas is `log2(e) ≈ 1.442695`. Bounds stated with a strict inequality
//! (`b > x`) resolve to `floor(x) + 1`; bounds stated as "at least x" resolve
//! to `ceil(x)`. A tolerance of 1e-9 absorbs float noise at integer values.

use serde::{Deserialize, Serialize};

use crate::error::InfeasibleError;

pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

const EPS: f64 = 1e-9;

fn at_least(x: f64) -> usize {
    (x - EPS).ceil().max(0.0) as usize
}

fn strictly_above(x: f64) -> usize {
    ((x + EPS).floor() + 1.0).max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Fixed grid assignment over supernodes.
    T1,
    /// Uniform random sets, single double spend.
    T2,
    /// Uniform random sets, r-fold double spend, spender is the only dishonest node.
    T3,
    /// Uniform random sets, r-fold double spend, f dishonest nodes.
    T4,
    /// Coin-specific clerk space size.
    T5,
    /// Random subsets of a coin-specific clerk space, r-fold double spend.
    T6,
}

impl std::str::FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "1" => Ok(Theorem::T1),
            "t2" | "2" => Ok(Theorem::T2),
            "t3" | "3" => Ok(Theorem::T3),
            "t4" | "4" => Ok(Theorem::T4),
            "t5" | "5" => Ok(Theorem::T5),
            "t6" | "6" => Ok(Theorem::T6),
            other => Err(format!("unknown theorem '{other}', expected t1..t6")),
        }
    }
}

/// Which branch of a bound produced the final value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundRule {
    Formula,
    ClampedToPool,
    FirstDisjunct,
    SecondDisjunct,
    HalfSpaceGuard,
    DegenerateAllAdaptive,
}

impl std::fmt::Display for BoundRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundRule::Formula => "formula",
            BoundRule::ClampedToPool => "clamped-to-pool",
            BoundRule::FirstDisjunct => "first-disjunct",
            BoundRule::SecondDisjunct => "second-disjunct",
            BoundRule::HalfSpaceGuard => "half-space-guard",
            BoundRule::DegenerateAllAdaptive => "degenerate-all-adaptive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    /// Integer size, clamped to the pool it is drawn from.
    pub value: usize,
    /// Formula value before rounding.
    pub raw: f64,
    pub feasible: bool,
    pub rule: BoundRule,
    /// Whether a side condition of the derivation holds, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumption_holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl Bound {
    fn new(value: usize, raw: f64, rule: BoundRule) -> Self {
        Bound { value, raw, feasible: true, rule, assumption_holds: None, warning: None }
    }

    /// Clamp to `pool`; exceeding the pool keeps `feasible` unless `hard`.
    fn clamp(mut self, pool: usize, hard: bool) -> Self {
        if self.value > pool {
            self.value = pool;
            self.rule = BoundRule::ClampedToPool;
            if hard {
                self.feasible = false;
            }
        }
        self
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), InfeasibleError> {
    if cond {
        Ok(())
    } else {
        Err(InfeasibleError::Parameters(msg()))
    }
}

/// Bound formulas with the `log2(e)` constant exposed, so a verification
/// run can check that a wrong constant is caught.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCalculator {
    pub log2_e: f64,
}

impl Default for BoundCalculator {
    fn default() -> Self {
        BoundCalculator { log2_e: LOG2_E }
    }
}

impl BoundCalculator {
    /// `ceil(2·sqrt(n(f+1)))`, clamped to n.
    pub fn fixed(&self, n: usize, f: usize) -> Result<Bound, InfeasibleError> {
        check(n >= 1, || "n must be positive".into())?;
        let raw = 2.0 * ((n * (f + 1)) as f64).sqrt();
        Ok(Bound::new(at_least(raw), raw, BoundRule::Formula).clamp(n, false))
    }

    /// Uniform random sets: `b ≥ sqrt(nκ / (log e · (1 − f/n)))`.
    pub fn random_single(&self, n: usize, f: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
        self.random_multi(n, f, 1, secpar)
    }

    /// Uniform random sets against r double spends:
    /// `b ≥ sqrt(nκ / (log e · (1 − f/n) · r))`.
    pub fn random_multi(&self, n: usize, f: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
        check(n >= 1, || "n must be positive".into())?;
        check(f < n, || format!("f={f} must be below n={n}"))?;
        check(r >= 1, || "r must be at least 1".into())?;
        check(secpar >= 1, || "security parameter must be at least 1".into())?;
        let honest_frac = 1.0 - f as f64 / n as f64;
        let raw = (n as f64 * secpar as f64 / (self.log2_e * honest_frac * r as f64)).sqrt();
        Ok(Bound::new(at_least(raw), raw, BoundRule::Formula).clamp(n, false))
    }

    /// Spender-only adversary: smallest b with `b > sqrt(2nκ)/r + 1` or
    /// `b > (n−1)/(r+1)`, whichever is smaller.
    pub fn random_multi_f1(&self, n: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
        check(n >= 1, || "n must be positive".into())?;
        check(r >= 1, || "r must be at least 1".into())?;
        check(secpar >= 1, || "security parameter must be at least 1".into())?;
        let first_raw = (2.0 * n as f64 * secpar as f64).sqrt() / r as f64 + 1.0;
        let second_raw = (n as f64 - 1.0) / (r as f64 + 1.0);
        let first = strictly_above(first_raw);
        let second = strictly_above(second_raw);
        let mut bound = if first <= second {
            Bound::new(first, first_raw, BoundRule::FirstDisjunct)
        } else {
            Bound::new(second, second_raw, BoundRule::SecondDisjunct)
        };
        // the first disjunct is derived assuming (r+1)·b ≤ n
        if bound.rule == BoundRule::FirstDisjunct {
            let ok = (r + 1) * bound.value <= n;
            bound.assumption_holds = Some(ok);
            if !ok {
                bound.warning = Some(format!("(r+1)*b = {} exceeds n = {n}", (r + 1) * bound.value));
            }
        }
        Ok(bound.clamp(n, false))
    }

    /// Coin-specific clerk space: `β > d + κ / log((n−d)/(f−d))`.
    pub fn coin_space(&self, n: usize, f: usize, d: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
        check(n >= 1, || "n must be positive".into())?;
        check(f < n, || format!("f={f} must be below n={n}"))?;
        check(d <= f, || format!("d={d} must not exceed f={f}"))?;
        check(secpar >= 1, || "security parameter must be at least 1".into())?;
        if f == d {
            let mut b = Bound::new(d + 1, (d + 1) as f64, BoundRule::DegenerateAllAdaptive);
            b.warning = Some("f = d: every dishonest node is adaptive, formula undefined; using d+1".into());
            return Ok(b.clamp(n, false));
        }
        let ratio = (n - d) as f64 / (f - d) as f64;
        let raw = d as f64 + secpar as f64 / ratio.log2();
        Ok(Bound::new(strictly_above(raw), raw, BoundRule::Formula).clamp(n, false))
    }

    /// Subsets of a clerk space of size β against r double spends:
    /// `b ≥ (β / (r log e)) · (κ + 1 + log(r+2))`, and always `b > β/2`.
    pub fn coin_subset(&self, beta: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
        check(beta >= 1, || "beta must be positive".into())?;
        check(r >= 1, || "r must be at least 1".into())?;
        check(secpar >= 1, || "security parameter must be at least 1".into())?;
        let raw = beta as f64 / (r as f64 * self.log2_e) * (secpar as f64 + 1.0 + ((r + 2) as f64).log2());
        let formula = at_least(raw);
        let guard = beta / 2 + 1;
        let bound = if formula >= guard {
            Bound::new(formula, raw, BoundRule::Formula)
        } else {
            Bound::new(guard, raw, BoundRule::HalfSpaceGuard)
        };
        Ok(bound.clamp(beta, true))
    }

    pub fn evaluate(&self, q: &BoundQuery) -> Result<Bound, InfeasibleError> {
        match q.theorem {
            Theorem::T1 => self.fixed(q.n, q.f),
            Theorem::T2 => self.random_single(q.n, q.f, q.secpar),
            Theorem::T3 => self.random_multi_f1(q.n, q.r, q.secpar),
            Theorem::T4 => self.random_multi(q.n, q.f, q.r, q.secpar),
            Theorem::T5 => self.coin_space(q.n, q.f, q.d, q.secpar),
            Theorem::T6 => {
                let beta = match q.beta {
                    Some(b) => b,
                    None => self.coin_space(q.n, q.f, q.d, q.secpar)?.value,
                };
                self.coin_subset(beta, q.r, q.secpar)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub theorem: Theorem,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub secpar: u32,
    pub r: usize,
    /// Clerk-space size for T6; derived from T5 when absent.
    pub beta: Option<usize>,
}

pub fn bound_fixed(n: usize, f: usize) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().fixed(n, f)
}

pub fn bound_random_single(n: usize, f: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().random_single(n, f, secpar)
}

pub fn bound_random_multi_f1(n: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().random_multi_f1(n, r, secpar)
}

pub fn bound_random_multi(n: usize, f: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().random_multi(n, f, r, secpar)
}

pub fn bound_coin_space(n: usize, f: usize, d: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().coin_space(n, f, d, secpar)
}

pub fn bound_coin_subset(beta: usize, r: usize, secpar: u32) -> Result<Bound, InfeasibleError> {
    BoundCalculator::default().coin_subset(beta, r, secpar)
}
