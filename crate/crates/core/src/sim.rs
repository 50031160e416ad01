//! Seeded Monte Carlo estimation of the adversary's success rate, with an
//! exact enumeration oracle for small uniform instances.
//!
//! # Random streams
//!
//! Trial `t` of an experiment with seed `s` draws everything it samples
//! (coin-id, population, receivers, clerk sets) from
//! `ChaCha8Rng::seed_from_u64(s)` with `set_stream(t)`. Protocol-mode nonces
//! come from `ChaCha8Rng::seed_from_u64(s ^ NONCE_STREAM_KEY)`, also on
//! stream `t`, so both modes see the same instance for the same trial.

use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adversary::{
    choose_receivers, evades_detection, execute_attack, pairwise_intersections, sample_population, AttackPlan,
    Population, SpenderRule,
};
use crate::bounds::{BoundCalculator, Theorem};
use crate::coin::{CoinId, NodeId};
use crate::error::SimError;
use crate::protocol::{ClerkPolicy, DbMode, Network, SpendTranscript};
use crate::stats::{choose, clopper_pearson_upper};
use crate::strategies::{
    build_coin_space, build_fixed_assignment, sample_coin_subset, sample_uniform_clerk_set, FixedAssignment, SpaceHash,
};

pub const NONCE_STREAM_KEY: u64 = 0x6e6f_6e63_655f_7374;

/// Largest number of set tuples the exact oracle will enumerate.
pub const MAX_ENUMERATION: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Fixed,
    UniformRandom,
    CoinSpace,
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(StrategyKind::Fixed),
            "uniform" | "uniform-random" => Ok(StrategyKind::UniformRandom),
            "coin-space" | "coin" => Ok(StrategyKind::CoinSpace),
            _ => Err(format!("unknown strategy '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Run the full spend protocol against clerk databases.
    Protocol,
    /// Evaluate the intersection predicate on the sampled sets.
    #[default]
    Combinatorial,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "protocol" => Ok(Mode::Protocol),
            "combinatorial" => Ok(Mode::Combinatorial),
            _ => Err(format!("unknown mode '{s}'")),
        }
    }
}

/// A clerk-set or clerk-space size: explicit, or taken from the matching bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SizeSpec {
    #[default]
    FromTheorem,
    Explicit(usize),
}

impl FromStr for SizeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theorem" | "from-theorem" => Ok(SizeSpec::FromTheorem),
            _ => s.parse().map(SizeSpec::Explicit).map_err(|_| format!("bad size '{s}'")),
        }
    }
}

impl std::fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SizeSpec::FromTheorem => f.write_str("from-theorem"),
            SizeSpec::Explicit(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for SizeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SizeSpec::FromTheorem => s.serialize_str("from-theorem"),
            SizeSpec::Explicit(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SizeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SizeSpec::Explicit(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    pub mode: Mode,
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub d: usize,
    pub r: usize,
    pub secpar: u32,
    #[serde(default)]
    pub b: SizeSpec,
    #[serde(default)]
    pub beta: SizeSpec,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub clerk_policy: ClerkPolicy,
    #[serde(default)]
    pub db_mode: DbMode,
}

impl ExperimentConfig {
    pub fn new(strategy: StrategyKind, n: usize, f: usize, r: usize, secpar: u32) -> Self {
        ExperimentConfig {
            strategy,
            mode: Mode::Combinatorial,
            n,
            f,
            d: 0,
            r,
            secpar,
            b: SizeSpec::FromTheorem,
            beta: SizeSpec::FromTheorem,
            trials: 10_000,
            seed: 0,
            clerk_policy: ClerkPolicy::Both,
            db_mode: DbMode::Full,
        }
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = SizeSpec::Explicit(b);
        self
    }

    pub fn with_beta(mut self, beta: usize) -> Self {
        self.beta = SizeSpec::Explicit(beta);
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n < 2 {
            return bad(format!("n={} too small", self.n));
        }
        if self.f >= self.n || self.d > self.f {
            return bad(format!("need d <= f < n, got n={} f={} d={}", self.n, self.f, self.d));
        }
        if self.r < 1 {
            return bad("r must be at least 1".into());
        }
        if self.secpar < 1 {
            return bad("security parameter must be at least 1".into());
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub failures: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_upper_95: f64,
    /// `2^-κ`.
    pub bound: f64,
    pub feasible: bool,
    pub seed: u64,
    pub b_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    pub wall_time: f64,
}

impl ExperimentResult {
    pub fn within_bound(&self) -> bool {
        self.rate <= self.bound
    }
}

/// One sampled instance of the attack.
#[derive(Debug, Clone, Serialize)]
pub struct TrialInstance {
    pub trial: u64,
    pub cid: CoinId,
    pub population: Population,
    pub plan: AttackPlan,
    pub clerk_sets: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub instance: TrialInstance,
    pub evaded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<Vec<SpendTranscript>>,
}

/// An experiment with its sizes resolved and any fixed structure built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub b: usize,
    pub beta: Option<usize>,
    pub feasible: bool,
    pub theorem: Option<Theorem>,
    assignment: Option<FixedAssignment>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, SimError> {
        Self::with_calculator(config, &BoundCalculator::default())
    }

    pub fn with_calculator(config: ExperimentConfig, calc: &BoundCalculator) -> Result<Self, SimError> {
        config.validate()?;
        let (n, f, d, r, k) = (config.n, config.f, config.d, config.r, config.secpar);
        let mut exp =
            Experiment { config: config.clone(), b: 0, beta: None, feasible: true, theorem: None, assignment: None };
        match config.strategy {
            StrategyKind::Fixed => {
                let a = build_fixed_assignment(n, f)?;
                exp.b = a.sets.iter().map(Vec::len).max().unwrap_or(0);
                exp.theorem = Some(Theorem::T1);
                exp.assignment = Some(a);
            }
            StrategyKind::UniformRandom => {
                exp.b = match config.b {
                    SizeSpec::Explicit(b) => b,
                    SizeSpec::FromTheorem => {
                        let (t, bound) = if r == 1 {
                            (Theorem::T2, calc.random_single(n, f, k)?)
                        } else if f <= 1 {
                            (Theorem::T3, calc.random_multi_f1(n, r, k)?)
                        } else {
                            (Theorem::T4, calc.random_multi(n, f, r, k)?)
                        };
                        exp.theorem = Some(t);
                        exp.feasible = bound.feasible;
                        bound.value
                    }
                };
                if exp.b > n {
                    return Err(crate::error::InfeasibleError::SetTooLarge { size: exp.b, pool: n }.into());
                }
            }
            StrategyKind::CoinSpace => {
                let beta = match config.beta {
                    SizeSpec::Explicit(v) => v,
                    SizeSpec::FromTheorem => {
                        let bound = calc.coin_space(n, f, d, k)?;
                        exp.feasible &= bound.feasible;
                        bound.value
                    }
                };
                if beta > n {
                    return Err(crate::error::InfeasibleError::SetTooLarge { size: beta, pool: n }.into());
                }
                exp.b = match config.b {
                    SizeSpec::Explicit(b) => b,
                    SizeSpec::FromTheorem if r == 1 => {
                        exp.theorem = Some(Theorem::T5);
                        beta
                    }
                    SizeSpec::FromTheorem => {
                        let bound = calc.coin_subset(beta, r, k)?;
                        exp.theorem = Some(Theorem::T6);
                        exp.feasible &= bound.feasible;
                        bound.value
                    }
                };
                if exp.b > beta {
                    return Err(crate::error::InfeasibleError::SetTooLarge { size: exp.b, pool: beta }.into());
                }
                exp.beta = Some(beta);
            }
        }
        Ok(exp)
    }

    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(trial);
        rng
    }

    fn nonce_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ NONCE_STREAM_KEY);
        rng.set_stream(trial);
        rng
    }

    /// Samples population, receivers and clerk sets for one trial.
    pub fn sample_instance(&self, trial: u64) -> Result<TrialInstance, SimError> {
        let c = &self.config;
        let rng = &mut self.trial_rng(trial);
        let cid = CoinId::random(rng);
        let (population, plan, clerk_sets) = match c.strategy {
            StrategyKind::UniformRandom => {
                // sets are fresh per receive, so adaptive corruption buys nothing
                let pop = sample_population(c.n, c.f, 0, SpenderRule::Random, rng)?;
                let plan = choose_receivers(&pop, c.r, rng)?;
                let sets =
                    (0..=c.r).map(|_| sample_uniform_clerk_set(c.n, self.b, rng)).collect::<Result<Vec<_>, _>>()?;
                (pop, plan, sets)
            }
            StrategyKind::CoinSpace => {
                let beta = self.beta.expect("coin space experiments resolve beta");
                let space = build_coin_space(cid, c.n, beta, SpaceHash::Sha256)?;
                let mut pop = sample_population(c.n, c.f, c.d, SpenderRule::Random, rng)?;
                pop.corrupt_adaptively(&space.members)?;
                let plan = choose_receivers(&pop, c.r, rng)?;
                let sets = (0..=c.r).map(|_| sample_coin_subset(&space, self.b, rng)).collect::<Result<Vec<_>, _>>()?;
                (pop, plan, sets)
            }
            StrategyKind::Fixed => {
                // the adversary knows every clerk set in advance
                let a = self.assignment.as_ref().expect("fixed experiments build an assignment");
                let mut pop = sample_population(c.n, c.f, c.f, SpenderRule::Random, rng)?;
                let plan = choose_receivers(&pop, c.r, rng)?;
                let sets: Vec<Vec<NodeId>> = plan.receivers.iter().map(|&x| a.clerk_set(x).to_vec()).collect();
                let targets: Vec<NodeId> =
                    pairwise_intersections(&sets).into_iter().filter(|x| !plan.receivers.contains(x)).collect();
                pop.corrupt_adaptively(&targets)?;
                (pop, plan, sets)
            }
        };
        Ok(TrialInstance { trial, cid, population, plan, clerk_sets })
    }

    /// Whether the adversary evaded detection in trial `trial`.
    pub fn run_trial(&self, trial: u64) -> Result<bool, SimError> {
        Ok(self.run_trial_report(trial, false)?.evaded)
    }

    pub fn run_trial_report(&self, trial: u64, keep_transcripts: bool) -> Result<TrialReport, SimError> {
        let instance = self.sample_instance(trial)?;
        let (evaded, transcripts) = match self.config.mode {
            Mode::Combinatorial => {
                (evades_detection(&instance.clerk_sets, &instance.population.dishonest_mask()), None)
            }
            Mode::Protocol => {
                let net = Network::new(
                    self.config.n,
                    self.config.seed ^ trial,
                    self.config.db_mode,
                    self.config.clerk_policy,
                );
                let out = execute_attack(
                    &instance.population,
                    &instance.plan,
                    &instance.clerk_sets,
                    instance.cid,
                    &net,
                    &mut self.nonce_rng(trial),
                )?;
                (out.succeeded, keep_transcripts.then_some(out.transcripts))
            }
        };
        Ok(TrialReport { instance, evaded, transcripts })
    }

    pub fn run(&self) -> Result<ExperimentResult, SimError> {
        let start = Instant::now();
        let trials = self.config.trials;
        let failures =
            (0..trials).into_par_iter().map(|t| self.run_trial(t).map(u64::from)).try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(ExperimentResult {
            config: self.config.clone(),
            failures,
            trials,
            rate: failures as f64 / trials as f64,
            ci_upper_95: clopper_pearson_upper(failures, trials, 0.95),
            bound: 2f64.powi(-(self.config.secpar as i32)),
            feasible: self.feasible,
            seed: self.config.seed,
            b_used: self.b,
            beta_used: self.beta,
            theorem: self.theorem,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn run_trial(config: &ExperimentConfig, trial: u64) -> Result<bool, SimError> {
    Experiment::new(config.clone())?.run_trial(trial)
}

pub fn monte_carlo(config: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
    Experiment::new(config.clone())?.run()
}

/// Exact probability that uniform random clerk sets let the adversary
/// through. Dishonest nodes are taken to be `0..f`; by symmetry of uniform
/// sampling the placement does not matter.
pub fn exact_failure_probability(config: &ExperimentConfig) -> Result<f64, SimError> {
    config.validate()?;
    if config.strategy != StrategyKind::UniformRandom {
        return Err(SimError::Unsupported("the uniform-random strategy"));
    }
    if config.mode != Mode::Combinatorial {
        return Err(SimError::Unsupported("combinatorial mode"));
    }
    let SizeSpec::Explicit(b) = config.b else {
        return Err(SimError::Config("exact probability needs an explicit b".into()));
    };
    let (n, f, r) = (config.n, config.f, config.r);
    if b > n {
        return Err(crate::error::InfeasibleError::SetTooLarge { size: b, pool: n }.into());
    }
    if r == 1 {
        return Ok(exact_pair_failure(n as u64, f as u64, b as u64));
    }
    let tuples = choose(n as u64, b as u64).powi(r as i32 + 1);
    if tuples > MAX_ENUMERATION || n > 64 {
        return Err(SimError::TooLarge(tuples));
    }
    Ok(enumerate_failure(n, f, b, r + 1))
}

/// Two sets: condition on h = |B1 ∩ F|; B2 must avoid the b−h honest
/// members of B1.
fn exact_pair_failure(n: u64, f: u64, b: u64) -> f64 {
    let total = choose(n, b);
    (0..=b.min(f))
        .map(|h| {
            let p_h = choose(f, h) * choose(n - f, b - h) / total;
            p_h * choose(n - (b - h), b) / total
        })
        .sum()
}

fn enumerate_failure(n: usize, f: usize, b: usize, sets: usize) -> f64 {
    let subsets = combinations(n, b);
    let honest: u64 = (f..n).fold(0, |m, i| m | 1 << i);

    // each new set's honest part must avoid the union of earlier honest parts
    fn count(subsets: &[u64], honest: u64, left: usize, used: u64) -> u64 {
        if left == 0 {
            return 1;
        }
        subsets
            .iter()
            .filter(|&&s| s & honest & used == 0)
            .map(|&s| count(subsets, honest, left - 1, used | (s & honest)))
            .sum()
    }

    let good = count(&subsets, honest, sets, 0);
    good as f64 / (subsets.len() as f64).powi(sets as i32)
}

fn combinations(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    fn rec(start: usize, n: usize, k: usize, mask: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(mask);
            return;
        }
        for i in start..=n.saturating_sub(k) {
            rec(i + 1, n, k - 1, mask | 1 << i, out);
        }
    }
    rec(0, n, k, 0, &mut out);
    out
}

/// Smallest uniform clerk-set size whose measured failure rate is at most
/// `threshold`, by binary search on b with common random numbers.
pub fn minimal_safe_b(config: &ExperimentConfig, threshold: f64) -> Result<usize, SimError> {
    let rate = |b: usize| -> Result<f64, SimError> { Ok(monte_carlo(&config.clone().with_b(b))?.rate) };
    let (mut lo, mut hi) = (1usize, config.n);
    if rate(lo)? <= threshold {
        return Ok(lo);
    }
    // invariant: rate(lo) > threshold, rate(hi) <= threshold (b = n always detects)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if rate(mid)? <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// SplitMix64 finaliser, used to derive per-row sweep seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for sweep row `row`: `seed ⊕ splitmix64(row)`.
pub fn row_seed(seed: u64, row: u64) -> u64 {
    seed ^ splitmix64(row)
}

/// Cartesian parameter grid for sweeps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepGrid {
    pub strategy: Vec<StrategyKind>,
    pub mode: Mode,
    pub n: Vec<usize>,
    pub f: Vec<usize>,
    pub d: Vec<usize>,
    pub r: Vec<usize>,
    pub secpar: Vec<u32>,
    pub b: Vec<SizeSpec>,
    pub beta: Vec<SizeSpec>,
    pub trials: u64,
    pub seed: u64,
    /// Also search for the smallest uniform b meeting `2^-κ`.
    pub search_min_b: bool,
}

impl SweepGrid {
    /// Distinct grid points in first-seen order.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let or_default = |v: &Vec<SizeSpec>| if v.is_empty() { vec![SizeSpec::FromTheorem] } else { v.clone() };
        let ds = if self.d.is_empty() { vec![0] } else { self.d.clone() };
        let (bs, betas) = (or_default(&self.b), or_default(&self.beta));
        let mut out: Vec<ExperimentConfig> = Vec::new();
        for &strategy in &self.strategy {
            for &n in &self.n {
                for &f in &self.f {
                    for &d in &ds {
                        for &r in &self.r {
                            for &secpar in &self.secpar {
                                for &b in &bs {
                                    for &beta in &betas {
                                        let mut c = ExperimentConfig::new(strategy, n, f, r, secpar)
                                            .with_d(d)
                                            .with_trials(self.trials)
                                            .with_mode(self.mode);
                                        c.b = b;
                                        c.beta = beta;
                                        if !out.contains(&c) {
                                            out.push(c);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, c) in out.iter_mut().enumerate() {
            c.seed = row_seed(self.seed, i as u64);
        }
        out
    }
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "row",
    "strategy",
    "mode",
    "n",
    "f",
    "d",
    "r",
    "secpar",
    "b",
    "beta",
    "trials",
    "seed",
    "failures",
    "rate",
    "ci_upper_95",
    "bound",
    "feasible",
    "min_safe_b",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub row: usize,
    pub strategy: StrategyKind,
    pub mode: Mode,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub r: usize,
    pub secpar: u32,
    pub b: Option<usize>,
    pub beta: Option<usize>,
    pub trials: u64,
    pub seed: u64,
    pub failures: Option<u64>,
    pub rate: Option<f64>,
    pub ci_upper_95: Option<f64>,
    pub bound: f64,
    pub feasible: Option<bool>,
    pub min_safe_b: Option<usize>,
    pub error: Option<String>,
}

pub fn run_sweep(grid: &SweepGrid) -> Vec<SweepRow> {
    grid.points()
        .into_iter()
        .enumerate()
        .map(|(row, c)| {
            let mut out = SweepRow {
                row,
                strategy: c.strategy,
                mode: c.mode,
                n: c.n,
                f: c.f,
                d: c.d,
                r: c.r,
                secpar: c.secpar,
                b: None,
                beta: None,
                trials: c.trials,
                seed: c.seed,
                failures: None,
                rate: None,
                ci_upper_95: None,
                bound: 2f64.powi(-(c.secpar as i32)),
                feasible: None,
                min_safe_b: None,
                error: None,
            };
            match monte_carlo(&c) {
                Ok(res) => {
                    out.b = Some(res.b_used);
                    out.beta = res.beta_used;
                    out.failures = Some(res.failures);
                    out.rate = Some(res.rate);
                    out.ci_upper_95 = Some(res.ci_upper_95);
                    out.feasible = Some(res.feasible);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            if grid.search_min_b && c.strategy == StrategyKind::UniformRandom && out.error.is_none() {
                match minimal_safe_b(&c, out.bound) {
                    Ok(b) => out.min_safe_b = Some(b),
                    Err(e) => out.error = Some(e.to_string()),
                }
            }
            out
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Draws a fresh 64-bit seed; only used when the caller asks for one.
pub fn fresh_seed() -> u64 {
    rand::rngs::OsRng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, f: usize, r: usize, b: usize) -> ExperimentConfig {
        ExperimentConfig::new(StrategyKind::UniformRandom, n, f, r, 6).with_b(b)
    }

    /// Independent brute force: every tuple of b-subsets as Vec<usize>.
    fn brute_force(n: usize, f: usize, b: usize, sets: usize) -> f64 {
        fn subsets(n: usize, b: usize) -> Vec<Vec<usize>> {
            (0u32..1 << n)
                .filter(|m| m.count_ones() as usize == b)
                .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
                .collect()
        }
        let all = subsets(n, b);
        let mut idx = vec![0usize; sets];
        let (mut good, mut total) = (0u64, 0u64);
        loop {
            total += 1;
            let tuple: Vec<&Vec<usize>> = idx.iter().map(|&i| &all[i]).collect();
            let evaded =
                (0..sets).all(|i| (i + 1..sets).all(|j| tuple[i].iter().all(|x| !tuple[j].contains(x) || *x < f)));
            good += u64::from(evaded);
            let mut k = 0;
            loop {
                if k == sets {
                    return good as f64 / total as f64;
                }
                idx[k] += 1;
                if idx[k] < all.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn exact_spot_value() {
        let p = exact_failure_probability(&uniform(6, 0, 1, 2)).unwrap();
        assert!((p - 0.4).abs() < 1e-12);
    }

    #[test]
    fn exact_full_sets_never_fail() {
        for f in 0..4 {
            assert_eq!(exact_failure_probability(&uniform(5, f, 1, 5)).unwrap(), 0.0);
            assert_eq!(exact_failure_probability(&uniform(5, f, 2, 5)).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_n8_b2_spender_only() {
        // all C(8,2)^2 pairs; evaded iff intersection within {node 0}
        let mut good = 0;
        let pairs: Vec<(usize, usize)> = (0..8).flat_map(|a| (a + 1..8).map(move |b| (a, b))).collect();
        for p in &pairs {
            for q in &pairs {
                let common: Vec<usize> = [p.0, p.1].into_iter().filter(|x| *x == q.0 || *x == q.1).collect();
                good += usize::from(common.iter().all(|&x| x == 0));
            }
        }
        let oracle = good as f64 / (pairs.len() * pairs.len()) as f64;
        let p = exact_failure_probability(&uniform(8, 1, 1, 2)).unwrap();
        assert!((p - oracle).abs() < 1e-12, "{p} vs {oracle}");
    }

    #[test]
    fn closed_form_and_enumeration_agree_with_brute_force() {
        for n in 3..=6 {
            for b in 1..=3.min(n) {
                for f in 0..=2.min(n - 1) {
                    let bf2 = brute_force(n, f, b, 2);
                    assert!((exact_pair_failure(n as u64, f as u64, b as u64) - bf2).abs() < 1e-12);
                    assert!((enumerate_failure(n, f, b, 2) - bf2).abs() < 1e-12);
                    let bf3 = brute_force(n, f, b, 3);
                    let e3 = exact_failure_probability(&uniform(n, f, 2, b)).unwrap();
                    assert!((e3 - bf3).abs() < 1e-12, "n={n} b={b} f={f}");
                }
            }
        }
    }

    #[test]
    fn exact_refuses_large_instances() {
        let err = exact_failure_probability(&uniform(40, 0, 3, 10)).unwrap_err();
        assert!(matches!(err, SimError::TooLarge(_)));
        let mut c = uniform(6, 0, 1, 2);
        c.strategy = StrategyKind::CoinSpace;
        assert!(matches!(exact_failure_probability(&c), Err(SimError::Unsupported(_))));
    }

    #[test]
    fn combinatorial_rate_matches_closed_form() {
        let c = uniform(6, 0, 1, 2).with_trials(100_000).with_seed(4);
        let res = monte_carlo(&c).unwrap();
        let sigma = (0.4f64 * 0.6 / 100_000.0).sqrt();
        assert!((res.rate - 0.4).abs() < 4.0 * sigma, "{}", res.rate);
        assert!(res.rate <= res.ci_upper_95 && res.ci_upper_95 <= 1.0);
    }

    #[test]
    fn deterministic_for_same_seed() {
        let c = uniform(30, 5, 2, 5).with_trials(5_000).with_seed(77);
        let a = monte_carlo(&c).unwrap();
        let b = monte_carlo(&c).unwrap();
        assert_eq!((a.failures, a.rate, a.ci_upper_95), (b.failures, b.rate, b.ci_upper_95));
        let other = monte_carlo(&c.clone().with_seed(78)).unwrap();
        assert_eq!(other.trials, a.trials);
    }

    #[test]
    fn single_trial_rate_is_zero_or_one() {
        let res = monte_carlo(&uniform(10, 2, 1, 3).with_trials(1)).unwrap();
        assert!(res.rate == 0.0 || res.rate == 1.0);
    }

    #[test]
    fn fixed_strategy_always_detects() {
        let c = ExperimentConfig::new(StrategyKind::Fixed, 36, 2, 2, 6).with_trials(500).with_mode(Mode::Protocol);
        let res = monte_carlo(&c).unwrap();
        assert_eq!(res.failures, 0);
        assert_eq!(res.theorem, Some(Theorem::T1));
    }

    #[test]
    fn full_population_sets_always_detect() {
        let res = monte_carlo(&uniform(12, 5, 3, 12).with_trials(500)).unwrap();
        assert_eq!(res.failures, 0);
    }

    #[test]
    fn sizes_resolved_from_bounds() {
        let e = Experiment::new(ExperimentConfig::new(StrategyKind::UniformRandom, 512, 256, 1, 6)).unwrap();
        assert_eq!((e.b, e.theorem), (66, Some(Theorem::T2)));
        let e = Experiment::new(ExperimentConfig::new(StrategyKind::UniformRandom, 100, 1, 10, 8)).unwrap();
        assert_eq!((e.b, e.theorem), (6, Some(Theorem::T3)));
        let e = Experiment::new(ExperimentConfig::new(StrategyKind::UniformRandom, 512, 128, 4, 8)).unwrap();
        assert_eq!((e.b, e.theorem), (31, Some(Theorem::T4)));
        let e = Experiment::new(ExperimentConfig::new(StrategyKind::CoinSpace, 1000, 100, 8, 6).with_d(10)).unwrap();
        assert_eq!((e.beta, e.b, e.theorem), (Some(12), 11, Some(Theorem::T6)));
        let e = Experiment::new(ExperimentConfig::new(StrategyKind::CoinSpace, 1000, 100, 1, 6)).unwrap();
        assert_eq!((e.beta, e.b, e.theorem), (Some(2), 2, Some(Theorem::T5)));
    }

    #[test]
    fn config_errors() {
        assert!(monte_carlo(&uniform(10, 2, 1, 3).with_trials(0)).is_err());
        assert!(monte_carlo(&uniform(10, 2, 1, 11)).is_err());
        assert!(monte_carlo(&uniform(10, 10, 1, 3)).is_err());
        assert!(monte_carlo(&ExperimentConfig::new(StrategyKind::Fixed, 2, 1, 1, 6)).is_err());
        // not enough honest receivers
        assert!(monte_carlo(&uniform(5, 3, 2, 2)).is_err());
    }

    #[test]
    fn sweep_dedups_and_seeds_rows() {
        let grid = SweepGrid {
            strategy: vec![StrategyKind::UniformRandom],
            n: vec![20, 20],
            f: vec![2],
            r: vec![1, 2, 1],
            secpar: vec![4],
            b: vec![SizeSpec::Explicit(4)],
            trials: 100,
            seed: 9,
            ..Default::default()
        };
        let pts = grid.points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].seed, 9 ^ splitmix64(1));
        let empty = SweepGrid { strategy: vec![StrategyKind::Fixed], ..Default::default() };
        assert!(empty.points().is_empty());
        let mut buf = Vec::new();
        write_sweep_csv(&run_sweep(&empty), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), SWEEP_COLUMNS.join(","));
    }

    #[test]
    fn size_spec_serde() {
        assert_eq!(serde_json::to_string(&SizeSpec::Explicit(5)).unwrap(), "5");
        assert_eq!(serde_json::from_str::<SizeSpec>("\"from-theorem\"").unwrap(), SizeSpec::FromTheorem);
        assert_eq!("theorem".parse::<SizeSpec>().unwrap(), SizeSpec::FromTheorem);
    }
}
