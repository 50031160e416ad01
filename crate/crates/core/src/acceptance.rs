//! The acceptance suite, shared by `distbank verify` and the `acceptance`
//! test target. Each criterion returns a report instead of panicking so the
//! CLI can print every line before choosing an exit code.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::BoundCalculator;
use crate::coin::{make_genesis_coin, Coin, CoinId, NodeId, Nonce};
use crate::protocol::{run_spend, ClerkPolicy, DbMode, Network};
use crate::sim::{exact_failure_probability, minimal_safe_b, Experiment, ExperimentConfig, Mode, StrategyKind};
use crate::strategies::build_fixed_assignment;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Run with a tenth of the trials.
    pub quick: bool,
    pub calculator: BoundCalculator,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { quick: false, calculator: BoundCalculator::default(), seed: 1 }
    }
}

impl VerifyOptions {
    fn trials(&self, full: u64) -> u64 {
        if self.quick {
            full / 10
        } else {
            full
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub wall_time: f64,
}

impl std::fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} [{}] {} ({:.1}s): {}", self.id, self.name, self.wall_time, self.detail)
    }
}

fn report(id: u8, name: &'static str, start: Instant, result: Result<(bool, String), String>) -> CriterionReport {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionReport { id, name, passed, detail, wall_time: start.elapsed().as_secs_f64() }
}

pub const CRITERIA: &[(u8, &str)] = &[
    (1, "fixed assignment prevents double spending"),
    (2, "uniform sets, single double spend"),
    (3, "uniform sets, r double spends, lone dishonest spender"),
    (4, "uniform sets, r double spends, f dishonest"),
    (5, "coin-specific clerk spaces"),
    (6, "monte carlo agrees with exact enumeration"),
    (7, "protocol and combinatorial outcomes agree"),
    (8, "compacted clerk databases decide identically"),
];

fn name(id: u8) -> &'static str {
    CRITERIA[id as usize - 1].1
}

pub fn run_criterion(id: u8, opts: &VerifyOptions) -> Option<CriterionReport> {
    let start = Instant::now();
    let result = match id {
        1 => fixed_prevention(opts),
        2 => uniform_single(opts),
        3 => uniform_multi_f1(opts),
        4 => uniform_multi(opts),
        5 => coin_spaces(opts),
        6 => oracle_equivalence(opts),
        7 => mode_bridge(opts),
        8 => compaction_equivalence(opts),
        _ => return None,
    };
    Some(report(id, name(id), start, result))
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|&(id, _)| run_criterion(id, opts)).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn fixed_prevention(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [16, 64, 144] {
        for f in [0, 3] {
            let check = build_fixed_assignment(n, f).map_err(err)?.check();
            let cfg = ExperimentConfig::new(StrategyKind::Fixed, n, f, 2, 6)
                .with_mode(Mode::Protocol)
                .with_trials(opts.trials(10_000))
                .with_seed(opts.seed);
            let res = Experiment::with_calculator(cfg, &opts.calculator).map_err(err)?.run().map_err(err)?;
            ok &= check.ok() && res.failures == 0;
            parts.push(format!(
                "n={n} f={f}: min|Bi∩Bj|={} max|Bi|={}<={} evaded {}/{}",
                check.min_intersection, check.max_set_size, check.size_limit, res.failures, res.trials
            ));
        }
    }
    Ok((ok, parts.join("; ")))
}

/// Runs a from-bound experiment and checks `b`, rate and the interval.
fn bound_check(
    opts: &VerifyOptions,
    cfg: ExperimentConfig,
    expected_b: usize,
    ci_limit: f64,
) -> Result<(bool, String), String> {
    let secpar = cfg.secpar;
    let exp = Experiment::with_calculator(cfg, &opts.calculator).map_err(err)?;
    let res = exp.run().map_err(err)?;
    let bound = 2f64.powi(-(secpar as i32));
    let ok = exp.b == expected_b && res.rate <= bound && res.ci_upper_95 <= ci_limit;
    Ok((
        ok,
        format!(
            "b={} (expected {expected_b}) rate={:.6} ci95={:.6} bound={bound:.6} trials={}",
            exp.b, res.rate, res.ci_upper_95, res.trials
        ),
    ))
}

fn uniform_single(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let cfg = ExperimentConfig::new(StrategyKind::UniformRandom, 512, 256, 1, 6)
        .with_trials(opts.trials(200_000))
        .with_seed(opts.seed);
    bound_check(opts, cfg, 66, 2f64.powi(-5))
}

fn uniform_multi_f1(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let cfg = ExperimentConfig::new(StrategyKind::UniformRandom, 100, 1, 10, 8)
        .with_trials(opts.trials(100_000))
        .with_seed(opts.seed);
    bound_check(opts, cfg, 6, 2f64.powi(-7))
}

fn uniform_multi(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let cfg = ExperimentConfig::new(StrategyKind::UniformRandom, 512, 128, 4, 8)
        .with_trials(opts.trials(100_000))
        .with_seed(opts.seed);
    let (ok, detail) = bound_check(opts, cfg, 31, 2f64.powi(-7))?;
    let mut safe = Vec::new();
    for r in [1, 2, 4, 8] {
        let c = ExperimentConfig::new(StrategyKind::UniformRandom, 512, 128, r, 8)
            .with_trials(opts.trials(20_000))
            .with_seed(opts.seed);
        safe.push(minimal_safe_b(&c, 2f64.powi(-8)).map_err(err)?);
    }
    let decreasing = safe.windows(2).all(|w| w[1] < w[0]);
    let slope = log_log_slope(&[1.0, 2.0, 4.0, 8.0], &safe.iter().map(|&b| b as f64).collect::<Vec<_>>());
    Ok((ok && decreasing, format!("{detail}; minimal safe b at r=1,2,4,8: {safe:?}, log-log slope {slope:.2}")))
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn coin_spaces(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [0, 10] {
        let cfg = ExperimentConfig::new(StrategyKind::CoinSpace, 1000, 100, 8, 6)
            .with_d(d)
            .with_trials(opts.trials(100_000))
            .with_seed(opts.seed);
        let exp = Experiment::with_calculator(cfg, &opts.calculator).map_err(err)?;
        let res = exp.run().map_err(err)?;
        ok &= res.rate <= res.bound;
        parts.push(format!(
            "d={d}: beta={} b={} rate={:.6} ci95={:.6} bound={:.6}",
            exp.beta.unwrap_or(0),
            exp.b,
            res.rate,
            res.ci_upper_95,
            res.bound
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn oracle_equivalence(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let trials = opts.trials(100_000);
    let spot = exact_failure_probability(&ExperimentConfig::new(StrategyKind::UniformRandom, 6, 0, 1, 6).with_b(2))
        .map_err(err)?;
    let mut ok = (spot - 0.4).abs() < 1e-12;
    let (mut checked, mut worst, mut bad) = (0, 0.0f64, Vec::new());
    for n in 3..=8usize {
        for b in 1..=3.min(n) {
            for r in 1..=2usize {
                for f in 0..=2usize {
                    // the spender is never a receiver, even when f = 0
                    if n < f.max(1) + r + 1 {
                        continue;
                    }
                    let cfg = ExperimentConfig::new(StrategyKind::UniformRandom, n, f, r, 6)
                        .with_b(b)
                        .with_trials(trials)
                        .with_seed(opts.seed ^ (n * 1000 + b * 100 + r * 10 + f) as u64);
                    let p = exact_failure_probability(&cfg).map_err(err)?;
                    let res = Experiment::new(cfg).map_err(err)?.run().map_err(err)?;
                    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
                    let dev = (res.rate - p).abs();
                    let pass = if sigma == 0.0 { dev == 0.0 } else { dev <= 4.0 * sigma };
                    if sigma > 0.0 {
                        worst = worst.max(dev / sigma);
                    }
                    if !pass {
                        bad.push(format!("n={n} b={b} r={r} f={f}: exact={p:.5} mc={:.5}", res.rate));
                    }
                    ok &= pass;
                    checked += 1;
                }
            }
        }
    }
    let mut detail = format!("spot n=6 b=2 f=0 r=1 exact={spot}; {checked} configs, worst deviation {worst:.2} sigma");
    if !bad.is_empty() {
        detail.push_str(&format!("; outside 4 sigma: {}", bad.join(", ")));
    }
    Ok((ok, detail))
}

fn mode_bridge(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let configs = [
        ExperimentConfig::new(StrategyKind::UniformRandom, 16, 3, 2, 6).with_b(4),
        ExperimentConfig::new(StrategyKind::UniformRandom, 32, 8, 1, 6).with_b(6),
        ExperimentConfig::new(StrategyKind::UniformRandom, 12, 0, 3, 6).with_b(3),
        ExperimentConfig::new(StrategyKind::CoinSpace, 32, 6, 2, 6).with_d(2).with_beta(10).with_b(6),
        ExperimentConfig::new(StrategyKind::CoinSpace, 24, 4, 1, 6).with_d(4).with_beta(6),
        ExperimentConfig::new(StrategyKind::Fixed, 16, 1, 2, 6),
        ExperimentConfig::new(StrategyKind::Fixed, 30, 2, 3, 6),
    ];
    let seeds = opts.trials(1_000);
    let (mut mismatches, mut runs, mut evaded) = (0u64, 0u64, 0u64);
    for (i, base) in configs.iter().enumerate() {
        for s in 0..seeds {
            let seed = opts.seed.wrapping_add(s).wrapping_mul(0x9e37_79b9) ^ i as u64;
            let comb = Experiment::new(base.clone().with_seed(seed)).map_err(err)?;
            let prot = Experiment::new(base.clone().with_seed(seed).with_mode(Mode::Protocol)).map_err(err)?;
            let a = comb.run_trial(0).map_err(err)?;
            let b = prot.run_trial(0).map_err(err)?;
            mismatches += u64::from(a != b);
            evaded += u64::from(a);
            runs += 1;
        }
    }
    let (pairs, property_failures) = exhaustive_pair_check(3..=10);
    let ok = mismatches == 0 && property_failures == 0;
    Ok((
        ok,
        format!(
            "{runs} seeded trials, {mismatches} mismatches ({evaded} evasions); \
             {pairs} exhaustive two-receiver cases, {property_failures} wrong decisions"
        ),
    ))
}

/// Spender 0 pays receivers 1 and 2 from the same coin state. For every
/// dishonest set F ∋ 0 and every shared clerk set I over the other nodes,
/// with B1 = I ∪ {1} and B2 = I ∪ {2}: the first spend is accepted, and
/// the second is accepted iff I has no honest member.
/// Returns (cases, wrong decisions).
pub fn exhaustive_pair_check(ns: impl IntoIterator<Item = usize>) -> (u64, u64) {
    let (mut cases, mut wrong) = (0, 0);
    for n in ns {
        let others: Vec<usize> = (3..n).collect();
        for fmask in 0u32..1 << others.len() {
            let mut dishonest = vec![false; n];
            dishonest[0] = true;
            for (bit, &node) in others.iter().enumerate() {
                dishonest[node] = fmask >> bit & 1 == 1;
            }
            let honesty = |x: NodeId| !dishonest[x.index()];
            let shared: Vec<usize> = std::iter::once(0).chain(others.iter().copied()).collect();
            for imask in 0u32..1 << shared.len() {
                let common: Vec<NodeId> =
                    (0..shared.len()).filter(|b| imask >> b & 1 == 1).map(|b| NodeId::from(shared[b])).collect();
                let set_for = |r: u32| {
                    let mut s = common.clone();
                    s.push(NodeId(r));
                    s.sort_unstable();
                    s
                };
                let net = Network::new(n, n as u64, DbMode::Full, ClerkPolicy::Both);
                let coin = make_genesis_coin(CoinId::derive(&imask.to_be_bytes()), NodeId(0));
                let first = run_spend(&net, &honesty, NodeId(0), NodeId(1), &coin, &set_for(1), Nonce::new(1));
                let second = run_spend(&net, &honesty, NodeId(0), NodeId(2), &coin, &set_for(2), Nonce::new(2));
                let expect_second = common.iter().all(|&c| dishonest[c.index()]);
                let right = match (first, second) {
                    (Ok(a), Ok(b)) => a.decision.is_accepted() && b.decision.is_accepted() == expect_second,
                    _ => false,
                };
                cases += 1;
                wrong += u64::from(!right);
            }
        }
    }
    (cases, wrong)
}

fn compaction_equivalence(opts: &VerifyOptions) -> Result<(bool, String), String> {
    let runs = opts.trials(1_000);
    let mut spends = 0;
    let mut differing = 0;
    for run in 0..runs {
        let (s, d) = compaction_scenario(opts.seed, run);
        spends += s;
        differing += d;
    }
    Ok((differing == 0, format!("{runs} runs, {spends} spends, {differing} differing decisions")))
}

/// One random spend sequence replayed against a full database, a compacted
/// one, and a full one compacted partway through. Returns (spends, spends
/// whose three decisions were not all equal).
pub fn compaction_scenario(seed: u64, run: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    let n = rng.gen_range(4..=12);
    let dishonest: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.25)).collect();
    let honesty = |x: NodeId| !dishonest[x.index()];
    let policy = *[ClerkPolicy::Both, ClerkPolicy::SuppressReply, ClerkPolicy::SkipStore].choose(&mut rng).unwrap();
    let key_seed = rng.gen();
    let full = Network::new(n, key_seed, DbMode::Full, policy);
    let compacted = Network::new(n, key_seed, DbMode::Compacted, policy);
    let mut switched = Network::new(n, key_seed, DbMode::Full, policy);
    let steps = rng.gen_range(4..=24u64);
    let switch_at = rng.gen_range(0..steps);
    let mut states: Vec<Coin> = (0..rng.gen_range(1..=3u32))
        .map(|i| {
            make_genesis_coin(
                CoinId::derive(&[run.to_be_bytes(), u64::from(i).to_be_bytes()].concat()),
                NodeId::from(rng.gen_range(0..n)),
            )
        })
        .collect();
    let mut differing = 0;
    for step in 0..steps {
        if step == switch_at {
            switched.dbs = switched.dbs.iter().map(|db| db.compact()).collect();
        }
        let coin = states.choose(&mut rng).unwrap().clone();
        let sender = coin.owner();
        let mut receiver = NodeId::from(rng.gen_range(0..n - 1));
        if receiver >= sender {
            receiver = NodeId(receiver.0 + 1);
        }
        let size = rng.gen_range(1..=n);
        let mut set: Vec<NodeId> = rand::seq::index::sample(&mut rng, n, size).into_iter().map(NodeId::from).collect();
        set.sort_unstable();
        let nonce = Nonce::generate(&mut rng);
        let decide =
            |net: &Network| run_spend(net, &honesty, sender, receiver, &coin, &set, nonce).expect("valid spend inputs");
        let (a, b, c) = (decide(&full), decide(&compacted), decide(&switched));
        let same = a.decision.is_accepted() == b.decision.is_accepted()
            && a.decision.is_accepted() == c.decision.is_accepted();
        differing += u64::from(!same);
        if a.decision.is_accepted() {
            states.push(a.coin_after);
        }
    }
    (steps, differing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_check_small() {
        let (cases, wrong) = exhaustive_pair_check(3..=5);
        assert_eq!(cases, 2 + 4 * 2 + 8 * 4);
        assert_eq!(wrong, 0);
    }

    #[test]
    fn compaction_scenarios_agree() {
        for run in 0..50 {
            assert_eq!(compaction_scenario(3, run).1, 0);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 60.0 / v).collect();
        assert!((log_log_slope(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(9, &VerifyOptions::default()).is_none());
    }

    #[test]
    fn report_line_format() {
        let r = CriterionReport { id: 2, name: "x", passed: false, detail: "d".into(), wall_time: 0.25 };
        assert_eq!(r.to_string(), "FAIL [2] x (0.2s): d");
    }
}
