//! Node population and the double-spending adversary.
//!
//! `f` nodes are dishonest. `f − d` of them get random positions when they
//! join; the remaining `d` are corrupted later by the adversary, which by
//! then knows the node ids and so can aim at a particular clerk space. The
//! double spender itself is one of the dishonest nodes, unless `f = 0`: then
//! the spender only misbehaves by spending twice and acts honestly as a clerk.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coin::{make_genesis_coin, CoinId, NodeId, Nonce};
use crate::error::AdversaryError;
use crate::protocol::{run_spend, Honesty, Network, SpendTranscript};
use crate::strategies::sorted_intersection_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Honest,
    DishonestRandom,
    DishonestAdaptive,
}

impl NodeRole {
    pub fn is_honest(self) -> bool {
        self == NodeRole::Honest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpenderRule {
    #[default]
    Random,
    Fixed(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub roles: Vec<NodeRole>,
    pub spender: NodeId,
    /// Adaptive corruptions still available.
    pub adaptive_budget: usize,
    adaptive_used: bool,
}

impl Honesty for Population {
    fn is_honest(&self, node: NodeId) -> bool {
        self.roles[node.index()].is_honest()
    }
}

impl Population {
    pub fn dishonest_count(&self) -> usize {
        self.roles.iter().filter(|r| !r.is_honest()).count()
    }

    pub fn adaptive_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == NodeRole::DishonestAdaptive).count()
    }

    pub fn honest_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.roles.iter().enumerate().filter(|(_, r)| r.is_honest()).map(|(i, _)| NodeId::from(i))
    }

    pub fn dishonest_mask(&self) -> Vec<bool> {
        self.roles.iter().map(|r| !r.is_honest()).collect()
    }

    /// Corrupts up to the remaining budget of honest nodes from `targets`,
    /// lowest id first. Returns the nodes corrupted. May be called once.
    pub fn corrupt_adaptively(&mut self, targets: &[NodeId]) -> Result<Vec<NodeId>, AdversaryError> {
        if self.adaptive_used && self.d > 0 {
            return Err(AdversaryError::BudgetExceeded);
        }
        self.adaptive_used = true;
        let mut honest: Vec<NodeId> =
            targets.iter().copied().filter(|t| t.index() < self.n && self.roles[t.index()].is_honest()).collect();
        honest.sort_unstable();
        honest.dedup();
        honest.truncate(self.adaptive_budget);
        for t in &honest {
            self.roles[t.index()] = NodeRole::DishonestAdaptive;
        }
        self.adaptive_budget -= honest.len();
        Ok(honest)
    }
}

/// Places the spender and the `f − d` randomly joining dishonest nodes.
pub fn sample_population<R: Rng + ?Sized>(
    n: usize,
    f: usize,
    d: usize,
    spender_rule: SpenderRule,
    rng: &mut R,
) -> Result<Population, AdversaryError> {
    if n == 0 || f >= n || d > f {
        return Err(AdversaryError::Parameters(format!("need d <= f < n, got n={n} f={f} d={d}")));
    }
    let spender = match spender_rule {
        SpenderRule::Random => NodeId::from(rng.gen_range(0..n)),
        SpenderRule::Fixed(s) if s.index() < n => s,
        SpenderRule::Fixed(s) => {
            return Err(AdversaryError::Parameters(format!("spender {s} outside population of {n}")))
        }
    };
    let mut roles = vec![NodeRole::Honest; n];
    let mut budget = d;
    let mut random_left = f - d;
    if f > 0 {
        if random_left > 0 {
            roles[spender.index()] = NodeRole::DishonestRandom;
            random_left -= 1;
        } else {
            roles[spender.index()] = NodeRole::DishonestAdaptive;
            budget -= 1;
        }
    }
    // uniform among the n−1 other nodes
    for i in index::sample(rng, n - 1, random_left) {
        let node = if i >= spender.index() { i + 1 } else { i };
        roles[node] = NodeRole::DishonestRandom;
    }
    Ok(Population { n, f, d, roles, spender, adaptive_budget: budget, adaptive_used: false })
}

/// The spender's plan: spend one coin state to each receiver in turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub receivers: Vec<NodeId>,
}

impl AttackPlan {
    /// Number of double spends; one less than the number of receivers.
    pub fn r(&self) -> usize {
        self.receivers.len().saturating_sub(1)
    }

    pub fn validate(&self, pop: &Population) -> Result<(), AdversaryError> {
        if self.receivers.len() < 2 {
            return Err(AdversaryError::Parameters("an attack needs at least two receivers".into()));
        }
        let mut seen = self.receivers.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.receivers.len() {
            return Err(AdversaryError::Parameters("receivers must be distinct".into()));
        }
        for &r in &self.receivers {
            if r.index() >= pop.n || r == pop.spender || !pop.is_honest(r) {
                return Err(AdversaryError::Parameters(format!("receiver {r} is not an honest non-spender")));
            }
        }
        Ok(())
    }
}

/// `r + 1` distinct honest receivers other than the spender, uniformly.
pub fn choose_receivers<R: Rng + ?Sized>(
    pop: &Population,
    r: usize,
    rng: &mut R,
) -> Result<AttackPlan, AdversaryError> {
    let pool: Vec<NodeId> = pop.honest_nodes().filter(|&x| x != pop.spender).collect();
    let needed = r + 1;
    if pool.len() < needed {
        return Err(AdversaryError::NotEnoughReceivers { needed, available: pool.len() });
    }
    let receivers = index::sample(rng, pool.len(), needed).into_iter().map(|i| pool[i]).collect();
    Ok(AttackPlan { receivers })
}

/// The adversary escapes iff no pairwise intersection of the clerk sets
/// holds an honest node.
pub fn evades_detection(sets: &[Vec<NodeId>], dishonest: &[bool]) -> bool {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if has_honest_common(a, b, dishonest) {
                return false;
            }
        }
    }
    true
}

fn has_honest_common(a: &[NodeId], b: &[NodeId], dishonest: &[bool]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if !dishonest[a[i].index()] {
                    return true;
                }
                i += 1;
                j += 1;
            }
        }
    }
    false
}

/// Nodes in some pairwise intersection of the given sets.
pub fn pairwise_intersections(sets: &[Vec<NodeId>]) -> Vec<NodeId> {
    let mut out = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if sorted_intersection_len(a, b) > 0 {
                out.extend(a.iter().filter(|x| b.binary_search(x).is_ok()));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub transcripts: Vec<SpendTranscript>,
    /// Every spend was accepted.
    pub succeeded: bool,
}

/// Runs the protocol for each planned spend of a fresh coin owned by the
/// spender. `clerk_sets[i]` is the clerk set used by receiver `i`.
pub fn execute_attack<R: Rng + ?Sized>(
    pop: &Population,
    plan: &AttackPlan,
    clerk_sets: &[Vec<NodeId>],
    cid: CoinId,
    net: &Network,
    nonce_rng: &mut R,
) -> Result<AttackOutcome, AdversaryError> {
    plan.validate(pop)?;
    if clerk_sets.len() != plan.receivers.len() {
        return Err(AdversaryError::Parameters(format!(
            "{} clerk sets for {} receivers",
            clerk_sets.len(),
            plan.receivers.len()
        )));
    }
    let coin = make_genesis_coin(cid, pop.spender);
    let mut transcripts = Vec::with_capacity(plan.receivers.len());
    for (&receiver, set) in plan.receivers.iter().zip(clerk_sets) {
        let nonce = Nonce::generate(nonce_rng);
        transcripts.push(run_spend(net, pop, pop.spender, receiver, &coin, set, nonce)?);
    }
    let succeeded = transcripts.iter().all(|t| t.decision.is_accepted());
    Ok(AttackOutcome { transcripts, succeeded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ClerkPolicy, DbMode};
    use crate::strategies::{build_coin_space, SpaceHash};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn single_dishonest_is_spender() {
        let pop = sample_population(10, 1, 0, SpenderRule::Random, &mut rng(1)).unwrap();
        assert_eq!(pop.dishonest_count(), 1);
        assert!(!pop.is_honest(pop.spender));
    }

    #[test]
    fn one_honest_node() {
        let pop = sample_population(10, 9, 0, SpenderRule::Random, &mut rng(2)).unwrap();
        assert_eq!(pop.honest_nodes().count(), 1);
    }

    #[test]
    fn f_zero_spender_is_honest_clerk() {
        let pop = sample_population(5, 0, 0, SpenderRule::Fixed(NodeId(2)), &mut rng(3)).unwrap();
        assert_eq!(pop.dishonest_count(), 0);
        assert_eq!(pop.spender, NodeId(2));
    }

    #[test]
    fn parameter_errors() {
        assert!(sample_population(5, 5, 0, SpenderRule::Random, &mut rng(0)).is_err());
        assert!(sample_population(5, 2, 3, SpenderRule::Random, &mut rng(0)).is_err());
        assert!(sample_population(5, 2, 0, SpenderRule::Fixed(NodeId(9)), &mut rng(0)).is_err());
    }

    #[test]
    fn node_zero_dishonest_frequency() {
        let (n, f, d, runs) = (20, 6, 2, 40_000);
        let mut hits = 0;
        for s in 0..runs {
            let pop = sample_population(n, f, d, SpenderRule::Random, &mut rng(s)).unwrap();
            assert_eq!(pop.dishonest_count(), f - d);
            assert_eq!(pop.adaptive_budget, d);
            hits += usize::from(!pop.is_honest(NodeId(0)));
        }
        let p = (f - d) as f64 / n as f64;
        let sigma = (p * (1.0 - p) / runs as f64).sqrt();
        assert!((hits as f64 / runs as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn adaptive_corruption() {
        let mut pop = sample_population(20, 4, 0, SpenderRule::Fixed(NodeId(0)), &mut rng(5)).unwrap();
        let before = pop.clone();
        assert!(pop.corrupt_adaptively(&ids(&[1, 2, 3])).unwrap().is_empty());
        assert_eq!(pop.roles, before.roles);

        let mut pop = sample_population(20, 4, 2, SpenderRule::Fixed(NodeId(0)), &mut rng(5)).unwrap();
        let dishonest: Vec<NodeId> = (0..20).map(NodeId::from).filter(|&x| !pop.is_honest(x)).collect();
        let before = pop.roles.clone();
        assert!(pop.corrupt_adaptively(&dishonest).unwrap().is_empty());
        assert_eq!(pop.roles, before);
        assert_eq!(pop.corrupt_adaptively(&[]), Err(AdversaryError::BudgetExceeded));
    }

    #[test]
    fn adaptive_prefers_lowest_honest_and_respects_f() {
        let mut pop = sample_population(30, 5, 3, SpenderRule::Fixed(NodeId(29)), &mut rng(8)).unwrap();
        let targets: Vec<NodeId> = (0..30).rev().map(NodeId::from).collect();
        let got = pop.corrupt_adaptively(&targets).unwrap();
        let expected: Vec<NodeId> =
            (0..30).map(NodeId::from).filter(|x| before_honest(&pop, *x, &got)).take(3).collect();
        assert_eq!(got, expected);
        assert_eq!(pop.dishonest_count(), 5);
        assert_eq!(pop.adaptive_count(), 3);
    }

    fn before_honest(pop: &Population, x: NodeId, corrupted: &[NodeId]) -> bool {
        pop.is_honest(x) || corrupted.contains(&x)
    }

    #[test]
    fn adaptive_fills_coin_space() {
        // space of 6 members, d large enough to take every honest member
        let space = build_coin_space(CoinId::derive(b"space"), 100, 6, SpaceHash::Sha256).unwrap();
        let mut pop = sample_population(100, 10, 6, SpenderRule::Random, &mut rng(11)).unwrap();
        pop.corrupt_adaptively(&space.members).unwrap();
        assert!(space.members.iter().all(|m| !pop.is_honest(*m)));
        assert!(pop.dishonest_count() <= 10);
    }

    #[test]
    fn full_clerk_sets_always_detect() {
        let n = 8;
        let all: Vec<NodeId> = (0..n).map(NodeId::from).collect();
        for seed in 0..50 {
            let mut r = rng(seed);
            let pop = sample_population(n, 3, 0, SpenderRule::Random, &mut r).unwrap();
            let plan = choose_receivers(&pop, 1, &mut r).unwrap();
            let net = Network::new(n, seed, DbMode::Full, ClerkPolicy::Both);
            let out =
                execute_attack(&pop, &plan, &[all.clone(), all.clone()], CoinId::derive(b"c"), &net, &mut r).unwrap();
            assert!(!out.succeeded);
            assert!(out.transcripts[0].decision.is_accepted());
            assert!(!out.transcripts[1].decision.is_accepted());
        }
    }

    #[test]
    fn all_dishonest_shared_clerks_both_accepted() {
        // two honest receivers need n - f >= 2, so n=4 allows f=2: spender 0
        // plus node 1 corrupted, sharing clerks {0,1}
        let mut pop = sample_population(4, 2, 1, SpenderRule::Fixed(NodeId(0)), &mut rng(0)).unwrap();
        assert_eq!(pop.corrupt_adaptively(&ids(&[1])).unwrap(), ids(&[1]));
        let plan = AttackPlan { receivers: ids(&[2, 3]) };
        let sets = vec![ids(&[0, 1]), ids(&[0, 1, 2])];
        assert!(evades_detection(&sets, &pop.dishonest_mask()));
        let net = Network::new(4, 0, DbMode::Full, ClerkPolicy::Both);
        let out = execute_attack(&pop, &plan, &sets, CoinId::derive(b"d"), &net, &mut rng(1)).unwrap();
        assert!(out.succeeded);
    }

    #[test]
    fn attack_plan_validation() {
        let pop = sample_population(6, 1, 0, SpenderRule::Fixed(NodeId(0)), &mut rng(0)).unwrap();
        assert!(AttackPlan { receivers: ids(&[1]) }.validate(&pop).is_err());
        assert!(AttackPlan { receivers: ids(&[1, 1]) }.validate(&pop).is_err());
        assert!(AttackPlan { receivers: ids(&[0, 1]) }.validate(&pop).is_err());
        assert!(AttackPlan { receivers: ids(&[1, 2]) }.validate(&pop).is_ok());
        assert!(matches!(
            choose_receivers(&pop, 5, &mut rng(0)),
            Err(AdversaryError::NotEnoughReceivers { needed: 6, available: 5 })
        ));
    }

    #[test]
    fn spender_only_predicate() {
        // f = 1: failure iff pairwise intersections are within {spender}
        let mask = {
            let mut m = vec![false; 6];
            m[0] = true;
            m
        };
        assert!(evades_detection(&[ids(&[0, 1]), ids(&[0, 2])], &mask));
        assert!(!evades_detection(&[ids(&[0, 1]), ids(&[1, 2])], &mask));
        assert!(evades_detection(&[ids(&[1, 2]), ids(&[3, 4]), ids(&[0, 5])], &mask));
        assert_eq!(pairwise_intersections(&[ids(&[0, 1, 2]), ids(&[1, 2, 3]), ids(&[3, 5])]), ids(&[1, 2, 3]));
    }
}
