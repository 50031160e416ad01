//! Spend and detection protocol.
//!
//! The receiver challenges the sender with a nonce, checks the signed coin it
//! gets back, and queries every clerk in its clerk set. Each clerk returns
//! the coins it holds under the same coin-id and stores the new coin in one
//! indivisible step. The receiver accepts only if every returned coin is a
//! proper prefix of the coin it received.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::coin::{Coin, CoinId, KeyRegistry, NodeId, Nonce, Verifier};
use crate::error::ProtocolError;

/// How a clerk database keeps the chains it sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DbMode {
    #[default]
    Full,
    /// Keep only chains that no other stored chain extends.
    Compacted,
}

/// Behaviour of a dishonest clerk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClerkPolicy {
    /// Store the coin but answer with nothing.
    SuppressReply,
    /// Answer truthfully but never store.
    SkipStore,
    #[default]
    Both,
}

impl ClerkPolicy {
    fn stores(self) -> bool {
        matches!(self, ClerkPolicy::SuppressReply)
    }

    fn replies(self) -> bool {
        matches!(self, ClerkPolicy::SkipStore)
    }
}

/// Whether a node follows the protocol.
pub trait Honesty {
    fn is_honest(&self, node: NodeId) -> bool;
}

/// Everyone honest.
pub struct AllHonest;

impl Honesty for AllHonest {
    fn is_honest(&self, _: NodeId) -> bool {
        true
    }
}

impl<F: Fn(NodeId) -> bool> Honesty for F {
    fn is_honest(&self, node: NodeId) -> bool {
        self(node)
    }
}

/// Store of observed coins at one clerk.
///
/// [`ClerkDatabase::check_and_store`] holds the lock across lookup and
/// insert, so concurrent callers are serialised per database.
#[derive(Debug)]
pub struct ClerkDatabase {
    clerk: NodeId,
    mode: DbMode,
    store: Mutex<HashMap<CoinId, Vec<Coin>>>,
}

impl Clone for ClerkDatabase {
    fn clone(&self) -> Self {
        ClerkDatabase {
            clerk: self.clerk,
            mode: self.mode,
            store: Mutex::new(self.store.lock().expect("clerk db poisoned").clone()),
        }
    }
}

impl ClerkDatabase {
    pub fn new(clerk: NodeId, mode: DbMode) -> Self {
        ClerkDatabase { clerk, mode, store: Mutex::new(HashMap::new()) }
    }

    pub fn clerk(&self) -> NodeId {
        self.clerk
    }

    pub fn mode(&self) -> DbMode {
        self.mode
    }

    /// Returns the coins stored under the coin's id before this call, then
    /// stores the coin. No verification happens here.
    pub fn check_and_store(&self, coin: &Coin) -> Vec<Coin> {
        let mut store = self.store.lock().expect("clerk db poisoned");
        let entry = store.entry(coin.cid()).or_default();
        let before = entry.clone();
        insert(entry, coin, self.mode);
        before
    }

    /// Lookup without storing, as a dishonest skip-store clerk does.
    pub fn lookup(&self, cid: &CoinId) -> Vec<Coin> {
        self.store.lock().expect("clerk db poisoned").get(cid).cloned().unwrap_or_default()
    }

    pub fn insert(&self, coin: &Coin) {
        let mut store = self.store.lock().expect("clerk db poisoned");
        insert(store.entry(coin.cid()).or_default(), coin, self.mode);
    }

    pub fn coin_ids(&self) -> Vec<CoinId> {
        let mut ids: Vec<_> = self.store.lock().expect("clerk db poisoned").keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn len(&self) -> usize {
        self.store.lock().expect("clerk db poisoned").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same contents, keeping only maximal chains per coin-id.
    pub fn compact(&self) -> ClerkDatabase {
        let store = self.store.lock().expect("clerk db poisoned");
        let compacted = store
            .iter()
            .map(|(cid, coins)| {
                let keep: Vec<Coin> =
                    coins.iter().filter(|c| !coins.iter().any(|o| c.is_prefix_of(o))).cloned().collect();
                (*cid, keep)
            })
            .collect();
        ClerkDatabase { clerk: self.clerk, mode: DbMode::Compacted, store: Mutex::new(compacted) }
    }
}

fn insert(entry: &mut Vec<Coin>, coin: &Coin, mode: DbMode) {
    match mode {
        DbMode::Full => {
            if !entry.contains(coin) {
                entry.push(coin.clone());
            }
        }
        DbMode::Compacted => {
            if entry.iter().any(|s| s == coin || coin.is_prefix_of(s)) {
                return;
            }
            entry.retain(|s| !s.is_prefix_of(coin));
            entry.push(coin.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClerkReply {
    pub clerk: NodeId,
    pub matching: Vec<Coin>,
}

/// Honest clerk: refuse invalid chains, otherwise atomically look up and store.
pub fn clerk_check_and_store(
    db: &ClerkDatabase,
    c_new: &Coin,
    verifier: &impl Verifier,
) -> Result<ClerkReply, ProtocolError> {
    if !c_new.verify_chain(verifier) {
        return Err(ProtocolError::InvalidChain);
    }
    Ok(ClerkReply { clerk: db.clerk(), matching: db.check_and_store(c_new) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum RejectReason {
    BadSignature,
    BadNonce,
    BadSender,
    /// A clerk returned a coin that is not a proper prefix of the new one.
    Conflict {
        clerk: NodeId,
        evidence: Coin,
    },
    ClerkRefused {
        clerk: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Decision {
    Accepted,
    Rejected(RejectReason),
}

impl Decision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Decision::Accepted)
    }
}

/// Accept iff every coin returned by any clerk is a proper prefix of `c_new`.
pub fn receiver_accept_decision(c_new: &Coin, replies: &[ClerkReply]) -> Decision {
    for reply in replies {
        if let Some(bad) = reply.matching.iter().find(|c| !c.is_prefix_of(c_new)) {
            return Decision::Rejected(RejectReason::Conflict { clerk: reply.clerk, evidence: bad.clone() });
        }
    }
    Decision::Accepted
}

/// Receiver-side checks on the coin handed over by the sender.
pub fn receiver_verify(
    coin_after: &Coin,
    sender: NodeId,
    receiver: NodeId,
    nonce: Nonce,
    verifier: &impl Verifier,
) -> Result<(), RejectReason> {
    let Some(last) = coin_after.chain().last() else {
        return Err(RejectReason::BadSignature);
    };
    if !coin_after.verify_chain(verifier) {
        return Err(RejectReason::BadSignature);
    }
    if last.sender != sender || last.receiver != receiver {
        return Err(RejectReason::BadSender);
    }
    if last.nonce != nonce {
        return Err(RejectReason::BadNonce);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpendTranscript {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub nonce: Nonce,
    pub coin_before: Coin,
    pub coin_after: Coin,
    pub clerk_set: Vec<NodeId>,
    pub clerk_replies: BTreeMap<NodeId, Vec<Coin>>,
    pub decision: Decision,
}

/// Keys plus one clerk database per node.
#[derive(Debug, Clone)]
pub struct Network {
    pub keys: KeyRegistry,
    pub dbs: Vec<ClerkDatabase>,
    pub clerk_policy: ClerkPolicy,
}

impl Network {
    pub fn new(n: usize, key_seed: u64, mode: DbMode, clerk_policy: ClerkPolicy) -> Self {
        Network {
            keys: KeyRegistry::new(n, key_seed),
            dbs: (0..n).map(|i| ClerkDatabase::new(NodeId::from(i), mode)).collect(),
            clerk_policy,
        }
    }

    pub fn n(&self) -> usize {
        self.dbs.len()
    }

    fn check_node(&self, node: NodeId) -> Result<(), ProtocolError> {
        if node.index() < self.n() {
            Ok(())
        } else {
            Err(ProtocolError::UnknownNode(node))
        }
    }

    /// One clerk's part of the protocol, honest or per the dishonest policy.
    pub fn query_clerk(&self, clerk: NodeId, coin: &Coin, honesty: &impl Honesty) -> Result<ClerkReply, ProtocolError> {
        let db = &self.dbs[clerk.index()];
        if honesty.is_honest(clerk) {
            return clerk_check_and_store(db, coin, &self.keys);
        }
        let policy = self.clerk_policy;
        let matching = match (policy.stores(), policy.replies()) {
            (true, _) => {
                db.insert(coin);
                Vec::new()
            }
            (false, true) => db.lookup(&coin.cid()),
            (false, false) => Vec::new(),
        };
        Ok(ClerkReply { clerk, matching })
    }
}

/// A spend in progress, advanced one clerk query at a time.
#[derive(Debug, Clone)]
pub struct PendingSpend {
    transcript: SpendTranscript,
    next_clerk: usize,
    replies: Vec<ClerkReply>,
    early: Option<Decision>,
}

impl PendingSpend {
    /// Nonce challenge, sender response, and receiver checks. `respond` plays
    /// the sender: given the nonce it returns the coin it hands over.
    #[allow(clippy::too_many_arguments)]
    pub fn begin(
        net: &Network,
        honesty: &impl Honesty,
        sender: NodeId,
        receiver: NodeId,
        coin_before: &Coin,
        clerk_set: &[NodeId],
        nonce: Nonce,
        respond: impl FnOnce(Nonce) -> Result<Coin, ProtocolError>,
    ) -> Result<PendingSpend, ProtocolError> {
        net.check_node(sender)?;
        net.check_node(receiver)?;
        for &c in clerk_set {
            net.check_node(c)?;
        }
        let coin_after = respond(nonce)?;
        let early = if !honesty.is_honest(receiver) {
            Some(Decision::Accepted)
        } else {
            receiver_verify(&coin_after, sender, receiver, nonce, &net.keys).err().map(Decision::Rejected)
        };
        Ok(PendingSpend {
            transcript: SpendTranscript {
                sender,
                receiver,
                nonce,
                coin_before: coin_before.clone(),
                coin_after,
                clerk_set: clerk_set.to_vec(),
                clerk_replies: BTreeMap::new(),
                decision: Decision::Accepted,
            },
            next_clerk: 0,
            replies: Vec::new(),
            early,
        })
    }

    pub fn is_done(&self) -> bool {
        self.early.is_some() || self.next_clerk >= self.transcript.clerk_set.len()
    }

    /// Queries the next clerk. Returns false once nothing is left to do.
    pub fn step(&mut self, net: &Network, honesty: &impl Honesty) -> bool {
        if self.is_done() {
            return false;
        }
        let clerk = self.transcript.clerk_set[self.next_clerk];
        self.next_clerk += 1;
        match net.query_clerk(clerk, &self.transcript.coin_after, honesty) {
            Ok(reply) => {
                self.transcript.clerk_replies.insert(clerk, reply.matching.clone());
                self.replies.push(reply);
            }
            Err(_) => self.early = Some(Decision::Rejected(RejectReason::ClerkRefused { clerk })),
        }
        true
    }

    pub fn finish(mut self, net: &Network, honesty: &impl Honesty) -> SpendTranscript {
        while self.step(net, honesty) {}
        self.transcript.decision = match self.early {
            Some(d) => d,
            None => receiver_accept_decision(&self.transcript.coin_after, &self.replies),
        };
        self.transcript
    }
}

/// Full protocol run with an honest sender that signs whatever nonce it gets.
pub fn run_spend(
    net: &Network,
    honesty: &impl Honesty,
    sender: NodeId,
    receiver: NodeId,
    coin: &Coin,
    clerk_set: &[NodeId],
    nonce: Nonce,
) -> Result<SpendTranscript, ProtocolError> {
    let key = net.keys.keypair(sender).ok_or(ProtocolError::UnknownNode(sender))?;
    let pending = PendingSpend::begin(net, honesty, sender, receiver, coin, clerk_set, nonce, |z| {
        Ok(coin.spend_extend(sender, key, receiver, z)?)
    })?;
    Ok(pending.finish(net, honesty))
}

/// Advances several pending spends in the given order: each schedule entry
/// performs one clerk query of that spend. Leftover steps run afterwards in
/// spend order.
pub fn run_interleaved(
    net: &Network,
    honesty: &impl Honesty,
    mut spends: Vec<PendingSpend>,
    schedule: &[usize],
) -> Vec<SpendTranscript> {
    for &i in schedule {
        if let Some(p) = spends.get_mut(i) {
            p.step(net, honesty);
        }
    }
    spends.into_iter().map(|p| p.finish(net, honesty)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::make_genesis_coin;

    fn net(n: usize, mode: DbMode) -> Network {
        Network::new(n, 1, mode, ClerkPolicy::Both)
    }

    fn genesis(owner: u32) -> Coin {
        make_genesis_coin(CoinId::derive(b"p"), NodeId(owner))
    }

    fn spend(net: &Network, c: &Coin, to: u32, z: u128) -> Coin {
        let s = c.owner();
        c.spend_extend(s, net.keys.keypair(s).unwrap(), NodeId(to), Nonce::new(z)).unwrap()
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn check_and_store_snapshots_before_insert() {
        let nw = net(4, DbMode::Full);
        let db = &nw.dbs[0];
        let c0 = genesis(1);
        let c1 = spend(&nw, &c0, 2, 1);
        assert!(clerk_check_and_store(db, &c0, &nw.keys).unwrap().matching.is_empty());
        assert_eq!(db.len(), 1);
        assert_eq!(clerk_check_and_store(db, &c1, &nw.keys).unwrap().matching, vec![c0.clone()]);

        let fresh = net(4, DbMode::Full);
        let a = spend(&fresh, &c0, 2, 1);
        let b = spend(&fresh, &c0, 3, 2);
        clerk_check_and_store(&fresh.dbs[0], &a, &fresh.keys).unwrap();
        let reply = clerk_check_and_store(&fresh.dbs[0], &b, &fresh.keys).unwrap();
        assert_eq!(reply.matching, vec![a.clone()]);
        assert!(!a.is_prefix_of(&b));
    }

    #[test]
    fn honest_clerk_refuses_invalid_chain() {
        let nw = net(4, DbMode::Full);
        let mut bad = spend(&nw, &genesis(1), 2, 1);
        bad.chain_mut()[0].nonce = Nonce::new(99);
        assert_eq!(clerk_check_and_store(&nw.dbs[0], &bad, &nw.keys), Err(ProtocolError::InvalidChain));
        assert!(nw.dbs[0].is_empty());
    }

    #[test]
    fn accept_rule() {
        let nw = net(4, DbMode::Full);
        let c0 = genesis(0);
        let c1 = spend(&nw, &c0, 1, 1);
        let c2 = spend(&nw, &c1, 2, 2);
        let sib = spend(&nw, &c1, 3, 3);
        let ok = [ClerkReply { clerk: NodeId(0), matching: vec![c0.clone(), c1.clone()] }];
        assert_eq!(receiver_accept_decision(&c2, &ok), Decision::Accepted);
        assert_eq!(receiver_accept_decision(&c2, &[]), Decision::Accepted);
        let bad = [ok[0].clone(), ClerkReply { clerk: NodeId(3), matching: vec![sib.clone()] }];
        assert_eq!(
            receiver_accept_decision(&c2, &bad),
            Decision::Rejected(RejectReason::Conflict { clerk: NodeId(3), evidence: sib })
        );
        // the coin itself is not a proper prefix of itself
        let same = [ClerkReply { clerk: NodeId(0), matching: vec![c2.clone()] }];
        assert!(!receiver_accept_decision(&c2, &same).is_accepted());
    }

    #[test]
    fn honest_single_spend_accepted() {
        let nw = net(6, DbMode::Full);
        let t = run_spend(&nw, &AllHonest, NodeId(0), NodeId(1), &genesis(0), &ids(&[2, 3, 4]), Nonce::new(7)).unwrap();
        assert!(t.decision.is_accepted());
        assert_eq!(t.clerk_replies.len(), 3);
        assert!(t.coin_before.is_immediate_prefix_of(&t.coin_after));
    }

    #[test]
    fn shared_honest_clerk_rejects_second_spend() {
        let nw = net(6, DbMode::Full);
        let c = genesis(0);
        let spender_dishonest = |n: NodeId| n != NodeId(0);
        let first = run_spend(&nw, &spender_dishonest, NodeId(0), NodeId(1), &c, &ids(&[2, 3]), Nonce::new(1)).unwrap();
        let second =
            run_spend(&nw, &spender_dishonest, NodeId(0), NodeId(4), &c, &ids(&[3, 5]), Nonce::new(2)).unwrap();
        assert!(first.decision.is_accepted());
        match second.decision {
            Decision::Rejected(RejectReason::Conflict { clerk, evidence }) => {
                assert_eq!(clerk, NodeId(3));
                assert_eq!(evidence, first.coin_after);
            }
            other => panic!("expected conflict, got {other:?}"),
        }
    }

    #[test]
    fn dishonest_shared_clerks_let_both_through() {
        for policy in [ClerkPolicy::Both, ClerkPolicy::SuppressReply, ClerkPolicy::SkipStore] {
            let nw = Network::new(6, 1, DbMode::Full, policy);
            let c = genesis(0);
            let honest = |n: NodeId| n != NodeId(0) && n != NodeId(3);
            let a = run_spend(&nw, &honest, NodeId(0), NodeId(1), &c, &ids(&[2, 3]), Nonce::new(1)).unwrap();
            let b = run_spend(&nw, &honest, NodeId(0), NodeId(4), &c, &ids(&[3, 5]), Nonce::new(2)).unwrap();
            assert!(a.decision.is_accepted() && b.decision.is_accepted(), "{policy:?}");
        }
    }

    #[test]
    fn bad_nonce_and_signature_rejected_before_clerks() {
        let nw = net(6, DbMode::Full);
        let c = genesis(0);
        let key = nw.keys.keypair(NodeId(0)).unwrap().clone();
        let p = PendingSpend::begin(&nw, &AllHonest, NodeId(0), NodeId(1), &c, &ids(&[2]), Nonce::new(5), |_| {
            Ok(c.spend_extend(NodeId(0), &key, NodeId(1), Nonce::new(6))?)
        })
        .unwrap();
        let t = p.finish(&nw, &AllHonest);
        assert_eq!(t.decision, Decision::Rejected(RejectReason::BadNonce));
        assert!(t.clerk_replies.is_empty());
        assert!(nw.dbs[2].is_empty());

        let p = PendingSpend::begin(&nw, &AllHonest, NodeId(0), NodeId(1), &c, &ids(&[2]), Nonce::new(5), |z| {
            let mut forged = c.spend_extend(NodeId(0), &key, NodeId(1), z)?;
            forged.chain_mut()[0].receiver = NodeId(3);
            Ok(forged)
        })
        .unwrap();
        assert_eq!(p.finish(&nw, &AllHonest).decision, Decision::Rejected(RejectReason::BadSignature));

        let p = PendingSpend::begin(&nw, &AllHonest, NodeId(0), NodeId(1), &c, &ids(&[2]), Nonce::new(5), |z| {
            Ok(c.spend_extend(NodeId(0), &key, NodeId(4), z)?)
        })
        .unwrap();
        assert_eq!(p.finish(&nw, &AllHonest).decision, Decision::Rejected(RejectReason::BadSender));
    }

    #[test]
    fn unknown_nodes_are_errors() {
        let nw = net(3, DbMode::Full);
        let err = run_spend(&nw, &AllHonest, NodeId(0), NodeId(1), &genesis(0), &ids(&[7]), Nonce::new(1));
        assert_eq!(err.unwrap_err(), ProtocolError::UnknownNode(NodeId(7)));
    }

    #[test]
    fn every_interleaving_detects_at_shared_clerk() {
        // two conflicting spends, clerk sets {2,3} and {3,4}; all orderings of
        // their four clerk queries
        let c = genesis(0);
        let honest = |n: NodeId| n != NodeId(0);
        let schedules: Vec<Vec<usize>> = vec![
            vec![0, 0, 1, 1],
            vec![0, 1, 0, 1],
            vec![0, 1, 1, 0],
            vec![1, 0, 0, 1],
            vec![1, 0, 1, 0],
            vec![1, 1, 0, 0],
        ];
        for sched in schedules {
            let nw = net(6, DbMode::Full);
            let mk = |to: u32, set: &[u32], z: u128| {
                let key = nw.keys.keypair(NodeId(0)).unwrap();
                PendingSpend::begin(&nw, &honest, NodeId(0), NodeId(to), &c, &ids(set), Nonce::new(z), |z| {
                    Ok(c.spend_extend(NodeId(0), key, NodeId(to), z)?)
                })
                .unwrap()
            };
            let spends = vec![mk(1, &[2, 3], 1), mk(5, &[3, 4], 2)];
            let ts = run_interleaved(&nw, &honest, spends, &sched);
            let accepted = ts.iter().filter(|t| t.decision.is_accepted()).count();
            assert_eq!(accepted, 1, "schedule {sched:?}");
            let empty_at_3 = ts.iter().filter(|t| t.clerk_replies[&NodeId(3)].is_empty()).count();
            assert_eq!(empty_at_3, 1);
        }
    }

    #[test]
    fn concurrent_check_and_store_is_atomic() {
        for round in 0..200u128 {
            let nw = net(4, DbMode::Full);
            let c = genesis(0);
            let a = spend(&nw, &c, 1, round * 2);
            let b = spend(&nw, &c, 2, round * 2 + 1);
            let db = &nw.dbs[3];
            let (ra, rb) = std::thread::scope(|s| {
                let ha = s.spawn(|| db.check_and_store(&a));
                let hb = s.spawn(|| db.check_and_store(&b));
                (ha.join().unwrap(), hb.join().unwrap())
            });
            assert!(!(ra.is_empty() && rb.is_empty()));
            assert_eq!(db.len(), 2);
        }
    }

    #[test]
    fn compaction_keeps_maximal_chains() {
        let nw = net(4, DbMode::Full);
        let c0 = genesis(0);
        let c1 = spend(&nw, &c0, 1, 1);
        let db = ClerkDatabase::new(NodeId(3), DbMode::Full);
        db.insert(&c0);
        db.insert(&c1);
        let compacted = db.compact();
        assert_eq!(compacted.lookup(&c0.cid()), vec![c1.clone()]);
        assert_eq!(compacted.mode(), DbMode::Compacted);

        let sib_a = spend(&nw, &c0, 2, 2);
        db.insert(&sib_a);
        let compacted = db.compact();
        let kept = compacted.lookup(&c0.cid());
        assert_eq!(kept.len(), 2);
        assert!(kept.contains(&c1) && kept.contains(&sib_a));
    }

    #[test]
    fn compacted_insert_never_stores_prefixes() {
        let nw = net(4, DbMode::Full);
        let c0 = genesis(0);
        let c1 = spend(&nw, &c0, 1, 1);
        let c2 = spend(&nw, &c1, 2, 2);
        let db = ClerkDatabase::new(NodeId(3), DbMode::Compacted);
        assert!(db.check_and_store(&c1).is_empty());
        assert_eq!(db.check_and_store(&c0), vec![c1.clone()]);
        assert_eq!(db.lookup(&c0.cid()), vec![c1.clone()]);
        assert_eq!(db.check_and_store(&c2), vec![c1.clone()]);
        assert_eq!(db.lookup(&c0.cid()), vec![c2]);
    }

    #[test]
    fn dishonest_receiver_accepts_without_clerks() {
        let nw = net(4, DbMode::Full);
        let honest = |n: NodeId| n != NodeId(1);
        let t = run_spend(&nw, &honest, NodeId(0), NodeId(1), &genesis(0), &ids(&[2, 3]), Nonce::new(1)).unwrap();
        assert!(t.decision.is_accepted());
        assert!(t.clerk_replies.is_empty());
    }

    #[test]
    fn transcript_json_has_hex_coins() {
        let nw = net(4, DbMode::Full);
        let t = run_spend(&nw, &AllHonest, NodeId(0), NodeId(1), &genesis(0), &ids(&[2]), Nonce::new(1)).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["decision"]["outcome"], "accepted");
        assert_eq!(v["coin_after"]["cid"].as_str().unwrap().len(), 64);
        let back: SpendTranscript = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
