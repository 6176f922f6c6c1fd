//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use tokenlab::analysis::{
    equivocation_audit, growth_analysis, linkage_analysis, utxo_growth_point, uso_growth_point,
    utxo_observer_transcript, EquivocationAudit,
};
use tokenlab::crypto::{self, KeyPair, PublicKey};
use tokenlab::dlt::{
    export_log, import_log, AccountId, AccountState, LedgerEntry, LedgerNetwork,
    NetworkConfig, Payload, PeerBehaviour, PeerId,
};
use tokenlab::error::Rejection;
use tokenlab::scenario;
use tokenlab::transcript::IssuanceTranscript;
use tokenlab::uso::{
    self, publish_commitment, verify_asset, DltSource, Equivocation, IssuerKeys, Leaf, Mitigation,
    Operator, OperatorId, SelfAttestedSource, StateUpdate, UsoAsset, UsoIssuer, Verdict,
};
use tokenlab::utxo::{
    self, OutPoint, TokenId, TxKind, TxOutput, UtxoLedger, UtxoRecord, UtxoState, UtxoTransaction,
};
use tokenlab::Privacy;

type Check = Result<String, String>;
type Criterion = (&'static str, Option<u64>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

// ---------------------------------------------------------------------------
// UTXO double spend

fn utxo_base(k: usize, seed: u64) -> (UtxoLedger, KeyPair, Vec<OutPoint>) {
    let mut r = rng(seed);
    let net = LedgerNetwork::new(&mut r, &NetworkConfig::honest(4));
    let authority = KeyPair::generate(&mut r);
    let alice = KeyPair::generate(&mut r);
    let mut ledger = UtxoLedger::transparent(net, authority.public);
    let outs = (0..k).map(|_| TxOutput { value: 1, owner: alice.public }).collect();
    let mint = ledger.mint(&authority, outs).unwrap();
    (ledger, alice, mint.outpoints())
}

/// Runs `order` over a copy of `base`; returns which submissions were accepted.
fn submit_all(base: &UtxoLedger, txs: &[UtxoTransaction], order: &[usize]) -> Vec<Result<(), Rejection>> {
    let mut ledger = base.clone();
    let mut accepted = vec![Ok(()); txs.len()];
    for &i in order {
        accepted[i] = ledger.spend(txs[i].clone()).map(|_| ());
    }
    accepted
}

fn utxo_double_spend() -> Check {
    let bob = KeyPair::from_seed([1; 32]).public;
    let carol = KeyPair::from_seed([2; 32]).public;
    let mut runs = 0u64;
    for k in 1..=6usize {
        let (base, alice, ops) = utxo_base(k, k as u64);
        for target in 0..k {
            // B spends the target alone, or together with its neighbour.
            let variants: Vec<Vec<usize>> = if k > 1 {
                vec![vec![target], vec![target, (target + 1) % k]]
            } else {
                vec![vec![target]]
            };
            for b_inputs in variants {
                let a = UtxoTransaction::transfer(
                    vec![ops[target]],
                    vec![TxOutput { value: 1, owner: bob }],
                    &[&alice],
                );
                let b = UtxoTransaction::transfer(
                    b_inputs.iter().map(|&i| ops[i]).collect(),
                    vec![TxOutput { value: b_inputs.len() as u64, owner: carol }],
                    &vec![&alice; b_inputs.len()],
                );
                let mut txs = vec![a, b];
                for j in (0..k).filter(|j| !b_inputs.contains(j)) {
                    txs.push(UtxoTransaction::transfer(
                        vec![ops[j]],
                        vec![TxOutput { value: 1, owner: alice.public }],
                        &[&alice],
                    ));
                }
                // Every permutation up to four submissions; beyond that every
                // placement of the conflicting pair among the rest, which
                // are independent of each other.
                let orders: Vec<Vec<usize>> = if txs.len() <= 4 {
                    (0..txs.len()).permutations(txs.len()).collect()
                } else {
                    let n = txs.len();
                    let mut v = Vec::new();
                    for pa in 0..n {
                        for pb in (0..n).filter(|&p| p != pa) {
                            let mut order = vec![usize::MAX; n];
                            order[pa] = 0;
                            order[pb] = 1;
                            let mut rest = 2..n;
                            for slot in order.iter_mut().filter(|s| **s == usize::MAX) {
                                *slot = rest.next().unwrap();
                            }
                            v.push(order);
                        }
                    }
                    v
                };
                for order in orders {
                    runs += 1;
                    let res = submit_all(&base, &txs, &order);
                    let conflicting = res[..2].iter().filter(|r| r.is_ok()).count();
                    ensure!(
                        conflicting == 1,
                        "k={k} target={target} order={order:?}: {conflicting} conflicting spends accepted"
                    );
                    let loser = res[..2].iter().find_map(|r| r.as_ref().err()).unwrap();
                    ensure!(loser.code() == "REJECTED_DOUBLE_SPEND", "loser rejected with {loser}");
                    // An independent spend fails only if B already took it.
                    for (i, r) in res.iter().enumerate().skip(2) {
                        ensure!(r.is_ok(), "independent spend {i} rejected: {:?}", r);
                    }
                }
            }
        }
    }

    // Private mode: the same token deposited twice, both orders.
    let mut private_runs = 0;
    for k in 1..=3 {
        let mut r = rng(100 + k);
        let net = LedgerNetwork::new(&mut r, &NetworkConfig::centralised());
        let mut ledger =
            UtxoLedger::private_with_key_bits(&mut r, net, &[1, 5].into(), 512).unwrap();
        let tokens: Vec<_> = (0..k).map(|_| utxo::withdraw(&mut r, &mut ledger, 5).unwrap()).collect();
        for t in &tokens {
            for split in [[vec![5], vec![1, 1, 1, 1, 1]], [vec![1, 1, 1, 1, 1], vec![5]]] {
                let mut l = ledger.clone();
                let first = utxo::pay_private(&mut r, &mut l, t, &split[0]);
                let second = utxo::pay_private(&mut r, &mut l, t, &split[1]);
                private_runs += 1;
                ensure!(first.is_ok(), "first deposit rejected");
                ensure!(
                    second.as_ref().err().map(Rejection::code) == Some("REJECTED_DOUBLE_SPEND"),
                    "second deposit not rejected as a double spend"
                );
            }
        }
    }
    Ok(format!(
        "{runs} transparent orderings and {private_runs} private deposit pairs, 0 counterexamples"
    ))
}

// ---------------------------------------------------------------------------
// USO double spend under DLT mitigation

struct UsoWorld {
    rng: ChaCha20Rng,
    net: LedgerNetwork,
    op: Operator,
    issuer: UsoIssuer,
}

fn uso_world(seed: u64, privacy: Privacy, mitigation: Mitigation, cfg: NetworkConfig) -> UsoWorld {
    let mut r = rng(seed);
    let mut net = LedgerNetwork::new(&mut r, &cfg);
    let op = Operator::new(&mut r, OperatorId::new("op-a"), mitigation);
    if mitigation == Mitigation::Dlt {
        op.register(&mut net);
    }
    let issuer = UsoIssuer::with_key_bits(&mut r, privacy, &[5, 10].into(), 512);
    UsoWorld { rng: r, net, op, issuer }
}

impl UsoWorld {
    fn close(&mut self) {
        self.op.close_epoch(Some(&mut self.net)).unwrap();
    }

    fn noise(&mut self, n: usize) {
        for _ in 0..n {
            let k = KeyPair::generate(&mut self.rng);
            uso::issue_asset(&mut self.rng, &mut self.op, &mut self.issuer, 5, k.public).unwrap();
        }
    }

    fn verdict(&self, asset: &UsoAsset, overrides: &[Equivocation]) -> Verdict {
        let mut a = asset.clone();
        let Some(to) = self.op.last_closed_epoch() else {
            return Verdict::HistoryGap;
        };
        match self.op.prove_provenance_with(&a.asset_id, a.proof.from_epoch, to, overrides) {
            Ok(p) => a.proof = p,
            Err(_) => return Verdict::HistoryGap,
        }
        match self.op.mitigation() {
            Mitigation::Dlt => verify_asset(&a, &self.issuer.keys(), &DltSource::new(&self.net)),
            Mitigation::SelfAttested => verify_asset(
                &a,
                &self.issuer.keys(),
                &SelfAttestedSource {
                    operator_key: self.op.public_key(),
                    latest_epoch: self.op.last_closed_epoch(),
                },
            ),
        }
    }
}

/// Alternate tree for `epoch` with `asset`'s leaf replaced by `record`.
fn fork_epoch(op: &Operator, epoch: u64, asset: &UsoAsset, record: crypto::Digest) -> Equivocation {
    let mut leaves: Vec<Leaf> = op
        .tree(epoch)
        .unwrap()
        .leaves()
        .iter()
        .filter(|l| l.asset_id != asset.asset_id)
        .copied()
        .collect();
    leaves.push(Leaf { asset_id: asset.asset_id, record });
    op.equivocate(epoch, leaves).unwrap()
}

fn uso_double_spend() -> Check {
    let slots: [Option<u64>; 4] = [None, Some(1), Some(2), Some(3)];
    let configs = [
        NetworkConfig::honest(4),
        NetworkConfig::honest(7)
            .with_fault(1, PeerBehaviour::Silent)
            .with_fault(4, PeerBehaviour::Equivocating),
    ];
    let mut cases = 0;
    let mut checks = 0;
    let mut one_valid = 0;
    for (ci, cfg) in configs.iter().enumerate() {
        for (eb, ec) in slots.iter().cartesian_product(slots.iter()) {
            let orders: &[bool] = if eb.is_some() && eb == ec { &[true, false] } else { &[true] };
            for &b_first in orders {
                for equivocate in [false, true] {
                    cases += 1;
                    let seed = 1000 + cases;
                    let mut w = uso_world(seed, Privacy::Transparent, Mitigation::Dlt, cfg.clone());
                    let alice = KeyPair::generate(&mut w.rng);
                    let bob = KeyPair::generate(&mut w.rng);
                    let carol = KeyPair::generate(&mut w.rng);
                    w.noise(3);
                    let (x, _) =
                        uso::issue_asset(&mut w.rng, &mut w.op, &mut w.issuer, 10, alice.public).unwrap();
                    w.close();
                    let ub = StateUpdate::new(x.asset_id, 1, x.asset_id, bob.public, &alice);
                    let uc = StateUpdate::new(x.asset_id, 1, x.asset_id, carol.public, &alice);
                    let mut to_bob = x.clone();
                    to_bob.updates.push(ub.clone());
                    let mut to_carol = x.clone();
                    to_carol.updates.push(uc.clone());
                    let mut carol_overrides: Vec<Equivocation> = Vec::new();

                    for epoch in 1..=3u64 {
                        let mut subs: Vec<(&StateUpdate, bool)> = Vec::new();
                        if *eb == Some(epoch) {
                            subs.push((&ub, true));
                        }
                        if *ec == Some(epoch) {
                            subs.push((&uc, false));
                        }
                        if !b_first {
                            subs.reverse();
                        }
                        w.noise(1);
                        for (u, _) in subs {
                            // A duplicate in one epoch is refused; either way
                            // the holder keeps its copy and may try to use it.
                            let _ = w.op.submit(x.asset_id, u.digest());
                        }
                        w.close();
                        if equivocate && *eb == Some(epoch) && carol_overrides.is_empty() {
                            carol_overrides.push(fork_epoch(&w.op, epoch, &x, uc.digest()));
                        }
                        let vb = w.verdict(&to_bob, &[]);
                        let vc = w.verdict(&to_carol, &carol_overrides);
                        checks += 1;
                        ensure!(
                            !(vb.is_valid() && vc.is_valid()),
                            "config {ci}, bob@{eb:?} carol@{ec:?} b_first={b_first} equivocate={equivocate}: both VALID after epoch {epoch}"
                        );
                        if epoch == 3 && (vb.is_valid() || vc.is_valid()) {
                            one_valid += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{cases} interleavings, {checks} verification pairs, never both VALID ({one_valid} with one VALID)"
    ))
}

// ---------------------------------------------------------------------------
// Equivocation contrast

fn equivocation_run(mitigation: Mitigation) -> Result<(Verdict, Verdict, EquivocationAudit, Option<Rejection>), String> {
    let cfg = match mitigation {
        Mitigation::Dlt => NetworkConfig::honest(4),
        Mitigation::SelfAttested => NetworkConfig::centralised(),
    };
    let mut w = uso_world(77, Privacy::Transparent, mitigation, cfg);
    let alice = KeyPair::generate(&mut w.rng);
    let bob = KeyPair::generate(&mut w.rng);
    let carol = KeyPair::generate(&mut w.rng);
    w.noise(2);
    let (x, _) = uso::issue_asset(&mut w.rng, &mut w.op, &mut w.issuer, 10, alice.public).unwrap();
    w.close();
    let (to_bob, receipt) = uso::transfer(&x, &alice, bob.public, &mut w.op).unwrap();
    w.noise(2);
    w.close();
    let uc = StateUpdate::new(x.asset_id, 1, x.asset_id, carol.public, &alice);
    let eq = fork_epoch(&w.op, receipt.epoch, &x, uc.digest());
    let mut to_carol = x.clone();
    to_carol.updates.push(uc);

    let vb = w.verdict(&to_bob, &[]);
    let vc = w.verdict(&to_carol, std::slice::from_ref(&eq));
    let mut proofs = Vec::new();
    for (a, o) in [(&to_bob, vec![]), (&to_carol, vec![eq.clone()])] {
        proofs.push(w.op.prove_provenance_with(&a.asset_id, 0, w.op.last_closed_epoch().unwrap(), &o).unwrap());
    }
    let audit = equivocation_audit(w.net.log(), &proofs, mitigation);
    let publish = match mitigation {
        Mitigation::Dlt => publish_commitment(&mut w.net, eq.commitment.clone()).err(),
        Mitigation::SelfAttested => None,
    };
    Ok((vb, vc, audit, publish))
}

fn equivocation_contrast() -> Check {
    let (vb, vc, audit, publish) = equivocation_run(Mitigation::Dlt)?;
    ensure!(vb == Verdict::Valid, "mitigated: honest recipient got {vb}");
    ensure!(vc == Verdict::ProofMismatch, "mitigated: victim got {vc}");
    let f = audit.findings();
    ensure!(f.len() == 1, "mitigated: {} findings", f.len());
    ensure!(f[0].operator_id.as_str() == "op-a" && f[0].epoch == 1, "finding names {:?}", f[0]);
    ensure!(
        publish.as_ref().map(Rejection::code) == Some("REJECTED_DUPLICATE_EPOCH"),
        "publishing the alternate root gave {publish:?}"
    );

    let (ub, uc, uaudit, _) = equivocation_run(Mitigation::SelfAttested)?;
    ensure!(ub == Verdict::Valid && uc == Verdict::Valid, "unmitigated: {ub} / {uc}");
    ensure!(uaudit == EquivocationAudit::Undetectable, "unmitigated audit: {uaudit:?}");

    for (file, victim, expect_audit) in [
        ("equivocation_uso_mitigated.json", "PROOF_MISMATCH", "FINDINGS"),
        ("equivocation_uso_unmitigated.json", "VALID", "UNDETECTABLE"),
    ] {
        let loaded = scenario::load_file(&scenarios_dir().join(file), false).map_err(|e| e.to_string())?;
        let exec = scenario::execute(&loaded, None).map_err(|e| e.to_string())?;
        ensure!(exec.exit_code() == 0, "{file}: {:?}", exec.failure);
        let carol = exec.records.iter().find(|r| r.action == "verify" && r.index == 6).unwrap();
        ensure!(carol.outcome == victim, "{file}: victim {}", carol.outcome);
        ensure!(
            exec.records.iter().any(|r| r.action == "audit" && r.outcome == expect_audit),
            "{file}: audit outcome missing"
        );
    }
    Ok("dlt: victim PROOF_MISMATCH, 1 finding (op-a, epoch 1), second root refused; self-attested: both VALID, UNDETECTABLE".into())
}

// ---------------------------------------------------------------------------
// Ledger growth

fn constant_growth() -> Check {
    let small = uso_growth_point(5, 10, 1).map_err(|e| e.to_string())?;
    let large = uso_growth_point(5, 1000, 1).map_err(|e| e.to_string())?;
    ensure!(small.ledger_entries == 1 && large.ledger_entries == 1, "uso entries {} vs {}", small.ledger_entries, large.ledger_entries);
    let idle = uso_growth_point(5, 0, 3).map_err(|e| e.to_string())?;
    ensure!(idle.ledger_entries == 3, "3 idle epochs gave {}", idle.ledger_entries);

    let counts = [0u64, 1, 10, 100, 1000];
    let pts: Vec<_> = counts.iter().map(|&n| utxo_growth_point(5, n).unwrap()).collect();
    for w in pts.windows(2) {
        let slope = (w[1].ledger_entries - w[0].ledger_entries) as f64
            / (w[1].transactions - w[0].transactions) as f64;
        ensure!(slope == 1.0, "utxo slope {slope} between {:?} and {:?}", w[0], w[1]);
    }
    for p in &pts {
        ensure!(p.ledger_entries == p.transactions, "utxo {p:?}");
    }
    let report = growth_analysis(5, &[10, 100], 1).map_err(|e| e.to_string())?;
    ensure!(report.series[1].points.iter().all(|p| p.ledger_entries == 1), "uso series {:?}", report.series[1]);
    Ok("uso: 10 tx -> 1 entry, 1000 tx -> 1 entry, 3 idle epochs -> 3; utxo slope exactly 1 over 0..1000".into())
}

// ---------------------------------------------------------------------------
// Linkage

fn occurrences(t: &IssuanceTranscript, needle: &[u8]) -> usize {
    let json = serde_json::to_string(t).unwrap();
    let hexed = hex::encode(needle);
    let mut n = json.matches(&hexed).count();
    for r in &t.records {
        for v in &r.visible {
            n += v.0.windows(needle.len()).filter(|w| *w == needle).count();
        }
    }
    n
}

/// Independent recount over the raw ledger: a transfer is linked when an
/// input comes from a mint or from a linked transfer.
fn recount_utxo(log: &[LedgerEntry]) -> u64 {
    let mut linked_txs: BTreeSet<crypto::Digest> = BTreeSet::new();
    let mut count = 0;
    for e in log {
        if let Payload::Utxo(UtxoRecord::Transaction(tx)) = &e.payload {
            match tx.kind {
                TxKind::Mint => {
                    linked_txs.insert(tx.tx_id());
                }
                TxKind::Transfer => {
                    if tx.inputs.iter().any(|i| linked_txs.contains(&i.tx_id)) {
                        linked_txs.insert(tx.tx_id());
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

fn linkage_contrast() -> Check {
    let n = 100;
    // Transparent UTXO.
    let mut r = rng(9);
    let net = LedgerNetwork::new(&mut r, &NetworkConfig::honest(4));
    let authority = KeyPair::generate(&mut r);
    let alice = KeyPair::generate(&mut r);
    let bob = KeyPair::generate(&mut r);
    let mut ledger = UtxoLedger::transparent(net, authority.public);
    for _ in 0..n {
        let tx = ledger.mint(&authority, vec![TxOutput { value: 3, owner: alice.public }]).unwrap();
        ledger
            .spend(UtxoTransaction::transfer(vec![tx.outpoint(0)], vec![TxOutput { value: 3, owner: bob.public }], &[&alice]))
            .unwrap();
    }
    let t = linkage_analysis(
        &ledger.issuance_transcript(),
        &utxo_observer_transcript(ledger.network().log(), Privacy::Transparent),
    )
    .map_err(|e| e.to_string())?;
    ensure!(t.pairs_total == n && t.pairs_linked == n, "transparent utxo {t:?}");
    ensure!(recount_utxo(ledger.network().log()) == t.pairs_linked, "recount disagrees");

    // Blind-issued UTXO.
    let mut r = rng(10);
    let net = LedgerNetwork::new(&mut r, &NetworkConfig::centralised());
    let mut ledger = UtxoLedger::private(&mut r, net, &[1, 5].into()).map_err(|e| e.to_string())?;
    let mut serials = Vec::new();
    for i in 0..n {
        let d = if i % 2 == 0 { 1 } else { 5 };
        let tok = utxo::withdraw(&mut r, &mut ledger, d).unwrap();
        serials.push(tok.serial);
        utxo::pay_private(&mut r, &mut ledger, &tok, &[d]).unwrap();
    }
    let issued = ledger.issuance_transcript();
    let p = linkage_analysis(&issued, &utxo_observer_transcript(ledger.network().log(), Privacy::Private))
        .map_err(|e| e.to_string())?;
    ensure!(p.pairs_total == n && p.pairs_linked == 0, "private utxo {p:?}");
    let hits: usize = serials.iter().map(|s| occurrences(&issued, &s.0)).sum();
    ensure!(hits == 0, "{hits} serial occurrences in the issuer transcript");

    // USO, transparent and blind.
    let mut uso_reports = Vec::new();
    for privacy in [Privacy::Transparent, Privacy::Private] {
        let mut r = rng(11);
        let mut net = LedgerNetwork::new(&mut r, &NetworkConfig::honest(4));
        let mut op = Operator::new(&mut r, OperatorId::new("op"), Mitigation::Dlt);
        op.register(&mut net);
        let mut issuer = UsoIssuer::new(&mut r, privacy, &[5, 10].into());
        let owner = KeyPair::generate(&mut r);
        let mut assets = Vec::new();
        for i in 0..n {
            let d = if i % 2 == 0 { 5 } else { 10 };
            assets.push(uso::issue_asset(&mut r, &mut op, &mut issuer, d, owner.public).unwrap().0);
        }
        op.close_epoch(Some(&mut net)).unwrap();
        for a in &assets {
            uso::transfer(a, &owner, owner.public, &mut op).unwrap();
        }
        op.close_epoch(Some(&mut net)).unwrap();
        let t = issuer.transcript();
        let rep = linkage_analysis(&t, &op.observer_transcript(privacy)).map_err(|e| e.to_string())?;
        let hits: usize = assets.iter().map(|a| occurrences(&t, &a.asset_id.0)).sum();
        uso_reports.push((privacy, rep.pairs_total, rep.pairs_linked, hits));
    }
    ensure!(uso_reports[0].1 == n && uso_reports[0].2 == n, "transparent uso {:?}", uso_reports[0]);
    ensure!(uso_reports[1].1 == n && uso_reports[1].2 == 0, "blind uso {:?}", uso_reports[1]);
    ensure!(uso_reports[1].3 == 0, "{} asset ids in the blind issuer transcript", uso_reports[1].3);
    Ok(format!(
        "utxo transparent {}/{n}, utxo blind {}/{n}, uso transparent {}/{n}, uso blind {}/{n}; 0 serial and 0 asset_id hits in blind issuer transcripts",
        t.pairs_linked, p.pairs_linked, uso_reports[0].2, uso_reports[1].2
    ))
}

// ---------------------------------------------------------------------------
// Proof soundness by exhaustive single-field mutation

fn flip_hex(s: &str, byte: usize) -> Option<String> {
    let mut b = hex::decode(s).ok()?;
    if b.is_empty() || s.len() < 2 {
        return None;
    }
    let i = byte.min(b.len() - 1);
    b[i] ^= 0x01;
    Some(hex::encode(b))
}

/// Every single-field mutant of `v`: hex strings get a bit flipped at the
/// first and last byte, other strings are altered, numbers moved by one,
/// array elements dropped.
fn mutants(v: &Value, path: String, out: &mut Vec<(String, Value)>, root: &Value) {
    let mut push = |p: String, nv: Value| {
        let mut r = root.clone();
        *r.pointer_mut(&p).unwrap() = nv;
        out.push((p, r));
    };
    match v {
        Value::String(s) => {
            if let Some(a) = flip_hex(s, 0) {
                push(path.clone(), Value::String(a));
                if let Some(b) = flip_hex(s, usize::MAX) {
                    if s.len() > 2 {
                        push(path.clone(), Value::String(b));
                    }
                }
            } else {
                let alt = match s.as_str() {
                    "transparent" => "private".to_string(),
                    "private" => "transparent".to_string(),
                    _ => format!("{s}x"),
                };
                push(path, Value::String(alt));
            }
        }
        Value::Number(n) => {
            let n = n.as_u64().unwrap();
            push(path.clone(), Value::from(n + 1));
            if n > 0 {
                push(path, Value::from(n - 1));
            }
        }
        Value::Bool(b) => push(path, Value::Bool(!b)),
        Value::Null => {}
        Value::Array(items) => {
            for i in 0..items.len() {
                let mut shorter = items.clone();
                shorter.remove(i);
                push(path.clone(), Value::Array(shorter));
            }
            for (i, item) in items.iter().enumerate() {
                mutants(item, format!("{path}/{i}"), out, root);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                mutants(item, format!("{path}/{k}"), out, root);
            }
        }
    }
}

fn three_hop(privacy: Privacy, seed: u64) -> (UsoWorld, UsoAsset) {
    let mut w = uso_world(seed, privacy, Mitigation::Dlt, NetworkConfig::honest(4));
    let keys: Vec<KeyPair> = (0..4).map(|_| KeyPair::generate(&mut w.rng)).collect();
    w.noise(3);
    let (mut a, _) = uso::issue_asset(&mut w.rng, &mut w.op, &mut w.issuer, 10, keys[0].public).unwrap();
    w.close();
    for hop in 0..3 {
        w.noise(2);
        w.close();
        a = uso::transfer(&a, &keys[hop], keys[hop + 1].public, &mut w.op).unwrap().0;
        w.noise(hop);
        w.close();
    }
    a.refresh_proof(&w.op).unwrap();
    (w, a)
}

fn mutation_soundness() -> Check {
    let mut total = 0;
    let mut unparseable = 0;
    let mut verdicts: BTreeMap<&'static str, usize> = BTreeMap::new();
    for privacy in [Privacy::Transparent, Privacy::Private] {
        let (w, asset) = three_hop(privacy, 31);
        let keys: IssuerKeys = w.issuer.keys();
        let src = DltSource::new(&w.net);
        let v = verify_asset(&asset, &keys, &src);
        ensure!(v == Verdict::Valid, "{privacy} unmutated asset verifies {v}");
        ensure!(asset.proof.inclusions() == 4 && asset.updates.len() == 3, "not a 3-hop asset");
        let root = serde_json::to_value(&asset).unwrap();
        let mut ms = Vec::new();
        mutants(&root, String::new(), &mut ms, &root);
        for (path, m) in ms {
            let Ok(mutant) = serde_json::from_value::<UsoAsset>(m) else {
                unparseable += 1;
                continue;
            };
            if mutant == asset {
                continue;
            }
            total += 1;
            let v = verify_asset(&mutant, &keys, &DltSource::new(&w.net));
            ensure!(!v.is_valid(), "{privacy} mutant at {path} verifies VALID");
            *verdicts.entry(v.code()).or_default() += 1;
        }
    }
    ensure!(total > 200, "only {total} mutants generated");
    Ok(format!(
        "{total} mutants, 100% non-VALID ({}), {unparseable} more rejected at decoding; unmutated VALID",
        verdicts.iter().map(|(v, n)| format!("{v} {n}")).join(", ")
    ))
}

// ---------------------------------------------------------------------------
// Ledger replay

fn random_network(r: &mut ChaCha20Rng) -> NetworkConfig {
    let n = *[1usize, 4, 7].choose(r).unwrap();
    let mut cfg = NetworkConfig::honest(n);
    let f = r.gen_range(0..=(n - 1) / 3);
    for p in (0..n as u16).collect::<Vec<_>>().choose_multiple(r, f) {
        let b = if r.gen_bool(0.5) { PeerBehaviour::Silent } else { PeerBehaviour::Equivocating };
        cfg = cfg.with_fault(*p, b);
    }
    cfg
}

fn round_trip(log: &[LedgerEntry]) -> Vec<LedgerEntry> {
    let mut buf = Vec::new();
    export_log(log, &mut buf).unwrap();
    import_log(buf.as_slice()).unwrap()
}

fn replay_transparent(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = random_network(&mut r);
    let net = LedgerNetwork::new(&mut r, &cfg);
    let authority = KeyPair::generate(&mut r);
    let people: Vec<KeyPair> = (0..4).map(|_| KeyPair::generate(&mut r)).collect();
    let mut ledger = UtxoLedger::transparent(net, authority.public);
    // Oracle: live outputs with their owner index, and the spent set.
    let mut live: BTreeMap<OutPoint, (u64, usize)> = BTreeMap::new();
    let mut spent: BTreeSet<OutPoint> = BTreeSet::new();
    for _ in 0..30 {
        if live.is_empty() || r.gen_bool(0.2) {
            let owner = r.gen_range(0..people.len());
            let value = r.gen_range(1..20);
            let tx = ledger.mint(&authority, vec![TxOutput { value, owner: people[owner].public }]).unwrap();
            live.insert(tx.outpoint(0), (value, owner));
            continue;
        }
        let pool: Vec<OutPoint> = live.keys().chain(spent.iter()).copied().collect();
        let inputs: Vec<OutPoint> = {
            let k = r.gen_range(1..=2);
            pool.choose_multiple(&mut r, k)
        }.copied().collect();
        let value: u64 = inputs.iter().map(|i| live.get(i).map_or(1, |x| x.0)).sum();
        let owner = r.gen_range(0..people.len());
        let signers: Vec<&KeyPair> = inputs
            .iter()
            .map(|i| {
                let honest = live.get(i).map_or(0, |x| x.1);
                if r.gen_bool(0.9) { &people[honest] } else { &people[(honest + 1) % people.len()] }
            })
            .collect();
        let out_value = if r.gen_bool(0.9) { value } else { value + 1 };
        let tx = UtxoTransaction::transfer(inputs.clone(), vec![TxOutput { value: out_value, owner: people[owner].public }], &signers);
        let expect_ok = inputs.iter().all(|i| live.contains_key(i))
            && out_value == value
            && inputs.iter().zip(&signers).all(|(i, s)| people[live[i].1].public == s.public);
        let got = ledger.spend(tx.clone());
        ensure!(got.is_ok() == expect_ok, "seed {seed}: oracle {expect_ok}, ledger {got:?}");
        if got.is_ok() {
            for i in &inputs {
                live.remove(i);
                spent.insert(*i);
            }
            live.insert(tx.outpoint(0), (out_value, owner));
        }
    }
    let replayed = UtxoState::replay(&round_trip(ledger.network().log())).map_err(|e| e.to_string())?;
    ensure!(&replayed == ledger.state(), "seed {seed}: replay differs from ledger state");
    let oracle_live: BTreeSet<OutPoint> = live.keys().copied().collect();
    ensure!(replayed.live.keys().copied().collect::<BTreeSet<_>>() == oracle_live, "seed {seed}: live set differs from oracle");
    let oracle_spent: BTreeSet<TokenId> = spent.iter().map(|o| TokenId::Output(*o)).collect();
    ensure!(replayed.spent.iter().cloned().collect::<BTreeSet<_>>() == oracle_spent, "seed {seed}: spent set differs");
    Ok(())
}

fn replay_private(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = random_network(&mut r);
    let net = LedgerNetwork::new(&mut r, &cfg);
    let mut ledger = UtxoLedger::private_with_key_bits(&mut r, net, &[1, 2, 5].into(), 512).unwrap();
    let mut wallet = Vec::new();
    let mut spent_serials = BTreeSet::new();
    let mut outstanding: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..12 {
        if wallet.is_empty() || r.gen_bool(0.3) {
            let d = *[1u64, 2, 5].choose(&mut r).unwrap();
            wallet.push(utxo::withdraw(&mut r, &mut ledger, d).unwrap());
            *outstanding.entry(d).or_default() += 1;
            continue;
        }
        let tok = wallet.choose(&mut r).unwrap().clone();
        let split: Vec<u64> = match tok.denomination {
            5 => vec![2, 2, 1],
            2 => vec![1, 1],
            _ => vec![1],
        };
        let got = utxo::pay_private(&mut r, &mut ledger, &tok, &split);
        let fresh = !spent_serials.contains(&tok.serial);
        ensure!(got.is_ok() == fresh, "seed {seed}: deposit ok={} fresh={fresh}", got.is_ok());
        if let Ok((_, new)) = got {
            spent_serials.insert(tok.serial);
            *outstanding.get_mut(&tok.denomination).unwrap() -= 1;
            for t in new {
                *outstanding.entry(t.denomination).or_default() += 1;
                wallet.push(t);
            }
        }
    }
    let replayed = UtxoState::replay(&round_trip(ledger.network().log())).map_err(|e| e.to_string())?;
    ensure!(&replayed == ledger.state(), "seed {seed}: replay differs");
    let oracle_spent: BTreeSet<TokenId> = spent_serials.iter().map(|s| TokenId::Serial(*s)).collect();
    ensure!(replayed.spent.iter().cloned().collect::<BTreeSet<_>>() == oracle_spent, "seed {seed}: spent serials differ");
    outstanding.retain(|_, v| *v > 0);
    let mut rep_out = replayed.outstanding.clone();
    rep_out.retain(|_, v| *v > 0);
    ensure!(rep_out == outstanding, "seed {seed}: outstanding {rep_out:?} vs {outstanding:?}");
    Ok(())
}

fn replay_accounts(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = random_network(&mut r);
    let mut net = LedgerNetwork::new(&mut r, &cfg);
    let names: Vec<AccountId> = ["a", "b", "c", "d"].iter().map(|n| AccountId::new(*n).unwrap()).collect();
    for n in &names {
        net.register_party(n.clone());
    }
    let mut oracle: BTreeMap<AccountId, u64> = names.iter().map(|n| (n.clone(), r.gen_range(0..50))).collect();
    let genesis = AccountState::from_balances(oracle.clone());
    let mut state = genesis.clone();
    for _ in 0..40 {
        let from = names.choose(&mut r).unwrap().clone();
        let to = names.choose(&mut r).unwrap().clone();
        let amount = r.gen_range(0..30);
        let expect_ok = amount > 0 && oracle[&from] >= amount;
        match net.apply_balance_transfer(&state, from.clone(), to.clone(), amount) {
            Ok((_, next)) => {
                ensure!(expect_ok, "seed {seed}: accepted a transfer the oracle refuses");
                state = next;
                *oracle.get_mut(&from).unwrap() -= amount;
                *oracle.get_mut(&to).unwrap() += amount;
            }
            Err(e) => ensure!(!expect_ok, "seed {seed}: refused {e}"),
        }
        if r.gen_bool(0.2) {
            net.record_interledger_transfer(from, to, amount.max(1)).unwrap();
        }
    }
    let replayed = AccountState::replay(&genesis, &round_trip(net.log())).map_err(|e| e.to_string())?;
    ensure!(replayed == state, "seed {seed}: replay differs");
    ensure!(replayed.balances == oracle, "seed {seed}: balances differ from oracle");
    Ok(())
}

fn ledger_replay() -> Check {
    for seed in 0..50 {
        replay_transparent(seed)?;
        replay_private(seed)?;
        replay_accounts(seed)?;
    }
    Ok("50 seeds each for transparent utxo, private utxo, accounts: replay through log text equals final state and oracle".into())
}

// ---------------------------------------------------------------------------
// Quorum safety

fn certified_digests(entries: &[&LedgerEntry], keys: &BTreeMap<PeerId, PublicKey>, threshold: usize) -> BTreeSet<crypto::Digest> {
    let mut signers: BTreeMap<crypto::Digest, BTreeSet<PeerId>> = BTreeMap::new();
    for e in entries {
        let d = e.digest();
        for s in &e.quorum_cert {
            if keys.get(&s.peer).is_some_and(|k| crypto::verify(k, d.as_bytes(), &s.signature)) {
                signers.entry(d).or_default().insert(s.peer);
            }
        }
    }
    signers.into_iter().filter(|(_, s)| s.len() >= threshold).map(|(d, _)| d).collect()
}

fn quorum_safety() -> Check {
    let behaviours = [PeerBehaviour::Honest, PeerBehaviour::Silent, PeerBehaviour::Equivocating];
    let mut configs = 0;
    let mut certified = 0;
    let mut refused = 0;
    for n in [4usize, 7] {
        let tolerated = (n - 1) / 3;
        let threshold = (2 * n).div_ceil(3);
        for assignment in std::iter::repeat_n(behaviours.iter(), n).multi_cartesian_product() {
            configs += 1;
            let mut cfg = NetworkConfig::honest(n);
            for (i, b) in assignment.iter().enumerate() {
                cfg = cfg.with_fault(i as u16, **b);
            }
            let faulty = assignment.iter().filter(|b| ***b != PeerBehaviour::Honest).count();
            let mut r = rng(configs);
            let mut net = LedgerNetwork::new(&mut r, &cfg);
            ensure!(net.threshold() == threshold, "threshold {} for n={n}", net.threshold());
            let a = AccountId::new("fid-a").unwrap();
            let b = AccountId::new("fid-b").unwrap();
            net.register_party(a.clone());
            net.register_party(b.clone());
            for round in 0..3u8 {
                let res = net.record_external_evidence((a.clone(), b.clone()), crypto::hash(&[round]));
                if faulty <= tolerated {
                    ensure!(res.is_ok(), "n={n} {assignment:?}: {faulty} faults refused: {res:?}");
                    certified += 1;
                } else {
                    ensure!(
                        res.as_ref().err().map(Rejection::code) == Some("REJECTED_NO_QUORUM"),
                        "n={n} {assignment:?}: {faulty} faults gave {res:?}"
                    );
                    refused += 1;
                }
            }
            let keys = net.peer_keys();
            let max_index = net.log().len() as u64 + 1;
            for idx in 0..max_index {
                let at: Vec<&LedgerEntry> = net
                    .log()
                    .iter()
                    .chain(net.fork_attempts())
                    .chain(net.peers().iter().flat_map(|p| p.local_log.iter()))
                    .filter(|e| e.index == idx)
                    .collect();
                let c = certified_digests(&at, &keys, threshold);
                ensure!(c.len() <= 1, "n={n} {assignment:?}: {} certified entries at index {idx}", c.len());
            }
            ensure!(net.audit().is_clean(), "n={n} {assignment:?}: audit {:?}", net.audit());
        }
    }
    Ok(format!(
        "{configs} fault assignments over N in {{4, 7}}: {certified} certified, {refused} NO_QUORUM, never two certified entries at one index"
    ))
}

// ---------------------------------------------------------------------------
// Determinism

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let loaded = scenario::load_file(&path, false).map_err(|e| format!("{name}: {e}"))?;
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        let ea = scenario::run(&loaded, Some(42), &a).map_err(|e| e.to_string())?;
        scenario::run(&loaded, Some(42), &b).map_err(|e| e.to_string())?;
        ensure!(ea.exit_code() == 0, "{name}: {:?}", ea.failure);
        let (fa, fb) = (files(&a), files(&b));
        ensure!(fa.len() >= 6, "{name}: only {} files written", fa.len());
        ensure!(fa == fb, "{name}: outputs differ between runs");
        names.push(name);
    }
    ensure!(names.len() >= 10, "only {} bundled scenarios", names.len());
    Ok(format!("{} bundled scenarios, two runs each with seed 42, byte-identical", names.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("double-spend exclusion (utxo)", Some(10), utxo_double_spend),
        ("double-spend exclusion (uso, dlt)", Some(30), uso_double_spend),
        ("equivocation contrast", None, equivocation_contrast),
        ("constant ledger growth (uso)", None, constant_growth),
        ("linkage contrast", None, linkage_contrast),
        ("proof soundness and completeness", Some(60), mutation_soundness),
        ("ledger replay", None, ledger_replay),
        ("quorum safety", None, quorum_safety),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(detail), Some(limit)) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit}s"))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
