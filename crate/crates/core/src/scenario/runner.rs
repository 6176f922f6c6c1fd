use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::schema::{Action, Centralisation, Loaded, OutputSpec, Scenario};
use crate::analysis::{self, EquivocationAudit};
use crate::crypto::{self, KeyPair, PublicKey, BLIND_KEY_BITS};
use crate::dlt::{AccountId, AccountState, AuditReport, LedgerEntry, LedgerNetwork, NetworkConfig, PeerId};
use crate::error::{Rejection, Result};
use crate::transcript::{IssuanceTranscript, ObserverTranscript};
use crate::uso::{
    self, verify_asset, DltSource, Equivocation, Leaf, Mitigation, Operator,
    OperatorId, ProofOfProvenance, SelfAttestedSource, StateUpdate, SubmissionReceipt, UsoAsset,
    UsoIssuer,
};
use crate::utxo::{
    self, OutPoint, PrivateToken, TxOutput, UtxoLedger, UtxoState, UtxoTransaction,
    DEFAULT_DENOMINATIONS,
};
use crate::{Privacy, System};

/// Result of one script step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub line: Option<usize>,
    pub action: String,
    pub outcome: String,
    pub expected: String,
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Accepted transactions so far.
    pub transactions: u64,
    /// Certified ledger entries so far.
    pub ledger_entries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum FinalState {
    Utxo {
        live_outputs: usize,
        spent: usize,
        outstanding_private: BTreeMap<u64, u64>,
        supply: u128,
        replay_matches: bool,
    },
    Uso {
        closed_epochs: u64,
        submissions: usize,
        assets: usize,
        verdicts: BTreeMap<String, String>,
    },
    Accounts {
        balances: BTreeMap<String, u64>,
        replay_matches: bool,
    },
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct Execution {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Message for the first step whose outcome differed from the script.
    pub failure: Option<String>,
    pub log: Vec<LedgerEntry>,
    pub peer_keys: BTreeMap<PeerId, PublicKey>,
    pub threshold: usize,
    pub issuer: Option<IssuanceTranscript>,
    pub observer: Option<ObserverTranscript>,
    pub operator_received: Vec<SubmissionReceipt>,
    pub proofs: Vec<ProofOfProvenance>,
    pub ledger_audit: Option<AuditReport>,
    pub equivocation_audit: Option<EquivocationAudit>,
    pub state: FinalState,
}

impl Execution {
    /// 0 when every step matched its expectation, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            3
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
enum Held {
    Output(OutPoint),
    Private(PrivateToken),
}

#[derive(Debug, Clone)]
struct HeldAsset {
    asset: UsoAsset,
    overrides: Vec<Equivocation>,
}

struct UsoWorld {
    net: LedgerNetwork,
    operator: Operator,
    issuer: UsoIssuer,
    assets: BTreeMap<String, HeldAsset>,
    proofs: Vec<ProofOfProvenance>,
    verdicts: BTreeMap<String, String>,
}

enum World {
    Utxo {
        ledger: Box<UtxoLedger>,
        authority: KeyPair,
        tokens: BTreeMap<String, (Held, String)>,
    },
    Uso(Box<UsoWorld>),
    Accounts {
        net: LedgerNetwork,
        genesis: AccountState,
        state: AccountState,
    },
}

struct Runner {
    rng: ChaCha20Rng,
    parties: BTreeMap<String, KeyPair>,
    world: World,
    transactions: u64,
    last_equivocation: Option<EquivocationAudit>,
    last_ledger_audit: Option<AuditReport>,
}

fn network_config(c: &Centralisation) -> NetworkConfig {
    match c {
        Centralisation::Centralised => NetworkConfig::centralised(),
        Centralisation::Decentralised { peers, faults } => NetworkConfig {
            peers: *peers,
            faults: faults.iter().map(|(p, b)| (PeerId(*p), *b)).collect(),
        },
    }
}

fn account(name: &str) -> Result<AccountId> {
    AccountId::new(name)
}

impl Runner {
    fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut net = LedgerNetwork::new(&mut rng, &network_config(&scenario.centralisation));
        let parties: BTreeMap<String, KeyPair> = scenario
            .parties
            .iter()
            .map(|p| (p.clone(), KeyPair::generate(&mut rng)))
            .collect();
        let bits = scenario.blind_key_bits.unwrap_or(BLIND_KEY_BITS);
        let denominations = scenario
            .denominations
            .clone()
            .unwrap_or_else(|| DEFAULT_DENOMINATIONS.into_iter().collect());
        let world = match scenario.system {
            System::Utxo => {
                let authority = KeyPair::generate(&mut rng);
                let ledger = match scenario.privacy {
                    Privacy::Transparent => UtxoLedger::transparent(net, authority.public),
                    Privacy::Private => {
                        UtxoLedger::private_with_key_bits(&mut rng, net, &denominations, bits)?
                    }
                };
                World::Utxo {
                    ledger: Box::new(ledger),
                    authority,
                    tokens: BTreeMap::new(),
                }
            }
            System::Uso => {
                let mitigation = scenario
                    .effective_mitigation()
                    .unwrap_or(Mitigation::Dlt);
                let operator = Operator::new(&mut rng, OperatorId::new("operator-0"), mitigation);
                if mitigation == Mitigation::Dlt {
                    operator.register(&mut net);
                }
                let issuer = UsoIssuer::with_key_bits(&mut rng, scenario.privacy, &denominations, bits);
                World::Uso(Box::new(UsoWorld {
                    net,
                    operator,
                    issuer,
                    assets: BTreeMap::new(),
                    proofs: Vec::new(),
                    verdicts: BTreeMap::new(),
                }))
            }
            System::Accounts => {
                for p in &scenario.parties {
                    net.register_party(account(p)?);
                }
                let genesis = AccountState::from_balances(
                    scenario
                        .parties
                        .iter()
                        .map(|p| Ok((account(p)?, scenario.balances.get(p).copied().unwrap_or(0))))
                        .collect::<Result<Vec<_>>>()?,
                );
                World::Accounts {
                    net,
                    state: genesis.clone(),
                    genesis,
                }
            }
        };
        Ok(Self {
            rng,
            parties,
            world,
            transactions: 0,
            last_equivocation: None,
            last_ledger_audit: None,
        })
    }

    fn key(&self, party: &str) -> Result<&KeyPair> {
        self.parties
            .get(party)
            .ok_or_else(|| Rejection::UnknownParty(party.to_string()))
    }

    fn party_of(&self, key: &PublicKey) -> Option<&KeyPair> {
        self.parties.values().find(|k| k.public == *key)
    }

    fn network(&self) -> &LedgerNetwork {
        match &self.world {
            World::Utxo { ledger, .. } => ledger.network(),
            World::Uso(w) => &w.net,
            World::Accounts { net, .. } => net,
        }
    }

    fn step(&mut self, action: &Action) -> Result<String> {
        let ok = || Ok("OK".to_string());
        match action {
            Action::Mint { to, value, label } => {
                let owner = self.key(to)?.public;
                let World::Utxo { ledger, authority, tokens } = &mut self.world else {
                    unreachable!("validated")
                };
                let held = match ledger.privacy() {
                    Privacy::Transparent => {
                        let tx = ledger.mint(authority, vec![TxOutput { value: *value, owner }])?;
                        Held::Output(tx.outpoint(0))
                    }
                    Privacy::Private => Held::Private(utxo::withdraw(&mut self.rng, ledger, *value)?),
                };
                tokens.insert(label.clone(), (held, to.clone()));
                self.transactions += 1;
                ok()
            }
            Action::Spend { inputs, outputs, signer } => self.spend(inputs, outputs, signer.as_deref()),
            Action::Issue { to, denomination, label } => {
                let owner = self.key(to)?.public;
                let World::Uso(w) = &mut self.world else { unreachable!("validated") };
                let (asset, _) =
                    uso::issue_asset(&mut self.rng, &mut w.operator, &mut w.issuer, *denomination, owner)?;
                w.assets.insert(label.clone(), HeldAsset { asset, overrides: Vec::new() });
                self.transactions += 1;
                ok()
            }
            Action::Transfer { asset: Some(asset), to, label, signer, .. } => {
                let recipient = self.key(to)?.public;
                let World::Uso(w) = &self.world else { unreachable!("validated") };
                let held = w
                    .assets
                    .get(asset)
                    .ok_or_else(|| Rejection::UnknownToken(asset.clone()))?
                    .clone();
                let sender = match signer {
                    Some(s) => self.key(s)?.clone(),
                    None => self
                        .party_of(&held.asset.owner())
                        .ok_or_else(|| Rejection::UnknownParty("asset owner".into()))?
                        .clone(),
                };
                let World::Uso(w) = &mut self.world else { unreachable!("validated") };
                let (next, _) = uso::transfer(&held.asset, &sender, recipient, &mut w.operator)?;
                let label = label.clone().expect("validated");
                w.assets.insert(label, HeldAsset { asset: next, overrides: held.overrides });
                self.transactions += 1;
                ok()
            }
            Action::Transfer { from: Some(from), to, amount: Some(amount), .. } => {
                let World::Accounts { net, state, .. } = &mut self.world else {
                    unreachable!("validated")
                };
                let (_, next) = net.apply_balance_transfer(state, account(from)?, account(to)?, *amount)?;
                *state = next;
                self.transactions += 1;
                ok()
            }
            Action::Transfer { .. } => Err(Rejection::invalid("malformed transfer")),
            Action::CloseEpoch => {
                let World::Uso(w) = &mut self.world else { unreachable!("validated") };
                w.operator.close_epoch(Some(&mut w.net))?;
                ok()
            }
            Action::Verify { asset } => {
                let World::Uso(w) = &mut self.world else { unreachable!("validated") };
                let held = w
                    .assets
                    .get_mut(asset)
                    .ok_or_else(|| Rejection::UnknownToken(asset.clone()))?;
                let from = held.asset.proof.from_epoch;
                let to = w.operator.last_closed_epoch().ok_or(Rejection::EpochOpen {
                    epoch: w.operator.open_epoch(),
                })?;
                held.asset.proof =
                    w.operator
                        .prove_provenance_with(&held.asset.asset_id, from, to, &held.overrides)?;
                let keys = w.issuer.keys();
                let verdict = match w.operator.mitigation() {
                    Mitigation::Dlt => verify_asset(&held.asset, &keys, &DltSource::new(&w.net)),
                    Mitigation::SelfAttested => {
                        let src = SelfAttestedSource {
                            operator_key: w.operator.public_key(),
                            latest_epoch: w.operator.last_closed_epoch(),
                        };
                        verify_asset(&held.asset, &keys, &src)
                    }
                };
                w.proofs.push(held.asset.proof.clone());
                w.verdicts.insert(asset.clone(), verdict.code().to_string());
                Ok(verdict.code().to_string())
            }
            Action::Equivocate { asset, to, label, publish } => {
                let recipient = self.key(to)?.public;
                let World::Uso(w) = &self.world else { unreachable!("validated") };
                let held = w
                    .assets
                    .get(asset)
                    .ok_or_else(|| Rejection::UnknownToken(asset.clone()))?;
                let Some(last) = held.asset.updates.last() else {
                    return Err(Rejection::invalid("asset has no update to fork"));
                };
                let mut base = held.asset.clone();
                base.updates.pop();
                let sender = self
                    .party_of(&base.owner())
                    .ok_or_else(|| Rejection::UnknownParty("previous owner".into()))?
                    .clone();
                let epoch = (0..w.operator.open_epoch())
                    .rev()
                    .find(|e| {
                        w.operator
                            .tree(*e)
                            .and_then(|t| t.get(&base.asset_id))
                            .is_some_and(|l| l.record == last.digest())
                    })
                    .ok_or_else(|| Rejection::invalid("last update is not in a closed epoch"))?;
                let fork = StateUpdate::new(
                    base.asset_id,
                    last.counter,
                    last.prev_digest,
                    recipient,
                    &sender,
                );
                let leaves: Vec<Leaf> = w
                    .operator
                    .tree(epoch)
                    .expect("closed epoch")
                    .leaves()
                    .iter()
                    .map(|l| {
                        if l.asset_id == base.asset_id {
                            Leaf { asset_id: l.asset_id, record: fork.digest() }
                        } else {
                            *l
                        }
                    })
                    .collect();
                let eq = w.operator.equivocate(epoch, leaves)?;
                let mut forked = base;
                forked.updates.push(fork);
                let commitment = eq.commitment.clone();
                let World::Uso(w) = &mut self.world else { unreachable!("validated") };
                w.assets.insert(
                    label.clone(),
                    HeldAsset { asset: forked, overrides: vec![eq] },
                );
                if *publish {
                    uso::publish_commitment(&mut w.net, commitment)?;
                }
                ok()
            }
            Action::Evidence { fiduciaries, reference } => {
                let World::Accounts { net, .. } = &mut self.world else { unreachable!("validated") };
                net.record_external_evidence(
                    (account(&fiduciaries[0])?, account(&fiduciaries[1])?),
                    crypto::hash(reference.as_bytes()),
                )?;
                self.transactions += 1;
                ok()
            }
            Action::Interledger { from, to, amount } => {
                let World::Accounts { net, .. } = &mut self.world else { unreachable!("validated") };
                net.record_interledger_transfer(account(from)?, account(to)?, *amount)?;
                self.transactions += 1;
                ok()
            }
            Action::SetFault { peer, behaviour } => {
                match &mut self.world {
                    World::Utxo { ledger, .. } => ledger.set_peer_behaviour(PeerId(*peer), *behaviour),
                    World::Uso(w) => w.net.set_behaviour(PeerId(*peer), *behaviour),
                    World::Accounts { net, .. } => net.set_behaviour(PeerId(*peer), *behaviour),
                }
                ok()
            }
            Action::Audit { findings } => {
                let ledger = self.network().audit();
                let equivocation = match &self.world {
                    World::Uso(w) => Some(analysis::equivocation_audit(
                        w.net.log(),
                        &w.proofs,
                        w.operator.mitigation(),
                    )),
                    _ => None,
                };
                let outcome = if !ledger.is_clean() {
                    "LEDGER_VIOLATION"
                } else {
                    match &equivocation {
                        Some(EquivocationAudit::Undetectable) => "UNDETECTABLE",
                        Some(a) if !a.findings().is_empty() => "FINDINGS",
                        _ => "CLEAN",
                    }
                };
                let count = equivocation.as_ref().map_or(0, |a| a.findings().len());
                self.last_ledger_audit = Some(ledger);
                self.last_equivocation = equivocation;
                if let Some(n) = findings {
                    if *n != count {
                        return Ok(format!("{outcome} ({count} findings, expected {n})"));
                    }
                }
                Ok(outcome.to_string())
            }
        }
    }

    fn spend(&mut self, inputs: &[String], outputs: &[OutputSpec], signer: Option<&str>) -> Result<String> {
        let recipients: Vec<PublicKey> = outputs
            .iter()
            .map(|o| self.key(&o.to).map(|k| k.public))
            .collect::<Result<_>>()?;
        let World::Utxo { ledger, tokens, .. } = &self.world else { unreachable!("validated") };
        let held: Vec<(Held, String)> = inputs
            .iter()
            .map(|l| tokens.get(l).cloned().ok_or_else(|| Rejection::UnknownToken(l.clone())))
            .collect::<Result<_>>()?;
        match ledger.privacy() {
            Privacy::Transparent => {
                let mut ops = Vec::new();
                let mut signers = Vec::new();
                for (h, holder) in &held {
                    let Held::Output(op) = h else { unreachable!("transparent ledger") };
                    ops.push(*op);
                    signers.push(self.key(signer.unwrap_or(holder))?.clone());
                }
                let outs = outputs
                    .iter()
                    .zip(&recipients)
                    .map(|(o, k)| TxOutput { value: o.value, owner: *k })
                    .collect();
                let tx = UtxoTransaction::transfer(ops, outs, &signers.iter().collect::<Vec<_>>());
                let World::Utxo { ledger, tokens, .. } = &mut self.world else { unreachable!() };
                ledger.spend(tx.clone())?;
                for (i, o) in outputs.iter().enumerate() {
                    tokens.insert(o.label.clone(), (Held::Output(tx.outpoint(i as u32)), o.to.clone()));
                }
            }
            Privacy::Private => {
                let Held::Private(token) = &held[0].0 else { unreachable!("private ledger") };
                let split: Vec<u64> = outputs.iter().map(|o| o.value).collect();
                let World::Utxo { ledger, tokens, .. } = &mut self.world else { unreachable!() };
                let (_, fresh) = utxo::pay_private(&mut self.rng, ledger, token, &split)?;
                for (o, t) in outputs.iter().zip(fresh) {
                    tokens.insert(o.label.clone(), (Held::Private(t), o.to.clone()));
                }
            }
        }
        self.transactions += 1;
        Ok("OK".to_string())
    }

    fn finish(self, seed: u64, records: Vec<StepRecord>, failure: Option<String>) -> Execution {
        let net = self.network();
        let log = net.log().to_vec();
        let peer_keys = net.peer_keys();
        let threshold = net.threshold();
        let ledger_audit = Some(self.last_ledger_audit.clone().unwrap_or_else(|| net.audit()));
        let mut equivocation_audit = self.last_equivocation.clone();
        let (issuer, observer, operator_received, proofs, state) = match self.world {
            World::Utxo { ledger, .. } => {
                let s = ledger.state();
                let replay = UtxoState::replay(&log);
                let state = FinalState::Utxo {
                    live_outputs: s.live.len(),
                    spent: s.spent.len(),
                    outstanding_private: s.outstanding.clone(),
                    supply: s.minted,
                    replay_matches: replay.as_ref() == Ok(s),
                };
                (
                    Some(ledger.issuance_transcript()),
                    Some(analysis::utxo_observer_transcript(&log, ledger.privacy())),
                    Vec::new(),
                    Vec::new(),
                    state,
                )
            }
            World::Uso(w) => {
                let privacy = w.issuer.privacy();
                if equivocation_audit.is_none() {
                    equivocation_audit = Some(analysis::equivocation_audit(
                        &log,
                        &w.proofs,
                        w.operator.mitigation(),
                    ));
                }
                let state = FinalState::Uso {
                    closed_epochs: w.operator.open_epoch(),
                    submissions: w.operator.submissions().len(),
                    assets: w.assets.len(),
                    verdicts: w.verdicts,
                };
                (
                    Some(w.issuer.transcript()),
                    Some(w.operator.observer_transcript(privacy)),
                    w.operator.submissions().to_vec(),
                    w.proofs,
                    state,
                )
            }
            World::Accounts { genesis, state, .. } => {
                let replay = AccountState::replay(&genesis, &log);
                let replay_matches = replay.as_ref() == Ok(&state);
                let balances = state
                    .balances
                    .iter()
                    .map(|(k, v)| (k.as_str().to_string(), *v))
                    .collect();
                (None, None, Vec::new(), Vec::new(), FinalState::Accounts { balances, replay_matches })
            }
        };
        Execution {
            seed,
            records,
            failure,
            log,
            peer_keys,
            threshold,
            issuer,
            observer,
            operator_received,
            proofs,
            ledger_audit,
            equivocation_audit,
            state,
        }
    }
}

/// Runs every step in order, stopping at the first outcome that differs
/// from the script. `seed` overrides the scenario's own.
pub fn execute(loaded: &Loaded, seed: Option<u64>) -> Result<Execution> {
    let scenario = &loaded.scenario;
    let seed = seed
        .or(scenario.seed)
        .ok_or_else(|| Rejection::invalid("seed required"))?;
    let mut runner = Runner::new(scenario, seed)?;
    let mut records = Vec::with_capacity(scenario.script.len());
    let mut failure = None;
    for (index, step) in scenario.script.iter().enumerate() {
        let line = loaded.step_lines.get(index).copied();
        let (outcome, detail) = match runner.step(&step.action) {
            Ok(o) => (o, None),
            Err(e) => (e.code().to_string(), Some(e.to_string())),
        };
        let expected = step.expected().to_string();
        let matched = outcome == expected;
        records.push(StepRecord {
            index,
            line,
            action: step.action.name().to_string(),
            outcome: outcome.clone(),
            expected: expected.clone(),
            matched,
            detail: detail.clone(),
            transactions: runner.transactions,
            ledger_entries: runner.network().log().len() as u64,
        });
        if !matched {
            let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
            let why = detail.map(|d| format!(" ({d})")).unwrap_or_default();
            failure = Some(format!(
                "{at}script[{index}] ({}): expected {expected}, got {outcome}{why}",
                step.action.name()
            ));
            break;
        }
    }
    Ok(runner.finish(seed, records, failure))
}
