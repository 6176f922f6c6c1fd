use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::dlt::{AccountId, PeerBehaviour};
use crate::error::Rejection;
use crate::uso::{Mitigation, Verdict};
use crate::{Privacy, System};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Centralisation {
    Centralised,
    Decentralised {
        peers: usize,
        #[serde(
            default,
            skip_serializing_if = "BTreeMap::is_empty",
            deserialize_with = "peer_keyed"
        )]
        faults: BTreeMap<u16, PeerBehaviour>,
    },
}

// Map keys arrive as strings once serde has buffered the tagged enum.
fn peer_keyed<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<u16, PeerBehaviour>, D::Error> {
    BTreeMap::<String, PeerBehaviour>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u16>()
                .map(|p| (p, v))
                .map_err(|_| serde::de::Error::custom(format!("peer id {k:?} is not a number")))
        })
        .collect()
}

impl Centralisation {
    pub fn mode(&self) -> Axis {
        match self {
            Centralisation::Centralised => Axis::Centralised,
            Centralisation::Decentralised { .. } => Axis::Decentralised,
        }
    }

    pub fn peers(&self) -> usize {
        match self {
            Centralisation::Centralised => 1,
            Centralisation::Decentralised { peers, .. } => *peers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Centralised,
    Decentralised,
}

/// How a system keeps track of token state: the first axis of the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    /// The ledger tracks each token (UTXO).
    Endogenous,
    /// Assets track their own state (USO).
    Oblivious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quadrant {
    pub tracking: Tracking,
    pub centralisation: Axis,
    pub privacy: Privacy,
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.tracking {
            Tracking::Endogenous => "endogenous",
            Tracking::Oblivious => "oblivious",
        };
        let c = match self.centralisation {
            Axis::Centralised => "centralised",
            Axis::Decentralised => "decentralised",
        };
        write!(f, "{t}/{c}/{}", self.privacy)
    }
}

/// The cells this lab implements: all four oblivious cells and three of
/// the endogenous ones. Decentralised private UTXO needs ring signatures or
/// zero-knowledge proofs, which are not implemented.
pub fn in_scope_quadrants() -> BTreeSet<Quadrant> {
    let mut cells = BTreeSet::new();
    for centralisation in [Axis::Centralised, Axis::Decentralised] {
        for privacy in [Privacy::Transparent, Privacy::Private] {
            cells.insert(Quadrant {
                tracking: Tracking::Oblivious,
                centralisation,
                privacy,
            });
            if !(centralisation == Axis::Decentralised && privacy == Privacy::Private) {
                cells.insert(Quadrant {
                    tracking: Tracking::Endogenous,
                    centralisation,
                    privacy,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub to: String,
    pub value: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// UTXO: new transparent output, or a blind withdrawal of one token
    /// whose denomination is `value`.
    Mint { to: String, value: u64, label: String },
    /// UTXO: consume `inputs`, create `outputs`. Signed by the holders of
    /// the inputs unless `signer` is given.
    Spend {
        inputs: Vec<String>,
        outputs: Vec<OutputSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signer: Option<String>,
    },
    /// USO: new asset.
    Issue {
        to: String,
        denomination: u64,
        label: String,
    },
    /// USO: hand `asset` to `to`, naming the result `label`. Accounts:
    /// move `amount` from `from` to `to`.
    Transfer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        to: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amount: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signer: Option<String>,
    },
    /// USO: close the operator's open epoch.
    CloseEpoch,
    /// USO: refresh the asset's proof and verify it.
    Verify { asset: String },
    /// USO: the operator and the previous owner of `asset` fork the epoch
    /// of its last update, handing a conflicting copy to `to`.
    Equivocate {
        asset: String,
        to: String,
        label: String,
        /// Also try to certify the alternate root on the ledger.
        #[serde(default)]
        publish: bool,
    },
    /// Accounts: two fiduciaries attest an external transfer.
    Evidence {
        fiduciaries: [String; 2],
        reference: String,
    },
    /// Accounts: record a transfer between externally managed accounts.
    Interledger { from: String, to: String, amount: u64 },
    /// Change one peer's behaviour from here on.
    SetFault { peer: u16, behaviour: PeerBehaviour },
    /// Ledger certificate audit plus equivocation audit.
    Audit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        findings: Option<usize>,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Mint { .. } => "mint",
            Action::Spend { .. } => "spend",
            Action::Issue { .. } => "issue",
            Action::Transfer { .. } => "transfer",
            Action::CloseEpoch => "close_epoch",
            Action::Verify { .. } => "verify",
            Action::Equivocate { .. } => "equivocate",
            Action::Evidence { .. } => "evidence",
            Action::Interledger { .. } => "interledger",
            Action::SetFault { .. } => "set_fault",
            Action::Audit { .. } => "audit",
        }
    }

    /// Label this step defines on success.
    pub fn defines(&self) -> Vec<&str> {
        match self {
            Action::Mint { label, .. } | Action::Issue { label, .. } | Action::Equivocate { label, .. } => {
                vec![label]
            }
            Action::Spend { outputs, .. } => outputs.iter().map(|o| o.label.as_str()).collect(),
            Action::Transfer { label: Some(l), .. } => vec![l],
            _ => Vec::new(),
        }
    }

    fn uses(&self) -> Vec<&str> {
        match self {
            Action::Spend { inputs, .. } => inputs.iter().map(String::as_str).collect(),
            Action::Transfer { asset: Some(a), .. } => vec![a],
            Action::Verify { asset } | Action::Equivocate { asset, .. } => vec![asset],
            _ => Vec::new(),
        }
    }

    fn parties(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        match self {
            Action::Mint { to, .. } | Action::Issue { to, .. } | Action::Equivocate { to, .. } => v.push(to),
            Action::Spend { outputs, signer, .. } => {
                v.extend(outputs.iter().map(|o| o.to.as_str()));
                v.extend(signer.as_deref());
            }
            Action::Transfer { from, to, signer, .. } => {
                v.push(to);
                v.extend(from.as_deref());
                v.extend(signer.as_deref());
            }
            Action::Evidence { fiduciaries, .. } => v.extend(fiduciaries.iter().map(String::as_str)),
            Action::Interledger { from, to, .. } => {
                v.push(from);
                v.push(to);
            }
            _ => {}
        }
        v
    }

    /// Outcome expected when the step gives none.
    pub fn default_expect(&self) -> &'static str {
        match self {
            Action::Verify { .. } => "VALID",
            Action::Audit { .. } => "CLEAN",
            _ => "OK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    #[serde(flatten)]
    pub action: Action,
    /// `OK`, a rejection code, a verdict, or an audit outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
}

impl Step {
    pub fn expected(&self) -> &str {
        self.expect
            .as_deref()
            .unwrap_or_else(|| self.action.default_expect())
    }
}

/// Audit outcomes a script may expect.
pub const AUDIT_OUTCOMES: [&str; 4] = ["CLEAN", "FINDINGS", "UNDETECTABLE", "LEDGER_VIOLATION"];

const VERDICTS: [Verdict; 6] = [
    Verdict::Valid,
    Verdict::BadGenesis,
    Verdict::BrokenChain,
    Verdict::BadEncumbrance,
    Verdict::ProofMismatch,
    Verdict::HistoryGap,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOf<S> {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub system: System,
    pub centralisation: Centralisation,
    pub privacy: Privacy,
    /// USO only. Defaults from the centralisation axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<Mitigation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominations: Option<BTreeSet<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blind_key_bits: Option<usize>,
    #[serde(default)]
    pub parties: Vec<String>,
    /// Accounts only: opening balances.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub balances: BTreeMap<String, u64>,
    pub script: Vec<S>,
}

pub type Scenario = ScenarioOf<Step>;

impl Scenario {
    pub fn quadrant(&self) -> Option<Quadrant> {
        let tracking = match self.system {
            System::Utxo => Tracking::Endogenous,
            System::Uso => Tracking::Oblivious,
            System::Accounts => return None,
        };
        Some(Quadrant {
            tracking,
            centralisation: self.centralisation.mode(),
            privacy: self.privacy,
        })
    }

    pub fn effective_mitigation(&self) -> Option<Mitigation> {
        (self.system == System::Uso).then(|| {
            self.mitigation.unwrap_or(match self.centralisation.mode() {
                Axis::Centralised => Mitigation::SelfAttested,
                Axis::Decentralised => Mitigation::Dlt,
            })
        })
    }
}

/// One problem found while loading or validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub line: Option<usize>,
    pub step: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(s) = self.step {
            write!(f, "script[{s}]: ")?;
        }
        f.write_str(&self.message)
    }
}

fn strip_position(err: &serde_json::Error) -> String {
    let s = err.to_string();
    match s.rsplit_once(" at line ") {
        Some((msg, _)) => msg.to_string(),
        None => s,
    }
}

/// A parsed scenario with the 1-based line on which each step starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loaded {
    pub scenario: Scenario,
    pub step_lines: Vec<usize>,
}

/// Parses scenario JSON without semantic checks.
pub fn parse(text: &str) -> Result<Loaded, Vec<Violation>> {
    let doc: ScenarioOf<&RawValue> = serde_json::from_str(text).map_err(|e| {
        vec![Violation {
            line: Some(e.line()),
            step: None,
            message: strip_position(&e),
        }]
    })?;
    let base = text.as_ptr() as usize;
    let mut steps = Vec::with_capacity(doc.script.len());
    let mut step_lines = Vec::with_capacity(doc.script.len());
    let mut errors = Vec::new();
    for (i, raw) in doc.script.iter().enumerate() {
        let offset = raw.get().as_ptr() as usize - base;
        let line = text[..offset].matches('\n').count() + 1;
        step_lines.push(line);
        match serde_json::from_str::<Step>(raw.get()) {
            Ok(s) => steps.push(s),
            Err(e) => errors.push(Violation {
                line: Some(line + e.line() - 1),
                step: Some(i),
                message: strip_position(&e),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let ScenarioOf {
        name,
        description,
        system,
        centralisation,
        privacy,
        mitigation,
        seed,
        denominations,
        blind_key_bits,
        parties,
        balances,
        script: _,
    } = doc;
    Ok(Loaded {
        scenario: ScenarioOf {
            name,
            description,
            system,
            centralisation,
            privacy,
            mitigation,
            seed,
            denominations,
            blind_key_bits,
            parties,
            balances,
            script: steps,
        },
        step_lines,
    })
}

/// Parses and fully validates; the seed must be present.
pub fn load(text: &str) -> Result<Loaded, Vec<Violation>> {
    let loaded = parse(text)?;
    let v = validate(&loaded, false);
    if v.is_empty() {
        Ok(loaded)
    } else {
        Err(v)
    }
}

fn allowed(system: System, action: &Action) -> bool {
    match action {
        Action::Mint { .. } | Action::Spend { .. } => system == System::Utxo,
        Action::Issue { .. } | Action::CloseEpoch | Action::Verify { .. } | Action::Equivocate { .. } => {
            system == System::Uso
        }
        Action::Transfer { asset, from, amount, .. } => match system {
            System::Uso => asset.is_some() && from.is_none() && amount.is_none(),
            System::Accounts => asset.is_none() && from.is_some() && amount.is_some(),
            System::Utxo => false,
        },
        Action::Evidence { .. } | Action::Interledger { .. } => system == System::Accounts,
        Action::SetFault { .. } | Action::Audit { .. } => true,
    }
}

/// Static checks. `seed_supplied` waives the seed requirement when the
/// caller provides one.
pub fn validate(loaded: &Loaded, seed_supplied: bool) -> Vec<Violation> {
    let s = &loaded.scenario;
    let mut out = Vec::new();
    let mut top = |message: String| {
        out.push(Violation {
            line: None,
            step: None,
            message,
        })
    };

    if s.name.trim().is_empty() {
        top("name must not be empty".into());
    }
    if s.seed.is_none() && !seed_supplied {
        top("seed required".into());
    }
    if let Some(q) = s.quadrant() {
        if !in_scope_quadrants().contains(&q) {
            top(format!(
                "quadrant {q} is out of scope: decentralised private UTXO needs ring signatures or zero-knowledge proofs"
            ));
        }
    } else if s.privacy == Privacy::Private {
        top("accounts system supports only transparent privacy".into());
    }
    match &s.centralisation {
        Centralisation::Centralised => {}
        Centralisation::Decentralised { peers, faults } => {
            if *peers < 2 {
                top(format!("decentralised needs at least 2 peers, got {peers}"));
            }
            if *peers > u16::MAX as usize {
                top(format!("too many peers: {peers}"));
            }
            for p in faults.keys() {
                if *p as usize >= *peers {
                    top(format!("fault configured for peer {p}, but there are only {peers} peers"));
                }
            }
        }
    }
    match (s.system, s.mitigation) {
        (System::Uso, Some(m)) => {
            let consistent = match s.centralisation.mode() {
                Axis::Decentralised => m == Mitigation::Dlt,
                Axis::Centralised => m == Mitigation::SelfAttested,
            };
            if !consistent {
                top(format!(
                    "mitigation {m:?} does not match {:?}: decentralised USO uses dlt, centralised uses self_attested",
                    s.centralisation.mode()
                ));
            }
        }
        (System::Uso, None) => {}
        (_, Some(_)) => top("mitigation applies only to the uso system".into()),
        (_, None) => {}
    }
    if let Some(d) = &s.denominations {
        if s.privacy != Privacy::Private {
            top("denominations apply only to private mode".into());
        }
        if d.is_empty() || d.contains(&0) {
            top("denominations must be positive and non-empty".into());
        }
    }
    if let Some(bits) = s.blind_key_bits {
        if !(512..=4096).contains(&bits) {
            top(format!("blind_key_bits must be between 512 and 4096, got {bits}"));
        }
    }
    let mut names = BTreeSet::new();
    for p in &s.parties {
        if let Err(e) = AccountId::new(p.clone()) {
            top(format!("party {p:?}: {e}"));
        }
        if !names.insert(p.as_str()) {
            top(format!("party {p:?} declared twice"));
        }
    }
    if !s.balances.is_empty() && s.system != System::Accounts {
        top("balances apply only to the accounts system".into());
    }
    for b in s.balances.keys() {
        if !names.contains(b.as_str()) {
            top(format!("balance for undeclared party {b:?}"));
        }
    }

    let peers = s.centralisation.peers();
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for (i, step) in s.script.iter().enumerate() {
        let line = loaded.step_lines.get(i).copied();
        let mut bad = |message: String| {
            out.push(Violation {
                line,
                step: Some(i),
                message,
            })
        };
        let a = &step.action;
        if !allowed(s.system, a) {
            bad(format!(
                "action {} with these fields is not available in the {} system",
                a.name(),
                s.system
            ));
            continue;
        }
        for p in a.parties() {
            if !names.contains(p) {
                bad(format!("unknown party {p:?}"));
            }
        }
        for l in a.uses() {
            if !labels.contains(l) {
                bad(format!("label {l:?} is not defined by an earlier step"));
            }
        }
        for l in a.defines() {
            if l.is_empty() {
                bad("empty label".into());
            } else if !labels.insert(l) {
                bad(format!("label {l:?} defined twice"));
            }
        }
        match a {
            Action::Transfer { label: None, .. } if s.system == System::Uso => {
                bad("uso transfer needs a label for the recipient's copy".into())
            }
            Action::Spend { inputs, outputs, .. } => {
                if inputs.is_empty() || outputs.is_empty() {
                    bad("spend needs inputs and outputs".into());
                }
                if s.privacy == Privacy::Private && inputs.len() != 1 {
                    bad("private spend deposits exactly one token".into());
                }
            }
            Action::SetFault { peer, .. } if *peer as usize >= peers => {
                bad(format!("peer {peer} does not exist; the network has {peers}"))
            }
            _ => {}
        }
        let e = step.expected();
        let known = match a {
            Action::Verify { .. } => {
                VERDICTS.iter().any(|v| v.code() == e) || Rejection::CODES.contains(&e)
            }
            Action::Audit { .. } => AUDIT_OUTCOMES.contains(&e),
            _ => e == "OK" || Rejection::CODES.contains(&e),
        };
        if !known {
            bad(format!("unknown expected outcome {e:?} for {}", a.name()));
        }
    }
    out
}
