//! JSON scenario scripts: schema, static validation, execution, and the
//! output directory.
//!
//! A run writes:
//!
//! ```text
//! <out>/scenario.json             normalised input, with the seed used
//! <out>/ledger.log                certified entries, one JSON object per line
//! <out>/peers.json                peer verification keys and quorum threshold
//! <out>/transcripts/issuer.json   what the issuer saw
//! <out>/transcripts/observer.json what a ledger/operator observer saw
//! <out>/transcripts/operator.jsonl  USO submissions, one per line
//! <out>/transcripts/proofs.jsonl  proofs presented to verifiers
//! <out>/reports/steps.json        per-step outcome against expectation
//! <out>/reports/summary.json      final state and exit code
//! <out>/reports/linkage.json      linkage analysis (utxo, uso)
//! <out>/reports/audit.json        certificate and equivocation audits
//! <out>/reports/growth.csv        transactions vs ledger entries per step
//! ```
//!
//! `reports/linkage.json`, `audit.json` and `growth.csv` are derived from
//! the other files by [`report`] and can be regenerated.

mod runner;
mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use runner::{execute, Execution, FinalState, StepRecord};
pub use schema::{
    in_scope_quadrants, load, parse, validate, Action, Axis, Centralisation, Loaded, OutputSpec,
    Quadrant, Scenario, ScenarioOf, Step, Tracking, Violation, AUDIT_OUTCOMES,
};

use crate::analysis::{self, equivocation_audit, linkage_analysis, to_report_json, GrowthPoint, GrowthReport, GrowthSeries};
use crate::crypto::PublicKey;
use crate::dlt::{audit_log, import_log, read_lines, write_lines, export_log, LogIoError, PeerId};
use crate::error::Rejection;
use crate::transcript::{IssuanceTranscript, ObserverTranscript, SystemLabel};
use crate::uso::{ProofOfProvenance, SubmissionReceipt};
use crate::{Privacy, System};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}", render(.0))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Setup(Rejection),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Log(#[from] LogIoError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

fn render(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    /// Process exit code for this error: 2 for validation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

/// Reads and parses a scenario file, then validates it.
pub fn load_file(path: &Path, seed_supplied: bool) -> Result<Loaded, ScenarioError> {
    let text = fs::read_to_string(path)?;
    let loaded = parse(&text).map_err(ScenarioError::Invalid)?;
    let v = validate(&loaded, seed_supplied);
    if !v.is_empty() {
        return Err(ScenarioError::Invalid(v));
    }
    Ok(loaded)
}

/// Cells of the taxonomy that `scenarios` leave uncovered.
pub fn missing_quadrants<'a>(scenarios: impl IntoIterator<Item = &'a Scenario>) -> BTreeSet<Quadrant> {
    let covered: BTreeSet<Quadrant> = scenarios.into_iter().filter_map(Scenario::quadrant).collect();
    in_scope_quadrants().difference(&covered).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub system: System,
    pub privacy: Privacy,
    pub centralisation: Axis,
    pub peers: usize,
    pub threshold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<crate::uso::Mitigation>,
    pub quadrant: Option<String>,
    pub seed: u64,
    pub steps_run: usize,
    pub steps_total: usize,
    pub rejections: BTreeMap<String, usize>,
    pub ledger_entries: usize,
    pub exit_code: i32,
    pub failure: Option<String>,
    pub state: FinalState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PeersFile {
    threshold: usize,
    keys: BTreeMap<PeerId, PublicKey>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> io::Result<()> {
    fs::write(path, contents)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ScenarioError> {
    let mut buf = Vec::new();
    write_lines(items, &mut buf)?;
    write(path, buf)?;
    Ok(())
}

/// Executes `loaded` and writes the output directory. The returned
/// execution's [`Execution::exit_code`] is 0 or 3.
pub fn run(loaded: &Loaded, seed: Option<u64>, out: &Path) -> Result<Execution, ScenarioError> {
    let exec = execute(loaded, seed).map_err(ScenarioError::Setup)?;
    let s = &loaded.scenario;
    fs::create_dir_all(out.join("transcripts"))?;
    fs::create_dir_all(out.join("reports"))?;

    let mut normalised = s.clone();
    normalised.seed = Some(exec.seed);
    write(&out.join("scenario.json"), to_report_json(&normalised))?;

    let mut log = Vec::new();
    export_log(&exec.log, &mut log)?;
    write(&out.join("ledger.log"), log)?;
    write(
        &out.join("peers.json"),
        to_report_json(&PeersFile {
            threshold: exec.threshold,
            keys: exec.peer_keys.clone(),
        }),
    )?;

    if let Some(t) = &exec.issuer {
        write(&out.join("transcripts/issuer.json"), to_report_json(t))?;
    }
    if let Some(t) = &exec.observer {
        write(&out.join("transcripts/observer.json"), to_report_json(t))?;
    }
    if s.system == System::Uso {
        write_jsonl(&out.join("transcripts/operator.jsonl"), &exec.operator_received)?;
        write_jsonl(&out.join("transcripts/proofs.jsonl"), &exec.proofs)?;
    }

    write(&out.join("reports/steps.json"), to_report_json(&exec.records))?;
    let mut rejections = BTreeMap::new();
    for r in &exec.records {
        if r.outcome.starts_with("REJECTED_") || r.outcome == "NOT_TRACEABLE" {
            *rejections.entry(r.outcome.clone()).or_default() += 1;
        }
    }
    let summary = Summary {
        name: s.name.clone(),
        system: s.system,
        privacy: s.privacy,
        centralisation: s.centralisation.mode(),
        peers: s.centralisation.peers(),
        threshold: exec.threshold,
        mitigation: s.effective_mitigation(),
        quadrant: s.quadrant().map(|q| q.to_string()),
        seed: exec.seed,
        steps_run: exec.records.len(),
        steps_total: s.script.len(),
        rejections,
        ledger_entries: exec.log.len(),
        exit_code: exec.exit_code(),
        failure: exec.failure.clone(),
        state: exec.state.clone(),
    };
    write(&out.join("reports/summary.json"), to_report_json(&summary))?;
    report(out)?;
    Ok(exec)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ScenarioError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| ScenarioError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ScenarioError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(read_lines(BufReader::new(fs::File::open(path)?))?)
}

/// Analyses regenerated from a run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reports {
    pub linkage: Option<analysis::LinkageReport>,
    pub audit: AuditFile,
    pub growth: GrowthReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFile {
    pub ledger: crate::dlt::AuditReport,
    pub equivocation: Option<analysis::EquivocationAudit>,
}

/// Recomputes linkage, audits and growth from the artifacts in `dir`, and
/// writes them under `dir/reports`.
pub fn report(dir: &Path) -> Result<Reports, ScenarioError> {
    let scenario: Scenario = read_json(&dir.join("scenario.json"))?;
    let log = import_log(BufReader::new(fs::File::open(dir.join("ledger.log"))?))?;
    let peers: PeersFile = read_json(&dir.join("peers.json"))?;
    let steps: Vec<StepRecord> = read_json(&dir.join("reports/steps.json"))?;

    let linkage = match scenario.system {
        System::Accounts => None,
        _ => {
            let iss: IssuanceTranscript = read_json(&dir.join("transcripts/issuer.json"))?;
            let obs: ObserverTranscript = read_json(&dir.join("transcripts/observer.json"))?;
            Some(linkage_analysis(&iss, &obs).map_err(ScenarioError::Setup)?)
        }
    };
    let proofs: Vec<ProofOfProvenance> = read_jsonl(&dir.join("transcripts/proofs.jsonl"))?;
    let _: Vec<SubmissionReceipt> = read_jsonl(&dir.join("transcripts/operator.jsonl"))?;
    let audit = AuditFile {
        ledger: audit_log(&log, &peers.keys, peers.threshold),
        equivocation: scenario
            .effective_mitigation()
            .map(|m| equivocation_audit(&log, &proofs, m)),
    };

    let mut points = vec![GrowthPoint {
        transactions: 0,
        ledger_entries: 0,
        setup_entries: 0,
    }];
    points.extend(steps.iter().map(|r| GrowthPoint {
        transactions: r.transactions,
        ledger_entries: r.ledger_entries,
        setup_entries: 0,
    }));
    points.dedup();
    let growth = GrowthReport {
        series: vec![GrowthSeries {
            mode: SystemLabel {
                system: scenario.system,
                privacy: scenario.privacy,
            },
            epochs: 0,
            points,
        }],
    };

    if let Some(l) = &linkage {
        write(&dir.join("reports/linkage.json"), to_report_json(l))?;
    }
    write(&dir.join("reports/audit.json"), to_report_json(&audit))?;
    write(&dir.join("reports/growth.csv"), growth.to_csv())?;
    Ok(Reports {
        linkage,
        audit,
        growth,
    })
}
