use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EntryKind, LedgerEntry, Payload};
use crate::crypto::Digest;
use crate::encoding::{Canonical, Encoder};
use crate::error::{Rejection, Result};

const MAX_ACCOUNT_ID_LEN: usize = 64;

/// Opaque account or fiduciary identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.len() > MAX_ACCOUNT_ID_LEN || id.chars().any(char::is_whitespace)
        {
            return Err(Rejection::invalid(format!("malformed account id {id:?}")));
        }
        Ok(Self(id))
    }

    pub(super) fn fork_marker() -> Self {
        Self("~fork".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AccountId {
    type Error = Rejection;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<AccountId> for String {
    fn from(id: AccountId) -> Self {
        id.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalEvidence {
    pub fiduciaries: [AccountId; 2],
    pub tx_digest: Digest,
}

impl Canonical for ExternalEvidence {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self.fiduciaries[0].as_str())
            .str(self.fiduciaries[1].as_str())
            .item(&self.tx_digest);
    }
}

/// Body of both interledger and internal balance transfers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountTransfer {
    pub from: AccountId,
    pub to: AccountId,
    pub amount: u64,
}

impl Canonical for AccountTransfer {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self.from.as_str())
            .str(self.to.as_str())
            .u64(self.amount);
    }
}

/// Balances of ledger-managed accounts, in minor units.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    pub balances: BTreeMap<AccountId, u64>,
}

impl AccountState {
    pub fn from_balances(balances: impl IntoIterator<Item = (AccountId, u64)>) -> Self {
        Self {
            balances: balances.into_iter().collect(),
        }
    }

    pub fn balance(&self, id: &AccountId) -> Option<u64> {
        self.balances.get(id).copied()
    }

    pub fn total(&self) -> u128 {
        self.balances.values().map(|&v| u128::from(v)).sum()
    }

    /// Returns the state after `t`, leaving `self` untouched.
    pub fn apply(&self, t: &AccountTransfer) -> Result<AccountState> {
        let Some(&from_balance) = self.balances.get(&t.from) else {
            return Err(Rejection::UnknownParty(t.from.to_string()));
        };
        let Some(&to_balance) = self.balances.get(&t.to) else {
            return Err(Rejection::UnknownParty(t.to.to_string()));
        };
        if t.amount == 0 {
            return Err(Rejection::invalid("amount must be positive"));
        }
        if from_balance < t.amount {
            return Err(Rejection::InsufficientFunds {
                account: t.from.to_string(),
                balance: from_balance,
                amount: t.amount,
            });
        }
        let mut next = self.clone();
        if t.from != t.to {
            next.balances.insert(t.from.clone(), from_balance - t.amount);
            let credited = to_balance
                .checked_add(t.amount)
                .ok_or_else(|| Rejection::invalid("balance overflow"))?;
            next.balances.insert(t.to.clone(), credited);
        }
        Ok(next)
    }

    /// Rebuilds the state by applying every `BALANCE_TRANSFER` entry of
    /// `log` to `genesis`, in order.
    pub fn replay(genesis: &AccountState, log: &[LedgerEntry]) -> Result<AccountState> {
        log.iter()
            .filter(|e| e.kind == EntryKind::BalanceTransfer)
            .try_fold(genesis.clone(), |state, e| match &e.payload {
                Payload::Transfer(t) => state.apply(t),
                _ => Err(Rejection::invalid(format!(
                    "entry {} has a malformed payload",
                    e.index
                ))),
            })
    }
}
