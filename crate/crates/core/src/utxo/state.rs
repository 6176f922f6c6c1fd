use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::types::{OutPoint, TokenId, TxKind, TxOutput, UtxoRecord};
use crate::dlt::{EntryKind, LedgerEntry, Payload};
use crate::error::{Rejection, Result};

/// Identifiers of every spent token. Insert-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpentSet(BTreeSet<TokenId>);

impl SpentSet {
    pub fn contains(&self, id: &TokenId) -> bool {
        self.0.contains(id)
    }

    /// `false` if `id` was already spent.
    pub fn insert(&mut self, id: TokenId) -> bool {
        self.0.insert(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TokenId> {
        self.0.iter()
    }
}

/// Everything the ledger knows about tokens, derivable from the certified
/// log alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoState {
    pub live: BTreeMap<OutPoint, TxOutput>,
    pub spent: SpentSet,
    /// Private tokens outstanding, by denomination.
    pub outstanding: BTreeMap<u64, u64>,
    pub minted: u128,
}

impl UtxoState {
    /// Applies a record already validated by the ledger.
    pub(crate) fn apply(&mut self, record: &UtxoRecord) {
        match record {
            UtxoRecord::Transaction(tx) => {
                for input in &tx.inputs {
                    self.live.remove(input);
                    self.spent.insert(TokenId::Output(*input));
                }
                for (op, out) in tx.outpoints().into_iter().zip(&tx.outputs) {
                    self.live.insert(op, *out);
                }
                if tx.kind == TxKind::Mint {
                    self.minted += tx.outputs.iter().map(|o| u128::from(o.value)).sum::<u128>();
                }
            }
            UtxoRecord::PrivateIssue {
                denomination,
                count,
            } => {
                *self.outstanding.entry(*denomination).or_default() += count;
                self.minted += u128::from(*denomination) * u128::from(*count);
            }
            UtxoRecord::PrivateSpend {
                denomination,
                serial,
                reissued,
            } => {
                self.spent.insert(TokenId::Serial(*serial));
                if let Some(c) = self.outstanding.get_mut(denomination) {
                    *c = c.saturating_sub(1);
                    if *c == 0 {
                        self.outstanding.remove(denomination);
                    }
                }
                for r in reissued {
                    *self.outstanding.entry(r.denomination).or_default() += r.count;
                }
            }
        }
    }

    pub fn live_value(&self) -> u128 {
        let transparent: u128 = self.live.values().map(|o| u128::from(o.value)).sum();
        let private: u128 = self
            .outstanding
            .iter()
            .map(|(d, c)| u128::from(*d) * u128::from(*c))
            .sum();
        transparent + private
    }

    /// Rebuilds the state from the `UTXO_TRANSACTION` entries of `log`.
    pub fn replay(log: &[LedgerEntry]) -> Result<UtxoState> {
        let mut state = UtxoState::default();
        for entry in log.iter().filter(|e| e.kind == EntryKind::UtxoTransaction) {
            let Payload::Utxo(record) = &entry.payload else {
                return Err(Rejection::invalid(format!(
                    "entry {} has a malformed payload",
                    entry.index
                )));
            };
            state.apply(record);
        }
        Ok(state)
    }
}
