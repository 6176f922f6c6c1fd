//! Token-tracking protocol lab.
//!
//! Endogenous tracking ([`utxo`], plus account balances in [`dlt`]) keeps
//! every token's state on a simulated replicated ledger. Oblivious tracking
//! ([`uso`]) lets assets carry their own history while the ledger only
//! stores one Merkle root per operator epoch. [`analysis`] measures
//! linkability, ledger growth and equivocation; [`scenario`] drives all of
//! it from JSON scripts.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod analysis;
pub mod crypto;
pub mod dlt;
pub mod encoding;
pub mod error;
pub mod scenario;
pub mod transcript;
pub mod uso;
pub mod utxo;

pub use error::{Rejection, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Privacy {
    Transparent,
    /// Blind issuance.
    Private,
}

impl Privacy {
    pub fn tag(self) -> u8 {
        match self {
            Privacy::Transparent => 0,
            Privacy::Private => 1,
        }
    }
}

impl fmt::Display for Privacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Privacy::Transparent => "transparent",
            Privacy::Private => "private",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Utxo,
    Uso,
    Accounts,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Utxo => "utxo",
            System::Uso => "uso",
            System::Accounts => "accounts",
        })
    }
}
