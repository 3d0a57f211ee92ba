//! Location-based escrow accounts.
//!
//! Prime-time income collected at a ride's origin funds the PPZ bonuses paid
//! at nearby destinations. Accounts are driven only by [`EscrowEvent`]s, hold
//! integer cents, and can never be overdrawn: a bonus is reserved in full when
//! the PPZ is issued and either paid or released when it resolves.

mod event;
mod ledger;
mod targets;

pub use event::{read_ndjson, write_ndjson, Cents, EscrowEvent, EventKind};
pub use ledger::{Account, EscrowLedger, LedgerError};
pub use targets::{clearance_targets, clearance_targets_from_balances, BonusBounds};
