use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::event::{Cents, EscrowEvent, EventKind};
use crate::spatial::SparseMask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown reference {0}")]
    UnknownRef(u64),
    #[error("reference {0} is already in use")]
    DuplicateRef(u64),
    #[error("reference {0} already reached a terminal event")]
    DuplicateTerminal(u64),
    #[error("reference {ref_id} does not belong to a {expected}")]
    WrongKind { ref_id: u64, expected: &'static str },
    #[error("account {account} cannot fund {requested} cents, {available} available")]
    Overdraft {
        account: usize,
        requested: Cents,
        available: Cents,
    },
    #[error("PPZ {ref_id} reserves {amount} cents but funding sums to {funded}")]
    FundingMismatch {
        ref_id: u64,
        amount: Cents,
        funded: Cents,
    },
    #[error("account {account} may not fund destination {destination}")]
    InvalidContribution { account: usize, destination: usize },
    #[error("location {index} out of range for {n} accounts")]
    LocationOutOfRange { index: usize, n: usize },
    #[error("negative amount {0}")]
    NegativeAmount(Cents),
    #[error("timestamp {got} does not follow {last}")]
    NonMonotoneTimestamp { last: u64, got: u64 },
}

/// One location's virtual account.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Account {
    pub pending_income: Cents,
    pub realized_income: Cents,
    pub reserved_spend: Cents,
    pub paid_spend: Cents,
    /// Income reversals that could not be absorbed without going negative.
    /// Repaid from the next income that arrives at the account.
    pub debt: Cents,
}

impl Account {
    pub fn available(&self) -> Cents {
        self.pending_income + self.realized_income - self.reserved_spend - self.paid_spend
    }

    pub fn income(&self) -> Cents {
        self.pending_income + self.realized_income
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum OpenRef {
    Ride {
        location: usize,
        expected: Cents,
        debt_repaid: Cents,
    },
    Ppz {
        funding: Vec<(usize, Cents)>,
    },
}

/// Event-sourced location-based budget ledger.
///
/// Accounts change only through [`EscrowLedger::apply`]. Every event is
/// validated in full before anything is mutated, so a rejected event leaves
/// the ledger untouched, and replaying [`EscrowLedger::log`] into a fresh
/// ledger reproduces the same state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EscrowLedger {
    accounts: Vec<Account>,
    contrib: Option<SparseMask>,
    log: Vec<EscrowEvent>,
    open: BTreeMap<u64, OpenRef>,
    closed: BTreeSet<u64>,
}

impl EscrowLedger {
    pub fn new(n: usize) -> Self {
        EscrowLedger {
            accounts: vec![Account::default(); n],
            contrib: None,
            log: Vec::new(),
            open: BTreeMap::new(),
            closed: BTreeSet::new(),
        }
    }

    /// A ledger that only accepts PPZ funding allowed by `contrib`.
    pub fn with_contrib_mask(n: usize, contrib: SparseMask) -> Self {
        EscrowLedger {
            contrib: Some(contrib),
            ..EscrowLedger::new(n)
        }
    }

    pub fn replay<'a>(
        n: usize,
        contrib: Option<SparseMask>,
        events: impl IntoIterator<Item = &'a EscrowEvent>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = EscrowLedger::new(n);
        ledger.contrib = contrib;
        for event in events {
            ledger.apply(event.clone())?;
        }
        Ok(ledger)
    }

    pub fn n(&self) -> usize {
        self.accounts.len()
    }

    pub fn accounts(&self) -> &[Account] {
        &self.accounts
    }

    pub fn account(&self, i: usize) -> &Account {
        &self.accounts[i]
    }

    pub fn log(&self) -> &[EscrowEvent] {
        &self.log
    }

    /// Number of events applied; identifies a balance snapshot.
    pub fn version(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn available(&self, i: usize) -> Cents {
        self.accounts[i].available()
    }

    /// Available balance per location, in cents.
    pub fn available_balances(&self) -> Vec<Cents> {
        self.accounts.iter().map(Account::available).collect()
    }

    /// Available balance per location, in currency units.
    pub fn available_currency(&self) -> Vec<f64> {
        self.accounts
            .iter()
            .map(|a| a.available() as f64 / 100.0)
            .collect()
    }

    pub fn total_income(&self) -> Cents {
        self.accounts.iter().map(Account::income).sum()
    }

    pub fn total_paid(&self) -> Cents {
        self.accounts.iter().map(|a| a.paid_spend).sum()
    }

    pub fn next_timestamp(&self) -> u64 {
        self.log.last().map_or(0, |e| e.timestamp + 1)
    }

    /// A reference id not used by any event so far.
    pub fn fresh_ref(&self) -> u64 {
        let open = self.open.keys().next_back().copied();
        let closed = self.closed.iter().next_back().copied();
        open.max(closed).map_or(0, |r| r + 1)
    }

    pub fn is_open(&self, ref_id: u64) -> bool {
        self.open.contains_key(&ref_id)
    }

    /// Stamps `event` with the next timestamp and applies it.
    pub fn record(&mut self, event: EscrowEvent) -> Result<(), LedgerError> {
        let ts = self.next_timestamp();
        self.apply(event.at(ts))
    }

    pub fn apply(&mut self, event: EscrowEvent) -> Result<(), LedgerError> {
        if let Some(last) = self.log.last() {
            if event.timestamp <= last.timestamp {
                return Err(LedgerError::NonMonotoneTimestamp {
                    last: last.timestamp,
                    got: event.timestamp,
                });
            }
        }
        if event.amount < 0 {
            return Err(LedgerError::NegativeAmount(event.amount));
        }
        self.check_location(event.location)?;
        match event.kind {
            EventKind::RideAccepted => self.accept(&event)?,
            EventKind::RideCanceled => self.cancel(&event)?,
            EventKind::RideCompleted => self.complete(&event)?,
            EventKind::PpzIssued => self.issue(&event)?,
            EventKind::PpzEarned | EventKind::PpzExpired => self.settle_ppz(&event)?,
        }
        self.log.push(event);
        Ok(())
    }

    fn check_location(&self, index: usize) -> Result<(), LedgerError> {
        if index < self.accounts.len() {
            Ok(())
        } else {
            Err(LedgerError::LocationOutOfRange {
                index,
                n: self.accounts.len(),
            })
        }
    }

    fn check_new_ref(&self, ref_id: u64) -> Result<(), LedgerError> {
        if self.open.contains_key(&ref_id) || self.closed.contains(&ref_id) {
            Err(LedgerError::DuplicateRef(ref_id))
        } else {
            Ok(())
        }
    }

    fn open_ref(&self, ref_id: u64) -> Result<&OpenRef, LedgerError> {
        match self.open.get(&ref_id) {
            Some(r) => Ok(r),
            None if self.closed.contains(&ref_id) => Err(LedgerError::DuplicateTerminal(ref_id)),
            None => Err(LedgerError::UnknownRef(ref_id)),
        }
    }

    fn close(&mut self, ref_id: u64) {
        self.open.remove(&ref_id);
        self.closed.insert(ref_id);
    }

    /// Credits income to `i`, repaying debt first. Returns the repayment.
    fn credit_pending(&mut self, i: usize, amount: Cents) -> Cents {
        let acct = &mut self.accounts[i];
        acct.pending_income += amount;
        let repaid = acct.debt.min(amount);
        acct.pending_income -= repaid;
        acct.debt -= repaid;
        repaid
    }

    fn accept(&mut self, event: &EscrowEvent) -> Result<(), LedgerError> {
        self.check_new_ref(event.ref_id)?;
        let debt_repaid = self.credit_pending(event.location, event.amount);
        self.open.insert(
            event.ref_id,
            OpenRef::Ride {
                location: event.location,
                expected: event.amount,
                debt_repaid,
            },
        );
        Ok(())
    }

    fn ride(&self, ref_id: u64) -> Result<(usize, Cents, Cents), LedgerError> {
        match self.open_ref(ref_id)? {
            OpenRef::Ride {
                location,
                expected,
                debt_repaid,
            } => Ok((*location, *expected, *debt_repaid)),
            OpenRef::Ppz { .. } => Err(LedgerError::WrongKind {
                ref_id,
                expected: "ride",
            }),
        }
    }

    fn cancel(&mut self, event: &EscrowEvent) -> Result<(), LedgerError> {
        let (i, expected, debt_repaid) = self.ride(event.ref_id)?;
        let acct = &mut self.accounts[i];
        // undo the repayment this ride made, then withdraw what the floor allows
        acct.pending_income += debt_repaid;
        acct.debt += debt_repaid;
        let removable = expected.min(acct.available().max(0));
        acct.pending_income -= removable;
        acct.debt += expected - removable;
        self.close(event.ref_id);
        Ok(())
    }

    fn complete(&mut self, event: &EscrowEvent) -> Result<(), LedgerError> {
        let (i, expected, debt_repaid) = self.ride(event.ref_id)?;
        let realized = event.amount;
        let acct = &mut self.accounts[i];
        acct.pending_income -= expected - debt_repaid;
        acct.realized_income += expected - debt_repaid;
        if realized >= expected {
            let extra = realized - expected;
            let repaid = acct.debt.min(extra);
            acct.realized_income += extra - repaid;
            acct.debt -= repaid;
        } else {
            let shortfall = expected - realized;
            let removable = shortfall.min(acct.available().max(0));
            acct.realized_income -= removable;
            acct.debt += shortfall - removable;
        }
        self.close(event.ref_id);
        Ok(())
    }

    fn issue(&mut self, event: &EscrowEvent) -> Result<(), LedgerError> {
        self.check_new_ref(event.ref_id)?;
        let funded: Cents = event.funding.iter().map(|&(_, c)| c).sum();
        if funded != event.amount {
            return Err(LedgerError::FundingMismatch {
                ref_id: event.ref_id,
                amount: event.amount,
                funded,
            });
        }
        let mut per_account: BTreeMap<usize, Cents> = BTreeMap::new();
        for &(account, cents) in &event.funding {
            self.check_location(account)?;
            if cents < 0 {
                return Err(LedgerError::NegativeAmount(cents));
            }
            if let Some(mask) = &self.contrib {
                if !mask.contains(account, event.location) {
                    return Err(LedgerError::InvalidContribution {
                        account,
                        destination: event.location,
                    });
                }
            }
            *per_account.entry(account).or_default() += cents;
        }
        for (&account, &requested) in &per_account {
            let available = self.accounts[account].available();
            if requested > available {
                return Err(LedgerError::Overdraft {
                    account,
                    requested,
                    available,
                });
            }
        }
        for (&account, &cents) in &per_account {
            self.accounts[account].reserved_spend += cents;
        }
        self.open.insert(
            event.ref_id,
            OpenRef::Ppz {
                funding: per_account.into_iter().collect(),
            },
        );
        Ok(())
    }

    fn settle_ppz(&mut self, event: &EscrowEvent) -> Result<(), LedgerError> {
        let funding = match self.open_ref(event.ref_id)? {
            OpenRef::Ppz { funding } => funding.clone(),
            OpenRef::Ride { .. } => {
                return Err(LedgerError::WrongKind {
                    ref_id: event.ref_id,
                    expected: "PPZ",
                })
            }
        };
        let earned = event.kind == EventKind::PpzEarned;
        for (account, cents) in funding {
            let acct = &mut self.accounts[account];
            acct.reserved_spend -= cents;
            if earned {
                acct.paid_spend += cents;
            }
        }
        self.close(event.ref_id);
        Ok(())
    }
}
