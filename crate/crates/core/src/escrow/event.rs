use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amounts are integer cents throughout the ledger.
pub type Cents = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RideAccepted,
    RideCanceled,
    RideCompleted,
    PpzIssued,
    PpzEarned,
    PpzExpired,
}

impl EventKind {
    pub fn is_ride(self) -> bool {
        matches!(
            self,
            EventKind::RideAccepted | EventKind::RideCanceled | EventKind::RideCompleted
        )
    }
}

/// One lifecycle event.
///
/// `location` is the ride origin for ride events and the PPZ destination for
/// PPZ events. `amount` is the expected PT at accept, the realized PT at
/// completion and the reserved bonus at issue; it is ignored on the other
/// kinds. `funding` lists `(account, cents)` for `PpzIssued` only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowEvent {
    pub kind: EventKind,
    pub ref_id: u64,
    pub location: usize,
    #[serde(default)]
    pub amount: Cents,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub funding: Vec<(usize, Cents)>,
    #[serde(default)]
    pub timestamp: u64,
}

impl EscrowEvent {
    fn new(kind: EventKind, ref_id: u64, location: usize, amount: Cents) -> Self {
        EscrowEvent {
            kind,
            ref_id,
            location,
            amount,
            funding: Vec::new(),
            timestamp: 0,
        }
    }

    pub fn ride_accepted(ref_id: u64, origin: usize, expected_pt: Cents) -> Self {
        Self::new(EventKind::RideAccepted, ref_id, origin, expected_pt)
    }

    pub fn ride_canceled(ref_id: u64, origin: usize) -> Self {
        Self::new(EventKind::RideCanceled, ref_id, origin, 0)
    }

    pub fn ride_completed(ref_id: u64, origin: usize, realized_pt: Cents) -> Self {
        Self::new(EventKind::RideCompleted, ref_id, origin, realized_pt)
    }

    pub fn ppz_issued(
        ref_id: u64,
        destination: usize,
        bonus: Cents,
        funding: Vec<(usize, Cents)>,
    ) -> Self {
        EscrowEvent {
            funding,
            ..Self::new(EventKind::PpzIssued, ref_id, destination, bonus)
        }
    }

    pub fn ppz_earned(ref_id: u64, destination: usize) -> Self {
        Self::new(EventKind::PpzEarned, ref_id, destination, 0)
    }

    pub fn ppz_expired(ref_id: u64, destination: usize) -> Self {
        Self::new(EventKind::PpzExpired, ref_id, destination, 0)
    }

    pub fn at(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }
}

/// Reads newline-delimited JSON events; blank lines are skipped.
pub fn read_ndjson(reader: impl BufRead) -> Result<Vec<EscrowEvent>> {
    let mut events = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("event log line {}: {e}", lineno + 1)))?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_ndjson(mut writer: impl Write, events: &[EscrowEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
