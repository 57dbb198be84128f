//! Deterministic simulated ledger.
//!
//! Holds the block clock, the ordered transaction log, the event log and the
//! gas model. Every protocol call is recorded here, accepted or not.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Block capacity used as the default per-transaction gas cap.
pub const DEFAULT_GAS_CAP: u64 = 30_000_000;

const DEFAULT_GAS_TABLE: &str = include_str!("../config/gas_default.json");

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("failed to write report: {0}")]
    Csv(#[from] csv::Error),
    #[error("failed to write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("report is not valid utf-8")]
    Utf8(#[from] std::string::FromUtf8Error),
}

/// A 20-byte account or contract address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let s = s.strip_prefix("0x").unwrap_or(&s);
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Address(out))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockClock {
    height: u64,
}

impl BlockClock {
    pub fn at(height: u64) -> Self {
        BlockClock { height }
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn advance(&mut self, n: u64) -> u64 {
        self.height += n;
        self.height
    }
}

/// Primitive-operation counts for one call. `base_call` is implicit: every
/// metered call pays it once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub storage_read: u64,
    pub storage_write: u64,
    pub digest_eval: u64,
    pub proof_verify: u64,
    pub event_emit: u64,
    pub event_word: u64,
    pub calldata_word: u64,
}

impl OpCounts {
    pub fn reads(n: u64) -> Self {
        OpCounts { storage_read: n, ..Default::default() }
    }

    pub fn writes(n: u64) -> Self {
        OpCounts { storage_write: n, ..Default::default() }
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.storage_read += o.storage_read;
        self.storage_write += o.storage_write;
        self.digest_eval += o.digest_eval;
        self.proof_verify += o.proof_verify;
        self.event_emit += o.event_emit;
        self.event_word += o.event_word;
        self.calldata_word += o.calldata_word;
    }
}

/// Gas weight per primitive operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasTable {
    pub base_call: u64,
    pub storage_read: u64,
    pub storage_write: u64,
    pub digest_eval: u64,
    pub proof_verify: u64,
    pub event_emit: u64,
    pub event_word: u64,
    pub calldata_word: u64,
}

impl Default for GasTable {
    /// The calibrated table shipped in `config/gas_default.json`.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_GAS_TABLE).expect("bundled gas table is valid")
    }
}

/// Partial override of a [`GasTable`], as found in scenario files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasOverrides {
    pub base_call: Option<u64>,
    pub storage_read: Option<u64>,
    pub storage_write: Option<u64>,
    pub digest_eval: Option<u64>,
    pub proof_verify: Option<u64>,
    pub event_emit: Option<u64>,
    pub event_word: Option<u64>,
    pub calldata_word: Option<u64>,
}

impl GasTable {
    pub fn zero() -> Self {
        GasTable {
            base_call: 0,
            storage_read: 0,
            storage_write: 0,
            digest_eval: 0,
            proof_verify: 0,
            event_emit: 0,
            event_word: 0,
            calldata_word: 0,
        }
    }

    pub fn with_overrides(mut self, o: &GasOverrides) -> Self {
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        apply!(
            base_call,
            storage_read,
            storage_write,
            digest_eval,
            proof_verify,
            event_emit,
            event_word,
            calldata_word
        );
        self
    }
}

/// Σ count·weight, plus one `base_call`.
pub fn meter(trace: &OpCounts, table: &GasTable) -> u64 {
    table.base_call
        + trace.storage_read * table.storage_read
        + trace.storage_write * table.storage_write
        + trace.digest_eval * table.digest_eval
        + trace.proof_verify * table.proof_verify
        + trace.event_emit * table.event_emit
        + trace.event_word * table.event_word
        + trace.calldata_word * table.calldata_word
}

/// Reveal cost as a function of candidate count: `8000·n_c + 39000`.
pub fn estimate_reveal_gas(n_c: u64) -> u64 {
    8000 * n_c + 39000
}

/// Proposer registration cost: `50180 + 23586·n`.
pub fn estimate_add_proposers_gas(n: u64) -> u64 {
    50180 + 23586 * n
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected { reason: String },
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub seq: u64,
    pub sender: Address,
    pub function: String,
    pub public_inputs: Value,
    pub block: u64,
    pub gas_used: u64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "VotersAddedEvent")]
    VotersAdded,
    #[serde(rename = "ProposedEvent")]
    Proposed,
    #[serde(rename = "TreeRegisteredEvent")]
    TreeRegistered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub payload: Value,
    pub block: u64,
    /// Sequence number of the emitting transaction.
    pub tx_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GasStats {
    pub count: u64,
    pub min: u64,
    pub avg: u64,
    pub max: u64,
}

/// Per-function gas statistics over accepted transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GasReport(pub BTreeMap<String, GasStats>);

impl GasReport {
    pub fn from_transactions<'a>(txs: impl IntoIterator<Item = &'a Transaction>) -> Self {
        let mut acc: BTreeMap<String, (u64, u64, u64, u64)> = BTreeMap::new();
        for tx in txs.into_iter().filter(|t| t.outcome.is_accepted()) {
            let e = acc
                .entry(tx.function.clone())
                .or_insert((0, u64::MAX, 0, 0));
            e.0 += 1;
            e.1 = e.1.min(tx.gas_used);
            e.2 = e.2.max(tx.gas_used);
            e.3 += tx.gas_used;
        }
        GasReport(
            acc.into_iter()
                .map(|(f, (count, min, max, sum))| {
                    (f, GasStats { count, min, avg: sum / count, max })
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> Result<String, LedgerError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["function", "count", "min", "avg", "max"])?;
        for (f, s) in &self.0 {
            w.write_record([
                f.clone(),
                s.count.to_string(),
                s.min.to_string(),
                s.avg.to_string(),
                s.max.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes)?)
    }
}

pub fn transactions_to_csv(txs: &[Transaction]) -> Result<String, LedgerError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seq", "block", "sender", "function", "gas_used", "status", "reason"])?;
    for tx in txs {
        let (status, reason) = match &tx.outcome {
            Outcome::Accepted => ("accepted", ""),
            Outcome::Rejected { reason } => ("rejected", reason.as_str()),
        };
        w.write_record([
            tx.seq.to_string(),
            tx.block.to_string(),
            tx.sender.to_string(),
            tx.function.clone(),
            tx.gas_used.to_string(),
            status.to_string(),
            reason.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes)?)
}

#[derive(Debug, Clone)]
pub struct Ledger {
    clock: BlockClock,
    gas_table: GasTable,
    gas_cap: u64,
    transactions: Vec<Transaction>,
    events: Vec<Event>,
    deployments: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::new(GasTable::default(), DEFAULT_GAS_CAP)
    }
}

impl Ledger {
    pub fn new(gas_table: GasTable, gas_cap: u64) -> Self {
        Ledger {
            clock: BlockClock::default(),
            gas_table,
            gas_cap,
            transactions: Vec::new(),
            events: Vec::new(),
            deployments: 0,
        }
    }

    pub fn height(&self) -> u64 {
        self.clock.height()
    }

    pub fn advance_blocks(&mut self, n: u64) -> u64 {
        self.clock.advance(n)
    }

    /// Advance to `height` if it lies in the future.
    pub fn advance_to(&mut self, height: u64) -> u64 {
        let now = self.height();
        if height > now {
            self.clock.advance(height - now);
        }
        self.height()
    }

    pub fn gas_table(&self) -> &GasTable {
        &self.gas_table
    }

    pub fn gas_cap(&self) -> u64 {
        self.gas_cap
    }

    pub fn meter(&self, trace: &OpCounts) -> u64 {
        meter(trace, &self.gas_table)
    }

    /// A fresh contract address for `deployer`'s next deployment.
    pub fn next_contract_address(&mut self, deployer: &Address) -> Address {
        let nonce = self.deployments;
        self.deployments += 1;
        let mut label = b"contract/".to_vec();
        label.extend_from_slice(deployer.as_bytes());
        label.extend_from_slice(&nonce.to_be_bytes());
        crate::crypto::Crypto::default().address(&label)
    }

    pub fn record(
        &mut self,
        sender: Address,
        function: &str,
        public_inputs: Value,
        gas_used: u64,
        outcome: Outcome,
    ) {
        let seq = self.transactions.len() as u64;
        self.transactions.push(Transaction {
            seq,
            sender,
            function: function.to_string(),
            public_inputs,
            block: self.height(),
            gas_used,
            outcome,
        });
    }

    pub fn emit(&mut self, kind: EventKind, payload: Value) {
        let block = self.height();
        let tx_seq = self.transactions.len().saturating_sub(1) as u64;
        self.events.push(Event { kind, payload, block, tx_seq });
    }

    /// Sequence number the next recorded transaction will get.
    pub fn next_seq(&self) -> u64 {
        self.transactions.len() as u64
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn gas_report(&self) -> GasReport {
        GasReport::from_transactions(&self.transactions)
    }
}
