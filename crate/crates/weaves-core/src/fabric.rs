//! Message fabric state: ranks, mailboxes, callback registrations, barrier.
//!
//! The fabric binds a set of strings to dense ranks `0..n` and gives them
//! buffered send, blocking tag-filtered receive, callback delivery, and a
//! barrier. Messages never cross address spaces — delivery moves a value
//! from one queue to another under the runtime lock — so "latency" is a
//! purely logical bookkeeping knob.
//!
//! This module owns the passive state; the blocking/waking choreography
//! lives in the scheduler, which manipulates it at switch boundaries.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::namespace::ModuleId;
use crate::runtime::StringId;
use crate::value::Value;

/// A delivered message, as seen by guest code.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub src: u32,
    pub dst: u32,
    pub tag: i64,
    /// Per-(src, dst) sequence number, starting at 1.
    pub seq: u64,
    pub payload: Value,
}

/// A message in flight, with log bookkeeping attached.
#[derive(Debug, Clone)]
pub(crate) struct Envelope {
    pub msg: Message,
    pub sent_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EndpointMode {
    Recv,
    Callback,
}

impl EndpointMode {
    pub fn label(self) -> &'static str {
        match self {
            EndpointMode::Recv => "receive",
            EndpointMode::Callback => "callback",
        }
    }
}

pub(crate) struct Fabric {
    /// rank -> string
    pub ranks: Vec<StringId>,
    rank_of: HashMap<StringId, u32>,
    /// Pending messages per rank, for endpoints in receive mode (or not yet
    /// committed to a mode).
    pub mailboxes: Vec<VecDeque<Envelope>>,
    /// First use of `recv` or `register_callback` commits an endpoint to
    /// one delivery mode for the fabric's lifetime.
    pub modes: Vec<Option<EndpointMode>>,
    pub handlers: Vec<Option<(ModuleId, String)>>,
    seq: HashMap<(u32, u32), u64>,
    pub barrier_epoch: u64,
    pub barrier_arrived: BTreeSet<u32>,
    /// Rank whose death stranded a barrier; sticky once set.
    pub barrier_broken: Option<u32>,
    /// Ranks whose strings are finished, failed, or removed.
    pub finished: BTreeSet<u32>,
}

impl Fabric {
    pub fn new(endpoints: Vec<StringId>) -> Self {
        let n = endpoints.len();
        let rank_of = endpoints
            .iter()
            .enumerate()
            .map(|(r, &s)| (s, r as u32))
            .collect();
        Fabric {
            ranks: endpoints,
            rank_of,
            mailboxes: (0..n).map(|_| VecDeque::new()).collect(),
            modes: vec![None; n],
            handlers: vec![None; n],
            seq: HashMap::new(),
            barrier_epoch: 0,
            barrier_arrived: BTreeSet::new(),
            barrier_broken: None,
            finished: BTreeSet::new(),
        }
    }

    pub fn size(&self) -> u32 {
        self.ranks.len() as u32
    }

    pub fn rank_of(&self, s: StringId) -> Option<u32> {
        self.rank_of.get(&s).copied()
    }

    pub fn next_seq(&mut self, src: u32, dst: u32) -> u64 {
        let e = self.seq.entry((src, dst)).or_insert(0);
        *e += 1;
        *e
    }

    pub fn matches(filter: Option<i64>, msg: &Message) -> bool {
        filter.map(|t| t == msg.tag).unwrap_or(true)
    }

    /// Oldest mailbox message for `rank` passing `filter`, if any.
    pub fn take_matching(&mut self, rank: u32, filter: Option<i64>) -> Option<Envelope> {
        let mb = &mut self.mailboxes[rank as usize];
        let pos = mb.iter().position(|e| Self::matches(filter, &e.msg))?;
        mb.remove(pos)
    }
}
