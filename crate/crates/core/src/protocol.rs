//! Forwarding policies: flooding, Filtercast, RFiltercast, and the unbiased
//! and biased probabilistic protocols.
//!
//! Every node runs the same pipeline on reception: drop own echoes, drop
//! duplicates, count the fresh packet, then ask the policy. The origin always
//! broadcasts its own reports; policies only gate relays.

use std::fmt;

use rand::Rng;

use crate::error::{Result, SimError};
use crate::kernel::Time;
use crate::topology::NodeId;

/// Initial hop budget. Exceeds the hop diameter of a 10×10 grid at 100 m range.
pub const DEFAULT_TTL: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Packet {
    pub source: NodeId,
    pub seq: u64,
    pub value: f64,
    pub ttl: u32,
    pub origin_time: Time,
}

/// One `hops ∈ [min_hops, max_hops]` tier of the biased protocol.
/// `max_hops == None` means open-ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bucket {
    pub min_hops: u32,
    pub max_hops: Option<u32>,
    pub probability: f64,
}

/// Hop-count → forwarding probability table.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketTable(Vec<Bucket>);

impl BucketTable {
    /// Validates that the buckets tile every hop count ≥ 1 without gaps or overlap.
    pub fn new(mut buckets: Vec<Bucket>) -> Result<Self> {
        buckets.sort_by_key(|b| b.min_hops);
        let mut expect = 1u32;
        for (i, b) in buckets.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.probability) {
                return Err(SimError::config(format!(
                    "bucket probability {} outside [0,1]",
                    b.probability
                )));
            }
            if b.min_hops != expect {
                return Err(SimError::config(format!(
                    "bucket table has a gap or overlap at hop {expect}"
                )));
            }
            match b.max_hops {
                Some(max) if max < b.min_hops => {
                    return Err(SimError::config(format!("empty bucket {}-{max}", b.min_hops)))
                }
                Some(max) => expect = max + 1,
                None if i + 1 == buckets.len() => return Ok(BucketTable(buckets)),
                None => return Err(SimError::config("open-ended bucket must be last")),
            }
        }
        Err(SimError::config("bucket table must end with an open-ended bucket"))
    }

    /// `<1-3, 0.8>, <4-6, 0.6>, <7-9, 0.4>, <10+, 0.2>`
    pub fn standard() -> Self {
        let b = |min, max, probability| Bucket {
            min_hops: min,
            max_hops: max,
            probability,
        };
        BucketTable(vec![
            b(1, Some(3), 0.8),
            b(4, Some(6), 0.6),
            b(7, Some(9), 0.4),
            b(10, None, 0.2),
        ])
    }

    pub fn probability(&self, hops: u32) -> f64 {
        self.0
            .iter()
            .find(|b| hops >= b.min_hops && b.max_hops.is_none_or(|m| hops <= m))
            .map(|b| b.probability)
            .unwrap_or(0.0)
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolKind {
    Flooding,
    Filtercast { n: u64 },
    RFiltercast { n: u64 },
    Unbiased { p: f64 },
    Biased { table: BucketTable },
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Flooding => "flooding",
            ProtocolKind::Filtercast { .. } => "filtercast",
            ProtocolKind::RFiltercast { .. } => "rfiltercast",
            ProtocolKind::Unbiased { .. } => "unbiased",
            ProtocolKind::Biased { .. } => "biased",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProtocolKind::Filtercast { n } | ProtocolKind::RFiltercast { n } if *n == 0 => {
                Err(SimError::config("filter window n must be >= 1"))
            }
            ProtocolKind::Unbiased { p } if !(0.0..=1.0).contains(p) => Err(SimError::config(
                format!("forwarding probability {p} outside [0,1]"),
            )),
            _ => Ok(()),
        }
    }
}

/// Compact label used in CSV output and scenario ids, e.g. `filtercast-n2`.
impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolKind::Flooding => write!(f, "flooding"),
            ProtocolKind::Filtercast { n } => write!(f, "filtercast-n{n}"),
            ProtocolKind::RFiltercast { n } => write!(f, "rfiltercast-n{n}"),
            ProtocolKind::Unbiased { p } => write!(f, "unbiased-p{p}"),
            ProtocolKind::Biased { .. } => write!(f, "biased"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub ttl_init: u32,
}

impl ProtocolConfig {
    pub fn new(kind: ProtocolKind) -> Self {
        ProtocolConfig {
            kind,
            ttl_init: DEFAULT_TTL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ttl_init == 0 {
            return Err(SimError::config("ttl_init must be >= 1"));
        }
        self.kind.validate()
    }
}

/// Forward iff the pre-increment count is a multiple of `n`.
pub fn filtercast_decide(cnt_before: u64, n: u64) -> bool {
    cnt_before % n == 0
}

/// Forward iff the pre-increment count falls on this node's residue.
pub fn rfiltercast_decide(cnt_before: u64, n: u64, r_offset: u64) -> bool {
    cnt_before % n == r_offset
}

pub fn unbiased_decide<R: Rng>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// Hops already covered by a packet arriving with `ttl`; a packet straight
/// off the source's radio has traveled one hop.
pub fn hops_traveled(ttl: u32, ttl_init: u32) -> u32 {
    ttl_init.saturating_sub(ttl) + 1
}

pub fn biased_decide<R: Rng>(ttl: u32, ttl_init: u32, table: &BucketTable, rng: &mut R) -> bool {
    let p = table.probability(hops_traveled(ttl, ttl_init));
    rng.random::<f64>() < p
}

/// Per-source bitmap of seen sequence numbers.
#[derive(Clone, Debug, Default)]
pub struct SeenCache {
    bits: Vec<Vec<u64>>,
}

impl SeenCache {
    pub fn new(sources: usize) -> Self {
        SeenCache {
            bits: vec![Vec::new(); sources],
        }
    }

    pub fn contains(&self, source: NodeId, seq: u64) -> bool {
        let (word, bit) = ((seq / 64) as usize, seq % 64);
        self.bits
            .get(source)
            .and_then(|w| w.get(word))
            .is_some_and(|w| w & (1 << bit) != 0)
    }

    /// Returns true if the entry was newly inserted.
    pub fn insert(&mut self, source: NodeId, seq: u64) -> bool {
        if source >= self.bits.len() {
            self.bits.resize(source + 1, Vec::new());
        }
        let words = &mut self.bits[source];
        let (word, bit) = ((seq / 64) as usize, seq % 64);
        if word >= words.len() {
            words.resize(word + 1, 0);
        }
        let fresh = words[word] & (1 << bit) == 0;
        words[word] |= 1 << bit;
        fresh
    }

    pub fn count(&self, source: NodeId) -> u64 {
        self.bits
            .get(source)
            .map_or(0, |w| w.iter().map(|x| u64::from(x.count_ones())).sum())
    }
}

/// Outcome of processing one delivered packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reception {
    /// Packet came from this very node.
    OwnEcho,
    Duplicate,
    /// Fresh packet; the policy chose to drop it.
    Dropped,
    /// Fresh packet the policy would relay, but its hop budget is spent.
    Expired,
    /// Fresh packet to rebroadcast with the decremented TTL.
    Forward { ttl: u32 },
}

impl Reception {
    pub fn is_fresh(&self) -> bool {
        matches!(
            self,
            Reception::Dropped | Reception::Expired | Reception::Forward { .. }
        )
    }

    /// Whether the policy voted to relay (regardless of TTL exhaustion).
    pub fn policy_forward(&self) -> Option<bool> {
        match self {
            Reception::Dropped => Some(false),
            Reception::Expired | Reception::Forward { .. } => Some(true),
            _ => None,
        }
    }
}

/// Protocol state held by one node.
#[derive(Clone, Debug)]
pub struct NodeProtocolState {
    pub id: NodeId,
    seen: SeenCache,
    source_cnt: Vec<u64>,
    r_offset: u64,
    own_seq: u64,
}

impl NodeProtocolState {
    /// `r_offset` is drawn once here for RFiltercast, uniform over `0..n`.
    pub fn new<R: Rng>(id: NodeId, node_count: usize, config: &ProtocolConfig, rng: &mut R) -> Self {
        let r_offset = match config.kind {
            ProtocolKind::RFiltercast { n } => rng.random_range(0..n),
            _ => 0,
        };
        NodeProtocolState {
            id,
            seen: SeenCache::new(node_count),
            source_cnt: vec![0; node_count],
            r_offset,
            own_seq: 0,
        }
    }

    pub fn r_offset(&self) -> u64 {
        self.r_offset
    }

    pub fn set_r_offset(&mut self, r: u64) {
        self.r_offset = r;
    }

    pub fn source_cnt(&self, source: NodeId) -> u64 {
        self.source_cnt.get(source).copied().unwrap_or(0)
    }

    pub fn seen(&self) -> &SeenCache {
        &self.seen
    }

    pub fn own_seq(&self) -> u64 {
        self.own_seq
    }

    /// Builds this node's next report. The origin marks it as seen so its
    /// own echoes are ignored.
    pub fn generate(&mut self, value: f64, t: Time, config: &ProtocolConfig) -> Packet {
        let seq = self.own_seq;
        self.own_seq += 1;
        self.seen.insert(self.id, seq);
        Packet {
            source: self.id,
            seq,
            value,
            ttl: config.ttl_init,
            origin_time: t,
        }
    }

    pub fn on_receive<R: Rng>(&mut self, packet: &Packet, config: &ProtocolConfig, rng: &mut R) -> Reception {
        if packet.source == self.id {
            return Reception::OwnEcho;
        }
        if !self.seen.insert(packet.source, packet.seq) {
            return Reception::Duplicate;
        }
        if packet.source >= self.source_cnt.len() {
            self.source_cnt.resize(packet.source + 1, 0);
        }
        let cnt = self.source_cnt[packet.source];
        self.source_cnt[packet.source] = cnt + 1;

        let forward = match &config.kind {
            ProtocolKind::Flooding => true,
            ProtocolKind::Filtercast { n } => filtercast_decide(cnt, *n),
            ProtocolKind::RFiltercast { n } => rfiltercast_decide(cnt, *n, self.r_offset),
            ProtocolKind::Unbiased { p } => unbiased_decide(*p, rng),
            ProtocolKind::Biased { table } => biased_decide(packet.ttl, config.ttl_init, table, rng),
        };
        if !forward {
            return Reception::Dropped;
        }
        match packet.ttl.saturating_sub(1) {
            0 => Reception::Expired,
            ttl => Reception::Forward { ttl },
        }
    }
}
