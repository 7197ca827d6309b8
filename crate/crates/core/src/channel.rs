//! Shared broadcast medium.
//!
//! Unit-disk connectivity evaluated at transmission start, carrier sense over
//! the same radius, hidden-terminal collisions at receivers, a tail-drop
//! interface queue per node, and per-packet energy charges.
//!
//! Energy is tracked in integer nanojoules. Every transmission costs exactly
//! `tx_energy_nj` and every reception attempt `rx_energy_nj`, so ledger totals
//! are exact sums of counters.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Result, SimError};
use crate::kernel::{rng_stream, Kernel, RngStream, Time};
use crate::protocol::Packet;
use crate::topology::{NodeId, Topology};

#[derive(Clone, Debug, PartialEq)]
pub struct RadioParams {
    /// Unit-disk radius for delivery and carrier sense, meters.
    pub tx_range: f64,
    /// bits/s
    pub bandwidth: f64,
    /// W
    pub tx_power: f64,
    /// W
    pub rx_power: f64,
    /// W
    pub idle_power: f64,
    pub packet_bits: u32,
    /// J
    pub initial_energy: f64,
    pub queue_capacity: usize,
    /// Contention and defer draws are uniform in `[0, backoff_factor × airtime]`.
    pub backoff_factor: f64,
    /// Carrier-sense radius as a multiple of `tx_range`.
    pub sense_range_factor: f64,
    /// A transmission becomes audible to carrier sense this long after it starts, s.
    pub sense_delay: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            tx_range: 100.0,
            bandwidth: 1e6,
            tx_power: 0.660,
            rx_power: 0.395,
            idle_power: 0.0,
            packet_bits: 512,
            initial_energy: 10_000.0,
            queue_capacity: 50,
            backoff_factor: 10.0,
            sense_range_factor: 1.5,
            sense_delay: 20e-6,
        }
    }
}

pub const NJ_PER_J: f64 = 1e9;

fn to_nj(joules: f64) -> u64 {
    (joules * NJ_PER_J).round() as u64
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_range", self.tx_range),
            ("bandwidth", self.bandwidth),
            ("tx_power", self.tx_power),
            ("rx_power", self.rx_power),
            ("initial_energy", self.initial_energy),
            ("packet_bits", f64::from(self.packet_bits)),
            ("queue_capacity", self.queue_capacity as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.idle_power >= 0.0) {
            return Err(SimError::config("idle_power must be >= 0"));
        }
        if !(self.backoff_factor >= 0.0) {
            return Err(SimError::config("backoff_factor must be >= 0"));
        }
        if !(self.sense_range_factor >= 0.0 && self.sense_delay >= 0.0) {
            return Err(SimError::config("sense_range_factor and sense_delay must be >= 0"));
        }
        Ok(())
    }

    pub fn airtime(&self) -> Time {
        f64::from(self.packet_bits) / self.bandwidth
    }

    pub fn tx_energy_nj(&self) -> u64 {
        to_nj(self.tx_power * self.airtime())
    }

    pub fn rx_energy_nj(&self) -> u64 {
        to_nj(self.rx_power * self.airtime())
    }

    pub fn sense_range(&self) -> f64 {
        self.sense_range_factor * self.tx_range
    }

    pub fn backoff_window(&self) -> Time {
        self.backoff_factor * self.airtime()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    /// No contention, no collisions, no queueing; fixed one-airtime hop latency.
    Ideal,
    Contended,
}

/// Per-node energy and traffic counters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeLedger {
    pub remaining_nj: u64,
    pub tx_count: u64,
    /// Reception attempts, collided or not.
    pub rx_count: u64,
    pub drop_count: u64,
    pub collision_count: u64,
    /// Residual energy written off when a charge could not be covered.
    pub drained_nj: u64,
    pub idle_nj: u64,
    pub alive: bool,
}

#[derive(Clone, Debug)]
pub struct EnergyLedger {
    pub nodes: Vec<NodeLedger>,
    pub initial_nj: u64,
    pub tx_energy_nj: u64,
    pub rx_energy_nj: u64,
}

impl EnergyLedger {
    pub fn new(node_count: usize, params: &RadioParams) -> Self {
        let initial_nj = to_nj(params.initial_energy);
        EnergyLedger {
            nodes: vec![
                NodeLedger {
                    remaining_nj: initial_nj,
                    alive: true,
                    ..NodeLedger::default()
                };
                node_count
            ],
            initial_nj,
            tx_energy_nj: params.tx_energy_nj(),
            rx_energy_nj: params.rx_energy_nj(),
        }
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.nodes[node].alive
    }

    /// Deducts `cost`; a node that cannot cover it dies with its residue drained.
    fn charge(&mut self, node: NodeId, cost: u64) -> bool {
        let n = &mut self.nodes[node];
        if !n.alive {
            return false;
        }
        if n.remaining_nj < cost {
            n.drained_nj += n.remaining_nj;
            n.remaining_nj = 0;
            n.alive = false;
            return false;
        }
        n.remaining_nj -= cost;
        if n.remaining_nj == 0 {
            n.alive = false;
        }
        true
    }

    fn charge_tx(&mut self, node: NodeId) -> bool {
        let ok = self.charge(node, self.tx_energy_nj);
        if ok {
            self.nodes[node].tx_count += 1;
        }
        ok
    }

    fn charge_rx(&mut self, node: NodeId) -> bool {
        let ok = self.charge(node, self.rx_energy_nj);
        if ok {
            self.nodes[node].rx_count += 1;
        }
        ok
    }

    pub fn consumed_nj(&self) -> u64 {
        self.nodes.iter().map(|n| self.initial_nj - n.remaining_nj).sum()
    }

    pub fn consumed_j(&self) -> f64 {
        self.consumed_nj() as f64 / NJ_PER_J
    }

    pub fn tx_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.tx_count).sum()
    }

    pub fn rx_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.rx_count).sum()
    }

    pub fn drop_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.drop_count).sum()
    }

    pub fn collision_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.collision_count).sum()
    }

    pub fn drained_nj(&self) -> u64 {
        self.nodes.iter().map(|n| n.drained_nj).sum()
    }

    pub fn idle_nj(&self) -> u64 {
        self.nodes.iter().map(|n| n.idle_nj).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelEvent {
    /// Queue head tries to seize the medium.
    Attempt { node: NodeId },
    TxEnd { node: NodeId, tx: u64 },
    RxEnd { receiver: NodeId, tx: u64 },
    /// Ideal-mode delivery.
    Deliver {
        receiver: NodeId,
        sender: NodeId,
        packet: Packet,
    },
}

/// A transmission that just went on air.
#[derive(Clone, Debug, PartialEq)]
pub struct TxStart {
    pub tx: u64,
    pub sender: NodeId,
    pub packet: Packet,
    pub start: Time,
    pub receivers: Vec<NodeId>,
}

/// A packet that reached a receiver intact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivery {
    pub receiver: NodeId,
    pub sender: NodeId,
    pub packet: Packet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MacState {
    Idle,
    Contending,
    Transmitting,
}

#[derive(Clone, Copy, Debug)]
struct ActiveTx {
    id: u64,
    sender: NodeId,
    start: Time,
}

#[derive(Clone, Copy, Debug)]
struct RxSlot {
    tx: u64,
    sender: NodeId,
    packet: Packet,
    collided: bool,
}

/// Outcome of `broadcast`.
#[derive(Clone, Debug, PartialEq)]
pub enum Enqueue {
    Queued,
    /// Ideal mode transmits at once.
    Sent(TxStart),
    QueueFull,
    SenderDead,
}

/// Result of an access attempt.
#[derive(Clone, Debug, PartialEq)]
pub enum Attempt {
    Deferred { retry_at: Time },
    Started(TxStart),
    Nothing,
}

pub struct Channel {
    params: RadioParams,
    mode: ChannelMode,
    ledger: EnergyLedger,
    queues: Vec<VecDeque<Packet>>,
    state: Vec<MacState>,
    on_air: Vec<ActiveTx>,
    rx: Vec<Vec<RxSlot>>,
    rngs: Vec<RngStream>,
    static_neighbors: Option<Vec<Vec<NodeId>>>,
    next_tx: u64,
    defer_count: u64,
}

/// Alive nodes within `range` of `sender` at time `t`, ascending id.
fn in_range(topo: &mut Topology, sender: NodeId, range: f64, t: Time) -> Vec<NodeId> {
    let origin = topo.position_at(sender, t);
    (0..topo.len())
        .filter(|&j| j != sender && topo.position_at(j, t).distance(&origin) <= range)
        .collect()
}

impl Channel {
    /// MAC draws come from stream `mac.node.<id>`.
    pub fn new(params: RadioParams, mode: ChannelMode, topo: &mut Topology, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = topo.len();
        let static_neighbors = topo
            .is_static()
            .then(|| (0..n).map(|i| in_range(topo, i, params.tx_range, 0.0)).collect());
        Ok(Channel {
            ledger: EnergyLedger::new(n, &params),
            params,
            mode,
            queues: vec![VecDeque::new(); n],
            state: vec![MacState::Idle; n],
            on_air: Vec::new(),
            rx: vec![Vec::new(); n],
            rngs: (0..n).map(|i| rng_stream(seed, &format!("mac.node.{i}"))).collect(),
            static_neighbors,
            next_tx: 0,
            defer_count: 0,
        })
    }

    pub fn params(&self) -> &RadioParams {
        &self.params
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.ledger.is_alive(node)
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues[node].len()
    }

    pub fn defer_count(&self) -> u64 {
        self.defer_count
    }

    fn neighbors(&self, topo: &mut Topology, node: NodeId, t: Time) -> Vec<NodeId> {
        match &self.static_neighbors {
            Some(lists) => lists[node].clone(),
            None => in_range(topo, node, self.params.tx_range, t),
        }
    }

    fn draw(&mut self, node: NodeId) -> Time {
        let w = self.params.backoff_window();
        if w == 0.0 {
            0.0
        } else {
            self.rngs[node].random_range(0.0..=w)
        }
    }

    /// Hands a packet to `sender`'s interface.
    pub fn broadcast<E: From<ChannelEvent>>(
        &mut self,
        sender: NodeId,
        packet: Packet,
        t: Time,
        kernel: &mut Kernel<E>,
        topo: &mut Topology,
    ) -> Result<Enqueue> {
        if !self.ledger.is_alive(sender) {
            return Ok(Enqueue::SenderDead);
        }
        match self.mode {
            ChannelMode::Ideal => {
                let start = self.start_tx(sender, packet, t, kernel, topo)?;
                Ok(match start {
                    Some(s) => Enqueue::Sent(s),
                    None => Enqueue::SenderDead,
                })
            }
            ChannelMode::Contended => {
                if self.queues[sender].len() >= self.params.queue_capacity {
                    self.ledger.nodes[sender].drop_count += 1;
                    return Ok(Enqueue::QueueFull);
                }
                self.queues[sender].push_back(packet);
                if self.state[sender] == MacState::Idle {
                    self.state[sender] = MacState::Contending;
                    let wait = self.draw(sender);
                    kernel.schedule(t + wait, ChannelEvent::Attempt { node: sender }.into())?;
                }
                Ok(Enqueue::Queued)
            }
        }
    }

    /// True if any transmission within carrier-sense range of `node` is on air.
    pub fn medium_busy(&self, node: NodeId, t: Time, topo: &mut Topology) -> bool {
        let range = self.params.sense_range();
        let audible_before = t - self.params.sense_delay;
        let on_air: Vec<NodeId> = self
            .on_air
            .iter()
            .filter(|a| a.start <= audible_before)
            .map(|a| a.sender)
            .collect();
        on_air
            .into_iter()
            .any(|s| s == node || topo.distance(s, node, t) <= range)
    }

    pub fn on_attempt<E: From<ChannelEvent>>(
        &mut self,
        node: NodeId,
        t: Time,
        kernel: &mut Kernel<E>,
        topo: &mut Topology,
    ) -> Result<Attempt> {
        if !self.ledger.is_alive(node) {
            self.queues[node].clear();
            self.state[node] = MacState::Idle;
            return Ok(Attempt::Nothing);
        }
        if self.medium_busy(node, t, topo) {
            self.defer_count += 1;
            let retry_at = t + self.draw(node);
            kernel.schedule(retry_at, ChannelEvent::Attempt { node }.into())?;
            return Ok(Attempt::Deferred { retry_at });
        }
        let Some(packet) = self.queues[node].pop_front() else {
            self.state[node] = MacState::Idle;
            return Ok(Attempt::Nothing);
        };
        match self.start_tx(node, packet, t, kernel, topo)? {
            Some(s) => {
                self.state[node] = MacState::Transmitting;
                Ok(Attempt::Started(s))
            }
            None => {
                self.queues[node].clear();
                self.state[node] = MacState::Idle;
                Ok(Attempt::Nothing)
            }
        }
    }

    fn start_tx<E: From<ChannelEvent>>(
        &mut self,
        sender: NodeId,
        packet: Packet,
        t: Time,
        kernel: &mut Kernel<E>,
        topo: &mut Topology,
    ) -> Result<Option<TxStart>> {
        if !self.ledger.charge_tx(sender) {
            return Ok(None);
        }
        let tx = self.next_tx;
        self.next_tx += 1;
        let end = t + self.params.airtime();
        let mut receivers = Vec::new();
        for r in self.neighbors(topo, sender, t) {
            if !self.ledger.is_alive(r) {
                continue;
            }
            // Half-duplex: a node on air cannot listen.
            if self.mode == ChannelMode::Contended && self.state[r] == MacState::Transmitting {
                continue;
            }
            if !self.ledger.charge_rx(r) {
                continue;
            }
            receivers.push(r);
            match self.mode {
                ChannelMode::Ideal => {
                    kernel.schedule(
                        end,
                        ChannelEvent::Deliver {
                            receiver: r,
                            sender,
                            packet,
                        }
                        .into(),
                    )?;
                }
                ChannelMode::Contended => {
                    let slots = &mut self.rx[r];
                    let collided = !slots.is_empty();
                    for s in slots.iter_mut() {
                        s.collided = true;
                    }
                    slots.push(RxSlot {
                        tx,
                        sender,
                        packet,
                        collided,
                    });
                    kernel.schedule(end, ChannelEvent::RxEnd { receiver: r, tx }.into())?;
                }
            }
        }
        if self.mode == ChannelMode::Contended {
            self.on_air.push(ActiveTx { id: tx, sender, start: t });
            kernel.schedule(end, ChannelEvent::TxEnd { node: sender, tx }.into())?;
        }
        Ok(Some(TxStart {
            tx,
            sender,
            packet,
            start: t,
            receivers,
        }))
    }

    pub fn on_tx_end<E: From<ChannelEvent>>(
        &mut self,
        node: NodeId,
        tx: u64,
        t: Time,
        kernel: &mut Kernel<E>,
    ) -> Result<()> {
        self.on_air.retain(|a| a.id != tx);
        if self.ledger.is_alive(node) && !self.queues[node].is_empty() {
            self.state[node] = MacState::Contending;
            let wait = self.draw(node);
            kernel.schedule(t + wait, ChannelEvent::Attempt { node }.into())?;
        } else {
            self.state[node] = MacState::Idle;
        }
        Ok(())
    }

    /// Closes the reception of `tx` at `receiver`; intact only if no other
    /// transmission overlapped it there.
    pub fn on_rx_end(&mut self, receiver: NodeId, tx: u64) -> Option<Delivery> {
        let slots = &mut self.rx[receiver];
        let pos = slots.iter().position(|s| s.tx == tx)?;
        let slot = slots.swap_remove(pos);
        if slot.collided {
            self.ledger.nodes[receiver].collision_count += 1;
            return None;
        }
        if !self.ledger.is_alive(receiver) {
            return None;
        }
        Some(Delivery {
            receiver,
            sender: slot.sender,
            packet: slot.packet,
        })
    }

    /// Ideal-mode counterpart of [`Channel::on_rx_end`].
    pub fn on_deliver(&self, receiver: NodeId, sender: NodeId, packet: Packet) -> Option<Delivery> {
        self.ledger.is_alive(receiver).then_some(Delivery {
            receiver,
            sender,
            packet,
        })
    }

    /// Charges idle draw for the time each node spent neither sending nor
    /// receiving over `[0, horizon]`.
    pub fn settle_idle(&mut self, horizon: Time) {
        if self.params.idle_power == 0.0 {
            return;
        }
        let air = self.params.airtime();
        for i in 0..self.ledger.nodes.len() {
            let n = &self.ledger.nodes[i];
            let busy = (n.tx_count + n.rx_count) as f64 * air;
            let cost = to_nj(self.params.idle_power * (horizon - busy).max(0.0));
            if self.ledger.charge(i, cost) {
                self.ledger.nodes[i].idle_nj += cost;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Area, Position};

    #[derive(Debug)]
    struct Ev(ChannelEvent);

    impl From<ChannelEvent> for Ev {
        fn from(e: ChannelEvent) -> Self {
            Ev(e)
        }
    }

    fn pkt(source: NodeId) -> Packet {
        Packet {
            source,
            seq: 0,
            value: 1.0,
            ttl: 4,
            origin_time: 0.0,
        }
    }

    fn topo(points: &[(f64, f64)]) -> Topology {
        Topology::new_static(
            Area::default(),
            points.iter().map(|&(x, y)| Position::new(x, y)).collect(),
        )
    }

    /// Drives the channel alone; returns deliveries in order.
    fn drain(ch: &mut Channel, k: &mut Kernel<Ev>, topo: &mut Topology) -> Vec<(Time, Delivery)> {
        let mut out = vec![];
        while let Some((t, Ev(e))) = k.pop_until(f64::INFINITY) {
            match e {
                ChannelEvent::Attempt { node } => {
                    ch.on_attempt(node, t, k, topo).unwrap();
                }
                ChannelEvent::TxEnd { node, tx } => ch.on_tx_end(node, tx, t, k).unwrap(),
                ChannelEvent::RxEnd { receiver, tx } => {
                    if let Some(d) = ch.on_rx_end(receiver, tx) {
                        out.push((t, d));
                    }
                }
                ChannelEvent::Deliver {
                    receiver,
                    sender,
                    packet,
                } => out.extend(ch.on_deliver(receiver, sender, packet).map(|d| (t, d))),
            }
        }
        out
    }

    #[test]
    fn per_packet_energy() {
        let p = RadioParams::default();
        assert!((p.airtime() - 512e-6).abs() < 1e-18);
        assert_eq!(p.tx_energy_nj(), 337_920);
        assert_eq!(p.rx_energy_nj(), 202_240);
        assert!((p.tx_energy_nj() as f64 / NJ_PER_J - 3.3792e-4).abs() < 1e-15);
        assert!((p.rx_energy_nj() as f64 / NJ_PER_J - 2.0224e-4).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        let mut p = RadioParams::default();
        p.tx_range = 0.0;
        assert!(p.validate().is_err());
        let mut p = RadioParams::default();
        p.idle_power = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_sender_reaches_all_neighbors() {
        let mut t = topo(&[(400.0, 400.0), (450.0, 400.0), (400.0, 480.0), (330.0, 400.0), (600.0, 600.0)]);
        for mode in [ChannelMode::Ideal, ChannelMode::Contended] {
            let mut k = Kernel::new(0);
            let mut ch = Channel::new(RadioParams::default(), mode, &mut t, 1).unwrap();
            ch.broadcast(0, pkt(0), 0.0, &mut k, &mut t).unwrap();
            let got = drain(&mut ch, &mut k, &mut t);
            let mut rx: Vec<NodeId> = got.iter().map(|(_, d)| d.receiver).collect();
            rx.sort();
            assert_eq!(rx, vec![1, 2, 3]);
            let l = ch.ledger();
            assert_eq!((l.tx_count(), l.rx_count(), l.collision_count()), (1, 3, 0));
            assert_eq!(l.consumed_nj(), 337_920 + 3 * 202_240);
        }
    }

    #[test]
    fn hidden_terminals_collide_at_common_receiver() {
        // 0 and 2 are 180 m apart (cannot sense each other); 1 sits between.
        let mut t = topo(&[(100.0, 100.0), (190.0, 100.0), (280.0, 100.0)]);
        let mut k = Kernel::new(0);
        let mut ch = Channel::new(RadioParams::default(), ChannelMode::Contended, &mut t, 1).unwrap();
        let a = ch.on_attempt(0, 0.0, &mut k, &mut t);
        assert!(matches!(a, Ok(Attempt::Nothing)));
        ch.queues[0].push_back(pkt(0));
        ch.queues[2].push_back(pkt(2));
        assert!(matches!(ch.on_attempt(0, 0.0, &mut k, &mut t).unwrap(), Attempt::Started(_)));
        assert!(matches!(ch.on_attempt(2, 1e-4, &mut k, &mut t).unwrap(), Attempt::Started(_)));
        let got = drain(&mut ch, &mut k, &mut t);
        assert!(got.is_empty(), "{got:?}");
        let l = ch.ledger();
        assert_eq!(l.nodes[1].collision_count, 2);
        // Receiver still pays for both garbled packets.
        assert_eq!(l.nodes[1].rx_count, 2);
    }

    #[test]
    fn neighbors_in_sense_range_defer_instead_of_colliding() {
        let mut t = topo(&[(100.0, 100.0), (150.0, 100.0), (200.0, 100.0)]);
        let mut k = Kernel::new(0);
        let mut ch = Channel::new(RadioParams::default(), ChannelMode::Contended, &mut t, 4).unwrap();
        ch.queues[0].push_back(pkt(0));
        ch.queues[2].push_back(pkt(2));
        ch.state[2] = MacState::Contending;
        assert!(matches!(ch.on_attempt(0, 0.0, &mut k, &mut t).unwrap(), Attempt::Started(_)));
        assert!(matches!(
            ch.on_attempt(2, 1e-4, &mut k, &mut t).unwrap(),
            Attempt::Deferred { .. }
        ));
        let got = drain(&mut ch, &mut k, &mut t);
        assert_eq!(ch.ledger().collision_count(), 0);
        let from: Vec<(NodeId, NodeId)> = got.iter().map(|(_, d)| (d.sender, d.receiver)).collect();
        assert!(from.contains(&(0, 1)) && from.contains(&(2, 1)));
    }

    #[test]
    fn defer_retries_follow_the_mac_stream() {
        // A 1000-bit packet keeps the medium busy for 1 ms.
        let params = RadioParams {
            packet_bits: 1000,
            backoff_factor: 1.0,
            sense_delay: 0.0,
            ..RadioParams::default()
        };
        let mut t = topo(&[(100.0, 100.0), (150.0, 100.0)]);
        let mut k = Kernel::new(0);
        let mut ch = Channel::new(params, ChannelMode::Contended, &mut t, 9).unwrap();
        ch.queues[0].push_back(pkt(0));
        ch.on_attempt(0, 0.0, &mut k, &mut t).unwrap();
        ch.queues[1].push_back(pkt(1));
        ch.state[1] = MacState::Contending;
        k.schedule(0.0, ChannelEvent::Attempt { node: 1 }.into()).unwrap();

        // Expected schedule from an independent copy of node 1's stream.
        let mut rng = rng_stream(9, "mac.node.1");
        let mut at = 0.0;
        let mut expected = vec![];
        while at < 1e-3 {
            at += rng.random_range(0.0..=1e-3);
            expected.push(at);
        }
        let mut attempts = vec![];
        while let Some((now, Ev(e))) = k.pop_until(1.0) {
            match e {
                ChannelEvent::Attempt { node: 1 } => match ch.on_attempt(1, now, &mut k, &mut t).unwrap() {
                    Attempt::Deferred { retry_at } => attempts.push(retry_at),
                    Attempt::Started(s) => {
                        assert_eq!(s.start, *expected.last().unwrap());
                        break;
                    }
                    Attempt::Nothing => unreachable!(),
                },
                ChannelEvent::TxEnd { node, tx } => ch.on_tx_end(node, tx, now, &mut k).unwrap(),
                ChannelEvent::RxEnd { receiver, tx } => {
                    ch.on_rx_end(receiver, tx);
                }
                _ => {}
            }
        }
        assert_eq!(attempts, expected);
    }

    #[test]
    fn starts_inside_the_sense_delay_collide() {
        let mut t = topo(&[(100.0, 100.0), (180.0, 100.0), (140.0, 100.0)]);
        for (gap, collided) in [(10e-6, 2), (30e-6, 0)] {
            let mut k = Kernel::new(0);
            let mut ch = Channel::new(RadioParams::default(), ChannelMode::Contended, &mut t, 4).unwrap();
            ch.queues[0].push_back(pkt(0));
            ch.queues[1].push_back(pkt(1));
            assert!(matches!(ch.on_attempt(0, 0.0, &mut k, &mut t).unwrap(), Attempt::Started(_)));
            let second = ch.on_attempt(1, gap, &mut k, &mut t).unwrap();
            assert_eq!(matches!(second, Attempt::Started(_)), collided > 0);
            drain(&mut ch, &mut k, &mut t);
            assert_eq!(ch.ledger().nodes[2].collision_count, collided);
        }
    }

    #[test]
    fn idle_medium_means_no_defer() {
        let mut t = topo(&[(100.0, 100.0), (150.0, 100.0)]);
        let mut k: Kernel<Ev> = Kernel::new(0);
        let mut ch = Channel::new(RadioParams::default(), ChannelMode::Contended, &mut t, 1).unwrap();
        ch.queues[0].push_back(pkt(0));
        let r = ch.on_attempt(0, 0.25, &mut k, &mut t).unwrap();
        assert!(matches!(r, Attempt::Started(TxStart { start, .. }) if start == 0.25));
    }

    #[test]
    fn tail_drop_when_queue_full() {
        let params = RadioParams {
            queue_capacity: 2,
            ..RadioParams::default()
        };
        let mut t = topo(&[(100.0, 100.0), (150.0, 100.0)]);
        let mut k: Kernel<Ev> = Kernel::new(0);
        let mut ch = Channel::new(params, ChannelMode::Contended, &mut t, 1).unwrap();
        for _ in 0..2 {
            assert_eq!(ch.broadcast(0, pkt(0), 0.0, &mut k, &mut t).unwrap(), Enqueue::Queued);
        }
        assert_eq!(ch.broadcast(0, pkt(0), 0.0, &mut k, &mut t).unwrap(), Enqueue::QueueFull);
        assert_eq!(ch.ledger().drop_count(), 1);
        let got = drain(&mut ch, &mut k, &mut t);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn depleted_node_goes_silent() {
        // Enough for exactly one transmission.
        let params = RadioParams {
            initial_energy: 3.3792e-4,
            ..RadioParams::default()
        };
        let mut t = topo(&[(100.0, 100.0), (900.0, 900.0)]);
        let mut k: Kernel<Ev> = Kernel::new(0);
        let mut ch = Channel::new(params, ChannelMode::Ideal, &mut t, 1).unwrap();
        assert!(matches!(ch.broadcast(0, pkt(0), 0.0, &mut k, &mut t).unwrap(), Enqueue::Sent(_)));
        assert!(!ch.is_alive(0));
        assert_eq!(ch.ledger().nodes[0].remaining_nj, 0);
        assert_eq!(ch.broadcast(0, pkt(0), 1.0, &mut k, &mut t).unwrap(), Enqueue::SenderDead);
        assert_eq!(ch.ledger().tx_count(), 1);
    }
}
