//! One simulation run: wires the kernel, topology, channel, protocols, field
//! model and observer together.

use rand::Rng;

use crate::channel::{Attempt, Channel, ChannelEvent, Delivery, Enqueue, TxStart};
use crate::error::{Result, SimError};
use crate::field::{FieldModel, LinearModel, ZoneModel};
use crate::kernel::{rng_stream, Kernel, RngStream, Time};
use crate::metrics::{observe, time_averaged_weighted, Sample, ViewTable};
use crate::protocol::{NodeProtocolState, Packet, Reception};
use crate::scenario::{DataModel, Placement, Scenario};
use crate::topology::{place_grid, place_random, MobilityMode, NodeId, Position, Topology};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    ReportDue { node: NodeId, k: u64 },
    Channel(ChannelEvent),
    MetricsSample { k: u64 },
    MobilityUpdate { node: NodeId },
}

impl From<ChannelEvent> for Event {
    fn from(e: ChannelEvent) -> Self {
        Event::Channel(e)
    }
}

/// Hooks for tests and tooling. Every method defaults to a no-op.
#[allow(unused_variables)]
pub trait TraceSink {
    fn on_generate(&mut self, t: Time, packet: &Packet) {}
    /// A transmission went on air; receivers come with their distance from
    /// the sender at transmission start.
    fn on_transmit(&mut self, t: Time, sender: NodeId, packet: &Packet, receivers: &[(NodeId, f64)]) {}
    /// `node` received `packet` from `sender` and the protocol classified it.
    fn on_decision(&mut self, t: Time, node: NodeId, sender: NodeId, packet: &Packet, outcome: Reception) {}
    fn on_sample(&mut self, sample: &Sample, views: &ViewTable, positions: &[Position]) {}
    /// Opt in to the per-receiver distance computation of `on_transmit`.
    fn wants_transmissions(&self) -> bool {
        false
    }
}

impl TraceSink for () {}

/// Totals of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub total_energy_j: f64,
    pub total_energy_nj: u64,
    pub tx_count: u64,
    pub rx_count: u64,
    pub drop_count: u64,
    pub collision_count: u64,
    pub defer_count: u64,
    pub generated: u64,
    /// Network weighted error averaged over samples in the second half.
    pub mean_weighted_err: f64,
    pub coverage: f64,
    pub dead_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub samples: Vec<Sample>,
    pub summary: RunSummary,
}

pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    kernel: Kernel<Event>,
    topo: Topology,
    channel: Channel,
    nodes: Vec<NodeProtocolState>,
    protocol_rngs: Vec<RngStream>,
    field: FieldModel,
    views: ViewTable,
    samples: Vec<Sample>,
    generated: u64,
    report_phase: Vec<Time>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.node_count;
        let positions = match scenario.placement {
            Placement::Grid => place_grid(n, scenario.area)?,
            Placement::Random => place_random(n, scenario.area, &mut rng_stream(seed, "topology")),
        };
        Self::with_positions(scenario, seed, positions)
    }

    /// Uses the given initial positions instead of the scenario's placement.
    pub fn with_positions(scenario: &Scenario, seed: u64, positions: Vec<Position>) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.node_count;
        if positions.len() != n {
            return Err(SimError::config(format!("expected {n} positions, got {}", positions.len())));
        }
        if !positions.iter().all(|p| scenario.area.contains(p)) {
            return Err(SimError::config("positions must lie inside the field"));
        }
        let mut topo = match scenario.mobility {
            MobilityMode::Static => Topology::new_static(scenario.area, positions),
            MobilityMode::Waypoint { v_max } => Topology::new_waypoint(scenario.area, positions, v_max, seed)?,
        };
        let channel = Channel::new(scenario.radio.clone(), scenario.channel, &mut topo, seed)?;
        let mut protocol_rngs: Vec<RngStream> = (0..n)
            .map(|i| rng_stream(seed, &format!("protocol.node.{i}")))
            .collect();
        let nodes = (0..n)
            .map(|i| NodeProtocolState::new(i, n, &scenario.protocol, &mut protocol_rngs[i]))
            .collect();
        let mut data_rng = rng_stream(seed, "data-model");
        let field = match scenario.data_model {
            DataModel::Linear => FieldModel::Linear(LinearModel::new(n, &mut data_rng)),
            DataModel::Zone => FieldModel::Zone(ZoneModel::new(scenario.area, scenario.duration, n, seed, &mut data_rng)),
        };
        let interval = 1.0 / scenario.report_rate;
        let report_phase = if scenario.staggered_reports {
            let mut rng = rng_stream(seed, "report-phase");
            (0..n).map(|_| rng.random_range(0.0..interval)).collect()
        } else {
            vec![0.0; n]
        };
        Ok(Simulation {
            report_phase,
            scenario: scenario.clone(),
            seed,
            kernel: Kernel::new(seed),
            topo,
            channel,
            nodes,
            protocol_rngs,
            field,
            views: ViewTable::new(n),
            samples: Vec::new(),
            generated: 0,
        })
    }

    pub fn topology(&mut self) -> &mut Topology {
        &mut self.topo
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn nodes(&self) -> &[NodeProtocolState] {
        &self.nodes
    }

    pub fn views(&self) -> &ViewTable {
        &self.views
    }

    /// Overrides generated readings for the linear model (tests use fixed starts).
    pub fn set_linear_initial(&mut self, initial: Vec<f64>) -> Result<()> {
        if initial.len() != self.scenario.node_count {
            return Err(SimError::config("initial readings must cover every node"));
        }
        self.field = FieldModel::Linear(LinearModel::with_initial(initial));
        Ok(())
    }

    /// `k`-th report of `node`, computed directly so times never drift.
    pub fn report_time(&self, node: NodeId, k: u64) -> Time {
        self.report_phase[node] + k as f64 / self.scenario.report_rate
    }

    fn sample_time(&self, k: u64) -> Time {
        (k + 1) as f64 * self.scenario.sample_interval
    }

    pub fn run(self) -> Result<RunOutput> {
        self.run_with(&mut ())
    }

    pub fn run_with<S: TraceSink>(mut self, sink: &mut S) -> Result<RunOutput> {
        let duration = self.scenario.duration;
        // Samples are queued first so they win ties and observe the state
        // just before any same-instant report.
        let sample_count = (duration / self.scenario.sample_interval + 1e-9).floor() as u64;
        for k in 0..sample_count {
            let t = self.sample_time(k);
            self.kernel.schedule(t, Event::MetricsSample { k })?;
        }
        for node in 0..self.scenario.node_count {
            self.kernel.schedule(self.report_time(node, 0), Event::ReportDue { node, k: 0 })?;
            if let Some(arrival) = self.topo.advance(node, 0.0) {
                self.kernel.schedule(arrival, Event::MobilityUpdate { node })?;
            }
        }
        while let Some((t, ev)) = self.kernel.pop_until(duration) {
            self.handle(t, ev, sink)?;
        }
        self.channel.settle_idle(duration);
        let summary = self.summarize();
        Ok(RunOutput {
            samples: self.samples,
            summary,
        })
    }

    fn handle<S: TraceSink>(&mut self, t: Time, ev: Event, sink: &mut S) -> Result<()> {
        match ev {
            Event::ReportDue { node, k } => self.on_report(node, k, t, sink),
            Event::MetricsSample { .. } => {
                let positions = self.topo.positions_at(t);
                let sample = observe(&self.views, &positions, t);
                sink.on_sample(&sample, &self.views, &positions);
                self.samples.push(sample);
                Ok(())
            }
            Event::MobilityUpdate { node } => {
                if let Some(next) = self.topo.advance(node, t) {
                    self.kernel.schedule(next, Event::MobilityUpdate { node })?;
                }
                Ok(())
            }
            Event::Channel(ChannelEvent::Attempt { node }) => {
                if let Attempt::Started(start) = self.channel.on_attempt(node, t, &mut self.kernel, &mut self.topo)? {
                    self.trace_tx(&start, sink);
                }
                Ok(())
            }
            Event::Channel(ChannelEvent::TxEnd { node, tx }) => self.channel.on_tx_end(node, tx, t, &mut self.kernel),
            Event::Channel(ChannelEvent::RxEnd { receiver, tx }) => match self.channel.on_rx_end(receiver, tx) {
                Some(d) => self.on_delivery(d, t, sink),
                None => Ok(()),
            },
            Event::Channel(ChannelEvent::Deliver {
                receiver,
                sender,
                packet,
            }) => match self.channel.on_deliver(receiver, sender, packet) {
                Some(d) => self.on_delivery(d, t, sink),
                None => Ok(()),
            },
        }
    }

    fn trace_tx<S: TraceSink>(&mut self, start: &TxStart, sink: &mut S) {
        if !sink.wants_transmissions() {
            return;
        }
        let receivers: Vec<(NodeId, f64)> = start
            .receivers
            .iter()
            .map(|&r| (r, self.topo.distance(start.sender, r, start.start)))
            .collect();
        sink.on_transmit(start.start, start.sender, &start.packet, &receivers);
    }

    fn send<S: TraceSink>(&mut self, node: NodeId, packet: Packet, t: Time, sink: &mut S) -> Result<()> {
        if let Enqueue::Sent(start) = self.channel.broadcast(node, packet, t, &mut self.kernel, &mut self.topo)? {
            self.trace_tx(&start, sink);
        }
        Ok(())
    }

    fn on_report<S: TraceSink>(&mut self, node: NodeId, k: u64, t: Time, sink: &mut S) -> Result<()> {
        if !self.channel.is_alive(node) {
            return Ok(());
        }
        let position = self.topo.position_at(node, t);
        let value = self.field.reading(node, &position, t);
        let packet = self.nodes[node].generate(value, t, &self.scenario.protocol);
        self.generated += 1;
        self.views.record(node, node, packet.seq, value, t);
        sink.on_generate(t, &packet);
        self.send(node, packet, t, sink)?;
        let next = self.report_time(node, k + 1);
        if next <= self.scenario.duration {
            self.kernel.schedule(next, Event::ReportDue { node, k: k + 1 })?;
        }
        Ok(())
    }

    fn on_delivery<S: TraceSink>(&mut self, d: Delivery, t: Time, sink: &mut S) -> Result<()> {
        let node = d.receiver;
        let outcome = self.nodes[node].on_receive(&d.packet, &self.scenario.protocol, &mut self.protocol_rngs[node]);
        sink.on_decision(t, node, d.sender, &d.packet, outcome);
        if outcome.is_fresh() {
            self.views.record(node, d.packet.source, d.packet.seq, d.packet.value, t);
        }
        if let Reception::Forward { ttl } = outcome {
            self.send(node, Packet { ttl, ..d.packet }, t, sink)?;
        }
        Ok(())
    }

    fn summarize(&self) -> RunSummary {
        let ledger = self.channel.ledger();
        let warm = self.scenario.duration / 2.0;
        RunSummary {
            seed: self.seed,
            total_energy_j: ledger.consumed_j(),
            total_energy_nj: ledger.consumed_nj(),
            tx_count: ledger.tx_count(),
            rx_count: ledger.rx_count(),
            drop_count: ledger.drop_count(),
            collision_count: ledger.collision_count(),
            defer_count: self.channel.defer_count(),
            generated: self.generated,
            mean_weighted_err: time_averaged_weighted(&self.samples, warm),
            coverage: self.samples.last().map_or(0.0, |s| s.coverage),
            dead_nodes: ledger.nodes.iter().filter(|n| !n.alive).count(),
        }
    }
}

/// Runs one replication of `scenario` with the given seed.
pub fn run_once(scenario: &Scenario, seed: u64) -> Result<RunOutput> {
    Simulation::new(scenario, seed)?.run()
}
