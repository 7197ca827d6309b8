//! Trace sinks, oracles and statistics shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use sensorcast::kernel::Time;
use sensorcast::metrics::{Sample, ViewTable};
use sensorcast::protocol::{Packet, Reception};
use sensorcast::topology::{NodeId, Position};
use sensorcast::TraceSink;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub t: Time,
    pub node: NodeId,
    pub sender: NodeId,
    pub source: NodeId,
    pub seq: u64,
    pub outcome: Reception,
}

/// Records what the tests need from a run's event stream.
#[derive(Default)]
pub struct Probe {
    pub keep_decisions: bool,
    pub decisions: Vec<Decision>,
    pub transmissions: u64,
    sent: HashSet<(NodeId, NodeId, u64)>,
    pub repeated_tx: Vec<(NodeId, NodeId, u64)>,
    pub max_rx_distance: f64,
    pub fresh: u64,
    pub forward_votes: u64,
    pub mirror: Option<Mirror>,
}

impl Probe {
    pub fn with_decisions() -> Self {
        Probe {
            keep_decisions: true,
            ..Probe::default()
        }
    }

    pub fn with_mirror(positions: Vec<Position>) -> Self {
        Probe {
            mirror: Some(Mirror::new(positions)),
            ..Probe::default()
        }
    }
}

impl TraceSink for Probe {
    fn on_generate(&mut self, _t: Time, packet: &Packet) {
        if let Some(m) = &mut self.mirror {
            m.truth[packet.source] = Some(packet.value);
        }
    }

    fn on_transmit(&mut self, _t: Time, sender: NodeId, packet: &Packet, receivers: &[(NodeId, f64)]) {
        self.transmissions += 1;
        let key = (sender, packet.source, packet.seq);
        if !self.sent.insert(key) {
            self.repeated_tx.push(key);
        }
        for &(_, d) in receivers {
            self.max_rx_distance = self.max_rx_distance.max(d);
        }
    }

    fn on_decision(&mut self, t: Time, node: NodeId, sender: NodeId, packet: &Packet, outcome: Reception) {
        if let Some(vote) = outcome.policy_forward() {
            self.fresh += 1;
            self.forward_votes += u64::from(vote);
        }
        if let Some(m) = &mut self.mirror {
            if outcome.is_fresh() {
                let cell = &mut m.views[node * m.n + packet.source];
                if cell.is_none_or(|(seq, _)| packet.seq > seq) {
                    *cell = Some((packet.seq, packet.value));
                }
            }
        }
        if self.keep_decisions {
            self.decisions.push(Decision {
                t,
                node,
                sender,
                source: packet.source,
                seq: packet.seq,
                outcome,
            });
        }
    }

    fn on_sample(&mut self, sample: &Sample, _views: &ViewTable, _positions: &[Position]) {
        if let Some(m) = &mut self.mirror {
            m.check(sample);
        }
    }

    fn wants_transmissions(&self) -> bool {
        true
    }
}

/// Brute-force weighted error kept alongside the simulator's own observer.
pub struct Mirror {
    n: usize,
    positions: Vec<Position>,
    truth: Vec<Option<f64>>,
    views: Vec<Option<(u64, f64)>>,
    pub samples: usize,
    pub worst_rel: f64,
}

impl Mirror {
    pub fn new(positions: Vec<Position>) -> Self {
        let n = positions.len();
        Mirror {
            n,
            positions,
            truth: vec![None; n],
            views: vec![None; n * n],
            samples: 0,
            worst_rel: 0.0,
        }
    }

    fn e(&self, i: usize) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.n {
            if i == j {
                continue;
            }
            if let (Some((_, v)), Some(truth)) = (self.views[i * self.n + j], self.truth[j]) {
                let (a, b) = (self.positions[i], self.positions[j]);
                let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                let steps = (d / 100.0).ceil();
                let w = if steps < 1.0 { 1.0 } else { 1.0 / steps };
                sum += (v - truth).abs() * w;
            }
        }
        sum / self.n as f64
    }

    fn check(&mut self, sample: &Sample) {
        self.samples += 1;
        for i in 0..self.n {
            self.worst_rel = self.worst_rel.max(rel_diff(self.e(i), sample.weighted[i]));
        }
        let mean = (0..self.n).map(|i| self.e(i)).sum::<f64>() / self.n as f64;
        self.worst_rel = self.worst_rel.max(rel_diff(mean, sample.mean_weighted_err));
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Grid positions computed independently of the simulator.
pub fn grid_positions(side: usize, extent: f64) -> Vec<Position> {
    let step = extent / side as f64;
    (0..side * side)
        .map(|idx| {
            let (i, j) = (idx % side, idx / side);
            Position::new((i as f64 + 0.5) * step, (j as f64 + 0.5) * step)
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for k in 0..x.len() {
        cov += (rx[k] - mx) * (ry[k] - my);
        vx += (rx[k] - mx).powi(2);
        vy += (ry[k] - my).powi(2);
    }
    cov / (vx * vy).sqrt()
}
