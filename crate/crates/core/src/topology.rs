//! Node placement and random-waypoint motion.
//!
//! Positions are computed on demand from the current leg of each node, so
//! there is no tick size. Legs advance lazily as queries move forward in time.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::kernel::{rng_stream, RngStream, Time};

pub type NodeId = usize;

/// A point in the field, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(&self, to: &Position, frac: f64) -> Position {
        Position {
            x: self.x + (to.x - self.x) * frac,
            y: self.y + (to.y - self.y) * frac,
        }
    }
}

/// Rectangular deployment field with its origin at (0, 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Self {
        Area { width, height }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Position {
        Position {
            x: rng.random_range(0.0..=self.width),
            y: rng.random_range(0.0..=self.height),
        }
    }
}

impl Default for Area {
    fn default() -> Self {
        Area::new(800.0, 800.0)
    }
}

/// k×k lattice with half-spacing margins. `node_count` must be a perfect square.
/// Node index `j*k + i` sits at column `i`, row `j`.
pub fn place_grid(node_count: usize, area: Area) -> Result<Vec<Position>> {
    let k = (node_count as f64).sqrt().round() as usize;
    if k == 0 || k * k != node_count {
        return Err(SimError::config(format!(
            "grid placement needs a perfect-square node count, got {node_count}"
        )));
    }
    let (dx, dy) = (area.width / k as f64, area.height / k as f64);
    Ok((0..k)
        .flat_map(|j| (0..k).map(move |i| Position::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy)))
        .collect())
}

/// Independent uniform positions over the field.
pub fn place_random<R: Rng>(node_count: usize, area: Area, rng: &mut R) -> Vec<Position> {
    (0..node_count).map(|_| area.sample(rng)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MobilityMode {
    Static,
    /// Random waypoint with zero pause; leg speed uniform in `[0.1·v_max, v_max]`.
    Waypoint { v_max: f64 },
}

/// One straight leg of a node's trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leg {
    pub from: Position,
    pub to: Position,
    pub start: Time,
    pub speed: f64,
}

impl Leg {
    pub fn arrival(&self) -> Time {
        self.start + self.from.distance(&self.to) / self.speed
    }

    pub fn position_at(&self, t: Time) -> Position {
        let len = self.from.distance(&self.to);
        if len == 0.0 {
            return self.to;
        }
        let frac = ((t - self.start) * self.speed / len).clamp(0.0, 1.0);
        self.from.lerp(&self.to, frac)
    }
}

struct Mover {
    leg: Leg,
    rng: RngStream,
}

/// Authoritative source of node positions at any time.
pub struct Topology {
    area: Area,
    initial: Vec<Position>,
    mode: MobilityMode,
    movers: Vec<Mover>,
}

impl Topology {
    pub fn new_static(area: Area, positions: Vec<Position>) -> Self {
        Topology {
            area,
            initial: positions,
            mode: MobilityMode::Static,
            movers: Vec::new(),
        }
    }

    /// Mobile topology; each node draws its legs from stream `mobility.node.<id>`.
    pub fn new_waypoint(area: Area, positions: Vec<Position>, v_max: f64, seed: u64) -> Result<Self> {
        if !(v_max > 0.0) {
            return Err(SimError::config(format!("waypoint max speed must be > 0, got {v_max}")));
        }
        let movers = positions
            .iter()
            .enumerate()
            .map(|(id, &p)| {
                let mut rng = rng_stream(seed, &format!("mobility.node.{id}"));
                let leg = Self::draw_leg(area, v_max, p, 0.0, &mut rng);
                Mover { leg, rng }
            })
            .collect();
        Ok(Topology {
            area,
            initial: positions,
            mode: MobilityMode::Waypoint { v_max },
            movers,
        })
    }

    /// Builds a topology from explicit legs. Each node follows its leg, then
    /// continues with random waypoints from `mobility.node.<id>`.
    pub fn with_legs(area: Area, legs: Vec<Leg>, v_max: f64, seed: u64) -> Self {
        let initial = legs.iter().map(|l| l.from).collect();
        let movers = legs
            .into_iter()
            .enumerate()
            .map(|(id, leg)| Mover {
                leg,
                rng: rng_stream(seed, &format!("mobility.node.{id}")),
            })
            .collect();
        Topology {
            area,
            initial,
            mode: MobilityMode::Waypoint { v_max },
            movers,
        }
    }

    fn draw_leg(area: Area, v_max: f64, from: Position, start: Time, rng: &mut RngStream) -> Leg {
        let to = area.sample(rng);
        let speed = rng.random_range(0.1 * v_max..=v_max);
        Leg { from, to, start, speed }
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn mode(&self) -> MobilityMode {
        self.mode
    }

    pub fn is_static(&self) -> bool {
        self.mode == MobilityMode::Static
    }

    pub fn initial_positions(&self) -> &[Position] {
        &self.initial
    }

    /// Current leg of a mobile node, or None for static topologies.
    pub fn leg(&self, node: NodeId) -> Option<Leg> {
        self.movers.get(node).map(|m| m.leg)
    }

    /// Advances `node` past every leg that ends at or before `t`, drawing
    /// fresh waypoints. Returns the arrival time of the current leg.
    pub fn advance(&mut self, node: NodeId, t: Time) -> Option<Time> {
        let MobilityMode::Waypoint { v_max } = self.mode else {
            return None;
        };
        let area = self.area;
        let mover = &mut self.movers[node];
        loop {
            let arrival = mover.leg.arrival();
            if arrival > t {
                return Some(arrival);
            }
            mover.leg = Self::draw_leg(area, v_max, mover.leg.to, arrival, &mut mover.rng);
        }
    }

    /// Queries must be nondecreasing in `t` per node once legs have advanced.
    pub fn position_at(&mut self, node: NodeId, t: Time) -> Position {
        match self.mode {
            MobilityMode::Static => self.initial[node],
            MobilityMode::Waypoint { .. } => {
                self.advance(node, t);
                self.movers[node].leg.position_at(t)
            }
        }
    }

    pub fn distance(&mut self, i: NodeId, j: NodeId, t: Time) -> f64 {
        if i == j {
            return 0.0;
        }
        let a = self.position_at(i, t);
        let b = self.position_at(j, t);
        a.distance(&b)
    }

    /// Snapshot of all positions at `t`.
    pub fn positions_at(&mut self, t: Time) -> Vec<Position> {
        (0..self.len()).map(|n| self.position_at(n, t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> Area {
        Area::default()
    }

    #[test]
    fn grid_of_100_has_80m_spacing() {
        let p = place_grid(100, field()).unwrap();
        assert_eq!(p[0], Position::new(40.0, 40.0));
        assert_eq!(p[1].distance(&p[0]), 80.0);
        assert!((p[11].distance(&p[0]) - 113.137_084_989_847_6).abs() < 1e-9);
    }

    #[test]
    fn grid_of_4() {
        let p = place_grid(4, Area::new(200.0, 200.0)).unwrap();
        assert_eq!(
            p,
            vec![
                Position::new(50.0, 50.0),
                Position::new(150.0, 50.0),
                Position::new(50.0, 150.0),
                Position::new(150.0, 150.0)
            ]
        );
    }

    #[test]
    fn grid_rejects_non_square() {
        assert!(place_grid(10, field()).is_err());
        assert!(place_grid(0, field()).is_err());
    }

    #[test]
    fn random_placement_is_uniform_and_seeded() {
        let mut rng = rng_stream(3, "topology");
        let p = place_random(10_000, field(), &mut rng);
        assert!(p.iter().all(|q| field().contains(q)));
        let mean_x = p.iter().map(|q| q.x).sum::<f64>() / p.len() as f64;
        assert!((mean_x - 400.0).abs() < 15.0, "mean x {mean_x}");
        let again = place_random(10_000, field(), &mut rng_stream(3, "topology"));
        assert_eq!(p, again);
    }

    #[test]
    fn static_node_never_moves() {
        let mut t = Topology::new_static(field(), vec![Position::new(40.0, 40.0)]);
        for time in [0.0, 1.5, 1e4] {
            assert_eq!(t.position_at(0, time), Position::new(40.0, 40.0));
        }
    }

    #[test]
    fn linear_motion_along_leg() {
        let leg = Leg {
            from: Position::new(0.0, 0.0),
            to: Position::new(100.0, 0.0),
            start: 0.0,
            speed: 2.0,
        };
        let mut t = Topology::with_legs(field(), vec![leg], 2.0, 1);
        assert_eq!(t.position_at(0, 10.0), Position::new(20.0, 0.0));
        assert_eq!(leg.arrival(), 50.0);
        assert_eq!(t.position_at(0, 50.0), Position::new(100.0, 0.0));
        let after = t.leg(0).unwrap();
        assert_eq!(after.start, 50.0);
        assert_eq!(after.from, Position::new(100.0, 0.0));
        assert!(after.speed >= 0.2 && after.speed <= 2.0);
    }

    #[test]
    fn distance_examples() {
        let mut t = Topology::new_static(
            field(),
            vec![Position::new(40.0, 40.0), Position::new(120.0, 40.0), Position::new(0.0, 0.0), Position::new(300.0, 400.0)],
        );
        assert_eq!(t.distance(0, 1, 0.0), 80.0);
        assert_eq!(t.distance(2, 3, 0.0), 500.0);
        assert_eq!(t.distance(1, 1, 0.0), 0.0);
    }

    #[test]
    fn mobile_nodes_stay_in_field_and_keep_speed() {
        let mut rng = rng_stream(9, "topology");
        let start = place_random(20, field(), &mut rng);
        let mut topo = Topology::new_waypoint(field(), start, 10.0, 9).unwrap();
        let mut t = 0.0;
        while t < 500.0 {
            for n in 0..20 {
                let p = topo.position_at(n, t);
                assert!(field().contains(&p), "{p:?}");
                let leg = topo.leg(n).unwrap();
                assert!(leg.speed >= 1.0 && leg.speed <= 10.0);
                // Displacement rate within a leg equals the drawn speed.
                let dt = ((leg.arrival() - t) / 2.0).min(0.5);
                if dt > 1e-3 {
                    let q = leg.position_at(t + dt);
                    let rate = p.distance(&q) / dt;
                    assert!((rate - leg.speed).abs() < 1e-9, "{rate} vs {}", leg.speed);
                }
            }
            t += 0.73;
        }
    }

    #[test]
    fn mobility_is_deterministic() {
        let start = place_random(5, field(), &mut rng_stream(1, "topology"));
        let mut a = Topology::new_waypoint(field(), start.clone(), 2.0, 5).unwrap();
        let mut b = Topology::new_waypoint(field(), start, 2.0, 5).unwrap();
        assert_eq!(a.positions_at(333.0), b.positions_at(333.0));
    }
}
