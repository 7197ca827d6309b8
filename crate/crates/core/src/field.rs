//! Ground-truth sensor readings.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::kernel::{rng_stream, RngStream, Time};
use crate::topology::{Area, NodeId, Position};

/// Per-node reading that starts uniform in `[0, 100]` and steps by
/// `increment` every `interval` seconds.
#[derive(Clone, Debug)]
pub struct LinearModel {
    initial: Vec<f64>,
    pub increment: f64,
    pub interval: f64,
}

impl LinearModel {
    pub fn new<R: Rng>(node_count: usize, rng: &mut R) -> Self {
        let initial = (0..node_count).map(|_| rng.random_range(0.0..=100.0)).collect();
        Self::with_initial(initial)
    }

    pub fn with_initial(initial: Vec<f64>) -> Self {
        LinearModel {
            initial,
            increment: 10.0,
            interval: 1.0,
        }
    }

    pub fn initial(&self, node: NodeId) -> f64 {
        self.initial[node]
    }

    pub fn reading(&self, node: NodeId, t: Time) -> f64 {
        self.initial[node] + self.increment * (t / self.interval).floor()
    }
}

/// Zone identifier as `(column, row)` in the 4×4 partition.
pub type ZoneId = (usize, usize);

pub const ZONES_PER_SIDE: usize = 4;

/// Half-open cell lookup; coordinates on the far field edge clamp into the
/// last zone.
pub fn zone_of(position: &Position, area: Area) -> ZoneId {
    let cell = |v: f64, extent: f64| -> usize {
        let idx = (v / (extent / ZONES_PER_SIDE as f64)).floor();
        (idx.max(0.0) as usize).min(ZONES_PER_SIDE - 1)
    };
    (cell(position.x, area.width), cell(position.y, area.height))
}

/// Spatially correlated readings: each zone has its own mean and spread,
/// and every zone mean follows a symmetric triangular ramp over the horizon.
#[derive(Clone, Debug)]
pub struct ZoneModel {
    area: Area,
    base_mean: Vec<f64>,
    sigma: Vec<f64>,
    pub ramp_amplitude: f64,
    pub horizon: Time,
    node_rngs: Vec<RngStream>,
}

impl ZoneModel {
    pub const INTER_ZONE_MEAN: f64 = 20.0;
    pub const INTER_ZONE_SD: f64 = 2.0;
    pub const MAX_INTRA_ZONE_SD: f64 = 0.5;
    pub const DEFAULT_RAMP: f64 = 5.0;

    /// Zone parameters come from `rng`; per-node noise from `data.node.<id>`.
    pub fn new<R: Rng>(area: Area, horizon: Time, node_count: usize, seed: u64, rng: &mut R) -> Self {
        let zones = ZONES_PER_SIDE * ZONES_PER_SIDE;
        let normal = Normal::new(Self::INTER_ZONE_MEAN, Self::INTER_ZONE_SD).expect("valid normal");
        let base_mean = (0..zones).map(|_| normal.sample(rng)).collect();
        let sigma = (0..zones)
            .map(|_| rng.random_range(0.0..=Self::MAX_INTRA_ZONE_SD))
            .collect();
        Self::with_params(area, horizon, base_mean, sigma, node_count, seed)
    }

    pub fn with_params(
        area: Area,
        horizon: Time,
        base_mean: Vec<f64>,
        sigma: Vec<f64>,
        node_count: usize,
        seed: u64,
    ) -> Self {
        let node_rngs = (0..node_count)
            .map(|id| rng_stream(seed, &format!("data.node.{id}")))
            .collect();
        ZoneModel {
            area,
            base_mean,
            sigma,
            ramp_amplitude: Self::DEFAULT_RAMP,
            horizon,
            node_rngs,
        }
    }

    fn index(z: ZoneId) -> usize {
        z.1 * ZONES_PER_SIDE + z.0
    }

    pub fn base_mean(&self, z: ZoneId) -> f64 {
        self.base_mean[Self::index(z)]
    }

    pub fn sigma(&self, z: ZoneId) -> f64 {
        self.sigma[Self::index(z)]
    }

    pub fn zone_of(&self, position: &Position) -> ZoneId {
        zone_of(position, self.area)
    }

    pub fn zone_mean(&self, z: ZoneId, t: Time) -> f64 {
        let half = self.horizon / 2.0;
        let t = t.clamp(0.0, self.horizon);
        let lift = if t <= half { t / half } else { (self.horizon - t) / half };
        self.base_mean(z) + self.ramp_amplitude * lift
    }

    /// One draw for `node` located at `position` at time `t`.
    pub fn reading(&mut self, node: NodeId, position: &Position, t: Time) -> f64 {
        let z = self.zone_of(position);
        let mean = self.zone_mean(z, t);
        let sd = self.sigma(z);
        if sd == 0.0 {
            return mean;
        }
        let normal = Normal::new(mean, sd).expect("finite sigma");
        normal.sample(&mut self.node_rngs[node])
    }
}

/// Which generator drives readings.
#[derive(Clone, Debug)]
pub enum FieldModel {
    Linear(LinearModel),
    Zone(ZoneModel),
}

impl FieldModel {
    pub fn reading(&mut self, node: NodeId, position: &Position, t: Time) -> f64 {
        match self {
            FieldModel::Linear(m) => m.reading(node, t),
            FieldModel::Zone(m) => m.reading(node, position, t),
        }
    }
}
