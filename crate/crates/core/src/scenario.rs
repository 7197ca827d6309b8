//! Experiment configuration and its flat key-value file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMode, RadioParams};
use crate::error::{Result, SimError};
use crate::protocol::{Bucket, BucketTable, ProtocolConfig, ProtocolKind, DEFAULT_TTL};
use crate::topology::{Area, MobilityMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Grid,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataModel {
    Linear,
    Zone,
}

/// Everything needed to run one experiment cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub protocol: ProtocolConfig,
    pub placement: Placement,
    pub mobility: MobilityMode,
    pub data_model: DataModel,
    /// Reports per second per node.
    pub report_rate: f64,
    /// Offset each node's report schedule by a random phase in `[0, 1/rate)`.
    /// When false every node reports at exactly `k / rate`.
    pub staggered_reports: bool,
    pub radio: RadioParams,
    pub channel: ChannelMode,
    pub duration: f64,
    pub sample_interval: f64,
    pub node_count: usize,
    pub area: Area,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            protocol: ProtocolConfig::new(ProtocolKind::Flooding),
            placement: Placement::Grid,
            mobility: MobilityMode::Static,
            data_model: DataModel::Linear,
            report_rate: 1.0,
            staggered_reports: true,
            radio: RadioParams::default(),
            channel: ChannelMode::Contended,
            duration: 200.0,
            sample_interval: 1.0,
            node_count: 100,
            area: Area::default(),
            replications: 3,
            master_seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.radio.validate()?;
        if self.node_count == 0 {
            return Err(SimError::config("node_count must be >= 1"));
        }
        if self.placement == Placement::Grid {
            let k = (self.node_count as f64).sqrt().round() as usize;
            if k * k != self.node_count {
                return Err(SimError::config(format!(
                    "grid placement needs a perfect-square node count, got {}",
                    self.node_count
                )));
            }
        }
        if !(self.report_rate > 0.0 && self.report_rate.is_finite()) {
            return Err(SimError::config(format!("rate must be > 0, got {}", self.report_rate)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::config(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.sample_interval > 0.0) {
            return Err(SimError::config("sample_interval must be > 0"));
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return Err(SimError::config("field dimensions must be > 0"));
        }
        if let MobilityMode::Waypoint { v_max } = self.mobility {
            if !(v_max > 0.0 && v_max.is_finite()) {
                return Err(SimError::config(format!("speed must be > 0, got {v_max}")));
            }
        }
        if self.replications == 0 {
            return Err(SimError::config("replications must be >= 1"));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        match self.mobility {
            MobilityMode::Static => 0.0,
            MobilityMode::Waypoint { v_max } => v_max,
        }
    }

    /// Stable identifier used in CSV rows and directory names.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_r{}_tx{}_v{}_{}_{}",
            self.protocol.kind,
            match self.placement {
                Placement::Grid => "grid",
                Placement::Random => "random",
            },
            self.report_rate,
            self.radio.tx_range,
            self.speed(),
            match self.data_model {
                DataModel::Linear => "linear",
                DataModel::Zone => "zone",
            },
            match self.channel {
                ChannelMode::Ideal => "ideal",
                ChannelMode::Contended => "contended",
            },
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Partial scenario as written in a scenario file or given as CLI flags.
/// Unset keys keep the value they override.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub protocol: Option<String>,
    pub n: Option<u64>,
    pub p: Option<f64>,
    pub ttl: Option<u32>,
    /// e.g. `"1-3:0.8,4-6:0.6,7-9:0.4,10+:0.2"`
    pub buckets: Option<String>,
    pub topology: Option<String>,
    pub rate: Option<f64>,
    pub stagger: Option<bool>,
    pub tx_range: Option<f64>,
    pub speed: Option<f64>,
    pub data_model: Option<String>,
    pub channel: Option<String>,
    pub duration: Option<f64>,
    pub sample_interval: Option<f64>,
    pub nodes: Option<usize>,
    pub area: Option<f64>,
    pub queue_capacity: Option<usize>,
    pub packet_bits: Option<u32>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse_buckets(spec: &str) -> Result<BucketTable> {
    let bad = || SimError::config(format!("bad bucket table '{spec}'"));
    let mut buckets = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (range, prob) = part.split_once(':').ok_or_else(bad)?;
        let probability: f64 = prob.trim().parse().map_err(|_| bad())?;
        let range = range.trim();
        let (min_hops, max_hops) = if let Some(min) = range.strip_suffix('+') {
            (min.parse().map_err(|_| bad())?, None)
        } else if let Some((a, b)) = range.split_once('-') {
            (a.parse().map_err(|_| bad())?, Some(b.parse().map_err(|_| bad())?))
        } else {
            let v = range.parse().map_err(|_| bad())?;
            (v, Some(v))
        };
        buckets.push(Bucket {
            min_hops,
            max_hops,
            probability,
        });
    }
    BucketTable::new(buckets)
}

/// Parses `name` or `name:param` (e.g. `filtercast:3`, `unbiased:0.7`),
/// falling back to `n` / `p` / `buckets` for the parameter.
pub fn parse_protocol(spec: &str, n: u64, p: f64, buckets: Option<&str>) -> Result<ProtocolKind> {
    let (name, param) = match spec.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (spec.trim(), None),
    };
    let bad = |what: &str| SimError::config(format!("bad {what} in protocol '{spec}'"));
    let window = |param: Option<&str>| -> Result<u64> {
        param.map_or(Ok(n), |s| s.parse().map_err(|_| bad("window")))
    };
    let kind = match name.to_ascii_lowercase().as_str() {
        "flooding" | "flood" => ProtocolKind::Flooding,
        "filtercast" => ProtocolKind::Filtercast { n: window(param)? },
        "rfiltercast" => ProtocolKind::RFiltercast { n: window(param)? },
        "unbiased" => ProtocolKind::Unbiased {
            p: param.map_or(Ok(p), |s| s.parse().map_err(|_| bad("probability")))?,
        },
        "biased" => ProtocolKind::Biased {
            table: match param.or(buckets) {
                Some(t) => parse_buckets(t)?,
                None => BucketTable::standard(),
            },
        },
        other => return Err(SimError::config(format!("unknown protocol '{other}'"))),
    };
    kind.validate()?;
    Ok(kind)
}

impl ScenarioOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::config(format!("scenario file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Keys set in `other` win.
    pub fn merge(&mut self, other: &ScenarioOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            protocol, n, p, ttl, buckets, topology, rate, stagger, tx_range, speed, data_model, channel, duration,
            sample_interval, nodes, area, queue_capacity, packet_bits, replications, seed
        );
    }

    pub fn apply(&self, base: &Scenario) -> Result<Scenario> {
        let s = self.apply_unchecked(base)?;
        s.validate()?;
        Ok(s)
    }

    /// Like [`apply`](Self::apply) but leaves whole-scenario validation to
    /// the caller; only unparseable values are rejected.
    pub fn apply_unchecked(&self, base: &Scenario) -> Result<Scenario> {
        let mut s = base.clone();
        let touches_protocol = self.protocol.is_some()
            || self.n.is_some()
            || self.p.is_some()
            || self.buckets.is_some();
        if touches_protocol {
            let (base_n, base_p) = match &base.protocol.kind {
                ProtocolKind::Filtercast { n } | ProtocolKind::RFiltercast { n } => (*n, 0.5),
                ProtocolKind::Unbiased { p } => (2, *p),
                _ => (2, 0.5),
            };
            let name = self
                .protocol
                .clone()
                .unwrap_or_else(|| base.protocol.kind.name().to_string());
            s.protocol.kind = parse_protocol(
                &name,
                self.n.unwrap_or(base_n),
                self.p.unwrap_or(base_p),
                self.buckets.as_deref(),
            )?;
        }
        if let Some(ttl) = self.ttl {
            s.protocol.ttl_init = ttl;
        }
        if let Some(t) = &self.topology {
            s.placement = match t.to_ascii_lowercase().as_str() {
                "grid" => Placement::Grid,
                "random" => Placement::Random,
                other => return Err(SimError::config(format!("unknown topology '{other}'"))),
            };
        }
        if let Some(r) = self.rate {
            s.report_rate = r;
        }
        if let Some(b) = self.stagger {
            s.staggered_reports = b;
        }
        if let Some(r) = self.tx_range {
            s.radio.tx_range = r;
        }
        if let Some(v) = self.speed {
            s.mobility = if v == 0.0 {
                MobilityMode::Static
            } else {
                MobilityMode::Waypoint { v_max: v }
            };
        }
        if let Some(m) = &self.data_model {
            s.data_model = match m.to_ascii_lowercase().as_str() {
                "linear" => DataModel::Linear,
                "zone" => DataModel::Zone,
                other => return Err(SimError::config(format!("unknown data model '{other}'"))),
            };
        }
        if let Some(c) = &self.channel {
            s.channel = match c.to_ascii_lowercase().as_str() {
                "ideal" => ChannelMode::Ideal,
                "contended" => ChannelMode::Contended,
                other => return Err(SimError::config(format!("unknown channel mode '{other}'"))),
            };
        }
        if let Some(d) = self.duration {
            s.duration = d;
        }
        if let Some(d) = self.sample_interval {
            s.sample_interval = d;
        }
        if let Some(n) = self.nodes {
            s.node_count = n;
        }
        if let Some(a) = self.area {
            s.area = Area::new(a, a);
        }
        if let Some(q) = self.queue_capacity {
            s.radio.queue_capacity = q;
        }
        if let Some(b) = self.packet_bits {
            s.radio.packet_bits = b;
        }
        if let Some(r) = self.replications {
            s.replications = r;
        }
        if let Some(seed) = self.seed {
            s.master_seed = seed;
        }
        Ok(s)
    }
}

/// Default protocol parameters: n = 2 for both filters, p = 0.5, standard buckets.
pub fn standard_protocols() -> Vec<ProtocolConfig> {
    [
        ProtocolKind::Flooding,
        ProtocolKind::Filtercast { n: 2 },
        ProtocolKind::RFiltercast { n: 2 },
        ProtocolKind::Unbiased { p: 0.5 },
        ProtocolKind::Biased {
            table: BucketTable::standard(),
        },
    ]
    .into_iter()
    .map(|kind| ProtocolConfig {
        kind,
        ttl_init: DEFAULT_TTL,
    })
    .collect()
}
