//! Omniscient observer: per-node views of every source, ground truth, and
//! the distance-weighted error computed from them.

use std::collections::BTreeMap;

use crate::kernel::Time;
use crate::topology::{NodeId, Position};

/// Distance step of the weight function and of the error bins, meters.
pub const GAMMA: f64 = 100.0;
pub const BIN_WIDTH: f64 = 100.0;

/// `1 / max(1, ⌈d/γ⌉)`
pub fn weight(distance: f64) -> f64 {
    1.0 / (distance / GAMMA).ceil().max(1.0)
}

pub fn bin_of(distance: f64) -> usize {
    (distance / BIN_WIDTH).floor() as usize
}

/// Latest value node `i` holds from one source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub seq: u64,
    pub value: f64,
    pub received: Time,
}

/// `R[i][j]` for every ordered pair; the diagonal holds each source's truth.
#[derive(Clone, Debug)]
pub struct ViewTable {
    n: usize,
    cells: Vec<Option<View>>,
}

impl ViewTable {
    pub fn new(n: usize) -> Self {
        ViewTable {
            n,
            cells: vec![None; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> Option<View> {
        self.cells[i * self.n + j]
    }

    /// Stores the view if it is newer than what `i` already holds.
    /// Returns whether the table changed.
    pub fn record(&mut self, i: NodeId, source: NodeId, seq: u64, value: f64, t: Time) -> bool {
        let cell = &mut self.cells[i * self.n + source];
        if cell.is_some_and(|v| v.seq >= seq) {
            return false;
        }
        *cell = Some(View {
            seq,
            value,
            received: t,
        });
        true
    }

    /// Ground truth of `source`: its most recent generated reading.
    pub fn truth(&self, source: NodeId) -> Option<f64> {
        self.get(source, source).map(|v| v.value)
    }
}

/// Error statistics of one distance bin at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinStat {
    pub mean_abs_err: f64,
    pub n_pairs: usize,
}

/// One observation of the whole network.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: Time,
    pub bins: BTreeMap<usize, BinStat>,
    /// e_i per node.
    pub weighted: Vec<f64>,
    pub mean_weighted_err: f64,
    /// Fraction of ordered pairs `(i, j)`, `i ≠ j`, with a view present.
    pub coverage: f64,
}

/// Computes a [`Sample`] from the view table and node positions at `t`.
///
/// `e_i = (1/n) Σ_{j≠i, view present} |R[i][j] − R[j][j]| · w(d(i,j))`
pub fn observe(views: &ViewTable, positions: &[Position], t: Time) -> Sample {
    let n = views.len();
    let mut bins: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut weighted = vec![0.0; n];
    let mut present = 0usize;
    for (i, e_i) in weighted.iter_mut().enumerate() {
        let mut sum = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let (Some(view), Some(truth)) = (views.get(i, j), views.truth(j)) else {
                continue;
            };
            present += 1;
            let gap = (view.value - truth).abs();
            let d = positions[i].distance(&positions[j]);
            sum += gap * weight(d);
            let b = bins.entry(bin_of(d)).or_insert((0.0, 0));
            b.0 += gap;
            b.1 += 1;
        }
        *e_i = if n > 0 { sum / n as f64 } else { 0.0 };
    }
    let pairs = n * n.saturating_sub(1);
    Sample {
        t,
        bins: bins
            .into_iter()
            .map(|(b, (s, c))| {
                (
                    b,
                    BinStat {
                        mean_abs_err: s / c as f64,
                        n_pairs: c,
                    },
                )
            })
            .collect(),
        mean_weighted_err: if n > 0 { weighted.iter().sum::<f64>() / n as f64 } else { 0.0 },
        weighted,
        coverage: if pairs > 0 { present as f64 / pairs as f64 } else { 0.0 },
    }
}

/// Time-averaged per-bin error over samples with `t >= from`, each sample
/// weighing equally where the bin is occupied.
pub fn time_averaged_bins(samples: &[Sample], from: Time) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.t >= from) {
        for (&b, stat) in &s.bins {
            let e = acc.entry(b).or_insert((0.0, 0));
            e.0 += stat.mean_abs_err;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(b, (s, c))| (b, s / c as f64)).collect()
}

/// Mean of the network weighted error over samples with `t >= from`.
pub fn time_averaged_weighted(samples: &[Sample], from: Time) -> f64 {
    let sel: Vec<f64> = samples
        .iter()
        .filter(|s| s.t >= from)
        .map(|s| s.mean_weighted_err)
        .collect();
    if sel.is_empty() {
        0.0
    } else {
        sel.iter().sum::<f64>() / sel.len() as f64
    }
}
