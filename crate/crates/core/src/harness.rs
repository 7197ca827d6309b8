//! Replications, sweep matrices and CSV output.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Result, SimError};
use crate::kernel::derive_seed;
use crate::protocol::{ProtocolConfig, DEFAULT_TTL};
use crate::scenario::{parse_protocol, standard_protocols, DataModel, Placement, Scenario, ScenarioOverrides};
use crate::sim::{run_once, RunOutput};
use crate::topology::MobilityMode;

pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Overrides the default output directory.
pub const OUT_DIR_ENV: &str = "SENSORCAST_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";

pub const SAMPLES_HEADER: [&str; 8] = [
    "scenario_id",
    "seed",
    "t",
    "bin",
    "mean_abs_err",
    "n_pairs",
    "mean_weighted_err",
    "coverage",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "scenario_id",
    "seed",
    "protocol",
    "rate",
    "tx_range",
    "speed",
    "total_energy_j",
    "tx_count",
    "rx_count",
    "drop_count",
    "collision_count",
    "mean_weighted_err",
    "coverage",
];

pub const MANIFEST_HEADER: [&str; 6] = ["cell", "seed", "status", "samples", "summary", "error"];

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Seeds of the replications, in order.
pub fn replication_seeds(scenario: &Scenario) -> Vec<u64> {
    (0..scenario.replications as u64)
        .map(|i| derive_seed(scenario.master_seed, i))
        .collect()
}

/// Runs every replication; results come back in seed order either way.
pub fn run_replications(scenario: &Scenario, parallel: bool) -> Result<Vec<RunOutput>> {
    scenario.validate()?;
    let seeds = replication_seeds(scenario);
    if parallel {
        seeds.par_iter().map(|&s| run_once(scenario, s)).collect()
    } else {
        seeds.iter().map(|&s| run_once(scenario, s)).collect()
    }
}

pub fn write_samples<W: Write>(out: W, scenario: &Scenario, runs: &[RunOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLES_HEADER)?;
    let id = scenario.id();
    for run in runs {
        let seed = run.summary.seed.to_string();
        for s in &run.samples {
            let (t, werr, cov) = (s.t.to_string(), s.mean_weighted_err.to_string(), s.coverage.to_string());
            if s.bins.is_empty() {
                w.write_record([id.as_str(), &seed, &t, "", "", "", &werr, &cov])?;
            }
            for (bin, stat) in &s.bins {
                w.write_record([
                    id.as_str(),
                    &seed,
                    &t,
                    &bin.to_string(),
                    &stat.mean_abs_err.to_string(),
                    &stat.n_pairs.to_string(),
                    &werr,
                    &cov,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, scenario: &Scenario, runs: &[RunOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    let id = scenario.id();
    let protocol = scenario.protocol.kind.to_string();
    for run in runs {
        let s = &run.summary;
        w.write_record([
            id.clone(),
            s.seed.to_string(),
            protocol.clone(),
            scenario.report_rate.to_string(),
            scenario.radio.tx_range.to_string(),
            scenario.speed().to_string(),
            s.total_energy_j.to_string(),
            s.tx_count.to_string(),
            s.rx_count.to_string(),
            s.drop_count.to_string(),
            s.collision_count.to_string(),
            s.mean_weighted_err.to_string(),
            s.coverage.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written for one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub seeds: Vec<u64>,
    pub samples_path: PathBuf,
    pub summary_path: PathBuf,
    pub runs: Vec<RunOutput>,
}

fn write_outputs(scenario: &Scenario, runs: Vec<RunOutput>, dir: &Path) -> Result<ScenarioResult> {
    fs::create_dir_all(dir)?;
    let samples_path = dir.join(SAMPLES_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_samples(File::create(&samples_path)?, scenario, &runs)?;
    write_summary(File::create(&summary_path)?, scenario, &runs)?;
    Ok(ScenarioResult {
        scenario_id: scenario.id(),
        seeds: runs.iter().map(|r| r.summary.seed).collect(),
        samples_path,
        summary_path,
        runs,
    })
}

/// Runs all replications of `scenario` and writes `samples.csv` and
/// `summary.csv` into `dir`.
pub fn run_scenario(scenario: &Scenario, dir: &Path, parallel: bool) -> Result<ScenarioResult> {
    let runs = run_replications(scenario, parallel)?;
    write_outputs(scenario, runs, dir)
}

/// Cross product of protocol, rate, topology, range and speed over a base scenario.
#[derive(Clone, Debug)]
pub struct MatrixSpec {
    pub base: Scenario,
    pub protocols: Vec<ProtocolConfig>,
    pub rates: Vec<f64>,
    pub topologies: Vec<Placement>,
    pub tx_ranges: Vec<f64>,
    pub speeds: Vec<f64>,
}

pub const PRESETS: [&str; 2] = ["static-grid", "mobility"];

impl MatrixSpec {
    /// Five protocols at four report rates on the static grid.
    pub fn static_grid() -> Self {
        MatrixSpec {
            base: Scenario::default(),
            protocols: standard_protocols(),
            rates: vec![5.0, 2.0, 1.0, 0.5],
            topologies: vec![Placement::Grid],
            tx_ranges: vec![100.0],
            speeds: vec![0.0],
        }
    }

    /// Random placement, zone readings, maximum speeds 2 and 10 m/s.
    pub fn mobility() -> Self {
        MatrixSpec {
            base: Scenario {
                data_model: DataModel::Zone,
                ..Scenario::default()
            },
            topologies: vec![Placement::Random],
            speeds: vec![2.0, 10.0],
            ..Self::static_grid()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "static-grid" => Ok(Self::static_grid()),
            "mobility" => Ok(Self::mobility()),
            other => Err(SimError::config(format!(
                "unknown preset '{other}', expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Parses a matrix file. Lists left out fall back to the preset (or
    /// `static-grid`); the `[base]` table takes scenario keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: MatrixFile = toml::from_str(text).map_err(|e| SimError::config(format!("matrix file: {e}")))?;
        let mut spec = Self::preset(file.preset.as_deref().unwrap_or("static-grid"))?;
        if let Some(base) = &file.base {
            spec.base = base.apply_unchecked(&spec.base)?;
        }
        if let Some(list) = file.protocols {
            spec.protocols = list
                .iter()
                .map(|p| {
                    Ok(ProtocolConfig {
                        kind: parse_protocol(p, 2, 0.5, None)?,
                        ttl_init: base_ttl(&file.base),
                    })
                })
                .collect::<Result<_>>()?;
        }
        if let Some(r) = file.rates {
            spec.rates = r;
        }
        if let Some(list) = file.topologies {
            spec.topologies = list
                .iter()
                .map(|t| match t.to_ascii_lowercase().as_str() {
                    "grid" => Ok(Placement::Grid),
                    "random" => Ok(Placement::Random),
                    other => Err(SimError::config(format!("unknown topology '{other}'"))),
                })
                .collect::<Result<_>>()?;
        }
        if let Some(r) = file.tx_ranges {
            spec.tx_ranges = r;
        }
        if let Some(s) = file.speeds {
            spec.speeds = s;
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Every cell, protocol-major. Cells are not validated here so that one
    /// bad cell does not sink the rest of a sweep.
    pub fn cells(&self) -> Result<Vec<Scenario>> {
        let mut cells = Vec::new();
        for proto in &self.protocols {
            for &rate in &self.rates {
                for &placement in &self.topologies {
                    for &range in &self.tx_ranges {
                        for &speed in &self.speeds {
                            let mut s = self.base.clone();
                            s.protocol = proto.clone();
                            s.report_rate = rate;
                            s.placement = placement;
                            s.radio.tx_range = range;
                            s.mobility = if speed == 0.0 {
                                MobilityMode::Static
                            } else {
                                MobilityMode::Waypoint { v_max: speed }
                            };
                            cells.push(s);
                        }
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(SimError::config("empty matrix"));
        }
        let mut ids = BTreeSet::new();
        for c in &cells {
            if !ids.insert(c.id()) {
                return Err(SimError::config(format!("duplicate matrix cell '{}'", c.id())));
            }
        }
        Ok(cells)
    }
}

fn base_ttl(base: &Option<ScenarioOverrides>) -> u32 {
    base.as_ref().and_then(|b| b.ttl).unwrap_or(DEFAULT_TTL)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    preset: Option<String>,
    protocols: Option<Vec<String>>,
    rates: Option<Vec<f64>>,
    topologies: Option<Vec<String>>,
    tx_ranges: Option<Vec<f64>>,
    speeds: Option<Vec<f64>>,
    base: Option<ScenarioOverrides>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: String,
    pub seeds: Vec<u64>,
    pub status: CellStatus,
    /// Relative to the matrix output directory.
    pub samples: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub cells: Vec<CellOutcome>,
}

impl MatrixReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status != CellStatus::Ok).count()
    }
}

/// Runs every cell into `out_dir/<cell id>/` and writes `manifest.csv`.
/// A failing cell is recorded in the manifest and does not stop the others.
pub fn run_matrix(spec: &MatrixSpec, out_dir: &Path, parallel: bool) -> Result<MatrixReport> {
    let cells = spec.cells()?;
    fs::create_dir_all(out_dir)?;
    let run_cell = |s: &Scenario| -> CellOutcome {
        let id = s.id();
        let rel = PathBuf::from(&id);
        let result = run_replications(s, false).and_then(|runs| write_outputs(s, runs, &out_dir.join(&rel)));
        match result {
            Ok(r) => CellOutcome {
                cell: id,
                seeds: r.seeds,
                status: CellStatus::Ok,
                samples: Some(rel.join(SAMPLES_FILE)),
                summary: Some(rel.join(SUMMARY_FILE)),
            },
            Err(e) => CellOutcome {
                cell: id,
                seeds: replication_seeds(s),
                status: CellStatus::Failed(e.to_string()),
                samples: None,
                summary: None,
            },
        }
    };
    let outcomes: Vec<CellOutcome> = if parallel {
        cells.par_iter().map(run_cell).collect()
    } else {
        cells.iter().map(run_cell).collect()
    };
    let manifest = out_dir.join(MANIFEST_FILE);
    write_manifest(File::create(&manifest)?, &outcomes)?;
    Ok(MatrixReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        cells: outcomes,
    })
}

/// One row per (cell, seed).
pub fn write_manifest<W: Write>(out: W, cells: &[CellOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER)?;
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
    for c in cells {
        let (status, error) = match &c.status {
            CellStatus::Ok => ("ok", String::new()),
            CellStatus::Failed(e) => ("failed", e.clone()),
        };
        for seed in &c.seeds {
            w.write_record([
                c.cell.clone(),
                seed.to_string(),
                status.to_string(),
                path(&c.samples),
                path(&c.summary),
                error.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
