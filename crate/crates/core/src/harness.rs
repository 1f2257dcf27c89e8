//! Parameter sweeps over models x UAV counts x seeds, aggregation, and the
//! per-panel comma-separated tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, RunConfig};
use crate::geometry::FieldSpec;
use crate::metrics::MetricsRecord;
use crate::mobility::{Intervals, KhopcaParams, ModelKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: io::Error },
    #[error("malformed config: {0}")]
    ParseConfig(#[from] toml::de::Error),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("output directory {path} is not writable: {source}")]
    Unwritable { path: PathBuf, source: io::Error },
    #[error("failed writing {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaSection {
    pub width: f64,
    pub height: f64,
    pub map_cell: f64,
    pub measurement_cell: f64,
}

impl Default for AreaSection {
    fn default() -> Self {
        let f = FieldSpec::default();
        Self {
            width: f.width,
            height: f.height,
            map_cell: f.pheromone_cell,
            measurement_cell: f.measure_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavSection {
    pub speed: f64,
    pub radio_range: f64,
    pub coverage_range: f64,
}

impl Default for UavSection {
    fn default() -> Self {
        Self {
            speed: 5.0,
            radio_range: 400.0,
            coverage_range: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsSection {
    pub models: Vec<ModelKind>,
    pub uav_counts: Vec<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub time_cap: u32,
    pub output_dir: PathBuf,
}

impl Default for ExperimentsSection {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            uav_counts: vec![4, 6, 8, 10, 15, 20, 30, 40, 50],
            runs: 30,
            base_seed: 0,
            time_cap: 50_000,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Experiment description; every key is optional and defaults to the
/// reference protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub area: AreaSection,
    pub uav: UavSection,
    pub intervals: Intervals,
    pub khopca: KhopcaParams,
    pub experiments: ExperimentsSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::ReadConfig {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn field(&self) -> FieldSpec {
        FieldSpec {
            width: self.area.width,
            height: self.area.height,
            measure_cell: self.area.measurement_cell,
            pheromone_cell: self.area.map_cell,
        }
    }

    /// The single-run configuration for one cell and seed.
    pub fn run_config(&self, model: ModelKind, n_uavs: usize, seed: u64) -> RunConfig {
        RunConfig {
            field: self.field(),
            radio_range: self.uav.radio_range,
            sensor_range: self.uav.coverage_range,
            speed: self.uav.speed,
            intervals: self.intervals,
            khopca: self.khopca,
            time_cap: self.experiments.time_cap,
            ..RunConfig::new(model, n_uavs, seed)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let e = &self.experiments;
        if e.runs == 0 {
            return Err(HarnessError::Invalid("runs must be at least 1".into()));
        }
        if e.uav_counts.is_empty() || e.uav_counts.contains(&0) {
            return Err(HarnessError::Invalid(
                "uav_counts must be non-empty and all >= 1".into(),
            ));
        }
        if e.models.is_empty() {
            return Err(HarnessError::Invalid("models must be non-empty".into()));
        }
        for (i, m) in e.models.iter().enumerate() {
            if e.models[..i].contains(m) {
                return Err(HarnessError::Invalid(format!("model {m} listed twice")));
            }
        }
        self.run_config(e.models[0], e.uav_counts[0], e.base_seed).validate()?;
        Ok(())
    }

    /// Sorted, de-duplicated UAV counts.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = self.experiments.uav_counts.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// One completed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub model: ModelKind,
    pub n_uavs: usize,
    pub run_index: usize,
    pub seed: u64,
    pub metrics: MetricsRecord,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

impl Stat {
    /// Order-independent: values are sorted before summation. Empty input
    /// yields NaN.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                samples: 0,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, samples: n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub n_uavs: usize,
    pub runs: usize,
    pub censored_count: usize,
    /// Time metrics use uncensored runs only.
    pub time_to_80: Stat,
    pub time_to_95: Stat,
    pub fairness_cv: Stat,
    pub connected_pct: Stat,
    pub root_conn_pct: Stat,
    pub avg_components: Stat,
    pub message_count: Stat,
    pub total_message_size: Stat,
}

impl AggregateRow {
    pub fn from_records(model: ModelKind, n_uavs: usize, records: &[MetricsRecord]) -> Self {
        let all = |f: fn(&MetricsRecord) -> f64| Stat::of(&records.iter().map(f).collect::<Vec<_>>());
        let uncensored = |f: fn(&MetricsRecord) -> Option<u32>| {
            Stat::of(
                &records
                    .iter()
                    .filter(|r| !r.censored)
                    .filter_map(|r| f(r).map(f64::from))
                    .collect::<Vec<_>>(),
            )
        };
        Self {
            model,
            n_uavs,
            runs: records.len(),
            censored_count: records.iter().filter(|r| r.censored).count(),
            time_to_80: uncensored(|r| r.time_to_80),
            time_to_95: uncensored(|r| r.time_to_95),
            fairness_cv: all(|r| r.fairness_cv),
            connected_pct: all(|r| r.connected_pct),
            root_conn_pct: all(|r| r.root_conn_pct),
            avg_components: all(|r| r.avg_components),
            message_count: all(|r| r.message_count as f64),
            total_message_size: all(|r| r.total_message_size as f64),
        }
    }

    fn metric_stats(&self) -> [(&'static str, &Stat); 8] {
        [
            ("time_to_80", &self.time_to_80),
            ("time_to_95", &self.time_to_95),
            ("fairness_cv", &self.fairness_cv),
            ("connected_pct", &self.connected_pct),
            ("root_conn_pct", &self.root_conn_pct),
            ("avg_components", &self.avg_components),
            ("message_count", &self.message_count),
            ("total_message_size", &self.total_message_size),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub models: Vec<ModelKind>,
    pub uav_counts: Vec<usize>,
    pub runs: Vec<RunRecord>,
    pub rows: Vec<AggregateRow>,
}

impl ExperimentResults {
    pub fn row(&self, model: ModelKind, n_uavs: usize) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.model == model && r.n_uavs == n_uavs)
    }
}

fn probe_writable(dir: &Path) -> Result<(), HarnessError> {
    let unwritable = |source| HarnessError::Unwritable {
        path: dir.to_owned(),
        source,
    };
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

/// Runs every (model, count, run) combination on up to `jobs` threads.
/// Run `i` of a cell uses seed `base_seed + i`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResults, HarnessError> {
    cfg.validate()?;
    probe_writable(&cfg.experiments.output_dir)?;
    let models = cfg.experiments.models.clone();
    let counts = cfg.counts();
    let tasks: Vec<(ModelKind, usize, usize)> = models
        .iter()
        .flat_map(|&m| {
            counts
                .iter()
                .flat_map(move |&n| (0..cfg.experiments.runs).map(move |i| (m, n, i)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let runs: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(model, n_uavs, run_index)| {
                let seed = cfg.experiments.base_seed.wrapping_add(run_index as u64);
                let metrics = engine::run(&cfg.run_config(model, n_uavs, seed))?;
                Ok(RunRecord {
                    model,
                    n_uavs,
                    run_index,
                    seed,
                    metrics,
                })
            })
            .collect::<Result<_, EngineError>>()
    })?;

    let rows = models
        .iter()
        .flat_map(|&m| counts.iter().map(move |&n| (m, n)))
        .map(|(m, n)| {
            let records: Vec<MetricsRecord> = runs
                .iter()
                .filter(|r| r.model == m && r.n_uavs == n)
                .map(|r| r.metrics)
                .collect();
            AggregateRow::from_records(m, n, &records)
        })
        .collect();

    Ok(ExperimentResults {
        models,
        uav_counts: counts,
        runs,
        rows,
    })
}

/// Extracts the plotted value from an aggregate row.
pub type PanelValue = fn(&AggregateRow) -> f64;

/// Figure panels: file stem and the aggregate it plots.
pub const PANELS: [(&str, PanelValue); 8] = [
    ("fig1a_time80", |r| r.time_to_80.mean),
    ("fig1b_time95", |r| r.time_to_95.mean),
    ("fig1c_fairness", |r| r.fairness_cv.mean),
    ("fig2a_connected_pct", |r| r.connected_pct.mean),
    ("fig2b_avg_components", |r| r.avg_components.mean),
    ("fig2c_root_conn", |r| r.root_conn_pct.mean),
    ("fig3a_msg_count", |r| r.message_count.mean),
    ("fig3b_msg_size", |r| r.total_message_size.mean),
];

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Renders one panel: header `n_uavs,<models...>`, one row per UAV count.
pub fn panel_csv(results: &ExperimentResults, value: PanelValue) -> String {
    let mut out = String::from("n_uavs");
    for m in &results.models {
        out.push(',');
        out.push_str(m.name());
    }
    out.push('\n');
    for &n in &results.uav_counts {
        out.push_str(&n.to_string());
        for &m in &results.models {
            out.push(',');
            out.push_str(&results.row(m, n).map(|r| fmt_value(value(r))).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

pub fn runs_csv(results: &ExperimentResults) -> String {
    let mut out = format!("model,n_uavs,run_index,seed,{}\n", MetricsRecord::CSV_HEADER);
    for r in &results.runs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model,
            r.n_uavs,
            r.run_index,
            r.seed,
            r.metrics.csv_fields()
        ));
    }
    out
}

pub fn aggregate_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("model,n_uavs,runs,censored");
    if let Some(first) = results.rows.first() {
        for (name, _) in first.metric_stats() {
            out.push_str(&format!(",{name}_mean,{name}_std,{name}_n"));
        }
    }
    out.push('\n');
    for row in &results.rows {
        out.push_str(&format!(
            "{},{},{},{}",
            row.model, row.n_uavs, row.runs, row.censored_count
        ));
        for (_, s) in row.metric_stats() {
            out.push_str(&format!(",{},{},{}", fmt_value(s.mean), fmt_value(s.std), s.samples));
        }
        out.push('\n');
    }
    out
}

/// Writes the eight panel files, `aggregate.csv` and `runs.csv`. Returns
/// the written paths.
pub fn emit_tables(results: &ExperimentResults, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if results.rows.is_empty() {
        return Err(HarnessError::Invalid("nothing to emit".into()));
    }
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Unwritable {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut files: Vec<(String, String)> = PANELS
        .iter()
        .map(|(stem, f)| (format!("{stem}.csv"), panel_csv(results, *f)))
        .collect();
    files.push(("aggregate.csv".into(), aggregate_csv(results)));
    files.push(("runs.csv".into(), runs_csv(results)));

    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(body.as_bytes()))
            .map_err(|source| HarnessError::Write {
                path: path.clone(),
                source,
            })?;
        written.push(path);
    }
    Ok(written)
}
