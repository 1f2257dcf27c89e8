//! Per-second sampling and the end-of-run performance record.

use thiserror::Error;

use crate::geometry::{FieldSpec, GridKind, Point};
use crate::pheromone::Seconds;
use crate::radio::{MessageLedger, NodeId, RadioGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("coefficient of variation is undefined for an unscanned grid")]
    UndefinedFairness,
}

/// Cumulative scan seconds per measurement cell.
#[derive(Debug, Clone)]
pub struct ScanGrid {
    field: FieldSpec,
    scanned_seconds: Vec<u32>,
    // second (plus one) at which the cell was last counted; 0 = never
    stamp: Vec<u32>,
    covered: usize,
}

impl ScanGrid {
    pub fn new(field: &FieldSpec) -> Self {
        let n = field.cell_count(GridKind::Measurement);
        Self {
            field: *field,
            scanned_seconds: vec![0; n],
            stamp: vec![0; n],
            covered: 0,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.scanned_seconds.len()
    }

    pub fn covered_cell_count(&self) -> usize {
        self.covered
    }

    pub fn scanned_seconds(&self) -> &[u32] {
        &self.scanned_seconds
    }

    /// Counts the disc around `center` as scanned during second `t`. Cells
    /// already counted for `t` are left alone, so overlapping footprints
    /// add one second, not one per UAV.
    pub fn mark_disc(&mut self, center: Point, radius: f64, t: Seconds) {
        let cols = self.field.cols(GridKind::Measurement);
        let tag = t + 1;
        let (counts, stamp, covered) = (&mut self.scanned_seconds, &mut self.stamp, &mut self.covered);
        self.field
            .for_each_disc_span(center, radius, GridKind::Measurement, |row, lo, hi| {
                let span = row * cols + lo..=row * cols + hi;
                for (count, seen) in counts[span.clone()].iter_mut().zip(&mut stamp[span]) {
                    if *seen != tag {
                        *seen = tag;
                        if *count == 0 {
                            *covered += 1;
                        }
                        *count += 1;
                    }
                }
            });
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.covered as f64 / self.cell_count() as f64
    }

    /// Population standard deviation over mean of the per-cell scan seconds,
    /// zeros included.
    pub fn fairness_cv(&self) -> Result<f64, MetricsError> {
        fairness_cv(&self.scanned_seconds)
    }
}

/// Coefficient of variation of `values`, computed from exact integer moments.
pub fn fairness_cv(values: &[u32]) -> Result<f64, MetricsError> {
    let n = values.len() as u128;
    let (sum, sum_sq) = values.iter().fold((0u128, 0u128), |(s, q), &v| {
        let v = v as u128;
        (s + v, q + v * v)
    });
    if sum == 0 {
        return Err(MetricsError::UndefinedFairness);
    }
    // var * n^2 = n * sum_sq - sum^2, exactly
    let scaled_var = n * sum_sq - sum * sum;
    let stdev = (scaled_var as f64).sqrt() / n as f64;
    let mean = sum as f64 / n as f64;
    Ok(stdev / mean)
}

/// Per-second connectivity samples plus coverage crossing times.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub component_counts: Vec<u32>,
    pub fully_connected: Vec<bool>,
    /// Seconds each mobile UAV (in node order, root skipped) had a path to the root.
    pub root_reach_seconds: Vec<u64>,
    pub time_to_first: Option<Seconds>,
    pub time_to_second: Option<Seconds>,
}

/// Coverage targets whose first crossing times are recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageTargets {
    pub first: f64,
    pub second: f64,
}

impl Default for CoverageTargets {
    fn default() -> Self {
        Self {
            first: 0.80,
            second: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sampler {
    pub grid: ScanGrid,
    pub samples: Samples,
    sensor_range: f64,
    targets: CoverageTargets,
}

impl Sampler {
    pub fn new(field: &FieldSpec, sensor_range: f64, targets: CoverageTargets) -> Self {
        Self {
            grid: ScanGrid::new(field),
            samples: Samples::default(),
            sensor_range,
            targets,
        }
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.grid.coverage_fraction()
    }

    pub fn reached_final_target(&self) -> bool {
        self.samples.time_to_second.is_some()
    }

    /// Records second `t`. Every graph node except `root_id` is a scanning
    /// UAV. Crossing times are stored as elapsed seconds (`t + 1`).
    pub fn tick_sample(&mut self, graph: &RadioGraph, root_id: NodeId, t: Seconds) {
        let uavs = || (0..graph.len()).filter(move |&id| id != root_id);
        if self.samples.root_reach_seconds.is_empty() {
            self.samples.root_reach_seconds = vec![0; graph.len().saturating_sub(1)];
        }
        for id in uavs() {
            self.grid.mark_disc(graph.position(id), self.sensor_range, t);
        }
        let components = graph.connected_components();
        self.samples.component_counts.push(components.count as u32);
        self.samples.fully_connected.push(components.count == 1);
        let hops = graph.hop_counts_from(root_id).expect("root is a graph node");
        for (slot, id) in uavs().enumerate() {
            if hops[id].is_some() {
                self.samples.root_reach_seconds[slot] += 1;
            }
        }
        let coverage = self.grid.coverage_fraction();
        if coverage >= self.targets.first && self.samples.time_to_first.is_none() {
            self.samples.time_to_first = Some(t + 1);
        }
        if coverage >= self.targets.second && self.samples.time_to_second.is_none() {
            self.samples.time_to_second = Some(t + 1);
        }
    }

    pub fn finalize(&self, ledger: &MessageLedger, stop_time: Seconds) -> MetricsRecord {
        finalize(&self.samples, &self.grid, ledger, stop_time)
    }
}

/// Outcome of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub time_to_80: Option<Seconds>,
    pub time_to_95: Option<Seconds>,
    pub fairness_cv: f64,
    pub connected_pct: f64,
    pub root_conn_pct: f64,
    pub avg_components: f64,
    pub message_count: u64,
    pub total_message_size: u64,
    /// The time cap was hit before the final coverage target.
    pub censored: bool,
    pub stop_time: Seconds,
}

pub fn finalize(samples: &Samples, grid: &ScanGrid, ledger: &MessageLedger, stop_time: Seconds) -> MetricsRecord {
    let span = stop_time.max(1) as f64;
    let connected = samples.fully_connected.iter().filter(|&&c| c).count() as f64;
    let avg_components = if samples.component_counts.is_empty() {
        f64::NAN
    } else {
        samples.component_counts.iter().map(|&c| c as f64).sum::<f64>() / samples.component_counts.len() as f64
    };
    let root_conn_pct = if samples.root_reach_seconds.is_empty() {
        f64::NAN
    } else {
        samples.root_reach_seconds.iter().map(|&s| s as f64 / span).sum::<f64>()
            / samples.root_reach_seconds.len() as f64
    };
    MetricsRecord {
        time_to_80: samples.time_to_first,
        time_to_95: samples.time_to_second,
        fairness_cv: grid.fairness_cv().unwrap_or(f64::NAN),
        connected_pct: connected / span,
        root_conn_pct,
        avg_components,
        message_count: ledger.message_count,
        total_message_size: ledger.total_size,
        censored: samples.time_to_second.is_none(),
        stop_time,
    }
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "time_to_80,time_to_95,fairness_cv,connected_pct,root_conn_pct,\
avg_components,message_count,total_message_size,censored,stop_time";

    /// Comma-separated fields in [`Self::CSV_HEADER`] order; missing times
    /// are empty fields.
    pub fn csv_fields(&self) -> String {
        let opt = |v: Option<Seconds>| v.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            opt(self.time_to_80),
            opt(self.time_to_95),
            self.fairness_cv,
            self.connected_pct,
            self.root_conn_pct,
            self.avg_components,
            self.message_count,
            self.total_message_size,
            self.censored,
            self.stop_time
        )
    }
}
