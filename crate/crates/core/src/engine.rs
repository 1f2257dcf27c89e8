//! Deterministic one-second tick loop.
//!
//! Per tick: (1) UAVs whose decision interval divides `t` decide, in id
//! order, from what they have heard so far; (2) the resulting broadcasts are
//! delivered to current radio neighbors and booked in the ledger; (3) every
//! UAV flies one second under the boundary rule; (4) the radio graph is
//! rebuilt; (5) pheromone is deposited and metrics are sampled; (6) `t += 1`.
//!
//! Node 0 of the radio graph is the stationary root; mobile UAV `i` is node
//! `i + 1`.

use std::f64::consts::TAU;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{advance_within, random_inward_heading, FieldError, FieldSpec, Point, Pose};
use crate::metrics::{CoverageTargets, MetricsRecord, Sampler};
use crate::mobility::{
    decide, khopca_update_weight, Broadcast, Intervals, KhopcaParams, LocalView, ModelKind, ModelParams, ModelState,
    NeighborInfo, UavState,
};
use crate::pheromone::{PheromoneMap, Seconds};
use crate::radio::{MessageLedger, NodeId, PayloadKind, RadioGraph};

pub const ROOT_ID: NodeId = 0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid field: {0}")]
    Field(#[from] FieldError),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("trace output failed: {0}")]
    Trace(#[from] io::Error),
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Mobile UAVs; the root is extra.
    pub n_uavs: usize,
    pub seed: u64,
    pub field: FieldSpec,
    pub radio_range: f64,
    pub sensor_range: f64,
    pub speed: f64,
    pub intervals: Intervals,
    pub khopca: KhopcaParams,
    pub pheromone_horizon: f64,
    /// UAVs start uniformly inside this disc around the root.
    pub deploy_radius: f64,
    pub time_cap: Seconds,
    pub targets: CoverageTargets,
}

impl RunConfig {
    pub fn new(model: ModelKind, n_uavs: usize, seed: u64) -> Self {
        Self {
            model,
            n_uavs,
            seed,
            field: FieldSpec::default(),
            radio_range: 400.0,
            sensor_range: 20.0,
            speed: 5.0,
            intervals: Intervals::default(),
            khopca: KhopcaParams::default(),
            pheromone_horizon: PheromoneMap::DEFAULT_HORIZON,
            deploy_radius: 200.0,
            time_cap: 50_000,
            targets: CoverageTargets::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.field.validate()?;
        let bad = |msg: &str| Err(EngineError::InvalidConfig(msg.to_owned()));
        if self.n_uavs == 0 {
            return bad("n_uavs must be at least 1");
        }
        if !(self.radio_range > 0.0 && self.sensor_range > 0.0 && self.speed > 0.0) {
            return bad("radio range, sensor range and speed must be positive");
        }
        if !(self.pheromone_horizon > 0.0 && self.deploy_radius >= 0.0) {
            return bad("pheromone horizon must be positive and deploy radius non-negative");
        }
        if ModelKind::ALL.iter().any(|&m| self.intervals.of(m) == 0) {
            return bad("decision intervals must be at least 1 s");
        }
        if self.khopca.k < 2 || self.khopca.threshold < 1 || self.khopca.threshold > self.khopca.k {
            return bad("khopca needs k >= 2 and 1 <= threshold <= k");
        }
        if !(0.0..=1.0).contains(&self.khopca.follow_probability) {
            return bad("khopca follow probability must lie in [0, 1]");
        }
        if self.time_cap == 0 {
            return bad("time cap must be positive");
        }
        if !(0.0 < self.targets.first && self.targets.first <= self.targets.second && self.targets.second <= 1.0) {
            return bad("coverage targets must satisfy 0 < first <= second <= 1");
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            radio_range: self.radio_range,
            intervals: self.intervals,
            khopca: self.khopca,
            ..ModelParams::default()
        }
    }

    /// Run key with the model and UAV count folded into the seed.
    pub fn stream_key(&self) -> u64 {
        splitmix(splitmix(splitmix(self.seed) ^ self.model.tag()) ^ self.n_uavs as u64)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Last kinematic report heard from a node.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Heard {
    position: Point,
    heading: f64,
    speed: f64,
    weight: Option<u8>,
}

#[derive(Debug, Clone)]
struct Uav {
    state: UavState,
    rng: ChaCha8Rng,
    model: ModelState,
    map: Option<PheromoneMap>,
    heard: Vec<Option<Heard>>,
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: RunConfig,
    params: ModelParams,
    root: Point,
    uavs: Vec<Uav>,
    graph: RadioGraph,
    sampler: Sampler,
    ledger: MessageLedger,
    blank_map: PheromoneMap,
    t: Seconds,
}

impl World {
    pub fn new(cfg: &RunConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let key = cfg.stream_key();
        let mut master = ChaCha8Rng::seed_from_u64(key);
        let field = cfg.field;
        let root = field.center();
        let params = cfg.model_params();
        let n_nodes = cfg.n_uavs + 1;
        let uavs: Vec<Uav> = (0..cfg.n_uavs)
            .map(|i| {
                let r = cfg.deploy_radius * master.gen::<f64>().sqrt();
                let theta = master.gen::<f64>() * TAU;
                let p = field.clamp(Point::new(root.x + r * theta.cos(), root.y + r * theta.sin()));
                let heading = master.gen::<f64>() * TAU;
                let id = i + 1;
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                rng.set_stream(id as u64);
                Uav {
                    state: UavState {
                        id,
                        pose: Pose::new(p.x, p.y, heading, cfg.speed),
                    },
                    rng,
                    model: ModelState::new(&params),
                    map: cfg
                        .model
                        .uses_pheromone()
                        .then(|| PheromoneMap::new(&field, cfg.pheromone_horizon)),
                    heard: vec![None; n_nodes],
                }
            })
            .collect();
        let positions: Vec<Point> = std::iter::once(root)
            .chain(uavs.iter().map(|u| u.state.pose.position()))
            .collect();
        Ok(Self {
            graph: RadioGraph::build(&positions, cfg.radio_range),
            sampler: Sampler::new(&field, cfg.sensor_range, cfg.targets),
            ledger: MessageLedger::new(),
            blank_map: PheromoneMap::new(&field, cfg.pheromone_horizon),
            cfg: cfg.clone(),
            params,
            root,
            uavs,
            t: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn time(&self) -> Seconds {
        self.t
    }

    pub fn root_position(&self) -> Point {
        self.root
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> + '_ {
        self.uavs.iter().map(|u| &u.state.pose)
    }

    pub fn graph(&self) -> &RadioGraph {
        &self.graph
    }

    pub fn ledger(&self) -> &MessageLedger {
        &self.ledger
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.sampler.coverage_fraction()
    }

    pub fn pheromone_map(&self, uav_index: usize) -> Option<&PheromoneMap> {
        self.uavs[uav_index].map.as_ref()
    }

    pub fn khopca_weight(&self, uav_index: usize) -> u8 {
        self.uavs[uav_index].model.khopca.weight
    }

    /// Teleports a UAV; intended for scenario setup. Rebuilds the graph.
    pub fn place_uav(&mut self, uav_index: usize, pose: Pose) {
        self.uavs[uav_index].state.pose = pose;
        self.rebuild_graph();
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.cfg.time_cap || self.sampler.reached_final_target()
    }

    fn rebuild_graph(&mut self) {
        let positions: Vec<Point> = std::iter::once(self.root)
            .chain(self.uavs.iter().map(|u| u.state.pose.position()))
            .collect();
        self.graph = RadioGraph::build(&positions, self.cfg.radio_range);
    }

    fn neighbor_infos(&self, uav: &Uav) -> Vec<NeighborInfo> {
        self.graph
            .neighbors(uav.state.id)
            .iter()
            .map(|&id| {
                if id == ROOT_ID {
                    return NeighborInfo {
                        id,
                        position: self.root,
                        heading: 0.0,
                        speed: 0.0,
                        weight: None,
                    };
                }
                match uav.heard[id] {
                    Some(h) => NeighborInfo {
                        id,
                        position: h.position,
                        heading: h.heading,
                        speed: h.speed,
                        weight: h.weight,
                    },
                    None => NeighborInfo {
                        id,
                        position: self.graph.position(id),
                        heading: 0.0,
                        speed: 0.0,
                        weight: None,
                    },
                }
            })
            .collect()
    }

    /// Advances the world by one second.
    pub fn step(&mut self) {
        let model = self.cfg.model;
        let now = self.t;
        let mut outbox: Vec<(usize, Vec<Broadcast>)> = Vec::new();

        if now.is_multiple_of(self.cfg.intervals.of(model)) {
            for i in 0..self.uavs.len() {
                let neighbors = self.neighbor_infos(&self.uavs[i]);
                let uav = &mut self.uavs[i];
                if model == ModelKind::Khopca {
                    let weights: Vec<(NodeId, u8)> =
                        neighbors.iter().filter_map(|n| n.weight.map(|w| (n.id, w))).collect();
                    uav.model.khopca = khopca_update_weight(uav.model.khopca, uav.state.id, &weights);
                }
                let view = LocalView {
                    me: uav.state,
                    now,
                    neighbors: &neighbors,
                    root_id: ROOT_ID,
                    root_position: self.root,
                    graph: &self.graph,
                    map: uav.map.as_ref().unwrap_or(&self.blank_map),
                    field: &self.cfg.field,
                    params: &self.params,
                };
                let decision = decide(model, &view, &mut uav.model, &mut uav.rng);
                uav.state.pose.heading = decision.new_heading;
                if !decision.broadcasts.is_empty() {
                    outbox.push((i, decision.broadcasts));
                }
            }
        }

        self.deliver(&outbox);

        let field = self.cfg.field;
        for uav in &mut self.uavs {
            let moved = advance_within(&uav.state.pose, 1.0, &field);
            let pose = &mut uav.state.pose;
            pose.x = moved.position.x;
            pose.y = moved.position.y;
            if moved.hit_boundary {
                pose.heading = random_inward_heading(pose, &field, &mut uav.rng);
            }
            assert!(field.contains(pose.position()), "UAV {} left the field", uav.state.id);
        }

        self.rebuild_graph();

        for uav in &mut self.uavs {
            if let Some(map) = uav.map.as_mut() {
                map.deposit_disc(uav.state.pose.position(), self.cfg.sensor_range, now);
            }
        }
        self.sampler.tick_sample(&self.graph, ROOT_ID, now);
        self.t += 1;
    }

    fn deliver(&mut self, outbox: &[(usize, Vec<Broadcast>)]) {
        let mut merged: Vec<Option<PheromoneMap>> = vec![None; self.uavs.len()];
        for (sender, broadcasts) in outbox {
            let from = self.uavs[*sender].state;
            let weight = self.uavs[*sender].model.khopca.weight;
            for b in broadcasts {
                self.ledger.record_broadcast(b.size_units);
                for &rx in self.graph.neighbors(from.id) {
                    if rx == ROOT_ID {
                        continue;
                    }
                    let r = rx - 1;
                    match b.kind {
                        PayloadKind::Beacon | PayloadKind::Weight => {
                            let previous = self.uavs[r].heard[from.id].and_then(|h| h.weight);
                            self.uavs[r].heard[from.id] = Some(Heard {
                                position: from.pose.position(),
                                heading: from.pose.heading,
                                speed: from.pose.speed,
                                weight: if b.kind == PayloadKind::Weight {
                                    Some(weight)
                                } else {
                                    previous
                                },
                            });
                        }
                        PayloadKind::Map => {
                            // Merges read the pre-delivery maps of the senders.
                            let Some(theirs) = self.uavs[*sender].map.as_ref() else {
                                continue;
                            };
                            let slot = &mut merged[r];
                            let target =
                                slot.get_or_insert_with(|| self.uavs[r].map.clone().expect("receiver keeps a map"));
                            target.merge_from(theirs).expect("maps share dimensions");
                        }
                    }
                }
            }
        }
        for (uav, map) in self.uavs.iter_mut().zip(merged) {
            if map.is_some() {
                uav.map = map;
            }
        }
    }

    /// One trace line: `t,x1,y1,h1,...,components`.
    pub fn write_trace_line<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "{}", self.t)?;
        for p in self.poses() {
            write!(out, ",{},{},{}", p.x, p.y, p.heading)?;
        }
        writeln!(out, ",{}", self.graph.connected_components().count)
    }

    pub fn finalize(&self) -> MetricsRecord {
        self.sampler.finalize(&self.ledger, self.t)
    }
}

/// Runs until the final coverage target or the time cap.
pub fn run(cfg: &RunConfig) -> Result<MetricsRecord, EngineError> {
    run_inner(cfg, None::<&mut io::Sink>)
}

/// Like [`run`], writing one trace line per simulated second.
pub fn run_traced<W: Write>(cfg: &RunConfig, trace: &mut W) -> Result<MetricsRecord, EngineError> {
    writeln!(trace, "{}", trace_header(cfg.n_uavs))?;
    run_inner(cfg, Some(trace))
}

pub fn trace_header(n_uavs: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=n_uavs {
        h.push_str(&format!(",x{i},y{i},heading{i}"));
    }
    h.push_str(",components");
    h
}

fn run_inner<W: Write>(cfg: &RunConfig, mut trace: Option<&mut W>) -> Result<MetricsRecord, EngineError> {
    let mut world = World::new(cfg)?;
    while !world.is_finished() {
        world.step();
        if let Some(out) = trace.as_deref_mut() {
            world.write_trace_line(out)?;
        }
    }
    Ok(world.finalize())
}
