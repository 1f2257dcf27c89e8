//! The five mobility models behind one decision interface.
//!
//! At each decision instant a UAV is handed a [`LocalView`] (its own pose,
//! what it has heard from its radio neighbors, its pheromone map and a
//! snapshot of the radio graph) and returns a [`Decision`]: the heading to
//! fly until the next instant plus the broadcasts to send.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_between, normalize_heading, predict_position, FieldSpec, Point, Pose};
use crate::pheromone::{ConeShape, PheromoneMap, Seconds};
use crate::radio::{NodeId, PayloadKind, RadioGraph};

pub use crate::pheromone::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Random,
    Dpr,
    Connectivity,
    Khopca,
    Conncov,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown mobility model `{0}` (expected one of random, dpr, connectivity, khopca, conncov)")]
pub struct UnknownModel(pub String);

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Random,
        ModelKind::Dpr,
        ModelKind::Connectivity,
        ModelKind::Khopca,
        ModelKind::Conncov,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            ModelKind::Random => "random",
            ModelKind::Dpr => "dpr",
            ModelKind::Connectivity => "connectivity",
            ModelKind::Khopca => "khopca",
            ModelKind::Conncov => "conncov",
        }
    }

    /// Whether the model keeps and shares a pheromone map.
    pub const fn uses_pheromone(self) -> bool {
        matches!(self, ModelKind::Dpr | ModelKind::Khopca | ModelKind::Conncov)
    }

    pub const fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownModel(s.to_owned()))
    }
}

/// Decision intervals in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intervals {
    pub random: u32,
    pub dpr: u32,
    pub connectivity: u32,
    pub khopca: u32,
    pub conncov: u32,
}

impl Default for Intervals {
    fn default() -> Self {
        Self {
            random: 1,
            dpr: 10,
            connectivity: 2,
            khopca: 30,
            conncov: 30,
        }
    }
}

impl Intervals {
    pub fn of(&self, model: ModelKind) -> u32 {
        match model {
            ModelKind::Random => self.random,
            ModelKind::Dpr => self.dpr,
            ModelKind::Connectivity => self.connectivity,
            ModelKind::Khopca => self.khopca,
            ModelKind::Conncov => self.conncov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KhopcaParams {
    /// Cluster radius in hops; also the MAX weight.
    pub k: u8,
    pub threshold: u8,
    pub follow_probability: f64,
}

impl Default for KhopcaParams {
    fn default() -> Self {
        Self {
            k: 3,
            threshold: 2,
            follow_probability: 0.2,
        }
    }
}

/// Tunables shared by every model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub radio_range: f64,
    pub cone: ConeShape,
    /// Added to the strongest smell so the repel weights stay positive.
    pub repel_epsilon: f64,
    pub intervals: Intervals,
    pub khopca: KhopcaParams,
    /// Predicted parent distance must stay within this share of the range.
    pub conncov_margin: f64,
    /// Sampling step along a candidate path when scoring pheromone.
    pub conncov_path_step: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            radio_range: 400.0,
            cone: ConeShape::default(),
            repel_epsilon: 1e-6,
            intervals: Intervals::default(),
            khopca: KhopcaParams::default(),
            conncov_margin: 0.9,
            conncov_path_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub id: NodeId,
    pub pose: Pose,
}

/// What a UAV knows about one radio neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborInfo {
    pub id: NodeId,
    pub position: Point,
    pub heading: f64,
    pub speed: f64,
    /// Last announced clustering weight, if any.
    pub weight: Option<u8>,
}

impl NeighborInfo {
    pub fn predict(&self, dt: f64) -> Point {
        predict_position(
            &Pose::new(self.position.x, self.position.y, self.heading, self.speed),
            dt,
        )
    }
}

pub struct LocalView<'a> {
    pub me: UavState,
    pub now: Seconds,
    /// Exactly the current radio neighbors, sorted by id.
    pub neighbors: &'a [NeighborInfo],
    pub root_id: NodeId,
    pub root_position: Point,
    pub graph: &'a RadioGraph,
    pub map: &'a PheromoneMap,
    pub field: &'a FieldSpec,
    pub params: &'a ModelParams,
}

impl LocalView<'_> {
    fn neighbor(&self, id: NodeId) -> Option<&NeighborInfo> {
        self.neighbors.iter().find(|n| n.id == id)
    }

    fn position(&self) -> Point {
        self.me.pose.position()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Broadcast {
    pub kind: PayloadKind,
    pub size_units: u64,
}

impl From<PayloadKind> for Broadcast {
    fn from(kind: PayloadKind) -> Self {
        Self {
            kind,
            size_units: kind.size_units(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub new_heading: f64,
    pub broadcasts: Vec<Broadcast>,
}

impl Decision {
    fn new(heading: f64, kinds: &[PayloadKind]) -> Self {
        Self {
            new_heading: normalize_heading(heading),
            broadcasts: kinds.iter().map(|&k| Broadcast::from(k)).collect(),
        }
    }
}

pub const KHOPCA_MIN: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KhopcaState {
    pub weight: u8,
    /// MAX weight.
    pub k: u8,
    pub threshold: u8,
}

impl KhopcaState {
    pub fn new(params: &KhopcaParams) -> Self {
        Self {
            weight: KHOPCA_MIN,
            k: params.k,
            threshold: params.threshold,
        }
    }

    pub fn is_head(&self) -> bool {
        self.weight == self.k
    }
}

/// Per-UAV state mutated only at the UAV's decision instants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelState {
    pub khopca: KhopcaState,
    pub parent: Option<NodeId>,
}

impl ModelState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            khopca: KhopcaState::new(&params.khopca),
            parent: None,
        }
    }
}

/// Runs the decision rule of `model`.
pub fn decide<R: Rng + ?Sized>(
    model: ModelKind,
    view: &LocalView<'_>,
    state: &mut ModelState,
    rng: &mut R,
) -> Decision {
    match model {
        ModelKind::Random => random_decide(view, rng),
        ModelKind::Dpr => dpr_decide(view, rng),
        ModelKind::Connectivity => connectivity_decide(view, rng),
        ModelKind::Khopca => khopca_decide(view, &state.khopca, rng),
        ModelKind::Conncov => {
            state.parent = conncov_select_parent(view);
            conncov_decide(view, state.parent, rng)
        }
    }
}

/// Straight with probability 1/2, left or right with 1/4 each.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    if u < 0.5 {
        Action::Straight
    } else if u < 0.75 {
        Action::Left
    } else {
        Action::Right
    }
}

pub fn random_decide<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> Decision {
    let action = random_action(rng);
    Decision::new(action.apply(view.me.pose.heading, view.params.cone.turn), &[])
}

/// Picks an action with probability proportional to `max_smell + eps - smell`.
pub fn repel_action<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> Action {
    let smells = Action::ALL.map(|a| view.map.sector_smell(&view.me.pose, a, &view.params.cone, view.now));
    choose_by_repulsion(smells, view.params.repel_epsilon, rng)
}

/// Weighted draw over `[Left, Straight, Right]` repelled by `smells`.
pub fn choose_by_repulsion<R: Rng + ?Sized>(smells: [f64; 3], epsilon: f64, rng: &mut R) -> Action {
    let top = smells.iter().copied().fold(f64::MIN, f64::max) + epsilon;
    let weights = smells.map(|s| top - s);
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (action, w) in Action::ALL.into_iter().zip(weights) {
        if target < w {
            return action;
        }
        target -= w;
    }
    Action::Right
}

pub fn dpr_decide<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> Decision {
    let action = repel_action(view, rng);
    Decision::new(
        action.apply(view.me.pose.heading, view.params.cone.turn),
        &[PayloadKind::Map],
    )
}

/// Uniform point in the root's radio disc, restricted to the field.
fn random_point_near_root<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> Point {
    let range = view.params.radio_range;
    let root = view.root_position;
    loop {
        let r = range * rng.gen::<f64>().sqrt();
        let theta = rng.gen::<f64>() * TAU;
        let p = Point::new(root.x + r * theta.cos(), root.y + r * theta.sin());
        if view.field.contains(p) {
            return p;
        }
    }
}

fn head_toward(from: Point, to: Point, fallback: f64) -> f64 {
    if from == to {
        fallback
    } else {
        from.bearing_to(to)
    }
}

/// Which branch of the connectivity cascade fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectivityCase {
    RootKept,
    RootRetarget,
    PathKept,
    PathSteer,
    NeighborHold,
    Isolated,
}

pub fn connectivity_decide<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> Decision {
    connectivity_decide_traced(view, rng).0
}

pub fn connectivity_decide_traced<R: Rng + ?Sized>(view: &LocalView<'_>, rng: &mut R) -> (Decision, ConnectivityCase) {
    let horizon = view.params.intervals.connectivity as f64;
    let range = view.params.radio_range;
    let pose = view.me.pose;
    let here = pose.position();
    let me_next = predict_position(&pose, horizon);
    let keep = pose.heading;
    let beacon = [PayloadKind::Beacon];

    let (heading, case) = if view.graph.has_edge(view.me.id, view.root_id) {
        let root_next = view
            .neighbor(view.root_id)
            .map_or(view.root_position, |r| r.predict(horizon));
        if me_next.distance(root_next) <= range {
            (keep, ConnectivityCase::RootKept)
        } else {
            let target = random_point_near_root(view, rng);
            (head_toward(here, target, keep), ConnectivityCase::RootRetarget)
        }
    } else if view.graph.has_path(view.me.id, view.root_id).unwrap_or(false) {
        let mut predicted = view.graph.positions().to_vec();
        predicted[view.me.id] = me_next;
        for n in view.neighbors {
            predicted[n.id] = n.predict(horizon);
        }
        let future = RadioGraph::build(&predicted, range);
        if future.has_path(view.me.id, view.root_id).unwrap_or(false) {
            (keep, ConnectivityCase::PathKept)
        } else {
            let hops = view
                .graph
                .hop_counts_from(view.root_id)
                .expect("root id is a graph node");
            let mine = hops[view.me.id];
            let relay = view
                .neighbors
                .iter()
                .filter(|n| matches!((hops[n.id], mine), (Some(h), Some(m)) if h < m))
                .min_by(|a, b| {
                    here.distance(a.position)
                        .total_cmp(&here.distance(b.position))
                        .then(a.id.cmp(&b.id))
                });
            let heading = relay.map_or(keep, |n| head_toward(here, n.predict(horizon), keep));
            (heading, ConnectivityCase::PathSteer)
        }
    } else if let Some(nearest) = view.neighbors.iter().min_by(|a, b| {
        here.distance(a.position)
            .total_cmp(&here.distance(b.position))
            .then(a.id.cmp(&b.id))
    }) {
        let target = nearest.predict(horizon);
        let heading = if me_next.distance(target) <= range {
            keep
        } else {
            head_toward(here, target, keep)
        };
        (heading, ConnectivityCase::NeighborHold)
    } else {
        (keep, ConnectivityCase::Isolated)
    };
    (Decision::new(heading, &beacon), case)
}

/// One synchronous round of the k-hop clustering weight rules.
///
/// `neighbors` lists `(id, weight)` for every neighbor whose weight is known.
pub fn khopca_update_weight(state: KhopcaState, own_id: NodeId, neighbors: &[(NodeId, u8)]) -> KhopcaState {
    let max = state.k;
    let w = state.weight;
    // An empty neighborhood reads as a maximum below MIN.
    let top = neighbors.iter().map(|&(_, nw)| nw).max().unwrap_or(0);
    let smallest_head = neighbors.iter().filter(|&&(_, nw)| nw == max).map(|&(id, _)| id).min();
    let weight = if top > w {
        top - 1
    } else if w == KHOPCA_MIN {
        max
    } else if let (true, Some(rival)) = (w == max, smallest_head) {
        if own_id < rival {
            max
        } else {
            max - 1
        }
    } else if w > KHOPCA_MIN && w < max {
        w - 1
    } else {
        w
    };
    KhopcaState { weight, ..state }
}

/// Which branch a clustering decision took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KhopcaBranch {
    Pheromone,
    Follow(NodeId),
}

pub fn khopca_decide<R: Rng + ?Sized>(view: &LocalView<'_>, state: &KhopcaState, rng: &mut R) -> Decision {
    khopca_decide_traced(view, state, rng).0
}

pub fn khopca_decide_traced<R: Rng + ?Sized>(
    view: &LocalView<'_>,
    state: &KhopcaState,
    rng: &mut R,
) -> (Decision, KhopcaBranch) {
    let pheromone_only = state.is_head() || state.weight < state.threshold;
    if !pheromone_only && rng.gen::<f64>() < view.params.khopca.follow_probability {
        let lowest = view
            .neighbors
            .iter()
            .filter_map(|n| n.weight.map(|w| (w, n.id, n.position)))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, id, position)) = lowest {
            let heading = head_toward(view.position(), position, view.me.pose.heading);
            return (Decision::new(heading, &[PayloadKind::Weight]), KhopcaBranch::Follow(id));
        }
    }
    let action = repel_action(view, rng);
    (
        Decision::new(
            action.apply(view.me.pose.heading, view.params.cone.turn),
            &[PayloadKind::Weight, PayloadKind::Map],
        ),
        KhopcaBranch::Pheromone,
    )
}

/// Neighbor with the fewest hops to the root (ties to the lowest id), or
/// `None` when no neighbor reaches the root.
pub fn conncov_select_parent(view: &LocalView<'_>) -> Option<NodeId> {
    let hops = view.graph.hop_counts_from(view.root_id).ok()?;
    view.graph
        .neighbors(view.me.id)
        .iter()
        .filter_map(|&n| hops[n].map(|h| (h, n)))
        .min()
        .map(|(_, n)| n)
}

/// Eight compass headings, counter-clockwise from +x.
pub fn candidate_headings() -> [f64; 8] {
    std::array::from_fn(|k| k as f64 * FRAC_PI_4)
}

/// Neighbors a UAV may lean on for connectivity: those preceding it in the
/// tree order `(hops to root, id)`. The parent is always among them, and
/// the order is acyclic, so every anchor chain ends at the root.
pub fn conncov_anchors(view: &LocalView<'_>) -> Vec<NodeId> {
    let Ok(hops) = view.graph.hop_counts_from(view.root_id) else {
        return Vec::new();
    };
    let Some(mine) = hops[view.me.id] else {
        return Vec::new();
    };
    view.graph
        .neighbors(view.me.id)
        .iter()
        .copied()
        .filter(|&n| hops[n].is_some_and(|h| (h, n) < (mine, view.me.id)))
        .collect()
}

/// Whether flying `heading` for `horizon` seconds ends inside the field and
/// within the safety margin of at least one of `anchors_next`.
pub fn conncov_feasible(view: &LocalView<'_>, heading: f64, anchors_next: &[Point], horizon: f64) -> bool {
    let pose = Pose {
        heading,
        ..view.me.pose
    };
    let me_next = predict_position(&pose, horizon);
    let limit = view.params.conncov_margin * view.params.radio_range;
    view.field.contains(me_next) && anchors_next.iter().any(|a| me_next.distance(*a) <= limit)
}

/// Total concentration along the straight path, sampled every path step.
pub fn path_concentration(view: &LocalView<'_>, heading: f64, horizon: f64) -> f64 {
    let step = view.params.conncov_path_step;
    let length = view.me.pose.speed * horizon;
    let samples = (length / step).floor() as usize;
    let (dx, dy) = (heading.cos(), heading.sin());
    let here = view.position();
    (1..=samples)
        .map(|i| {
            let d = i as f64 * step;
            view.map
                .concentration_at_point(Point::new(here.x + d * dx, here.y + d * dy), view.now)
        })
        .sum()
}

fn parent_prediction(view: &LocalView<'_>, parent: NodeId, horizon: f64) -> Point {
    if parent == view.root_id {
        return view.root_position;
    }
    view.neighbor(parent)
        .map_or_else(|| view.graph.position(parent), |n| n.predict(horizon))
}

pub fn conncov_decide<R: Rng + ?Sized>(view: &LocalView<'_>, parent: Option<NodeId>, rng: &mut R) -> Decision {
    let kinds = [PayloadKind::Beacon, PayloadKind::Map];
    let current = view.me.pose.heading;
    let Some(parent) = parent else {
        let action = repel_action(view, rng);
        return Decision::new(action.apply(current, view.params.cone.turn), &kinds);
    };
    let horizon = view.params.intervals.conncov as f64;
    let parent_next = parent_prediction(view, parent, horizon);
    let mut anchors_next = vec![parent_next];
    anchors_next.extend(
        conncov_anchors(view)
            .into_iter()
            .filter(|&a| a != parent)
            .map(|a| parent_prediction(view, a, horizon)),
    );

    // (score, turn size, counter-clockwise?) ordered lexicographically
    let mut best: Option<(f64, f64, bool, f64)> = None;
    for heading in candidate_headings() {
        if !conncov_feasible(view, heading, &anchors_next, horizon) {
            continue;
        }
        let score = path_concentration(view, heading, horizon);
        let turn = angle_between(heading, current);
        let ccw = turn > 1e-9 && normalize_heading(heading - current) < std::f64::consts::PI;
        let better = match best {
            None => true,
            Some((s, t, c, _)) => {
                score < s || (score == s && (turn < t - 1e-9 || ((turn - t).abs() <= 1e-9 && c && !ccw)))
            }
        };
        if better {
            best = Some((score, turn, ccw, heading));
        }
    }
    let heading = match best {
        Some((.., h)) => h,
        None => head_toward(view.position(), parent_next, current),
    };
    Decision::new(heading, &kinds)
}
