use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmcov::geometry::{angle_between, FieldSpec, Point, Pose};
use swarmcov::mobility::{
    choose_by_repulsion, conncov_anchors, conncov_decide, conncov_select_parent, connectivity_decide_traced, decide,
    khopca_decide_traced, khopca_update_weight, random_action, Action, ConnectivityCase, KhopcaBranch, KhopcaState,
    LocalView, ModelKind, ModelParams, ModelState, NeighborInfo, UavState,
};
use swarmcov::pheromone::PheromoneMap;
use swarmcov::radio::{PayloadKind, RadioGraph};

/// Root is node 0, the deciding UAV node 1.
struct Scene {
    field: FieldSpec,
    params: ModelParams,
    map: PheromoneMap,
    graph: RadioGraph,
    neighbors: Vec<NeighborInfo>,
}

impl Scene {
    /// `nodes` holds `(position, heading, speed)` for every node after the root.
    fn new(root: Point, nodes: &[(Point, f64, f64)]) -> Self {
        let field = FieldSpec::default();
        let params = ModelParams::default();
        let positions: Vec<Point> = std::iter::once(root).chain(nodes.iter().map(|n| n.0)).collect();
        let graph = RadioGraph::build(&positions, params.radio_range);
        let neighbors = graph
            .neighbors(1)
            .iter()
            .map(|&id| {
                let (heading, speed) = if id == 0 {
                    (0.0, 0.0)
                } else {
                    (nodes[id - 1].1, nodes[id - 1].2)
                };
                NeighborInfo {
                    id,
                    position: positions[id],
                    heading,
                    speed,
                    weight: None,
                }
            })
            .collect();
        Self {
            map: PheromoneMap::new(&field, 300.0),
            field,
            params,
            graph,
            neighbors,
        }
    }

    fn view(&self, heading: f64, now: u32) -> LocalView<'_> {
        let p = self.graph.position(1);
        LocalView {
            me: UavState {
                id: 1,
                pose: Pose::new(p.x, p.y, heading, 5.0),
            },
            now,
            neighbors: &self.neighbors,
            root_id: 0,
            root_position: self.graph.position(0),
            graph: &self.graph,
            map: &self.map,
            field: &self.field,
            params: &self.params,
        }
    }
}

const ROOT: Point = Point::new(1000.0, 500.0);

/// The generator's documented f64 mapping: top 53 bits of a u64 draw.
fn unit_from(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn random_action_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let a = random_action(&mut rng);
        counts[Action::ALL.iter().position(|&x| x == a).unwrap()] += 1;
    }
    let f = counts.map(|c| c as f64 / n as f64);
    assert!((f[0] - 0.25).abs() <= 0.02, "left {}", f[0]);
    assert!((f[1] - 0.50).abs() <= 0.02, "straight {}", f[1]);
    assert!((f[2] - 0.25).abs() <= 0.02, "right {}", f[2]);
}

#[test]
fn random_action_golden_trace() {
    let mut ours = ChaCha8Rng::seed_from_u64(2024);
    let mut reference = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let u = unit_from(&mut reference);
        let expected = if u < 0.5 {
            Action::Straight
        } else if u < 0.75 {
            Action::Left
        } else {
            Action::Right
        };
        assert_eq!(random_action(&mut ours), expected);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let head: String = (0..16)
        .map(|_| match random_action(&mut rng) {
            Action::Left => 'L',
            Action::Straight => 'S',
            Action::Right => 'R',
        })
        .collect();
    assert_eq!(head, GOLDEN_RANDOM);
}

const GOLDEN_RANDOM: &str = "SRLRLSSSSRRLRSLS";

#[test]
fn repulsion_tie_golden_trace() {
    let mut ours = ChaCha8Rng::seed_from_u64(99);
    let mut reference = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let idx = ((unit_from(&mut reference) * 3.0) as usize).min(2);
        assert_eq!(choose_by_repulsion([7.5; 3], 1e-6, &mut ours), Action::ALL[idx]);
    }
}

#[test]
fn repulsion_tie_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let a = choose_by_repulsion([0.0; 3], 1e-6, &mut rng);
        counts[Action::ALL.iter().position(|&x| x == a).unwrap()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn repulsion_avoids_the_fresh_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    let left = (0..n)
        .filter(|_| choose_by_repulsion([50.0, 0.0, 0.0], 1e-6, &mut rng) == Action::Left)
        .count();
    assert!((left as f64) < n as f64 / 100.0, "left chosen {left} times");
}

fn khopca_round(g: &RadioGraph, w: &[u8]) -> Vec<u8> {
    (0..w.len())
        .map(|i| {
            let nb: Vec<(usize, u8)> = g.neighbors(i).iter().map(|&j| (j, w[j])).collect();
            khopca_update_weight(
                KhopcaState {
                    weight: w[i],
                    k: 3,
                    threshold: 2,
                },
                i,
                &nb,
            )
            .weight
        })
        .collect()
}

/// Every stable assignment, by brute force over all 3^n weight vectors.
fn all_fixed_points(g: &RadioGraph) -> HashSet<Vec<u8>> {
    let n = g.len();
    let mut out = HashSet::new();
    for code in 0..3usize.pow(n as u32) {
        let w: Vec<u8> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as u8 + 1).collect();
        if khopca_round(g, &w) == w {
            out.insert(w);
        }
    }
    out
}

fn diameter(g: &RadioGraph) -> usize {
    (0..g.len())
        .flat_map(|s| g.hop_counts_from(s).unwrap().into_iter().flatten())
        .max()
        .unwrap_or(0) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn khopca_reaches_fixed_point(pts in prop::collection::vec((0.0..1500.0f64, 0.0..900.0f64), 1..=12),
                                  init in prop::collection::vec(1u8..=3, 12), from_min: bool) {
        let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        let g = RadioGraph::build(&pts, 400.0);
        let mut w: Vec<u8> = if from_min { vec![1; pts.len()] } else { init[..pts.len()].to_vec() };
        let budget = diameter(&g) + 3;
        for _ in 0..budget {
            w = khopca_round(&g, &w);
        }
        prop_assert_eq!(khopca_round(&g, &w), w.clone(), "not stable after {} rounds", budget);
        // stable states: every non-head sits one below its heaviest neighbor,
        // and no two heads are adjacent
        for i in 0..g.len() {
            let top = g.neighbors(i).iter().map(|&j| w[j]).max().unwrap_or(0);
            prop_assert!(w[i] == 3 || top == w[i] + 1);
            if w[i] == 3 {
                prop_assert!(g.neighbors(i).iter().all(|&j| w[j] != 3));
            }
        }
        if g.len() <= 9 {
            prop_assert!(all_fixed_points(&g).contains(&w));
        }
    }

    #[test]
    fn root_keep_holds_heading(r in 0.0..385.0f64, bearing in 0.0..TAU, h in 0.0..TAU, seed: u64) {
        let me = Point::new(ROOT.x + r * bearing.cos(), ROOT.y + r * bearing.sin());
        let scene = Scene::new(ROOT, &[(me, h, 5.0)]);
        let view = scene.view(h, 0);
        let (d, case) = connectivity_decide_traced(&view, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(case, ConnectivityCase::RootKept);
        prop_assert_eq!(d.new_heading, view.me.pose.heading);
        prop_assert_eq!(d.broadcasts.len(), 1);
    }

    #[test]
    fn path_keep_holds_heading(relay_r in 250.0..390.0f64, west: bool, tilt in -0.25..0.25f64, hop in 200.0..380.0f64,
                               jitter in -0.3..0.3f64, h in 0.0..TAU, seed: u64) {
        // root -> relay -> me, fanning outward east or west
        let b = tilt + if west { PI } else { 0.0 };
        let relay = Point::new(ROOT.x + relay_r * b.cos(), ROOT.y + relay_r * b.sin());
        let me = Point::new(relay.x + hop * (b + jitter).cos(), relay.y + hop * (b + jitter).sin());
        prop_assert!(ROOT.distance(me) > 400.0 && FieldSpec::default().contains(me));
        // The relay hovers; our 10 m move keeps the second hop intact.
        let scene = Scene::new(ROOT, &[(me, h, 5.0), (relay, 0.0, 0.0)]);
        let view = scene.view(h, 0);
        let (d, case) = connectivity_decide_traced(&view, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(case, ConnectivityCase::PathKept);
        prop_assert_eq!(d.new_heading, view.me.pose.heading);
    }

    #[test]
    fn conncov_choice_respects_margin(nodes in prop::collection::vec(
                                          (0.0..2000.0f64, 0.0..1000.0f64, 0.0..TAU, 0.0..6.0f64), 1..6),
                                      h in 0.0..TAU, seed: u64, dirty in 0u32..400) {
        let nodes: Vec<(Point, f64, f64)> = nodes.into_iter().map(|(x, y, hd, v)| (Point::new(x, y), hd, v)).collect();
        let mut scene = Scene::new(ROOT, &nodes);
        scene.map.deposit_disc(Point::new(900.0, 450.0), 150.0, dirty);
        let view = scene.view(h, 400);
        let parent = conncov_select_parent(&view);
        let d = conncov_decide(&view, parent, &mut ChaCha8Rng::seed_from_u64(seed));
        let Some(parent) = parent else { return Ok(()); };
        let limit = 0.9 * 400.0;
        // independent anchor predictions
        let predicted = |id: usize| {
            if id == 0 {
                ROOT
            } else {
                let (p, hd, v) = nodes[id - 1];
                Point::new(p.x + v * 30.0 * hd.cos(), p.y + v * 30.0 * hd.sin())
            }
        };
        let mut anchors: Vec<Point> = conncov_anchors(&view).into_iter().map(predicted).collect();
        anchors.push(predicted(parent));
        let me = view.me.pose;
        let lands = |heading: f64| Point::new(me.x + 150.0 * heading.cos(), me.y + 150.0 * heading.sin());
        let ok = |q: Point| scene.field.contains(q) && anchors.iter().any(|a| a.distance(q) <= limit + 1e-9);
        let any_feasible = (0..8).any(|k| ok(lands(k as f64 * FRAC_PI_4)));
        if any_feasible {
            prop_assert!(ok(lands(d.new_heading)), "chose {} from {:?}", d.new_heading, view.me.pose);
            prop_assert!((0..8).any(|k| angle_between(d.new_heading, k as f64 * FRAC_PI_4) < 1e-9));
        }
    }

    #[test]
    fn decisions_are_deterministic(nodes in prop::collection::vec(
                                       (0.0..2000.0f64, 0.0..1000.0f64, 0.0..TAU, 0.0..6.0f64), 1..6),
                                   h in 0.0..TAU, seed: u64, weight in 1u8..=3, stamp in 0u32..500) {
        let nodes: Vec<(Point, f64, f64)> = nodes.into_iter().map(|(x, y, hd, v)| (Point::new(x, y), hd, v)).collect();
        let mut scene = Scene::new(ROOT, &nodes);
        scene.map.deposit_disc(nodes[0].0, 60.0, stamp);
        for (i, n) in scene.neighbors.iter_mut().enumerate() {
            n.weight = Some((i % 3) as u8 + 1);
        }
        for model in ModelKind::ALL {
            let view = scene.view(h, 500);
            let mut state = ModelState::new(&scene.params);
            state.khopca.weight = weight;
            let mut other = state;
            let a = decide(model, &view, &mut state, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = decide(model, &view, &mut other, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
            prop_assert_eq!(state, other);
        }
    }
}

fn khopca_scene() -> Scene {
    let mut scene = Scene::new(
        ROOT,
        &[
            (Point::new(1200.0, 500.0), 0.0, 5.0),
            (Point::new(1100.0, 500.0), 0.0, 0.0),
            (Point::new(1200.0, 650.0), 0.0, 0.0),
        ],
    );
    for n in &mut scene.neighbors {
        n.weight = match n.id {
            2 => Some(1),
            3 => Some(2),
            _ => None,
        };
    }
    scene
}

#[test]
fn khopca_follow_probability() {
    let scene = khopca_scene();
    let view = scene.view(0.3, 0);
    let state = KhopcaState {
        weight: 2,
        k: 3,
        threshold: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let mut followed = 0;
    for _ in 0..n {
        let (d, branch) = khopca_decide_traced(&view, &state, &mut rng);
        match branch {
            KhopcaBranch::Follow(id) => {
                assert_eq!(id, 2);
                assert!(angle_between(d.new_heading, PI) < 1e-12);
                followed += 1;
            }
            KhopcaBranch::Pheromone => {
                let kinds: Vec<PayloadKind> = d.broadcasts.iter().map(|b| b.kind).collect();
                assert_eq!(kinds, vec![PayloadKind::Weight, PayloadKind::Map]);
            }
        }
    }
    assert!((followed as f64 / n as f64 - 0.2).abs() <= 0.02, "followed {followed}");
}

#[test]
fn heads_and_light_nodes_only_repel() {
    let scene = khopca_scene();
    let view = scene.view(0.3, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for weight in [1, 3] {
        let state = KhopcaState {
            weight,
            k: 3,
            threshold: 2,
        };
        for _ in 0..2000 {
            let (d, branch) = khopca_decide_traced(&view, &state, &mut rng);
            assert_eq!(branch, KhopcaBranch::Pheromone);
            let sizes: Vec<u64> = d.broadcasts.iter().map(|b| b.size_units).collect();
            assert_eq!(sizes, vec![1, 10_000]);
            let turn = angle_between(d.new_heading, 0.3);
            assert!(turn < 1e-12 || (turn - FRAC_PI_4).abs() < 1e-12);
        }
    }
}
