//! Optimal-stopping characterization of the reflected state process.
//!
//! With the running reward frozen at the reflected solution (`f` evaluated
//! along `(Y, Z, V)`, `g` along `Y`), the reflected state process is the
//! value of the stopping problem
//!
//! ```text
//! J(tau) = E[ sum_{t <= t_k < tau} (f dt_k + g dA_k)
//!             + L_tau 1{tau < T} + xi 1{tau = T} | F_t ]
//! ```
//!
//! maximized over adapted stopping rules (minimized for an upper obstacle).
//! Three independent routes are provided: the Snell recursion
//! ([`snell_envelope`]), exhaustive enumeration of adapted policies
//! ([`enumerate_stopping_times`], the brute-force oracle), and the hitting
//! policies `nu^p` of the first entry into `{Y <= L + 1/p}`
//! ([`optimal_nu_p`]) whose value is within `1/p` of the optimum.

use crate::error::{Error, Result};
use crate::model::{BarrierSide, ProblemData};
use crate::reflected::ReflectedSolution;
use crate::scenario::{NodeId, NodeValues, ScenarioTree};

/// Default cap on exhaustive policy enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// An adapted stop/continue rule: one decision per node; stopping at the
/// horizon is forced.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingTime {
    /// `true` = stop at this node. Terminal-layer entries are ignored
    /// (always stop).
    decisions: Vec<Option<bool>>,
}

impl StoppingTime {
    pub fn new(tree: &ScenarioTree) -> Self {
        StoppingTime { decisions: vec![None; tree.node_count()] }
    }

    /// Rule defined on every node by a predicate.
    pub fn from_rule(tree: &ScenarioTree, mut stop: impl FnMut(NodeId) -> bool) -> Self {
        StoppingTime { decisions: (0..tree.node_count()).map(|id| Some(stop(id))).collect() }
    }

    /// Always-stop-at-the-horizon rule.
    pub fn horizon(tree: &ScenarioTree) -> Self {
        StoppingTime::from_rule(tree, |_| false)
    }

    pub fn set(&mut self, id: NodeId, stop: bool) {
        self.decisions[id] = Some(stop);
    }

    /// Whether the rule stops at `id` (terminal nodes always stop).
    pub fn stops_at(&self, tree: &ScenarioTree, id: NodeId) -> Result<bool> {
        let n = tree.node(id);
        if n.layer == tree.num_layers() - 1 {
            return Ok(true);
        }
        self.decisions[id]
            .ok_or(Error::InvalidStoppingTime { node: id, layer: n.layer })
    }
}

// ---------------------------------------------------------------------------
// Frozen running rewards
// ---------------------------------------------------------------------------

/// Per-node running reward `f(t_k, Y, Z, V) dt_k + g(t_k, Y) dA_k`, frozen at
/// a reflected solution.
pub fn frozen_rewards(
    tree: &ScenarioTree,
    data: &ProblemData,
    sol: &ReflectedSolution,
) -> Result<NodeValues> {
    let q = tree.marks().weights();
    let mut rewards = NodeValues::new(tree);
    for k in 0..tree.num_layers() - 1 {
        let t = tree.grid().instant(k);
        let dt = tree.grid().dt(k);
        for &uid in tree.layer(k) {
            let y = sol.base.y.require(tree, uid)?;
            let z = sol.base.z.require(tree, uid)?;
            let v = sol.base.v.require(tree, uid)?;
            let f = data.driver.f.evaluate(t, y, z, v, &q);
            let g = data.driver.g.evaluate(t, y);
            rewards.set(uid, f * dt + g * tree.node(uid).a_increment);
        }
    }
    Ok(rewards)
}

// ---------------------------------------------------------------------------
// Snell recursion
// ---------------------------------------------------------------------------

/// Backward Snell recursion with rewards frozen at the reflected solution:
/// `S_T = xi`, `S_{t_k} = max(L, E[S_next] + reward)` (min against an upper
/// obstacle). An independent code path that must reproduce the reflected `Y`.
pub fn snell_envelope(
    tree: &ScenarioTree,
    data: &ProblemData,
    sol: &ReflectedSolution,
) -> Result<NodeValues> {
    let barrier = data.barrier_of(sol.side)?;
    let rewards = frozen_rewards(tree, data, sol)?;
    let last = tree.num_layers() - 1;
    let mut envelope = NodeValues::new(tree);
    for &id in tree.layer(last) {
        envelope.set(id, data.terminal.require(tree, id)?);
    }
    for k in (0..last).rev() {
        for &uid in tree.layer(k) {
            let cont = crate::scenario::node_expectation(tree, &envelope, uid)?
                + rewards.require(tree, uid)?;
            let level = barrier.values.require(tree, uid)?;
            let s = match sol.side {
                BarrierSide::Lower => cont.max(level),
                BarrierSide::Upper => cont.min(level),
            };
            envelope.set(uid, s);
        }
    }
    Ok(envelope)
}

// ---------------------------------------------------------------------------
// Policy evaluation
// ---------------------------------------------------------------------------

/// Exact conditional value `J(tau)` of a stopping rule at every node of the
/// start layer.
///
/// The rule must be defined on every node reachable from the start layer
/// while continuing.
pub fn evaluate_stopping(
    tree: &ScenarioTree,
    data: &ProblemData,
    sol: &ReflectedSolution,
    tau: &StoppingTime,
    start_layer: usize,
) -> Result<NodeValues> {
    let rewards = frozen_rewards(tree, data, sol)?;
    let barrier = data.barrier_of(sol.side)?;
    let mut out = NodeValues::new(tree);
    for &uid in tree.layer(start_layer) {
        let j = evaluate_from(tree, data, &rewards, &barrier.values, tau, uid)?;
        out.set(uid, j);
    }
    Ok(out)
}

fn evaluate_from(
    tree: &ScenarioTree,
    data: &ProblemData,
    rewards: &NodeValues,
    barrier: &NodeValues,
    tau: &StoppingTime,
    id: NodeId,
) -> Result<f64> {
    let n = tree.node(id);
    let last = tree.num_layers() - 1;
    if n.layer == last {
        return data.terminal.require(tree, id);
    }
    if tau.stops_at(tree, id)? {
        return barrier.require(tree, id);
    }
    let mut acc = rewards.require(tree, id)?;
    for b in &n.branches {
        acc += b.prob * evaluate_from(tree, data, rewards, barrier, tau, b.child)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

/// Number of distinct adapted stopping rules on the subtree rooted at `id`
/// (`1` at the horizon; `1 + prod over children` before it).
fn policy_count(tree: &ScenarioTree, id: NodeId) -> u128 {
    let n = tree.node(id);
    if n.layer == tree.num_layers() - 1 {
        return 1;
    }
    let mut product: u128 = 1;
    for b in &n.branches {
        product = product.saturating_mul(policy_count(tree, b.child));
    }
    product.saturating_add(1)
}

/// Number of joint adapted policies from a whole layer.
pub fn count_stopping_times(tree: &ScenarioTree, start_layer: usize) -> u128 {
    tree.layer(start_layer)
        .iter()
        .map(|&id| policy_count(tree, id))
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// Enumerate every adapted stopping rule from `start_layer` (joint across the
/// layer's nodes), with stopping forced at the horizon. Nodes unreachable
/// under a rule are canonically marked as stopping so each stopping *time* is
/// produced exactly once.
pub fn enumerate_stopping_times(
    tree: &ScenarioTree,
    start_layer: usize,
    cap: u128,
) -> Result<Vec<StoppingTime>> {
    let count = count_stopping_times(tree, start_layer);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let mut policies = vec![StoppingTime::horizon_marked(tree)];
    for &root in tree.layer(start_layer) {
        let subtree = enumerate_subtree(tree, root);
        let mut combined = Vec::with_capacity(policies.len() * subtree.len());
        for base in &policies {
            for assignment in &subtree {
                let mut merged = base.clone();
                for &(id, stop) in assignment {
                    merged.set(id, stop);
                }
                combined.push(merged);
            }
        }
        policies = combined;
    }
    Ok(policies)
}

impl StoppingTime {
    /// Every decision set to "stop" (the canonical filler for unreachable
    /// nodes); terminal nodes stop anyway.
    fn horizon_marked(tree: &ScenarioTree) -> Self {
        StoppingTime::from_rule(tree, |_| true)
    }
}

/// All assignments on the subtree of `id`, as sparse (node, decision) lists.
fn enumerate_subtree(tree: &ScenarioTree, id: NodeId) -> Vec<Vec<(NodeId, bool)>> {
    let n = tree.node(id);
    if n.layer == tree.num_layers() - 1 {
        return vec![vec![(id, true)]];
    }
    let mut result = vec![vec![(id, true)]];
    // continue at `id`: combine child assignments
    let mut combos: Vec<Vec<(NodeId, bool)>> = vec![vec![(id, false)]];
    for b in &n.branches {
        let child_assignments = enumerate_subtree(tree, b.child);
        let mut next = Vec::with_capacity(combos.len() * child_assignments.len());
        for c in &combos {
            for ca in &child_assignments {
                let mut merged = c.clone();
                merged.extend_from_slice(ca);
                next.push(merged);
            }
        }
        combos = next;
    }
    result.extend(combos);
    result
}

// ---------------------------------------------------------------------------
// Hitting policies
// ---------------------------------------------------------------------------

/// First-hitting rule of `{Y <= L + 1/p}` (resp. `{Y >= U - 1/p}`): stop at
/// the first node, from the start layer on, whose state sits within `1/p` of
/// the obstacle. Adapted by construction.
pub fn optimal_nu_p(
    tree: &ScenarioTree,
    data: &ProblemData,
    sol: &ReflectedSolution,
    p: f64,
) -> Result<StoppingTime> {
    assert!(p >= 1.0, "p must be >= 1");
    let barrier = data.barrier_of(sol.side)?;
    let side = sol.side;
    let mut rule = StoppingTime::new(tree);
    for id in tree.all_nodes() {
        let y = sol.base.y.get(id).unwrap_or(f64::NAN);
        let l = barrier.values.get(id).unwrap_or(f64::NAN);
        let hit = match side {
            BarrierSide::Lower => y <= l + 1.0 / p,
            BarrierSide::Upper => y >= l - 1.0 / p,
        };
        rule.set(id, hit);
    }
    Ok(rule)
}

// ---------------------------------------------------------------------------
// Representation check
// ---------------------------------------------------------------------------

/// How to certify the stopping representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RepresentationMethod {
    /// Brute force over all adapted policies (within the cap).
    Enumerate { cap: u128 },
    /// The hitting policy `nu^p`.
    NuP { p: f64 },
}

/// Verdict for one start-layer node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStoppingReport {
    pub node: NodeId,
    /// Reflected state value at the node.
    pub y: f64,
    /// Best (max for lower, min for upper) policy value found.
    pub best_j: f64,
    /// `|best_j - y|` for enumeration; `y - j(nu^p)` for the hitting policy.
    pub gap: f64,
    pub policies_evaluated: usize,
}

/// Outcome of [`verify_representation`].
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingValueReport {
    pub start_layer: usize,
    pub method_label: String,
    pub entries: Vec<NodeStoppingReport>,
    /// `(policy index, start node, J)` triples for the enumeration method.
    pub policy_values: Vec<(usize, NodeId, f64)>,
    /// Worst gap across the layer.
    pub max_gap: f64,
    /// For enumeration: no policy beats the reflected value beyond 1e-10.
    pub dominance_violations: usize,
}

/// Certify that the reflected state process is the stopping value at every
/// node of `start_layer`.
pub fn verify_representation(
    tree: &ScenarioTree,
    data: &ProblemData,
    sol: &ReflectedSolution,
    method: RepresentationMethod,
    start_layer: usize,
) -> Result<StoppingValueReport> {
    const TOL: f64 = 1e-10;
    match method {
        RepresentationMethod::Enumerate { cap } => {
            let policies = enumerate_stopping_times(tree, start_layer, cap)?;
            let mut best: Vec<Option<f64>> = vec![None; tree.node_count()];
            let mut policy_values = Vec::new();
            let mut dominance_violations = 0;
            for (pi, tau) in policies.iter().enumerate() {
                let j = evaluate_stopping(tree, data, sol, tau, start_layer)?;
                for &uid in tree.layer(start_layer) {
                    let val = j.get(uid).expect("evaluated");
                    policy_values.push((pi, uid, val));
                    let y = sol.base.y.get(uid).expect("solved");
                    let beats = match sol.side {
                        BarrierSide::Lower => val > y + TOL,
                        BarrierSide::Upper => val < y - TOL,
                    };
                    if beats {
                        dominance_violations += 1;
                    }
                    let entry = &mut best[uid];
                    *entry = Some(match (*entry, sol.side) {
                        (None, _) => val,
                        (Some(b), BarrierSide::Lower) => b.max(val),
                        (Some(b), BarrierSide::Upper) => b.min(val),
                    });
                }
            }
            let mut entries = Vec::new();
            let mut max_gap = 0.0_f64;
            for &uid in tree.layer(start_layer) {
                let y = sol.base.y.get(uid).expect("solved");
                let best_j = best[uid].expect("at least one policy");
                let gap = (best_j - y).abs();
                max_gap = max_gap.max(gap);
                entries.push(NodeStoppingReport {
                    node: uid,
                    y,
                    best_j,
                    gap,
                    policies_evaluated: policies.len(),
                });
            }
            Ok(StoppingValueReport {
                start_layer,
                method_label: "enumerate".into(),
                entries,
                policy_values,
                max_gap,
                dominance_violations,
            })
        }
        RepresentationMethod::NuP { p } => {
            let tau = optimal_nu_p(tree, data, sol, p)?;
            let j = evaluate_stopping(tree, data, sol, &tau, start_layer)?;
            let mut entries = Vec::new();
            let mut max_gap = f64::NEG_INFINITY;
            let mut dominance_violations = 0;
            for &uid in tree.layer(start_layer) {
                let y = sol.base.y.get(uid).expect("solved");
                let val = j.get(uid).expect("evaluated");
                // signed shortfall: in [-1e-10, 1/p] when the theory holds
                let gap = match sol.side {
                    BarrierSide::Lower => y - val,
                    BarrierSide::Upper => val - y,
                };
                if gap < -TOL {
                    dominance_violations += 1;
                }
                max_gap = max_gap.max(gap);
                entries.push(NodeStoppingReport { node: uid, y, best_j: val, gap, policies_evaluated: 1 });
            }
            Ok(StoppingValueReport {
                start_layer,
                method_label: format!("nu_p(p={p})"),
                entries,
                policy_values: Vec::new(),
                max_gap,
                dominance_violations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Barrier, DriverForm, DriverSpec, GForm, DEFAULT_SAMPLE_BOX};
    use crate::reflected::solve_reflected_direct;
    use crate::scenario::{build_tree, ASchedule, TreeConfig};

    fn path_tree(steps: usize) -> ScenarioTree {
        build_tree(&TreeConfig {
            steps,
            horizon: 1.0,
            instants: None,
            brownian_dim: 0,
            marks: vec![],
            extra_factor: false,
            a_schedule: ASchedule::zero(steps),
            max_nodes: None,
        })
        .unwrap()
    }

    fn binary_tree(steps: usize) -> ScenarioTree {
        build_tree(&TreeConfig {
            steps,
            horizon: 1.0,
            instants: None,
            brownian_dim: 1,
            marks: vec![],
            extra_factor: false,
            a_schedule: ASchedule::zero(steps),
            max_nodes: None,
        })
        .unwrap()
    }

    fn zero_spec(tree: &ScenarioTree) -> DriverSpec {
        DriverSpec::tight(
            DriverForm::zero(),
            GForm::zero(),
            tree.brownian_dim(),
            &tree.marks().weights(),
            DEFAULT_SAMPLE_BOX,
        )
        .unwrap()
    }

    fn receding_barrier_problem(tree: &ScenarioTree) -> ProblemData {
        let lvals = NodeValues::from_fn(tree, |id| match tree.node(id).layer {
            0 => 1.0,
            1 => 0.5,
            _ => 0.0,
        });
        ProblemData::new(
            tree,
            NodeValues::on_layer(tree, tree.num_layers() - 1, |_| 0.0),
            zero_spec(tree),
        )
        .with_barrier(Barrier::lower(lvals))
    }

    #[test]
    fn snell_recursion_reproduces_running_max_of_barrier() {
        let tree = path_tree(2);
        let data = receding_barrier_problem(&tree);
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let s = snell_envelope(&tree, &data, &sol).unwrap();
        let path = tree.path_to(tree.leaves()[0]);
        assert!((s.get(path[0]).unwrap() - 1.0).abs() <= 1e-15);
        assert!((s.get(path[1]).unwrap() - 0.5).abs() <= 1e-15);
        assert!((s.get(path[2]).unwrap() - 0.0).abs() <= 1e-15);
    }

    #[test]
    fn snell_matches_reflected_state_on_random_tree() {
        let tree = binary_tree(4);
        let terminal = NodeValues::on_layer(&tree, 4, |id| tree.brownian_total(id, 0).abs());
        let lvals = NodeValues::from_fn(&tree, |id| {
            let k = tree.node(id).layer;
            if k == 4 { -0.2 } else { 0.7 - 0.25 * k as f64 }
        });
        let spec = DriverSpec::tight(
            DriverForm::Linear { a: -0.5, b: 0.2, c: 0.0, h0: 0.1, h1: -0.1 },
            GForm::zero(),
            1,
            &tree.marks().weights(),
            DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        let data =
            ProblemData::new(&tree, terminal, spec).with_barrier(Barrier::lower(lvals));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let s = snell_envelope(&tree, &data, &sol).unwrap();
        for id in tree.all_nodes() {
            assert!((s.get(id).unwrap() - sol.base.y.get(id).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn far_barrier_means_never_stop_early() {
        let tree = binary_tree(2);
        let terminal = NodeValues::on_layer(&tree, 2, |id| tree.brownian_total(id, 0) + 2.0);
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(NodeValues::constant(&tree, -1e9)));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let s = snell_envelope(&tree, &data, &sol).unwrap();
        for id in tree.all_nodes() {
            assert!((s.get(id).unwrap() - sol.base.y.get(id).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn policy_values_match_hand_computation() {
        let tree = binary_tree(1);
        let terminal = NodeValues::on_layer(&tree, 1, |id| tree.brownian_total(id, 0) + 1.0);
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(NodeValues::constant(&tree, -3.0)));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        // stop at the horizon: J = E[xi] = 1
        let tau_t = StoppingTime::horizon(&tree);
        let j = evaluate_stopping(&tree, &data, &sol, &tau_t, 0).unwrap();
        assert!((j.get(0).unwrap() - 1.0).abs() <= 1e-15);
        // stop now: J = L_0 = -3
        let tau_0 = StoppingTime::from_rule(&tree, |_| true);
        let j = evaluate_stopping(&tree, &data, &sol, &tau_0, 0).unwrap();
        assert!((j.get(0).unwrap() + 3.0).abs() <= 1e-15);
    }

    #[test]
    fn undefined_decision_is_invalid() {
        let tree = binary_tree(2);
        let terminal = NodeValues::on_layer(&tree, 2, |_| 0.0);
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(NodeValues::constant(&tree, -1.0)));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let mut tau = StoppingTime::new(&tree);
        tau.set(0, false); // children undecided
        let err = evaluate_stopping(&tree, &data, &sol, &tau, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidStoppingTime { .. }));
    }

    #[test]
    fn enumeration_counts_match_closed_forms() {
        // deterministic two-step path: stop at 0, at t1, or at T
        let tree = path_tree(2);
        assert_eq!(count_stopping_times(&tree, 0), 3);
        assert_eq!(enumerate_stopping_times(&tree, 0, 10).unwrap().len(), 3);
        // one-step binary tree: stop at 0 or at T
        let tree = binary_tree(1);
        assert_eq!(count_stopping_times(&tree, 0), 2);
        // two-step binary tree: 1 + 2 * 2 = 5
        let tree = binary_tree(2);
        assert_eq!(count_stopping_times(&tree, 0), 5);
        assert_eq!(enumerate_stopping_times(&tree, 0, 10).unwrap().len(), 5);
        // independent recursive formula on a three-step binary tree:
        // N(leaf) = 1, then 1 + prod of children upward
        let tree = binary_tree(3);
        let by_formula = {
            fn n(tree: &ScenarioTree, id: NodeId) -> u128 {
                let node = tree.node(id);
                if node.branches.is_empty() {
                    1
                } else {
                    1 + node.branches.iter().map(|b| n(tree, b.child)).product::<u128>()
                }
            }
            n(&tree, 0)
        };
        assert_eq!(count_stopping_times(&tree, 0), by_formula);
        assert_eq!(by_formula, 26);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let tree = binary_tree(3);
        let err = enumerate_stopping_times(&tree, 0, 10).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { count: 26, cap: 10 }));
    }

    #[test]
    fn hitting_policy_edge_cases() {
        let tree = path_tree(2);
        let data = receding_barrier_problem(&tree);
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        // Y = L everywhere: stop immediately for every p
        let tau = optimal_nu_p(&tree, &data, &sol, 100.0).unwrap();
        assert!(tau.stops_at(&tree, 0).unwrap());

        // Y far above L + 1/p: never stop early
        let tree = binary_tree(2);
        let terminal = NodeValues::on_layer(&tree, 2, |id| tree.brownian_total(id, 0) + 4.0);
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(NodeValues::constant(&tree, -10.0)));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let tau = optimal_nu_p(&tree, &data, &sol, 2.0).unwrap();
        for k in 0..2 {
            for &id in tree.layer(k) {
                assert!(!tau.stops_at(&tree, id).unwrap());
            }
        }
    }

    #[test]
    fn enumeration_certifies_the_representation() {
        let tree = binary_tree(3);
        let terminal = NodeValues::on_layer(&tree, 3, |id| tree.brownian_total(id, 0).abs());
        let lvals = NodeValues::from_fn(&tree, |id| {
            let k = tree.node(id).layer;
            if k == 3 { -0.3 } else { 0.6 - 0.3 * k as f64 }
        });
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(lvals));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let report = verify_representation(
            &tree,
            &data,
            &sol,
            RepresentationMethod::Enumerate { cap: DEFAULT_ENUMERATION_CAP },
            0,
        )
        .unwrap();
        assert!(report.max_gap <= 1e-10, "gap {}", report.max_gap);
        assert_eq!(report.dominance_violations, 0);
    }

    #[test]
    fn hitting_policy_value_is_within_one_over_p() {
        let tree = binary_tree(3);
        let terminal = NodeValues::on_layer(&tree, 3, |id| tree.brownian_total(id, 0).abs());
        let lvals = NodeValues::from_fn(&tree, |id| {
            let k = tree.node(id).layer;
            if k == 3 { -0.3 } else { 0.55 - 0.3 * k as f64 }
        });
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::lower(lvals));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        for p in [1.0, 4.0, 64.0] {
            let report = verify_representation(
                &tree,
                &data,
                &sol,
                RepresentationMethod::NuP { p },
                0,
            )
            .unwrap();
            assert!(report.max_gap <= 1.0 / p + 1e-10, "p = {p}: gap {}", report.max_gap);
            assert_eq!(report.dominance_violations, 0);
        }
    }

    #[test]
    fn upper_barrier_representation_is_a_minimum() {
        let tree = binary_tree(2);
        let terminal = NodeValues::on_layer(&tree, 2, |id| tree.brownian_total(id, 0));
        let uvals = NodeValues::from_fn(&tree, |id| {
            let k = tree.node(id).layer;
            if k == 2 { 2.0 } else { 0.4 - 0.2 * k as f64 }
        });
        let data = ProblemData::new(&tree, terminal, zero_spec(&tree))
            .with_barrier(Barrier::upper(uvals));
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Upper).unwrap();
        let report = verify_representation(
            &tree,
            &data,
            &sol,
            RepresentationMethod::Enumerate { cap: 100 },
            0,
        )
        .unwrap();
        assert!(report.max_gap <= 1e-10, "gap {}", report.max_gap);
        assert_eq!(report.dominance_violations, 0);
        // every policy value sits above the reflected state for an upper obstacle
        let y0 = sol.base.y.get(0).unwrap();
        for (_, node, j) in &report.policy_values {
            if *node == 0 {
                assert!(*j >= y0 - 1e-10);
            }
        }
        // and the Snell recursion (min flavour) agrees
        let s = snell_envelope(&tree, &data, &sol).unwrap();
        for id in tree.all_nodes() {
            assert!((s.get(id).unwrap() - sol.base.y.get(id).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn deterministic_barrier_optimum_is_stop_at_zero() {
        let tree = path_tree(2);
        let data = receding_barrier_problem(&tree);
        let sol = solve_reflected_direct(&tree, &data, BarrierSide::Lower).unwrap();
        let report = verify_representation(
            &tree,
            &data,
            &sol,
            RepresentationMethod::Enumerate { cap: 100 },
            0,
        )
        .unwrap();
        assert!((report.entries[0].best_j - 1.0).abs() <= 1e-15);
        assert!(report.max_gap <= 1e-15);
    }
}
