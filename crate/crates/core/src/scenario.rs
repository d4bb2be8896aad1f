//! Finite filtered probability trees carrying all driving noises.
//!
//! A [`ScenarioTree`] realizes, on a finite grid `t_0 = 0 < ... < t_K = T`,
//! a filtration that supports
//!
//! * a Brownian surrogate `B` (Rademacher increments `±sqrt(dt)` per dimension),
//! * a compensated jump family `Ñ_j` per mark (Bernoulli arrival with
//!   probability `q_j * dt`, compensated to mean zero),
//! * an optional extra orthogonal factor `m` (Rademacher `±1`) that makes the
//!   filtration strictly richer than the one generated by `B` and `Ñ`,
//! * a nondecreasing adapted clock `A` with predictable step increments
//!   (the increment over `(t_k, t_{k+1}]` is decided at `t_k`).
//!
//! Branches at every node are the independent product of the three factor
//! families, so first and second moments of the increments are exact:
//! `E[dB^i dB^j] = dt 1{i=j}`, `E[dÑ_j] = 0`, and all families are pairwise
//! uncorrelated under the node's branch law.
//!
//! On such a tree, conditional expectation is a finite weighted sum and every
//! conditionally centered random variable splits exactly into a `dB`-part, a
//! `dÑ`-part and a residual orthogonal to both: the discrete form of the
//! general-filtration martingale decomposition. With the extra factor off the
//! residual vanishes on the linear span of the increments; products of
//! increments (e.g. `dB * dÑ`) are genuinely orthogonal and are exactly what
//! the extra martingale term absorbs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier: index into the tree's node table.
pub type NodeId = usize;

/// Default cap on the number of nodes a single tree may allocate.
pub const DEFAULT_MAX_NODES: u128 = 2_000_000;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One jump mark: a label, its numeric value, and the intensity weight
/// `q_j = Q({e_j}) * eta` per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSpec {
    pub label: String,
    pub value: f64,
    pub weight: f64,
}

/// Schedule for the nondecreasing clock `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ASchedule {
    /// `dA_k` is a fixed nonnegative number per step, the same on every node.
    Deterministic { increments: Vec<f64> },
    /// `dA_k = base + per_arrival * (cumulative mark arrivals on the path)`.
    /// Decided at the node, hence predictable.
    MarkDriven { base: f64, per_arrival: f64 },
}

impl ASchedule {
    /// Constant zero clock (plain BSDE without the `dA` term).
    pub fn zero(steps: usize) -> Self {
        ASchedule::Deterministic { increments: vec![0.0; steps] }
    }

    /// Uniform deterministic clock reaching `total` at the horizon.
    pub fn uniform(steps: usize, total: f64) -> Self {
        ASchedule::Deterministic { increments: vec![total / steps as f64; steps] }
    }
}

/// Everything needed to build a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Number of time steps `K >= 1`.
    pub steps: usize,
    /// Horizon `T`; ignored when `instants` is given.
    pub horizon: f64,
    /// Optional explicit grid `t_0 = 0 < ... < t_K`; must have `steps + 1` entries.
    #[serde(default)]
    pub instants: Option<Vec<f64>>,
    /// Brownian dimension `d >= 0`.
    pub brownian_dim: usize,
    /// Jump marks with intensity weights.
    #[serde(default)]
    pub marks: Vec<MarkSpec>,
    /// Whether to attach the extra orthogonal Rademacher factor.
    #[serde(default)]
    pub extra_factor: bool,
    /// Schedule of the increasing clock `A`.
    pub a_schedule: ASchedule,
    /// Node budget; construction fails beyond it.
    #[serde(default)]
    pub max_nodes: Option<u128>,
}

impl TreeConfig {
    /// Branching factor per node: `2^d * 2^m * (2 if extra factor)`.
    pub fn branching(&self) -> u128 {
        let mut b = 1u128 << self.brownian_dim;
        b <<= self.marks.len();
        if self.extra_factor {
            b <<= 1;
        }
        b
    }

    /// Total node count of the full tree.
    pub fn total_nodes(&self) -> u128 {
        let b = self.branching();
        let mut total = 1u128;
        let mut layer = 1u128;
        for _ in 0..self.steps {
            layer = layer.saturating_mul(b);
            total = total.saturating_add(layer);
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Tree data
// ---------------------------------------------------------------------------

/// The time grid `t_0 = 0 < ... < t_K = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    instants: Vec<f64>,
}

impl TimeGrid {
    fn from_config(cfg: &TreeConfig) -> Result<Self> {
        if cfg.steps == 0 {
            return Err(Error::EmptyGrid);
        }
        let instants = match &cfg.instants {
            Some(v) => {
                if v.len() != cfg.steps + 1 {
                    return Err(Error::InvalidGrid(format!(
                        "expected {} instants, got {}",
                        cfg.steps + 1,
                        v.len()
                    )));
                }
                if v[0] != 0.0 {
                    return Err(Error::InvalidGrid("t_0 must be 0".into()));
                }
                let last = *v.last().unwrap();
                if (last - cfg.horizon).abs() > 1e-12 * cfg.horizon.abs().max(1.0) {
                    return Err(Error::InvalidGrid(format!(
                        "last instant {last} must equal the horizon {}",
                        cfg.horizon
                    )));
                }
                v.clone()
            }
            None => {
                if !(cfg.horizon > 0.0) {
                    return Err(Error::InvalidGrid("horizon must be positive".into()));
                }
                let dt = cfg.horizon / cfg.steps as f64;
                (0..=cfg.steps).map(|k| k as f64 * dt).collect()
            }
        };
        for w in instants.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "instants not strictly increasing near t = {}",
                    w[0]
                )));
            }
        }
        Ok(TimeGrid { instants })
    }

    pub fn steps(&self) -> usize {
        self.instants.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.instants.last().unwrap()
    }

    /// `t_k`.
    pub fn instant(&self, k: usize) -> f64 {
        self.instants[k]
    }

    /// `dt_k = t_{k+1} - t_k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.instants[k + 1] - self.instants[k]
    }
}

/// The finite mark space with intensity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSpace {
    specs: Vec<MarkSpec>,
}

impl MarkSpace {
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Intensity weight `q_j` of mark `j`.
    pub fn weight(&self, j: usize) -> f64 {
        self.specs[j].weight
    }

    /// All weights, in mark order.
    pub fn weights(&self) -> Vec<f64> {
        self.specs.iter().map(|m| m.weight).collect()
    }

    pub fn spec(&self, j: usize) -> &MarkSpec {
        &self.specs[j]
    }

    /// `||phi||_Q^2 = sum_j phi_j^2 q_j`.
    pub fn q_norm_sq(&self, phi: &[f64]) -> f64 {
        phi.iter()
            .zip(&self.specs)
            .map(|(x, m)| x * x * m.weight)
            .sum()
    }
}

/// One edge of the tree: conditional probability and the noise increments
/// realized along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub child: NodeId,
    /// Conditional probability, in `(0, 1]`.
    pub prob: f64,
    /// Brownian increment `dB`, one entry per dimension.
    pub brownian: Vec<f64>,
    /// Compensated jump increments `dÑ_j`, one entry per mark.
    pub compensated: Vec<f64>,
    /// Raw arrival indicator per mark.
    pub arrivals: Vec<bool>,
    /// Extra orthogonal factor increment (`0` when the factor is off).
    pub orthogonal: f64,
}

/// One node of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub layer: usize,
    pub parent: Option<NodeId>,
    /// Unconditional probability of reaching this node.
    pub prob: f64,
    /// `A_{t_k}` along the path to this node.
    pub a_value: f64,
    /// Predictable increment `dA_k` over `(t_k, t_{k+1}]`; zero on the last layer.
    pub a_increment: f64,
    /// Cumulative arrival count per mark on the path to this node.
    pub arrival_counts: Vec<u32>,
    pub branches: Vec<Branch>,
}

/// Finite filtered probability tree carrying `B`, `Ñ`, the optional extra
/// factor, and the clock `A`.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    grid: TimeGrid,
    marks: MarkSpace,
    extra_factor: bool,
    nodes: Vec<Node>,
    layers: Vec<Vec<NodeId>>,
}

impl ScenarioTree {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn marks(&self) -> &MarkSpace {
        &self.marks
    }

    pub fn has_extra_factor(&self) -> bool {
        self.extra_factor
    }

    pub fn brownian_dim(&self) -> usize {
        self.layers
            .first()
            .and_then(|l| l.first())
            .map(|&root| {
                self.nodes[root]
                    .branches
                    .first()
                    .map(|b| b.brownian.len())
                    .unwrap_or(0)
            })
            .unwrap_or(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Node ids of layer `k` (time index `k`).
    pub fn layer(&self, k: usize) -> &[NodeId] {
        &self.layers[k]
    }

    pub fn terminal_layer(&self) -> &[NodeId] {
        self.layers.last().unwrap()
    }

    /// All node ids, root first.
    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        0..self.nodes.len()
    }

    /// Leaves (terminal-layer nodes).
    pub fn leaves(&self) -> &[NodeId] {
        self.terminal_layer()
    }

    /// Path from the root to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Cumulative Brownian coordinate `B^i_{t_k}` at a node.
    pub fn brownian_total(&self, id: NodeId, dim: usize) -> f64 {
        let mut total = 0.0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let branch = self.nodes[p]
                .branches
                .iter()
                .find(|b| b.child == cur)
                .expect("child links are consistent");
            total += branch.brownian[dim];
            cur = p;
        }
        total
    }

    /// Cumulative compensated jump coordinate `Ñ^j_{t_k}` at a node.
    pub fn compensated_total(&self, id: NodeId, mark: usize) -> f64 {
        let mut total = 0.0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let branch = self.nodes[p]
                .branches
                .iter()
                .find(|b| b.child == cur)
                .expect("child links are consistent");
            total += branch.compensated[mark];
            cur = p;
        }
        total
    }

    /// Cumulative extra-factor coordinate at a node.
    pub fn orthogonal_total(&self, id: NodeId) -> f64 {
        let mut total = 0.0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let branch = self.nodes[p]
                .branches
                .iter()
                .find(|b| b.child == cur)
                .expect("child links are consistent");
            total += branch.orthogonal;
            cur = p;
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Build the full product tree described by `cfg`.
///
/// Branches at each node enumerate the independent product of Rademacher
/// `±sqrt(dt)` per Brownian dimension, Bernoulli(`q_j dt`) per mark, and
/// Rademacher `±1` for the extra factor.
pub fn build_tree(cfg: &TreeConfig) -> Result<ScenarioTree> {
    let grid = TimeGrid::from_config(cfg)?;
    for (j, m) in cfg.marks.iter().enumerate() {
        if !(m.weight >= 0.0) {
            return Err(Error::InvalidData(format!(
                "mark {j} ({}) has negative weight {}",
                m.label, m.weight
            )));
        }
        for k in 0..grid.steps() {
            let q_dt = m.weight * grid.dt(k);
            if q_dt >= 1.0 {
                return Err(Error::InvalidIntensity { mark: j, step: k, q_dt });
            }
        }
    }
    if let ASchedule::Deterministic { increments } = &cfg.a_schedule {
        if increments.len() != cfg.steps {
            return Err(Error::InvalidData(format!(
                "A schedule has {} increments, expected {}",
                increments.len(),
                cfg.steps
            )));
        }
        if increments.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidData("A increments must be >= 0".into()));
        }
    }
    if let ASchedule::MarkDriven { base, per_arrival } = &cfg.a_schedule {
        if *base < 0.0 || *per_arrival < 0.0 {
            return Err(Error::InvalidData(
                "mark-driven A schedule needs base >= 0 and per_arrival >= 0".into(),
            ));
        }
    }
    let limit = cfg.max_nodes.unwrap_or(DEFAULT_MAX_NODES);
    let total = cfg.total_nodes();
    if total > limit {
        return Err(Error::TreeTooLarge { nodes: total, limit });
    }

    let d = cfg.brownian_dim;
    let m = cfg.marks.len();
    let a_increment_at = |layer: usize, arrivals: &[u32]| -> f64 {
        match &cfg.a_schedule {
            ASchedule::Deterministic { increments } => increments[layer],
            ASchedule::MarkDriven { base, per_arrival } => {
                base + per_arrival * arrivals.iter().map(|&c| c as f64).sum::<f64>()
            }
        }
    };

    let mut nodes: Vec<Node> = Vec::with_capacity(total as usize);
    let mut layers: Vec<Vec<NodeId>> = Vec::with_capacity(cfg.steps + 1);
    let root_arrivals = vec![0u32; m];
    nodes.push(Node {
        id: 0,
        layer: 0,
        parent: None,
        prob: 1.0,
        a_value: 0.0,
        a_increment: a_increment_at(0, &root_arrivals),
        arrival_counts: root_arrivals,
        branches: Vec::new(),
    });
    layers.push(vec![0]);

    for k in 0..cfg.steps {
        let dt = grid.dt(k);
        let sqrt_dt = dt.sqrt();
        let mut next_layer = Vec::new();
        for &uid in layers[k].clone().iter() {
            let parent_prob = nodes[uid].prob;
            let parent_a = nodes[uid].a_value;
            let parent_da = nodes[uid].a_increment;
            let parent_counts = nodes[uid].arrival_counts.clone();
            let mut branches = Vec::new();
            // Enumerate the independent product of all factor outcomes.
            let brownian_patterns = 1usize << d;
            let mark_patterns = 1usize << m;
            let extra_patterns = if cfg.extra_factor { 2 } else { 1 };
            for bw in 0..brownian_patterns {
                for mk in 0..mark_patterns {
                    for ex in 0..extra_patterns {
                        let mut prob = 1.0 / brownian_patterns as f64;
                        let brownian: Vec<f64> = (0..d)
                            .map(|i| if bw >> i & 1 == 1 { sqrt_dt } else { -sqrt_dt })
                            .collect();
                        let mut compensated = Vec::with_capacity(m);
                        let mut arrivals = Vec::with_capacity(m);
                        for (j, spec) in cfg.marks.iter().enumerate() {
                            let q_dt = spec.weight * dt;
                            let arrived = mk >> j & 1 == 1;
                            prob *= if arrived { q_dt } else { 1.0 - q_dt };
                            compensated.push(if arrived { 1.0 - q_dt } else { -q_dt });
                            arrivals.push(arrived);
                        }
                        let orthogonal = if cfg.extra_factor {
                            prob *= 0.5;
                            if ex == 1 {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            0.0
                        };
                        // Branches with zero probability (q_j = 0 arrivals)
                        // are dropped: they carry no mass and would break the
                        // "prob in (0,1]" invariant.
                        if prob == 0.0 {
                            continue;
                        }
                        let child_id = nodes.len();
                        let mut child_counts = parent_counts.clone();
                        for (j, &a) in arrivals.iter().enumerate() {
                            if a {
                                child_counts[j] += 1;
                            }
                        }
                        let child_layer = k + 1;
                        let child_da = if child_layer < cfg.steps {
                            a_increment_at(child_layer, &child_counts)
                        } else {
                            0.0
                        };
                        nodes.push(Node {
                            id: child_id,
                            layer: child_layer,
                            parent: Some(uid),
                            prob: parent_prob * prob,
                            a_value: parent_a + parent_da,
                            a_increment: child_da,
                            arrival_counts: child_counts,
                            branches: Vec::new(),
                        });
                        branches.push(Branch {
                            child: child_id,
                            prob,
                            brownian,
                            compensated,
                            arrivals,
                            orthogonal,
                        });
                        next_layer.push(child_id);
                    }
                }
            }
            nodes[uid].branches = branches;
        }
        layers.push(next_layer);
    }

    Ok(ScenarioTree {
        grid,
        marks: MarkSpace { specs: cfg.marks.clone() },
        extra_factor: cfg.extra_factor,
        nodes,
        layers,
    })
}

// ---------------------------------------------------------------------------
// Adapted process carriers
// ---------------------------------------------------------------------------

/// A real-valued adapted process: one optional value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValues {
    vals: Vec<Option<f64>>,
}

impl NodeValues {
    pub fn new(tree: &ScenarioTree) -> Self {
        NodeValues { vals: vec![None; tree.node_count()] }
    }

    /// Defined on every node with the given constant.
    pub fn constant(tree: &ScenarioTree, value: f64) -> Self {
        NodeValues { vals: vec![Some(value); tree.node_count()] }
    }

    /// Defined on every node by a function of the node id.
    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(NodeId) -> f64) -> Self {
        NodeValues { vals: (0..tree.node_count()).map(|id| Some(f(id))).collect() }
    }

    /// Defined only on one layer.
    pub fn on_layer(tree: &ScenarioTree, layer: usize, mut f: impl FnMut(NodeId) -> f64) -> Self {
        let mut v = Self::new(tree);
        for &id in tree.layer(layer) {
            v.vals[id] = Some(f(id));
        }
        v
    }

    pub fn set(&mut self, id: NodeId, value: f64) {
        self.vals[id] = Some(value);
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.vals.get(id).copied().flatten()
    }

    /// Value at `id`, or [`Error::IncompleteProcess`].
    pub fn require(&self, tree: &ScenarioTree, id: NodeId) -> Result<f64> {
        self.get(id).ok_or(Error::IncompleteProcess { node: id, layer: tree.node(id).layer })
    }

    /// Apply `f` to every defined value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        NodeValues { vals: self.vals.iter().map(|v| v.map(&mut f)).collect() }
    }

    /// Pointwise combination on nodes where both are defined.
    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        NodeValues {
            vals: self
                .vals
                .iter()
                .zip(&other.vals)
                .map(|(a, b)| match (a, b) {
                    (Some(x), Some(y)) => Some(f(*x, *y)),
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn iter_defined(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.vals
            .iter()
            .enumerate()
            .filter_map(|(id, v)| v.map(|x| (id, x)))
    }
}

/// A vector-valued adapted process (e.g. `Z` in `R^d`, `V` per mark).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorValues {
    dim: usize,
    vals: Vec<Option<Vec<f64>>>,
}

impl VectorValues {
    pub fn new(tree: &ScenarioTree, dim: usize) -> Self {
        VectorValues { dim, vals: vec![None; tree.node_count()] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, id: NodeId, value: Vec<f64>) {
        debug_assert_eq!(value.len(), self.dim);
        self.vals[id] = Some(value);
    }

    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.vals.get(id).and_then(|v| v.as_deref())
    }

    pub fn require(&self, tree: &ScenarioTree, id: NodeId) -> Result<&[f64]> {
        self.get(id).ok_or(Error::IncompleteProcess { node: id, layer: tree.node(id).layer })
    }

    pub fn iter_defined(&self) -> impl Iterator<Item = (NodeId, &[f64])> + '_ {
        self.vals
            .iter()
            .enumerate()
            .filter_map(|(id, v)| v.as_deref().map(|x| (id, x)))
    }
}

/// Per-edge values attached to a node's outgoing branches, in branch order
/// (used for the orthogonal-martingale increments).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeValues {
    vals: Vec<Option<Vec<f64>>>,
}

impl EdgeValues {
    pub fn new(tree: &ScenarioTree) -> Self {
        EdgeValues { vals: vec![None; tree.node_count()] }
    }

    pub fn set(&mut self, id: NodeId, per_branch: Vec<f64>) {
        self.vals[id] = Some(per_branch);
    }

    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.vals.get(id).and_then(|v| v.as_deref())
    }

    pub fn iter_defined(&self) -> impl Iterator<Item = (NodeId, &[f64])> + '_ {
        self.vals
            .iter()
            .enumerate()
            .filter_map(|(id, v)| v.as_deref().map(|x| (id, x)))
    }
}

// ---------------------------------------------------------------------------
// Exact conditional expectation and martingale decomposition
// ---------------------------------------------------------------------------

/// One-step conditional expectation: for every node of layer `k`, the
/// branch-probability-weighted average of `x` over its children.
pub fn conditional_expectation(
    tree: &ScenarioTree,
    x: &NodeValues,
    k: usize,
) -> Result<NodeValues> {
    let mut out = NodeValues::new(tree);
    for &uid in tree.layer(k) {
        out.set(uid, node_expectation(tree, x, uid)?);
    }
    Ok(out)
}

/// Conditional expectation of `x` (defined on the children) at a single node.
pub fn node_expectation(tree: &ScenarioTree, x: &NodeValues, node: NodeId) -> Result<f64> {
    let mut acc = 0.0;
    for b in &tree.node(node).branches {
        acc += b.prob * x.require(tree, b.child)?;
    }
    Ok(acc)
}

/// Result of projecting a centered one-step increment onto the driving noises.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Coefficients on the Brownian increments, `z^i = E[mu dB^i] / dt`.
    pub z: Vec<f64>,
    /// Coefficients on the compensated jumps, `v_j = E[mu dÑ_j] / E[dÑ_j^2]`.
    pub v: Vec<f64>,
    /// Residual per branch: `mu_i - z·dB_i - sum_j v_j dÑ_{j,i}`.
    pub residual: Vec<f64>,
}

/// Tolerance on the conditional mean of a decomposition input.
pub const CENTERING_TOL: f64 = 1e-12;

/// Exact least-squares decomposition of a conditionally centered increment.
///
/// `mu` must assign one value per branch of `node`, in branch order, with
/// `sum_i p_i mu_i = 0` within [`CENTERING_TOL`]. The returned residual has
/// zero mean and zero correlation with every `dB^i` and `dÑ_j` at the node,
/// and the reconstruction `mu_i = z·dB_i + sum_j v_j dÑ_{j,i} + residual_i`
/// is exact. Marks with zero weight get `v_j = 0`.
pub fn martingale_decompose(
    tree: &ScenarioTree,
    node: NodeId,
    mu: &[f64],
) -> Result<Decomposition> {
    let n = tree.node(node);
    assert_eq!(mu.len(), n.branches.len(), "one value per branch required");
    let mean: f64 = n.branches.iter().zip(mu).map(|(b, m)| b.prob * m).sum();
    if mean.abs() > CENTERING_TOL {
        return Err(Error::NotAMartingaleIncrement { node, mean });
    }
    let d = n.branches.first().map(|b| b.brownian.len()).unwrap_or(0);
    let m = tree.marks.len();
    let dt = tree.grid.dt(n.layer);

    let mut z = vec![0.0; d];
    for (i, zi) in z.iter_mut().enumerate() {
        let cov: f64 = n
            .branches
            .iter()
            .zip(mu)
            .map(|(b, x)| b.prob * x * b.brownian[i])
            .sum();
        *zi = cov / dt;
    }

    let mut v = vec![0.0; m];
    for (j, vj) in v.iter_mut().enumerate() {
        let second_moment: f64 = n
            .branches
            .iter()
            .map(|b| b.prob * b.compensated[j] * b.compensated[j])
            .sum();
        if second_moment > 0.0 {
            let cov: f64 = n
                .branches
                .iter()
                .zip(mu)
                .map(|(b, x)| b.prob * x * b.compensated[j])
                .sum();
            *vj = cov / second_moment;
        }
    }

    let residual: Vec<f64> = n
        .branches
        .iter()
        .zip(mu)
        .map(|(b, x)| {
            let zb: f64 = z.iter().zip(&b.brownian).map(|(zi, db)| zi * db).sum();
            let vn: f64 = v.iter().zip(&b.compensated).map(|(vj, dn)| vj * dn).sum();
            x - zb - vn
        })
        .collect();

    Ok(Decomposition { z, v, residual })
}
