//! Exponentially weighted norms, a priori estimate monitors, contraction-rate
//! measurement, and the comparison harness.
//!
//! All integrals are probability-weighted sums over the tree with the
//! convention of predictable (left-evaluated) integrands: a `dt` or `dA`
//! integral over `(t_k, t_{k+1}]` is charged at the node deciding it, with
//! weight `e^{mu A_{t_k}}` (and `e^{gamma t_k}` where a time weight enters).
//! The two growth inequalities checked by [`apriori_check`] are the one
//! exception: there the exponential weight is taken at the *right* endpoint
//! of each increment (`A_{t_k} + dA_k`, resp. `t_{k+1}`), which is what makes
//! the discrete Cauchy-Schwarz bound `sum e^{-mu A} dA <= 1/mu` exact for
//! arbitrary step sizes.
//!
//! `[M]` has no continuous part on a tree; the quadratic variation is the sum
//! of squared increments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gbsde::GBSDESolution;
use crate::model::{DriverSpec, ProblemData};
use crate::scenario::{EdgeValues, NodeId, NodeValues, ScenarioTree, VectorValues};

// ---------------------------------------------------------------------------
// Norm configuration and spaces
// ---------------------------------------------------------------------------

/// Exponents of the weight `Phi^{gamma,mu}_t = exp(gamma t + mu A_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormConfig {
    /// `A`-weight exponent, `> 1`.
    pub mu: f64,
    /// Time-weight exponent, `> 0`.
    pub gamma: f64,
}

impl WeightedNormConfig {
    pub fn new(mu: f64, gamma: f64) -> Self {
        assert!(mu > 1.0, "mu must exceed 1");
        assert!(gamma > 0.0, "gamma must be positive");
        WeightedNormConfig { mu, gamma }
    }

    /// The fixed-point choice `gamma = 1 + 2|alpha| + 4 kappa^2`.
    pub fn for_driver(driver: &DriverSpec, mu: f64) -> Self {
        WeightedNormConfig::new(mu, 1.0 + 2.0 * driver.alpha.abs() + 4.0 * driver.kappa * driver.kappa)
    }

    /// `e^{mu A}` at a node.
    fn mu_weight(&self, tree: &ScenarioTree, id: NodeId) -> f64 {
        (self.mu * tree.node(id).a_value).exp()
    }

    /// `e^{gamma t + mu A}` at a node.
    fn phi_weight(&self, tree: &ScenarioTree, id: NodeId) -> f64 {
        let n = tree.node(id);
        (self.gamma * tree.grid().instant(n.layer) + self.mu * n.a_value).exp()
    }
}

/// Weighted-space identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceId {
    /// `E[sup e^{mu A}|Y|^2 + int e^{mu A}|Y|^2 dA]`.
    S2MuA,
    /// `E[int e^{mu A} ||X||^2 dt]`.
    M2MuDt,
    /// `E[int e^{mu A} ||X||^2 dA]`.
    M2MuDa,
    /// `E[int e^{mu A} d[M]]`.
    M2Mart,
    /// `E[K_T^2]` from nonnegative increments.
    KTerminal,
}

impl std::str::FromStr for SpaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S2muA" => Ok(SpaceId::S2MuA),
            "M2mu_dt" => Ok(SpaceId::M2MuDt),
            "M2mu_dA" => Ok(SpaceId::M2MuDa),
            "M2mart" => Ok(SpaceId::M2Mart),
            "K" => Ok(SpaceId::KTerminal),
            other => Err(Error::InvalidSpace(format!("unknown space id `{other}`"))),
        }
    }
}

/// A solution component handed to [`weighted_norm`].
#[derive(Debug, Clone, Copy)]
pub enum NormInput<'a> {
    /// Scalar adapted process (e.g. `Y`).
    Scalar(&'a NodeValues),
    /// `R^d`-valued process measured in the Euclidean norm (e.g. `Z`).
    Vector(&'a VectorValues),
    /// Mark-indexed process measured in the `||.||_Q` norm (e.g. `V`).
    MarkVector(&'a VectorValues),
    /// Orthogonal-martingale increments per branch.
    Martingale(&'a EdgeValues),
    /// Nonnegative predictable increments accumulated to the horizon (`K`).
    Increments(&'a NodeValues),
}

/// Squared weighted norm of a component in the requested space.
pub fn weighted_norm(
    tree: &ScenarioTree,
    component: NormInput<'_>,
    space: SpaceId,
    cfg: &WeightedNormConfig,
) -> Result<f64> {
    match (space, component) {
        (SpaceId::S2MuA, NormInput::Scalar(x)) => {
            Ok(pathwise_sup_expectation(tree, |id| {
                let v = x.get(id).unwrap_or(0.0);
                cfg.mu_weight(tree, id) * v * v
            }) + integral_da(tree, |id| {
                let v = x.get(id).unwrap_or(0.0);
                cfg.mu_weight(tree, id) * v * v
            }))
        }
        (SpaceId::M2MuDt, NormInput::Scalar(x)) => Ok(integral_dt(tree, |id| {
            let v = x.get(id).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v * v
        })),
        (SpaceId::M2MuDt, NormInput::Vector(x)) => Ok(integral_dt(tree, |id| {
            let v = x.get(id).map(|s| s.iter().map(|a| a * a).sum()).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v
        })),
        (SpaceId::M2MuDt, NormInput::MarkVector(x)) => Ok(integral_dt(tree, |id| {
            let v = x.get(id).map(|s| tree.marks().q_norm_sq(s)).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v
        })),
        (SpaceId::M2MuDa, NormInput::Scalar(x)) => Ok(integral_da(tree, |id| {
            let v = x.get(id).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v * v
        })),
        (SpaceId::M2MuDa, NormInput::Vector(x)) => Ok(integral_da(tree, |id| {
            let v = x.get(id).map(|s| s.iter().map(|a| a * a).sum()).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v
        })),
        (SpaceId::M2MuDa, NormInput::MarkVector(x)) => Ok(integral_da(tree, |id| {
            let v = x.get(id).map(|s| tree.marks().q_norm_sq(s)).unwrap_or(0.0);
            cfg.mu_weight(tree, id) * v
        })),
        (SpaceId::M2Mart, NormInput::Martingale(m)) => {
            let mut acc = 0.0;
            for (id, incr) in m.iter_defined() {
                let n = tree.node(id);
                let qv: f64 = n.branches.iter().zip(incr).map(|(b, x)| b.prob * x * x).sum();
                acc += n.prob * cfg.mu_weight(tree, id) * qv;
            }
            Ok(acc)
        }
        (SpaceId::KTerminal, NormInput::Increments(dk)) => {
            let cum = accumulate_increments(tree, dk);
            Ok(tree
                .leaves()
                .iter()
                .map(|&id| {
                    let k_t = cum.get(id).unwrap_or(0.0);
                    tree.node(id).prob * k_t * k_t
                })
                .sum())
        }
        (space, _) => Err(Error::InvalidSpace(format!(
            "component not measurable in {space:?}"
        ))),
    }
}

/// `E[sum_{k<K} w(u) dt_k]` for a node weight `w`.
fn integral_dt(tree: &ScenarioTree, mut w: impl FnMut(NodeId) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..tree.num_layers() - 1 {
        let dt = tree.grid().dt(k);
        for &id in tree.layer(k) {
            acc += tree.node(id).prob * w(id) * dt;
        }
    }
    acc
}

/// `E[sum_{k<K} w(u) dA_u]` for a node weight `w`.
fn integral_da(tree: &ScenarioTree, mut w: impl FnMut(NodeId) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..tree.num_layers() - 1 {
        for &id in tree.layer(k) {
            let n = tree.node(id);
            acc += n.prob * w(n.id) * n.a_increment;
        }
    }
    acc
}

/// `E[max over the path of w(u)]`, computed by a running-max sweep.
fn pathwise_sup_expectation(tree: &ScenarioTree, mut w: impl FnMut(NodeId) -> f64) -> f64 {
    let mut running: Vec<f64> = vec![f64::NEG_INFINITY; tree.node_count()];
    running[0] = w(0);
    for k in 0..tree.num_layers() - 1 {
        for &id in tree.layer(k) {
            let base = running[id];
            for b in &tree.node(id).branches {
                running[b.child] = base.max(w(b.child));
            }
        }
    }
    tree.leaves().iter().map(|&id| tree.node(id).prob * running[id]).sum()
}

/// Cumulative process from predictable increments: the value at a node is
/// the sum over its strict ancestors, so the root carries 0 and the leaves
/// carry the horizon total.
pub fn accumulate_increments(tree: &ScenarioTree, incr: &NodeValues) -> NodeValues {
    let mut out = NodeValues::new(tree);
    out.set(0, 0.0);
    for k in 0..tree.num_layers() - 1 {
        for &id in tree.layer(k) {
            let here = out.get(id).unwrap_or(0.0);
            let step = incr.get(id).unwrap_or(0.0);
            for b in &tree.node(id).branches {
                out.set(b.child, here + step);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Fixed-point difference norm and contraction rate
// ---------------------------------------------------------------------------

/// Squared weighted norm of the difference of two solutions: `Y` on `dt` and
/// `dA`, `Z` and `V` on `dt`, `M` on quadratic variation, all under
/// `Phi^{gamma,mu}`.
pub fn solution_difference_norm_sq(
    tree: &ScenarioTree,
    a: &GBSDESolution,
    b: &GBSDESolution,
    cfg: &WeightedNormConfig,
) -> f64 {
    let mut acc = 0.0;
    for k in 0..tree.num_layers() - 1 {
        let dt = tree.grid().dt(k);
        for &id in tree.layer(k) {
            let n = tree.node(id);
            let phi = cfg.phi_weight(tree, id);
            let dy = a.y.get(id).unwrap_or(0.0) - b.y.get(id).unwrap_or(0.0);
            let dz_sq: f64 = match (a.z.get(id), b.z.get(id)) {
                (Some(za), Some(zb)) => za.iter().zip(zb).map(|(x, y)| (x - y) * (x - y)).sum(),
                _ => 0.0,
            };
            let dv_sq = match (a.v.get(id), b.v.get(id)) {
                (Some(va), Some(vb)) => {
                    let diff: Vec<f64> = va.iter().zip(vb).map(|(x, y)| x - y).collect();
                    tree.marks().q_norm_sq(&diff)
                }
                _ => 0.0,
            };
            let dm_qv: f64 = match (a.m_increments.get(id), b.m_increments.get(id)) {
                (Some(ma), Some(mb)) => n
                    .branches
                    .iter()
                    .zip(ma.iter().zip(mb))
                    .map(|(br, (x, y))| br.prob * (x - y) * (x - y))
                    .sum(),
                _ => 0.0,
            };
            acc += n.prob
                * phi
                * ((dy * dy + dz_sq + dv_sq) * dt + dy * dy * n.a_increment + dm_qv);
        }
    }
    acc
}

/// Measured contraction behaviour of a Picard run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// Squared difference norms `||x^{i+1} - x^i||^2`.
    pub diff_norms_sq: Vec<f64>,
    /// Ratios of consecutive squared difference norms.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// `max_ratio - 1/2`: how far the measured factor sits from the
    /// continuous-time bound (recorded, not asserted; coarse grids may
    /// exceed it).
    pub excess_over_half: f64,
    pub cfg: WeightedNormConfig,
}

/// Measure the fixed-point contraction factor from an iterate history.
///
/// Needs at least three iterates (two differences). A zero denominator with a
/// zero numerator counts as ratio 0 (the iteration has landed on the fixed
/// point exactly).
pub fn contraction_rate(
    tree: &ScenarioTree,
    history: &[GBSDESolution],
    cfg: &WeightedNormConfig,
) -> Result<ContractionReport> {
    if history.len() < 3 {
        return Err(Error::InsufficientHistory { got: history.len() });
    }
    let diff_norms_sq: Vec<f64> = history
        .windows(2)
        .map(|w| solution_difference_norm_sq(tree, &w[0], &w[1], cfg))
        .collect();
    let mut ratios = Vec::new();
    for w in diff_norms_sq.windows(2) {
        let r = if w[0] > 0.0 {
            w[1] / w[0]
        } else {
            0.0
        };
        ratios.push(r);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ContractionReport {
        diff_norms_sq,
        ratios,
        max_ratio,
        excess_over_half: max_ratio - 0.5,
        cfg: *cfg,
    })
}

// ---------------------------------------------------------------------------
// A priori estimate monitor
// ---------------------------------------------------------------------------

/// Borrowed view of whichever solution flavour is being monitored.
#[derive(Debug, Clone, Copy)]
pub struct SolutionView<'a> {
    pub y: &'a NodeValues,
    pub z: &'a VectorValues,
    pub v: &'a VectorValues,
    pub m_increments: &'a EdgeValues,
    pub k_increments: Option<&'a NodeValues>,
}

impl<'a> From<&'a GBSDESolution> for SolutionView<'a> {
    fn from(s: &'a GBSDESolution) -> Self {
        SolutionView { y: &s.y, z: &s.z, v: &s.v, m_increments: &s.m_increments, k_increments: None }
    }
}

/// All terms of the uniform a priori estimate, plus the two growth bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    // left-hand side
    pub sup_y: f64,
    pub y_da: f64,
    pub zv_dt: f64,
    pub m_qv: f64,
    pub k_terminal_sq: f64,
    // right-hand side
    pub xi_term: f64,
    pub phi_dt: f64,
    pub psi_da: f64,
    pub barrier_sup: f64,
    /// `(sum of LHS) / (sum of RHS)`.
    pub ratio: f64,
    /// Worst `LHS - RHS` over all grid prefixes of the `(int g dA)^2` bound.
    pub g_bound_violation: f64,
    /// Worst `LHS - RHS` over all grid prefixes of the `(int f dt)^2` bound.
    pub f_bound_violation: f64,
}

impl EstimateReport {
    pub fn lhs_total(&self) -> f64 {
        self.sup_y + self.y_da + self.zv_dt + self.m_qv + self.k_terminal_sq
    }

    pub fn rhs_total(&self) -> f64 {
        self.xi_term + self.phi_dt + self.psi_da + self.barrier_sup
    }

    /// Whether both growth bounds hold (up to accumulated rounding).
    pub fn growth_bounds_hold(&self) -> bool {
        self.g_bound_violation <= 1e-10 && self.f_bound_violation <= 1e-10
    }
}

/// Evaluate every term of the a priori estimate and the two growth bounds.
pub fn apriori_check(
    tree: &ScenarioTree,
    sol: SolutionView<'_>,
    data: &ProblemData,
    cfg: &WeightedNormConfig,
) -> Result<EstimateReport> {
    let sup_y = pathwise_sup_expectation(tree, |id| {
        let v = sol.y.get(id).unwrap_or(0.0);
        cfg.mu_weight(tree, id) * v * v
    });
    let y_da = weighted_norm(tree, NormInput::Scalar(sol.y), SpaceId::M2MuDa, cfg)?;
    let zv_dt = weighted_norm(tree, NormInput::Vector(sol.z), SpaceId::M2MuDt, cfg)?
        + weighted_norm(tree, NormInput::MarkVector(sol.v), SpaceId::M2MuDt, cfg)?;
    let m_qv = weighted_norm(tree, NormInput::Martingale(sol.m_increments), SpaceId::M2Mart, cfg)?;
    let k_terminal_sq = match sol.k_increments {
        Some(dk) => weighted_norm(tree, NormInput::Increments(dk), SpaceId::KTerminal, cfg)?,
        None => 0.0,
    };

    let last = tree.num_layers() - 1;
    let xi_term: f64 = tree
        .layer(last)
        .iter()
        .map(|&id| {
            let n = tree.node(id);
            let xi = data.terminal.get(id).unwrap_or(0.0);
            n.prob * cfg.mu_weight(tree, id) * xi * xi
        })
        .sum();
    let phi_dt = integral_dt(tree, |id| {
        let p = data.phi.get(id).unwrap_or(1.0);
        cfg.mu_weight(tree, id) * p * p
    });
    let psi_da = integral_da(tree, |id| {
        let p = data.psi.get(id).unwrap_or(1.0);
        cfg.mu_weight(tree, id) * p * p
    });
    let barrier_sup = match &data.barrier {
        Some(b) => pathwise_sup_expectation(tree, |id| {
            let l = b.values.get(id).unwrap_or(0.0);
            let one_sided = match b.side {
                crate::model::BarrierSide::Lower => l.max(0.0),
                crate::model::BarrierSide::Upper => (-l).max(0.0),
            };
            (2.0 * cfg.mu * tree.node(id).a_value).exp() * one_sided * one_sided
        }),
        None => 0.0,
    };

    let lhs = sup_y + y_da + zv_dt + m_qv + k_terminal_sq;
    let rhs = xi_term + phi_dt + psi_da + barrier_sup;
    let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };

    let (g_bound_violation, f_bound_violation) = growth_bound_violations(tree, sol.y, data, cfg);

    Ok(EstimateReport {
        sup_y,
        y_da,
        zv_dt,
        m_qv,
        k_terminal_sq,
        xi_term,
        phi_dt,
        psi_da,
        barrier_sup,
        ratio,
        g_bound_violation,
        f_bound_violation,
    })
}

/// Check, at every grid prefix `t >= t_1`, the two growth inequalities
///
/// ```text
/// E[(int_0^t g(s, Y_s) dA_s)^2]    <= (2/mu)    E[int_0^t e^{mu A}  (psi^2 + kappa^2 Y^2) dA]
/// E[(int_0^t f(s, Y_s, 0, 0) ds)^2] <= (2/gamma) E[int_0^t e^{gamma s}(phi^2 + kappa^2 Y^2) ds]
/// ```
///
/// for an arbitrary adapted `Y`, with the exponential weight at the right
/// endpoint of each increment. Returns the worst `LHS - RHS` per inequality
/// (nonpositive when they hold).
pub fn growth_bound_violations(
    tree: &ScenarioTree,
    y: &NodeValues,
    data: &ProblemData,
    cfg: &WeightedNormConfig,
) -> (f64, f64) {
    let steps = tree.num_layers() - 1;
    let kappa = data.driver.kappa;
    let mut worst_g = f64::NEG_INFINITY;
    let mut worst_f = f64::NEG_INFINITY;
    // pathwise accumulation: for each node, the partial sums along its path
    let mut g_partial = vec![0.0_f64; tree.node_count()];
    let mut f_partial = vec![0.0_f64; tree.node_count()];
    let mut g_rhs_partial = vec![0.0_f64; tree.node_count()];
    let mut f_rhs_partial = vec![0.0_f64; tree.node_count()];
    for k in 0..steps {
        // extend every path by the step (t_k, t_{k+1}]
        let dt = tree.grid().dt(k);
        let t_right = tree.grid().instant(k + 1);
        for &id in tree.layer(k) {
            let n = tree.node(id);
            let yv = y.get(id).unwrap_or(0.0);
            let g_val = data.driver.g.evaluate(tree.grid().instant(k), yv);
            let zeros_z = vec![0.0; tree.brownian_dim()];
            let zeros_v = vec![0.0; tree.marks().len()];
            let f_val = data.driver.f.evaluate(
                tree.grid().instant(k),
                yv,
                &zeros_z,
                &zeros_v,
                &tree.marks().weights(),
            );
            let psi = data.psi.get(id).unwrap_or(1.0);
            let phi = data.phi.get(id).unwrap_or(1.0);
            let a_right = n.a_value + n.a_increment;
            let g_rhs_incr =
                (cfg.mu * a_right).exp() * (psi * psi + kappa * kappa * yv * yv) * n.a_increment;
            let f_rhs_incr =
                (cfg.gamma * t_right).exp() * (phi * phi + kappa * kappa * yv * yv) * dt;
            for b in &n.branches {
                g_partial[b.child] = g_partial[id] + g_val * n.a_increment;
                f_partial[b.child] = f_partial[id] + f_val * dt;
                g_rhs_partial[b.child] = g_rhs_partial[id] + g_rhs_incr;
                f_rhs_partial[b.child] = f_rhs_partial[id] + f_rhs_incr;
            }
        }
        // expectation over layer k+1: the bound at prefix t = t_{k+1}
        // (t = 0 holds trivially and is skipped)
        let mut lhs_g = 0.0;
        let mut lhs_f = 0.0;
        let mut rhs_g = 0.0;
        let mut rhs_f = 0.0;
        for &id in tree.layer(k + 1) {
            let n = tree.node(id);
            lhs_g += n.prob * g_partial[id] * g_partial[id];
            lhs_f += n.prob * f_partial[id] * f_partial[id];
            rhs_g += n.prob * g_rhs_partial[id];
            rhs_f += n.prob * f_rhs_partial[id];
        }
        worst_g = worst_g.max(lhs_g - (2.0 / cfg.mu) * rhs_g);
        worst_f = worst_f.max(lhs_f - (2.0 / cfg.gamma) * rhs_f);
    }
    (worst_g, worst_f)
}

// ---------------------------------------------------------------------------
// Comparison harness
// ---------------------------------------------------------------------------

/// The pieces of a solution the comparison theorem looks at.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonInput<'a> {
    pub y: &'a NodeValues,
    pub z: &'a VectorValues,
    pub v: &'a VectorValues,
    pub k_increments: Option<&'a NodeValues>,
}

impl<'a> From<&'a GBSDESolution> for ComparisonInput<'a> {
    fn from(s: &'a GBSDESolution) -> Self {
        ComparisonInput { y: &s.y, z: &s.z, v: &s.v, k_increments: None }
    }
}

/// Outcome of one ordered-pair comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Nodes where `Y > Y' + 1e-10`.
    pub y_violations: usize,
    pub max_y_gap: f64,
    /// Whether the `K`-increment ordering was applicable and checked.
    pub k_checked: bool,
    /// Interval pairs where `K_t - K_s < K'_t - K'_s - 1e-10`.
    pub k_violations: usize,
    pub max_k_gap: f64,
}

const ORDER_TOL: f64 = 1e-10;

/// Check the comparison principle on a pair of solved problems.
///
/// Preconditions (`xi <= xi'`, `f <= f'` and `g <= g'` along the primed
/// solution) are verified node by node; a violation is an error carrying the
/// witness. The `Y`-ordering result and, for `(z, v)`-free drivers with both
/// reflections present, the `K`-increment ordering are measured and reported.
pub fn compare_solutions(
    tree: &ScenarioTree,
    data: &ProblemData,
    data_prime: &ProblemData,
    sol: ComparisonInput<'_>,
    sol_prime: ComparisonInput<'_>,
) -> Result<ComparisonReport> {
    let last = tree.num_layers() - 1;
    const PRE_TOL: f64 = 1e-12;
    for &id in tree.layer(last) {
        let xi = data.terminal.get(id).unwrap_or(f64::NAN);
        let xi_p = data_prime.terminal.get(id).unwrap_or(f64::NAN);
        if !(xi <= xi_p + PRE_TOL) {
            return Err(Error::PreconditionViolated {
                condition: "xi <= xi'".into(),
                node: id,
                value: xi - xi_p,
            });
        }
    }
    let q = tree.marks().weights();
    for k in 0..last {
        let t = tree.grid().instant(k);
        for &id in tree.layer(k) {
            let yp = sol_prime.y.get(id).unwrap_or(f64::NAN);
            let zp = sol_prime.z.get(id).unwrap_or(&[]);
            let vp = sol_prime.v.get(id).unwrap_or(&[]);
            let f = data.driver.f.evaluate(t, yp, zp, vp, &q);
            let f_p = data_prime.driver.f.evaluate(t, yp, zp, vp, &q);
            if !(f <= f_p + PRE_TOL) {
                return Err(Error::PreconditionViolated {
                    condition: "f(t, Y', Z', V') <= f'(t, Y', Z', V')".into(),
                    node: id,
                    value: f - f_p,
                });
            }
            let g = data.driver.g.evaluate(t, yp);
            let g_p = data_prime.driver.g.evaluate(t, yp);
            if !(g <= g_p + PRE_TOL) {
                return Err(Error::PreconditionViolated {
                    condition: "g(t, Y') <= g'(t, Y')".into(),
                    node: id,
                    value: g - g_p,
                });
            }
        }
    }

    let mut y_violations = 0;
    let mut max_y_gap = f64::NEG_INFINITY;
    for id in tree.all_nodes() {
        if let (Some(a), Some(b)) = (sol.y.get(id), sol_prime.y.get(id)) {
            let gap = a - b;
            max_y_gap = max_y_gap.max(gap);
            if gap > ORDER_TOL {
                y_violations += 1;
            }
        }
    }

    let zv_free = !data.driver.f.depends_on_zv() && !data_prime.driver.f.depends_on_zv();
    let (k_checked, k_violations, max_k_gap) = match (sol.k_increments, sol_prime.k_increments) {
        (Some(dk), Some(dk_p)) if zv_free => {
            let cum = accumulate_increments(tree, dk);
            let cum_p = accumulate_increments(tree, dk_p);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for &leaf in tree.leaves() {
                let path = tree.path_to(leaf);
                for s in 0..path.len() {
                    for t_idx in s + 1..path.len() {
                        let inc = cum.get(path[t_idx]).unwrap_or(0.0) - cum.get(path[s]).unwrap_or(0.0);
                        let inc_p =
                            cum_p.get(path[t_idx]).unwrap_or(0.0) - cum_p.get(path[s]).unwrap_or(0.0);
                        let gap = inc_p - inc;
                        worst = worst.max(gap);
                        if gap > ORDER_TOL {
                            violations += 1;
                        }
                    }
                }
            }
            (true, violations, worst)
        }
        _ => (false, 0, f64::NEG_INFINITY),
    };

    Ok(ComparisonReport { y_violations, max_y_gap, k_checked, k_violations, max_k_gap })
}

// ---------------------------------------------------------------------------
// Jump-comparison structure condition
// ---------------------------------------------------------------------------

/// Result of the sampled check of the jump-comparison structure condition.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaConditionReport {
    pub passed: bool,
    pub max_violation: f64,
    /// `(y, v, v')` of the worst sample when failing.
    pub witness: Option<(f64, Vec<f64>, Vec<f64>)>,
}

/// Verify by sampling that increments of `f` in `v` are dominated by a linear
/// functional with coefficients `gamma_j` in `[max(-1, -nu_j), nu_j]`:
/// for each sampled `(y, z, v, v')`,
/// `f(t,y,z,v) - f(t,y,z,v') <= sum_j (v_j - v'_j) gamma_j q_j`
/// for the best admissible choice of `gamma`.
pub fn check_gamma_condition(
    driver: &DriverSpec,
    tree: &ScenarioTree,
    nu: &[f64],
    samples: usize,
    seed: u64,
) -> GammaConditionReport {
    let m = tree.marks().len();
    assert_eq!(nu.len(), m, "one bound per mark required");
    let q = tree.marks().weights();
    let d = tree.brownian_dim();
    let horizon = tree.grid().horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..samples.max(1) {
        let t = rng.random_range(0.0..=horizon);
        let y = rng.random_range(-10.0..=10.0);
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let v2: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let diff = driver.f.evaluate(t, y, &z, &v, &q) - driver.f.evaluate(t, y, &z, &v2, &q);
        let mut best = 0.0;
        for j in 0..m {
            let dv = v[j] - v2[j];
            let hi = nu[j];
            let lo = (-1.0_f64).max(-nu[j]);
            best += q[j] * if dv >= 0.0 { hi * dv } else { lo * dv };
        }
        let violation = diff - best;
        if violation > max_violation {
            max_violation = violation;
            witness = Some((y, v.clone(), v2.clone()));
        }
    }
    let passed = max_violation <= 1e-10;
    GammaConditionReport {
        passed,
        max_violation: max_violation.max(0.0),
        witness: if passed { None } else { witness },
    }
}
