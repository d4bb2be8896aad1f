//! Backward solver for the unreflected generalized BSDE on a tree.
//!
//! Between `t_k` and `t_{k+1}` the discrete equation at a node `u` reads
//!
//! ```text
//! Y_u = E[Y_next | u] + f(t_k, Y_u, Z_u, V_u) dt_k + g(t_k, Y_u) dA_u
//! ```
//!
//! with `(Z_u, V_u)` and the orthogonal-martingale increments obtained by the
//! exact projection of `Y_next - E[Y_next | u]` onto the node's noise
//! increments. The scalar equation is solved implicitly: under the step-size
//! condition `1 - alpha dt - beta dA > 0` the map
//! `y -> y - f(y) dt - g(y) dA` is strictly increasing, so the root is unique.
//! The implicit form also absorbs the penalization drift `n (y - L)^-` (slope
//! `-n`) without any extra condition on `n`.
//!
//! [`picard_solve`] exposes the fixed-point map behind the general existence
//! argument: each iterate solves the equation with `f` frozen at the previous
//! iterate's `(Z, V)`, and successive differences are measured in the
//! exponentially weighted norm from [`crate::analysis`].

use crate::analysis::{solution_difference_norm_sq, WeightedNormConfig};
use crate::error::{Error, Result};
use crate::model::{BarrierSide, DriverForm, ProblemData};
use crate::scenario::{
    martingale_decompose, node_expectation, EdgeValues, NodeId, NodeValues, ScenarioTree,
    VectorValues,
};

/// Target plug-in residual of the implicit scalar solve.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Node-indexed solution of the backward equation.
#[derive(Debug, Clone, PartialEq)]
pub struct GBSDESolution {
    /// State process on all layers; equals the terminal condition on the last.
    pub y: NodeValues,
    /// Brownian integrand per non-terminal node.
    pub z: VectorValues,
    /// Jump integrand (one entry per mark) per non-terminal node.
    pub v: VectorValues,
    /// Orthogonal-martingale increments per outgoing branch.
    pub m_increments: EdgeValues,
    /// Plug-in residual of the solved scalar equation per non-terminal node.
    pub residuals: NodeValues,
}

impl GBSDESolution {
    pub(crate) fn empty(tree: &ScenarioTree) -> Self {
        GBSDESolution {
            y: NodeValues::new(tree),
            z: VectorValues::new(tree, tree.brownian_dim()),
            v: VectorValues::new(tree, tree.marks().len()),
            m_increments: EdgeValues::new(tree),
            residuals: NodeValues::new(tree),
        }
    }

    /// Largest recorded plug-in residual.
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter_defined()
            .map(|(_, r)| r.abs())
            .fold(0.0, f64::max)
    }

    /// Worst correlation of the stored `M`-increments with any `dB^i` or
    /// `dÑ_j` over all nodes, and the worst conditional mean.
    pub fn max_m_orthogonality_defect(&self, tree: &ScenarioTree) -> f64 {
        let mut worst = 0.0_f64;
        for (uid, incr) in self.m_increments.iter_defined() {
            let n = tree.node(uid);
            let mean: f64 = n.branches.iter().zip(incr).map(|(b, m)| b.prob * m).sum();
            worst = worst.max(mean.abs());
            let d = n.branches.first().map(|b| b.brownian.len()).unwrap_or(0);
            for i in 0..d {
                let c: f64 = n
                    .branches
                    .iter()
                    .zip(incr)
                    .map(|(b, m)| b.prob * m * b.brownian[i])
                    .sum();
                worst = worst.max(c.abs());
            }
            for j in 0..tree.marks().len() {
                let c: f64 = n
                    .branches
                    .iter()
                    .zip(incr)
                    .map(|(b, m)| b.prob * m * b.compensated[j])
                    .sum();
                worst = worst.max(c.abs());
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Implicit scalar step
// ---------------------------------------------------------------------------

/// Penalization drift added to the driver inside the scalar solve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Penalty {
    pub n: f64,
    pub side: BarrierSide,
    /// Barrier value at the node.
    pub level: f64,
}

impl Penalty {
    /// `n (y - L)^-` for a lower barrier, `-n (y - U)^+` for an upper one.
    fn drift(&self, y: f64) -> f64 {
        match self.side {
            BarrierSide::Lower => self.n * (self.level - y).max(0.0),
            BarrierSide::Upper => -self.n * (y - self.level).max(0.0),
        }
    }

    /// Derivative contribution to `h'(y)` (always nonnegative).
    fn slope_gain(&self, y: f64) -> f64 {
        match self.side {
            BarrierSide::Lower => {
                if y < self.level {
                    self.n
                } else {
                    0.0
                }
            }
            BarrierSide::Upper => {
                if y > self.level {
                    self.n
                } else {
                    0.0
                }
            }
        }
    }
}

/// All inputs of the implicit solve at one node.
pub(crate) struct ImplicitStep<'a> {
    pub tree: &'a ScenarioTree,
    pub data: &'a ProblemData,
    pub node: NodeId,
    /// Conditional expectation of the next-layer values.
    pub expected: f64,
    pub z: &'a [f64],
    pub v: &'a [f64],
    pub penalty: Option<Penalty>,
}

impl ImplicitStep<'_> {
    fn layer(&self) -> usize {
        self.tree.node(self.node).layer
    }

    fn dt(&self) -> f64 {
        self.tree.grid().dt(self.layer())
    }

    fn da(&self) -> f64 {
        self.tree.node(self.node).a_increment
    }

    fn t(&self) -> f64 {
        self.tree.grid().instant(self.layer())
    }

    /// `h(y) = y - f(y) dt - pen(y) dt - g(y) dA - E[next]`; strictly
    /// increasing under the step-size condition.
    pub fn h(&self, y: f64) -> f64 {
        let q = self.tree.marks().weights();
        let f = self.data.driver.f.evaluate(self.t(), y, self.z, self.v, &q);
        let g = self.data.driver.g.evaluate(self.t(), y);
        let pen = self.penalty.map(|p| p.drift(y)).unwrap_or(0.0);
        y - (f + pen) * self.dt() - g * self.da() - self.expected
    }

    fn h_prime(&self, y: f64) -> f64 {
        let dt = self.dt();
        let da = self.da();
        let df_dy = match self.data.driver.f {
            DriverForm::Linear { a, .. } => a,
            DriverForm::MonotoneCubic { cube, a, .. } => -3.0 * cube * y * y + a,
        };
        let pen_gain = self.penalty.map(|p| p.slope_gain(y)).unwrap_or(0.0);
        1.0 - df_dy * dt - self.data.driver.g.slope * da + pen_gain * dt
    }

    /// Check `1 - alpha dt - beta dA > 0` with the declared constants.
    pub fn check_step_size(&self) -> Result<()> {
        let margin = 1.0 - self.data.driver.alpha * self.dt() - self.data.driver.beta * self.da();
        if margin <= 0.0 {
            return Err(Error::NonMonotoneStep { layer: self.layer(), margin });
        }
        Ok(())
    }

    /// Solve `h(y) = 0`.
    ///
    /// Piecewise-linear drivers (the linear form, possibly with the
    /// penalization kink) are solved in closed form; everything else goes
    /// through a bracketing bisection/Newton hybrid. The bracket starts at
    /// `[E - R, E + R]` and doubles `R` until it straddles the root.
    pub fn solve(&self) -> Result<f64> {
        self.check_step_size()?;
        if let DriverForm::Linear { a, b, c, h0, h1 } = self.data.driver.f {
            let dt = self.dt();
            let da = self.da();
            let q = self.tree.marks().weights();
            let zsum: f64 = self.z.iter().sum();
            let vq: f64 = self.v.iter().zip(&q).map(|(vj, qj)| vj * qj).sum();
            let f_const = b * zsum + c * vq + h0 + h1 * self.t();
            let g_const = self.data.driver.g.h0 + self.data.driver.g.h1 * self.t();
            let g_slope = self.data.driver.g.slope;
            let base_num = self.expected + f_const * dt + g_const * da;
            let base_den = 1.0 - a * dt - g_slope * da;
            // the true margin, in case the declared constants understate the
            // actual slopes
            if base_den <= 0.0 {
                return Err(Error::NonMonotoneStep { layer: self.layer(), margin: base_den });
            }
            match self.penalty {
                None => return Ok(base_num / base_den),
                Some(p) => {
                    // Try the un-kinked branch first, then the penalized one.
                    let free = base_num / base_den;
                    let active = match p.side {
                        BarrierSide::Lower => free < p.level,
                        BarrierSide::Upper => free > p.level,
                    };
                    if !active {
                        return Ok(free);
                    }
                    let num = base_num + p.n * dt * p.level;
                    let den = base_den + p.n * dt;
                    return Ok(num / den);
                }
            }
        }
        self.solve_bracketed()
    }

    fn solve_bracketed(&self) -> Result<f64> {
        let center = self.expected;
        let mut radius = 1.0 + center.abs();
        let (mut lo, mut hi);
        let mut expansions = 0;
        loop {
            lo = center - radius;
            hi = center + radius;
            if self.h(lo) <= 0.0 && self.h(hi) >= 0.0 {
                break;
            }
            radius *= 2.0;
            expansions += 1;
            if expansions > 200 {
                return Err(Error::SolverFailure {
                    node: self.node,
                    reason: "could not bracket the implicit root".into(),
                });
            }
        }
        let mut x = center;
        let mut best = (x, self.h(x).abs());
        for _ in 0..200 {
            let fx = self.h(x);
            if fx.abs() < best.1 {
                best = (x, fx.abs());
            }
            if fx == 0.0 {
                return Ok(x);
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = self.h_prime(x);
            let mut next = if slope > 0.0 { x - fx / slope } else { f64::NAN };
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if next == x || hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
                break;
            }
            x = next;
        }
        Ok(best.0)
    }
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

/// Output of one implicit backward step at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub y: f64,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    /// Orthogonal residual per outgoing branch.
    pub m_increments: Vec<f64>,
    /// `|h(y)|` of the solved equation.
    pub residual: f64,
}

/// Solve one backward step at `node` given the next-layer values.
pub fn backward_step(
    tree: &ScenarioTree,
    data: &ProblemData,
    node: NodeId,
    next: &NodeValues,
) -> Result<StepResult> {
    backward_step_inner(tree, data, node, next, None, None)
}

pub(crate) fn backward_step_inner(
    tree: &ScenarioTree,
    data: &ProblemData,
    node: NodeId,
    next: &NodeValues,
    penalty: Option<Penalty>,
    frozen_zv: Option<(&[f64], &[f64])>,
) -> Result<StepResult> {
    let expected = node_expectation(tree, next, node)?;
    let n = tree.node(node);
    let mu: Vec<f64> = n
        .branches
        .iter()
        .map(|b| next.get(b.child).expect("checked by node_expectation") - expected)
        .collect();
    let dec = martingale_decompose(tree, node, &mu)?;
    let (z_used, v_used) = match frozen_zv {
        Some((z, v)) => (z, v),
        None => (dec.z.as_slice(), dec.v.as_slice()),
    };
    let step = ImplicitStep { tree, data, node, expected, z: z_used, v: v_used, penalty };
    let y = step.solve()?;
    let residual = step.h(y).abs();
    Ok(StepResult { y, z: dec.z, v: dec.v, m_increments: dec.residual, residual })
}

/// Full backward sweep for the unreflected equation (any barrier on the data
/// is ignored).
pub fn solve_gbsde(tree: &ScenarioTree, data: &ProblemData) -> Result<GBSDESolution> {
    solve_gbsde_inner(tree, data, None, None)
}

pub(crate) fn solve_gbsde_inner(
    tree: &ScenarioTree,
    data: &ProblemData,
    penalty_of: Option<&dyn Fn(NodeId) -> Penalty>,
    frozen: Option<(&VectorValues, &VectorValues)>,
) -> Result<GBSDESolution> {
    let mut sol = GBSDESolution::empty(tree);
    let last = tree.num_layers() - 1;
    for &id in tree.layer(last) {
        let xi = data.terminal.require(tree, id)?;
        sol.y.set(id, xi);
    }
    for k in (0..last).rev() {
        for &uid in tree.layer(k) {
            let frozen_zv = match frozen {
                Some((z0, v0)) => Some((z0.require(tree, uid)?, v0.require(tree, uid)?)),
                None => None,
            };
            let step = backward_step_inner(
                tree,
                data,
                uid,
                &sol.y,
                penalty_of.map(|p| p(uid)),
                frozen_zv,
            )?;
            sol.y.set(uid, step.y);
            sol.z.set(uid, step.z);
            sol.v.set(uid, step.v);
            sol.m_increments.set(uid, step.m_increments);
            sol.residuals.set(uid, step.residual);
        }
    }
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

/// Options of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub max_iters: usize,
    /// Stop when the weighted norm (squared) of the difference of successive
    /// iterates drops to or below this.
    pub tol: f64,
    pub norm_cfg: WeightedNormConfig,
}

impl PicardOptions {
    pub fn new(max_iters: usize, tol: f64, norm_cfg: WeightedNormConfig) -> Self {
        PicardOptions { max_iters, tol, norm_cfg }
    }
}

/// History and outcome of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    /// Iterates `x^1, x^2, ...`; iterate `i` solves the equation with `f`
    /// frozen at iterate `i-1`'s `(Z, V)` (the supplied initial pair for
    /// `i = 1`).
    pub iterates: Vec<GBSDESolution>,
    /// Squared weighted norms of successive differences.
    pub diff_norms_sq: Vec<f64>,
    pub converged: bool,
}

impl PicardOutcome {
    pub fn solution(&self) -> &GBSDESolution {
        self.iterates.last().expect("at least one iterate")
    }
}

/// Run the fixed-point map: solve with `(Z, V)` frozen at the previous
/// iterate, starting from `initial` (zeroes when `None`).
///
/// Non-convergence within `max_iters` is reported through the outcome, not
/// as an error.
pub fn picard_solve(
    tree: &ScenarioTree,
    data: &ProblemData,
    initial: Option<(VectorValues, VectorValues)>,
    opts: &PicardOptions,
) -> Result<PicardOutcome> {
    assert!(opts.max_iters >= 1, "at least one iteration required");
    let (mut z_prev, mut v_prev) = initial.unwrap_or_else(|| {
        let mut z = VectorValues::new(tree, tree.brownian_dim());
        let mut v = VectorValues::new(tree, tree.marks().len());
        for k in 0..tree.num_layers() - 1 {
            for &uid in tree.layer(k) {
                z.set(uid, vec![0.0; tree.brownian_dim()]);
                v.set(uid, vec![0.0; tree.marks().len()]);
            }
        }
        (z, v)
    });

    let mut iterates: Vec<GBSDESolution> = Vec::new();
    let mut diff_norms_sq = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let next = solve_gbsde_inner(tree, data, None, Some((&z_prev, &v_prev)))?;
        if let Some(prev) = iterates.last() {
            let d = solution_difference_norm_sq(tree, prev, &next, &opts.norm_cfg);
            diff_norms_sq.push(d);
            if d <= opts.tol {
                iterates.push(next);
                converged = true;
                break;
            }
        }
        z_prev = next.z.clone();
        v_prev = next.v.clone();
        iterates.push(next);
    }
    Ok(PicardOutcome { iterates, diff_norms_sq, converged })
}
