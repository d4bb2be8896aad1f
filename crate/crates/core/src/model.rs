//! Problem data `(ξ, f, g, A, L or U)` and numeric verification of the
//! structural assumptions on the coefficients.
//!
//! The generator `f(t, y, z, v)` is monotone in `y` with constant `alpha`,
//! Lipschitz in `(z, v)` with constant `kappa` (the same `kappa` bounds the
//! linear growth of `f(t, ., 0, 0)` and of `g`), and `g(t, y)` is monotone
//! with constant `beta < 0`. The bound processes `phi, psi >= 1` dominate the
//! driver values at the origin. `check_assumptions` spot-checks all of this
//! on random tuples and verifies the barrier/terminal compatibility exactly
//! on every terminal node.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{NodeId, NodeValues, ScenarioTree};

/// Default half-width of the sampling box for assumption checks.
pub const DEFAULT_SAMPLE_BOX: f64 = 10.0;

// ---------------------------------------------------------------------------
// Driver forms
// ---------------------------------------------------------------------------

/// Built-in functional forms for `f(t, y, z, v)`.
///
/// The `z` term is `b * sum_i z_i`, the `v` term is `c * <v, q> = c * sum_j q_j v_j`
/// (the `L^2_Q` pairing with the constant function 1), and `h(t) = h0 + h1 t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DriverForm {
    Linear { a: f64, b: f64, c: f64, h0: f64, h1: f64 },
    /// `f = -cube * y^3 + a*y + b*sum(z) + c*<v,q> + h(t)` with `cube >= 0`.
    MonotoneCubic { cube: f64, a: f64, b: f64, c: f64, h0: f64, h1: f64 },
}

impl DriverForm {
    pub fn zero() -> Self {
        DriverForm::Linear { a: 0.0, b: 0.0, c: 0.0, h0: 0.0, h1: 0.0 }
    }

    pub fn linear_in_y(a: f64) -> Self {
        DriverForm::Linear { a, b: 0.0, c: 0.0, h0: 0.0, h1: 0.0 }
    }

    pub fn constant(h0: f64) -> Self {
        DriverForm::Linear { a: 0.0, b: 0.0, c: 0.0, h0, h1: 0.0 }
    }

    pub fn evaluate(&self, t: f64, y: f64, z: &[f64], v: &[f64], q: &[f64]) -> f64 {
        let zsum: f64 = z.iter().sum();
        let vq: f64 = v.iter().zip(q).map(|(vj, qj)| vj * qj).sum();
        match *self {
            DriverForm::Linear { a, b, c, h0, h1 } => a * y + b * zsum + c * vq + h0 + h1 * t,
            DriverForm::MonotoneCubic { cube, a, b, c, h0, h1 } => {
                -cube * y * y * y + a * y + b * zsum + c * vq + h0 + h1 * t
            }
        }
    }

    /// Whether the form depends on `z` or `v`.
    pub fn depends_on_zv(&self) -> bool {
        match *self {
            DriverForm::Linear { b, c, .. } | DriverForm::MonotoneCubic { b, c, .. } => {
                b != 0.0 || c != 0.0
            }
        }
    }

    /// Whether the form depends on `v`.
    pub fn depends_on_v(&self) -> bool {
        match *self {
            DriverForm::Linear { c, .. } | DriverForm::MonotoneCubic { c, .. } => c != 0.0,
        }
    }

    /// Mirror image `f~(t,y,z,v) = -f(t,-y,-z,-v)`; the built-in family is
    /// closed under it (only the inhomogeneous part flips sign).
    pub fn mirrored(&self) -> Self {
        match *self {
            DriverForm::Linear { a, b, c, h0, h1 } => {
                DriverForm::Linear { a, b, c, h0: -h0, h1: -h1 }
            }
            DriverForm::MonotoneCubic { cube, a, b, c, h0, h1 } => {
                DriverForm::MonotoneCubic { cube, a, b, c, h0: -h0, h1: -h1 }
            }
        }
    }

    fn sup_inhomogeneous(&self, horizon: f64) -> f64 {
        let (h0, h1) = match *self {
            DriverForm::Linear { h0, h1, .. } | DriverForm::MonotoneCubic { h0, h1, .. } => {
                (h0, h1)
            }
        };
        f64::max(h0.abs(), (h0 + h1 * horizon).abs())
    }
}

/// Built-in form for `g(t, y) = slope * y + h0 + h1 t`, `slope < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GForm {
    pub slope: f64,
    pub h0: f64,
    pub h1: f64,
}

impl GForm {
    /// `g ≡ 0` (for problems whose clock `A` is flat the `dA` term is inert).
    pub fn zero() -> Self {
        GForm { slope: 0.0, h0: 0.0, h1: 0.0 }
    }

    pub fn linear(slope: f64) -> Self {
        GForm { slope, h0: 0.0, h1: 0.0 }
    }

    pub fn evaluate(&self, t: f64, y: f64) -> f64 {
        self.slope * y + self.h0 + self.h1 * t
    }

    pub fn mirrored(&self) -> Self {
        GForm { slope: self.slope, h0: -self.h0, h1: -self.h1 }
    }

    fn sup_inhomogeneous(&self, horizon: f64) -> f64 {
        f64::max(self.h0.abs(), (self.h0 + self.h1 * horizon).abs())
    }
}

/// A driver with declared structural constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub f: DriverForm,
    pub g: GForm,
    /// Monotonicity constant of `f` in `y`.
    pub alpha: f64,
    /// Monotonicity constant of `g` in `y`; must be `< 0`.
    pub beta: f64,
    /// Lipschitz constant of `f` in `(z, v)` and linear-growth slope of both
    /// drivers.
    pub kappa: f64,
}

impl DriverSpec {
    /// Declare tight (or minimally conservative) constants for the built-in
    /// forms on a tree with Brownian dimension `d` and mark weights `q`.
    ///
    /// * `alpha` is the `y`-slope `a` (the cubic term only improves it),
    /// * `beta` is the `g` slope,
    /// * `kappa` bounds the `(z, v)` Lipschitz constants
    ///   (`|b| sqrt(d)`, `|c| ||1||_Q`) and the growth slopes of `f` and `g`
    ///   over the sampling box `[-growth_box, growth_box]`.
    pub fn tight(f: DriverForm, g: GForm, d: usize, q: &[f64], growth_box: f64) -> Result<Self> {
        // Strictly the monotonicity constant of g is negative; slope 0 is
        // accepted for problems with a flat clock where g never acts.
        if !(g.slope <= 0.0) {
            return Err(Error::InvalidData(format!(
                "g slope must be <= 0 (monotonicity), got {}",
                g.slope
            )));
        }
        let q_one_norm: f64 = q.iter().sum::<f64>().sqrt();
        let (a, b, c, growth_slope) = match f {
            DriverForm::Linear { a, b, c, .. } => (a, b, c, a.abs()),
            DriverForm::MonotoneCubic { cube, a, b, c, .. } => {
                if cube < 0.0 {
                    return Err(Error::InvalidData("cubic coefficient must be >= 0".into()));
                }
                (a, b, c, a.abs() + cube * growth_box * growth_box)
            }
        };
        let lipschitz = f64::max(b.abs() * (d as f64).sqrt(), c.abs() * q_one_norm);
        let kappa = [lipschitz, growth_slope, g.slope.abs(), 1e-6]
            .into_iter()
            .fold(0.0_f64, f64::max);
        let beta = g.slope;
        Ok(DriverSpec { f, g, alpha: a, beta, kappa })
    }

    pub fn mirrored(&self) -> Self {
        DriverSpec {
            f: self.f.mirrored(),
            g: self.g.mirrored(),
            alpha: self.alpha,
            beta: self.beta,
            kappa: self.kappa,
        }
    }
}

// ---------------------------------------------------------------------------
// Barriers and problem data
// ---------------------------------------------------------------------------

/// Which side the obstacle acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierSide {
    Lower,
    Upper,
}

/// An obstacle process with optional scheduled-jump annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub side: BarrierSide,
    pub values: NodeValues,
    /// Time indices `k` at which the barrier has a scheduled (predictable)
    /// down-jump (lower case; up-jump for an upper barrier). Used only by the
    /// `K`-decomposition: on a grid every change is a jump, so the
    /// predictable/inaccessible distinction must be declared, not inferred.
    pub jump_flags: Vec<usize>,
}

impl Barrier {
    pub fn lower(values: NodeValues) -> Self {
        Barrier { side: BarrierSide::Lower, values, jump_flags: Vec::new() }
    }

    pub fn upper(values: NodeValues) -> Self {
        Barrier { side: BarrierSide::Upper, values, jump_flags: Vec::new() }
    }

    pub fn with_flags(mut self, flags: Vec<usize>) -> Self {
        self.jump_flags = flags;
        self
    }
}

/// Full problem data for one (G)BSDE on a given tree.
#[derive(Debug, Clone)]
pub struct ProblemData {
    /// Terminal condition on the last layer.
    pub terminal: NodeValues,
    pub driver: DriverSpec,
    pub barrier: Option<Barrier>,
    /// Weight exponent `mu > 1` of the exponential `A`-weights.
    pub mu: f64,
    /// Bound process `phi >= 1` for `f(t, ., 0, 0)`.
    pub phi: NodeValues,
    /// Bound process `psi >= 1` for `g`.
    pub psi: NodeValues,
}

impl ProblemData {
    /// Data with constant bound processes and `mu = 2`. The defaults are the
    /// constant 1 raised just enough to dominate the drivers' inhomogeneous
    /// parts, so the growth bound holds for every valid built-in form.
    pub fn new(tree: &ScenarioTree, terminal: NodeValues, driver: DriverSpec) -> Self {
        let horizon = tree.grid().horizon();
        let phi_level = driver.f.sup_inhomogeneous(horizon).max(1.0);
        let psi_level = driver.g.sup_inhomogeneous(horizon).max(1.0);
        ProblemData {
            terminal,
            driver,
            barrier: None,
            mu: 2.0,
            phi: NodeValues::constant(tree, phi_level),
            psi: NodeValues::constant(tree, psi_level),
        }
    }

    pub fn with_barrier(mut self, barrier: Barrier) -> Self {
        self.barrier = Some(barrier);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Barrier of a specific side, or an error naming what is missing.
    pub fn barrier_of(&self, side: BarrierSide) -> Result<&Barrier> {
        match &self.barrier {
            Some(b) if b.side == side => Ok(b),
            _ => Err(Error::MissingBarrier(format!("{side:?} barrier required"))),
        }
    }

    /// The mirror problem: upper-barrier data mapped to lower-barrier data
    /// (or vice versa) with `ξ -> -ξ`, `f -> f~`, `g -> g~`, `L/U -> -U/-L`.
    pub fn mirrored(&self) -> Self {
        let barrier = self.barrier.as_ref().map(|b| Barrier {
            side: match b.side {
                BarrierSide::Lower => BarrierSide::Upper,
                BarrierSide::Upper => BarrierSide::Lower,
            },
            values: b.values.map(|x| -x),
            jump_flags: b.jump_flags.clone(),
        });
        ProblemData {
            terminal: self.terminal.map(|x| -x),
            driver: self.driver.mirrored(),
            barrier,
            mu: self.mu,
            phi: self.phi.clone(),
            psi: self.psi.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluate the driver `f` at layer `k` of the tree.
///
/// `v` must carry one entry per mark.
pub fn evaluate_f(
    data: &ProblemData,
    tree: &ScenarioTree,
    k: usize,
    y: f64,
    z: &[f64],
    v: &[f64],
) -> Result<f64> {
    let m = tree.marks().len();
    if v.len() != m {
        return Err(Error::MarkDimensionError { expected: m, got: v.len() });
    }
    let t = tree.grid().instant(k);
    Ok(data.driver.f.evaluate(t, y, z, v, &tree.marks().weights()))
}

/// Evaluate the driver `g` at layer `k` of the tree.
pub fn evaluate_g(data: &ProblemData, tree: &ScenarioTree, k: usize, y: f64) -> f64 {
    data.driver.g.evaluate(tree.grid().instant(k), y)
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

/// What one sampled witness looked like when a check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub node: Option<NodeId>,
    pub y: f64,
    pub y_prime: f64,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub violation: f64,
}

/// Result of one assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst violation magnitude seen (0 when everything passed).
    pub max_violation: f64,
    pub witness: Option<Witness>,
}

/// Report over all assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<CheckOutcome>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn outcome(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Numerical slack allowed on the sampled inequalities.
const CHECK_TOL: f64 = 1e-10;

/// Spot-check the structural assumptions on `samples` random tuples drawn
/// from the box `[-sample_box, sample_box]` per coordinate, plus exact
/// terminal/barrier compatibility on every terminal node. Deterministic
/// given the seed; failures are reported, never thrown.
pub fn check_assumptions(
    data: &ProblemData,
    tree: &ScenarioTree,
    samples: usize,
    seed: u64,
) -> AssumptionReport {
    check_assumptions_in_box(data, tree, samples, seed, DEFAULT_SAMPLE_BOX)
}

/// Same as [`check_assumptions`] with an explicit sampling box.
pub fn check_assumptions_in_box(
    data: &ProblemData,
    tree: &ScenarioTree,
    samples: usize,
    seed: u64,
    sample_box: f64,
) -> AssumptionReport {
    assert!(samples >= 1, "at least one sample required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = tree.brownian_dim();
    let m = tree.marks().len();
    let q = tree.marks().weights();
    let horizon = tree.grid().horizon();
    let spec = &data.driver;

    let mut monotone_f = CheckOutcome {
        name: "monotonicity of f in y",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };
    let mut monotone_g = CheckOutcome {
        name: "monotonicity of g in y",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };
    let mut lipschitz = CheckOutcome {
        name: "Lipschitz continuity of f in (z,v)",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };
    let mut growth = CheckOutcome {
        name: "linear growth of f and g",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };

    let floor_of = |vals: &NodeValues| {
        let m = vals.iter_defined().map(|(_, x)| x).fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            1.0
        }
    };
    let phi_floor = floor_of(&data.phi);
    let psi_floor = floor_of(&data.psi);

    let draw = |rng: &mut ChaCha8Rng| rng.random_range(-sample_box..=sample_box);
    for _ in 0..samples {
        let t = rng.random_range(0.0..=horizon);
        let y = draw(&mut rng);
        let y2 = draw(&mut rng);
        let z: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        let z2: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        let v: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let v2: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();

        // monotonicity: (y - y')(f(y) - f(y')) <= alpha |y - y'|^2
        let fy = spec.f.evaluate(t, y, &z, &v, &q);
        let fy2 = spec.f.evaluate(t, y2, &z, &v, &q);
        let lhs = (y - y2) * (fy - fy2) - spec.alpha * (y - y2) * (y - y2);
        if lhs > monotone_f.max_violation {
            monotone_f.max_violation = lhs;
            monotone_f.witness = Some(Witness {
                t,
                node: None,
                y,
                y_prime: y2,
                z: z.clone(),
                v: v.clone(),
                violation: lhs,
            });
        }

        // (y - y')(g(y) - g(y')) <= beta |y - y'|^2
        let gy = spec.g.evaluate(t, y);
        let gy2 = spec.g.evaluate(t, y2);
        let lhs = (y - y2) * (gy - gy2) - spec.beta * (y - y2) * (y - y2);
        if lhs > monotone_g.max_violation {
            monotone_g.max_violation = lhs;
            monotone_g.witness = Some(Witness {
                t,
                node: None,
                y,
                y_prime: y2,
                z: z.clone(),
                v: v.clone(),
                violation: lhs,
            });
        }

        // Lipschitz: |f(z,v) - f(z',v')| <= kappa (||z-z'|| + ||v-v'||_Q)
        let f1 = spec.f.evaluate(t, y, &z, &v, &q);
        let f2 = spec.f.evaluate(t, y, &z2, &v2, &q);
        let dz: f64 = z
            .iter()
            .zip(&z2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let dv_q = {
            let diff: Vec<f64> = v.iter().zip(&v2).map(|(a, b)| a - b).collect();
            tree.marks().q_norm_sq(&diff).sqrt()
        };
        let lhs = (f1 - f2).abs() - spec.kappa * (dz + dv_q);
        if lhs > lipschitz.max_violation {
            lipschitz.max_violation = lhs;
            lipschitz.witness = Some(Witness {
                t,
                node: None,
                y,
                y_prime: y,
                z: z.clone(),
                v: v.clone(),
                violation: lhs,
            });
        }

        // growth: |f(y,0,0)| <= phi + kappa|y|, |g(y)| <= psi + kappa|y|
        let zeros_z = vec![0.0; d];
        let zeros_v = vec![0.0; m];
        let f0 = spec.f.evaluate(t, y, &zeros_z, &zeros_v, &q);
        let lhs_f = f0.abs() - phi_floor - spec.kappa * y.abs();
        let lhs_g = gy.abs() - psi_floor - spec.kappa * y.abs();
        let lhs = f64::max(lhs_f, lhs_g);
        if lhs > growth.max_violation {
            growth.max_violation = lhs;
            growth.witness = Some(Witness {
                t,
                node: None,
                y,
                y_prime: y,
                z: zeros_z,
                v: zeros_v,
                violation: lhs,
            });
        }
    }
    for c in [&mut monotone_f, &mut monotone_g, &mut lipschitz, &mut growth] {
        c.passed = c.max_violation <= CHECK_TOL;
        if c.passed {
            c.witness = None;
            c.max_violation = c.max_violation.max(0.0);
        }
    }

    // terminal vs barrier, exact on all terminal nodes.
    let mut barrier_check = CheckOutcome {
        name: "terminal-barrier compatibility",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };
    if let Some(barrier) = &data.barrier {
        let last = tree.num_layers() - 1;
        for &id in tree.layer(last) {
            let xi = data.terminal.get(id).unwrap_or(f64::NAN);
            let l = barrier.values.get(id).unwrap_or(f64::NAN);
            let gap = match barrier.side {
                BarrierSide::Lower => l - xi,
                BarrierSide::Upper => xi - l,
            };
            if !(gap <= 0.0) {
                barrier_check.passed = false;
                if gap > barrier_check.max_violation || barrier_check.witness.is_none() {
                    barrier_check.max_violation = gap.max(barrier_check.max_violation);
                    barrier_check.witness = Some(Witness {
                        t: tree.grid().horizon(),
                        node: Some(id),
                        y: xi,
                        y_prime: l,
                        z: vec![],
                        v: vec![],
                        violation: gap,
                    });
                }
            }
        }
    }

    // weighted integrability: finite sums on a finite tree,
    // reported as values for reference.
    let mut integrability = CheckOutcome {
        name: "weighted integrability of the data",
        passed: true,
        max_violation: 0.0,
        witness: None,
    };
    let last = tree.num_layers() - 1;
    let mut xi_norm = 0.0;
    for &id in tree.layer(last) {
        let n = tree.node(id);
        let xi = data.terminal.get(id).unwrap_or(f64::NAN);
        xi_norm += n.prob * (data.mu * n.a_value).exp() * xi * xi;
    }
    integrability.passed = xi_norm.is_finite();
    integrability.max_violation = if integrability.passed { 0.0 } else { f64::INFINITY };

    AssumptionReport {
        checks: vec![
            monotone_f,
            monotone_g,
            lipschitz,
            growth,
            barrier_check,
            integrability,
        ],
    }
}
