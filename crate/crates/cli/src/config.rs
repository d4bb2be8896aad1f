//! Experiment configuration: JSON schema, validation, and assembly of the
//! tree and problem data.
//!
//! Validation collects *all* violations (with JSON-pointer paths) instead of
//! stopping at the first, and re-checks every numeric constraint the library
//! modules rely on.

// Validation checks use `!(x <= bound)` so NaN inputs count as violations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::Deserialize;

use grbsde_core::model::{
    Barrier, BarrierSide, DriverForm, DriverSpec, GForm, ProblemData, DEFAULT_SAMPLE_BOX,
};
use grbsde_core::scenario::{
    build_tree, ASchedule, MarkSpec, NodeValues, ScenarioTree, TreeConfig,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tree: TreeSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub steps: usize,
    pub horizon: f64,
    #[serde(default)]
    pub instants: Option<Vec<f64>>,
    #[serde(default)]
    pub brownian_dim: usize,
    #[serde(default)]
    pub marks: Vec<MarkSpec>,
    #[serde(default)]
    pub extra_factor: bool,
    #[serde(default)]
    pub a_schedule: AScheduleSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AScheduleSection {
    #[default]
    Zero,
    Uniform {
        total: f64,
    },
    Deterministic {
        increments: Vec<f64>,
    },
    MarkDriven {
        base: f64,
        per_arrival: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub driver: DriverSection,
    pub terminal: TerminalRule,
    #[serde(default)]
    pub barrier: BarrierRule,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    pub f: DriverForm,
    pub g: GForm,
}

/// Terminal-condition rules, evaluated on the cumulative noise coordinates.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalRule {
    Constant { value: f64 },
    /// `intercept + sum_i brownian[i] B^i_T + sum_j marks[j] N~^j_T`.
    Linear {
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        brownian: Vec<f64>,
        #[serde(default)]
        marks: Vec<f64>,
    },
    /// `(B^dim_T - strike)^+`.
    Call {
        #[serde(default)]
        dim: usize,
        strike: f64,
    },
    /// `(strike - B^dim_T)^+`.
    Put {
        #[serde(default)]
        dim: usize,
        strike: f64,
    },
    /// `|B^dim_T|`.
    AbsBrownian {
        #[serde(default)]
        dim: usize,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierRule {
    #[default]
    None,
    Constant {
        side: BarrierSide,
        value: f64,
        #[serde(default)]
        jump_flags: Vec<usize>,
    },
    /// `value(t) = terminal + slope * (T - t)`.
    TimeLinear {
        side: BarrierSide,
        terminal: f64,
        slope: f64,
        #[serde(default)]
        jump_flags: Vec<usize>,
    },
    /// One value per layer.
    PerLayer {
        side: BarrierSide,
        values: Vec<f64>,
        #[serde(default)]
        jump_flags: Vec<usize>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_enum_cap")]
    pub enumeration_cap: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_picard_iters")]
    pub picard_max_iters: usize,
    /// Ordered bumps applied by the `compare` subcommand.
    #[serde(default)]
    pub comparison: ComparisonShifts,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonShifts {
    #[serde(default = "default_shift")]
    pub terminal: f64,
    #[serde(default = "default_shift")]
    pub f_intercept: f64,
    #[serde(default = "default_shift")]
    pub g_intercept: f64,
}

fn default_shift() -> f64 {
    0.25
}

impl Default for ComparisonShifts {
    fn default() -> Self {
        ComparisonShifts { terminal: 0.25, f_intercept: 0.25, g_intercept: 0.25 }
    }
}

fn default_seed() -> u64 {
    42
}
fn default_n_list() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0, 10000.0]
}
fn default_p_list() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_enum_cap() -> u64 {
    1_000_000
}
fn default_samples() -> usize {
    500
}
fn default_picard_iters() -> usize {
    8
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            n_list: default_n_list(),
            p_list: default_p_list(),
            tolerance: default_tolerance(),
            enumeration_cap: default_enum_cap(),
            samples: default_samples(),
            picard_max_iters: default_picard_iters(),
            comparison: ComparisonShifts::default(),
        }
    }
}

/// One validation violation with its JSON-pointer path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

impl ExperimentConfig {
    /// Parse and validate; returns every violation found, not just the first.
    pub fn from_json(text: &str) -> Result<Self, Vec<Violation>> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            vec![Violation { pointer: "/".into(), message: format!("malformed JSON config: {e}") }]
        })?;
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(violations)
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let t = &self.tree;
        if t.steps == 0 {
            out.push(Violation {
                pointer: "/tree/steps".into(),
                message: "at least one time step is required".into(),
            });
        }
        if !(t.horizon > 0.0) {
            out.push(Violation {
                pointer: "/tree/horizon".into(),
                message: "horizon must be positive".into(),
            });
        }
        if let Some(instants) = &t.instants {
            if instants.len() != t.steps + 1 {
                out.push(Violation {
                    pointer: "/tree/instants".into(),
                    message: format!("expected {} entries", t.steps + 1),
                });
            }
            if instants.windows(2).any(|w| w[1] <= w[0]) {
                out.push(Violation {
                    pointer: "/tree/instants".into(),
                    message: "instants must be strictly increasing".into(),
                });
            }
        }
        let max_dt = if t.steps > 0 {
            match &t.instants {
                Some(i) => i.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
                None => t.horizon / t.steps as f64,
            }
        } else {
            t.horizon
        };
        for (j, m) in t.marks.iter().enumerate() {
            if m.weight < 0.0 {
                out.push(Violation {
                    pointer: format!("/tree/marks/{j}/weight"),
                    message: "intensity weight must be >= 0".into(),
                });
            } else if m.weight * max_dt >= 1.0 {
                out.push(Violation {
                    pointer: format!("/tree/marks/{j}"),
                    message: format!(
                        "per-step arrival probability q*dt = {:.6} must stay below 1",
                        m.weight * max_dt
                    ),
                });
            }
        }
        match &t.a_schedule {
            AScheduleSection::Uniform { total } if *total < 0.0 => out.push(Violation {
                pointer: "/tree/a_schedule/total".into(),
                message: "A must be nondecreasing: total >= 0".into(),
            }),
            AScheduleSection::Deterministic { increments } => {
                if increments.len() != t.steps {
                    out.push(Violation {
                        pointer: "/tree/a_schedule/increments".into(),
                        message: format!("expected {} increments", t.steps),
                    });
                }
                for (k, d) in increments.iter().enumerate() {
                    if *d < 0.0 {
                        out.push(Violation {
                            pointer: format!("/tree/a_schedule/increments/{k}"),
                            message: "A must be nondecreasing: increment >= 0".into(),
                        });
                    }
                }
            }
            AScheduleSection::MarkDriven { base, per_arrival } => {
                if *base < 0.0 || *per_arrival < 0.0 {
                    out.push(Violation {
                        pointer: "/tree/a_schedule".into(),
                        message: "A must be nondecreasing: base and per_arrival >= 0".into(),
                    });
                }
                if t.marks.is_empty() {
                    out.push(Violation {
                        pointer: "/tree/a_schedule".into(),
                        message: "mark-driven schedule needs at least one mark".into(),
                    });
                }
            }
            _ => {}
        }

        let p = &self.problem;
        if p.driver.g.slope > 0.0 {
            out.push(Violation {
                pointer: "/problem/driver/g/slope".into(),
                message: "monotonicity of g requires a nonpositive slope (beta < 0)".into(),
            });
        }
        if let DriverForm::MonotoneCubic { cube, .. } = p.driver.f {
            if cube < 0.0 {
                out.push(Violation {
                    pointer: "/problem/driver/f/cube".into(),
                    message: "cubic coefficient must be >= 0 for monotonicity".into(),
                });
            }
        }
        if !(p.mu > 1.0) {
            out.push(Violation {
                pointer: "/problem/mu".into(),
                message: "weight exponent mu must exceed 1".into(),
            });
        }
        match &p.terminal {
            TerminalRule::Linear { brownian, marks, .. } => {
                if brownian.len() > t.brownian_dim {
                    out.push(Violation {
                        pointer: "/problem/terminal/brownian".into(),
                        message: format!("at most {} coefficients", t.brownian_dim),
                    });
                }
                if marks.len() > t.marks.len() {
                    out.push(Violation {
                        pointer: "/problem/terminal/marks".into(),
                        message: format!("at most {} coefficients", t.marks.len()),
                    });
                }
            }
            TerminalRule::Call { dim, .. }
            | TerminalRule::Put { dim, .. }
            | TerminalRule::AbsBrownian { dim } => {
                if *dim >= t.brownian_dim {
                    out.push(Violation {
                        pointer: "/problem/terminal/dim".into(),
                        message: format!("Brownian dimension {dim} not available"),
                    });
                }
            }
            TerminalRule::Constant { .. } => {}
        }
        if let BarrierRule::PerLayer { values, .. } = &p.barrier {
            if values.len() != t.steps + 1 {
                out.push(Violation {
                    pointer: "/problem/barrier/values".into(),
                    message: format!("expected {} per-layer values", t.steps + 1),
                });
            }
        }
        let flags = match &p.barrier {
            BarrierRule::None => &[][..],
            BarrierRule::Constant { jump_flags, .. }
            | BarrierRule::TimeLinear { jump_flags, .. }
            | BarrierRule::PerLayer { jump_flags, .. } => jump_flags,
        };
        for (i, k) in flags.iter().enumerate() {
            if *k > t.steps {
                out.push(Violation {
                    pointer: format!("/problem/barrier/jump_flags/{i}"),
                    message: format!("time index {k} beyond the last layer {}", t.steps),
                });
            }
        }

        let r = &self.run;
        if r.n_list.is_empty() || r.n_list.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation {
                pointer: "/run/n_list".into(),
                message: "penalty schedule must be nonempty and strictly increasing".into(),
            });
        }
        if r.p_list.iter().any(|p| *p < 1.0) {
            out.push(Violation {
                pointer: "/run/p_list".into(),
                message: "hitting-policy levels must satisfy p >= 1".into(),
            });
        }
        if !(r.tolerance > 0.0) {
            out.push(Violation {
                pointer: "/run/tolerance".into(),
                message: "tolerance must be positive".into(),
            });
        }
        if r.samples == 0 {
            out.push(Violation {
                pointer: "/run/samples".into(),
                message: "at least one sample".into(),
            });
        }
        if r.comparison.terminal < 0.0
            || r.comparison.f_intercept < 0.0
            || r.comparison.g_intercept < 0.0
        {
            out.push(Violation {
                pointer: "/run/comparison".into(),
                message: "ordered bumps must be nonnegative".into(),
            });
        }
        out
    }

    pub fn build_tree(&self) -> grbsde_core::Result<ScenarioTree> {
        let t = &self.tree;
        let a_schedule = match &t.a_schedule {
            AScheduleSection::Zero => ASchedule::zero(t.steps),
            AScheduleSection::Uniform { total } => ASchedule::uniform(t.steps, *total),
            AScheduleSection::Deterministic { increments } => {
                ASchedule::Deterministic { increments: increments.clone() }
            }
            AScheduleSection::MarkDriven { base, per_arrival } => {
                ASchedule::MarkDriven { base: *base, per_arrival: *per_arrival }
            }
        };
        build_tree(&TreeConfig {
            steps: t.steps,
            horizon: t.horizon,
            instants: t.instants.clone(),
            brownian_dim: t.brownian_dim,
            marks: t.marks.clone(),
            extra_factor: t.extra_factor,
            a_schedule,
            max_nodes: None,
        })
    }

    pub fn build_problem(&self, tree: &ScenarioTree) -> grbsde_core::Result<ProblemData> {
        let p = &self.problem;
        let driver = DriverSpec::tight(
            p.driver.f.clone(),
            p.driver.g.clone(),
            tree.brownian_dim(),
            &tree.marks().weights(),
            DEFAULT_SAMPLE_BOX,
        )?;
        let last = tree.num_layers() - 1;
        let terminal = NodeValues::on_layer(tree, last, |id| match &p.terminal {
            TerminalRule::Constant { value } => *value,
            TerminalRule::Linear { intercept, brownian, marks } => {
                intercept
                    + brownian
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c * tree.brownian_total(id, i))
                        .sum::<f64>()
                    + marks
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * tree.compensated_total(id, j))
                        .sum::<f64>()
            }
            TerminalRule::Call { dim, strike } => (tree.brownian_total(id, *dim) - strike).max(0.0),
            TerminalRule::Put { dim, strike } => (strike - tree.brownian_total(id, *dim)).max(0.0),
            TerminalRule::AbsBrownian { dim } => tree.brownian_total(id, *dim).abs(),
        });
        let barrier = match &p.barrier {
            BarrierRule::None => None,
            BarrierRule::Constant { side, value, jump_flags } => Some(Barrier {
                side: *side,
                values: NodeValues::constant(tree, *value),
                jump_flags: jump_flags.clone(),
            }),
            BarrierRule::TimeLinear { side, terminal, slope, jump_flags } => {
                let horizon = tree.grid().horizon();
                Some(Barrier {
                    side: *side,
                    values: NodeValues::from_fn(tree, |id| {
                        let t = tree.grid().instant(tree.node(id).layer);
                        terminal + slope * (horizon - t)
                    }),
                    jump_flags: jump_flags.clone(),
                })
            }
            BarrierRule::PerLayer { side, values, jump_flags } => Some(Barrier {
                side: *side,
                values: NodeValues::from_fn(tree, |id| values[tree.node(id).layer]),
                jump_flags: jump_flags.clone(),
            }),
        };
        let mut data = ProblemData::new(tree, terminal, driver).with_mu(p.mu);
        if let Some(b) = barrier {
            data = data.with_barrier(b);
        }
        Ok(data)
    }
}
