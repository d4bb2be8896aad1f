//! Subcommand pipelines: each maps one theorem cluster to a run that writes
//! CSV artifacts and a pass/fail summary.

use std::path::Path;

use grbsde_core::analysis::{
    apriori_check, compare_solutions, contraction_rate, solution_difference_norm_sq, SolutionView,
    WeightedNormConfig,
};
use grbsde_core::gbsde::{picard_solve, solve_gbsde, GBSDESolution, PicardOptions};
use grbsde_core::model::{check_assumptions, BarrierSide, DriverForm, DriverSpec, GForm, ProblemData};
use grbsde_core::reflected::{
    check_skorokhod, decompose_k, penalization_sweep, solve_auxiliary, solve_reflected_direct,
};
use grbsde_core::scenario::{NodeValues, ScenarioTree};
use grbsde_core::stopping::{
    count_stopping_times, snell_envelope, verify_representation, RepresentationMethod,
};

use crate::config::ExperimentConfig;
use crate::report::{fmt, CsvWriter, Summary};

pub enum StopMethod {
    Enumerate,
    NuP,
    Both,
}

pub enum Pipeline {
    Solve,
    Penalize,
    Reflect,
    Stop(StopMethod),
    Compare,
    Check,
}

/// Run one experiment; returns whether every asserted invariant passed.
pub fn execute(
    pipeline: Pipeline,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<bool, grbsde_core::Error> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        grbsde_core::Error::InvalidData(format!("cannot create output dir: {e}"))
    })?;
    let tree = cfg.build_tree()?;
    let data = cfg.build_problem(&tree)?;
    let seed = seed_override.unwrap_or(cfg.run.seed);
    let mut summary = Summary::new();
    match pipeline {
        Pipeline::Check => run_check(cfg, &tree, &data, seed, out_dir, &mut summary)?,
        Pipeline::Solve => run_solve(cfg, &tree, &data, out_dir, &mut summary)?,
        Pipeline::Penalize => run_penalize(cfg, &tree, &data, out_dir, &mut summary)?,
        Pipeline::Reflect => run_reflect(&tree, &data, out_dir, &mut summary)?,
        Pipeline::Stop(method) => run_stop(cfg, &tree, &data, method, out_dir, &mut summary)?,
        Pipeline::Compare => run_compare(cfg, &tree, &data, out_dir, &mut summary)?,
    }
    summary.write(out_dir).map_err(|e| {
        grbsde_core::Error::InvalidData(format!("cannot write summary: {e}"))
    })?;
    summary.print();
    Ok(summary.all_passed())
}

fn barrier_side(data: &ProblemData) -> Option<BarrierSide> {
    data.barrier.as_ref().map(|b| b.side)
}

fn write_solution_csv(
    tree: &ScenarioTree,
    sol: &GBSDESolution,
    k_columns: Option<(&NodeValues, &NodeValues)>,
    dir: &Path,
    name: &str,
) -> std::io::Result<()> {
    let d = tree.brownian_dim();
    let m = tree.marks().len();
    let mut header: Vec<String> = vec![
        "node".into(),
        "layer".into(),
        "t".into(),
        "prob".into(),
        "a_value".into(),
        "y".into(),
    ];
    for i in 0..d {
        header.push(format!("z{i}"));
    }
    for j in 0..m {
        header.push(format!("v{j}"));
    }
    header.push("residual".into());
    if k_columns.is_some() {
        header.push("dk".into());
        header.push("k".into());
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = CsvWriter::new(dir, name, &header_refs);
    for id in tree.all_nodes() {
        let n = tree.node(id);
        let mut row = vec![
            id.to_string(),
            n.layer.to_string(),
            fmt(tree.grid().instant(n.layer)),
            fmt(n.prob),
            fmt(n.a_value),
            fmt(sol.y.get(id).unwrap_or(f64::NAN)),
        ];
        for i in 0..d {
            row.push(fmt(sol.z.get(id).map(|z| z[i]).unwrap_or(f64::NAN)));
        }
        for j in 0..m {
            row.push(fmt(sol.v.get(id).map(|v| v[j]).unwrap_or(f64::NAN)));
        }
        row.push(fmt(sol.residuals.get(id).unwrap_or(0.0)));
        if let Some((dk, k)) = k_columns {
            row.push(fmt(dk.get(id).unwrap_or(0.0)));
            row.push(fmt(k.get(id).unwrap_or(f64::NAN)));
        }
        csv.row(&row);
    }
    csv.finish()?;
    Ok(())
}

fn run_check(
    cfg: &ExperimentConfig,
    tree: &ScenarioTree,
    data: &ProblemData,
    seed: u64,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let report = check_assumptions(data, tree, cfg.run.samples, seed);
    let mut csv = CsvWriter::new(dir, "assumptions.csv", &["check", "passed", "max_violation"]);
    for c in &report.checks {
        csv.row(&[c.name.to_string(), c.passed.to_string(), fmt(c.max_violation)]);
        summary.check(c.name, c.passed, fmt(c.max_violation));
    }
    csv.finish().map_err(io_err)?;
    Ok(())
}

fn run_solve(
    cfg: &ExperimentConfig,
    tree: &ScenarioTree,
    data: &ProblemData,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let sol = solve_gbsde(tree, data)?;
    write_solution_csv(tree, &sol, None, dir, "solution.csv").map_err(io_err)?;
    summary.check_le("backward equation residual", sol.max_residual(), 1e-12);
    summary.check_le(
        "orthogonality of the extra martingale term",
        sol.max_m_orthogonality_defect(tree),
        1e-12,
    );

    let norm_cfg = WeightedNormConfig::for_driver(&data.driver, data.mu);
    let opts = PicardOptions::new(cfg.run.picard_max_iters, -1.0, norm_cfg);
    let picard = picard_solve(tree, data, None, &opts)?;
    let mut csv = CsvWriter::new(dir, "picard.csv", &["iteration", "diff_norm_sq", "ratio"]);
    for (i, d2) in picard.diff_norms_sq.iter().enumerate() {
        let ratio = if i > 0 && picard.diff_norms_sq[i - 1] > 0.0 {
            d2 / picard.diff_norms_sq[i - 1]
        } else {
            0.0
        };
        csv.row(&[(i + 1).to_string(), fmt(*d2), fmt(ratio)]);
    }
    csv.finish().map_err(io_err)?;
    let fp_gap = solution_difference_norm_sq(tree, picard.solution(), &sol, &norm_cfg).sqrt();
    summary.check_le("fixed point matches the direct sweep (norm)", fp_gap, 1e-10);
    match contraction_rate(tree, &picard.iterates, &norm_cfg) {
        Ok(contraction) => {
            summary.check(
                "measured contraction ratio below one",
                contraction.max_ratio < 1.0,
                fmt(contraction.max_ratio),
            );
        }
        Err(e) => summary.check("measured contraction ratio below one", false, e.to_string()),
    }

    let estimate = apriori_check(tree, SolutionView::from(&sol), data, &norm_cfg)?;
    write_estimate_csv(&estimate, dir, "estimate.csv").map_err(io_err)?;
    summary.check(
        "growth bounds on the driver integrals",
        estimate.growth_bounds_hold(),
        format!("g: {}, f: {}", fmt(estimate.g_bound_violation), fmt(estimate.f_bound_violation)),
    );
    Ok(())
}

fn write_estimate_csv(
    estimate: &grbsde_core::analysis::EstimateReport,
    dir: &Path,
    name: &str,
) -> std::io::Result<()> {
    let mut csv = CsvWriter::new(dir, name, &["term", "value"]);
    for (label, value) in [
        ("sup_y", estimate.sup_y),
        ("y_da", estimate.y_da),
        ("zv_dt", estimate.zv_dt),
        ("m_qv", estimate.m_qv),
        ("k_terminal_sq", estimate.k_terminal_sq),
        ("xi_term", estimate.xi_term),
        ("phi_dt", estimate.phi_dt),
        ("psi_da", estimate.psi_da),
        ("barrier_sup", estimate.barrier_sup),
        ("ratio", estimate.ratio),
        ("g_bound_violation", estimate.g_bound_violation),
        ("f_bound_violation", estimate.f_bound_violation),
    ] {
        csv.row(&[label.to_string(), fmt(value)]);
    }
    csv.finish()?;
    Ok(())
}

fn run_penalize(
    cfg: &ExperimentConfig,
    tree: &ScenarioTree,
    data: &ProblemData,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let (report, sols) = penalization_sweep(tree, data, &cfg.run.n_list, cfg.run.tolerance)?;
    let mut csv = CsvWriter::new(
        dir,
        "penalization.csv",
        &[
            "n",
            "sup_neg_part",
            "sup_diff_prev",
            "skorokhod_residual",
            "y_norm",
            "z_norm",
            "v_norm",
            "m_norm",
            "k_terminal_sq",
            "monotonicity_violations",
        ],
    );
    for r in &report.rows {
        csv.row(&[
            fmt(r.n),
            fmt(r.sup_neg_part),
            r.sup_diff_prev.map(fmt).unwrap_or_default(),
            fmt(r.skorokhod_residual),
            fmt(r.y_norm),
            fmt(r.z_norm),
            fmt(r.v_norm),
            fmt(r.m_norm),
            fmt(r.k_terminal_sq),
            r.monotonicity_violations.to_string(),
        ]);
    }
    csv.finish().map_err(io_err)?;

    let violations: usize = report.rows.iter().map(|r| r.monotonicity_violations).sum();
    summary.check("Y^n nondecreasing in n", violations == 0, violations.to_string());
    let sup_last = report.rows.last().map(|r| r.sup_neg_part).unwrap_or(f64::NAN);
    summary.check(
        "schedule converged at the run tolerance",
        report.converged,
        format!("sup (Y^n - L)^- = {} (tolerance {})", fmt(sup_last), fmt(cfg.run.tolerance)),
    );
    let spread = report
        .last_ratio
        .iter()
        .map(|r| if *r > 1.0 { *r } else { 1.0 / r.max(1e-300) })
        .fold(0.0_f64, f64::max);
    summary.check(
        "uniform bound stabilizes (last two levels within factor 2)",
        spread <= 2.0,
        fmt(spread),
    );

    // direct oracle gap, bounded by a small multiple of the final penalty slack
    let direct = solve_reflected_direct(tree, data, BarrierSide::Lower)?;
    let last_sol = sols.last().expect("nonempty schedule");
    let mut gap = 0.0_f64;
    for id in tree.all_nodes() {
        if let (Some(a), Some(b)) = (last_sol.base.y.get(id), direct.base.y.get(id)) {
            gap = gap.max((a - b).abs());
        }
    }
    summary.check_le("gap to the direct oracle at the last level", gap, 10.0 * sup_last + 1e-12);

    // auxiliary diagnostics per level
    let mut csv = CsvWriter::new(
        dir,
        "auxiliary.csv",
        &["n", "min_gap", "representation_residual", "sup_x_neg", "sup_neg_penalized", "sup_neg_auxiliary"],
    );
    let mut worst_gap = 0.0_f64;
    let mut worst_repr = 0.0_f64;
    for &n in &cfg.run.n_list {
        let aux = solve_auxiliary(tree, data, n)?;
        worst_gap = worst_gap.max(-aux.min_gap);
        worst_repr = worst_repr.max(aux.representation_residual);
        csv.row(&[
            fmt(n),
            fmt(aux.min_gap),
            fmt(aux.representation_residual),
            fmt(aux.sup_x_neg),
            fmt(aux.sup_neg_penalized),
            fmt(aux.sup_neg_auxiliary),
        ]);
    }
    csv.finish().map_err(io_err)?;
    summary.check_le("auxiliary solution dominated by the penalized one", worst_gap, 1e-10);
    summary.check_le("discounted representation residual", worst_repr, 1e-10);

    // uniform-estimate ratios
    let norm_cfg = WeightedNormConfig::for_driver(&data.driver, data.mu);
    let mut ratios = Vec::new();
    for sol in &sols {
        let est = apriori_check(tree, sol.view(), data, &norm_cfg)?;
        ratios.push(est.ratio);
    }
    let finite = ratios.iter().all(|r| r.is_finite());
    summary.check(
        "a priori LHS/RHS ratios finite across the schedule",
        finite,
        format!("last = {}", fmt(*ratios.last().unwrap())),
    );
    Ok(())
}

fn run_reflect(
    tree: &ScenarioTree,
    data: &ProblemData,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let side = barrier_side(data).ok_or_else(|| {
        grbsde_core::Error::MissingBarrier("reflect needs a barrier in the config".into())
    })?;
    let sol = solve_reflected_direct(tree, data, side)?;
    write_solution_csv(
        tree,
        &sol.base,
        Some((&sol.k_increments, &sol.k_cumulative)),
        dir,
        "reflected.csv",
    )
    .map_err(io_err)?;

    let barrier = data.barrier_of(side)?;
    let mut barrier_gap = 0.0_f64;
    let mut min_dk = f64::INFINITY;
    for id in tree.all_nodes() {
        if let (Some(y), Some(l)) = (sol.base.y.get(id), barrier.values.get(id)) {
            let gap = match side {
                BarrierSide::Lower => l - y,
                BarrierSide::Upper => y - l,
            };
            barrier_gap = barrier_gap.max(gap);
        }
        if let Some(dk) = sol.k_increments.get(id) {
            min_dk = min_dk.min(dk);
        }
    }
    summary.check_le("state stays on the admissible side of the barrier", barrier_gap, 1e-12);
    summary.check("dK nonnegative", min_dk >= 0.0, fmt(min_dk));
    summary.check_le("equation residual with the dK term", sol.base.max_residual(), 1e-12);
    summary.check_le("Skorokhod residual", check_skorokhod(tree, data, &sol)?, 1e-10);

    let dec = decompose_k(tree, &sol, barrier);
    let exact = sol.k_increments.iter_defined().all(|(id, dk)| {
        dec.continuous_increments.get(id).unwrap_or(0.0) + dec.jump_increments.get(id).unwrap_or(0.0)
            == dk
    });
    summary.check("K = K^c + K^d exactly", exact, String::new());
    let mut csv = CsvWriter::new(dir, "k_decomposition.csv", &["node", "dk", "dk_continuous", "dk_jump"]);
    for (id, dk) in sol.k_increments.iter_defined() {
        csv.row(&[
            id.to_string(),
            fmt(dk),
            fmt(dec.continuous_increments.get(id).unwrap_or(0.0)),
            fmt(dec.jump_increments.get(id).unwrap_or(0.0)),
        ]);
    }
    csv.finish().map_err(io_err)?;

    let snell = snell_envelope(tree, data, &sol)?;
    let mut snell_gap = 0.0_f64;
    for id in tree.all_nodes() {
        if let (Some(a), Some(b)) = (snell.get(id), sol.base.y.get(id)) {
            snell_gap = snell_gap.max((a - b).abs());
        }
    }
    summary.check_le("Snell recursion agrees with the reflected state", snell_gap, 1e-10);

    // mirror duality
    let mirrored = data.mirrored();
    let other_side = match side {
        BarrierSide::Lower => BarrierSide::Upper,
        BarrierSide::Upper => BarrierSide::Lower,
    };
    let mirror = solve_reflected_direct(tree, &mirrored, other_side)?;
    let mut mirror_gap = 0.0_f64;
    for id in tree.all_nodes() {
        if let (Some(a), Some(b)) = (sol.base.y.get(id), mirror.base.y.get(id)) {
            mirror_gap = mirror_gap.max((a + b).abs());
        }
    }
    summary.check_le("mirror duality with the opposite barrier", mirror_gap, 1e-10);
    Ok(())
}

fn run_stop(
    cfg: &ExperimentConfig,
    tree: &ScenarioTree,
    data: &ProblemData,
    method: StopMethod,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let side = barrier_side(data).ok_or_else(|| {
        grbsde_core::Error::MissingBarrier("stop needs a barrier in the config".into())
    })?;
    let sol = solve_reflected_direct(tree, data, side)?;
    let mut csv = CsvWriter::new(dir, "stopping.csv", &["method", "node", "policy", "j", "gap"]);
    if matches!(method, StopMethod::Enumerate | StopMethod::Both) {
        let cap = cfg.run.enumeration_cap as u128;
        let count = count_stopping_times(tree, 0);
        let report = verify_representation(
            tree,
            data,
            &sol,
            RepresentationMethod::Enumerate { cap },
            0,
        )?;
        for (pi, node, j) in &report.policy_values {
            csv.row(&[
                "enumerate".into(),
                node.to_string(),
                pi.to_string(),
                fmt(*j),
                String::new(),
            ]);
        }
        for e in &report.entries {
            csv.row(&[
                "enumerate-best".into(),
                e.node.to_string(),
                String::new(),
                fmt(e.best_j),
                fmt(e.gap),
            ]);
        }
        summary.check_le(
            &format!("best of {count} policies matches the reflected value"),
            report.max_gap,
            1e-10,
        );
        summary.check(
            "no policy beats the reflected value",
            report.dominance_violations == 0,
            report.dominance_violations.to_string(),
        );
    }
    if matches!(method, StopMethod::NuP | StopMethod::Both) {
        for &p in &cfg.run.p_list {
            let report =
                verify_representation(tree, data, &sol, RepresentationMethod::NuP { p }, 0)?;
            for e in &report.entries {
                csv.row(&[
                    format!("nu_p({p})"),
                    e.node.to_string(),
                    String::new(),
                    fmt(e.best_j),
                    fmt(e.gap),
                ]);
            }
            summary.check(
                &format!("hitting policy nu^p (p = {p}) within 1/p of the value"),
                report.max_gap <= 1.0 / p + 1e-10 && report.dominance_violations == 0,
                fmt(report.max_gap),
            );
        }
    }
    csv.finish().map_err(io_err)?;
    Ok(())
}

fn run_compare(
    cfg: &ExperimentConfig,
    tree: &ScenarioTree,
    data: &ProblemData,
    dir: &Path,
    summary: &mut Summary,
) -> Result<(), grbsde_core::Error> {
    let shifts = &cfg.run.comparison;
    let f_prime = match data.driver.f.clone() {
        DriverForm::Linear { a, b, c, h0, h1 } => {
            DriverForm::Linear { a, b, c, h0: h0 + shifts.f_intercept, h1 }
        }
        DriverForm::MonotoneCubic { cube, a, b, c, h0, h1 } => {
            DriverForm::MonotoneCubic { cube, a, b, c, h0: h0 + shifts.f_intercept, h1 }
        }
    };
    let g = &data.driver.g;
    let g_prime = GForm { slope: g.slope, h0: g.h0 + shifts.g_intercept, h1: g.h1 };
    let driver_prime = DriverSpec::tight(
        f_prime,
        g_prime,
        tree.brownian_dim(),
        &tree.marks().weights(),
        grbsde_core::model::DEFAULT_SAMPLE_BOX,
    )?;
    let data_prime = ProblemData {
        terminal: data.terminal.map(|x| x + shifts.terminal),
        driver: driver_prime,
        barrier: data.barrier.clone(),
        mu: data.mu,
        phi: data.phi.clone(),
        psi: data.psi.clone(),
    };

    let (report, y, y_prime) = match barrier_side(data) {
        Some(side) => {
            let a = solve_reflected_direct(tree, data, side)?;
            let b = solve_reflected_direct(tree, &data_prime, side)?;
            let r = compare_solutions(tree, data, &data_prime, a.comparison_input(), b.comparison_input())?;
            (r, a.base.y.clone(), b.base.y.clone())
        }
        None => {
            let a = solve_gbsde(tree, data)?;
            let b = solve_gbsde(tree, &data_prime)?;
            let r = compare_solutions(
                tree,
                data,
                &data_prime,
                (&a).into(),
                (&b).into(),
            )?;
            (r, a.y.clone(), b.y.clone())
        }
    };
    let mut csv = CsvWriter::new(dir, "comparison.csv", &["node", "y", "y_prime", "difference"]);
    for id in tree.all_nodes() {
        if let (Some(a), Some(b)) = (y.get(id), y_prime.get(id)) {
            csv.row(&[id.to_string(), fmt(a), fmt(b), fmt(b - a)]);
        }
    }
    csv.finish().map_err(io_err)?;
    summary.check(
        "ordered data produce ordered solutions",
        report.y_violations == 0,
        format!("violations = {}, max gap = {}", report.y_violations, fmt(report.max_y_gap)),
    );
    if report.k_checked {
        summary.check(
            "K-increment ordering for (z,v)-free drivers",
            report.k_violations == 0,
            report.k_violations.to_string(),
        );
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> grbsde_core::Error {
    grbsde_core::Error::InvalidData(format!("io error: {e}"))
}
