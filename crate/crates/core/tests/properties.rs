//! Property tests for the structural invariants of the tree model, the
//! implicit scalar step and the weighted norms.

use proptest::prelude::*;

use grbsde_core::analysis::{weighted_norm, NormInput, SpaceId, WeightedNormConfig};
use grbsde_core::gbsde::{backward_step, RESIDUAL_TOL};
use grbsde_core::model::{DriverForm, DriverSpec, GForm, ProblemData, DEFAULT_SAMPLE_BOX};
use grbsde_core::scenario::{
    build_tree, conditional_expectation, martingale_decompose, ASchedule, MarkSpec, NodeValues,
    ScenarioTree, TreeConfig,
};

fn arb_tree() -> impl Strategy<Value = ScenarioTree> {
    (
        1usize..=3,          // steps
        0usize..=2,          // brownian dim
        0usize..=2,          // marks
        any::<bool>(),       // extra factor
        0.05f64..0.9,        // mark weight scale
        0.2f64..1.5,         // horizon
        0.0f64..0.8,         // total A mass
    )
        .prop_map(|(steps, d, m, extra, w, horizon, a_total)| {
            // per-step arrival probability w * (j+1) * 0.3 < 1 by construction
            let dt = horizon / steps as f64;
            let marks = (0..m)
                .map(|j| MarkSpec {
                    label: format!("e{j}"),
                    value: 1.0 + j as f64,
                    weight: w * (j + 1) as f64 * 0.3 / dt,
                })
                .collect();
            build_tree(&TreeConfig {
                steps,
                horizon,
                instants: None,
                brownian_dim: d,
                marks,
                extra_factor: extra,
                a_schedule: ASchedule::uniform(steps, a_total),
                max_nodes: None,
            })
            .expect("valid random config")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_laws_have_exact_moments(tree in arb_tree()) {
        for k in 0..tree.grid().steps() {
            let dt = tree.grid().dt(k);
            for &uid in tree.layer(k) {
                let n = tree.node(uid);
                let p_sum: f64 = n.branches.iter().map(|b| b.prob).sum();
                prop_assert!((p_sum - 1.0).abs() <= 1e-15);
                let d = n.branches.first().map(|b| b.brownian.len()).unwrap_or(0);
                for i in 0..d {
                    let mean: f64 = n.branches.iter().map(|b| b.prob * b.brownian[i]).sum();
                    let var: f64 = n.branches.iter().map(|b| b.prob * b.brownian[i].powi(2)).sum();
                    prop_assert!(mean.abs() <= 1e-14);
                    prop_assert!((var - dt).abs() <= 1e-14);
                }
                for j in 0..tree.marks().len() {
                    let mean: f64 = n.branches.iter().map(|b| b.prob * b.compensated[j]).sum();
                    prop_assert!(mean.abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn decomposition_reconstructs_any_centered_increment(
        tree in arb_tree(),
        raw in proptest::collection::vec(-5.0f64..5.0, 64),
    ) {
        for k in 0..tree.grid().steps() {
            for &uid in tree.layer(k) {
                let n = tree.node(uid);
                let vals: Vec<f64> = n
                    .branches
                    .iter()
                    .enumerate()
                    .map(|(i, _)| raw[(uid + i) % raw.len()])
                    .collect();
                let mean: f64 = n.branches.iter().zip(&vals).map(|(b, x)| b.prob * x).sum();
                let mu: Vec<f64> = vals.iter().map(|x| x - mean).collect();
                let dec = martingale_decompose(&tree, uid, &mu).unwrap();
                for (i, b) in n.branches.iter().enumerate() {
                    let zb: f64 = dec.z.iter().zip(&b.brownian).map(|(z, db)| z * db).sum();
                    let vn: f64 = dec.v.iter().zip(&b.compensated).map(|(v, dn)| v * dn).sum();
                    prop_assert!((mu[i] - (zb + vn + dec.residual[i])).abs() <= 1e-12);
                }
                // residual orthogonal to every driving increment
                let mean_r: f64 =
                    n.branches.iter().zip(&dec.residual).map(|(b, r)| b.prob * r).sum();
                prop_assert!(mean_r.abs() <= 1e-12);
                let d = n.branches.first().map(|b| b.brownian.len()).unwrap_or(0);
                for i in 0..d {
                    let c: f64 = n
                        .branches
                        .iter()
                        .zip(&dec.residual)
                        .map(|(b, r)| b.prob * r * b.brownian[i])
                        .sum();
                    prop_assert!(c.abs() <= 1e-12);
                }
                for j in 0..tree.marks().len() {
                    let c: f64 = n
                        .branches
                        .iter()
                        .zip(&dec.residual)
                        .map(|(b, r)| b.prob * r * b.compensated[j])
                        .sum();
                    prop_assert!(c.abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn tower_property_of_conditional_expectation(tree in arb_tree(), seed in 0u64..1000) {
        // E[E[X | F_{k+1}] | F_k] folds to the unconditional mean at the root
        let last = tree.num_layers() - 1;
        let x = NodeValues::on_layer(&tree, last, |id| ((id as u64 ^ seed) % 17) as f64 - 8.0);
        let mut direct = 0.0;
        for &id in tree.layer(last) {
            direct += tree.node(id).prob * x.get(id).unwrap();
        }
        let mut folded = x;
        for k in (0..last).rev() {
            folded = conditional_expectation(&tree, &folded, k).unwrap();
        }
        prop_assert!((folded.get(0).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn implicit_cubic_step_meets_the_residual_contract(
        cube in 0.0f64..2.0,
        a in -0.8f64..0.4,
        slope in -0.9f64..0.0,
        h0 in -2.0f64..2.0,
        terminal in -5.0f64..5.0,
        dt in 0.05f64..1.0,
        da in 0.0f64..1.0,
    ) {
        let tree = build_tree(&TreeConfig {
            steps: 1,
            horizon: dt,
            instants: None,
            brownian_dim: 1,
            marks: vec![],
            extra_factor: false,
            a_schedule: ASchedule::Deterministic { increments: vec![da] },
            max_nodes: None,
        })
        .unwrap();
        let driver = DriverSpec::tight(
            DriverForm::MonotoneCubic { cube, a, b: 0.3, c: 0.0, h0, h1: 0.0 },
            GForm::linear(slope),
            1,
            &[],
            DEFAULT_SAMPLE_BOX,
        )
        .unwrap();
        let data = ProblemData::new(
            &tree,
            NodeValues::on_layer(&tree, 1, |id| terminal + tree.brownian_total(id, 0)),
            driver,
        );
        // margin 1 - a dt - slope da stays positive over the sampled ranges
        let step = backward_step(&tree, &data, 0, &data.terminal.clone()).unwrap();
        prop_assert!(step.residual <= RESIDUAL_TOL, "residual {}", step.residual);
    }

    #[test]
    fn weighted_norms_scale_quadratically(tree in arb_tree(), c in -4.0f64..4.0) {
        let y = NodeValues::from_fn(&tree, |id| ((id % 7) as f64 - 3.0) * 0.5);
        let scaled = y.map(|x| c * x);
        let cfg = WeightedNormConfig::new(2.0, 1.0);
        for space in [SpaceId::S2MuA, SpaceId::M2MuDt, SpaceId::M2MuDa] {
            let n1 = weighted_norm(&tree, NormInput::Scalar(&y), space, &cfg).unwrap();
            let n2 = weighted_norm(&tree, NormInput::Scalar(&scaled), space, &cfg).unwrap();
            prop_assert!((n2 - c * c * n1).abs() <= 1e-12 * (1.0 + n2.abs()));
        }
    }
}
