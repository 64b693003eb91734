mod common;

use mean_risk_dp::bellman::{backward_recursion, scale_upper_image, BackwardSolution};
use mean_risk_dp::lp::FrontierOptions;
use mean_risk_dp::risk::RiskSpec;
use mean_risk_dp::strategy::{
    decide, evaluate_positions, forward_strategy_path, forward_strategy_path_with,
    full_tree_positions, realized_profile, ForwardMethod,
};
use mean_risk_dp::tree::{build_iid_tree, ScenarioTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_path, desk_model, random_iid_tree, spread_targets};

fn solve(tree: &ScenarioTree, spec: &RiskSpec) -> BackwardSolution {
    backward_recursion(tree, spec, &FrontierOptions::default()).unwrap()
}

/// Positions for the whole tree, evaluated from scratch by composing the
/// recursion over the terminal wealth, are efficient at every node.
#[test]
fn whole_tree_strategy_is_efficient_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..4 {
        let tree = random_iid_tree(&mut rng, 3, 3, 2 + case % 2);
        let spec = RiskSpec::new([0.25, 0.5][case % 2]).unwrap();
        let sol = solve(&tree, &spec);
        let v0 = 100.0;
        for x0 in spread_targets(sol.root_image(), v0, 4) {
            for method in [ForwardMethod::Polyhedral, ForwardMethod::InductionLp] {
                let pos = full_tree_positions(&tree, &sol, &spec, v0, x0, method).unwrap();
                let (wealth, profiles) = evaluate_positions(&tree, &spec, v0, &pos).unwrap();
                let root = profiles[0];
                assert!((root.neg_mean - x0.neg_mean).abs() < 1e-6);
                assert!((root.risk - x0.risk).abs() < 1e-6, "{root:?} vs {x0:?}");
                for id in 0..pos.len() {
                    let at = tree.cursor(id);
                    let image = sol.image_at(&at).unwrap().scale(wealth[id]).unwrap();
                    let gap = image.boundary_distance(profiles[id].as_array());
                    assert!(gap < 1e-6, "case {case} node {id}: {gap}");
                }
            }
        }
    }
}

#[test]
fn polyhedral_and_induction_lp_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..40 {
        let (t, d, k) = (
            rng.gen_range(2..=3),
            rng.gen_range(2..=3),
            rng.gen_range(2..=3),
        );
        let tree = random_iid_tree(&mut rng, t, d, k);
        let spec = RiskSpec::new(rng.gen_range(0.2..1.0)).unwrap();
        let sol = solve(&tree, &spec);
        let nodes = tree.nodes().unwrap();
        #[allow(clippy::needless_range_loop)]
        for id in 0..tree.level_start(tree.horizon()) {
            let at = tree.cursor(id);
            let wealth = rng.gen_range(0.5..50.0);
            let image = scale_upper_image(&sol.image_at(&at).unwrap(), wealth).unwrap();
            let (lo, hi) = image.neg_mean_range();
            let m = rng.gen_range(lo..=hi);
            let a = decide(
                &tree,
                &sol,
                &spec,
                &at,
                wealth,
                m,
                ForwardMethod::Polyhedral,
            )
            .unwrap();
            let b = decide(
                &tree,
                &sol,
                &spec,
                &at,
                wealth,
                m,
                ForwardMethod::InductionLp,
            )
            .unwrap();
            let pa = realized_profile(&tree, &sol, &spec, &at, &a).unwrap();
            let pb = realized_profile(&tree, &sol, &spec, &at, &b).unwrap();
            assert!((pa.neg_mean - pb.neg_mean).abs() < 1e-6 * (1.0 + wealth));
            assert!(
                (pa.risk - pb.risk).abs() < 1e-6 * (1.0 + wealth),
                "{pa:?} {pb:?}"
            );
            assert!((pa.neg_mean - m).abs() < 1e-6 * (1.0 + wealth));
            let value =
                |p: &[f64]| -> f64 { nodes[id].prices.iter().zip(p).map(|(s, q)| s * q).sum() };
            assert!((value(&a.position) - wealth).abs() < 1e-9 * wealth);
            assert!((value(&b.position) - wealth).abs() < 1e-9 * wealth);
            checked += 1;
        }
    }
    assert!(checked >= 200, "{checked}");
}

#[test]
fn moment_matched_paths_stay_efficient() {
    let tree = ScenarioTree::iid_lattice(&desk_model(), 12).unwrap();
    let spec = RiskSpec::new(0.1).unwrap();
    let sol = solve(&tree, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for x0 in spread_targets(sol.root_image(), 100.0, 3) {
        let branches: Vec<usize> = (0..12)
            .map(|_| rng.gen_range(0..tree.branching(&tree.root())))
            .collect();
        for method in [ForwardMethod::Polyhedral, ForwardMethod::InductionLp] {
            let out = forward_strategy_path_with(&tree, &sol, &spec, 100.0, x0, &branches, method)
                .unwrap();
            assert_eq!(out.records.len(), 12);
            let c = check_path(&tree, &sol, &spec, &out, true);
            // the LP optimum can undercut the stored frontier by the unit-wealth
            // vertex acceptance threshold times the wealth
            match method {
                ForwardMethod::Polyhedral => assert!(c.frontier_gap < 1e-6, "{c:?}"),
                ForwardMethod::InductionLp => assert!(c.unit_frontier_gap < 1e-6, "{c:?}"),
            }
            assert!(c.scalarization_gap < 1e-6, "{c:?}");
            assert!(c.lambda_ok);
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = common::random_model(&mut rng, 3, 3);
    let tree = build_iid_tree(&model, 3).unwrap();
    let spec = RiskSpec::new(0.3).unwrap();
    let a = solve(&tree, &spec);
    let b = solve(&tree, &spec);
    assert_eq!(a, b);
    let x0 = spread_targets(a.root_image(), 10.0, 1)[0];
    let p = forward_strategy_path(&tree, &a, &spec, 10.0, x0, &[0, 2, 1]).unwrap();
    let q = forward_strategy_path(&tree, &b, &spec, 10.0, x0, &[0, 2, 1]).unwrap();
    assert_eq!(p, q);
}
