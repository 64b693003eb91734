#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use mean_risk_dp::bellman::{
    assemble_one_step_vlp, terminal_upper_image, BackwardSolution, UpperImage,
};
use mean_risk_dp::lp::{solve_lp, BiObjectiveLp, LinearProgram, LpStatus, Sense};
use mean_risk_dp::risk::{MeanRiskProfile, RiskSpec};
use mean_risk_dp::strategy::PathOutcome;
use mean_risk_dp::tree::{
    build_iid_tree, moment_matched_scenarios, NodeCursor, ReturnModel, ScenarioTree,
};
use rand::Rng;

/// Random one-step model: asset 0 is a bond, the rest are risky.
pub fn random_model<R: Rng>(rng: &mut R, assets: usize, scenarios: usize) -> ReturnModel {
    let bond = rng.gen_range(1.0..1.03);
    let raw: Vec<f64> = (0..scenarios).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|p| p / total).collect();
    let rows = (0..scenarios)
        .map(|_| {
            let mut r = vec![bond];
            r.extend((1..assets).map(|_| rng.gen_range(0.75..1.35)));
            r
        })
        .collect::<Vec<Vec<f64>>>();
    // no risky asset may dominate the bond, so the frontiers have a trade-off
    let mut rows = rows;
    for a in 1..assets {
        if rows.iter().all(|r| r[a] >= bond) {
            let s = rng.gen_range(0..scenarios);
            rows[s][a] = rng.gen_range(0.75..bond);
        }
    }
    ReturnModel::new(rows, probs).unwrap()
}

pub fn random_iid_tree<R: Rng>(
    rng: &mut R,
    horizon: usize,
    assets: usize,
    k: usize,
) -> ScenarioTree {
    build_iid_tree(&random_model(rng, assets, k), horizon).unwrap()
}

/// Twelve monthly steps, bond plus two correlated stocks.
pub fn desk_model() -> ReturnModel {
    moment_matched_scenarios(
        &[1.001, 1.006, 1.009],
        &[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0016, 0.0006],
            vec![0.0, 0.0006, 0.0036],
        ],
    )
    .unwrap()
}

/// The whole-horizon problem at unit initial wealth as one bi-objective LP.
///
/// Every non-leaf node carries a position, a risk level `r`, a CVaR
/// threshold `z` and one excess variable per child. Positions are
/// self-financing and long-only; leaves contribute `−v_T` directly.
pub fn monolithic_lp(tree: &ScenarioTree, spec: &RiskSpec) -> BiObjectiveLp {
    let nodes = tree.nodes().expect("explicit tree");
    let d = tree.assets();
    let horizon = tree.horizon();
    let mut lp = LinearProgram::new();
    let mut psi = vec![usize::MAX; nodes.len()];
    let mut risk = vec![usize::MAX; nodes.len()];
    let mut thresh = vec![usize::MAX; nodes.len()];
    for n in nodes.iter().filter(|n| n.time < horizon) {
        psi[n.id] = lp.add_var(0.0, f64::INFINITY, 0.0);
        for _ in 1..d {
            lp.add_var(0.0, f64::INFINITY, 0.0);
        }
        risk[n.id] = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        thresh[n.id] = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let holding = |id: usize, prices: &[f64], sign: f64| -> Vec<(usize, f64)> {
        (0..d).map(|a| (psi[id] + a, sign * prices[a])).collect()
    };
    let mut c1 = Vec::new();
    for n in nodes.iter().filter(|n| n.time < horizon) {
        match n.parent {
            None => {
                lp.add_row(holding(n.id, &n.prices, 1.0), Sense::Eq, 1.0);
            }
            Some(p) => {
                let mut row = holding(n.id, &n.prices, 1.0);
                row.extend(holding(p, &n.prices, -1.0));
                lp.add_row(row, Sense::Eq, 0.0);
            }
        }
        let mut tail = vec![(risk[n.id], 1.0), (thresh[n.id], -1.0)];
        for &c in &n.children {
            let child = &nodes[c];
            let u = lp.add_var(0.0, f64::INFINITY, 0.0);
            tail.push((u, -child.cond_prob / spec.alpha()));
            // u ≥ r_child − z
            let mut row = vec![(u, 1.0), (thresh[n.id], 1.0)];
            if child.time == horizon {
                row.extend(holding(n.id, &child.prices, 1.0));
                let prob = tree.path_probability(c);
                for (j, a) in holding(n.id, &child.prices, -prob) {
                    c1.push((j, a));
                }
            } else {
                row.push((risk[c], -1.0));
            }
            lp.add_row(row, Sense::Ge, 0.0);
        }
        lp.add_row(tail, Sense::Ge, 0.0);
    }
    let m = lp.num_vars();
    let mut o1 = vec![0.0; m];
    for (j, a) in c1 {
        o1[j] += a;
    }
    let mut o2 = vec![0.0; m];
    o2[risk[0]] = 1.0;
    BiObjectiveLp {
        constraints: lp,
        objectives: [o1, o2],
    }
}

/// `min c_second` over the face where `c_first` is optimal.
fn lexicographic(bp: &BiObjectiveLp, first: usize) -> [f64; 2] {
    let second = 1 - first;
    let mut lp = bp.constraints.clone();
    lp.objective = bp.objectives[first].clone();
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    let coeffs: Vec<(usize, f64)> = bp.objectives[first]
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(j, a)| (j, *a))
        .collect();
    lp.add_row(
        coeffs,
        Sense::Le,
        s.objective_value + 1e-11 * (1.0 + s.objective_value.abs()),
    );
    lp.objective = bp.objectives[second].clone();
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    bp.evaluate(&s.x)
}

/// Frontier from independent weighted-sum solves at `angles` evenly spaced
/// interior directions plus both lexicographic extremes, refined along the
/// normals of the resulting hull edges.
pub fn weight_sweep_frontier(bp: &BiObjectiveLp, angles: usize) -> UpperImage {
    let mut points = vec![lexicographic(bp, 0), lexicographic(bp, 1)];
    for i in 1..=angles {
        let th = FRAC_PI_2 * i as f64 / (angles + 1) as f64;
        let s = bp.solve_weighted([th.cos(), th.sin()]).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        points.push(bp.evaluate(&s.x));
    }
    // probe each hull edge along its normal until no edge hides a vertex
    loop {
        let hull = lower_hull(points.clone(), 1e-7);
        let mut found = false;
        for e in hull.vertices().windows(2) {
            let w = [e[0][1] - e[1][1], e[1][0] - e[0][0]];
            if w[0] <= 0.0 || w[1] <= 0.0 {
                continue;
            }
            let s = bp.solve_weighted(w).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            let p = bp.evaluate(&s.x);
            let edge = w[0] * e[0][0] + w[1] * e[0][1];
            let scale = 1.0 + e[0][0].abs() + e[0][1].abs();
            if w[0] * p[0] + w[1] * p[1] < edge - 1e-10 * scale * (w[0] + w[1]) {
                points.push(p);
                found = true;
            }
        }
        if !found {
            return hull;
        }
    }
}

/// Efficient lower-left convex hull of a point cloud.
pub fn lower_hull(mut points: Vec<[f64; 2]>, merge: f64) -> UpperImage {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for p in points {
        if let Some(last) = hull.last() {
            if p[1] >= last[1] - merge {
                continue;
            }
            if p[0] - last[0] <= merge {
                hull.pop();
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            if cross <= 1e-12 * (1.0 + a[0].abs() + a[1].abs()) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    UpperImage::new(hull).unwrap()
}

/// Worst deviations found along one forward path.
#[derive(Clone, Copy, Debug, Default)]
pub struct PathCheck {
    /// Largest distance of a record's profile from its node's scaled frontier.
    pub frontier_gap: f64,
    /// The same, measured at unit wealth.
    pub unit_frontier_gap: f64,
    /// Largest gap between the λ-scalarized one-step optimum and the record.
    pub scalarization_gap: f64,
    /// Whether every λ interval is an ordered subinterval of `[0, 1]`.
    pub lambda_ok: bool,
}

pub fn check_path(
    tree: &ScenarioTree,
    sol: &BackwardSolution,
    spec: &RiskSpec,
    outcome: &PathOutcome,
    scalarization: bool,
) -> PathCheck {
    let terminal = terminal_upper_image();
    let mut out = PathCheck {
        lambda_ok: true,
        ..PathCheck::default()
    };
    let mut at = tree.root();
    for (rec, &b) in outcome.records.iter().zip(&outcome.branches) {
        let image = sol.image_at(&at).unwrap().scale(rec.wealth).unwrap();
        let gap = image.boundary_distance(rec.profile.as_array());
        out.frontier_gap = out.frontier_gap.max(gap);
        out.unit_frontier_gap = out.unit_frontier_gap.max(gap / rec.wealth);
        let [lo, hi] = rec.lambda;
        out.lambda_ok &= 0.0 <= lo && lo <= hi && hi <= 1.0;
        if !scalarization {
            at = tree.step(&at, b).unwrap();
            continue;
        }

        let children: Vec<NodeCursor> = (0..tree.branching(&at))
            .map(|c| tree.step(&at, c).unwrap())
            .collect();
        let images: Vec<UpperImage> = children
            .iter()
            .map(|c| {
                if c.time == tree.horizon() {
                    terminal.clone()
                } else {
                    sol.image_at(c).unwrap()
                }
            })
            .collect();
        let refs: Vec<&UpperImage> = images.iter().collect();
        let vlp = assemble_one_step_vlp(
            &at.prices,
            &tree.child_prices(&at),
            &tree.child_probs(&at),
            &refs,
            spec,
            rec.wealth,
        )
        .unwrap();
        let lambdas = if lo == hi {
            vec![lo]
        } else {
            vec![lo, hi, 0.5 * (lo + hi)]
        };
        for lam in lambdas {
            let w = [1.0 - lam, lam];
            let s = vlp.problem.solve_weighted(w).unwrap();
            let chosen = w[0] * rec.profile.neg_mean + w[1] * rec.profile.risk;
            let gap = (s.objective_value - chosen).abs() / (1.0 + rec.wealth);
            out.scalarization_gap = out.scalarization_gap.max(gap);
        }
        at = tree.step(&at, b).unwrap();
    }
    out
}

/// `count` frontier points spread over the root frontier by mean, scaled to `v0`.
pub fn spread_targets(image: &UpperImage, v0: f64, count: usize) -> Vec<MeanRiskProfile> {
    let (lo, hi) = image.neg_mean_range();
    (0..count)
        .map(|i| {
            let m = lo + (hi - lo) * (i as f64 + 0.5) / count as f64;
            MeanRiskProfile::new(v0 * m, v0 * image.risk_at(m).unwrap())
        })
        .collect()
}
