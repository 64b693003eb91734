//! Dichotomic (weighted-sum, Aneja–Nair style) enumeration of the vertices
//! of a bi-objective LP's nondominated frontier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{BiObjectiveLp, LpStatus, Simplex};

/// Objective-space merge radius and minimal weighted improvement.
pub const MERGE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierOptions {
    pub merge_tol: f64,
    /// Drop vertices lying within this distance of the chord of their neighbours.
    pub prune_tol: Option<f64>,
    /// Hard cap on the number of vertices kept.
    pub vertex_budget: Option<usize>,
}

impl Default for FrontierOptions {
    fn default() -> Self {
        FrontierOptions {
            merge_tol: MERGE_TOL,
            prune_tol: None,
            vertex_budget: None,
        }
    }
}

/// Frontier vertices ordered by increasing first objective, with preimages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontierVertexList {
    pub vertices: Vec<[f64; 2]>,
    pub solutions: Vec<Vec<f64>>,
}

impl FrontierVertexList {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Checks strict monotonicity and strictly increasing edge slopes.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        check_vertex_order(&self.vertices, tol)
    }
}

pub(crate) fn check_vertex_order(v: &[[f64; 2]], tol: f64) -> std::result::Result<(), String> {
    for (i, w) in v.windows(2).enumerate() {
        if w[1][0] - w[0][0] <= tol {
            return Err(format!("first objective not increasing at {i}"));
        }
        if w[0][1] - w[1][1] <= tol {
            return Err(format!("second objective not decreasing at {i}"));
        }
    }
    for (i, w) in v.windows(3).enumerate() {
        let s1 = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
        let s2 = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
        if s2 <= s1 {
            return Err(format!("slopes not increasing at vertex {}", i + 1));
        }
    }
    Ok(())
}

struct Point {
    obj: [f64; 2],
    x: Vec<f64>,
}

/// Minimizes the objectives in order, each inside the optimal face of the previous ones.
fn lexicographic(engine: &mut Simplex, bp: &BiObjectiveLp, order: &[&[f64]]) -> Result<Point> {
    let mut saved = Vec::new();
    let mut outcome = Ok(());
    for (level, c) in order.iter().enumerate() {
        if level > 0 {
            saved.extend(engine.fix_to_optimal_face());
        }
        match engine.optimize(c) {
            Ok(LpStatus::Optimal) => {}
            Ok(LpStatus::Unbounded) if level == 0 => {
                outcome = Err(Error::Unbounded(
                    "bi-objective LP is unbounded in a scalarized objective".into(),
                ));
                break;
            }
            Ok(_) => {
                outcome = Err(Error::Solver("lexicographic refinement failed".into()));
                break;
            }
            Err(e) => {
                outcome = Err(e);
                break;
            }
        }
    }
    // restore in reverse so the original bounds win
    saved.reverse();
    engine.restore_bounds(saved);
    outcome?;
    let x = engine.solution();
    Ok(Point {
        obj: bp.evaluate(&x),
        x,
    })
}

/// Frontier with default options.
pub fn dichotomic_frontier(bp: &BiObjectiveLp) -> Result<FrontierVertexList> {
    dichotomic_frontier_with(bp, &FrontierOptions::default())
}

/// All vertices of the nondominated frontier of `{(c¹x, c²x)} + R²₊`.
///
/// Both lexicographic extremes are solved first; then, for each pair of
/// adjacent known vertices, the weighted sum with weight normal to their
/// segment is minimized. A point improving the weighted value by more than
/// `merge_tol` is a new vertex (taken as the left end of the optimal face).
pub fn dichotomic_frontier_with(
    bp: &BiObjectiveLp,
    opts: &FrontierOptions,
) -> Result<FrontierVertexList> {
    dichotomic_frontier_tiebreak(bp, None, opts)
}

/// As [`dichotomic_frontier_with`], choosing each vertex preimage to
/// minimize `tie_break` among all preimages of that vertex.
pub fn dichotomic_frontier_tiebreak(
    bp: &BiObjectiveLp,
    tie_break: Option<&[f64]>,
    opts: &FrontierOptions,
) -> Result<FrontierVertexList> {
    bp.constraints.check()?;
    let n = bp.constraints.num_vars();
    if bp.objectives.iter().any(|c| c.len() != n) {
        return Err(Error::Parameter(
            "objective length differs from variable count".into(),
        ));
    }
    let mut engine = Simplex::new(&bp.constraints)?;
    if !engine.find_feasible()? {
        return Err(Error::Infeasible(
            "bi-objective LP has no feasible point".into(),
        ));
    }
    if tie_break.is_some_and(|t| t.len() != n) {
        return Err(Error::Parameter(
            "tie-break length differs from variable count".into(),
        ));
    }
    let (c1, c2) = (bp.objectives[0].as_slice(), bp.objectives[1].as_slice());
    let solve = |engine: &mut Simplex, first: &[f64], second: &[f64]| {
        let mut order = vec![first, second];
        order.extend(tie_break);
        lexicographic(engine, bp, &order)
    };
    let left = solve(&mut engine, c1, c2)?;
    let right = solve(&mut engine, c2, c1)?;
    let tol = opts.merge_tol;

    let mut found = vec![left];
    if dist(found[0].obj, right.obj) > tol && right.obj[0] > found[0].obj[0] + tol {
        found.push(right);
        // stack of index pairs into `found`
        let mut stack = vec![(0usize, 1usize)];
        while let Some((ia, ib)) = stack.pop() {
            let (a, b) = (found[ia].obj, found[ib].obj);
            let mut w = [a[1] - b[1], b[0] - a[0]];
            let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
            if norm <= tol {
                continue;
            }
            w = [w[0] / norm, w[1] / norm];
            // rounding can leave a found point dominated by a neighbour; such
            // a pair has no frontier between it and its normal is not positive
            if w[0] <= 0.0 || w[1] <= 0.0 {
                continue;
            }
            let weighted = bp.weighted_objective(w);
            let p = solve(&mut engine, &weighted, c1)?;
            let gain = (w[0] * a[0] + w[1] * a[1]) - (w[0] * p.obj[0] + w[1] * p.obj[1]);
            if gain > tol && dist(p.obj, a) > tol && dist(p.obj, b) > tol {
                found.push(p);
                let ip = found.len() - 1;
                // right half first on the stack so the left half is processed first
                stack.push((ip, ib));
                stack.push((ia, ip));
            }
        }
    }
    found.sort_by(|p, q| {
        p.obj[0]
            .total_cmp(&q.obj[0])
            .then(p.obj[1].total_cmp(&q.obj[1]))
    });
    let mut list = FrontierVertexList::default();
    for p in found {
        if let Some(last) = list.vertices.last() {
            if dist(*last, p.obj) <= tol {
                continue;
            }
        }
        list.vertices.push(p.obj);
        list.solutions.push(p.x);
    }
    lower_hull(&mut list);
    if let Some(pt) = opts.prune_tol {
        prune_frontier(&mut list, pt, None);
    }
    if let Some(budget) = opts.vertex_budget {
        prune_frontier(&mut list, 0.0, Some(budget));
    }
    Ok(list)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Keeps only strict vertices of the lower-left convex boundary of points
/// sorted by the first coordinate.
fn lower_hull(list: &mut FrontierVertexList) {
    let mut keep: Vec<usize> = Vec::with_capacity(list.len());
    for i in 0..list.len() {
        let p = list.vertices[i];
        if let Some(&last) = keep.last() {
            // not strictly better in the second objective: dominated
            if p[1] >= list.vertices[last][1] {
                continue;
            }
        }
        while keep.len() >= 2 {
            let o = list.vertices[keep[keep.len() - 2]];
            let a = list.vertices[keep[keep.len() - 1]];
            let scale = dist(o, p).max(1e-300);
            if cross(o, a, p) <= 1e-14 * scale * scale {
                keep.pop();
            } else {
                break;
            }
        }
        keep.push(i);
    }
    list.vertices = keep.iter().map(|&i| list.vertices[i]).collect();
    list.solutions = keep
        .iter()
        .map(|&i| std::mem::take(&mut list.solutions[i]))
        .collect();
}

/// Distance of `p` below the chord `a`–`b`.
fn chord_gap(a: [f64; 2], p: [f64; 2], b: [f64; 2]) -> f64 {
    let len = dist(a, b);
    if len == 0.0 {
        return 0.0;
    }
    cross(a, b, p).abs() / len
}

/// Removes interior vertices within `tol` of the chord of their neighbours,
/// then, if `budget` is set, the flattest vertices until the budget is met.
///
/// Only existing vertices are removed, so the pruned frontier stays attainable
/// with the stored preimages (the pruned upper image is contained in the exact one).
pub fn prune_frontier(list: &mut FrontierVertexList, tol: f64, budget: Option<usize>) {
    loop {
        let n = list.len();
        let over_budget = budget.map(|b| n > b.max(2)).unwrap_or(false);
        if n < 3 {
            break;
        }
        let mut best = (f64::INFINITY, 0usize);
        for i in 1..n - 1 {
            let g = chord_gap(list.vertices[i - 1], list.vertices[i], list.vertices[i + 1]);
            if g < best.0 {
                best = (g, i);
            }
        }
        if best.0 <= tol || over_budget {
            list.vertices.remove(best.1);
            list.solutions.remove(best.1);
        } else {
            break;
        }
    }
}
