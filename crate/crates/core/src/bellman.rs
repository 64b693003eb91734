//! Backward recursion of upper images.
//!
//! Every frontier is stored for unit wealth; the image for wealth `v` is
//! `v` times the unit image. At each node the one-step problem couples the
//! position with one point of every child's image, scaled by the child's
//! wealth, and its frontier is enumerated by the dichotomic LP solver.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{
    dichotomic_frontier_tiebreak, BiObjectiveLp, FrontierOptions, FrontierVertexList,
    LinearProgram, Sense,
};
use crate::risk::{MeanRiskProfile, RiskSpec};
use crate::tree::{NodeCursor, ScenarioTree};

const INF: f64 = f64::INFINITY;

/// `conv(vertices) + R²₊`, vertices sorted by increasing `neg_mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperImage {
    vertices: Vec<[f64; 2]>,
}

impl UpperImage {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let image = UpperImage { vertices };
        image.validate()?;
        Ok(image)
    }

    /// Sorted, convex and strictly monotone vertex list, nonempty.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::Internal("upper image without vertices".into()));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Internal("non-finite upper image vertex".into()));
        }
        crate::lp::check_vertex_order(&self.vertices, 0.0).map_err(Error::Internal)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Attainable range of `neg_mean` on the frontier.
    pub fn neg_mean_range(&self) -> (f64, f64) {
        (self.vertices[0][0], self.vertices[self.len() - 1][0])
    }

    /// Attainable range of `risk` on the frontier.
    pub fn risk_range(&self) -> (f64, f64) {
        (self.vertices[self.len() - 1][1], self.vertices[0][1])
    }

    pub fn scale(&self, v: f64) -> Result<UpperImage> {
        scale_upper_image(self, v)
    }

    /// `min over vertices of w·x` and the first minimizing vertex.
    pub fn support(&self, w: [f64; 2]) -> (f64, usize) {
        let mut best = (INF, 0);
        for (i, v) in self.vertices.iter().enumerate() {
            let s = w[0] * v[0] + w[1] * v[1];
            if s < best.0 {
                best = (s, i);
            }
        }
        best
    }

    /// Largest violation of the defining half-planes (nonpositive inside).
    fn excess(&self, p: [f64; 2]) -> f64 {
        let first = self.vertices[0];
        let last = self.vertices[self.len() - 1];
        let mut worst = (first[0] - p[0]).max(last[1] - p[1]);
        for e in self.vertices.windows(2) {
            let (a, b) = (e[0], e[1]);
            let w = [a[1] - b[1], b[0] - a[0]];
            let norm = w[0].hypot(w[1]);
            worst = worst.max((w[0] * (a[0] - p[0]) + w[1] * (a[1] - p[1])) / norm);
        }
        worst
    }

    /// `p` weakly dominates a boundary point, up to `tol`.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        self.excess(p) <= tol
    }

    /// Euclidean distance from `p` to the set.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        if self.excess(p) <= 0.0 {
            return 0.0;
        }
        self.boundary_distance(p)
    }

    /// Euclidean distance from `p` to the boundary, whether `p` is inside or not.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let first = self.vertices[0];
        let last = self.vertices[self.len() - 1];
        // vertical ray above the first vertex, horizontal ray right of the last
        let up = [first[0], first[1].max(p[1])];
        let right = [last[0].max(p[0]), last[1]];
        let mut d = dist(p, up).min(dist(p, right));
        for e in self.vertices.windows(2) {
            d = d.min(segment_distance(p, e[0], e[1]));
        }
        d
    }

    /// Hausdorff distance between two upper images with the same recession cone.
    pub fn hausdorff(&self, other: &UpperImage) -> f64 {
        let a = self.vertices.iter().map(|v| other.distance(*v));
        let b = other.vertices.iter().map(|v| self.distance(*v));
        a.chain(b).fold(0.0, f64::max)
    }

    /// Point of the frontier with the given `neg_mean`, by linear interpolation.
    /// Values within a relative 1e-9 outside the range snap to its ends.
    pub fn risk_at(&self, neg_mean: f64) -> Option<f64> {
        let (lo, hi) = self.neg_mean_range();
        let slack = 1e-9 * (1.0 + neg_mean.abs());
        if neg_mean < lo - slack || neg_mean > hi + slack {
            return None;
        }
        let neg_mean = neg_mean.clamp(lo, hi);
        let i = self.vertices.partition_point(|v| v[0] <= neg_mean).max(1) - 1;
        if i + 1 == self.len() {
            return Some(self.vertices[i][1]);
        }
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let w = (neg_mean - a[0]) / (b[0] - a[0]);
        Some(a[1] + w * (b[1] - a[1]))
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Unit-wealth image at the horizon: the single point `(−1, −1)`.
pub fn terminal_upper_image() -> UpperImage {
    UpperImage {
        vertices: vec![[-1.0, -1.0]],
    }
}

/// `v · P`, exact up to rounding of one multiplication per coordinate.
pub fn scale_upper_image(p: &UpperImage, v: f64) -> Result<UpperImage> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!(
            "scaling factor {v} must be positive"
        )));
    }
    Ok(UpperImage {
        vertices: p.vertices.iter().map(|x| [x[0] * v, x[1] * v]).collect(),
    })
}

/// Preimage of one frontier vertex: the position and the successor
/// profiles (one per child, in branch order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierColumn {
    pub position: Vec<f64>,
    pub successors: Vec<MeanRiskProfile>,
}

impl FrontierColumn {
    /// Flattened as `(ψ, x₁¹, x₂¹, x₁², x₂², …)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.position.clone();
        for s in &self.successors {
            out.push(s.neg_mean);
            out.push(s.risk);
        }
        out
    }
}

/// Frontier of one node (for unit wealth) and the preimage of each vertex.
///
/// Positions are in units of assets priced at `ref_prices`; for a shared
/// i.i.d. stage these are all ones and `position_at` converts them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFrontier {
    pub node: Option<usize>,
    pub ref_prices: Vec<f64>,
    pub image: UpperImage,
    pub columns: Vec<FrontierColumn>,
}

impl NodeFrontier {
    /// Position of column `j` rescaled to a node whose prices are `prices`.
    pub fn position_at(&self, j: usize, prices: &[f64]) -> Vec<f64> {
        self.columns[j]
            .position
            .iter()
            .zip(&self.ref_prices)
            .zip(prices)
            .map(|((psi, r), s)| psi * r / s)
            .collect()
    }
}

/// All node frontiers at one time level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    pub t: usize,
    /// One frontier serves every node of the level (i.i.d. returns).
    pub shared: bool,
    /// Id of the first node at this level; frontiers are in node order.
    pub first_node: Option<usize>,
    pub frontiers: Vec<NodeFrontier>,
}

impl StageSolution {
    pub fn frontier_for(&self, at: &NodeCursor) -> Result<&NodeFrontier> {
        if self.shared {
            return Ok(&self.frontiers[0]);
        }
        let (Some(id), Some(first)) = (at.id, self.first_node) else {
            return Err(Error::Usage(
                "node id required for a non-shared stage".into(),
            ));
        };
        self.frontiers
            .get(id.wrapping_sub(first))
            .ok_or_else(|| Error::Usage(format!("node {id} is not at time {}", self.t)))
    }
}

/// Stage solutions for `t = 0..T`, indexed by time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardSolution {
    pub stages: Vec<StageSolution>,
}

impl BackwardSolution {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Unit-wealth root image `P₀(1)`.
    pub fn root_image(&self) -> &UpperImage {
        &self.stages[0].frontiers[0].image
    }

    /// Unit-wealth image at the node under the cursor (terminal image at `T`).
    pub fn image_at(&self, at: &NodeCursor) -> Result<UpperImage> {
        if at.time >= self.horizon() {
            return Ok(terminal_upper_image());
        }
        Ok(self.stages[at.time].frontier_for(at)?.image.clone())
    }

    pub fn frontier_at(&self, at: &NodeCursor) -> Result<&NodeFrontier> {
        self.stages
            .get(at.time)
            .ok_or_else(|| Error::Usage(format!("no stage at time {}", at.time)))?
            .frontier_for(at)
    }

    pub fn total_vertices(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|s| &s.frontiers)
            .map(|f| f.image.len())
            .sum()
    }
}

/// Variable layout of the one-step problem. The first `assets + 2·children`
/// variables are the position and successor profiles, in column order.
#[derive(Clone, Debug)]
pub struct OneStepVlp {
    pub problem: BiObjectiveLp,
    pub assets: usize,
    pub children: usize,
}

impl OneStepVlp {
    pub fn column(&self, x: &[f64]) -> FrontierColumn {
        let d = self.assets;
        FrontierColumn {
            position: x[..d].iter().map(|v| v.max(0.0)).collect(),
            successors: (0..self.children)
                .map(|c| MeanRiskProfile::new(x[d + 2 * c], x[d + 2 * c + 1]))
                .collect(),
        }
    }

    pub fn successor_var(&self, child: usize, component: usize) -> usize {
        self.assets + 2 * child + component
    }

    /// Sum of all successor components. Minimized last, so that every
    /// successor profile sits on its child's frontier rather than above it
    /// (children outside the CVaR tail leave the risk component slack).
    pub fn successor_sum(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.problem.constraints.num_vars()];
        for v in &mut c[self.assets..self.assets + 2 * self.children] {
            *v = 1.0;
        }
        c
    }

    pub fn frontier(&self, opts: &FrontierOptions) -> Result<FrontierVertexList> {
        dichotomic_frontier_tiebreak(&self.problem, Some(&self.successor_sum()), opts)
    }
}

/// One-step bi-objective LP at a node holding `wealth`.
///
/// Variables: long-only position `ψ`; per child a profile `x_c` that must
/// dominate `(S_cᵀψ) · P_c(1)`, written with mixture weights `ν_c ≥ 0`
/// summing to the child wealth; CVaR auxiliaries `z` and `u_c ≥ x_{c,2} − z`.
/// Objectives: `Σ p_c x_{c,1}` and `z + (1/α) Σ p_c u_c`.
pub fn assemble_one_step_vlp(
    prices: &[f64],
    child_prices: &[Vec<f64>],
    probs: &[f64],
    next_images: &[&UpperImage],
    spec: &RiskSpec,
    wealth: f64,
) -> Result<OneStepVlp> {
    let d = prices.len();
    let k = child_prices.len();
    if k == 0 {
        return Err(Error::Usage("one-step problem at a terminal node".into()));
    }
    if probs.len() != k || next_images.len() != k {
        return Err(Error::Parameter(
            "children, probabilities and images differ in count".into(),
        ));
    }
    if next_images.iter().any(|p| p.is_empty()) {
        return Err(Error::Internal("empty next-period upper image".into()));
    }
    let mut lp = LinearProgram::new();
    for _ in 0..d {
        lp.add_var(0.0, INF, 0.0);
    }
    for _ in 0..2 * k {
        lp.add_var(-INF, INF, 0.0);
    }
    let z = lp.add_var(-INF, INF, 0.0);
    let u0 = lp.num_vars();
    for _ in 0..k {
        lp.add_var(0.0, INF, 0.0);
    }
    lp.add_row(
        prices.iter().enumerate().map(|(i, s)| (i, *s)).collect(),
        Sense::Eq,
        wealth,
    );
    for c in 0..k {
        let nu0 = lp.num_vars();
        let verts = next_images[c].vertices();
        for _ in verts {
            lp.add_var(0.0, INF, 0.0);
        }
        let mut row: Vec<(usize, f64)> = (0..verts.len()).map(|j| (nu0 + j, 1.0)).collect();
        row.extend(child_prices[c].iter().enumerate().map(|(i, s)| (i, -s)));
        lp.add_row(row, Sense::Eq, 0.0);
        for m in 0..2 {
            let mut row = vec![(d + 2 * c + m, 1.0)];
            row.extend(verts.iter().enumerate().map(|(j, v)| (nu0 + j, -v[m])));
            lp.add_row(row, Sense::Ge, 0.0);
        }
        lp.add_row(
            vec![(u0 + c, 1.0), (d + 2 * c + 1, -1.0), (z, 1.0)],
            Sense::Ge,
            0.0,
        );
    }
    let n = lp.num_vars();
    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for c in 0..k {
        c1[d + 2 * c] = probs[c];
        c2[u0 + c] = probs[c] / spec.alpha();
    }
    c2[z] = 1.0;
    Ok(OneStepVlp {
        problem: BiObjectiveLp {
            constraints: lp,
            objectives: [c1, c2],
        },
        assets: d,
        children: k,
    })
}

fn node_frontier(
    vlp: &OneStepVlp,
    list: FrontierVertexList,
    node: Option<usize>,
    ref_prices: Vec<f64>,
) -> Result<NodeFrontier> {
    let columns = list.solutions.iter().map(|x| vlp.column(x)).collect();
    Ok(NodeFrontier {
        node,
        ref_prices,
        image: UpperImage::new(list.vertices)?,
        columns,
    })
}

fn solve_node(
    tree: &ScenarioTree,
    at: &NodeCursor,
    next: &[&UpperImage],
    spec: &RiskSpec,
    opts: &FrontierOptions,
) -> Result<NodeFrontier> {
    let vlp = assemble_one_step_vlp(
        &at.prices,
        &tree.child_prices(at),
        &tree.child_probs(at),
        next,
        spec,
        1.0,
    )?;
    let list = vlp.frontier(opts).map_err(|e| match at.id {
        Some(id) => e.at_stage(format!("node {id}")),
        None => e.at_stage(format!("time {}", at.time)),
    })?;
    node_frontier(&vlp, list, at.id, at.prices.clone())
}

/// Frontiers of all nodes at time `t`, given the stage at `t + 1` (`None` at `T − 1`).
pub fn solve_stage(
    tree: &ScenarioTree,
    t: usize,
    next: Option<&StageSolution>,
    spec: &RiskSpec,
    opts: &FrontierOptions,
) -> Result<StageSolution> {
    if t >= tree.horizon() {
        return Err(Error::Usage(format!("no one-step problem at time {t}")));
    }
    let terminal = terminal_upper_image();
    if tree.is_iid() {
        // every node at this level faces the same problem up to price scaling
        let model = tree.return_model().expect("iid model");
        let at = NodeCursor {
            time: t,
            id: None,
            prices: vec![1.0; tree.assets()],
        };
        let image = next.map(|s| &s.frontiers[0].image).unwrap_or(&terminal);
        let images = vec![image; model.len()];
        let vlp = assemble_one_step_vlp(
            &at.prices,
            model.scenarios(),
            model.probs(),
            &images,
            spec,
            1.0,
        )?;
        let list = vlp
            .frontier(opts)
            .map_err(|e| e.at_stage(format!("time {t}")))?;
        return Ok(StageSolution {
            t,
            shared: true,
            first_node: tree.is_explicit().then(|| tree.level_start(t)),
            frontiers: vec![node_frontier(&vlp, list, None, at.prices)?],
        });
    }
    let level = tree.level(t);
    let frontiers = level
        .par_iter()
        .map(|n| {
            let at = tree.cursor(n.id);
            let next_images: Vec<&UpperImage> = match next {
                Some(s) => n
                    .children
                    .iter()
                    .map(|&c| s.frontier_for(&tree.cursor(c)).map(|f| &f.image))
                    .collect::<Result<_>>()?,
                None => vec![&terminal; n.children.len()],
            };
            solve_node(tree, &at, &next_images, spec, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StageSolution {
        t,
        shared: false,
        first_node: Some(tree.level_start(t)),
        frontiers,
    })
}

/// Runs the recursion from `T − 1` down to `0`.
pub fn backward_recursion(
    tree: &ScenarioTree,
    spec: &RiskSpec,
    opts: &FrontierOptions,
) -> Result<BackwardSolution> {
    let horizon = tree.horizon();
    if tree.is_explicit() {
        if let Some(v) = tree.validate().first() {
            return Err(Error::Parameter(format!("invalid tree: {v}")));
        }
    }
    let mut stages: Vec<StageSolution> = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let stage = solve_stage(tree, t, stages.last(), spec, opts)?;
        let verts: usize = stage.frontiers.iter().map(|f| f.image.len()).sum();
        debug!(
            "stage {t}: {} frontiers, {verts} vertices",
            stage.frontiers.len()
        );
        if t % 250 == 0 && horizon > 250 {
            info!("stage {t} of {horizon}: {verts} vertices");
        }
        stages.push(stage);
    }
    stages.reverse();
    Ok(BackwardSolution { stages })
}
