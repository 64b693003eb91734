//! Linear programming: a dense-inverse revised simplex and a dichotomic
//! bi-objective frontier solver built on it.

mod frontier;
mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use frontier::check_vertex_order;
pub use frontier::{
    dichotomic_frontier, dichotomic_frontier_tiebreak, dichotomic_frontier_with, prune_frontier,
    FrontierOptions, FrontierVertexList, MERGE_TOL,
};
pub(crate) use simplex::Simplex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// One constraint row in sparse form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cᵀx  s.t.  rows, lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Parameter(
                "bound vectors do not match variable count".into(),
            ));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::Parameter(format!(
                    "variable {j} has bounds [{l}, {u}]"
                )));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(Error::Parameter(format!("row {i} has non-finite rhs")));
            }
            if let Some((j, a)) = r.coeffs.iter().find(|(j, a)| *j >= n || !a.is_finite()) {
                return Err(Error::Parameter(format!(
                    "row {i} has bad entry ({j}, {a})"
                )));
            }
        }
        Ok(())
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|(j, a)| a * x[*j]).sum())
            .collect()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, act) in self.rows.iter().zip(self.activities(x)) {
            let v = match r.sense {
                Sense::Le => act - r.rhs,
                Sense::Ge => r.rhs - act,
                Sense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for ((xj, l), u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - xj).max(xj - u);
        }
        worst
    }

    /// Text dump in CPLEX LP format, for debugging.
    pub fn to_lp_format(&self) -> String {
        let mut s = String::from("Minimize\n obj:");
        let term = |s: &mut String, a: f64, j: usize| {
            let _ = write!(s, " {} {} x{}", if a < 0.0 { "-" } else { "+" }, a.abs(), j);
        };
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                term(&mut s, *c, j);
            }
        }
        s.push_str("\nSubject To\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, " c{i}:");
            for (j, a) in &r.coeffs {
                term(&mut s, *a, *j);
            }
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(s, " {op} {}", r.rhs);
        }
        s.push_str("Bounds\n");
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " x{j} free");
                }
                (true, true) => {
                    let _ = writeln!(s, " {l} <= x{j} <= {u}");
                }
                (true, false) => {
                    let _ = writeln!(s, " x{j} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= x{j} <= {u}");
                }
            }
        }
        s.push_str("End\n");
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

/// Solves an LP from scratch. Deterministic for identical input.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let mut engine = Simplex::new(lp)?;
    if !engine.find_feasible()? {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: engine.solution(),
            objective_value: f64::NAN,
        });
    }
    let status = engine.optimize(&lp.objective)?;
    let x = engine.solution();
    let objective_value = dot(&lp.objective, &x);
    Ok(LpSolution {
        status,
        x,
        objective_value: if status == LpStatus::Optimal {
            objective_value
        } else {
            f64::NEG_INFINITY
        },
    })
}

/// Two objective rows over shared constraints. The objective of `constraints` is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiObjectiveLp {
    pub constraints: LinearProgram,
    pub objectives: [Vec<f64>; 2],
}

impl BiObjectiveLp {
    pub fn evaluate(&self, x: &[f64]) -> [f64; 2] {
        [dot(&self.objectives[0], x), dot(&self.objectives[1], x)]
    }

    /// `w₀·c¹ + w₁·c²`.
    pub fn weighted_objective(&self, w: [f64; 2]) -> Vec<f64> {
        self.objectives[0]
            .iter()
            .zip(&self.objectives[1])
            .map(|(a, b)| w[0] * a + w[1] * b)
            .collect()
    }

    /// Solves the weighted-sum scalarization.
    pub fn solve_weighted(&self, w: [f64; 2]) -> Result<LpSolution> {
        let mut lp = self.constraints.clone();
        lp.objective = self.weighted_objective(w);
        solve_lp(&lp)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-INF, INF, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.objective_value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-INF, INF, -1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 0.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_optimum_set() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(0.0, INF, 1.0);
        let b = lp.add_var(0.0, INF, 1.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-12);
    }

    #[test]
    fn infeasible() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(0.0, 1.0, 1.0);
        lp.add_row(vec![(a, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut lp = LinearProgram::new();
        lp.add_var(1.0, 0.0, 1.0);
        assert!(solve_lp(&lp).is_err());
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, INF, -3.0);
        let y = lp.add_var(0.0, INF, -5.0);
        lp.add_row(vec![(x, 1.0)], Sense::Le, 4.0);
        lp.add_row(vec![(y, 2.0)], Sense::Le, 12.0);
        lp.add_row(vec![(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective_value + 36.0).abs() < 1e-10);
        assert!((s.x[0] - 2.0).abs() < 1e-10 && (s.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn boxed_variables_flip_bounds() {
        // min -x - y, x,y in [0,1], x + y <= 1.5
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 1.0, -1.0);
        let y = lp.add_var(0.0, 1.0, -1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective_value + 1.5).abs() < 1e-12);
    }

    #[test]
    fn lp_format_dump() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, INF, 1.0);
        let y = lp.add_var(-INF, INF, -2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = lp.to_lp_format();
        assert!(s.contains("obj: + 1 x0 - 2 x1"));
        assert!(s.contains("c0: + 1 x0 + 1 x1 <= 1"));
        assert!(s.contains("x1 free"));
    }
}
