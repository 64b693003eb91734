//! Bounded-variable primal revised simplex with an explicit dense basis
//! inverse. Intended for problems with few rows and many columns, which is
//! the shape of every one-step problem in this crate.
//!
//! The engine keeps its basis between calls so that a sequence of objectives
//! over the same constraints is solved with warm starts.

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Sense};

const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 40;

pub(crate) struct Simplex {
    m: usize,
    n_struct: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each column, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: Vec<f64>,
    updates: usize,
    cost: Vec<f64>,
    art_start: usize,
}

impl Simplex {
    pub(crate) fn new(lp: &LinearProgram) -> Result<Self> {
        let m = lp.num_rows();
        let n_struct = lp.num_vars();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        // merge duplicate entries
        for c in cols.iter_mut() {
            c.sort_by_key(|e| e.0);
            c.dedup_by(|later, earlier| {
                if later.0 == earlier.0 {
                    earlier.1 += later.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for (i, r) in lp.rows.iter().enumerate() {
            match r.sense {
                Sense::Le => cols.push(vec![(i, 1.0)]),
                Sense::Ge => cols.push(vec![(i, -1.0)]),
                Sense::Eq => continue,
            }
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }
        let art_start = cols.len();
        for i in 0..m {
            cols.push(vec![(i, 1.0)]);
            lo.push(0.0);
            hi.push(0.0);
        }
        let n_total = cols.len();
        let mut col_start = Vec::with_capacity(n_total + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_start.push(0);
        for c in &cols {
            for &(i, a) in c {
                row_idx.push(i);
                vals.push(a);
            }
            col_start.push(row_idx.len());
        }
        let x: Vec<f64> = (0..n_total)
            .map(|j| {
                if lo[j].is_finite() {
                    lo[j]
                } else if hi[j].is_finite() {
                    hi[j]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Simplex {
            m,
            n_struct,
            col_start,
            row_idx,
            vals,
            b: lp.rows.iter().map(|r| r.rhs).collect(),
            lo,
            hi,
            x,
            basis: Vec::new(),
            pos: vec![usize::MAX; n_total],
            binv: Vec::new(),
            updates: 0,
            cost: vec![0.0; n_total],
            art_start,
        })
    }

    fn n_total(&self) -> usize {
        self.lo.len()
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_start[j]..self.col_start[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// Phase 1: crash basis from slacks and artificials, then minimize the
    /// artificial sum. Returns `false` when the constraints are infeasible.
    pub(crate) fn find_feasible(&mut self) -> Result<bool> {
        let m = self.m;
        let mut resid = self.b.clone();
        for j in 0..self.art_start {
            let xj = self.x[j];
            if xj != 0.0 {
                for (i, a) in self.column(j).collect::<Vec<_>>() {
                    resid[i] -= a * xj;
                }
            }
        }
        // slack column of each inequality row
        let mut slack_of = vec![usize::MAX; m];
        for j in self.n_struct..self.art_start {
            let (i, _) = self.column(j).next().expect("slack column");
            slack_of[i] = j;
        }
        self.basis = vec![0; m];
        self.binv = vec![0.0; m * m];
        let mut phase1 = vec![0.0; self.n_total()];
        for i in 0..m {
            let s = slack_of[i];
            if s != usize::MAX {
                let coef = self.vals[self.col_start[s]];
                if resid[i] * coef >= 0.0 {
                    self.basis[i] = s;
                    self.x[s] = resid[i] * coef;
                    self.binv[i * m + i] = coef;
                    continue;
                }
            }
            let a = self.art_start + i;
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            self.vals[self.col_start[a]] = sign;
            self.hi[a] = f64::INFINITY;
            self.x[a] = resid[i].abs();
            self.basis[i] = a;
            self.binv[i * m + i] = sign;
            phase1[a] = 1.0;
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.pos[j] = k;
        }
        self.updates = 0;
        self.cost = phase1;
        let status = self.iterate()?;
        let infeas: f64 = (self.art_start..self.n_total()).map(|a| self.x[a]).sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for a in self.art_start..self.n_total() {
            self.hi[a] = 0.0;
            if self.pos[a] == usize::MAX {
                self.x[a] = 0.0;
            }
        }
        if status != LpStatus::Optimal {
            return Err(Error::Solver(
                "phase 1 did not terminate at an optimum".into(),
            ));
        }
        Ok(infeas <= FEAS_TOL * scale)
    }

    /// Phase 2 from the current (feasible) basis with structural costs `c`.
    pub(crate) fn optimize(&mut self, c: &[f64]) -> Result<LpStatus> {
        let mut cost = vec![0.0; self.n_total()];
        cost[..self.n_struct].copy_from_slice(c);
        self.cost = cost;
        self.iterate()
    }

    pub(crate) fn solution(&self) -> Vec<f64> {
        self.x[..self.n_struct].to_vec()
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.column(j).map(|(i, a)| y[i] * a).sum::<f64>()
    }

    /// Fixes every nonbasic column whose reduced cost under the current
    /// objective is nonzero, so a following `optimize` stays inside the
    /// current optimal face. Returns the bounds to restore.
    pub(crate) fn fix_to_optimal_face(&mut self) -> Vec<(usize, f64, f64)> {
        let y = self.duals();
        let mut saved = Vec::new();
        for j in 0..self.art_start {
            if self.pos[j] != usize::MAX || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            if d.abs() > OPT_TOL {
                saved.push((j, self.lo[j], self.hi[j]));
                self.lo[j] = self.x[j];
                self.hi[j] = self.x[j];
            }
        }
        saved
    }

    pub(crate) fn restore_bounds(&mut self, saved: Vec<(usize, f64, f64)>) {
        for (j, l, h) in saved {
            self.lo[j] = l;
            self.hi[j] = h;
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for (i, v) in self.column(j) {
                a[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))
                .expect("nonempty");
            if a[piv * m + col].abs() < 1e-13 {
                return Err(Error::Solver(
                    "singular basis during refactorization".into(),
                ));
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        // inv = B^{-1} with rows indexed by basis position
        self.binv = inv;
        self.updates = 0;
        // recompute basic values from nonbasic ones
        let mut rhs = self.b.clone();
        for j in 0..self.n_total() {
            if self.pos[j] == usize::MAX && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, v) in self.column(j).collect::<Vec<_>>() {
                    rhs[i] -= v * xj;
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            self.x[self.basis[k]] = row.iter().zip(&rhs).map(|(p, q)| p * q).sum();
        }
        Ok(())
    }

    fn iterate(&mut self) -> Result<LpStatus> {
        let m = self.m;
        let n = self.n_total();
        let max_iter = 10_000 + 50 * (m + n);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut alpha = vec![0.0; m];
        for _ in 0..max_iter {
            if self.updates >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals();
            // pricing
            let mut enter = usize::MAX;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..n {
                if self.pos[j] != usize::MAX || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let (score, dj) = if d < -OPT_TOL && self.x[j] < self.hi[j] {
                    (-d, 1.0)
                } else if d > OPT_TOL && self.x[j] > self.lo[j] {
                    (d, -1.0)
                } else {
                    continue;
                };
                if bland {
                    enter = j;
                    dir = dj;
                    break;
                }
                if score > best {
                    best = score;
                    enter = j;
                    dir = dj;
                }
            }
            if enter == usize::MAX {
                if self.updates > 0 {
                    self.refactor()?;
                }
                return Ok(LpStatus::Optimal);
            }
            // alpha = B^{-1} a_q
            alpha.iter_mut().for_each(|a| *a = 0.0);
            for (i, v) in self.column(enter).collect::<Vec<_>>() {
                for k in 0..m {
                    alpha[k] += self.binv[k * m + i] * v;
                }
            }
            // Harris ratio test, pass 1
            let mut theta_max = f64::INFINITY;
            for k in 0..m {
                let rate = dir * alpha[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[k];
                let bound = if rate > 0.0 {
                    (self.x[j] - self.lo[j] + FEAS_TOL) / rate
                } else {
                    (self.hi[j] - self.x[j] + FEAS_TOL) / -rate
                };
                if bound < theta_max {
                    theta_max = bound;
                }
            }
            let own = if dir > 0.0 {
                self.hi[enter] - self.x[enter]
            } else {
                self.x[enter] - self.lo[enter]
            };
            if theta_max == f64::INFINITY && own == f64::INFINITY {
                return Ok(LpStatus::Unbounded);
            }
            // pass 2: largest pivot among candidates
            let mut leave = usize::MAX;
            let mut leave_theta = 0.0;
            let mut leave_mag = 0.0;
            for k in 0..m {
                let rate = dir * alpha[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[k];
                let ratio = if rate > 0.0 {
                    (self.x[j] - self.lo[j]) / rate
                } else {
                    (self.hi[j] - self.x[j]) / -rate
                };
                if ratio <= theta_max {
                    let better = if bland {
                        leave == usize::MAX || j < self.basis[leave]
                    } else {
                        rate.abs() > leave_mag
                    };
                    if better {
                        leave = k;
                        leave_theta = ratio.max(0.0);
                        leave_mag = rate.abs();
                    }
                }
            }
            if leave == usize::MAX || own <= leave_theta {
                // bound flip of the entering column
                let theta = own;
                for k in 0..m {
                    let j = self.basis[k];
                    self.x[j] -= dir * theta * alpha[k];
                }
                self.x[enter] = if dir > 0.0 {
                    self.hi[enter]
                } else {
                    self.lo[enter]
                };
                degenerate_run = 0;
                bland = false;
                continue;
            }
            let theta = leave_theta;
            for k in 0..m {
                let j = self.basis[k];
                self.x[j] -= dir * theta * alpha[k];
            }
            self.x[enter] += dir * theta;
            let out = self.basis[leave];
            let rate = dir * alpha[leave];
            self.x[out] = if rate > 0.0 {
                self.lo[out]
            } else {
                self.hi[out]
            };
            self.pos[out] = usize::MAX;
            self.basis[leave] = enter;
            self.pos[enter] = leave;
            // eta update of the inverse
            let piv = alpha[leave];
            for c in 0..m {
                self.binv[leave * m + c] /= piv;
            }
            for k in 0..m {
                if k != leave && alpha[k] != 0.0 {
                    let f = alpha[k];
                    for c in 0..m {
                        self.binv[k * m + c] -= f * self.binv[leave * m + c];
                    }
                }
            }
            self.updates += 1;
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
        Err(Error::Solver(format!(
            "simplex stalled after {max_iter} iterations ({m} rows, {n} columns)"
        )))
    }
}
