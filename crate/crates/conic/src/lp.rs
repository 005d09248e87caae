//! Linear programs over box-bounded variables.
//!
//! ```
//! use conic::{lp::{Cmp, LinearProgram}, Sense, SolverOptions, SolveStatus};
//!
//! // max x + y  s.t.  x + 2y <= 4,  x <= 3,  x, y >= 0
//! let mut lp = LinearProgram::new(Sense::Maximize);
//! let x = lp.add_var(1.0, 0.0, 3.0);
//! let y = lp.add_var(1.0, 0.0, f64::INFINITY);
//! lp.add_constraint(&[(x, 1.0), (y, 2.0)], Cmp::Le, 4.0);
//! let sol = lp.solve(&SolverOptions::default()).unwrap();
//! assert_eq!(sol.status, SolveStatus::Optimal);
//! assert!((sol.objective - 3.5).abs() < 1e-8);
//! ```

use crate::problem::{ConeLayout, Point, SpRow, Standard};
use crate::{solve_standard, Sense, SolveReport, SolveStatus, SolverError, SolverOptions};

/// Constraint comparison operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

struct Row {
    terms: Vec<(usize, f64)>,
    cmp: Cmp,
    rhs: f64,
}

/// A linear program built incrementally from variables and constraints.
pub struct LinearProgram {
    sense: Sense,
    obj: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

/// Result of [`LinearProgram::solve`].
pub struct LpSolution {
    pub status: SolveStatus,
    /// Variable values. For `Optimal` the optimizer; for `DualInfeasible` an
    /// improving ray `d` (feasible directions with unbounded objective gain).
    pub x: Vec<f64>,
    /// Objective at `x` (`Optimal`) or the per-unit objective change along
    /// the ray (`DualInfeasible`; always improving, so negative under
    /// `Minimize` and positive under `Maximize`).
    pub objective: f64,
    /// Lagrange multipliers, one per constraint, such that the objective
    /// change per unit of constraint right-hand side is `duals[i]`.
    pub duals: Vec<f64>,
    /// For `PrimalInfeasible`: multipliers `y` (nonnegative on `Le` rows,
    /// nonpositive on `Ge` rows) whose aggregate `sum_i y_i a_i . x <= y . b`
    /// is violated by every point inside the variable bounds.
    pub farkas: Option<Vec<f64>>,
    pub report: SolveReport,
}

/// How one user variable maps into standard-form orthant coordinates.
enum VarMap {
    /// `x = l + p`, optionally with a ranged row `p + q = u - l`.
    Shift { col: usize, l: f64 },
    /// `x = u - q` (upper bound only).
    Neg { col: usize, u: f64 },
    /// `x = p - q` (free).
    Split { pos: usize, neg: usize },
    /// `x = v` (equal bounds).
    Fixed { v: f64 },
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram { sense, obj: Vec::new(), lower: Vec::new(), upper: Vec::new(), rows: Vec::new() }
    }

    /// Add a variable with objective coefficient and bounds (`-inf`/`inf`
    /// for unbounded sides). Returns its index.
    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.obj.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.obj.len() - 1
    }

    /// Add the constraint `sum_j coeff_j x_j  cmp  rhs`. Terms may repeat a
    /// variable; coefficients accumulate.
    pub fn add_constraint(&mut self, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        self.rows.push(Row { terms: terms.to_vec(), cmp, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<LpSolution, SolverError> {
        for row in &self.rows {
            for &(j, _) in &row.terms {
                if j >= self.obj.len() {
                    return Err(SolverError::InvalidProblem(format!(
                        "constraint references variable {j}, but only {} exist",
                        self.obj.len()
                    )));
                }
            }
        }
        let sgn = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };

        // Variable mapping into orthant coordinates.
        let mut maps = Vec::with_capacity(self.obj.len());
        let mut ncols = 0usize;
        let mut ranged: Vec<(usize, f64)> = Vec::new(); // (p column, width)
        for j in 0..self.obj.len() {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l > u {
                return Err(SolverError::InvalidProblem(format!(
                    "variable {j} has lower bound {l} above upper bound {u}"
                )));
            }
            let map = if l == u {
                VarMap::Fixed { v: l }
            } else if l.is_finite() {
                let col = ncols;
                ncols += 1;
                if u.is_finite() {
                    ranged.push((col, u - l));
                }
                VarMap::Shift { col, l }
            } else if u.is_finite() {
                let col = ncols;
                ncols += 1;
                VarMap::Neg { col, u }
            } else {
                let pos = ncols;
                let neg = ncols + 1;
                ncols += 2;
                VarMap::Split { pos, neg }
            };
            maps.push(map);
        }
        let n_slack = self.rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
        let n_ranged = ranged.len();
        let first_slack = ncols;
        let first_ranged_slack = ncols + n_slack;
        let total = ncols + n_slack + n_ranged;

        let mut c = Point::zeros(&ConeLayout { nonneg: total, psd: Vec::new() });
        for (j, map) in maps.iter().enumerate() {
            let cj = sgn * self.obj[j];
            match *map {
                VarMap::Shift { col, .. } => c.lp[col] += cj,
                VarMap::Neg { col, .. } => c.lp[col] -= cj,
                VarMap::Split { pos, neg } => {
                    c.lp[pos] += cj;
                    c.lp[neg] -= cj;
                }
                VarMap::Fixed { .. } => {}
            }
        }

        let mut rows: Vec<SpRow> = Vec::with_capacity(self.rows.len() + n_ranged);
        let mut b: Vec<f64> = Vec::with_capacity(self.rows.len() + n_ranged);
        let mut slack_at = 0usize;
        for row in &self.rows {
            let mut lp_terms: Vec<(u32, f64)> = Vec::with_capacity(row.terms.len() + 1);
            let mut rhs = row.rhs;
            let add = |col: usize, v: f64, lp_terms: &mut Vec<(u32, f64)>| {
                if v == 0.0 {
                    return;
                }
                if let Some(t) = lp_terms.iter_mut().find(|t| t.0 == col as u32) {
                    t.1 += v;
                } else {
                    lp_terms.push((col as u32, v));
                }
            };
            for &(j, a) in &row.terms {
                match maps[j] {
                    VarMap::Shift { col, l } => {
                        add(col, a, &mut lp_terms);
                        rhs -= a * l;
                    }
                    VarMap::Neg { col, u } => {
                        add(col, -a, &mut lp_terms);
                        rhs -= a * u;
                    }
                    VarMap::Split { pos, neg } => {
                        add(pos, a, &mut lp_terms);
                        add(neg, -a, &mut lp_terms);
                    }
                    VarMap::Fixed { v } => rhs -= a * v,
                }
            }
            match row.cmp {
                Cmp::Le => {
                    lp_terms.push(((first_slack + slack_at) as u32, 1.0));
                    slack_at += 1;
                }
                Cmp::Ge => {
                    lp_terms.push(((first_slack + slack_at) as u32, -1.0));
                    slack_at += 1;
                }
                Cmp::Eq => {}
            }
            if lp_terms.is_empty() {
                return Err(SolverError::InvalidProblem(
                    "constraint involves no non-fixed variable".into(),
                ));
            }
            rows.push(SpRow { lp: lp_terms, psd: Vec::new() });
            b.push(rhs);
        }
        for (i, &(pcol, width)) in ranged.iter().enumerate() {
            rows.push(SpRow {
                lp: vec![(pcol as u32, 1.0), ((first_ranged_slack + i) as u32, 1.0)],
                psd: Vec::new(),
            });
            b.push(width);
        }

        let st = Standard { layout: ConeLayout { nonneg: total, psd: Vec::new() }, rows, b, c };
        let out = solve_standard(&st, opts)?;

        let m_user = self.rows.len();
        let recover_x = |p: &Point, homogeneous: bool| -> Vec<f64> {
            maps.iter()
                .map(|map| match *map {
                    VarMap::Shift { col, l } => p.lp[col] + if homogeneous { 0.0 } else { l },
                    VarMap::Neg { col, u } => {
                        if homogeneous {
                            -p.lp[col]
                        } else {
                            u - p.lp[col]
                        }
                    }
                    VarMap::Split { pos, neg } => p.lp[pos] - p.lp[neg],
                    VarMap::Fixed { v } => if homogeneous { 0.0 } else { v },
                })
                .collect()
        };

        match out.status {
            SolveStatus::Optimal => {
                let x = recover_x(&out.x, false);
                let objective: f64 =
                    x.iter().zip(&self.obj).map(|(x, c)| x * c).sum();
                let duals: Vec<f64> = out.y[..m_user].iter().map(|&y| sgn * y).collect();
                Ok(LpSolution {
                    status: out.status,
                    x,
                    objective,
                    duals,
                    farkas: None,
                    report: out.report,
                })
            }
            SolveStatus::PrimalInfeasible => {
                let farkas: Vec<f64> = out.y[..m_user].iter().map(|&y| -y).collect();
                Ok(LpSolution {
                    status: out.status,
                    x: vec![0.0; self.obj.len()],
                    objective: f64::NAN,
                    duals: vec![0.0; m_user],
                    farkas: Some(farkas),
                    report: out.report,
                })
            }
            SolveStatus::DualInfeasible => {
                let ray = recover_x(&out.x, true);
                let gain: f64 = ray.iter().zip(&self.obj).map(|(x, c)| x * c).sum();
                Ok(LpSolution {
                    status: out.status,
                    x: ray,
                    objective: gain,
                    duals: vec![0.0; m_user],
                    farkas: None,
                    report: out.report,
                })
            }
        }
    }
}
