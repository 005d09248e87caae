//! Semidefinite programs: linear objective and constraints over symmetric
//! PSD matrix blocks, optionally mixed with scalar variables.
//!
//! ```
//! use conic::sdp::{Cmp, LinExpr, ScalarKind, SemidefiniteProgram};
//! use conic::{Sense, SolverOptions};
//!
//! // min t  s.t.  [[t, 1], [1, t]] >= 0   (optimum t = 1)
//! let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
//! let x = sdp.add_psd_block(2);
//! let t = sdp.add_scalar(ScalarKind::Free);
//! sdp.set_objective(LinExpr::new().scalar(t, 1.0));
//! sdp.add_constraint(LinExpr::new().psd(x, 0, 0, 1.0).scalar(t, -1.0), Cmp::Eq, 0.0);
//! sdp.add_constraint(LinExpr::new().psd(x, 1, 1, 1.0).scalar(t, -1.0), Cmp::Eq, 0.0);
//! sdp.add_constraint(LinExpr::new().psd(x, 0, 1, 1.0), Cmp::Eq, 1.0);
//! let sol = sdp.solve(&SolverOptions::default()).unwrap();
//! assert!((sol.objective - 1.0).abs() < 1e-7);
//! ```

use std::collections::BTreeMap;

use crate::dense::Mat;
pub use crate::lp::Cmp;
use crate::problem::{ConeLayout, Point, PsdEntry, SpRow, Standard};
use crate::{solve_standard, Sense, SolveReport, SolveStatus, SolverError, SolverOptions};

/// Domain of a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Free,
    Nonneg,
}

/// A linear expression in matrix entries and scalar variables.
///
/// `psd(b, i, j, c)` contributes the term `c * X_b[i, j]`; since the blocks
/// are symmetric, `(i, j)` and `(j, i)` address the same value.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    psd: Vec<(usize, usize, usize, f64)>,
    scalars: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn psd(mut self, block: usize, i: usize, j: usize, coeff: f64) -> Self {
        self.psd.push((block, i, j, coeff));
        self
    }

    pub fn scalar(mut self, id: usize, coeff: f64) -> Self {
        self.scalars.push((id, coeff));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.psd.is_empty() && self.scalars.is_empty()
    }

    /// Evaluate against concrete block and scalar values.
    pub fn eval(&self, psd: &[Mat], scalars: &[f64]) -> f64 {
        let mats: f64 = self.psd.iter().map(|&(b, i, j, c)| c * psd[b][(i, j)]).sum();
        let scs: f64 = self.scalars.iter().map(|&(k, c)| c * scalars[k]).sum();
        mats + scs
    }
}

struct Row {
    expr: LinExpr,
    cmp: Cmp,
    rhs: f64,
}

/// A semidefinite program built incrementally.
pub struct SemidefiniteProgram {
    sense: Sense,
    blocks: Vec<usize>,
    scalars: Vec<ScalarKind>,
    obj: LinExpr,
    rows: Vec<Row>,
}

/// Result of [`SemidefiniteProgram::solve`].
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Objective at the solution (`Optimal`) or the per-unit objective change
    /// along the returned ray (`DualInfeasible`; always improving, so negative
    /// under `Minimize` and positive under `Maximize`).
    pub objective: f64,
    /// One symmetric matrix per PSD block.
    pub psd: Vec<Mat>,
    pub scalars: Vec<f64>,
    /// Lagrange multipliers, one per constraint.
    pub duals: Vec<f64>,
    /// For `PrimalInfeasible`: multipliers aggregating the constraints into
    /// one that no point of the cone satisfies (same convention as the LP
    /// front end).
    pub farkas: Option<Vec<f64>>,
    pub report: SolveReport,
}

impl SemidefiniteProgram {
    pub fn new(sense: Sense) -> Self {
        SemidefiniteProgram {
            sense,
            blocks: Vec::new(),
            scalars: Vec::new(),
            obj: LinExpr::new(),
            rows: Vec::new(),
        }
    }

    /// Add an `n x n` symmetric PSD matrix variable; returns its block id.
    pub fn add_psd_block(&mut self, n: usize) -> usize {
        self.blocks.push(n);
        self.blocks.len() - 1
    }

    /// Add a scalar variable; returns its id.
    pub fn add_scalar(&mut self, kind: ScalarKind) -> usize {
        self.scalars.push(kind);
        self.scalars.len() - 1
    }

    pub fn set_objective(&mut self, expr: LinExpr) {
        self.obj = expr;
    }

    pub fn add_constraint(&mut self, expr: LinExpr, cmp: Cmp, rhs: f64) {
        self.rows.push(Row { expr, cmp, rhs });
    }

    fn check_expr(&self, expr: &LinExpr) -> Result<(), SolverError> {
        for &(b, i, j, _) in &expr.psd {
            let n = *self.blocks.get(b).ok_or_else(|| {
                SolverError::InvalidProblem(format!("unknown PSD block {b}"))
            })?;
            if i >= n || j >= n {
                return Err(SolverError::InvalidProblem(format!(
                    "entry ({i}, {j}) outside {n} x {n} block {b}"
                )));
            }
        }
        for &(k, _) in &expr.scalars {
            if k >= self.scalars.len() {
                return Err(SolverError::InvalidProblem(format!("unknown scalar {k}")));
            }
        }
        Ok(())
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SdpSolution, SolverError> {
        self.check_expr(&self.obj)?;
        for row in &self.rows {
            self.check_expr(&row.expr)?;
        }
        let sgn = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };

        // Scalar variables map to orthant coordinates: one for Nonneg, a
        // positive/negative pair for Free.
        let mut scol: Vec<(usize, Option<usize>)> = Vec::with_capacity(self.scalars.len());
        let mut ncols = 0usize;
        for kind in &self.scalars {
            match kind {
                ScalarKind::Nonneg => {
                    scol.push((ncols, None));
                    ncols += 1;
                }
                ScalarKind::Free => {
                    scol.push((ncols, Some(ncols + 1)));
                    ncols += 2;
                }
            }
        }
        let n_slack = self.rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
        let first_slack = ncols;
        let layout = ConeLayout { nonneg: ncols + n_slack, psd: self.blocks.clone() };

        // Turn an expression into (orthant terms, PSD entries), merging
        // duplicate addresses and splitting off-diagonal terms symmetrically.
        let lower = |expr: &LinExpr| -> (Vec<(u32, f64)>, Vec<PsdEntry>) {
            let mut mat: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
            for &(b, i, j, c) in &expr.psd {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                *mat.entry((b, lo, hi)).or_insert(0.0) += c;
            }
            let mut psd = Vec::new();
            for (&(b, i, j), &c) in &mat {
                if c == 0.0 {
                    continue;
                }
                if i == j {
                    psd.push(PsdEntry { block: b as u32, r: i as u32, c: j as u32, v: c });
                } else {
                    psd.push(PsdEntry { block: b as u32, r: i as u32, c: j as u32, v: c / 2.0 });
                    psd.push(PsdEntry { block: b as u32, r: j as u32, c: i as u32, v: c / 2.0 });
                }
            }
            let mut sc: BTreeMap<usize, f64> = BTreeMap::new();
            for &(k, c) in &expr.scalars {
                *sc.entry(k).or_insert(0.0) += c;
            }
            let mut lp = Vec::new();
            for (&k, &c) in &sc {
                if c == 0.0 {
                    continue;
                }
                let (pos, neg) = scol[k];
                lp.push((pos as u32, c));
                if let Some(neg) = neg {
                    lp.push((neg as u32, -c));
                }
            }
            (lp, psd)
        };

        let mut c = Point::zeros(&layout);
        let (obj_lp, obj_psd) = lower(&self.obj);
        for (k, v) in obj_lp {
            c.lp[k as usize] += sgn * v;
        }
        for e in obj_psd {
            c.psd[e.block as usize][(e.r as usize, e.c as usize)] += sgn * e.v;
        }

        let mut rows: Vec<SpRow> = Vec::with_capacity(self.rows.len());
        let mut b: Vec<f64> = Vec::with_capacity(self.rows.len());
        let mut slack_at = 0usize;
        for row in &self.rows {
            let (mut lp, psd) = lower(&row.expr);
            match row.cmp {
                Cmp::Le => {
                    lp.push(((first_slack + slack_at) as u32, 1.0));
                    slack_at += 1;
                }
                Cmp::Ge => {
                    lp.push(((first_slack + slack_at) as u32, -1.0));
                    slack_at += 1;
                }
                Cmp::Eq => {}
            }
            if lp.is_empty() && psd.is_empty() {
                return Err(SolverError::InvalidProblem("empty constraint".into()));
            }
            rows.push(SpRow { lp, psd });
            b.push(row.rhs);
        }

        let st = Standard { layout, rows, b, c };
        let out = solve_standard(&st, opts)?;

        let recover = |p: &Point| -> (Vec<Mat>, Vec<f64>) {
            let psd = p.psd.clone();
            let scalars = scol
                .iter()
                .map(|&(pos, neg)| p.lp[pos] - neg.map_or(0.0, |n| p.lp[n]))
                .collect();
            (psd, scalars)
        };

        match out.status {
            SolveStatus::Optimal => {
                let (psd, scalars) = recover(&out.x);
                let objective = self.obj.eval(&psd, &scalars);
                let duals: Vec<f64> = out.y.iter().map(|&y| sgn * y).collect();
                Ok(SdpSolution {
                    status: out.status,
                    objective,
                    psd,
                    scalars,
                    duals,
                    farkas: None,
                    report: out.report,
                })
            }
            SolveStatus::PrimalInfeasible => {
                let farkas: Vec<f64> = out.y.iter().map(|&y| -y).collect();
                Ok(SdpSolution {
                    status: out.status,
                    objective: f64::NAN,
                    psd: self.blocks.iter().map(|&n| Mat::zeros(n, n)).collect(),
                    scalars: vec![0.0; self.scalars.len()],
                    duals: vec![0.0; self.rows.len()],
                    farkas: Some(farkas),
                    report: out.report,
                })
            }
            SolveStatus::DualInfeasible => {
                let (psd, scalars) = recover(&out.x);
                let gain = self.obj.eval(&psd, &scalars);
                Ok(SdpSolution {
                    status: out.status,
                    objective: gain,
                    psd,
                    scalars,
                    duals: vec![0.0; self.rows.len()],
                    farkas: None,
                    report: out.report,
                })
            }
        }
    }
}
