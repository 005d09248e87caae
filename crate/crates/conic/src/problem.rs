//! Internal standard form and the structured Schur-complement factorization.
//!
//! The engine works on `min <c,x> : <A_i,x> = b_i, x in K` where `K` is a
//! product of a nonnegative orthant and real symmetric PSD blocks. Constraint
//! rows are sparse functionals over that product space; off-diagonal PSD
//! entries are stored expanded (both index orders) so Frobenius inner products
//! and adjoint applications need no symmetry bookkeeping.
//!
//! The normal-equations matrix `M = A W A^T` that dominates each interior
//! point iteration very often has block-arrow structure: most rows touch a
//! single PSD block and nothing else, with a minority of rows coupling blocks
//! through shared scalar columns. The factorization below detects that
//! structure from the row supports, factors each diagonal block separately and
//! finishes with a dense Schur complement on the coupling rows.

use crate::dense::{Cholesky, Mat};

/// Cone product layout: a nonnegative orthant followed by PSD blocks.
#[derive(Clone, Debug)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeLayout {
    /// Barrier degree: orthant dimension plus the sum of block sizes.
    pub fn degree(&self) -> f64 {
        (self.nonneg + self.psd.iter().sum::<usize>()) as f64
    }
}

/// Element of the ambient space (or its dual): orthant part plus dense
/// symmetric matrices.
#[derive(Clone)]
pub struct Point {
    pub lp: Vec<f64>,
    pub psd: Vec<Mat>,
}

impl Point {
    pub fn zeros(layout: &ConeLayout) -> Self {
        Point {
            lp: vec![0.0; layout.nonneg],
            psd: layout.psd.iter().map(|&n| Mat::zeros(n, n)).collect(),
        }
    }

    /// The cone's central element: all-ones orthant part, identity blocks.
    pub fn interior_unit(layout: &ConeLayout) -> Self {
        Point {
            lp: vec![1.0; layout.nonneg],
            psd: layout.psd.iter().map(|&n| Mat::identity(n)).collect(),
        }
    }

    pub fn dot(&self, other: &Point) -> f64 {
        let mut acc: f64 = self.lp.iter().zip(&other.lp).map(|(a, b)| a * b).sum();
        for (x, y) in self.psd.iter().zip(&other.psd) {
            acc += x.dot(y);
        }
        acc
    }

    pub fn axpy(&mut self, a: f64, other: &Point) {
        for (x, y) in self.lp.iter_mut().zip(&other.lp) {
            *x += a * y;
        }
        for (x, y) in self.psd.iter_mut().zip(&other.psd) {
            x.axpy(a, y);
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.lp.iter_mut().for_each(|x| *x *= a);
        self.psd.iter_mut().for_each(|m| m.scale(a));
    }

    pub fn norm_inf(&self) -> f64 {
        let mut m = self.lp.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for blk in &self.psd {
            m = m.max(blk.norm_inf());
        }
        m
    }
}

/// One PSD coefficient of a constraint row (expanded: off-diagonal entries
/// appear once per index order).
#[derive(Clone, Copy, Debug)]
pub struct PsdEntry {
    pub block: u32,
    pub r: u32,
    pub c: u32,
    pub v: f64,
}

/// Sparse constraint row over the cone product.
#[derive(Clone, Debug, Default)]
pub struct SpRow {
    pub lp: Vec<(u32, f64)>,
    pub psd: Vec<PsdEntry>,
}

impl SpRow {
    /// `<A_i, x>`.
    pub fn apply(&self, x: &Point) -> f64 {
        let mut acc: f64 = self.lp.iter().map(|&(k, v)| v * x.lp[k as usize]).sum();
        for e in &self.psd {
            acc += e.v * x.psd[e.block as usize][(e.r as usize, e.c as usize)];
        }
        acc
    }

    /// `out += a * A_i` (adjoint accumulation).
    pub fn add_scaled_to(&self, a: f64, out: &mut Point) {
        for &(k, v) in &self.lp {
            out.lp[k as usize] += a * v;
        }
        for e in &self.psd {
            out.psd[e.block as usize][(e.r as usize, e.c as usize)] += a * e.v;
        }
    }
}

/// Problem in internal standard form.
pub struct Standard {
    pub layout: ConeLayout,
    pub rows: Vec<SpRow>,
    pub b: Vec<f64>,
    pub c: Point,
}

impl Standard {
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn apply_a(&self, x: &Point) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(x)).collect()
    }

    pub fn apply_at(&self, y: &[f64]) -> Point {
        let mut out = Point::zeros(&self.layout);
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                row.add_scaled_to(yi, &mut out);
            }
        }
        out
    }
}

/// Static structure extracted from the rows once per solve.
pub struct SchurPlan {
    /// Per PSD block: rows touching it, with that block's entries gathered.
    pub per_block: Vec<Vec<(usize, Vec<PsdEntry>)>>,
    /// Per orthant coordinate: (row, coeff) incidences.
    pub lp_incidence: Vec<Vec<(usize, f64)>>,
    /// Per block: row ids that touch only this block (local rows), in order.
    pub local: Vec<Vec<usize>>,
    /// Rows touching the orthant or several blocks, in order.
    pub border: Vec<usize>,
    /// For every row: its slot, `(block+1, pos)` for locals, `(0, pos)` for border.
    pub slot: Vec<(usize, usize)>,
}

impl SchurPlan {
    pub fn new(st: &Standard) -> Self {
        let nblocks = st.layout.psd.len();
        let m = st.rows.len();
        let mut per_block: Vec<Vec<(usize, Vec<PsdEntry>)>> = vec![Vec::new(); nblocks];
        let mut lp_incidence: Vec<Vec<(usize, f64)>> = vec![Vec::new(); st.layout.nonneg];
        let mut local: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
        let mut border: Vec<usize> = Vec::new();
        let mut slot = vec![(0usize, 0usize); m];

        for (i, row) in st.rows.iter().enumerate() {
            let mut blocks_touched: Vec<u32> = row.psd.iter().map(|e| e.block).collect();
            blocks_touched.sort_unstable();
            blocks_touched.dedup();
            for &b in &blocks_touched {
                let entries: Vec<PsdEntry> =
                    row.psd.iter().filter(|e| e.block == b).copied().collect();
                per_block[b as usize].push((i, entries));
            }
            for &(k, v) in &row.lp {
                lp_incidence[k as usize].push((i, v));
            }
            let is_local = row.lp.is_empty() && blocks_touched.len() == 1;
            if is_local {
                let b = blocks_touched[0] as usize;
                slot[i] = (b + 1, local[b].len());
                local[b].push(i);
            } else {
                slot[i] = (0, border.len());
                border.push(i);
            }
        }
        SchurPlan { per_block, lp_incidence, local, border, slot }
    }
}

/// Assembled `M = A W A^T` in block-arrow form.
pub struct BlockedM {
    pub mee: Vec<Mat>,
    pub f: Vec<Mat>,
    pub g: Mat,
}

/// Scaling data consumed by assembly: orthant weights and one dense `W` per
/// PSD block (`W(V) = W V W`).
pub struct ScalingW<'a> {
    pub lp_w2: &'a [f64],
    pub psd_w2: &'a [Mat],
}

pub fn assemble(plan: &SchurPlan, scaling: &ScalingW) -> BlockedM {
    let nblocks = plan.per_block.len();
    let nb = plan.border.len();
    let mut mee: Vec<Mat> = plan.local.iter().map(|l| Mat::zeros(l.len(), l.len())).collect();
    let mut f: Vec<Mat> = plan.local.iter().map(|l| Mat::zeros(l.len(), nb)).collect();
    let mut g = Mat::zeros(nb, nb);

    // PSD contributions: Tr(A_i W A_j W) over expanded entry lists.
    for bk in 0..nblocks {
        let w = &scaling.psd_w2[bk];
        let rows = &plan.per_block[bk];
        for (ii, (r1, e1)) in rows.iter().enumerate() {
            for (r2, e2) in rows[ii..].iter() {
                let mut acc = 0.0;
                for a in e1 {
                    let (ar, ac) = (a.r as usize, a.c as usize);
                    for b in e2 {
                        acc += a.v * b.v * w[(ac, b.r as usize)] * w[(b.c as usize, ar)];
                    }
                }
                place(plan, &mut mee, &mut f, &mut g, *r1, *r2, acc);
            }
        }
    }
    // Orthant contributions (all such rows are border rows).
    for (k, incid) in plan.lp_incidence.iter().enumerate() {
        let wk = scaling.lp_w2[k];
        for (ii, &(r1, c1)) in incid.iter().enumerate() {
            for &(r2, c2) in incid[ii..].iter() {
                place(plan, &mut mee, &mut f, &mut g, r1, r2, wk * c1 * c2);
            }
        }
    }
    BlockedM { mee, f, g }
}

fn place(
    plan: &SchurPlan,
    mee: &mut [Mat],
    f: &mut [Mat],
    g: &mut Mat,
    r1: usize,
    r2: usize,
    val: f64,
) {
    let (g1, p1) = plan.slot[r1];
    let (g2, p2) = plan.slot[r2];
    match (g1, g2) {
        (0, 0) => {
            g[(p1, p2)] += val;
            if p1 != p2 {
                g[(p2, p1)] += val;
            }
        }
        (0, bb) => {
            f[bb - 1][(p2, p1)] += val;
        }
        (bb, 0) => {
            f[bb - 1][(p1, p2)] += val;
        }
        (b1, b2) => {
            debug_assert_eq!(b1, b2, "local rows of different blocks cannot meet");
            let m = &mut mee[b1 - 1];
            m[(p1, p2)] += val;
            if p1 != p2 {
                m[(p2, p1)] += val;
            }
        }
    }
}

/// Factorization of a [`BlockedM`]: per-block Cholesky factors plus a dense
/// Schur complement on the border.
pub struct BlockedFactor {
    chol_e: Vec<Cholesky>,
    /// `K_e = M_ee^{-1} F_e`
    k: Vec<Mat>,
    chol_s: Cholesky,
    pub shift: f64,
}

impl BlockedFactor {
    pub fn new(m: &BlockedM) -> BlockedFactor {
        let mut shift_max = 0.0f64;
        let mut chol_e = Vec::with_capacity(m.mee.len());
        let mut k = Vec::with_capacity(m.mee.len());
        for (mee, fe) in m.mee.iter().zip(&m.f) {
            let (ch, shift) = Cholesky::regularized(mee);
            shift_max = shift_max.max(shift);
            k.push(ch.solve_mat(fe));
            chol_e.push(ch);
        }
        let mut s = m.g.clone();
        for (fe, ke) in m.f.iter().zip(&k) {
            let ftk = Mat::matmul_tn(fe, ke);
            s.axpy(-1.0, &ftk);
        }
        s.symmetrize();
        let (chol_s, shift) = Cholesky::regularized(&s);
        shift_max = shift_max.max(shift);
        BlockedFactor { chol_e, k, chol_s, shift: shift_max }
    }

    /// Single triangular pass (no refinement).
    fn solve_once(&self, m: &BlockedM, plan: &SchurPlan, rhs: &[f64]) -> Vec<f64> {
        let nb = plan.border.len();
        // Gather.
        let mut r_loc: Vec<Vec<f64>> =
            plan.local.iter().map(|l| l.iter().map(|&r| rhs[r]).collect()).collect();
        let mut r_bor: Vec<f64> = plan.border.iter().map(|&r| rhs[r]).collect();
        // Forward eliminate the local groups.
        for (b, rl) in r_loc.iter_mut().enumerate() {
            self.chol_e[b].solve_in_place(rl);
            // r_bor -= F_b^T z_b
            let fe = &m.f[b];
            for (i, &zi) in rl.iter().enumerate() {
                if zi == 0.0 {
                    continue;
                }
                let frow = fe.row(i);
                for j in 0..nb {
                    r_bor[j] -= frow[j] * zi;
                }
            }
        }
        self.chol_s.solve_in_place(&mut r_bor);
        // Back substitution: y_loc = z - K y_border.
        let mut out = vec![0.0; rhs.len()];
        for (b, locals) in plan.local.iter().enumerate() {
            let ke = &self.k[b];
            for (i, &row_id) in locals.iter().enumerate() {
                let mut v = r_loc[b][i];
                let krow = ke.row(i);
                for j in 0..nb {
                    v -= krow[j] * r_bor[j];
                }
                out[row_id] = v;
            }
        }
        for (j, &row_id) in plan.border.iter().enumerate() {
            out[row_id] = r_bor[j];
        }
        out
    }

    /// `M y` using the assembled pieces (for iterative refinement).
    fn apply_m(&self, m: &BlockedM, plan: &SchurPlan, y: &[f64]) -> Vec<f64> {
        let nb = plan.border.len();
        let y_bor: Vec<f64> = plan.border.iter().map(|&r| y[r]).collect();
        let mut out = vec![0.0; y.len()];
        let mut acc_bor = m.g.matvec(&y_bor);
        for (b, locals) in plan.local.iter().enumerate() {
            let y_loc: Vec<f64> = locals.iter().map(|&r| y[r]).collect();
            let mut v = m.mee[b].matvec(&y_loc);
            let fv = m.f[b].matvec(&y_bor);
            for i in 0..v.len() {
                v[i] += fv[i];
            }
            for (i, &row_id) in locals.iter().enumerate() {
                out[row_id] = v[i];
            }
            // acc_bor += F_b^T y_loc
            let fe = &m.f[b];
            for (i, &yi) in y_loc.iter().enumerate() {
                if yi == 0.0 {
                    continue;
                }
                let frow = fe.row(i);
                for j in 0..nb {
                    acc_bor[j] += frow[j] * yi;
                }
            }
        }
        for (j, &row_id) in plan.border.iter().enumerate() {
            out[row_id] = acc_bor[j];
        }
        out
    }

    /// Solve with two rounds of iterative refinement.
    pub fn solve(&self, m: &BlockedM, plan: &SchurPlan, rhs: &[f64]) -> Vec<f64> {
        let mut y = self.solve_once(m, plan, rhs);
        for _ in 0..2 {
            let my = self.apply_m(m, plan, &y);
            let mut res = vec![0.0; rhs.len()];
            let mut rnorm = 0.0f64;
            for i in 0..rhs.len() {
                res[i] = rhs[i] - my[i];
                rnorm = rnorm.max(res[i].abs());
            }
            let scale = rhs.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
            if rnorm <= 1e-14 * scale {
                break;
            }
            let dy = self.solve_once(m, plan, &res);
            for i in 0..y.len() {
                y[i] += dy[i];
            }
        }
        y
    }
}
