//! Dense matrix storage and the handful of factorizations the solver needs.
//!
//! Everything here is deliberately plain: row-major `Vec<f64>` storage,
//! unblocked Cholesky with optional diagonal regularization, cyclic Jacobi
//! eigendecomposition for symmetric matrices, and triangular solves. Problem
//! sizes in this workspace top out around a few hundred rows per block, where
//! these kernels are fast enough and bitwise deterministic.

use std::fmt;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.5e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Force exact symmetry by averaging with the transpose in place.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Mat) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += a * y;
        }
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &Mat) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `C = A * B`.
    pub fn matmul(a: &Mat, b: &Mat) -> Mat {
        assert_eq!(a.cols, b.rows);
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            let arow = a.row(i);
            let crow = c.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = b.row(k);
                for j in 0..brow.len() {
                    crow[j] += aik * brow[j];
                }
            }
        }
        c
    }

    /// `C = A^T * B`.
    pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
        assert_eq!(a.rows, b.rows);
        let mut c = Mat::zeros(a.cols, b.cols);
        for k in 0..a.rows {
            let arow = a.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let crow = c.row_mut(i);
                for j in 0..brow.len() {
                    crow[j] += aki * brow[j];
                }
            }
        }
        c
    }

    /// Matrix-vector product `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    /// Plain `A = L L^T`; fails on a non-positive pivot.
    pub fn new(a: &Mat) -> Option<Cholesky> {
        Self::with_shift(a, 0.0)
    }

    /// Cholesky of `A + shift*I`; fails on a non-positive pivot.
    pub fn with_shift(a: &Mat, shift: f64) -> Option<Cholesky> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = a.clone();
        if shift != 0.0 {
            for i in 0..n {
                l[(i, i)] += shift;
            }
        }
        for j in 0..n {
            // Update column j with the outer-product contributions of
            // previous columns, then scale.
            let mut d = l[(j, j)];
            for k in 0..j {
                let ljk = l[(j, k)];
                d -= ljk * ljk;
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut v = l[(i, j)];
                let lrow_i = i * n;
                let lrow_j = j * n;
                for k in 0..j {
                    v -= l.data[lrow_i + k] * l.data[lrow_j + k];
                }
                l[(i, j)] = v / d;
            }
        }
        // Zero the strict upper triangle so L is usable as a plain matrix.
        for i in 0..n {
            for j in (i + 1)..n {
                l[(i, j)] = 0.0;
            }
        }
        Some(Cholesky { l })
    }

    /// Cholesky that escalates a diagonal shift deterministically until the
    /// factorization succeeds. Returns the factor and the shift used.
    pub fn regularized(a: &Mat) -> (Cholesky, f64) {
        if let Some(c) = Cholesky::new(a) {
            return (c, 0.0);
        }
        let base = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let mut shift = base * 1e-14;
        loop {
            if let Some(c) = Cholesky::with_shift(a, shift) {
                return (c, shift);
            }
            shift *= 100.0;
            assert!(shift.is_finite(), "regularized Cholesky failed to converge");
        }
    }

    pub fn factor(&self) -> &Mat {
        &self.l
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        // Forward: L z = b
        for i in 0..n {
            let row = self.l.row(i);
            let mut v = b[i];
            for k in 0..i {
                v -= row[k] * b[k];
            }
            b[i] = v / row[i];
        }
        // Backward: L^T x = z
        for i in (0..n).rev() {
            let mut v = b[i];
            for (k, &bk) in b.iter().enumerate().skip(i + 1) {
                v -= self.l[(k, i)] * bk;
            }
            b[i] = v / self.l[(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve `A X = B` column-wise for a dense right-hand-side matrix.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let n = self.l.rows;
        assert_eq!(b.rows, n);
        let mut x = b.clone();
        // Work column by column on the transposed layout for cache sanity.
        let mut col = vec![0.0; n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = x[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                x[(i, j)] = col[i];
            }
        }
        x
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with `A = V diag(w) V^T`, eigenvalues
/// ascending. Deterministic sweep order; accurate for the well-conditioned
/// moderate sizes used here.
pub fn sym_eig(a: &Mat) -> (Vec<f64>, Mat) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Mat::identity(n);
    if n <= 1 {
        let w = if n == 1 { vec![m[(0, 0)]] } else { vec![] };
        return (w, v);
    }
    let max_sweeps = 64;
    for _sweep in 0..max_sweeps {
        // Off-diagonal Frobenius norm controls convergence.
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale = (0..n).fold(0.0f64, |s, i| s.max(m[(i, i)].abs())).max(1e-300);
        if off.sqrt() <= 1e-15 * scale * (n as f64) {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                if apq.abs() <= 1e-300 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                // Classic Jacobi rotation choosing the smaller angle.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Apply rotation to rows/cols p and q of M.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                // Accumulate eigenvectors.
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut w: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    // Sort ascending with a deterministic permutation applied to V's columns.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| w[i].total_cmp(&w[j]));
    let w_sorted: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
    let mut v_sorted = Mat::zeros(n, n);
    for (newj, &oldj) in idx.iter().enumerate() {
        for k in 0..n {
            v_sorted[(k, newj)] = v[(k, oldj)];
        }
    }
    w = w_sorted;
    (w, v_sorted)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(a: &Mat) -> f64 {
    let (w, _) = sym_eig(a);
    w.first().copied().unwrap_or(0.0)
}

/// Build `V diag(f(w)) V^T` from an eigendecomposition.
pub fn sym_func(w: &[f64], v: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let n = v.rows();
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let fk = f(w[k]);
        if fk == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = v[(i, k)] * fk;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for j in 0..n {
                row[j] += vik * v[(j, k)];
            }
        }
    }
    out.symmetrize();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = B B^T + I is SPD for any B.
        let b = Mat::from_rows(&[
            vec![1.0, 2.0, -1.0],
            vec![0.5, -0.3, 2.0],
            vec![-1.0, 1.0, 0.25],
        ]);
        let mut a = Mat::matmul(&b, &b.transpose());
        for i in 0..3 {
            a[(i, i)] += 1.0;
        }
        let chol = Cholesky::new(&a).expect("SPD");
        let x_true = vec![1.0, -2.0, 3.0];
        let rhs = a.matvec(&x_true);
        let x = chol.solve(&rhs);
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!(approx(*xi, *ti, 1e-12), "{x:?}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::new(&a).is_none());
        let (_, shift) = Cholesky::regularized(&a);
        assert!(shift > 0.0);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (w, v) = sym_eig(&a);
        assert!(approx(w[0], 1.0, 1e-14));
        assert!(approx(w[1], 3.0, 1e-14));
        // Reconstruction A = V diag(w) V^T.
        let recon = sym_func(&w, &v, |x| x);
        for i in 0..2 {
            for j in 0..2 {
                assert!(approx(recon[(i, j)], a[(i, j)], 1e-13));
            }
        }
    }

    #[test]
    fn jacobi_handles_larger_random_symmetric() {
        // Deterministic pseudo-random symmetric matrix; check V orthogonal
        // and reconstruction error.
        let n = 40;
        let mut a = Mat::zeros(n, n);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            for j in i..n {
                let v = next();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let (w, v) = sym_eig(&a);
        let recon = sym_func(&w, &v, |x| x);
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                err = err.max((recon[(i, j)] - a[(i, j)]).abs());
            }
        }
        assert!(err < 1e-12, "reconstruction error {err}");
        let vtv = Mat::matmul_tn(&v, &v);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - expect).abs() < 1e-12);
            }
        }
        // Eigenvalues ascending.
        for k in 1..n {
            assert!(w[k] >= w[k - 1]);
        }
    }
}
