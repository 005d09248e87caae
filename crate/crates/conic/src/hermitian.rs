//! Real embedding of complex Hermitian matrices.
//!
//! The solver works over real symmetric blocks. A complex Hermitian matrix
//! `H = A + iB` (`A` symmetric, `B` antisymmetric, both real) embeds as
//!
//! ```text
//!   T(H) = [ A  -B ]
//!          [ B   A ]
//! ```
//!
//! of twice the dimension. `T` is a *-ring homomorphism (`T(GH) = T(G)T(H)`,
//! `T(H^*) = T(H)^T`) and every eigenvalue of `H` appears in `T(H)` with
//! doubled multiplicity, so `H` is positive semidefinite exactly when `T(H)`
//! is. Hermitian PSD constraints can therefore be posed verbatim to the real
//! engine at a factor ~8 cost in factorization work, which is the honest
//! fallback whenever a problem cannot be rewritten with real moments alone.

use num_complex::Complex64;

use crate::dense::Mat;

/// Embed an `n x n` complex matrix given in row-major order into its real
/// `2n x 2n` image. The input need not be Hermitian; the image is symmetric
/// exactly when it is.
pub fn embed(n: usize, h: &[Complex64]) -> Mat {
    assert_eq!(h.len(), n * n, "expected a square row-major matrix");
    let mut out = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[i * n + j];
            out[(i, j)] = v.re;
            out[(n + i, n + j)] = v.re;
            out[(i, n + j)] = -v.im;
            out[(n + i, j)] = v.im;
        }
    }
    out
}

/// Recover the complex matrix from a (possibly inexactly structured) image,
/// averaging the two real copies and the two imaginary copies.
pub fn extract(m: &Mat) -> Vec<Complex64> {
    assert_eq!(m.rows(), m.cols(), "expected a square matrix");
    assert_eq!(m.rows() % 2, 0, "expected an even dimension");
    let n = m.rows() / 2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (m[(i, j)] + m[(n + i, n + j)]);
            let im = 0.5 * (m[(n + i, j)] - m[(i, n + j)]);
            out.push(Complex64::new(re, im));
        }
    }
    out
}
