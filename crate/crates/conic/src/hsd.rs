//! Homogeneous self-dual interior-point engine.
//!
//! Mehrotra-style predictor-corrector with Nesterov-Todd scaling over the
//! embedding
//!
//! ```text
//!   A x - b tau          = 0
//!   -A^T y + c tau - s   = 0
//!   b^T y - c^T x - kappa = 0
//!   x, s in K,  tau, kappa >= 0
//! ```
//!
//! A converged point with `tau >> kappa` yields an optimal primal-dual pair
//! `(x, y, s)/tau`; a point with `kappa >> tau` yields an infeasibility
//! certificate (`b^T y > 0`: no primal-feasible point; `c^T x < 0`: primal
//! unbounded / dual infeasible). The algorithm is deterministic: fixed
//! iteration schedule, no randomization, dense factorizations with a
//! deterministic regularization ladder.

use crate::dense::{min_eig, sym_eig, sym_func, Mat};
use crate::problem::{assemble, BlockedFactor, ConeLayout, Point, SchurPlan, ScalingW, Standard};
use crate::{SolveReport, SolveStatus, SolverError, SolverOptions};

/// Raw engine output on the internal standard form.
pub struct HsdOutcome {
    pub status: SolveStatus,
    /// Scaled primal solution `x/tau` (Optimal) or unbounded ray (DualInfeasible).
    pub x: Point,
    /// Scaled dual solution `y/tau` (Optimal) or Farkas certificate (PrimalInfeasible).
    pub y: Vec<f64>,
    pub report: SolveReport,
}

struct PsdScale {
    /// `W` with `W(V) = W V W` mapping the dual step; `W = R R^T`.
    w2: Mat,
    r: Mat,
    rinv: Mat,
    lambda: Vec<f64>,
}

struct Scaling {
    lp_w2: Vec<f64>,
    lp_lambda: Vec<f64>,
    psd: Vec<PsdScale>,
}

fn nt_scaling(layout: &ConeLayout, x: &Point, s: &Point) -> Scaling {
    let lp_w2: Vec<f64> = x.lp.iter().zip(&s.lp).map(|(&xi, &si)| xi / si).collect();
    let lp_lambda: Vec<f64> = x.lp.iter().zip(&s.lp).map(|(&xi, &si)| (xi * si).sqrt()).collect();
    let mut psd = Vec::with_capacity(layout.psd.len());
    for (xb, sb) in x.psd.iter().zip(&s.psd) {
        let (wx, vx) = sym_eig(xb);
        let clamp = |v: f64| v.max(1e-300);
        let xh = sym_func(&wx, &vx, |v| clamp(v).sqrt());
        let xmh = sym_func(&wx, &vx, |v| 1.0 / clamp(v).sqrt());
        let t = Mat::matmul(&Mat::matmul(&xh, sb), &xh);
        let (wt, vt) = sym_eig(&t);
        let lambda: Vec<f64> = wt.iter().map(|&v| clamp(v).sqrt()).collect();
        // R = X^{1/2} V D^{-1/4},  R^{-1} = D^{1/4} V^T X^{-1/2},  W = R R^T.
        let mut r = Mat::matmul(&xh, &vt);
        for i in 0..r.rows() {
            for j in 0..r.cols() {
                r[(i, j)] /= clamp(wt[j]).powf(0.25);
            }
        }
        let mut rinv = Mat::matmul_tn(&vt, &xmh);
        for i in 0..rinv.rows() {
            let f = clamp(wt[i]).powf(0.25);
            for j in 0..rinv.cols() {
                rinv[(i, j)] *= f;
            }
        }
        let mut w2 = Mat::matmul(&r, &r.transpose());
        w2.symmetrize();
        psd.push(PsdScale { w2, r, rinv, lambda });
    }
    Scaling { lp_w2, lp_lambda, psd }
}

/// Apply the scaling operator `W(.)`: orthant `w^2 .`, PSD `W . W`.
fn apply_w(sc: &Scaling, p: &Point) -> Point {
    let lp = p.lp.iter().zip(&sc.lp_w2).map(|(v, w)| v * w).collect();
    let psd = p
        .psd
        .iter()
        .zip(&sc.psd)
        .map(|(m, s)| {
            let mut out = Mat::matmul(&Mat::matmul(&s.w2, m), &s.w2);
            out.symmetrize();
            out
        })
        .collect();
    Point { lp, psd }
}

/// Scaled-space complementarity right-hand side: one vector for the orthant,
/// one symmetric matrix per PSD block.
struct CompRhs {
    lp: Vec<f64>,
    psd: Vec<Mat>,
}

/// Map the complementarity RHS back through the scaling:
/// `G(rc) = w . (rc/lambda)` on the orthant, `R Linv(rc) R^T` on PSD blocks,
/// where `Linv(rc)_ij = 2 rc_ij / (lambda_i + lambda_j)`.
fn back_map(sc: &Scaling, rc: &CompRhs) -> Point {
    let lp = rc
        .lp
        .iter()
        .zip(sc.lp_lambda.iter().zip(&sc.lp_w2))
        .map(|(v, (l, w2))| w2.sqrt() * (v / l))
        .collect();
    let mut psd = Vec::with_capacity(rc.psd.len());
    for (m, s) in rc.psd.iter().zip(&sc.psd) {
        let n = m.rows();
        let mut linv = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                linv[(i, j)] = 2.0 * m[(i, j)] / (s.lambda[i] + s.lambda[j]);
            }
        }
        let mut out = Mat::matmul(&Mat::matmul(&s.r, &linv), &s.r.transpose());
        out.symmetrize();
        psd.push(out);
    }
    Point { lp, psd }
}

struct Direction {
    dx: Point,
    dy: Vec<f64>,
    ds: Point,
    dtau: f64,
    dkappa: f64,
}

impl Direction {
    fn is_finite(&self) -> bool {
        self.dtau.is_finite()
            && self.dkappa.is_finite()
            && self.dx.norm_inf().is_finite()
            && self.ds.norm_inf().is_finite()
            && self.dy.iter().all(|v| v.is_finite())
    }
}

/// Largest step keeping `lambda + a d` in the cone for a scaled direction;
/// `0` when the direction data is unusable.
fn max_step_point(sc: &Scaling, d_scaled_lp: &[f64], d_scaled_psd: &[Mat]) -> f64 {
    let mut amax = f64::INFINITY;
    for (l, d) in sc.lp_lambda.iter().zip(d_scaled_lp) {
        if !d.is_finite() {
            return 0.0;
        }
        if *d < 0.0 {
            amax = amax.min(-l / d);
        }
    }
    for (s, d) in sc.psd.iter().zip(d_scaled_psd) {
        // Lambda + a dbar >= 0  <=>  I + a L^{-1/2} dbar L^{-1/2} >= 0.
        let n = d.rows();
        let mut c = Mat::zeros(n, n);
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = d[(i, j)] / (s.lambda[i] * s.lambda[j]).sqrt();
                c[(i, j)] = v;
                scale = scale.max(v.abs());
            }
        }
        if !scale.is_finite() {
            return 0.0;
        }
        if scale == 0.0 {
            continue;
        }
        // Normalize before the eigensolve so huge directions cannot overflow.
        c.scale(1.0 / scale);
        let w = min_eig(&c) * scale;
        if w < 0.0 {
            amax = amax.min(-1.0 / w);
        }
    }
    amax
}

/// Residual-based classification of an iterate: optimal, an infeasibility
/// certificate, or nothing yet. `cert_tol` controls how clean a certificate
/// must be before it is trusted.
#[allow(clippy::too_many_arguments)]
fn classify(
    st: &Standard,
    x: &Point,
    y: &[f64],
    s: &Point,
    tau: f64,
    kappa: f64,
    opts: &SolverOptions,
    cert_tol: f64,
    bnorm: f64,
    cnorm: f64,
    iterations: usize,
    regularization: f64,
) -> Option<HsdOutcome> {
    let nu = st.layout.degree();
    let ax = st.apply_a(x);
    let aty = st.apply_at(y);
    let cx = st.c.dot(x);
    let by: f64 = st.b.iter().zip(y).map(|(b, y)| b * y).sum();
    let mu = (x.dot(s) + tau * kappa) / (nu + 1.0);

    let report = |status: SolveStatus, pres: f64, dres: f64, relgap: f64, pobj: f64, dobj: f64| {
        SolveReport {
            status,
            iterations,
            primal_objective: pobj,
            dual_objective: dobj,
            relative_gap: relgap,
            primal_residual: pres,
            dual_residual: dres,
            regularization,
            mu,
        }
    };

    if tau > 0.0 && tau.is_finite() {
        let pres = ax
            .iter()
            .zip(&st.b)
            .fold(0.0f64, |a, (ax, b)| a.max((ax - b * tau).abs()))
            / (tau * (1.0 + bnorm));
        let mut rd = st.c.clone();
        rd.scale(tau);
        rd.axpy(-1.0, &aty);
        rd.axpy(-1.0, s);
        let dres = rd.norm_inf() / (tau * (1.0 + cnorm));
        let pobj = cx / tau;
        let dobj = by / tau;
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        if pres <= opts.tol_feas && dres <= opts.tol_feas && relgap <= opts.tol_gap {
            let mut xs = x.clone();
            xs.scale(1.0 / tau);
            let ys: Vec<f64> = y.iter().map(|v| v / tau).collect();
            return Some(HsdOutcome {
                status: SolveStatus::Optimal,
                x: xs,
                y: ys,
                report: report(SolveStatus::Optimal, pres, dres, relgap, pobj, dobj),
            });
        }
    }

    // Certificates are only meaningful once kappa dominates tau.
    if tau <= 1e-2 * kappa {
        if by > 0.0 {
            let mut viol = aty.clone();
            viol.axpy(1.0, s);
            if viol.norm_inf() * (1.0 + bnorm) <= cert_tol * by * (1.0 + cnorm) {
                let scale = 1.0 / by;
                let yc: Vec<f64> = y.iter().map(|v| v * scale).collect();
                return Some(HsdOutcome {
                    status: SolveStatus::PrimalInfeasible,
                    x: Point::zeros(&st.layout),
                    y: yc,
                    report: report(SolveStatus::PrimalInfeasible, 0.0, 0.0, 0.0, 0.0, 0.0),
                });
            }
        }
        if cx < 0.0 {
            let axn = ax.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if axn * (1.0 + cnorm) <= cert_tol * (-cx) * (1.0 + bnorm) {
                let scale = 1.0 / (-cx);
                let mut xc = x.clone();
                xc.scale(scale);
                return Some(HsdOutcome {
                    status: SolveStatus::DualInfeasible,
                    x: xc,
                    y: vec![0.0; st.m()],
                    report: report(SolveStatus::DualInfeasible, 0.0, 0.0, 0.0, 0.0, 0.0),
                });
            }
        }
    }
    None
}

pub fn solve_standard(st: &Standard, opts: &SolverOptions) -> Result<HsdOutcome, SolverError> {
    let m = st.m();
    if m == 0 {
        return Err(SolverError::InvalidProblem("at least one constraint row is required".into()));
    }
    for (i, row) in st.rows.iter().enumerate() {
        if row.lp.is_empty() && row.psd.is_empty() {
            return Err(SolverError::InvalidProblem(format!("constraint row {i} is empty")));
        }
    }
    let layout = &st.layout;
    let nu = layout.degree();
    let plan = SchurPlan::new(st);

    let mut x = Point::interior_unit(layout);
    let mut s = Point::interior_unit(layout);
    let mut y = vec![0.0; m];
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let bnorm = st.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cnorm = st.c.norm_inf();

    // Best iterate so far by combined residual, kept as a fallback.
    let mut best: Option<(f64, Point, Vec<f64>, Point, f64, f64)> = None;
    let mut shift_used = 0.0f64;
    let mut iterations = 0usize;

    for iter in 0..opts.max_iter {
        iterations = iter;
        if let Some(out) = classify(
            st, &x, &y, &s, tau, kappa, opts, opts.tol_infeas, bnorm, cnorm, iter, shift_used,
        ) {
            return Ok(out);
        }

        // ---- residuals ----------------------------------------------------
        let ax = st.apply_a(&x);
        let rp: Vec<f64> = ax.iter().zip(&st.b).map(|(a, b)| a - b * tau).collect();
        let aty = st.apply_at(&y);
        // rd = -A^T y - s + c tau
        let mut rd = st.c.clone();
        rd.scale(tau);
        rd.axpy(-1.0, &aty);
        rd.axpy(-1.0, &s);
        let cx = st.c.dot(&x);
        let by: f64 = st.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let rg = by - cx - kappa;
        let mu = (x.dot(&s) + tau * kappa) / (nu + 1.0);
        if !mu.is_finite() || mu <= 1e-20 {
            break;
        }

        // Track the best iterate for the fallback path.
        if tau > 0.0 {
            let pres = rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (tau * (1.0 + bnorm));
            let dres = rd.norm_inf() / (tau * (1.0 + cnorm));
            let pobj = cx / tau;
            let dobj = by / tau;
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
            let quality = pres.max(dres).max(relgap);
            if quality.is_finite() && best.as_ref().is_none_or(|(q, ..)| quality < *q) {
                best = Some((quality, x.clone(), y.clone(), s.clone(), tau, kappa));
            }
        }

        // ---- scaling, Schur assembly, factorization ------------------------
        let sc = nt_scaling(layout, &x, &s);
        let psd_w2: Vec<Mat> = sc.psd.iter().map(|p| p.w2.clone()).collect();
        let scaling_ref = ScalingW { lp_w2: &sc.lp_w2, psd_w2: &psd_w2 };
        let mblocks = assemble(&plan, &scaling_ref);
        let factor = BlockedFactor::new(&mblocks);
        shift_used = shift_used.max(factor.shift);

        // Shared solve: M u = b + A W c.
        let wc = apply_w(&sc, &st.c);
        let awc = st.apply_a(&wc);
        let rhs_u: Vec<f64> = st.b.iter().zip(&awc).map(|(b, a)| b + a).collect();
        let u = factor.solve(&mblocks, &plan, &rhs_u);

        // One direction solve for a given complementarity RHS.
        let solve_dir = |rc: &CompRhs, rtk: f64| -> Direction {
            let gpt = back_map(&sc, rc);
            let agpt = st.apply_a(&gpt);
            let wrd = apply_w(&sc, &rd);
            let awrd = st.apply_a(&wrd);
            let rhs_v: Vec<f64> = (0..m).map(|i| -rp[i] - agpt[i] + awrd[i]).collect();
            let v = factor.solve(&mblocks, &plan, &rhs_v);

            // p1 = c - A^T u, p0 = rd - A^T v
            let atu = st.apply_at(&u);
            let mut p1 = st.c.clone();
            p1.axpy(-1.0, &atu);
            let atv = st.apply_at(&v);
            let mut p0 = rd.clone();
            p0.axpy(-1.0, &atv);

            let q1 = apply_w(&sc, &p1);
            let mut q0 = gpt;
            let wp0 = apply_w(&sc, &p0);
            q0.axpy(-1.0, &wp0);

            let denom = st.b.iter().zip(&u).map(|(b, u)| b * u).sum::<f64>()
                + st.c.dot(&q1)
                + kappa / tau;
            let numer = st.c.dot(&q0) - st.b.iter().zip(&v).map(|(b, v)| b * v).sum::<f64>()
                + rtk / tau
                - rg;
            let dtau = if denom.abs() > 1e-300 { numer / denom } else { 0.0 };

            let dy: Vec<f64> = (0..m).map(|i| u[i] * dtau + v[i]).collect();
            // ds = c dtau - A^T dy + rd
            let atdy = st.apply_at(&dy);
            let mut ds = st.c.clone();
            ds.scale(dtau);
            ds.axpy(-1.0, &atdy);
            ds.axpy(1.0, &rd);
            // dx = q0 - dtau q1
            let mut dx = q0;
            dx.axpy(-dtau, &q1);
            let dkappa = (rtk - kappa * dtau) / tau;
            Direction { dx, dy, ds, dtau, dkappa }
        };

        // Scaled representation of a direction: (dx_lp, dx_psd, ds_lp, ds_psd).
        let scale_dir = |d: &Direction| -> (Vec<f64>, Vec<Mat>, Vec<f64>, Vec<Mat>) {
            let dx_lp: Vec<f64> =
                d.dx.lp.iter().zip(&sc.lp_w2).map(|(v, w2)| v / w2.sqrt()).collect();
            let ds_lp: Vec<f64> =
                d.ds.lp.iter().zip(&sc.lp_w2).map(|(v, w2)| v * w2.sqrt()).collect();
            let mut dx_psd = Vec::new();
            let mut ds_psd = Vec::new();
            for (b, psc) in sc.psd.iter().enumerate() {
                let mut dxb =
                    Mat::matmul(&Mat::matmul(&psc.rinv, &d.dx.psd[b]), &psc.rinv.transpose());
                dxb.symmetrize();
                dx_psd.push(dxb);
                let mut dsb = Mat::matmul_tn(&psc.r, &Mat::matmul(&d.ds.psd[b], &psc.r));
                dsb.symmetrize();
                ds_psd.push(dsb);
            }
            (dx_lp, dx_psd, ds_lp, ds_psd)
        };

        let step_len = |d: &Direction, ds: &(Vec<f64>, Vec<Mat>, Vec<f64>, Vec<Mat>)| -> f64 {
            let mut a = max_step_point(&sc, &ds.0, &ds.1);
            a = a.min(max_step_point(&sc, &ds.2, &ds.3));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        // ---- predictor ------------------------------------------------------
        let rc_aff = CompRhs {
            lp: sc.lp_lambda.iter().map(|l| -l * l).collect(),
            psd: sc
                .psd
                .iter()
                .map(|p| {
                    let n = p.lambda.len();
                    let mut m = Mat::zeros(n, n);
                    for i in 0..n {
                        m[(i, i)] = -p.lambda[i] * p.lambda[i];
                    }
                    m
                })
                .collect(),
        };
        let aff = solve_dir(&rc_aff, -tau * kappa);
        if !aff.is_finite() {
            break;
        }
        let aff_scaled = scale_dir(&aff);
        let alpha_aff = step_len(&aff, &aff_scaled).min(1.0);

        // mu after the affine step, via bilinear expansion.
        let xs = x.dot(&s);
        let xds = x.dot(&aff.ds);
        let dxs = aff.dx.dot(&s);
        let dxds = aff.dx.dot(&aff.ds);
        let mu_aff = ((xs + alpha_aff * (xds + dxs) + alpha_aff * alpha_aff * dxds)
            + (tau + alpha_aff * aff.dtau) * (kappa + alpha_aff * aff.dkappa))
            / (nu + 1.0);
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // ---- corrector ------------------------------------------------------
        let (dxa_lp, dxa_psd, dsa_lp, dsa_psd) = aff_scaled;
        let rc_comb = CompRhs {
            lp: (0..sc.lp_lambda.len())
                .map(|i| -sc.lp_lambda[i] * sc.lp_lambda[i] + sigma * mu - dxa_lp[i] * dsa_lp[i])
                .collect(),
            psd: (0..sc.psd.len())
                .map(|b| {
                    let lam = &sc.psd[b].lambda;
                    let n = lam.len();
                    let prod = Mat::matmul(&dxa_psd[b], &dsa_psd[b]);
                    let mut m = Mat::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            // Symmetrized product (dx ds + ds dx) / 2.
                            m[(i, j)] = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                        }
                        m[(i, i)] += -lam[i] * lam[i] + sigma * mu;
                    }
                    m
                })
                .collect(),
        };
        let rtk_comb = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        let dir = solve_dir(&rc_comb, rtk_comb);
        if !dir.is_finite() {
            break;
        }
        let dir_scaled = scale_dir(&dir);
        let alpha = (0.99 * step_len(&dir, &dir_scaled)).min(1.0);

        if !alpha.is_finite() || alpha <= 1e-10 {
            break;
        }

        // ---- update ----------------------------------------------------------
        x.axpy(alpha, &dir.dx);
        s.axpy(alpha, &dir.ds);
        for b in &mut x.psd {
            b.symmetrize();
        }
        for b in &mut s.psd {
            b.symmetrize();
        }
        for (yi, dyi) in y.iter_mut().zip(&dir.dy) {
            *yi += alpha * dyi;
        }
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
    }

    // The loop gave up. Try certificates once more with a relaxed cleanliness
    // requirement, then fall back to the best stored iterate if it is within
    // a grace factor of the tolerances.
    let loose = opts.tol_infeas.max(1e-6);
    if let Some(out) = classify(
        st, &x, &y, &s, tau, kappa, opts, loose, bnorm, cnorm, iterations, shift_used,
    ) {
        return Ok(out);
    }
    if let Some((quality, bx, by_, bs, btau, bkappa)) = best {
        let grace = SolverOptions {
            tol_feas: opts.tol_feas * 1e3,
            tol_gap: opts.tol_gap * 1e3,
            ..opts.clone()
        };
        if let Some(out) = classify(
            st, &bx, &by_, &bs, btau, bkappa, &grace, loose, bnorm, cnorm, iterations, shift_used,
        ) {
            return Ok(out);
        }
        return Err(SolverError::MaxIterations { iterations, best_quality: quality });
    }
    Err(SolverError::MaxIterations { iterations, best_quality: f64::INFINITY })
}
