// Scratch probe: near-exact certification thresholds for the d = 3, 4
// maximally entangled qudit setups, removing both discretizations that the
// shipping pipeline quantizes with (the guessing-curve ladder and the tuning
// grid).  pg(β) is sampled densely per setup and interpolated linearly;
// (ξ, η) is optimized by zooming log grids.  Answers whether the claimed
// "higher dimension certifies at smaller N" ordering holds for these
// formulas at all, independent of grid resolution.
use bellforge::finitekey::{gamma_range, key_length, EpsilonBudget, ProtocolParams};
use bellforge::npa;
use bellforge::polytope::optimal_hyperplane;
use bellforge::quantum::{cglmp_setup, key_qber, pe_behavior};

struct Curve {
    betas: Vec<f64>,
    pgs: Vec<f64>,
}

impl Curve {
    fn lookup(&self, beta: f64) -> f64 {
        if beta <= self.betas[0] {
            return 1.0;
        }
        let last = self.betas.len() - 1;
        if beta >= self.betas[last] {
            return self.pgs[last];
        }
        let j = self.betas.partition_point(|&b| b <= beta);
        let (b0, b1) = (self.betas[j - 1], self.betas[j]);
        let t = (beta - b0) / (b1 - b0);
        self.pgs[j - 1] * (1.0 - t) + self.pgs[j] * t
    }
}

fn main() {
    let eps = EpsilonBudget::default();
    for d in [3usize, 4] {
        let setup = cglmp_setup(d, 0.0).unwrap();
        let p = pe_behavior(&setup).unwrap();
        let f = optimal_hyperplane(&p).unwrap();
        let bell = f.evaluate(&p);
        let c = f.c;
        let m = 2usize;
        let uniform = vec![1.0 / (m * m) as f64; m * m];
        let gamma = gamma_range(&f, &uniform).unwrap();
        let qber = key_qber(&setup).unwrap();
        println!("d={d}: c={c:.6} bell={bell:.6} gap={:.6} gamma={gamma:.3} qber={qber:.2e}",
            bell - c);

        // Dense pg samples, concentrated where thresholds live.
        let offsets = [
            0.60, 0.55, 0.50, 0.46, 0.42, 0.385, 0.35, 0.32, 0.295, 0.27, 0.25, 0.23, 0.215,
            0.20, 0.18, 0.155, 0.13, 0.11, 0.09, 0.065, 0.048, 0.035, 0.025, 0.018, 0.013,
            0.009, 0.0065, 0.0045, 0.003, 0.002, 0.0012, 0.0007, 0.0004, 0.0002, 0.0001,
            0.00003, 0.00001, 0.000001, 0.0000003,
        ];
        let mut betas: Vec<f64> = Vec::new();
        let mut pgs: Vec<f64> = Vec::new();
        betas.push(c);
        pgs.push(1.0);
        for &t in offsets.iter().rev() {
            let beta = bell - t * (bell - c);
            let pg = match npa::guessing_probability(&f, beta) {
                Ok(b) => b.pg,
                Err(_) => {
                    let opts = conic::SolverOptions {
                        tol_feas: 1e-6,
                        tol_gap: 1e-6,
                        ..conic::SolverOptions::default()
                    };
                    npa::guessing_probability_with(&f, beta, &opts).unwrap().pg
                }
            };
            betas.push(beta);
            pgs.push(pg);
        }
        // restore ascending beta order
        let mut idx: Vec<usize> = (0..betas.len()).collect();
        idx.sort_by(|&a, &b| betas[a].total_cmp(&betas[b]));
        let curve = Curve {
            betas: idx.iter().map(|&i| betas[i]).collect(),
            pgs: idx.iter().map(|&i| pgs[i]).collect(),
        };
        println!(
            "  pg at offsets 0.09/0.02/0.002/3e-7: {:.4}/{:.4}/{:.4}/{:.4}",
            curve.lookup(bell - 0.09 * (bell - c)),
            curve.lookup(bell - 0.02 * (bell - c)),
            curve.lookup(bell - 0.002 * (bell - c)),
            curve.lookup(bell - 3e-7 * (bell - c)),
        );

        let best_l = |n: u64| -> (f64, f64, f64, f64) {
            // zooming log-grid search over (xi, eta)
            let (mut xlo, mut xhi) = (1e-6_f64, 0.45_f64);
            let (mut elo, mut ehi) = (1e-7_f64, 0.25_f64);
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0, 1.0);
            for _round in 0..3 {
                let mut bx = (xlo * xhi).sqrt();
                let mut be = (elo * ehi).sqrt();
                for i in 0..40 {
                    let xi = xlo * (xhi / xlo).powf(i as f64 / 39.0);
                    for j in 0..34 {
                        let eta = elo * (ehi / elo).powf(j as f64 / 33.0);
                        if xi + eta >= 1.0 {
                            continue;
                        }
                        let params = match ProtocolParams::new(n, xi, eta, d, eps) {
                            Ok(p) => p,
                            Err(_) => continue,
                        };
                        let beta = bell - params.delta_est(gamma) - params.delta_con(gamma);
                        let pg = curve.lookup(beta);
                        let rep = match key_length(&params, pg, qber) {
                            Ok(r) => r,
                            Err(_) => continue,
                        };
                        if rep.l > best.0 {
                            best = (rep.l, xi, eta, pg);
                            bx = xi;
                            be = eta;
                        }
                    }
                }
                let spread_x = (xhi / xlo).powf(1.0 / 39.0);
                let spread_e = (ehi / elo).powf(1.0 / 33.0);
                xlo = (bx / spread_x.powi(2)).max(1e-8);
                xhi = (bx * spread_x.powi(2)).min(0.6);
                elo = (be / spread_e.powi(2)).max(1e-9);
                ehi = (be * spread_e.powi(2)).min(0.4);
            }
            (best.0, best.1, best.2, best.3)
        };

        let (mut lo, mut hi) = (10_000u64, 10_000_000u64);
        if best_l(hi).0 <= 0.0 {
            println!("  no crossing below N=1e7");
            continue;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if best_l(mid).0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (l, xi, eta, pg) = best_l(hi);
        println!(
            "  continuous-tune crossing N = {hi}   (l={l:.3}, xi={xi:.4}, eta={eta:.5}, pg={pg:.4}, hmin={:.4})",
            -pg.log2()
        );
        let (l15, xi15, eta15, pg15) = best_l(1_000_000_000_000_000);
        println!(
            "  N=1e15: normalized rate {:.4} (xi={xi15:.2e}, eta={eta15:.2e}, pg={pg15:.4})",
            l15 / 1e15 / (d as f64).log2()
        );
    }
}
