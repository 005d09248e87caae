//! Finite-size key-length accounting: security-parameter budgeting,
//! concentration bounds for the Bell estimate, the random-sampling bound for
//! the unobserved error rate, and the key-length formula itself.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::polytope::BellFunctional;

#[derive(Debug, Error)]
pub enum FiniteKeyError {
    #[error("count inputs must be positive")]
    ZeroCount,
    #[error("{name} = {value} outside its valid range")]
    BadParameter { name: &'static str, value: f64 },
    #[error(
        "sampling bound has no root for q_hat={q_hat}, eps={eps}: degenerate inputs \
         (for example q_hat near 1, or too few rounds for this confidence)"
    )]
    NoRoot { q_hat: f64, eps: f64 },
    #[error("input pair ({x},{y}) was never observed but carries functional weight")]
    UnobservedInput { x: usize, y: usize },
    #[error("soundness budget {eps_s} does not exceed twice the error-correction epsilon")]
    BudgetTooSmall { eps_s: f64 },
}

/// Security-parameter split. The completeness target `eps_c` is divided
/// evenly between the Bell-test and error-rate-test abort bounds; the
/// soundness target `eps_s` is spent on error correction (pinned), smoothing,
/// and privacy amplification.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpsilonBudget {
    /// Bell-estimate confidence for the abort threshold (completeness side).
    pub eps_est: f64,
    /// Error-rate sampling confidence for the abort threshold.
    pub eps_gamma_est: f64,
    /// Bell-estimate confidence linking the estimate to the key rounds
    /// (soundness side).
    pub eps_con: f64,
    /// Error-correction failure probability (verification hash collision).
    pub eps_ec: f64,
    /// Error-correction leakage parameter entering the deviation terms.
    pub eps_ec_prime: f64,
    /// Smoothing parameter of the min-entropy bound.
    pub eps_s: f64,
    /// Privacy-amplification (leftover hash) parameter.
    pub eps_pa: f64,
}

impl EpsilonBudget {
    /// Splits global completeness/soundness targets into the individual
    /// parameters: `eps_est = eps_gamma_est = eps_c/2`, `eps_con = eps_est`,
    /// `eps_ec = eps_ec' = 1e-10` pinned, and the remainder of `eps_s_total`
    /// after error correction divided evenly between smoothing and privacy
    /// amplification.
    pub fn split(eps_c: f64, eps_s_total: f64) -> Result<Self, FiniteKeyError> {
        if !(eps_c > 0.0 && eps_c < 1.0) {
            return Err(FiniteKeyError::BadParameter {
                name: "eps_c",
                value: eps_c,
            });
        }
        if !(eps_s_total > 0.0 && eps_s_total < 1.0) {
            return Err(FiniteKeyError::BadParameter {
                name: "eps_s_total",
                value: eps_s_total,
            });
        }
        let eps_ec = 1e-10;
        if eps_s_total <= 2.0 * eps_ec {
            return Err(FiniteKeyError::BudgetTooSmall { eps_s: eps_s_total });
        }
        let half = (eps_s_total - 2.0 * eps_ec) / 2.0;
        Ok(EpsilonBudget {
            eps_est: eps_c / 2.0,
            eps_gamma_est: eps_c / 2.0,
            eps_con: eps_c / 2.0,
            eps_ec,
            eps_ec_prime: eps_ec,
            eps_s: half,
            eps_pa: half,
        })
    }

    /// Abort probability bound for an honest device (completeness).
    pub fn completeness(&self) -> f64 {
        self.eps_est + self.eps_gamma_est
    }

    /// Distance from an ideal key (soundness).
    pub fn soundness(&self) -> f64 {
        2.0 * self.eps_ec + self.eps_s + self.eps_pa
    }
}

impl Default for EpsilonBudget {
    /// The standard targets: completeness 1e-2, soundness 1e-5.
    fn default() -> Self {
        EpsilonBudget::split(1e-2, 1e-5).expect("default budget is valid")
    }
}

/// Protocol shape: total rounds, test fractions, outcome alphabet, and the
/// security budget. `xi` is the fraction of rounds used for parameter
/// estimation, `eta` the fraction sacrificed to estimate the key error rate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_rounds: u64,
    pub xi: f64,
    pub eta: f64,
    pub d: usize,
    pub eps: EpsilonBudget,
}

impl ProtocolParams {
    pub fn new(
        n_rounds: u64,
        xi: f64,
        eta: f64,
        d: usize,
        eps: EpsilonBudget,
    ) -> Result<Self, FiniteKeyError> {
        let params = ProtocolParams {
            n_rounds,
            xi,
            eta,
            d,
            eps,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        if self.n_rounds == 0 {
            return Err(FiniteKeyError::ZeroCount);
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(FiniteKeyError::BadParameter {
                name: "xi",
                value: self.xi,
            });
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(FiniteKeyError::BadParameter {
                name: "eta",
                value: self.eta,
            });
        }
        if self.xi + self.eta > 1.0 {
            return Err(FiniteKeyError::BadParameter {
                name: "xi+eta",
                value: self.xi + self.eta,
            });
        }
        if self.d < 2 {
            return Err(FiniteKeyError::BadParameter {
                name: "d",
                value: self.d as f64,
            });
        }
        Ok(())
    }

    /// Width of the abort threshold: deviation of the Bell estimate on one
    /// estimation subset (a third of the test rounds) at confidence
    /// `eps_est`.
    pub fn delta_est(&self, gamma_range: f64) -> f64 {
        hoeffding_delta(
            self.eps.eps_est,
            self.n_rounds as f64 * self.xi / 3.0,
            gamma_range,
        )
    }

    /// Deviation linking the estimated Bell value to the key rounds, at
    /// confidence `eps_con`.
    pub fn delta_con(&self, gamma_range: f64) -> f64 {
        hoeffding_delta(
            self.eps.eps_con,
            self.n_rounds as f64 * self.xi / 3.0,
            gamma_range,
        )
    }

    /// Error-rate margin from the random-sampling bound, using the nominal
    /// key and sample sizes implied by the fractions.
    pub fn gamma_est(&self, q_hat: f64) -> Result<f64, FiniteKeyError> {
        let n = self.n_rounds as f64;
        let n_key = (n * (1.0 - self.xi - self.eta)).round() as u64;
        let n_sample = (n * self.eta).round() as u64;
        gamma_est(n_key, n_sample, q_hat, self.eps.eps_gamma_est)
    }
}

/// Hoeffding deviation `δ = γ √(ln(1/ε) / (2n))` for a mean of `n` bounded
/// terms with range `γ`.
pub fn hoeffding_delta(eps: f64, n: f64, gamma_range: f64) -> f64 {
    gamma_range * ((1.0 / eps).ln() / (2.0 * n)).sqrt()
}

/// Inverse of [`hoeffding_delta`]: the confidence at which a deviation of
/// `delta` is excluded, `ε = exp(−2nδ²/γ²)`.
pub fn hoeffding_epsilon(delta: f64, n: f64, gamma_range: f64) -> f64 {
    (-2.0 * n * delta * delta / (gamma_range * gamma_range)).exp()
}

/// Range of the per-round Bell estimator: each round with inputs `(x,y)` and
/// outcomes `(a,b)` contributes `h[x,y,a,b] / Pr[x,y]`, so the Hoeffding
/// range is the spread of these values over all cells with positive input
/// probability (zero-coefficient cells included). Errors when an input pair
/// that carries functional weight is never chosen.
pub fn gamma_range(f: &BellFunctional, input_probs: &[f64]) -> Result<f64, FiniteKeyError> {
    let s = f.scenario;
    if input_probs.len() != s.m_a * s.m_b {
        return Err(FiniteKeyError::BadParameter {
            name: "input_probs.len",
            value: input_probs.len() as f64,
        });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            let p = input_probs[x * s.m_b + y];
            if p < 0.0 {
                return Err(FiniteKeyError::BadParameter {
                    name: "input_prob",
                    value: p,
                });
            }
            for a in 0..s.d {
                for b in 0..s.d {
                    let h = f.h[s.index(x, y, a, b)];
                    if p == 0.0 {
                        if h != 0.0 {
                            return Err(FiniteKeyError::UnobservedInput { x, y });
                        }
                        continue;
                    }
                    let v = h / p;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(FiniteKeyError::BadParameter {
            name: "input_probs",
            value: 0.0,
        });
    }
    Ok(hi - lo)
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Random-sampling margin: the smallest `γ` such that, when a size-`n_sample`
/// subset of `n_key + n_sample` positions shows error fraction `q_hat`, the
/// unsampled fraction exceeds `q_hat + γ` with probability at most `eps`.
///
/// `γ` is the root of
///
/// ```text
/// ln C(n_sample, n_sample·q̂) + ln C(n_key, n_key·(q̂+γ_a))
///   − ln C(n_key+n_sample, (n_key+n_sample)·q̂ + n_key·γ) = ln eps
/// ```
///
/// (binomials continued to real arguments via the log-gamma function), which
/// sets the hypergeometric probability of the boundary configuration equal to
/// `eps`. The left side is decreasing in `γ`: if it is already ≤ `ln eps` at
/// `γ = 0` the bound is vacuous and 0 is returned; if it stays positive at
/// `γ = 1 − q̂` no root exists and an error is returned (degenerate inputs,
/// such as `q_hat` near 1 or very small counts at high confidence). The root
/// is bracketed in `(0, 1−q̂]` and bisected to 1e-10.
pub fn gamma_est(
    n_key: u64,
    n_sample: u64,
    q_hat: f64,
    eps: f64,
) -> Result<f64, FiniteKeyError> {
    if n_key == 0 || n_sample == 0 {
        return Err(FiniteKeyError::ZeroCount);
    }
    if !(0.0..=1.0).contains(&q_hat) {
        return Err(FiniteKeyError::BadParameter {
            name: "q_hat",
            value: q_hat,
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FiniteKeyError::BadParameter {
            name: "eps",
            value: eps,
        });
    }
    let a = n_key as f64;
    let b = n_sample as f64;
    let excess = |g: f64| {
        ln_choose(b, b * q_hat) + ln_choose(a, a * q_hat + a * g)
            - ln_choose(a + b, (a + b) * q_hat + a * g)
            - eps.ln()
    };
    let top = 1.0 - q_hat;
    if top <= 0.0 {
        return Err(FiniteKeyError::NoRoot { q_hat, eps });
    }
    if excess(0.0) <= 0.0 {
        return Ok(0.0);
    }
    if excess(top) > 0.0 {
        return Err(FiniteKeyError::NoRoot { q_hat, eps });
    }
    let mut lo = 0.0;
    let mut hi = top;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Return the end where the defining inequality is already satisfied.
    Ok(hi)
}

/// Conditional-entropy bound per key symbol at error rate `q` over a size-`d`
/// alphabet: `h(q) + q·log₂(d−1)` with `h` the binary entropy.
pub fn f_entropy(q: f64, d: usize) -> f64 {
    let binary = if q <= 0.0 || q >= 1.0 {
        0.0
    } else {
        -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
    };
    let spread = if d > 2 && q > 0.0 {
        q * ((d - 1) as f64).log2()
    } else {
        0.0
    };
    binary + spread
}

/// Full accounting of one key-length evaluation. The four term fields sum to
/// the (unclamped) key length; `l` clamps at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyLengthReport {
    /// Extractable key length in bits (≥ 0).
    pub l: f64,
    /// Key rate `l / n_rounds`.
    pub rate: f64,
    /// Adversarial-entropy credit: `n(−log₂ pg) − n(ξ+η)log₂ d`.
    pub hmin_term: f64,
    /// Error-correction leakage (negative): `−n(1−ξ−η)·f(q_eff)`.
    pub ec_term: f64,
    /// Finite-size deviation cost (negative), proportional to √n.
    pub sqrtn_term: f64,
    /// Security-parameter constants (negative).
    pub const_term: f64,
    /// Sampling margin added to the observed error rate.
    pub gamma_est: f64,
    /// Error rate the leakage was priced at: `min(q̂ + γ_est, (d−1)/d)`.
    pub q_eff: f64,
    /// Abort probability bound for honest devices.
    pub completeness: f64,
    /// Distance from an ideal key.
    pub soundness: f64,
}

/// Finite-size key length for `params.n_rounds` rounds given a certified
/// guessing-probability bound `pg` and an observed error rate `q_hat`:
///
/// ```text
/// l = n·(−log₂ pg) − n(ξ+η)·log₂ d − n(1−ξ−η)·f(min(q̂+γ, (d−1)/d))
///     − √n · 4·log₂(2√d+1) · (√log₂(8/ε'ec²) + √log₂(2/εs²))
///     − log₂(8/ε'ec² + 2/(2−ε'ec)) − log₂(1/εec) − 2·log₂(1/(2εpa))
/// ```
///
/// clamped at zero, with `γ` the sampling margin from [`gamma_est`] at the
/// nominal key/sample sizes. The error rate is capped at `(d−1)/d` (the
/// entropy maximum) so that a *larger* observed `q_hat` can never look
/// cheaper by overshooting the peak of `f`.
pub fn key_length(
    params: &ProtocolParams,
    pg: f64,
    q_hat: f64,
) -> Result<KeyLengthReport, FiniteKeyError> {
    params.validate()?;
    let d = params.d as f64;
    if !(pg >= 1.0 / d - 1e-12 && pg <= 1.0 + 1e-12) {
        return Err(FiniteKeyError::BadParameter {
            name: "pg",
            value: pg,
        });
    }
    if !(0.0..=1.0).contains(&q_hat) {
        return Err(FiniteKeyError::BadParameter {
            name: "q_hat",
            value: q_hat,
        });
    }
    let pg = pg.clamp(1.0 / d, 1.0);
    let n = params.n_rounds as f64;
    let gamma = params.gamma_est(q_hat)?;
    let q_eff = (q_hat + gamma).min((d - 1.0) / d);
    let e = &params.eps;

    let hmin_term = n * (-pg.log2()) - n * (params.xi + params.eta) * d.log2();
    let ec_term = -n * (1.0 - params.xi - params.eta) * f_entropy(q_eff, params.d);
    let deviation = (8.0 / (e.eps_ec_prime * e.eps_ec_prime)).log2().sqrt()
        + (2.0 / (e.eps_s * e.eps_s)).log2().sqrt();
    let sqrtn_term = -n.sqrt() * 4.0 * (2.0 * d.sqrt() + 1.0).log2() * deviation;
    let const_term = -(8.0 / (e.eps_ec_prime * e.eps_ec_prime) + 2.0 / (2.0 - e.eps_ec_prime))
        .log2()
        - (1.0 / e.eps_ec).log2()
        - 2.0 * (1.0 / (2.0 * e.eps_pa)).log2();

    let l = (hmin_term + ec_term + sqrtn_term + const_term).max(0.0);
    Ok(KeyLengthReport {
        l,
        rate: l / n,
        hmin_term,
        ec_term,
        sqrtn_term,
        const_term,
        gamma_est: gamma,
        q_eff,
        completeness: e.completeness(),
        soundness: e.soundness(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Scenario;

    #[test]
    fn entropy_values() {
        assert_eq!(f_entropy(0.0, 2), 0.0);
        assert_eq!(f_entropy(1.0, 2), 0.0);
        assert!((f_entropy(0.5, 2) - 1.0).abs() < 1e-15);
        let d = 3usize;
        let q = 2.0 / 3.0;
        assert!((f_entropy(q, d) - 3f64.log2()).abs() < 1e-12);
        // The cap point (d−1)/d is the maximum of f.
        for d in [2usize, 3, 4, 5] {
            let peak = (d as f64 - 1.0) / d as f64;
            let at_peak = f_entropy(peak, d);
            assert!((at_peak - (d as f64).log2()).abs() < 1e-12);
            for q in [peak - 0.05, peak + 0.05] {
                assert!(f_entropy(q, d) <= at_peak);
            }
        }
    }

    #[test]
    fn hoeffding_pair_inverts() {
        for &(eps, n, gamma) in &[(1e-5, 1e6, 8.0), (0.3, 100.0, 1.0), (1e-12, 1e10, 2.5)] {
            let delta = hoeffding_delta(eps, n, gamma);
            let back = hoeffding_epsilon(delta, n, gamma);
            assert!((back - eps).abs() <= 1e-12 * eps.max(back));
        }
        // Frozen spot value: γ = 8, n = 1e6, ε = 1e-5 gives δ ≈ 0.0192.
        let delta = hoeffding_delta(1e-5, 1e6, 8.0);
        assert!((delta - 0.019195).abs() < 1e-5, "delta = {delta}");
    }

    #[test]
    fn estimator_range_for_uniform_two_setting_qubits() {
        // ±1 coefficient grid over a 2×2×2×2 scenario with uniform inputs
        // has per-round values ±4, hence range 8.
        let scenario = Scenario::new(2, 2, 2);
        let rows: [[f64; 4]; 4] = [
            [1.0, -1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0, 1.0],
            [1.0, -1.0, -1.0, 1.0],
            [-1.0, 1.0, 1.0, -1.0],
        ];
        let mut h = vec![0.0; scenario.behavior_len()];
        for (r, row) in rows.iter().enumerate() {
            let (x, a) = (r / 2, r % 2);
            for (c, &v) in row.iter().enumerate() {
                let (y, b) = (c / 2, c % 2);
                h[scenario.index(x, y, a, b)] = v;
            }
        }
        let f = BellFunctional {
            scenario,
            h,
            c: 2.0,
            violation: 0.0,
        };
        let range = gamma_range(&f, &[0.25; 4]).unwrap();
        assert!((range - 8.0).abs() < 1e-12);
        // An unobserved input pair with weight is an error.
        assert!(matches!(
            gamma_range(&f, &[0.5, 0.5, 0.0, 0.0]),
            Err(FiniteKeyError::UnobservedInput { .. })
        ));
    }

    #[test]
    fn sampling_margin_is_monotone() {
        let g_loose = gamma_est(10_000, 10_000, 0.05, 1e-2).unwrap();
        let g_tight = gamma_est(10_000, 10_000, 0.05, 1e-6).unwrap();
        assert!(g_loose < g_tight);
        let g_small = gamma_est(1_000, 1_000, 0.05, 1e-6).unwrap();
        assert!(g_tight < g_small);
        for g in [g_loose, g_tight, g_small] {
            assert!(g > 0.0 && g <= 0.95);
        }
        // A failure probability so generous that even a zero margin
        // satisfies it: the bound degenerates to 0 by convention.
        assert_eq!(gamma_est(10_000, 10_000, 0.05, 0.1).unwrap(), 0.0);
        // q_hat = 1 leaves no room for a deviation.
        assert!(matches!(
            gamma_est(100, 100, 1.0, 0.01),
            Err(FiniteKeyError::NoRoot { .. })
        ));
    }

    #[test]
    fn budget_split_accounts_for_targets() {
        let eps = EpsilonBudget::default();
        assert!((eps.completeness() - 1e-2).abs() < 1e-15);
        assert!((eps.soundness() - 1e-5).abs() < 1e-18);
        assert_eq!(eps.eps_ec, 1e-10);
        assert_eq!(eps.eps_ec_prime, 1e-10);
        assert!((eps.eps_s - eps.eps_pa).abs() == 0.0);
        assert!(EpsilonBudget::split(1e-2, 1e-10).is_err());
    }

    #[test]
    fn key_length_terms_sum_and_scale() {
        let params = ProtocolParams::new(
            1_000_000,
            0.3,
            0.05,
            2,
            EpsilonBudget::default(),
        )
        .unwrap();
        let report = key_length(&params, 0.55, 0.005).unwrap();
        let total =
            report.hmin_term + report.ec_term + report.sqrtn_term + report.const_term;
        assert!((report.l - total.max(0.0)).abs() < 1e-9);
        assert!(report.l > 0.0, "expected positive key, report: {report:?}");
        assert!(report.rate <= 1.0 + 1e-12);
        // Too few rounds: everything is eaten by deviation terms.
        let tiny = ProtocolParams::new(100, 0.3, 0.05, 2, EpsilonBudget::default()).unwrap();
        let r = key_length(&tiny, 0.55, 0.005).unwrap();
        assert_eq!(r.l, 0.0);
    }

    #[test]
    fn key_length_monotone_in_error_rate() {
        let params =
            ProtocolParams::new(10_000_000, 0.2, 0.02, 2, EpsilonBudget::default()).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..=19 {
            let q = i as f64 * 0.05;
            let report = key_length(&params, 0.51, q).unwrap();
            assert!(
                report.l <= last + 1e-9,
                "key length increased at q_hat = {q}"
            );
            last = report.l;
        }
        // At q_hat = 1 no sampling margin can be certified at all.
        assert!(matches!(
            key_length(&params, 0.51, 1.0),
            Err(FiniteKeyError::NoRoot { .. })
        ));
    }
}
