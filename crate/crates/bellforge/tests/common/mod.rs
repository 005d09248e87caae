//! Shared fixtures and independent oracles for the integration suites.
//!
//! The Bell-functional fixtures are written out as the tables they are, and
//! parsed with the same reader the CLI uses. The hypergeometric oracle
//! re-derives the error-rate sampling margin by exhaustive enumeration with
//! exact integer log-factorials, sharing no code with the production
//! implementation.

#![allow(dead_code)]

use bellforge::polytope::{parse_tabular, BellFunctional};

/// The two-setting correlation functional with classical bound 2, in full
/// probability-table coordinates (rows are (x,a), columns are (y,b)).
pub fn chsh_fixture() -> BellFunctional {
    parse_tabular(
        "# scenario: m_a=2 m_b=2 d=2\n\
         # bound: 2\n\
         # violation: 0\n\
          1 -1 |  1 -1\n\
         -1  1 | -1  1\n\
         ------+------\n\
          1 -1 | -1  1\n\
         -1  1 |  1 -1\n",
    )
    .expect("fixture parses")
}

/// The optimal two-setting three-outcome functional (rows are (x,a), columns
/// are (y,b)); the classical bound is derived by exhaustive vertex search.
pub fn qutrit_fixture() -> BellFunctional {
    let mut f = parse_tabular(
        "# scenario: m_a=2 m_b=2 d=3\n\
         # bound: 0\n\
         # violation: 0\n\
          1 -1  0 | -1  1  0\n\
          0  1 -1 |  0 -1  1\n\
         -1  0  1 |  1  0 -1\n\
         ---------+---------\n\
          1  0 -1 |  1 -1  0\n\
         -1  1  0 |  0  1 -1\n\
          0 -1  1 | -1  0  1\n",
    )
    .expect("fixture parses");
    let excess = f.max_vertex_excess().expect("vertex scan");
    f.c += excess;
    f
}

/// Natural logarithms of factorials, `lnfact[k] = ln(k!)`, summed exactly
/// from integer arguments (no gamma-function evaluation).
pub fn ln_factorials(n_max: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n_max + 1];
    for k in 1..=n_max {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

fn ln_choose(lf: &[f64], n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    lf[n] - lf[k] - lf[n - k]
}

/// Probability of seeing exactly `j` marked items in a uniform
/// without-replacement sample of size `sample` from a population of size
/// `pop` containing `marked` marked items.
pub fn hypergeom_pmf(lf: &[f64], pop: usize, marked: usize, sample: usize, j: usize) -> f64 {
    if j > marked || sample - j > pop - marked {
        return 0.0;
    }
    (ln_choose(lf, marked, j) + ln_choose(lf, pop - marked, sample - j)
        - ln_choose(lf, pop, sample))
    .exp()
}

/// Worst case over population compositions of the probability of the joint
/// event "the sample shows exactly the observed error count j₀ AND the
/// unsampled part has error rate at least q̂+γ". A sampling margin γ is sound
/// at confidence ε exactly when this maximum is ≤ ε.
pub fn worst_case_excess_probability(
    n_key: usize,
    n_sample: usize,
    q_hat: f64,
    gamma: f64,
    lf: &[f64],
) -> f64 {
    let j0_real = n_sample as f64 * q_hat;
    let j0 = j0_real.round() as usize;
    assert!(
        (j0 as f64 - j0_real).abs() < 1e-9,
        "oracle needs an integer observed error count"
    );
    let pop = n_key + n_sample;
    let mut worst: f64 = 0.0;
    for m in j0..=(j0 + n_key) {
        let key_errors = (m - j0) as f64;
        if key_errors / n_key as f64 >= q_hat + gamma {
            worst = worst.max(hypergeom_pmf(lf, pop, m, n_sample, j0));
        }
    }
    worst
}
