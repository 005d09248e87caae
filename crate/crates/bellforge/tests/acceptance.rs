//! End-to-end acceptance gate. Each numbered criterion is timed against its
//! wall-clock budget and prints exactly one PASS/FAIL line; the suite fails
//! if any criterion fails or overruns. Runs single-threaded inside one test
//! so the budgets mean what they say on a one-core machine.

mod common;

use std::time::Instant;

use bellforge::experiments::{
    chsh_guessing_probability, chsh_subset_rates, default_n_grid, random_settings_experiment,
    KeyrateContext, TuneGrid, DEFAULT_PG_POINTS,
};
use bellforge::finitekey::{
    gamma_est, hoeffding_delta, hoeffding_epsilon, EpsilonBudget, FiniteKeyError, ProtocolParams,
};
use bellforge::npa::{
    guessing_probability, guessing_probability_with, quantum_maximum, NpaError,
};
use bellforge::polytope::{
    equivalent_modulo_symmetries, optimal_hyperplane, BellFunctional, PolytopeError,
};
use bellforge::protocol::abort_statistics;
use bellforge::quantum::{
    cglmp_setup, chsh_setup, pe_behavior, preset_c1, preset_c2, preset_c2c3,
    random_settings_setup, QuantumSetup,
};
use common::{chsh_fixture, ln_factorials, qutrit_fixture, worst_case_excess_probability};
use conic::SolverOptions;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

struct Gate {
    failures: Vec<String>,
    only: Option<Vec<usize>>,
}

impl Gate {
    fn new() -> Self {
        // Development escape hatch: BELLFORGE_ACCEPT_ONLY=3,5 runs a subset.
        // The shipped invocation leaves it unset and runs everything.
        let only = std::env::var("BELLFORGE_ACCEPT_ONLY").ok().map(|s| {
            s.split(',')
                .filter_map(|t| t.trim().parse().ok())
                .collect()
        });
        Gate {
            failures: Vec::new(),
            only,
        }
    }

    fn run(
        &mut self,
        index: usize,
        label: &str,
        budget_secs: f64,
        body: impl FnOnce() -> Result<(), String>,
    ) {
        if let Some(only) = &self.only {
            if !only.contains(&index) {
                return;
            }
        }
        let start = Instant::now();
        let outcome = body();
        let elapsed = start.elapsed().as_secs_f64();
        let mut problems: Vec<String> = Vec::new();
        if let Err(why) = outcome {
            problems.push(why);
        }
        if elapsed > budget_secs {
            problems.push(format!("overran budget of {budget_secs}s"));
        }
        if problems.is_empty() {
            println!("criterion {index} ({label}): PASS in {elapsed:.1}s");
        } else {
            let why = problems.join("; ");
            println!("criterion {index} ({label}): FAIL in {elapsed:.1}s — {why}");
            self.failures.push(format!("criterion {index}: {why}"));
        }
    }
}

fn optimal_for(setup: &QuantumSetup) -> Result<BellFunctional, String> {
    let p = pe_behavior(setup).map_err(|e| format!("behavior: {e}"))?;
    optimal_hyperplane(&p).map_err(|e| format!("hyperplane: {e}"))
}

/// Solves for the guessing bound, relaxing the stopping tolerances when the
/// constraint pins the moment matrix to a boundary point (β at the quantum
/// maximum), where strictly feasible interior points cease to exist.
fn pg_of(f: &BellFunctional, beta: f64) -> Result<f64, String> {
    match guessing_probability(f, beta) {
        Ok(bound) => Ok(bound.pg),
        Err(NpaError::Solver(_)) => {
            let opts = SolverOptions {
                tol_feas: 1e-6,
                tol_gap: 1e-6,
                ..SolverOptions::default()
            };
            guessing_probability_with(f, beta, &opts)
                .map(|bound| bound.pg)
                .map_err(|e| format!("relaxed solve at beta={beta}: {e}"))
        }
        Err(e) => Err(format!("solve at beta={beta}: {e}")),
    }
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();

    gate.run(1, "two-setting functional recovery", 1.0, criterion_1);
    gate.run(2, "three-outcome functional recovery", 5.0, criterion_2);
    gate.run(3, "guessing-bound closed-form match", 30.0, criterion_3);
    gate.run(4, "statistical round trips", 60.0, criterion_4);
    gate.run(5, "two-setting key-rate curves", 600.0, criterion_5);
    gate.run(6, "random-settings survey", 7200.0, criterion_6);
    gate.run(7, "three-setting advantage presets", 1800.0, criterion_7);
    gate.run(8, "honest-run completeness", 1800.0, criterion_8);
    gate.run(9, "functional soundness on vertices", 60.0, criterion_9);
    gate.run(10, "qudit rate-curve crossover", 7200.0, criterion_10);

    assert!(
        gate.failures.is_empty(),
        "{} criteria failed:\n{}",
        gate.failures.len(),
        gate.failures.join("\n")
    );
}

/// The two-qubit setup recovers the known two-setting facet, stably across
/// white-noise levels.
fn criterion_1() -> Result<(), String> {
    let fixture = chsh_fixture();
    for p in [0.0, 0.02, 0.05] {
        let setup = chsh_setup(p).map_err(|e| e.to_string())?;
        let f = optimal_for(&setup)?;
        let same = equivalent_modulo_symmetries(&f, &fixture, 1e-6)
            .map_err(|e| e.to_string())?;
        if !same {
            return Err(format!("p={p}: recovered functional is not the fixture"));
        }
    }
    Ok(())
}

/// The maximally entangled qutrit setup recovers the known two-setting
/// three-outcome inequality.
fn criterion_2() -> Result<(), String> {
    let setup = cglmp_setup(3, 0.0).map_err(|e| e.to_string())?;
    let f = optimal_for(&setup)?;
    let same = equivalent_modulo_symmetries(&f, &qutrit_fixture(), 1e-6)
        .map_err(|e| e.to_string())?;
    if !same {
        return Err("recovered functional is not the fixture".into());
    }
    Ok(())
}

/// SDP guessing bound matches `1/2 + ½√(2 − β²/4)` and the quantum maximum
/// of the two-setting facet is 2√2.
fn criterion_3() -> Result<(), String> {
    let f = chsh_fixture();
    let qmax = quantum_maximum(&f).map_err(|e| e.to_string())?;
    if (qmax - TSIRELSON).abs() > 1e-5 {
        return Err(format!("quantum maximum {qmax} vs {TSIRELSON}"));
    }
    for beta in [2.0, 2.2, 2.5, TSIRELSON] {
        let pg = pg_of(&f, beta)?;
        let want = chsh_guessing_probability(beta);
        if (pg - want).abs() > 1e-3 {
            return Err(format!("beta={beta}: pg={pg}, closed form {want}"));
        }
    }
    Ok(())
}

/// Hoeffding δ↔ε inversion to 1e-12, and the sampling margin against an
/// exhaustive hypergeometric worst-case oracle.
fn criterion_4() -> Result<(), String> {
    for i in 0..10 {
        let eps = 10f64.powf(-0.5 - i as f64);
        for j in 0..10 {
            let n = 10f64.powf(2.0 + j as f64);
            let range = 4.0;
            let delta = hoeffding_delta(eps, n, range);
            let back = hoeffding_epsilon(delta, n, range);
            if ((back - eps) / eps).abs() > 1e-12 {
                return Err(format!("hoeffding roundtrip at eps={eps}, n={n}: {back}"));
            }
        }
    }

    let lf = ln_factorials(240);
    let mut no_root_at_eps001: Vec<usize> = Vec::new();
    for n in 1..=60usize {
        for q_hat in [0.0, 0.1, 0.25] {
            let j0 = n as f64 * q_hat;
            if (j0 - j0.round()).abs() > 1e-9 {
                continue; // oracle needs an integral observed error count
            }
            for eps in [0.1, 0.01] {
                match gamma_est(n as u64, n as u64, q_hat, eps) {
                    Ok(g) => {
                        let worst = worst_case_excess_probability(n, n, q_hat, g, &lf);
                        if worst > eps * (1.0 + 1e-9) {
                            return Err(format!(
                                "margin unsound at n={n}, q={q_hat}, eps={eps}: \
                                 worst case {worst}"
                            ));
                        }
                        let back = g - 3.0 / n as f64;
                        if back > 0.0 {
                            let loose = worst_case_excess_probability(n, n, q_hat, back, &lf);
                            if loose <= eps * (1.0 - 1e-9) {
                                return Err(format!(
                                    "margin slack at n={n}, q={q_hat}, eps={eps}: \
                                     three grid steps below the root still sound"
                                ));
                            }
                        }
                        if q_hat == 0.0 && eps == 0.01 {
                            // root exists here; the no-root corner is collected below
                        }
                    }
                    Err(FiniteKeyError::NoRoot { .. }) => {
                        let top = 1.0 - q_hat;
                        let worst = worst_case_excess_probability(n, n, q_hat, top, &lf);
                        if worst <= eps * (1.0 - 1e-9) {
                            return Err(format!(
                                "spurious no-root at n={n}, q={q_hat}, eps={eps}"
                            ));
                        }
                        if q_hat == 0.0 && eps == 0.01 {
                            no_root_at_eps001.push(n);
                        }
                    }
                    Err(e) => return Err(format!("gamma_est({n}): {e}")),
                }
            }
        }
    }
    if no_root_at_eps001 != vec![1, 2, 3, 4] {
        return Err(format!(
            "no-root corner at q=0, eps=0.01 should be n ∈ {{1,2,3,4}}, got {no_root_at_eps001:?}"
        ));
    }
    Ok(())
}

/// Expected-key-rate curves for the two-qubit setup: monotone in the round
/// count, plateau below 1 bit, crossings ordered by noise, near-ideal
/// asymptote at p=0.
fn criterion_5() -> Result<(), String> {
    let tune = TuneGrid::default();
    let grid = default_n_grid();
    let mut crossings: Vec<f64> = Vec::new();
    for p in [0.0, 0.02, 0.05] {
        let setup = chsh_setup(p).map_err(|e| e.to_string())?;
        let ctx = KeyrateContext::build(&setup, EpsilonBudget::default(), DEFAULT_PG_POINTS)
            .map_err(|e| e.to_string())?;
        let mut prev = f64::NEG_INFINITY;
        let mut first_positive: Option<u64> = None;
        let mut last_rate = 0.0;
        for &n in &grid {
            let pt = ctx.rate_at(n, &tune).map_err(|e| e.to_string())?;
            if pt.rate < prev - 1e-12 {
                return Err(format!("p={p}: rate drops at N={n}: {} → {}", prev, pt.rate));
            }
            prev = pt.rate;
            last_rate = pt.rate;
            if first_positive.is_none() && pt.rate > 0.0 {
                first_positive = Some(n);
            }
        }
        if last_rate >= 1.0 {
            return Err(format!("p={p}: plateau {last_rate} reaches one bit per round"));
        }
        if p == 0.0 && last_rate < 0.8 {
            return Err(format!("p=0 plateau {last_rate} below 0.8 at N=1e15"));
        }
        let cross = first_positive
            .ok_or_else(|| format!("p={p}: no positive rate up to N=1e15"))?;
        crossings.push(cross as f64);
    }
    if !(crossings[0] < crossings[1] && crossings[1] < crossings[2]) {
        return Err(format!("crossings not ordered by noise: {crossings:?}"));
    }
    Ok(())
}

/// Fraction of uniformly random projective setups that certify a positive
/// key at N=10¹²: matches the reference values at p=0 and decreases with
/// noise for both setting counts.
fn criterion_6() -> Result<(), String> {
    let eps = EpsilonBudget::default();
    let n_rounds = 1_000_000_000_000;
    let mut fractions = [[0.0f64; 3]; 2];
    for (mi, m) in [2usize, 3].into_iter().enumerate() {
        for (pi, p) in [0.0, 0.02, 0.05].into_iter().enumerate() {
            let cell = random_settings_experiment(m, 2, p, 1000, n_rounds, eps, 77)
                .map_err(|e| e.to_string())?;
            fractions[mi][pi] = cell.fraction;
        }
    }
    if (fractions[0][0] - 0.286).abs() > 0.05 {
        return Err(format!(
            "two-setting p=0 fraction {} vs reference 0.286 ± 0.05",
            fractions[0][0]
        ));
    }
    if (fractions[1][0] - 0.534).abs() > 0.05 {
        return Err(format!(
            "three-setting p=0 fraction {} vs reference 0.534 ± 0.05",
            fractions[1][0]
        ));
    }
    for (mi, label) in [(0usize, "two"), (1, "three")] {
        if !(fractions[mi][0] > fractions[mi][1] && fractions[mi][1] > fractions[mi][2]) {
            return Err(format!(
                "{label}-setting fractions not decreasing in noise: {:?}",
                fractions[mi]
            ));
        }
    }
    Ok(())
}

/// Three-setting presets: the first beats every two-setting subset scored
/// with the closed-form bound; the second certifies nothing until its third
/// settings are included.
fn criterion_7() -> Result<(), String> {
    let tune = TuneGrid::default();
    let eps = EpsilonBudget::default();
    let mut problems: Vec<String> = Vec::new();

    // First preset. The optimized functional's violation is carried almost
    // entirely by the non-key settings, so a deterministic-key attack
    // reproduces the observed Bell value (explicit qubit strategies reach
    // 3.187 against the observed 2.929) and the certified rate is zero at
    // every block size; this clause states the claim faithfully and is
    // expected to fail.
    let c1 = preset_c1(0.0).map_err(|e| e.to_string())?;
    let ctx = KeyrateContext::build(&c1, eps, DEFAULT_PG_POINTS).map_err(|e| e.to_string())?;
    match ctx
        .crossing(&tune, 10_000, 1_000_000_000_000)
        .map_err(|e| e.to_string())?
    {
        None => problems.push("first preset certifies no key by N=1e12".into()),
        Some(cross) => {
            let pt = ctx.rate_at(cross, &tune).map_err(|e| e.to_string())?;
            if pt.rate <= 0.0 {
                problems.push("crossing does not actually yield a positive rate".into());
            }
            let subsets = chsh_subset_rates(&c1, eps, cross, &tune).map_err(|e| e.to_string())?;
            if subsets.len() != 9 {
                problems.push(format!(
                    "expected 9 two-setting subsets, got {}",
                    subsets.len()
                ));
            }
            for sub in &subsets {
                if sub.rate >= pt.rate {
                    problems.push(format!(
                        "subset ({:?},{:?}) rate {} matches the full three-setting rate {}",
                        sub.x_pair, sub.y_pair, sub.rate, pt.rate
                    ));
                }
            }
        }
    }

    let c2 = preset_c2(0.0).map_err(|e| e.to_string())?;
    match KeyrateContext::build(&c2, eps, DEFAULT_PG_POINTS) {
        Ok(ctx2) => {
            let top = ctx2
                .rate_at(1_000_000_000_000_000, &tune)
                .map_err(|e| e.to_string())?;
            if top.rate > 0.0 {
                problems.push(format!("restricted preset certifies rate {}", top.rate));
            }
        }
        Err(e) => {
            let text = e.to_string();
            if !text.contains("classical") {
                problems.push(format!("restricted preset failed oddly: {text}"));
            }
        }
    }

    let c2c3 = preset_c2c3(0.0).map_err(|e| e.to_string())?;
    let ctx3 = KeyrateContext::build(&c2c3, eps, DEFAULT_PG_POINTS).map_err(|e| e.to_string())?;
    let top = ctx3
        .rate_at(1_000_000_000_000, &tune)
        .map_err(|e| e.to_string())?;
    if top.rate <= 0.0 {
        problems.push("extended preset certifies no key at N=1e12".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

/// Honest noiseless runs abort no more often than the completeness budget
/// allows (within binomial noise at 200 trials).
fn criterion_8() -> Result<(), String> {
    let setup = chsh_setup(0.0).map_err(|e| e.to_string())?;
    let eps = EpsilonBudget::default();
    let params = ProtocolParams::new(100_000_000, 0.05, 0.01, 2, eps)
        .map_err(|e| e.to_string())?;
    let trials = 200u64;
    let stats = abort_statistics(&setup, &params, trials, 4242).map_err(|e| e.to_string())?;
    let bound = eps.eps_est + eps.eps_gamma_est;
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    let limit = bound + 3.0 * sigma;
    if stats.fraction > limit {
        return Err(format!(
            "abort fraction {} exceeds completeness bound {bound} + 3σ = {limit}",
            stats.fraction
        ));
    }
    Ok(())
}

/// Every functional the pipeline emits respects its own classical bound on
/// every deterministic vertex, exhaustively.
fn criterion_9() -> Result<(), String> {
    let mut emitted: Vec<(String, BellFunctional)> = Vec::new();
    for p in [0.0, 0.02, 0.05] {
        let setup = chsh_setup(p).map_err(|e| e.to_string())?;
        emitted.push((format!("two-qubit p={p}"), optimal_for(&setup)?));
    }
    for d in [3usize, 4] {
        let setup = cglmp_setup(d, 0.0).map_err(|e| e.to_string())?;
        emitted.push((format!("qudit d={d}"), optimal_for(&setup)?));
    }
    emitted.push(("first preset".into(), optimal_for(&preset_c1(0.0).map_err(|e| e.to_string())?)?));
    emitted.push((
        "extended preset".into(),
        optimal_for(&preset_c2c3(0.0).map_err(|e| e.to_string())?)?,
    ));
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut found = 0;
    while found < 8 {
        let setup = random_settings_setup(2, 2, 0.0, &mut rng).map_err(|e| e.to_string())?;
        let pb = pe_behavior(&setup).map_err(|e| e.to_string())?;
        match optimal_hyperplane(&pb) {
            Ok(f) => {
                emitted.push((format!("random setup #{found}"), f));
                found += 1;
            }
            Err(PolytopeError::InfeasibleClassical) => continue,
            Err(e) => return Err(e.to_string()),
        }
    }
    for (label, f) in &emitted {
        let excess = f.max_vertex_excess().map_err(|e| e.to_string())?;
        if excess > 1e-9 {
            return Err(format!("{label}: vertex excess {excess}"));
        }
    }
    Ok(())
}

/// Normalized rate curves for maximally entangled qutrits and ququarts
/// cross: the higher dimension certifies sooner, the lower dimension wins at
/// large round counts.
fn criterion_10() -> Result<(), String> {
    let tune = TuneGrid::default();
    let eps = EpsilonBudget::default();
    // Taking the tuning fractions and the guessing curve to their continuum
    // limits puts the two certification thresholds within half a percent of
    // each other (d=4 first certifies near N = 254.9k rounds, d=3 near
    // 256.0k): the larger alphabet's extra min-entropy is almost exactly
    // cancelled by its larger finite-size penalties. The geometric search
    // grids below quantize each threshold by several percent, so the
    // measured ordering is grid noise rather than signal, and the strict
    // "higher dimension certifies sooner" comparison is expected to fail.
    let pg_points = DEFAULT_PG_POINTS;
    let mut crossings: Vec<u64> = Vec::new();
    let mut top_rates: Vec<f64> = Vec::new();
    for d in [3usize, 4] {
        let setup = cglmp_setup(d, 0.0).map_err(|e| e.to_string())?;
        let ctx = KeyrateContext::build(&setup, eps, pg_points).map_err(|e| e.to_string())?;
        let cross = ctx
            .crossing(&tune, 10_000, 1_000_000_000_000_000)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("d={d}: no positive rate by N=1e15"))?;
        crossings.push(cross);
        let top = ctx
            .rate_at(1_000_000_000_000_000, &tune)
            .map_err(|e| e.to_string())?;
        top_rates.push(top.rate / (d as f64).log2());
    }
    let mut problems: Vec<String> = Vec::new();
    if crossings[1] >= crossings[0] {
        problems.push(format!(
            "higher dimension does not certify sooner: crossings {crossings:?}"
        ));
    }
    if top_rates[0] <= top_rates[1] {
        problems.push(format!(
            "lower dimension does not win at large N: normalized rates {top_rates:?}"
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}
