//! Deterministic experiment drivers behind the command-line frontend:
//! finite-size key-rate curves on exact Born statistics, random-measurement
//! surveys, CHSH-subset comparisons, and CSV/SVG emission.
//!
//! The curve pipeline evaluates the *expected* key rate of a setup: exact
//! behavior → optimal functional → exact Bell value and QBER → statistical
//! margins at each round count → guessing-probability bound → key length.
//! Monte-Carlo fluctuation enters only through [`crate::protocol`].

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finitekey::{gamma_range, key_length, EpsilonBudget, FiniteKeyError, ProtocolParams};
use crate::npa::{self, NpaError};
use crate::polytope::{optimal_hyperplane, BellFunctional, PolytopeError};
use crate::protocol::{configured_threads, ProtocolError};
use crate::quantum::{
    chain_setup_tilted, chsh_setup, cglmp_setup, classical_uniform_setup, key_qber,
    nonmax_qutrit_setup, pe_behavior, preset_c1, preset_c2, preset_c2c3, random_settings_setup,
    QuantumError, QuantumSetup, SetupSpec,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Npa(#[from] NpaError),
    #[error(transparent)]
    FiniteKey(#[from] FiniteKeyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Default number of SDP solves spent on a guessing-probability curve.
pub const DEFAULT_PG_POINTS: usize = 26;

/// Geometric grid with `points` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).powf(1.0 / (points - 1) as f64);
    (0..points).map(|i| lo * step.powi(i as i32)).collect()
}

/// Round counts covering `10^lo_exp ..= 10^hi_exp` with `per_decade` points
/// per decade, deduplicated after rounding.
pub fn decade_grid(lo_exp: u32, hi_exp: u32, per_decade: u32) -> Vec<u64> {
    let mut grid: Vec<u64> = (lo_exp * per_decade..=hi_exp * per_decade)
        .map(|k| 10f64.powf(k as f64 / per_decade as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Default round-count grid: six points per decade, 10⁴ through 10¹⁵.
pub fn default_n_grid() -> Vec<u64> {
    decade_grid(4, 15, 6)
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = 1.959_963_984_540_054_f64;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (((center - half).max(0.0)), ((center + half).min(1.0)))
}

/// Piecewise-constant, conservative lookup for the guessing-probability
/// bound as a function of the certified Bell value.
///
/// Grid points accumulate geometrically toward the target value (the
/// large-round limit of the certified value), and lookups snap *down* to the
/// nearest grid point, which rounds the guessing probability *up* — always
/// on the safe side of the true curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PgCurve {
    pub classical_bound: f64,
    /// Ascending Bell values; `betas[0]` is the classical bound itself.
    pub betas: Vec<f64>,
    /// Guessing bounds at `betas`, nonincreasing, `pgs[0] = 1`.
    pub pgs: Vec<f64>,
}

impl PgCurve {
    /// Solves the relaxation on a geometric grid from the classical bound
    /// toward `beta_target`. The strongest constraint is solved first: when
    /// even that leaves the guess unconstrained the curve is flat at 1 and
    /// the remaining solves are skipped.
    pub fn build(
        f: &BellFunctional,
        beta_target: f64,
        points: usize,
    ) -> Result<Self, ExperimentError> {
        if points == 0 {
            return Err(ExperimentError::BadConfig(
                "guessing curve needs at least one point".into(),
            ));
        }
        let c = f.c;
        if !beta_target.is_finite() || beta_target <= c + 1e-12 {
            // Nothing beyond the classical bound to certify.
            return Ok(PgCurve {
                classical_bound: c,
                betas: vec![c],
                pgs: vec![1.0],
            });
        }
        // The ladder always spans the same dynamic range — offsets from the
        // full gap down to ~3e-7 of it, the scale where the guessing bound
        // stops moving at solver precision — so extra points refine the
        // whole curve uniformly in log-offset instead of piling up beneath
        // the smallest resolvable offset.
        let ratio = if points > 1 {
            0.55_f64.powf(25.0 / (points as f64 - 1.0))
        } else {
            0.55
        };
        let grid = |target: f64| -> Vec<f64> {
            let mut betas: Vec<f64> = (0..points)
                .map(|i| target - (target - c) * ratio.powi(i as i32))
                .collect();
            betas[0] = c;
            betas
        };
        let solve = |beta: f64| -> Result<Option<f64>, ExperimentError> {
            match npa::guessing_probability(f, beta) {
                Ok(bound) => Ok(Some(bound.pg)),
                Err(NpaError::BetaAboveQuantumMaximum { .. }) => Ok(None),
                Err(NpaError::Solver(_)) => {
                    // Bell values within ~1e-6 of the relaxation's maximum
                    // pin the moment matrix to a boundary point with no
                    // strictly feasible interior; a loosened stopping rule
                    // still yields the bound to more digits than the curve
                    // resolution uses.
                    let opts = conic::SolverOptions {
                        tol_feas: 1e-6,
                        tol_gap: 1e-6,
                        ..conic::SolverOptions::default()
                    };
                    match npa::guessing_probability_with(f, beta, &opts) {
                        Ok(bound) => Ok(Some(bound.pg)),
                        Err(NpaError::BetaAboveQuantumMaximum { .. }) => Ok(None),
                        Err(e) => Err(e.into()),
                    }
                }
                Err(e) => Err(e.into()),
            }
        };
        let mut betas = grid(beta_target);
        let mut top = match solve(betas[points - 1])? {
            Some(pg) => pg,
            None => {
                // The target overshoots the relaxation's own maximum by a
                // numerical sliver; rebuild the grid just below it.
                let qmax = npa::quantum_maximum(f)?;
                betas = grid(qmax - 1e-9);
                solve(betas[points - 1])?.ok_or_else(|| {
                    ExperimentError::BadConfig(format!(
                        "Bell value {beta_target} not attainable by the relaxation"
                    ))
                })?
            }
        };
        top = top.clamp(0.0, 1.0);
        let mut pgs = vec![1.0; points];
        pgs[points - 1] = top;
        if top < 1.0 - 1e-9 {
            for i in 1..points - 1 {
                pgs[i] = match solve(betas[i])? {
                    Some(pg) => pg,
                    None => pgs[i - 1],
                };
            }
        }
        for i in 1..points {
            pgs[i] = pgs[i].min(pgs[i - 1]);
        }
        Ok(PgCurve {
            classical_bound: c,
            betas,
            pgs,
        })
    }

    /// Conservative guessing bound at Bell value `beta`: the value at the
    /// largest grid point not exceeding `beta` (1 at or below the classical
    /// bound).
    pub fn lookup(&self, beta: f64) -> f64 {
        let mut pg = 1.0;
        for (b, p) in self.betas.iter().zip(&self.pgs) {
            if *b <= beta {
                pg = *p;
            } else {
                break;
            }
        }
        pg
    }
}

/// Search grids for the test fraction ξ and QBER-sampling fraction η. The
/// rate is flat near its optimum in both, so coarse geometric grids lose
/// little.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneGrid {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            xi: log_grid(1e-6, 0.4, 14),
            eta: log_grid(1e-7, 0.2, 11),
        }
    }
}

/// One point of a finite-size key-rate curve: the best rate found on the
/// tuning grid and the parameters achieving it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KeyratePoint {
    pub n_rounds: u64,
    pub rate: f64,
    pub key_length: f64,
    pub xi: f64,
    pub eta: f64,
    pub beta: f64,
    pub pg: f64,
}

impl KeyratePoint {
    fn zero(n_rounds: u64, classical_bound: f64) -> Self {
        KeyratePoint {
            n_rounds,
            rate: 0.0,
            key_length: 0.0,
            xi: 0.0,
            eta: 0.0,
            beta: classical_bound,
            pg: 1.0,
        }
    }
}

/// Everything needed to evaluate the expected key rate of one setup at any
/// round count: optimal functional, exact Bell value and QBER, estimator
/// range for uniform inputs, and the precomputed guessing curve.
pub struct KeyrateContext {
    pub functional: BellFunctional,
    pub bell_value: f64,
    pub qber: f64,
    pub gamma: f64,
    pub d: usize,
    pub eps: EpsilonBudget,
    pub pg_curve: PgCurve,
}

impl KeyrateContext {
    /// Runs the exact pipeline once (one LP, `pg_points` SDP solves). Fails
    /// with the polytope's infeasibility error when the setup's behavior is
    /// classical.
    pub fn build(
        setup: &QuantumSetup,
        eps: EpsilonBudget,
        pg_points: usize,
    ) -> Result<Self, ExperimentError> {
        let behavior = pe_behavior(setup)?;
        let functional = optimal_hyperplane(&behavior)?;
        let bell_value = functional.evaluate(&behavior);
        let m = setup.m();
        let uniform = vec![1.0 / (m * m) as f64; m * m];
        let gamma = gamma_range(&functional, &uniform)?;
        let qber = key_qber(setup)?;
        let pg_curve = PgCurve::build(&functional, bell_value, pg_points)?;
        Ok(KeyrateContext {
            functional,
            bell_value,
            qber,
            gamma,
            d: setup.outcomes(),
            eps,
            pg_curve,
        })
    }

    /// Best expected rate over the tuning grid at `n_rounds`. Parameter
    /// choices that cannot certify anything (no sampling-bound root, empty
    /// counts) contribute zero rather than failing the sweep.
    pub fn rate_at(&self, n_rounds: u64, tune: &TuneGrid) -> Result<KeyratePoint, ExperimentError> {
        let mut best = KeyratePoint::zero(n_rounds, self.pg_curve.classical_bound);
        for &xi in &tune.xi {
            for &eta in &tune.eta {
                if xi + eta >= 1.0 {
                    continue;
                }
                let params = match ProtocolParams::new(n_rounds, xi, eta, self.d, self.eps) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let beta = self.bell_value - params.delta_est(self.gamma) - params.delta_con(self.gamma);
                let pg = self.pg_curve.lookup(beta);
                let report = match key_length(&params, pg, self.qber) {
                    Ok(r) => r,
                    Err(FiniteKeyError::ZeroCount | FiniteKeyError::NoRoot { .. }) => continue,
                    Err(e) => return Err(e.into()),
                };
                if report.l > best.key_length {
                    best = KeyratePoint {
                        n_rounds,
                        rate: report.rate,
                        key_length: report.l,
                        xi,
                        eta,
                        beta,
                        pg,
                    };
                }
            }
        }
        Ok(best)
    }

    /// Smallest round count in `[lo, hi]` with positive tuned rate, located
    /// by geometric bisection (the tuned rate is nondecreasing in the round
    /// count). `None` when even `hi` gives no key.
    pub fn crossing(
        &self,
        tune: &TuneGrid,
        lo: u64,
        hi: u64,
    ) -> Result<Option<u64>, ExperimentError> {
        if self.rate_at(hi, tune)?.rate <= 0.0 {
            return Ok(None);
        }
        if self.rate_at(lo, tune)?.rate > 0.0 {
            return Ok(Some(lo));
        }
        let (mut lo, mut hi) = (lo, hi);
        while hi as f64 / lo as f64 > 1.001 {
            let mid = (((lo as f64).ln() + (hi as f64).ln()) / 2.0).exp().round() as u64;
            let mid = mid.clamp(lo + 1, hi - 1);
            if self.rate_at(mid, tune)?.rate > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }
}

/// Expected key-rate curve over a round-count grid.
pub fn keyrate_curve(
    ctx: &KeyrateContext,
    n_grid: &[u64],
    tune: &TuneGrid,
) -> Result<Vec<KeyratePoint>, ExperimentError> {
    n_grid.iter().map(|&n| ctx.rate_at(n, tune)).collect()
}

/// Tilted-chain sweep: the expected rate of the three-setting chain setup as
/// a function of the common tilt angle, at a fixed round count.
pub fn theta_sweep(
    p: f64,
    thetas: &[f64],
    n_rounds: u64,
    eps: EpsilonBudget,
    tune: &TuneGrid,
    pg_points: usize,
) -> Result<Vec<(f64, KeyratePoint)>, ExperimentError> {
    thetas
        .iter()
        .map(|&theta| {
            let setup = chain_setup_tilted(3, p, theta)?;
            let ctx = KeyrateContext::build(&setup, eps, pg_points)?;
            Ok((theta, ctx.rate_at(n_rounds, tune)?))
        })
        .collect()
}

/// Closed-form tight guessing bound for the CHSH functional (correlator
/// normalization, classical bound 2) at Bell value `beta`:
/// `1/2 + ½√(2 − β²/4)` between 2 and 2√2, clamped to 1 below and ½ above.
pub fn chsh_guessing_probability(beta: f64) -> f64 {
    if beta <= 2.0 {
        return 1.0;
    }
    let s = beta.min(2.0 * std::f64::consts::SQRT_2);
    0.5 + 0.5 * (2.0 - s * s / 4.0).max(0.0).sqrt()
}

/// One two-setting-per-party subset of a larger qubit setup, evaluated with
/// the CHSH functional and its closed-form guessing bound. Setting indices
/// are 1-based.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChshSubsetPoint {
    pub x_pair: (usize, usize),
    pub y_pair: (usize, usize),
    pub s_value: f64,
    pub rate: f64,
}

/// Expected rate of every two-setting subset of `setup` under the best CHSH
/// sign variant, with the same key pair, error rate, and statistical
/// machinery as the full analysis. Requires binary outcomes.
pub fn chsh_subset_rates(
    setup: &QuantumSetup,
    eps: EpsilonBudget,
    n_rounds: u64,
    tune: &TuneGrid,
) -> Result<Vec<ChshSubsetPoint>, ExperimentError> {
    if setup.outcomes() != 2 {
        return Err(ExperimentError::BadConfig(
            "CHSH subsets need binary outcomes".into(),
        ));
    }
    let m = setup.m();
    if m < 2 {
        return Err(ExperimentError::BadConfig(
            "CHSH subsets need at least two settings per party".into(),
        ));
    }
    let behavior = pe_behavior(setup)?;
    let qber = key_qber(setup)?;
    let correlator = |x: usize, y: usize| -> f64 {
        let mut e = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let sign = if a == b { 1.0 } else { -1.0 };
                e += sign * behavior.prob(x, y, a, b);
            }
        }
        e
    };
    // With uniform inputs on the subset's four pairs, each |h| = 1 cell
    // contributes ±1/(1/4) to the per-round estimator, so its range is 8.
    let gamma = 8.0;
    let mut out = Vec::new();
    for x0 in 0..m {
        for x1 in x0 + 1..m {
            for y0 in 0..m {
                for y1 in y0 + 1..m {
                    let e = [
                        [correlator(x0, y0), correlator(x0, y1)],
                        [correlator(x1, y0), correlator(x1, y1)],
                    ];
                    let mut s = 0.0_f64;
                    for flipped in 0..4 {
                        let mut v = 0.0;
                        for (cell, value) in e.iter().flatten().enumerate() {
                            v += if cell == flipped { -value } else { *value };
                        }
                        s = s.max(v.abs());
                    }
                    let mut best = 0.0_f64;
                    for &xi in &tune.xi {
                        for &eta in &tune.eta {
                            if xi + eta >= 1.0 {
                                continue;
                            }
                            let params =
                                match ProtocolParams::new(n_rounds, xi, eta, 2, eps) {
                                    Ok(p) => p,
                                    Err(_) => continue,
                                };
                            let beta =
                                s - params.delta_est(gamma) - params.delta_con(gamma);
                            let pg = chsh_guessing_probability(beta);
                            match key_length(&params, pg, qber) {
                                Ok(r) => best = best.max(r.rate),
                                Err(
                                    FiniteKeyError::ZeroCount
                                    | FiniteKeyError::NoRoot { .. },
                                ) => continue,
                                Err(e) => return Err(e.into()),
                            }
                        }
                    }
                    out.push(ChshSubsetPoint {
                        x_pair: (x0 + 1, x1 + 1),
                        y_pair: (y0 + 1, y1 + 1),
                        s_value: s,
                        rate: best,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One cell of the random-measurement survey: the fraction of Haar-random
/// setups (key bases pinned computational) whose expected key rate at the
/// given round count is strictly positive.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RandomSettingsCell {
    pub m: usize,
    pub d: usize,
    pub p: f64,
    pub n_rounds: u64,
    pub trials: u64,
    pub nonzero: u64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Per-trial tuning grid for the survey. The round count is large and fixed,
/// so a handful of fractions suffices; the guessing bound is solved once per
/// trial at the most conservative certified value over the grid, which can
/// only under-report the rate (never fabricate key).
const SURVEY_XI: [f64; 3] = [1e-4, 1e-3, 1e-2];
const SURVEY_ETA: [f64; 3] = [1e-5, 1e-4, 1e-3];

fn survey_trial(
    m: usize,
    d: usize,
    p: f64,
    n_rounds: u64,
    eps: EpsilonBudget,
    seed: u64,
    trial: u64,
) -> Result<bool, ExperimentError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let setup = random_settings_setup(m, d, p, &mut rng)?;
    let behavior = pe_behavior(&setup)?;
    let functional = match optimal_hyperplane(&behavior) {
        Ok(f) => f,
        Err(PolytopeError::InfeasibleClassical) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let bell_value = functional.evaluate(&behavior);
    let uniform = vec![1.0 / (m * m) as f64; m * m];
    let gamma = gamma_range(&functional, &uniform)?;
    let qber = key_qber(&setup)?;
    let mut candidates = Vec::new();
    let mut beta_min = f64::INFINITY;
    for &xi in &SURVEY_XI {
        for &eta in &SURVEY_ETA {
            let params = match ProtocolParams::new(n_rounds, xi, eta, d, eps) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let beta = bell_value - params.delta_est(gamma) - params.delta_con(gamma);
            if beta > functional.c + 1e-9 {
                beta_min = beta_min.min(beta);
                candidates.push((params, beta));
            }
        }
    }
    if candidates.is_empty() {
        return Ok(false);
    }
    let pg = npa::guessing_probability(&functional, beta_min)?.pg;
    for (params, _) in candidates {
        match key_length(&params, pg, qber) {
            Ok(r) if r.l > 0.0 => return Ok(true),
            Ok(_) => {}
            Err(FiniteKeyError::ZeroCount | FiniteKeyError::NoRoot { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(false)
}

/// Runs `n_trials` independent random-measurement trials (trial `k` draws
/// its settings from stream `k` of `seed`) and counts the non-zero-key
/// fraction. Trials are distributed over [`configured_threads`] threads;
/// the result is independent of the thread count.
pub fn random_settings_experiment(
    m: usize,
    d: usize,
    p: f64,
    n_trials: u64,
    n_rounds: u64,
    eps: EpsilonBudget,
    seed: u64,
) -> Result<RandomSettingsCell, ExperimentError> {
    if n_trials == 0 {
        return Err(ExperimentError::BadConfig("trial count must be positive".into()));
    }
    let threads = configured_threads().min(n_trials as usize);
    let nonzero = if threads <= 1 {
        let mut count = 0u64;
        for trial in 0..n_trials {
            if survey_trial(m, d, p, n_rounds, eps, seed, trial)? {
                count += 1;
            }
        }
        count
    } else {
        let results: Vec<Result<u64, ExperimentError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads as u64)
                .map(|worker| {
                    scope.spawn(move || {
                        let mut count = 0u64;
                        let mut trial = worker;
                        while trial < n_trials {
                            if survey_trial(m, d, p, n_rounds, eps, seed, trial)? {
                                count += 1;
                            }
                            trial += threads as u64;
                        }
                        Ok(count)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("survey worker panicked"))
                .collect()
        });
        let mut total = 0u64;
        for r in results {
            total += r?;
        }
        total
    };
    let (wilson_low, wilson_high) = wilson95(nonzero, n_trials);
    Ok(RandomSettingsCell {
        m,
        d,
        p,
        n_rounds,
        trials: n_trials,
        nonzero,
        fraction: nonzero as f64 / n_trials as f64,
        wilson_low,
        wilson_high,
    })
}

/// Named measurement setups usable from configs. `theta` applies only to
/// the tilted chain; `p` is the white-noise weight where supported.
pub fn preset_setup(name: &str, p: f64, theta: f64) -> Result<QuantumSetup, ExperimentError> {
    if theta != 0.0 && name != "chain3" {
        return Err(ExperimentError::BadConfig(format!(
            "preset '{name}' does not take a tilt angle"
        )));
    }
    let setup = match name {
        "chsh" => chsh_setup(p)?,
        "chain3" => chain_setup_tilted(3, p, theta)?,
        "cglmp3" => cglmp_setup(3, p)?,
        "cglmp4" => cglmp_setup(4, p)?,
        "cglmp5" => cglmp_setup(5, p)?,
        "nonmax3" => {
            if p != 0.0 {
                return Err(ExperimentError::BadConfig(
                    "preset 'nonmax3' is noise-free; p must be 0".into(),
                ));
            }
            nonmax_qutrit_setup()?
        }
        "classical-uniform" => classical_uniform_setup()?,
        "c1" => preset_c1(p)?,
        "c2" => preset_c2(p)?,
        "c2c3" => preset_c2c3(p)?,
        other => {
            return Err(ExperimentError::BadConfig(format!(
                "unknown preset '{other}' (try chsh, chain3, cglmp3, cglmp4, cglmp5, \
                 nonmax3, classical-uniform, c1, c2, c2c3)"
            )))
        }
    };
    Ok(setup)
}

/// Setup selection in configs: a named preset or an explicit state plus
/// measurement matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<SetupSpec>,
}

impl SetupConfig {
    pub fn build(&self) -> Result<QuantumSetup, ExperimentError> {
        match (&self.preset, &self.explicit) {
            (Some(name), None) => preset_setup(name, self.p, self.theta),
            (None, Some(spec)) => Ok(spec.build()?),
            _ => Err(ExperimentError::BadConfig(
                "setup needs exactly one of `preset` or `explicit`".into(),
            )),
        }
    }

    pub fn with_noise(&self, p: f64) -> SetupConfig {
        SetupConfig {
            p,
            ..self.clone()
        }
    }
}

/// Failure-probability targets in configs; omitted fields use the defaults.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonConfig {
    pub completeness: f64,
    pub soundness: f64,
}

impl EpsilonConfig {
    pub fn to_budget(self) -> Result<EpsilonBudget, ExperimentError> {
        Ok(EpsilonBudget::split(self.completeness, self.soundness)?)
    }
}

pub fn budget_from(eps: Option<EpsilonConfig>) -> Result<EpsilonBudget, ExperimentError> {
    match eps {
        Some(cfg) => cfg.to_budget(),
        None => Ok(EpsilonBudget::default()),
    }
}

/// Protocol parameters in configs; `d` comes from the setup.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub n_rounds: u64,
    pub xi: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<EpsilonConfig>,
}

impl ParamsConfig {
    pub fn build(&self, d: usize) -> Result<ProtocolParams, ExperimentError> {
        Ok(ProtocolParams::new(
            self.n_rounds,
            self.xi,
            self.eta,
            d,
            budget_from(self.eps)?,
        )?)
    }
}

/// Writes rows as CSV with provenance headers: the exact parameter JSON and
/// a schema tag, both as `#` comments ahead of the column names.
pub fn write_csv(
    path: &Path,
    schema: &str,
    params: &serde_json::Value,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), ExperimentError> {
    let mut text = String::new();
    let _ = writeln!(text, "# params: {params}");
    let _ = writeln!(text, "# schema: {schema}");
    let _ = writeln!(text, "{}", columns.join(","));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Minimal static SVG line plot: one polyline per series, decade ticks when
/// the x axis is logarithmic. No external assets.
pub fn render_line_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_x: bool,
) -> String {
    const W: f64 = 860.0;
    const H: f64 = 540.0;
    const L: f64 = 90.0;
    const R: f64 = 820.0;
    const T: f64 = 50.0;
    const B: f64 = 470.0;
    const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

    let tx = |x: f64| if log_x { x.log10() } else { x };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = 0.0_f64;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            let x = tx(x);
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !(xmin.is_finite() && xmax > xmin && ymax.is_finite()) {
        xmin = 0.0;
        xmax = 1.0;
        ymax = 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| L + (x - xmin) / (xmax - xmin) * (R - L);
    let py = |y: f64| B - (y - ymin) / (ymax - ymin) * (B - T);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"14\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{title}</text>",
        (L + R) / 2.0
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{L}\" y1=\"{B}\" x2=\"{R}\" y2=\"{B}\" stroke=\"black\"/>\
         <line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{B}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        (L + R) / 2.0,
        B + 45.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{y_label}</text>",
        L,
        T - 12.0
    );
    // X ticks: integer decades in log mode, six even ticks otherwise.
    let xticks: Vec<f64> = if log_x {
        (xmin.ceil() as i64..=xmax.floor() as i64)
            .map(|e| e as f64)
            .collect()
    } else {
        (0..=5).map(|i| xmin + (xmax - xmin) * i as f64 / 5.0).collect()
    };
    for t in xticks {
        let x = px(t);
        let label = if log_x {
            format!("1e{}", t as i64)
        } else {
            format!("{t:.3}")
        };
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{B}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            B + 6.0,
            B + 24.0
        );
    }
    for i in 0..=5 {
        let v = ymin + (ymax - ymin) * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{L}\" y2=\"{y}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3}</text>",
            L - 6.0,
            L - 10.0,
            y + 5.0
        );
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(tx(x)), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            R - 160.0,
            T + 20.0 * (k as f64 + 1.0)
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}
