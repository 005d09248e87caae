//! Upper bounds on an eavesdropper's guessing probability from an observed
//! Bell value, via a level-2 moment-matrix (noncommutative polynomial)
//! relaxation solved as a semidefinite program.
//!
//! The relaxation works in the reduced operator basis that drops each
//! setting's last outcome (whose projector is fixed by completeness). Moment
//! matrices are real symmetric without loss of generality: every constraint
//! below touches only self-adjoint first-order moments, so the real part of
//! any complex feasible point is feasible with the same objective.
//!
//! For a guess alphabet of size `d` (the outcome count), the adversary holds
//! one sub-normalized moment block per possible guess `e`. Writing `y_e` for
//! the moment vector of branch `e`, the physical problem is
//!
//! ```text
//! maximize   Σ_e ⟨Π_{e|x*}⟩_e                 (probability the guess is right)
//! subject to Σ_e ⟨1⟩_e = 1                    (branch weights)
//!            Σ_e Σ_k w_k y_{e,k} = β          (observed Bell value)
//!            Γ(y_e) ⪰ 0 for every e           (level-2 moment matrices)
//! ```
//!
//! with `x*` Alice's key-generation setting (index 0) and `w` the Bell
//! functional re-expressed over moments. The code assembles the conic dual of
//! this problem — variables `(X_e ⪰ 0, u_norm, u_bell)`, one equality row per
//! branch/moment-class pair — so the solver's dual multipliers are exactly
//! the physical moments `y_{e,k}` and its objective equals the bound.

use std::collections::BTreeMap;

use conic::{
    Cmp, LinExpr, ScalarKind, SemidefiniteProgram, Sense, SolveStatus, SolverOptions,
};
use thiserror::Error;

use crate::polytope::{BehaviorKind, BehaviorVector, BellFunctional};
use crate::quantum::Scenario;

#[derive(Debug, Error)]
pub enum NpaError {
    #[error("bell value {beta} exceeds the quantum maximum of this functional")]
    BetaAboveQuantumMaximum { beta: f64 },
    #[error("bell value {beta} is below the classical bound {classical}")]
    BetaBelowClassicalBound { beta: f64, classical: f64 },
    #[error("unexpected solver outcome: {0}")]
    UnexpectedStatus(String),
    #[error("scenario too small: need at least one setting per party and d ≥ 2")]
    DegenerateScenario,
    #[error("key setting {key_setting} out of range: Alice has {m_a} settings")]
    KeySettingOutOfRange { key_setting: usize, m_a: usize },
    #[error(transparent)]
    Solver(#[from] conic::SolverError),
}

/// One projector symbol `Π_{outcome|setting}` of one party (0 = Alice,
/// 1 = Bob). Ordering is (party, setting, outcome).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Sym {
    party: u8,
    setting: u8,
    outcome: u8,
}

/// Product of projector symbols. The empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Word(Vec<Sym>);

impl Word {
    fn id() -> Self {
        Word(Vec::new())
    }

    /// Normal form under the projector algebra: commute Alice past Bob
    /// (stable within each party), collapse repeated projectors, and map
    /// products of orthogonal projectors (same party and setting, different
    /// outcome) to zero, returned as `None`.
    fn reduce(mut self) -> Option<Word> {
        // Stable partition: Alice symbols first, preserving relative order
        // within each party (same-party symbols need not commute).
        let mut a: Vec<Sym> = Vec::with_capacity(self.0.len());
        let mut b: Vec<Sym> = Vec::new();
        for s in self.0.drain(..) {
            if s.party == 0 {
                a.push(s);
            } else {
                b.push(s);
            }
        }
        for part in [&mut a, &mut b] {
            let mut i = 0;
            while i + 1 < part.len() {
                let (s, t) = (part[i], part[i + 1]);
                if s == t {
                    part.remove(i + 1);
                    i = i.saturating_sub(1);
                } else if s.setting == t.setting {
                    return None;
                } else {
                    i += 1;
                }
            }
        }
        a.extend(b);
        Some(Word(a))
    }

    /// Adjoint: reverse the Alice run and the Bob run independently (each
    /// symbol is self-adjoint, the parties commute).
    fn adjoint(&self) -> Word {
        let split = self.0.iter().position(|s| s.party == 1).unwrap_or(self.0.len());
        let mut syms: Vec<Sym> = self.0[..split].iter().rev().copied().collect();
        syms.extend(self.0[split..].iter().rev().copied());
        Word(syms)
    }

    /// Representative of the {w, w†} pair: real-symmetric moment matrices
    /// carry Re⟨w⟩ = Re⟨w†⟩, so both reduce to one moment class.
    fn canonical(self) -> Word {
        let adj = self.adjoint();
        if adj < self {
            adj
        } else {
            self
        }
    }
}

fn sym(party: u8, setting: usize, outcome: usize) -> Sym {
    Sym {
        party,
        setting: setting as u8,
        outcome: outcome as u8,
    }
}

/// Level-2 monomial basis and the moment classes of its Gram products.
struct MomentBasis {
    scenario: Scenario,
    words: Vec<Word>,
    /// Canonical word of each moment class, with the upper-triangle positions
    /// `(i ≤ j)` of the moment matrix it occupies. Sorted by word; the empty
    /// (identity) word sorts first.
    classes: Vec<(Word, Vec<(usize, usize)>)>,
    class_of: BTreeMap<Word, usize>,
}

impl MomentBasis {
    fn build(scenario: Scenario) -> Result<Self, NpaError> {
        let (m_a, m_b, d) = (scenario.m_a, scenario.m_b, scenario.d);
        if m_a == 0 || m_b == 0 || d < 2 {
            return Err(NpaError::DegenerateScenario);
        }
        let last = d - 1;
        let mut words = vec![Word::id()];
        for x in 0..m_a {
            for a in 0..last {
                words.push(Word(vec![sym(0, x, a)]));
            }
        }
        for y in 0..m_b {
            for b in 0..last {
                words.push(Word(vec![sym(1, y, b)]));
            }
        }
        for x1 in 0..m_a {
            for x2 in 0..m_a {
                if x1 == x2 {
                    continue;
                }
                for a1 in 0..last {
                    for a2 in 0..last {
                        words.push(Word(vec![sym(0, x1, a1), sym(0, x2, a2)]));
                    }
                }
            }
        }
        for y1 in 0..m_b {
            for y2 in 0..m_b {
                if y1 == y2 {
                    continue;
                }
                for b1 in 0..last {
                    for b2 in 0..last {
                        words.push(Word(vec![sym(1, y1, b1), sym(1, y2, b2)]));
                    }
                }
            }
        }
        for x in 0..m_a {
            for a in 0..last {
                for y in 0..m_b {
                    for b in 0..last {
                        words.push(Word(vec![sym(0, x, a), sym(1, y, b)]));
                    }
                }
            }
        }

        let mut grouped: BTreeMap<Word, Vec<(usize, usize)>> = BTreeMap::new();
        for i in 0..words.len() {
            for j in i..words.len() {
                let mut product = words[i].adjoint();
                product.0.extend(words[j].0.iter().copied());
                if let Some(reduced) = product.reduce() {
                    grouped.entry(reduced.canonical()).or_default().push((i, j));
                }
            }
        }
        let classes: Vec<(Word, Vec<(usize, usize)>)> = grouped.into_iter().collect();
        let class_of = classes
            .iter()
            .enumerate()
            .map(|(k, (w, _))| (w.clone(), k))
            .collect();
        Ok(MomentBasis {
            scenario,
            words,
            classes,
            class_of,
        })
    }

    fn size(&self) -> usize {
        self.words.len()
    }

    fn class_index(&self, word: &Word) -> usize {
        self.class_of[word]
    }

    fn single_a(&self, x: usize, a: usize) -> usize {
        self.class_index(&Word(vec![sym(0, x, a)]))
    }

    fn single_b(&self, y: usize, b: usize) -> usize {
        self.class_index(&Word(vec![sym(1, y, b)]))
    }

    fn pair_ab(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        self.class_index(&Word(vec![sym(0, x, a), sym(1, y, b)]))
    }

    /// Bell functional re-expressed over moment classes: eliminating each
    /// setting's last outcome `L` by completeness turns `Σ h·P` into an
    /// affine combination of the identity, single-party, and two-party
    /// moments:
    ///
    /// ```text
    /// w_id          = Σ_{x,y} h[x,y,L,L]
    /// w_A[x,a]      = Σ_y (h[x,y,a,L] − h[x,y,L,L])
    /// w_B[y,b]      = Σ_x (h[x,y,L,b] − h[x,y,L,L])
    /// w_AB[x,y,a,b] = h[x,y,a,b] − h[x,y,a,L] − h[x,y,L,b] + h[x,y,L,L]
    /// ```
    fn functional_weights(&self, f: &BellFunctional) -> Vec<f64> {
        let s = self.scenario;
        let last = s.d - 1;
        let h = |x: usize, y: usize, a: usize, b: usize| f.h[s.index(x, y, a, b)];
        let mut w = vec![0.0; self.classes.len()];
        let mut w_id = 0.0;
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                w_id += h(x, y, last, last);
            }
        }
        w[0] += w_id;
        for x in 0..s.m_a {
            for a in 0..last {
                let mut v = 0.0;
                for y in 0..s.m_b {
                    v += h(x, y, a, last) - h(x, y, last, last);
                }
                w[self.single_a(x, a)] += v;
            }
        }
        for y in 0..s.m_b {
            for b in 0..last {
                let mut v = 0.0;
                for x in 0..s.m_a {
                    v += h(x, y, last, b) - h(x, y, last, last);
                }
                w[self.single_b(y, b)] += v;
            }
        }
        for x in 0..s.m_a {
            for y in 0..s.m_b {
                for a in 0..last {
                    for b in 0..last {
                        let v = h(x, y, a, b) - h(x, y, a, last) - h(x, y, last, b)
                            + h(x, y, last, last);
                        w[self.pair_ab(x, y, a, b)] += v;
                    }
                }
            }
        }
        w
    }
}

fn npa_options() -> SolverOptions {
    SolverOptions {
        tol_feas: 1e-9,
        tol_gap: 1e-9,
        ..SolverOptions::default()
    }
}

/// Largest Bell value of the functional over level-2 moment matrices — an
/// upper bound on (and in practice an excellent proxy for) the quantum
/// maximum.
pub fn quantum_maximum(f: &BellFunctional) -> Result<f64, NpaError> {
    quantum_maximum_with(f, &npa_options())
}

pub fn quantum_maximum_with(f: &BellFunctional, opts: &SolverOptions) -> Result<f64, NpaError> {
    let basis = MomentBasis::build(f.scenario)?;
    let w = basis.functional_weights(f);
    let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
    let block = sdp.add_psd_block(basis.size());
    let u = sdp.add_scalar(ScalarKind::Free);
    sdp.set_objective(LinExpr::new().scalar(u, 1.0));
    for (k, (_, positions)) in basis.classes.iter().enumerate() {
        let mut expr = LinExpr::new();
        for &(i, j) in positions {
            expr = expr.psd(block, i, j, if i == j { -1.0 } else { -2.0 });
        }
        if k == 0 {
            expr = expr.scalar(u, 1.0);
        }
        sdp.add_constraint(expr, Cmp::Eq, w[k]);
    }
    let sol = sdp.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective),
        other => Err(NpaError::UnexpectedStatus(format!(
            "{other:?} while maximizing the bell value"
        ))),
    }
}

/// Certified upper bound on the adversary's guessing probability.
#[derive(Clone, Debug)]
pub struct GuessingBound {
    /// Bell value the bound was computed at.
    pub beta: f64,
    /// Alice input whose outcome the adversary guesses.
    pub key_setting: usize,
    /// Upper bound on the probability of guessing Alice's key outcome.
    pub pg: f64,
    behavior: BehaviorVector,
}

impl GuessingBound {
    /// Certified min-entropy of the key outcome, −log₂ pg.
    pub fn hmin(&self) -> f64 {
        -self.pg.log2()
    }

    /// Behavior realizing the bound (summed over the adversary's guess
    /// branches), reconstructed from the relaxation's moments. Diagnostic:
    /// entries are clamped to [0,1] and blocks renormalized, so tiny solver
    /// residuals are smoothed away.
    pub fn reconstructed_behavior(&self) -> &BehaviorVector {
        &self.behavior
    }
}

/// Bounds the guessing probability of Alice's outcome on her first setting,
/// given that the functional evaluates to `beta`. Requires
/// `beta ≥ f.c` (at the classical bound the result is 1) and errors with
/// [`NpaError::BetaAboveQuantumMaximum`] when `beta` is unattainable.
pub fn guessing_probability(f: &BellFunctional, beta: f64) -> Result<GuessingBound, NpaError> {
    guessing_probability_for(f, beta, 0, &npa_options())
}

pub fn guessing_probability_with(
    f: &BellFunctional,
    beta: f64,
    opts: &SolverOptions,
) -> Result<GuessingBound, NpaError> {
    guessing_probability_for(f, beta, 0, opts)
}

/// Same bound for an arbitrary key-generation input of Alice's.
pub fn guessing_probability_for(
    f: &BellFunctional,
    beta: f64,
    key_setting: usize,
    opts: &SolverOptions,
) -> Result<GuessingBound, NpaError> {
    if key_setting >= f.scenario.m_a {
        return Err(NpaError::KeySettingOutOfRange {
            key_setting,
            m_a: f.scenario.m_a,
        });
    }
    if beta < f.c - 1e-9 {
        return Err(NpaError::BetaBelowClassicalBound {
            beta,
            classical: f.c,
        });
    }
    let basis = MomentBasis::build(f.scenario)?;
    let d = f.scenario.d;
    let last = d - 1;
    let w = basis.functional_weights(f);
    let n_classes = basis.classes.len();

    let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
    let blocks: Vec<usize> = (0..d).map(|_| sdp.add_psd_block(basis.size())).collect();
    let u_norm = sdp.add_scalar(ScalarKind::Free);
    let u_bell = sdp.add_scalar(ScalarKind::Free);
    sdp.set_objective(LinExpr::new().scalar(u_norm, 1.0).scalar(u_bell, beta));

    // Right-hand sides encode the guessing objective per branch: branch e
    // scores ⟨Π_{e|x*}⟩; the dropped last outcome is 1 − Σ_{a<L} ⟨Π_{a|x*}⟩.
    let mut rhs = vec![vec![0.0; n_classes]; d];
    for (e, rhs_e) in rhs.iter_mut().enumerate() {
        if e < last {
            rhs_e[basis.single_a(key_setting, e)] = 1.0;
        } else {
            rhs_e[0] = 1.0;
            for a in 0..last {
                rhs_e[basis.single_a(key_setting, a)] = -1.0;
            }
        }
    }

    for e in 0..d {
        for (k, (_, positions)) in basis.classes.iter().enumerate() {
            let mut expr = LinExpr::new();
            for &(i, j) in positions {
                expr = expr.psd(blocks[e], i, j, if i == j { -1.0 } else { -2.0 });
            }
            if k == 0 {
                expr = expr.scalar(u_norm, 1.0);
            }
            if w[k] != 0.0 {
                expr = expr.scalar(u_bell, w[k]);
            }
            sdp.add_constraint(expr, Cmp::Eq, rhs[e][k]);
        }
    }

    let sol = sdp.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::DualInfeasible => {
            return Err(NpaError::BetaAboveQuantumMaximum { beta });
        }
        SolveStatus::PrimalInfeasible => {
            return Err(NpaError::UnexpectedStatus(
                "guessing-probability relaxation reported primal infeasibility".into(),
            ));
        }
    }
    let pg = sol.objective.clamp(1.0 / d as f64, 1.0);

    // The equality multipliers are the physical moments; summing branches
    // gives the total attack behavior via the inverse outcome-elimination.
    let moments = |k: usize| -> f64 { (0..d).map(|e| sol.duals[e * n_classes + k]).sum() };
    let s = f.scenario;
    let norm = moments(0);
    let mut entries = vec![0.0; s.behavior_len()];
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            let mut a_marg = vec![0.0; last];
            let mut b_marg = vec![0.0; last];
            let mut joint_total = 0.0;
            for a in 0..last {
                for b in 0..last {
                    let j = moments(basis.pair_ab(x, y, a, b));
                    entries[s.index(x, y, a, b)] = j;
                    a_marg[a] += j;
                    b_marg[b] += j;
                    joint_total += j;
                }
            }
            let mut a_total = 0.0;
            for a in 0..last {
                let single = moments(basis.single_a(x, a));
                entries[s.index(x, y, a, last)] = single - a_marg[a];
                a_total += single;
            }
            let mut b_total = 0.0;
            for b in 0..last {
                let single = moments(basis.single_b(y, b));
                entries[s.index(x, y, last, b)] = single - b_marg[b];
                b_total += single;
            }
            entries[s.index(x, y, last, last)] = norm - a_total - b_total + joint_total;
        }
    }
    for e in entries.iter_mut() {
        *e = e.max(0.0);
    }
    for x in 0..s.m_a {
        for y in 0..s.m_b {
            let mut sum = 0.0;
            for a in 0..d {
                for b in 0..d {
                    sum += entries[s.index(x, y, a, b)];
                }
            }
            if sum > 0.0 {
                for a in 0..d {
                    for b in 0..d {
                        entries[s.index(x, y, a, b)] /= sum;
                    }
                }
            }
        }
    }
    let behavior = BehaviorVector::new(s, entries, BehaviorKind::Exact).map_err(|e| {
        NpaError::UnexpectedStatus(format!("moment reconstruction invalid: {e}"))
    })?;

    Ok(GuessingBound {
        beta,
        key_setting,
        pg,
        behavior,
    })
}
