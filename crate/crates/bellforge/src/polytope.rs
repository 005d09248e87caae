//! Local polytope machinery: behavior vectors, deterministic vertices,
//! classicality testing, and optimal Bell hyperplanes via linear programming.
//!
//! A behavior over scenario `(m_a, m_b, d)` is the vector of conditional
//! probabilities `P(a,b|x,y)` flattened as `((x·m_b + y)·d + a)·d + b`. The
//! local polytope is the convex hull of the `d^(m_a+m_b)` deterministic
//! vertices; a behavior outside it is separated by a Bell functional
//! `h·P ≤ c` satisfied by every vertex.

use conic::{Cmp, LinearProgram, Sense, SolveStatus, SolverOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::Scenario;

/// Hard cap on enumerated vertices (`d^(m_a+m_b)`).
pub const VERTEX_CAP: u128 = 1 << 20;

/// Group-size cap for exhaustive symmetry comparison.
const GROUP_CAP: u128 = 20_000_000;

const BLOCK_SUM_TOL: f64 = 1e-9;
const ENTRY_FLOOR: f64 = -1e-9;
const CLASSICAL_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("behavior has {got} entries, scenario requires {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("behavior entry {index} is {value:.3e}, below the negativity floor")]
    NegativeEntry { index: usize, value: f64 },
    #[error("probabilities for inputs ({x},{y}) sum to {sum:.12} instead of 1")]
    BlockSum { x: usize, y: usize, sum: f64 },
    #[error("scenario has {count} vertices, above the cap {cap}")]
    TooManyVertices { count: u128, cap: u128 },
    #[error("behavior is classical: no separating hyperplane exists")]
    InfeasibleClassical,
    #[error("infeasibility certificate missing from solver output")]
    MissingCertificate,
    #[error("infeasibility certificate does not separate the behavior")]
    CertificateInvalid,
    #[error("symmetry group has {size} elements, above the cap {cap}")]
    GroupTooLarge { size: u128, cap: u128 },
    #[error("functional/behavior scenarios differ: {0:?} vs {1:?}")]
    ScenarioMismatch(Scenario, Scenario),
    #[error("cannot parse tabular functional: {0}")]
    Parse(String),
    #[error(transparent)]
    Solver(#[from] conic::SolverError),
}

/// Whether a behavior is an exact distribution or a finite-sample frequency
/// table (which may slightly violate no-signalling).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BehaviorKind {
    Exact,
    Empirical,
}

/// Validated behavior vector: entries nonnegative and each input block
/// summing to 1 (both within 1e-9). No-signalling is *not* enforced here;
/// see [`no_signalling_defect`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorVector {
    pub scenario: Scenario,
    pub entries: Vec<f64>,
    pub kind: BehaviorKind,
}

impl BehaviorVector {
    pub fn new(
        scenario: Scenario,
        mut entries: Vec<f64>,
        kind: BehaviorKind,
    ) -> Result<Self, PolytopeError> {
        if entries.len() != scenario.behavior_len() {
            return Err(PolytopeError::WrongLength {
                expected: scenario.behavior_len(),
                got: entries.len(),
            });
        }
        for (index, e) in entries.iter_mut().enumerate() {
            if *e < ENTRY_FLOOR {
                return Err(PolytopeError::NegativeEntry { index, value: *e });
            }
            if *e < 0.0 {
                *e = 0.0;
            }
        }
        for x in 0..scenario.m_a {
            for y in 0..scenario.m_b {
                let mut sum = 0.0;
                for a in 0..scenario.d {
                    for b in 0..scenario.d {
                        sum += entries[scenario.index(x, y, a, b)];
                    }
                }
                if (sum - 1.0).abs() > BLOCK_SUM_TOL {
                    return Err(PolytopeError::BlockSum { x, y, sum });
                }
            }
        }
        Ok(BehaviorVector {
            scenario,
            entries,
            kind,
        })
    }

    /// `P(a,b|x,y)`, all indices zero-based.
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.entries[self.scenario.index(x, y, a, b)]
    }
}

/// Largest marginal inconsistency: how much one party's outcome marginals
/// depend on the other party's setting choice. Exact quantum behaviors give
/// values at rounding level; empirical frequencies can be larger.
pub fn no_signalling_defect(p: &BehaviorVector) -> f64 {
    let s = p.scenario;
    let mut defect: f64 = 0.0;
    for x in 0..s.m_a {
        for a in 0..s.d {
            let marginals: Vec<f64> = (0..s.m_b)
                .map(|y| (0..s.d).map(|b| p.prob(x, y, a, b)).sum())
                .collect();
            let max = marginals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let min = marginals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            defect = defect.max(max - min);
        }
    }
    for y in 0..s.m_b {
        for b in 0..s.d {
            let marginals: Vec<f64> = (0..s.m_a)
                .map(|x| (0..s.d).map(|a| p.prob(x, y, a, b)).sum())
                .collect();
            let max = marginals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let min = marginals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            defect = defect.max(max - min);
        }
    }
    defect
}

/// Local deterministic strategy: outcome `a[x]` for each Alice setting,
/// `b[y]` for each Bob setting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeterministicVertex {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl DeterministicVertex {
    /// 0/1 behavior vector of this strategy.
    pub fn behavior(&self, scenario: Scenario) -> BehaviorVector {
        let mut entries = vec![0.0; scenario.behavior_len()];
        for x in 0..scenario.m_a {
            for y in 0..scenario.m_b {
                entries[scenario.index(x, y, self.a[x], self.b[y])] = 1.0;
            }
        }
        BehaviorVector {
            scenario,
            entries,
            kind: BehaviorKind::Exact,
        }
    }

    /// Position of this vertex in enumeration order: the digits
    /// `(a[0], …, a[m_a−1], b[0], …, b[m_b−1])` read as a base-`d` number,
    /// last digit fastest.
    pub fn rank(&self, scenario: Scenario) -> usize {
        let mut r = 0;
        for &digit in self.a.iter().chain(self.b.iter()) {
            r = r * scenario.d + digit;
        }
        r
    }
}

/// Number of deterministic vertices, `d^(m_a+m_b)`, checked against
/// [`VERTEX_CAP`].
pub fn vertex_count(scenario: Scenario) -> Result<usize, PolytopeError> {
    let count = (scenario.d as u128)
        .checked_pow((scenario.m_a + scenario.m_b) as u32)
        .unwrap_or(u128::MAX);
    if count > VERTEX_CAP {
        return Err(PolytopeError::TooManyVertices {
            count,
            cap: VERTEX_CAP,
        });
    }
    Ok(count as usize)
}

/// Iterates all deterministic vertices in rank order.
pub fn enumerate_vertices(
    scenario: Scenario,
) -> Result<impl Iterator<Item = DeterministicVertex>, PolytopeError> {
    let count = vertex_count(scenario)?;
    let m_a = scenario.m_a;
    let m_b = scenario.m_b;
    let d = scenario.d;
    Ok((0..count).map(move |mut r| {
        let mut digits = vec![0usize; m_a + m_b];
        for slot in (0..m_a + m_b).rev() {
            digits[slot] = r % d;
            r /= d;
        }
        DeterministicVertex {
            a: digits[..m_a].to_vec(),
            b: digits[m_a..].to_vec(),
        }
    }))
}

/// Value of a functional's coefficient vector on a deterministic vertex,
/// `Σ_{x,y} h[x, y, a[x], b[y]]`.
pub fn vertex_value(h: &[f64], scenario: Scenario, v: &DeterministicVertex) -> f64 {
    let mut total = 0.0;
    for x in 0..scenario.m_a {
        for y in 0..scenario.m_b {
            total += h[scenario.index(x, y, v.a[x], v.b[y])];
        }
    }
    total
}

/// Bell functional `h·P ≤ c` with coefficients over behavior entries. The
/// classical bound `c` equals the maximum of `h` over deterministic vertices;
/// `violation` records `h·P − c` for the behavior the functional was derived
/// from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellFunctional {
    pub scenario: Scenario,
    pub h: Vec<f64>,
    pub c: f64,
    pub violation: f64,
}

impl BellFunctional {
    /// `h·P` for a behavior over the same scenario.
    pub fn evaluate(&self, p: &BehaviorVector) -> f64 {
        assert_eq!(
            self.scenario, p.scenario,
            "functional and behavior scenarios differ"
        );
        self.h.iter().zip(&p.entries).map(|(a, b)| a * b).sum()
    }

    /// Largest amount by which any deterministic vertex exceeds the bound:
    /// `max_v h·v − c`. Valid functionals give values ≤ 0 up to rounding.
    pub fn max_vertex_excess(&self) -> Result<f64, PolytopeError> {
        let mut max = f64::NEG_INFINITY;
        for v in enumerate_vertices(self.scenario)? {
            max = max.max(vertex_value(&self.h, self.scenario, &v));
        }
        Ok(max - self.c)
    }
}

/// Outcome of the classicality test.
#[derive(Clone, Debug)]
pub enum Classicality {
    /// Inside the local polytope; `weights[j]` is a convex decomposition over
    /// vertices in rank order.
    Classical { weights: Vec<f64> },
    /// Outside; the functional separates the behavior from every vertex.
    NonClassical { functional: BellFunctional },
}

/// Exact membership test for the local polytope. Feasibility is decided by
/// linear programming over vertex weights; infeasibility yields a separating
/// Bell functional recovered from the solver's dual certificate.
pub fn is_classical(p: &BehaviorVector) -> Result<Classicality, PolytopeError> {
    let scenario = p.scenario;
    let dim = scenario.behavior_len();
    let vertices: Vec<DeterministicVertex> =
        enumerate_vertices(scenario)?.collect();

    let mut lp = LinearProgram::new(Sense::Minimize);
    let weights: Vec<usize> = (0..vertices.len())
        .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
        .collect();
    // One equality row per behavior entry: Σ_j v_j[k] · w_j = p[k]. Each
    // vertex touches exactly m_a·m_b entries, so build rows by scatter.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for (j, v) in vertices.iter().enumerate() {
        for x in 0..scenario.m_a {
            for y in 0..scenario.m_b {
                rows[scenario.index(x, y, v.a[x], v.b[y])].push((weights[j], 1.0));
            }
        }
    }
    for (k, row) in rows.iter().enumerate() {
        lp.add_constraint(row, Cmp::Eq, p.entries[k]);
    }
    let norm_row: Vec<(usize, f64)> = weights.iter().map(|&w| (w, 1.0)).collect();
    lp.add_constraint(&norm_row, Cmp::Eq, 1.0);

    let solution = lp.solve(&SolverOptions::default())?;
    match solution.status {
        SolveStatus::Optimal => {
            let weights = solution.x.iter().map(|&w| w.max(0.0)).collect();
            Ok(Classicality::Classical { weights })
        }
        SolveStatus::PrimalInfeasible => {
            let farkas = solution
                .farkas
                .ok_or(PolytopeError::MissingCertificate)?;
            let mut h: Vec<f64> = farkas[..dim].iter().map(|&f| -f).collect();
            let finish = |h: &[f64]| -> (f64, f64) {
                let mut c = f64::NEG_INFINITY;
                for v in &vertices {
                    c = c.max(vertex_value(h, scenario, v));
                }
                let value: f64 = h.iter().zip(&p.entries).map(|(a, b)| a * b).sum();
                (c, value - c)
            };
            let (mut c, mut violation) = finish(&h);
            if violation <= 0.0 {
                // The certificate's sign convention separates in the other
                // orientation; flip to the `h·v ≤ c < h·P` form.
                for e in h.iter_mut() {
                    *e = -*e;
                }
                let flipped = finish(&h);
                c = flipped.0;
                violation = flipped.1;
            }
            let scale = h.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
            if violation <= 0.0 || scale == 0.0 {
                return Err(PolytopeError::CertificateInvalid);
            }
            for e in h.iter_mut() {
                *e /= scale;
            }
            Ok(Classicality::NonClassical {
                functional: BellFunctional {
                    scenario,
                    h,
                    c: c / scale,
                    violation: violation / scale,
                },
            })
        }
        SolveStatus::DualInfeasible => Err(PolytopeError::CertificateInvalid),
    }
}

/// Bell functional maximizing the violation `h·P − c` over coefficients
/// `h ∈ [−1,1]` subject to `h·v ≤ c` for every deterministic vertex. Errors
/// with [`PolytopeError::InfeasibleClassical`] when the optimum is zero,
/// i.e. the behavior is inside (or on the boundary of) the local polytope.
pub fn optimal_hyperplane(p: &BehaviorVector) -> Result<BellFunctional, PolytopeError> {
    let scenario = p.scenario;
    let dim = scenario.behavior_len();
    let vertices: Vec<DeterministicVertex> =
        enumerate_vertices(scenario)?.collect();

    let mut lp = LinearProgram::new(Sense::Maximize);
    let h_vars: Vec<usize> = (0..dim)
        .map(|k| lp.add_var(p.entries[k], -1.0, 1.0))
        .collect();
    let c_var = lp.add_var(-1.0, f64::NEG_INFINITY, f64::INFINITY);
    for v in &vertices {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(scenario.m_a * scenario.m_b + 1);
        for x in 0..scenario.m_a {
            for y in 0..scenario.m_b {
                row.push((h_vars[scenario.index(x, y, v.a[x], v.b[y])], 1.0));
            }
        }
        // Repeated (a,b) cells across inputs never collide: the behavior
        // index is unique per (x,y), so coefficients are all distinct vars.
        row.push((c_var, -1.0));
        lp.add_constraint(&row, Cmp::Le, 0.0);
    }

    let solution = lp.solve(&SolverOptions::default())?;
    if solution.status != SolveStatus::Optimal {
        return Err(PolytopeError::CertificateInvalid);
    }
    if solution.objective <= CLASSICAL_SLACK {
        return Err(PolytopeError::InfeasibleClassical);
    }
    let h: Vec<f64> = solution.x[..dim]
        .iter()
        .map(|&v| v.clamp(-1.0, 1.0))
        .collect();
    let mut c = f64::NEG_INFINITY;
    for v in &vertices {
        c = c.max(vertex_value(&h, scenario, v));
    }
    let value: f64 = h.iter().zip(&p.entries).map(|(a, b)| a * b).sum();
    Ok(BellFunctional {
        scenario,
        h,
        c,
        violation: value - c,
    })
}

/// Renders a functional as a small self-describing text table: header
/// comments carrying the scenario, bound, and violation, then the `h`
/// coefficients in a grid with rows `(x, a)` and columns `(y, b)`, vertical
/// rules between `y` blocks and dashed rules between `x` blocks.
pub fn render_tabular(f: &BellFunctional) -> String {
    let s = f.scenario;
    let cell = |x: usize, y: usize, a: usize, b: usize| format!("{}", f.h[s.index(x, y, a, b)]);
    let ncols = s.m_b * s.d;
    let mut widths = vec![0usize; ncols];
    for x in 0..s.m_a {
        for a in 0..s.d {
            for y in 0..s.m_b {
                for b in 0..s.d {
                    widths[y * s.d + b] = widths[y * s.d + b].max(cell(x, y, a, b).len());
                }
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "# scenario: m_a={} m_b={} d={}\n",
        s.m_a, s.m_b, s.d
    ));
    out.push_str(&format!("# bound: {}\n", f.c));
    out.push_str(&format!("# violation: {}\n", f.violation));
    let rule: String = (0..s.m_b)
        .map(|y| {
            (0..s.d)
                .map(|b| "-".repeat(widths[y * s.d + b]))
                .collect::<Vec<_>>()
                .join("-")
        })
        .collect::<Vec<_>>()
        .join("-+-");
    for x in 0..s.m_a {
        if x > 0 {
            out.push_str(&rule);
            out.push('\n');
        }
        for a in 0..s.d {
            let line: String = (0..s.m_b)
                .map(|y| {
                    (0..s.d)
                        .map(|b| format!("{:>w$}", cell(x, y, a, b), w = widths[y * s.d + b]))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect::<Vec<_>>()
                .join(" | ");
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Parses the output of [`render_tabular`] back into a functional.
pub fn parse_tabular(text: &str) -> Result<BellFunctional, PolytopeError> {
    let mut scenario: Option<Scenario> = None;
    let mut bound: Option<f64> = None;
    let mut violation: Option<f64> = None;
    let mut data_rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(spec) = rest.strip_prefix("scenario:") {
                let mut m_a = None;
                let mut m_b = None;
                let mut d = None;
                for tok in spec.split_whitespace() {
                    let (key, val) = tok
                        .split_once('=')
                        .ok_or_else(|| PolytopeError::Parse(format!("bad token '{tok}'")))?;
                    let val: usize = val
                        .parse()
                        .map_err(|e| PolytopeError::Parse(format!("bad value '{val}': {e}")))?;
                    match key {
                        "m_a" => m_a = Some(val),
                        "m_b" => m_b = Some(val),
                        "d" => d = Some(val),
                        _ => return Err(PolytopeError::Parse(format!("unknown key '{key}'"))),
                    }
                }
                scenario = Some(Scenario::new(
                    m_a.ok_or_else(|| PolytopeError::Parse("missing m_a".into()))?,
                    m_b.ok_or_else(|| PolytopeError::Parse("missing m_b".into()))?,
                    d.ok_or_else(|| PolytopeError::Parse("missing d".into()))?,
                ));
            } else if let Some(v) = rest.strip_prefix("bound:") {
                bound = Some(v.trim().parse().map_err(|e| {
                    PolytopeError::Parse(format!("bad bound '{}': {e}", v.trim()))
                })?);
            } else if let Some(v) = rest.strip_prefix("violation:") {
                violation = Some(v.trim().parse().map_err(|e| {
                    PolytopeError::Parse(format!("bad violation '{}': {e}", v.trim()))
                })?);
            } else {
                return Err(PolytopeError::Parse(format!("unknown header '{rest}'")));
            }
            continue;
        }
        if trimmed.chars().all(|ch| matches!(ch, '-' | '+' | ' ')) {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(|ch: char| ch == '|' || ch.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse()
                    .map_err(|e| PolytopeError::Parse(format!("bad number '{t}': {e}")))
            })
            .collect::<Result<_, _>>()?;
        data_rows.push(row);
    }
    let scenario = scenario.ok_or_else(|| PolytopeError::Parse("missing scenario header".into()))?;
    let c = bound.ok_or_else(|| PolytopeError::Parse("missing bound header".into()))?;
    let violation =
        violation.ok_or_else(|| PolytopeError::Parse("missing violation header".into()))?;
    if data_rows.len() != scenario.m_a * scenario.d {
        return Err(PolytopeError::Parse(format!(
            "expected {} data rows, found {}",
            scenario.m_a * scenario.d,
            data_rows.len()
        )));
    }
    let mut h = vec![0.0; scenario.behavior_len()];
    for (r, row) in data_rows.iter().enumerate() {
        if row.len() != scenario.m_b * scenario.d {
            return Err(PolytopeError::Parse(format!(
                "row {r} has {} values, expected {}",
                row.len(),
                scenario.m_b * scenario.d
            )));
        }
        let x = r / scenario.d;
        let a = r % scenario.d;
        for (col, &value) in row.iter().enumerate() {
            let y = col / scenario.d;
            let b = col % scenario.d;
            h[scenario.index(x, y, a, b)] = value;
        }
    }
    Ok(BellFunctional {
        scenario,
        h,
        c,
        violation,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    heap_permute(&mut items, n, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Centered vertex signature of a functional, normalized to unit sup-norm.
/// Centering removes the freedom of shifting `h` by per-input normalization
/// combinations; positive rescaling removes the overall scale, so two
/// functionals describe the same polytope face iff their signatures agree up
/// to a vertex permutation induced by a scenario symmetry.
fn centered_signature(
    f: &BellFunctional,
    vertices: &[DeterministicVertex],
) -> Vec<f64> {
    let mut sig: Vec<f64> = vertices
        .iter()
        .map(|v| vertex_value(&f.h, f.scenario, v))
        .collect();
    let mean = sig.iter().sum::<f64>() / sig.len() as f64;
    for s in sig.iter_mut() {
        *s -= mean;
    }
    let scale = sig.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if scale > 0.0 {
        for s in sig.iter_mut() {
            *s /= scale;
        }
    }
    sig
}

/// Tests whether two Bell functionals are the same inequality up to scenario
/// symmetries: per-setting outcome relabelings, per-party setting
/// relabelings, party exchange (square scenarios only), positive rescaling,
/// and shifts by normalization identities. Exhaustive over the symmetry
/// group, so intended for small scenarios.
pub fn equivalent_modulo_symmetries(
    f: &BellFunctional,
    g: &BellFunctional,
    tol: f64,
) -> Result<bool, PolytopeError> {
    if f.scenario != g.scenario {
        return Ok(false);
    }
    let s = f.scenario;
    let (m_a, m_b, d) = (s.m_a, s.m_b, s.d);
    let outcome_perms = permutations(d);
    let fact = |n: usize| -> u128 { (1..=n as u128).product() };
    let swap_factor = if m_a == m_b { 2u128 } else { 1 };
    let group_size = fact(d)
        .pow((m_a + m_b) as u32)
        .saturating_mul(fact(m_a))
        .saturating_mul(fact(m_b))
        .saturating_mul(swap_factor);
    if group_size > GROUP_CAP {
        return Err(PolytopeError::GroupTooLarge {
            size: group_size,
            cap: GROUP_CAP,
        });
    }

    let vertices: Vec<DeterministicVertex> = enumerate_vertices(s)?.collect();
    let sig_f = centered_signature(f, &vertices);
    let sig_g = centered_signature(g, &vertices);
    if sig_f.iter().all(|&v| v.abs() <= tol) && sig_g.iter().all(|&v| v.abs() <= tol) {
        return Ok(true);
    }

    let setting_perms_a = permutations(m_a);
    let setting_perms_b = permutations(m_b);
    let n_outcome_combos = outcome_perms.len().pow((m_a + m_b) as u32);

    let mut digits = vec![0usize; m_a + m_b];
    for swap in [false, true] {
        if swap && m_a != m_b {
            continue;
        }
        for rho_a in &setting_perms_a {
            for rho_b in &setting_perms_b {
                digits.iter_mut().for_each(|d| *d = 0);
                for _combo in 0..n_outcome_combos {
                    let omega =
                        |slot: usize| -> &Vec<usize> { &outcome_perms[digits[slot]] };
                    let matched = vertices.iter().enumerate().all(|(j, v)| {
                        let mut rank = 0usize;
                        for (x, &rx) in rho_a.iter().enumerate() {
                            let src = if swap { v.b[rx] } else { v.a[rx] };
                            rank = rank * d + omega(x)[src];
                        }
                        for (y, &ry) in rho_b.iter().enumerate() {
                            let src = if swap { v.a[ry] } else { v.b[ry] };
                            rank = rank * d + omega(m_a + y)[src];
                        }
                        (sig_f[rank] - sig_g[j]).abs() <= tol
                    });
                    if matched {
                        return Ok(true);
                    }
                    // Advance the mixed-radix outcome-permutation counter.
                    for slot in (0..m_a + m_b).rev() {
                        digits[slot] += 1;
                        if digits[slot] < outcome_perms.len() {
                            break;
                        }
                        digits[slot] = 0;
                    }
                }
            }
        }
    }
    Ok(false)
}
