//! Finite-dimensional quantum states, projective measurements, and Born-rule
//! behaviors for bipartite Bell experiments.
//!
//! Conventions: a *setting* is one projective measurement with `d` outcomes,
//! given as `d` orthogonal projectors summing to the identity. Parties hold
//! one measurement family each; Bob's family may carry one extra setting at
//! the end, reserved for key generation and excluded from parameter
//! estimation. Behaviors are laid out row-major over `(x, y, a, b)` with all
//! indices zero-based in code.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::{self, BehaviorKind, BehaviorVector};

/// Dense complex matrix used throughout the quantum layer.
pub type CMat = DMatrix<Complex64>;

const HERM_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_FLOOR: f64 = -1e-10;
const PROJ_TOL: f64 = 1e-10;
const BLOCK_SUM_TOL: f64 = 1e-12;
const PROB_FLOOR: f64 = -1e-14;
const NO_SIGNALLING_TOL: f64 = 1e-10;

/// Bell scenario shape: `m_a`/`m_b` parameter-estimation settings per party,
/// `d` outcomes per setting. Behavior vectors over this scenario have
/// `m_a · m_b · d²` entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub m_a: usize,
    pub m_b: usize,
    pub d: usize,
}

impl Scenario {
    pub fn new(m_a: usize, m_b: usize, d: usize) -> Self {
        Scenario { m_a, m_b, d }
    }

    /// Length of a behavior vector over this scenario.
    pub fn behavior_len(&self) -> usize {
        self.m_a * self.m_b * self.d * self.d
    }

    /// Flat index of `P(a, b | x, y)`, all arguments zero-based.
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        ((x * self.m_b + y) * self.d + a) * self.d + b
    }
}

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace differs from 1 by {0:.3e}")]
    TraceNotOne(f64),
    #[error("density matrix eigenvalue {0:.3e} below the positivity floor")]
    NotPositive(f64),
    #[error("projector violates idempotency by {0:.3e}")]
    NotIdempotent(f64),
    #[error("projectors within one setting overlap by {0:.3e}")]
    NotOrthogonal(f64),
    #[error("projectors of one setting sum to identity only up to {0:.3e}")]
    Incomplete(f64),
    #[error("observable eigenvalue {0:.4} too far from ±1 to snap to an involution")]
    NotInvolution(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("noise weight {0} outside [0, 1]")]
    NoiseOutOfRange(f64),
    #[error("setting index {index} out of range for {count} settings")]
    SettingOutOfRange { index: usize, count: usize },
    #[error("Born probability {0:.3e} below the negativity floor")]
    NegativeProbability(f64),
    #[error("probabilities for inputs ({x},{y}) sum to {sum:.15} instead of 1")]
    BlockSum { x: usize, y: usize, sum: f64 },
    #[error("invalid setup description: {0}")]
    BadSetup(String),
}

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn herm_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Bipartite density matrix with validated Hermiticity, unit trace, and
/// positive semidefiniteness.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    dim: usize,
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self, QuantumError> {
        let dim = mat.nrows();
        if mat.ncols() != dim || dim == 0 {
            return Err(QuantumError::DimensionMismatch(format!(
                "density matrix must be square and nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let herm = herm_defect(&mat);
        if herm > HERM_TOL {
            return Err(QuantumError::NotHermitian(herm));
        }
        let trace_defect = (mat.trace().re - 1.0).abs().max(mat.trace().im.abs());
        if trace_defect > TRACE_TOL {
            return Err(QuantumError::TraceNotOne(trace_defect));
        }
        let min_eig = mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &l| acc.min(l));
        if min_eig < PSD_FLOOR {
            return Err(QuantumError::NotPositive(min_eig));
        }
        Ok(DensityMatrix { dim, mat })
    }

    /// Pure state |ψ⟩⟨ψ| from an (automatically normalized) state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self, QuantumError> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(QuantumError::BadSetup("zero state vector".into()));
        }
        let dim = psi.len();
        let mat = CMat::from_fn(dim, dim, |i, j| psi[i] * psi[j].conj() / (norm * norm));
        DensityMatrix::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }
}

/// One party's measurement collection: per setting, `d` orthogonal projectors
/// summing to the identity on that party's space.
#[derive(Clone, Debug)]
pub struct MeasurementFamily {
    dim: usize,
    settings: Vec<Vec<CMat>>,
}

impl MeasurementFamily {
    pub fn new(settings: Vec<Vec<CMat>>) -> Result<Self, QuantumError> {
        let first = settings
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| QuantumError::BadSetup("empty measurement family".into()))?;
        let dim = first.nrows();
        let outcomes = settings[0].len();
        for setting in &settings {
            if setting.len() != outcomes {
                return Err(QuantumError::DimensionMismatch(format!(
                    "settings disagree on outcome count ({} vs {})",
                    setting.len(),
                    outcomes
                )));
            }
            let mut sum = CMat::zeros(dim, dim);
            for proj in setting {
                if proj.nrows() != dim || proj.ncols() != dim {
                    return Err(QuantumError::DimensionMismatch(format!(
                        "projector is {}x{}, expected {dim}x{dim}",
                        proj.nrows(),
                        proj.ncols()
                    )));
                }
                let herm = herm_defect(proj);
                if herm > PROJ_TOL {
                    return Err(QuantumError::NotHermitian(herm));
                }
                let idem = max_abs(&(proj * proj - proj));
                if idem > PROJ_TOL {
                    return Err(QuantumError::NotIdempotent(idem));
                }
                sum += proj;
            }
            for i in 0..setting.len() {
                for j in (i + 1)..setting.len() {
                    let overlap = max_abs(&(&setting[i] * &setting[j]));
                    if overlap > PROJ_TOL {
                        return Err(QuantumError::NotOrthogonal(overlap));
                    }
                }
            }
            let completeness = max_abs(&(sum - identity(dim)));
            if completeness > PROJ_TOL {
                return Err(QuantumError::Incomplete(completeness));
            }
        }
        Ok(MeasurementFamily { dim, settings })
    }

    /// Builds a two-outcome family from ±1-valued qubit observables. Each
    /// observable is re-projected onto the nearest Hermitian involution
    /// (eigenvalues snapped to ±1), which absorbs rounding in tabulated
    /// matrices; outcome 0 is the +1 eigenspace.
    pub fn from_qubit_observables(observables: &[CMat]) -> Result<Self, QuantumError> {
        let settings = observables
            .iter()
            .map(|obs| {
                let snapped = snap_involution(obs)?;
                let id = identity(2);
                Ok(vec![
                    (&id + &snapped).scale(0.5),
                    (&id - &snapped).scale(0.5),
                ])
            })
            .collect::<Result<Vec<_>, QuantumError>>()?;
        MeasurementFamily::new(settings)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn outcomes(&self) -> usize {
        self.settings[0].len()
    }

    pub fn projector(&self, setting: usize, outcome: usize) -> &CMat {
        &self.settings[setting][outcome]
    }
}

/// Replaces a Hermitian matrix with eigenvalues near ±1 by the exact
/// involution sharing its eigenvectors.
fn snap_involution(obs: &CMat) -> Result<CMat, QuantumError> {
    let herm = herm_defect(obs);
    if herm > 1e-9 {
        return Err(QuantumError::NotHermitian(herm));
    }
    let eig = obs.clone().symmetric_eigen();
    let mut snapped = CMat::zeros(obs.nrows(), obs.ncols());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if (lambda.abs() - 1.0).abs() > 0.05 {
            return Err(QuantumError::NotInvolution(lambda));
        }
        let v = eig.eigenvectors.column(k);
        let sign = cx(lambda.signum(), 0.0);
        snapped += (v * v.adjoint()).map(|z| z * sign);
    }
    Ok(snapped)
}

/// Complete description of one experiment: shared state plus both parties'
/// measurement families. Bob may hold one extra setting (the last index),
/// used only for key generation.
#[derive(Clone, Debug)]
pub struct QuantumSetup {
    pub state: DensityMatrix,
    pub alice: MeasurementFamily,
    pub bob: MeasurementFamily,
}

impl QuantumSetup {
    pub fn new(
        state: DensityMatrix,
        alice: MeasurementFamily,
        bob: MeasurementFamily,
    ) -> Result<Self, QuantumError> {
        if alice.dim() * bob.dim() != state.dim() {
            return Err(QuantumError::DimensionMismatch(format!(
                "party dimensions {}x{} do not factor state dimension {}",
                alice.dim(),
                bob.dim(),
                state.dim()
            )));
        }
        if alice.outcomes() != bob.outcomes() {
            return Err(QuantumError::DimensionMismatch(format!(
                "outcome counts differ: {} vs {}",
                alice.outcomes(),
                bob.outcomes()
            )));
        }
        let m = alice.num_settings();
        if bob.num_settings() != m && bob.num_settings() != m + 1 {
            return Err(QuantumError::BadSetup(format!(
                "Bob must hold {m} or {} settings, found {}",
                m + 1,
                bob.num_settings()
            )));
        }
        Ok(QuantumSetup { state, alice, bob })
    }

    /// Number of parameter-estimation settings per party.
    pub fn m(&self) -> usize {
        self.alice.num_settings()
    }

    pub fn outcomes(&self) -> usize {
        self.alice.outcomes()
    }

    /// True when Bob carries the extra key-generation setting.
    pub fn has_key_setting(&self) -> bool {
        self.bob.num_settings() == self.alice.num_settings() + 1
    }

    /// Scenario of the parameter-estimation settings only.
    pub fn pe_scenario(&self) -> Scenario {
        Scenario::new(self.m(), self.m(), self.outcomes())
    }
}

/// Born-rule behavior `P(a,b|x,y) = Tr[ρ (Π_{a|x} ⊗ Π_{b|y})]` over the given
/// setting subsets (zero-based indices into each family, in the order given).
pub fn born_probabilities(
    setup: &QuantumSetup,
    alice_settings: &[usize],
    bob_settings: &[usize],
) -> Result<BehaviorVector, QuantumError> {
    for &x in alice_settings {
        if x >= setup.alice.num_settings() {
            return Err(QuantumError::SettingOutOfRange {
                index: x,
                count: setup.alice.num_settings(),
            });
        }
    }
    for &y in bob_settings {
        if y >= setup.bob.num_settings() {
            return Err(QuantumError::SettingOutOfRange {
                index: y,
                count: setup.bob.num_settings(),
            });
        }
    }
    let d = setup.outcomes();
    let scenario = Scenario::new(alice_settings.len(), bob_settings.len(), d);
    let rho = setup.state.matrix();
    let mut entries = vec![0.0; scenario.behavior_len()];
    for (xi, &x) in alice_settings.iter().enumerate() {
        for (yi, &y) in bob_settings.iter().enumerate() {
            let mut block_sum = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let joint = setup
                        .alice
                        .projector(x, a)
                        .kronecker(setup.bob.projector(y, b));
                    let p = (rho * joint).trace().re;
                    if p < PROB_FLOOR {
                        return Err(QuantumError::NegativeProbability(p));
                    }
                    let p = p.max(0.0);
                    entries[scenario.index(xi, yi, a, b)] = p;
                    block_sum += p;
                }
            }
            if (block_sum - 1.0).abs() > BLOCK_SUM_TOL {
                return Err(QuantumError::BlockSum {
                    x: xi,
                    y: yi,
                    sum: block_sum,
                });
            }
        }
    }
    let behavior = BehaviorVector::new(scenario, entries, BehaviorKind::Exact)
        .map_err(|e| QuantumError::BadSetup(format!("behavior rejected: {e}")))?;
    debug_assert!(
        polytope::no_signalling_defect(&behavior) <= NO_SIGNALLING_TOL,
        "Born behavior violates no-signalling"
    );
    Ok(behavior)
}

/// Behavior over the parameter-estimation settings (both parties use settings
/// `0..m`).
pub fn pe_behavior(setup: &QuantumSetup) -> Result<BehaviorVector, QuantumError> {
    let m = setup.m();
    let idx: Vec<usize> = (0..m).collect();
    born_probabilities(setup, &idx, &idx)
}

/// Probability that the key-generation outcomes disagree,
/// `Q = P(a ≠ b | x = 0, y = key)`.
pub fn key_qber(setup: &QuantumSetup) -> Result<f64, QuantumError> {
    if !setup.has_key_setting() {
        return Err(QuantumError::BadSetup(
            "setup has no dedicated key-generation setting".into(),
        ));
    }
    let key = setup.bob.num_settings() - 1;
    let behavior = born_probabilities(setup, &[0], &[key])?;
    let d = setup.outcomes();
    let mut q = 0.0;
    for a in 0..d {
        for b in 0..d {
            if a != b {
                q += behavior.entries[behavior.scenario.index(0, 0, a, b)];
            }
        }
    }
    Ok(q)
}

/// Two-qubit Bell state |Φ⟩ = (|00⟩+|11⟩)/√2 mixed with white noise:
/// ρ = (1−p)|Φ⟩⟨Φ| + p·I/4.
pub fn noisy_bell_state(p: f64) -> Result<DensityMatrix, QuantumError> {
    noisy_max_entangled_qudit(2, p)
}

/// Maximally entangled two-qudit state Σ|jj⟩/√d mixed with white noise:
/// ρ = (1−p)|Ψ⟩⟨Ψ| + p·I/d².
pub fn noisy_max_entangled_qudit(d: usize, p: f64) -> Result<DensityMatrix, QuantumError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QuantumError::NoiseOutOfRange(p));
    }
    if d < 2 {
        return Err(QuantumError::BadSetup("qudit dimension must be ≥ 2".into()));
    }
    let dim = d * d;
    let mut mat = CMat::zeros(dim, dim);
    for j in 0..d {
        for k in 0..d {
            mat[(j * d + j, k * d + k)] = cx((1.0 - p) / d as f64, 0.0);
        }
    }
    for i in 0..dim {
        mat[(i, i)] += cx(p / dim as f64, 0.0);
    }
    DensityMatrix::new(mat)
}

/// Partially entangled two-qutrit state (|00⟩ + g|11⟩ + |22⟩)/√(2+g²) with
/// g = 0.7923, the weight maximizing the qutrit Bell violation.
pub fn nonmax_qutrit_state() -> Result<DensityMatrix, QuantumError> {
    let g = 0.7923;
    let mut psi = vec![cx(0.0, 0.0); 9];
    psi[0] = cx(1.0, 0.0);
    psi[4] = cx(g, 0.0);
    psi[8] = cx(1.0, 0.0);
    DensityMatrix::pure(&psi)
}

/// Projector pair of the qubit observable sin(θ)σx + cos(θ)σz; outcome 0 is
/// the +1 eigenspace.
pub fn bloch_observable(theta: f64) -> Vec<CMat> {
    let (s, c) = theta.sin_cos();
    let plus = CMat::from_row_slice(
        2,
        2,
        &[
            cx((1.0 + c) / 2.0, 0.0),
            cx(s / 2.0, 0.0),
            cx(s / 2.0, 0.0),
            cx((1.0 - c) / 2.0, 0.0),
        ],
    );
    let minus = identity(2) - &plus;
    vec![plus, minus]
}

/// Fourier-basis qudit measurements: two Alice settings and three Bob
/// settings (the third is the key-generation basis).
///
/// Alice measures in the eigenbasis of `V(φ_x) = F · diag(e^{iφ_x(j)})` with
/// `F_{jk} = e^{2πi jk/d}/√d`, using phases `φ_1(j) = 0` and `φ_2(j) = πj/d`;
/// Bob uses `V(ϕ_y) = F* · diag(e^{iϕ_y(j)})` with `ϕ_1(j) = πj/(2d)`,
/// `ϕ_2(j) = −πj/(2d)`, `ϕ_3(j) = 0`. Projectors are the rank-1 rows
/// `V†|a⟩⟨a|V`. On the maximally entangled state, the pair (x=1, y=3)
/// produces perfectly correlated outcomes.
pub fn cglmp_measurements(
    d: usize,
) -> Result<(MeasurementFamily, MeasurementFamily), QuantumError> {
    if d < 2 {
        return Err(QuantumError::BadSetup("qudit dimension must be ≥ 2".into()));
    }
    let fourier = CMat::from_fn(d, d, |j, k| {
        Complex64::from_polar(
            1.0 / (d as f64).sqrt(),
            2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64,
        )
    });
    let basis_from = |unitary: &CMat| -> Vec<CMat> {
        (0..d)
            .map(|a| {
                let row = unitary.row(a);
                CMat::from_fn(d, d, |i, j| row[i].conj() * row[j])
            })
            .collect()
    };
    let phase_diag = |phases: &dyn Fn(usize) -> f64| -> CMat {
        CMat::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, phases(i))
            } else {
                cx(0.0, 0.0)
            }
        })
    };
    let pi = std::f64::consts::PI;
    let alice_phases: [&dyn Fn(usize) -> f64; 2] =
        [&|_| 0.0, &|j| pi * j as f64 / d as f64];
    let bob_phases: [&dyn Fn(usize) -> f64; 3] = [
        &|j| pi * j as f64 / (2.0 * d as f64),
        &|j| -pi * j as f64 / (2.0 * d as f64),
        &|_| 0.0,
    ];
    let alice = MeasurementFamily::new(
        alice_phases
            .iter()
            .map(|ph| basis_from(&(&fourier * phase_diag(ph))))
            .collect(),
    )?;
    let conj_fourier = fourier.map(|z| z.conj());
    let bob = MeasurementFamily::new(
        bob_phases
            .iter()
            .map(|ph| basis_from(&(&conj_fourier * phase_diag(ph))))
            .collect(),
    )?;
    Ok((alice, bob))
}

/// One standard normal via Box–Muller (two uniform draws per call).
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-distributed `d×d` unitary: QR of a complex Gaussian matrix with the
/// R-diagonal phases absorbed into Q.
pub fn haar_random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(d, d, |_, _| {
        cx(
            standard_normal(rng) / 2f64.sqrt(),
            standard_normal(rng) / 2f64.sqrt(),
        )
    });
    let qr = z.qr();
    let q = qr.q();
    let r = qr.r();
    let phases: Vec<Complex64> = (0..d)
        .map(|i| {
            let rii = r[(i, i)];
            if rii.norm() == 0.0 {
                cx(1.0, 0.0)
            } else {
                rii / rii.norm()
            }
        })
        .collect();
    CMat::from_fn(d, d, |i, j| q[(i, j)] * phases[j])
}

/// Haar-uniform qubit projective measurement: computational projectors
/// conjugated by `U(φ,ψ,χ)` with ψ, χ uniform on [0,2π) and cos(2φ) uniform
/// on [−1,1], so the measurement axis is uniform on the Bloch sphere.
pub fn haar_random_qubit_observable<R: Rng + ?Sized>(rng: &mut R) -> Vec<CMat> {
    let u: f64 = rng.random();
    let phi = 0.5 * (1.0 - 2.0 * u).acos();
    let psi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let chi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let (sin_phi, cos_phi) = phi.sin_cos();
    let unitary = CMat::from_row_slice(
        2,
        2,
        &[
            Complex64::from_polar(cos_phi, psi),
            Complex64::from_polar(sin_phi, chi),
            -Complex64::from_polar(sin_phi, -chi),
            Complex64::from_polar(cos_phi, -psi),
        ],
    );
    (0..2)
        .map(|a| {
            let row = unitary.row(a);
            CMat::from_fn(2, 2, |i, j| row[i].conj() * row[j])
        })
        .collect()
}

fn sigma_z() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(-1.0, 0.0)],
    )
}

/// Qubit setup with the standard maximal-violation settings: Alice measures
/// σz and σx, Bob measures (σz±σx)/√2 for parameter estimation and σz for key
/// generation, on a noisy Bell state.
pub fn chsh_setup(p: f64) -> Result<QuantumSetup, QuantumError> {
    let pi = std::f64::consts::PI;
    let alice = MeasurementFamily::new(vec![bloch_observable(0.0), bloch_observable(pi / 2.0)])?;
    let bob = MeasurementFamily::new(vec![
        bloch_observable(pi / 4.0),
        bloch_observable(-pi / 4.0),
        bloch_observable(0.0),
    ])?;
    QuantumSetup::new(noisy_bell_state(p)?, alice, bob)
}

/// Qubit chain setup with `m` equatorial settings per party at angles
/// `(k−1)π/m` (Alice) and `(2k−1)π/(2m)` (Bob), plus Bob's σz key setting.
pub fn chain_setup(m: usize, p: f64) -> Result<QuantumSetup, QuantumError> {
    chain_setup_tilted(m, p, 0.0)
}

/// Chain setup with the middle angles tilted by ±θ (the first Alice setting
/// and the middle Bob setting stay fixed so key correlations are unaffected).
/// For m = 3 the tilt pattern is: Alice π/3−θ and 2π/3+θ, Bob π/6+θ and
/// 5π/6−θ.
pub fn chain_setup_tilted(m: usize, p: f64, theta: f64) -> Result<QuantumSetup, QuantumError> {
    if m < 2 {
        return Err(QuantumError::BadSetup("chain needs at least 2 settings".into()));
    }
    let pi = std::f64::consts::PI;
    let mut alice_angles: Vec<f64> = (0..m).map(|k| k as f64 * pi / m as f64).collect();
    let mut bob_angles: Vec<f64> = (0..m)
        .map(|k| (2 * k + 1) as f64 * pi / (2.0 * m as f64))
        .collect();
    if theta != 0.0 {
        if m != 3 {
            return Err(QuantumError::BadSetup(
                "tilted chain is defined for m = 3 only".into(),
            ));
        }
        alice_angles[1] -= theta;
        alice_angles[2] += theta;
        bob_angles[0] += theta;
        bob_angles[2] -= theta;
    }
    let alice =
        MeasurementFamily::new(alice_angles.iter().map(|&t| bloch_observable(t)).collect())?;
    let mut bob_settings: Vec<Vec<CMat>> =
        bob_angles.iter().map(|&t| bloch_observable(t)).collect();
    bob_settings.push(bloch_observable(0.0));
    let bob = MeasurementFamily::new(bob_settings)?;
    QuantumSetup::new(noisy_bell_state(p)?, alice, bob)
}

/// Fourier-basis qudit setup on the noisy maximally entangled state; Bob's
/// third setting generates the key.
pub fn cglmp_setup(d: usize, p: f64) -> Result<QuantumSetup, QuantumError> {
    let (alice, bob) = cglmp_measurements(d)?;
    QuantumSetup::new(noisy_max_entangled_qudit(d, p)?, alice, bob)
}

/// Fourier-basis qutrit measurements on the partially entangled qutrit state.
pub fn nonmax_qutrit_setup() -> Result<QuantumSetup, QuantumError> {
    let (alice, bob) = cglmp_measurements(3)?;
    QuantumSetup::new(nonmax_qutrit_state()?, alice, bob)
}

/// Fully mixed two-qubit state with the standard qubit settings: every
/// behavior entry is 1/4, which is classical — useful as a negative control.
pub fn classical_uniform_setup() -> Result<QuantumSetup, QuantumError> {
    chsh_setup(1.0)
}

fn qubit_observable(diag: f64, off_re: f64, off_im: f64) -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[
            cx(diag, 0.0),
            cx(off_re, off_im),
            cx(off_re, -off_im),
            cx(-diag, 0.0),
        ],
    )
}

/// Hard-coded three-setting qubit example whose optimized Bell functional is
/// violated more strongly than any embedded two-setting CHSH test. Entries are
/// stored to four decimals and re-projected onto exact involutions; Bob's
/// appended key setting is σz, matching Alice's first setting.
pub fn preset_c1(p: f64) -> Result<QuantumSetup, QuantumError> {
    let alice = MeasurementFamily::from_qubit_observables(&[
        sigma_z(),
        qubit_observable(-0.1817, 0.1307, 0.9746),
        qubit_observable(-0.7746, 0.6186, -0.1315),
    ])?;
    let bob = MeasurementFamily::from_qubit_observables(&[
        qubit_observable(0.7064, -0.6632, 0.2473),
        qubit_observable(-0.6882, -0.2128, -0.6936),
        qubit_observable(0.4046, -0.1960, 0.8932),
        sigma_z(),
    ])?;
    QuantumSetup::new(noisy_bell_state(p)?, alice, bob)
}

/// Hard-coded two-setting qubit example that violates a Bell inequality yet
/// yields no key through this pipeline.
pub fn preset_c2(p: f64) -> Result<QuantumSetup, QuantumError> {
    let alice = MeasurementFamily::from_qubit_observables(&[
        sigma_z(),
        qubit_observable(0.7019, 0.5167, -0.4903),
    ])?;
    let bob = MeasurementFamily::from_qubit_observables(&[
        qubit_observable(-0.4091, -0.5937, 0.6930),
        qubit_observable(-0.6133, -0.2514, 0.7488),
        sigma_z(),
    ])?;
    QuantumSetup::new(noisy_bell_state(p)?, alice, bob)
}

/// The two-setting zero-key example augmented with a third setting per party,
/// restoring a positive key rate.
pub fn preset_c2c3(p: f64) -> Result<QuantumSetup, QuantumError> {
    let alice = MeasurementFamily::from_qubit_observables(&[
        sigma_z(),
        qubit_observable(0.7019, 0.5167, -0.4903),
        qubit_observable(-0.1457, -0.9777, 0.1513),
    ])?;
    let bob = MeasurementFamily::from_qubit_observables(&[
        qubit_observable(-0.4091, -0.5937, 0.6930),
        qubit_observable(-0.6133, -0.2514, 0.7488),
        qubit_observable(-0.9020, -0.3795, -0.2056),
        sigma_z(),
    ])?;
    QuantumSetup::new(noisy_bell_state(p)?, alice, bob)
}

/// Random-settings setup for Monte-Carlo scans: key measurements are pinned
/// to the computational basis on both sides; every other setting is an
/// independent Haar-random basis. `m` parameter-estimation settings per
/// party, `d` outcomes, white-noise weight `p`.
pub fn random_settings_setup<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    p: f64,
    rng: &mut R,
) -> Result<QuantumSetup, QuantumError> {
    if m < 2 {
        return Err(QuantumError::BadSetup("need at least 2 settings".into()));
    }
    let computational: Vec<CMat> = (0..d)
        .map(|a| {
            CMat::from_fn(d, d, |i, j| {
                if i == a && j == a {
                    cx(1.0, 0.0)
                } else {
                    cx(0.0, 0.0)
                }
            })
        })
        .collect();
    let random_basis = |rng: &mut R| -> Vec<CMat> {
        if d == 2 {
            haar_random_qubit_observable(rng)
        } else {
            let u = haar_random_unitary(d, rng);
            (0..d)
                .map(|a| {
                    let row = u.row(a);
                    CMat::from_fn(d, d, |i, j| row[i].conj() * row[j])
                })
                .collect()
        }
    };
    let mut alice_settings = vec![computational.clone()];
    for _ in 1..m {
        alice_settings.push(random_basis(rng));
    }
    let mut bob_settings = Vec::with_capacity(m + 1);
    for _ in 0..m {
        bob_settings.push(random_basis(rng));
    }
    bob_settings.push(computational);
    QuantumSetup::new(
        noisy_max_entangled_qudit(d, p)?,
        MeasurementFamily::new(alice_settings)?,
        MeasurementFamily::new(bob_settings)?,
    )
}

/// JSON-facing description of a state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    /// Noisy Bell state with weight `p` of white noise.
    Bell { p: f64 },
    /// Noisy maximally entangled qudit pair.
    Qudit { d: usize, p: f64 },
    /// The partially entangled qutrit state.
    NonmaxQutrit,
    /// Explicit density matrix, complex entries as `[re, im]`.
    Explicit { matrix: Vec<Vec<[f64; 2]>> },
}

/// JSON-facing description of one setting: either a single ±1 qubit
/// observable matrix, or an explicit list of `d` projectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingSpec {
    Observable(Vec<Vec<[f64; 2]>>),
    Projectors { projectors: Vec<Vec<Vec<[f64; 2]>>> },
}

/// JSON-facing description of a full experimental setup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetupSpec {
    pub state: StateSpec,
    pub alice: Vec<SettingSpec>,
    pub bob: Vec<SettingSpec>,
}

fn parse_cmat(rows: &[Vec<[f64; 2]>]) -> Result<CMat, QuantumError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(QuantumError::BadSetup(
            "matrix rows must be nonempty and square".into(),
        ));
    }
    Ok(CMat::from_fn(n, n, |i, j| cx(rows[i][j][0], rows[i][j][1])))
}

impl SetupSpec {
    /// Validates and instantiates the described setup.
    pub fn build(&self) -> Result<QuantumSetup, QuantumError> {
        let state = match &self.state {
            StateSpec::Bell { p } => noisy_bell_state(*p)?,
            StateSpec::Qudit { d, p } => noisy_max_entangled_qudit(*d, *p)?,
            StateSpec::NonmaxQutrit => nonmax_qutrit_state()?,
            StateSpec::Explicit { matrix } => DensityMatrix::new(parse_cmat(matrix)?)?,
        };
        let build_family = |specs: &[SettingSpec]| -> Result<MeasurementFamily, QuantumError> {
            let all_observables = specs
                .iter()
                .all(|s| matches!(s, SettingSpec::Observable(_)));
            if all_observables {
                let mats = specs
                    .iter()
                    .map(|s| match s {
                        SettingSpec::Observable(m) => parse_cmat(m),
                        SettingSpec::Projectors { .. } => unreachable!(),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                MeasurementFamily::from_qubit_observables(&mats)
            } else {
                let settings = specs
                    .iter()
                    .map(|s| match s {
                        SettingSpec::Observable(m) => {
                            let snapped = snap_involution(&parse_cmat(m)?)?;
                            let id = identity(2);
                            Ok(vec![
                                (&id + &snapped).scale(0.5),
                                (&id - &snapped).scale(0.5),
                            ])
                        }
                        SettingSpec::Projectors { projectors } => projectors
                            .iter()
                            .map(|p| parse_cmat(p))
                            .collect::<Result<Vec<_>, _>>(),
                    })
                    .collect::<Result<Vec<_>, QuantumError>>()?;
                MeasurementFamily::new(settings)
            }
        };
        QuantumSetup::new(state, build_family(&self.alice)?, build_family(&self.bob)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bloch_projectors_are_valid() {
        for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_2, -1.2] {
            MeasurementFamily::new(vec![bloch_observable(theta)]).unwrap();
        }
    }

    #[test]
    fn bell_state_is_valid_density_matrix() {
        for p in [0.0, 0.02, 0.5, 1.0] {
            noisy_bell_state(p).unwrap();
        }
        assert!(noisy_bell_state(-0.1).is_err());
        assert!(noisy_bell_state(1.5).is_err());
    }

    #[test]
    fn involution_snap_rejects_far_matrices() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[cx(0.5, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(-0.5, 0.0)],
        );
        assert!(snap_involution(&m).is_err());
    }

    #[test]
    fn setup_requires_matching_dimensions() {
        let state = noisy_bell_state(0.0).unwrap();
        let qubit = MeasurementFamily::new(vec![bloch_observable(0.0)]).unwrap();
        let (qutrit_alice, _) = cglmp_measurements(3).unwrap();
        assert!(QuantumSetup::new(state, qubit, qutrit_alice).is_err());
    }
}
