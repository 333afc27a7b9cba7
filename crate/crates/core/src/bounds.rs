//! Guessing-probability bounds and soundness errors.
//!
//! Holds the Helstrom value for the parity-discrimination problem, a
//! numerical verifier for the explicit primal/dual PPT certificates, the
//! LOCC attacks that saturate the PPT bound, and the closed-form soundness
//! errors of the qubit and decoy protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    self, hermitian_eigen, parity_mixtures, partial_transpose, tol, BlochAxis, DensityMatrix,
    Matrix, PreparedQubit,
};
use crate::types::{Basis, BasisBit, Outcome};

/// `1/2 + ‖ρ0 − ρ1‖₁ / 4`.
pub fn helstrom_guess(rho0: &DensityMatrix, rho1: &DensityMatrix) -> Result<f64> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::Dimension {
            expected: rho0.dim(),
            found: rho1.dim(),
        });
    }
    let norm = quantum::trace_norm(&(rho0.matrix() - rho1.matrix()))?;
    Ok(0.5 + norm / 4.0)
}

/// A named constraint of the primal or dual program and how far it is from
/// being satisfied (zero when satisfied exactly).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub name: String,
    pub residual: f64,
    pub satisfied: bool,
}

/// Outcome of checking the explicit PPT certificates at one conclusive rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub eta: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub primal_feasible: bool,
    pub dual_feasible: bool,
    /// Every constraint that was checked.
    pub constraints: Vec<ConstraintResidual>,
    /// The subset of `constraints` that failed.
    pub violations: Vec<ConstraintResidual>,
}

impl CertificateReport {
    /// Implied bound on the conditional guessing probability, `dual / η`.
    pub fn guess_bound(&self) -> f64 {
        self.dual_value / self.eta
    }
}

/// Feasible primal point `(Π̃_0, Π̃_1, Π̃_∅)` for conclusive rate `eta`.
pub fn ppt_primal_solution(eta: f64) -> [Matrix; 3] {
    let element = |sign: f64| {
        Matrix::from_real_rows(&[
            vec![eta, 0.0, 0.0, 0.0],
            vec![0.0, eta, sign * eta, 0.0],
            vec![0.0, sign * eta, eta, 0.0],
            vec![0.0, 0.0, 0.0, eta],
        ])
        .scale(0.5)
    };
    [
        element(1.0),
        element(-1.0),
        Matrix::identity(4).scale(1.0 - eta),
    ]
}

/// Feasible dual point: `Ỹ = (3/16) I`, `γ̃ = 3/4`, and `Q_0, Q_1, Q_2`.
pub struct DualSolution {
    pub y: Matrix,
    pub gamma: f64,
    pub q: [Matrix; 3],
}

pub fn ppt_dual_solution() -> DualSolution {
    let corner = |sign: f64| {
        Matrix::from_real_rows(&[
            vec![1.0, 0.0, 0.0, sign],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![sign, 0.0, 0.0, 1.0],
        ])
        .scale(1.0 / 16.0)
    };
    DualSolution {
        y: Matrix::identity(4).scale(3.0 / 16.0),
        gamma: 0.75,
        q: [corner(-1.0), corner(1.0), Matrix::zeros(4)],
    }
}

fn psd_residual(name: String, m: &Matrix) -> Result<ConstraintResidual> {
    let min = hermitian_eigen(m)?.min_value();
    let residual = (-min).max(0.0);
    Ok(ConstraintResidual {
        name,
        residual,
        satisfied: residual <= tol::PSD,
    })
}

fn equality_residual(name: String, residual: f64, tolerance: f64) -> ConstraintResidual {
    ConstraintResidual {
        name,
        residual,
        satisfied: residual <= tolerance,
    }
}

/// Recomputes every primal and dual constraint for the explicit certificates
/// and evaluates both objectives.
pub fn verify_ppt_certificates(eta: f64) -> Result<CertificateReport> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid("eta", format!("{eta} is outside (0, 1]")));
    }
    let (rho0, rho1) = parity_mixtures();
    let rho = [rho0.matrix(), rho1.matrix()];
    let primal = ppt_primal_solution(eta);
    let dual = ppt_dual_solution();
    let labels = ["0", "1", "inconclusive"];

    let mut primal_checks = Vec::new();
    let sum = &(&primal[0] + &primal[1]) + &primal[2];
    primal_checks.push(equality_residual(
        "primal: Π0 + Π1 + Π∅ = I".into(),
        (&sum - &Matrix::identity(4)).max_abs(),
        tol::COMPLETENESS,
    ));
    for (i, r) in rho.iter().enumerate() {
        primal_checks.push(equality_residual(
            format!("primal: Tr[ρ{i} Π∅] = 1 - η"),
            (r.trace_product(&primal[2]) - (1.0 - eta)).abs(),
            tol::COMPLETENESS,
        ));
    }
    for (k, pi) in primal.iter().enumerate() {
        primal_checks.push(psd_residual(format!("primal: Π{} ⪰ 0", labels[k]), pi)?);
        primal_checks.push(psd_residual(
            format!("primal: T_B(Π{}) ⪰ 0", labels[k]),
            &partial_transpose(pi)?,
        )?);
    }

    let mut dual_checks = Vec::new();
    for (i, (q, r)) in dual.q.iter().zip(rho).enumerate() {
        // 2(Y − T_B(Q_i)) − ρ_i ⪰ 0
        let m = &(&dual.y - &partial_transpose(q)?).scale(2.0) - r;
        dual_checks.push(psd_residual(format!("dual: 2(Y - T_B(Q{i})) - ρ{i} ⪰ 0"), &m)?);
    }
    // 4(Y − T_B(Q_2)) − γ I ⪰ 0
    let m = &(&dual.y - &partial_transpose(&dual.q[2])?).scale(4.0)
        - &Matrix::identity(4).scale(dual.gamma);
    dual_checks.push(psd_residual("dual: 4(Y - T_B(Q2)) - γI ⪰ 0".into(), &m)?);
    for (i, q) in dual.q.iter().enumerate() {
        dual_checks.push(psd_residual(format!("dual: Q{i} ⪰ 0"), q)?);
    }
    dual_checks.push(equality_residual(
        "dual: Y Hermitian".into(),
        dual.y.hermitian_deviation(),
        tol::HERMITIAN,
    ));

    let primal_value = 0.5 * (rho[0].trace_product(&primal[0]) + rho[1].trace_product(&primal[1]));
    let dual_value = dual.y.trace().re - (1.0 - eta) * dual.gamma;

    let primal_feasible = primal_checks.iter().all(|c| c.satisfied);
    let dual_feasible = dual_checks.iter().all(|c| c.satisfied);
    let constraints: Vec<ConstraintResidual> =
        primal_checks.into_iter().chain(dual_checks).collect();
    let violations = constraints.iter().filter(|c| !c.satisfied).cloned().collect();

    Ok(CertificateReport {
        eta,
        primal_value,
        dual_value,
        duality_gap: dual_value - primal_value,
        primal_feasible,
        dual_feasible,
        constraints,
        violations,
    })
}

/// Which local measurement the colluding adversaries perform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttackKind {
    /// Both measure in the diagonal (X) basis.
    XBasis,
    /// Both measure in the Y basis.
    YBasis,
    /// Shared randomness picks Y with probability `prob_y`, else X.
    MixedXY { prob_y: f64 },
}

/// One-round LOCC attack by two adversaries: each measures its own qubit
/// locally, the outcomes are exchanged once, and both report the XOR.
///
/// The responder never inspects the verifiers' labels. It only touches each
/// qubit through [`PreparedQubit::measure`], so the strategy is LOCC by
/// construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackStrategy {
    pub name: String,
    pub kind: AttackKind,
    /// Probability that the shared coin `λ` tells the adversaries to answer.
    pub eta: f64,
}

/// The pair of outcomes delivered to V1 and V2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub to_v1: Outcome,
    pub to_v2: Outcome,
}

impl Response {
    pub fn both(outcome: Outcome) -> Self {
        Self {
            to_v1: outcome,
            to_v2: outcome,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(invalid("eta", format!("{eta} is outside [0, 1]")))
    }
}

pub fn locc_xbasis_strategy(eta: f64) -> Result<AttackStrategy> {
    check_eta(eta)?;
    Ok(AttackStrategy {
        name: "x-basis".into(),
        kind: AttackKind::XBasis,
        eta,
    })
}

pub fn locc_ybasis_strategy(eta: f64) -> Result<AttackStrategy> {
    check_eta(eta)?;
    Ok(AttackStrategy {
        name: "y-basis".into(),
        kind: AttackKind::YBasis,
        eta,
    })
}

pub fn locc_mixed_strategy(eta: f64, prob_y: f64) -> Result<AttackStrategy> {
    check_eta(eta)?;
    if !(0.0..=1.0).contains(&prob_y) {
        return Err(invalid("prob_y", format!("{prob_y} is outside [0, 1]")));
    }
    Ok(AttackStrategy {
        name: "mixed-xy".into(),
        kind: AttackKind::MixedXY { prob_y },
        eta,
    })
}

impl AttackStrategy {
    /// Runs one round. `rng` supplies the shared randomness (`λ`, basis
    /// choice) and the local measurement noise.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        near_v1: &PreparedQubit,
        near_v2: &PreparedQubit,
        rng: &mut R,
    ) -> Response {
        let lambda = rng.gen::<f64>() < self.eta;
        if !lambda {
            return Response::both(Outcome::Inconclusive);
        }
        let axis = match self.kind {
            AttackKind::XBasis => BlochAxis::X,
            AttackKind::YBasis => BlochAxis::Y,
            AttackKind::MixedXY { prob_y } => {
                if rng.gen::<f64>() < prob_y {
                    BlochAxis::Y
                } else {
                    BlochAxis::X
                }
            }
        };
        // E1 and E2 measure locally, then swap their bits in one exchange.
        let bit_e1 = near_v1.measure(axis, rng);
        let bit_e2 = near_v2.measure(axis, rng);
        Response::both(Outcome::from_parity(bit_e1 ^ bit_e2))
    }

    /// Exact probability that a conclusive answer equals `x ⊕ y` for the
    /// given verifier labels.
    pub fn conditional_success(&self, basis: Basis, x: bool, y: bool) -> f64 {
        let success_for = |axis: BlochAxis| {
            let q1 = PreparedQubit::prepare(BasisBit::new(basis, x));
            let q2 = PreparedQubit::prepare(BasisBit::new(basis, y));
            let p1 = q1.plus_probability(axis);
            let p2 = q2.plus_probability(axis);
            // reported parity is 0 when the two local bits agree
            let p_even = p1 * p2 + (1.0 - p1) * (1.0 - p2);
            if x ^ y {
                1.0 - p_even
            } else {
                p_even
            }
        };
        match self.kind {
            AttackKind::XBasis => success_for(BlochAxis::X),
            AttackKind::YBasis => success_for(BlochAxis::Y),
            AttackKind::MixedXY { prob_y } => {
                prob_y * success_for(BlochAxis::Y) + (1.0 - prob_y) * success_for(BlochAxis::X)
            }
        }
    }

    /// Exact conditional guessing probability averaged over uniform `(b, x, y)`.
    pub fn guessing_probability(&self) -> f64 {
        let mut total = 0.0;
        for basis in [Basis::X, Basis::Y] {
            for x in [false, true] {
                for y in [false, true] {
                    total += self.conditional_success(basis, x, y);
                }
            }
        }
        total / 8.0
    }
}

/// Input to the soundness formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundnessInput {
    pub n_th: u64,
    pub delta_th: f64,
    pub nu: f64,
}

/// `exp(−2 n_th (1/4 − δ_th)²)`.
pub fn soundness_qubit(input: &SoundnessInput) -> Result<f64> {
    if input.n_th == 0 {
        return Err(invalid("n_th", "must be at least 1"));
    }
    if !(input.delta_th >= 0.0 && input.delta_th < 0.25) {
        return Err(invalid(
            "delta_th",
            format!("{} is outside [0, 1/4)", input.delta_th),
        ));
    }
    let gap = 0.25 - input.delta_th;
    Ok((-2.0 * input.n_th as f64 * gap * gap).exp())
}

/// Soundness of the decoy protocol and its two decoy failure terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoySoundness {
    pub eps_decoy: f64,
    pub eps_qubit: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// `1 − (1 − e^{−2ν})^k`, evaluated without cancellation.
pub fn union_failure(nu: f64, estimators: u32) -> f64 {
    let single = (-2.0 * nu).exp();
    -(f64::from(estimators) * (-single).ln_1p()).exp_m1()
}

/// `ε_decoy = ε_qubit + 2 ε1 + ε2` with `ε1 = 1 − (1 − e^{−2ν})^7` and
/// `ε2 = 1 − (1 − e^{−2ν})^4`.
pub fn soundness_decoy(input: &SoundnessInput) -> Result<DecoySoundness> {
    if !(input.nu > 0.0) {
        return Err(invalid("nu", format!("{} must be positive", input.nu)));
    }
    let eps_qubit = soundness_qubit(input)?;
    let eps1 = union_failure(input.nu, 7);
    let eps2 = union_failure(input.nu, 4);
    Ok(DecoySoundness {
        eps_decoy: eps_qubit + 2.0 * eps1 + eps2,
        eps_qubit,
        eps1,
        eps2,
    })
}

/// A product measurement followed by classical post-processing of both
/// local outcomes: the most general one-round deterministic LOCC answer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMeasurement {
    pub axis_v1: BlochAxis,
    pub axis_v2: BlochAxis,
    /// Reported parity for local outcome pairs `(0,0), (0,1), (1,0), (1,1)`.
    pub decision: [bool; 4],
}

impl ProductMeasurement {
    /// Exact conditional guessing probability over uniform `(b, x, y)`.
    pub fn guessing_probability(&self) -> f64 {
        let mut total = 0.0;
        for basis in [Basis::X, Basis::Y] {
            for x in [false, true] {
                for y in [false, true] {
                    let p1 = PreparedQubit::prepare(BasisBit::new(basis, x)).plus_probability(self.axis_v1);
                    let p2 = PreparedQubit::prepare(BasisBit::new(basis, y)).plus_probability(self.axis_v2);
                    let probs = [
                        p1 * p2,
                        p1 * (1.0 - p2),
                        (1.0 - p1) * p2,
                        (1.0 - p1) * (1.0 - p2),
                    ];
                    total += probs
                        .iter()
                        .zip(self.decision)
                        .filter(|(_, d)| *d == (x ^ y))
                        .map(|(p, _)| p)
                        .sum::<f64>();
                }
            }
        }
        total / 8.0
    }
}

/// Best product measurement found by exhaustive search over a grid of local
/// axes (`steps` polar × `2 steps` azimuthal angles per party) and all 16
/// post-processing tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSearchResult {
    pub best: ProductMeasurement,
    pub best_value: f64,
    pub evaluated: usize,
    /// Strategies within 1e-9 of the best value.
    pub near_optimal: usize,
}

pub fn search_product_measurements(steps: usize) -> ProductSearchResult {
    let steps = steps.max(2);
    let mut axes = Vec::new();
    for i in 0..=steps {
        let theta = std::f64::consts::PI * i as f64 / steps as f64;
        for j in 0..(2 * steps) {
            let phi = std::f64::consts::PI * j as f64 / steps as f64;
            axes.push(BlochAxis::from_angles(theta, phi));
        }
    }
    let tables: Vec<[bool; 4]> = (0u8..16)
        .map(|t| [t & 1 != 0, t & 2 != 0, t & 4 != 0, t & 8 != 0])
        .collect();

    let mut values = Vec::with_capacity(axes.len() * axes.len() * tables.len());
    let mut best = ProductMeasurement {
        axis_v1: BlochAxis::X,
        axis_v2: BlochAxis::X,
        decision: [false, true, true, false],
    };
    let mut best_value = f64::NEG_INFINITY;
    for a1 in &axes {
        for a2 in &axes {
            for decision in &tables {
                let candidate = ProductMeasurement {
                    axis_v1: *a1,
                    axis_v2: *a2,
                    decision: *decision,
                };
                let value = candidate.guessing_probability();
                values.push(value);
                if value > best_value {
                    best_value = value;
                    best = candidate;
                }
            }
        }
    }
    let near_optimal = values.iter().filter(|v| best_value - **v <= 1e-9).count();
    ProductSearchResult {
        best,
        best_value,
        evaluated: values.len(),
        near_optimal,
    }
}
