//! Exact complex linear algebra for one- and two-qubit operators.
//!
//! Matrices are dense and row-major. Dimensions never exceed 4, so every
//! routine favours transparency over speed; the Hermitian eigensolver is a
//! cyclic complex Jacobi iteration written out in full so that certificate
//! checks built on top of it can be audited line by line.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Basis, BasisBit};

pub type C64 = Complex64;

/// Numerical tolerances used across the crate.
pub mod tol {
    /// Entrywise Hermiticity deviation.
    pub const HERMITIAN: f64 = 1e-12;
    /// Deviation of a state's trace from one.
    pub const TRACE: f64 = 1e-12;
    /// Most negative eigenvalue still accepted as positive semidefinite.
    pub const PSD: f64 = 1e-10;
    /// Entrywise deviation of a POVM sum from the identity.
    pub const COMPLETENESS: f64 = 1e-10;
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Dense square complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from rows. Panics when the rows are ragged.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must form a square");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_complex(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Matrix) -> Self {
        let n = self.dim * other.dim;
        let mut out = Self::zeros(n);
        for ar in 0..self.dim {
            for ac in 0..self.dim {
                let a = self[(ar, ac)];
                for br in 0..other.dim {
                    for bc in 0..other.dim {
                        out[(ar * other.dim + br, ac * other.dim + bc)] = a * other[(br, bc)];
                    }
                }
            }
        }
        out
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise `|M - M†|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Real part of `Tr[self · other]`.
    pub fn trace_product(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut acc = ZERO;
        for r in 0..self.dim {
            for k in 0..self.dim {
                acc += self[(r, k)] * other[(k, r)];
            }
        }
        acc.re
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn pauli_x() -> Matrix {
    Matrix::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]])
}

pub fn pauli_y() -> Matrix {
    Matrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]])
}

pub fn pauli_z() -> Matrix {
    Matrix::diag(&[1.0, -1.0])
}

/// Partial transpose on the second qubit of a 4×4 operator: every 2×2 block
/// of the block structure is transposed in place.
pub fn partial_transpose(m: &Matrix) -> Result<Matrix> {
    if m.dim() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: m.dim(),
        });
    }
    let mut out = Matrix::zeros(4);
    for a_row in 0..2 {
        for a_col in 0..2 {
            for b_row in 0..2 {
                for b_col in 0..2 {
                    out[(2 * a_row + b_row, 2 * a_col + b_col)] =
                        m[(2 * a_row + b_col, 2 * a_col + b_row)];
                }
            }
        }
    }
    Ok(out)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending; eigenvectors
/// are the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> Matrix {
        let lambda = Matrix::diag(&self.values);
        &(&self.vectors * &lambda) * &self.vectors.dagger()
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
///
/// Each pivot `(p, q)` is annihilated by `U = D R`, where `D` removes the
/// phase of `a_pq` and `R` is a real Givens rotation with
/// `tan 2θ = 2|a_pq| / (a_pp - a_qq)`.
pub fn hermitian_eigen(m: &Matrix) -> Result<EigenDecomposition> {
    let dev = m.hermitian_deviation();
    let scale = m.max_abs().max(1.0);
    if dev > tol::HERMITIAN * scale {
        return Err(Error::NotHermitian(dev));
    }
    let n = m.dim();
    // symmetrize so that rounding noise in the input cannot accumulate
    let mut a = (m + &m.dagger()).scale(0.5);
    let mut v = Matrix::identity(n);

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let threshold = 1e-15 * scale;
    let mut sweeps = 0;
    while off_norm(&a) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * mag).atan2(app - aqq);
                let (s, c) = theta.sin_cos();

                // U on the (p, q) plane: [[c, -s e^{iφ}], [s e^{-iφ}, c]]
                let mut u = Matrix::identity(n);
                u[(p, p)] = C64::new(c, 0.0);
                u[(p, q)] = C64::new(-s, 0.0) * phase;
                u[(q, p)] = C64::new(s, 0.0) * phase.conj();
                u[(q, q)] = C64::new(c, 0.0);
                a = &(&u.dagger() * &a) * &u;
                v = &v * &u;
                // clear the annihilated pair exactly
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = Matrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// PSD test: `(min eigenvalue >= -tol, min eigenvalue)`.
pub fn is_psd(m: &Matrix, tol: f64) -> Result<(bool, f64)> {
    let eig = hermitian_eigen(m)?;
    let min = eig.min_value();
    Ok((min >= -tol, min))
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &Matrix) -> Result<f64> {
    let eig = hermitian_eigen(m)?;
    Ok(eig.values.iter().map(|v| v.abs()).sum())
}

/// A validated quantum state (Hermitian, unit trace, PSD).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix(Matrix);

impl DensityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        let dev = m.hermitian_deviation();
        if dev > tol::HERMITIAN {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol::TRACE || tr.im.abs() > tol::TRACE {
            return Err(crate::error::invalid(
                "density matrix",
                format!("trace {tr} differs from 1"),
            ));
        }
        let (psd, min) = is_psd(&m, tol::PSD)?;
        if !psd {
            return Err(crate::error::invalid(
                "density matrix",
                format!("minimum eigenvalue {min:e} is negative"),
            ));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(self.0.kron(&other.0))
    }

    /// Purity `Tr[ρ²]`.
    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0)
    }
}

/// Outcome label attached to a POVM element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PovmLabel {
    Zero,
    One,
    Inconclusive,
}

/// One element of a POVM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOperator {
    pub label: PovmLabel,
    pub matrix: Matrix,
}

impl MeasurementOperator {
    pub fn new(label: PovmLabel, matrix: Matrix) -> Result<Self> {
        let dev = matrix.hermitian_deviation();
        if dev > tol::HERMITIAN {
            return Err(Error::NotHermitian(dev));
        }
        let (psd, min) = is_psd(&matrix, tol::PSD)?;
        if !psd {
            return Err(crate::error::invalid(
                "measurement operator",
                format!("minimum eigenvalue {min:e} is negative"),
            ));
        }
        Ok(Self { label, matrix })
    }
}

/// Largest entrywise deviation of `Σ Π` from the identity.
pub fn completeness_residual(ops: &[MeasurementOperator]) -> Result<f64> {
    let dim = ops
        .first()
        .map(|o| o.matrix.dim())
        .ok_or_else(|| crate::error::invalid("povm", "empty operator set"))?;
    let mut sum = Matrix::zeros(dim);
    for op in ops {
        if op.matrix.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: op.matrix.dim(),
            });
        }
        sum = &sum + &op.matrix;
    }
    Ok((&sum - &Matrix::identity(dim)).max_abs())
}

/// BB84 projector `ω_{basis,bit}`: `(I ± X)/2` for basis 0, `(I ± Y)/2` for basis 1.
pub fn bb84_state(basis: Basis, bit: bool) -> DensityMatrix {
    let pauli = match basis {
        Basis::X => pauli_x(),
        Basis::Y => pauli_y(),
    };
    let sign = if bit { -1.0 } else { 1.0 };
    let m = (&Matrix::identity(2) + &pauli.scale(sign)).scale(0.5);
    DensityMatrix(m)
}

/// `(ρ_0, ρ_1)`: uniform mixtures of `ω_{b,x} ⊗ ω_{b,y}` over the four
/// `(b, x, y)` triples with `x ⊕ y = 0` and `x ⊕ y = 1` respectively.
pub fn parity_mixtures() -> (DensityMatrix, DensityMatrix) {
    let mut rho = [Matrix::zeros(4), Matrix::zeros(4)];
    for basis in [Basis::X, Basis::Y] {
        for x in [false, true] {
            for y in [false, true] {
                let term = bb84_state(basis, x)
                    .matrix()
                    .kron(bb84_state(basis, y).matrix())
                    .scale(0.25);
                let slot = usize::from(x ^ y);
                rho[slot] = &rho[slot] + &term;
            }
        }
    }
    let [r0, r1] = rho;
    (DensityMatrix(r0), DensityMatrix(r1))
}

/// Linear-optics Bell measurement: `|Ψ+⟩⟨Ψ+|` → 0, `|Ψ-⟩⟨Ψ-|` → 1, and
/// the remaining two-dimensional subspace → inconclusive.
pub fn linear_optics_bsm_povm() -> Vec<MeasurementOperator> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let proj = |sign: f64| {
        // |Ψ±⟩ = (|01⟩ ± |10⟩)/√2
        let v = [0.0, h, sign * h, 0.0];
        let mut m = Matrix::zeros(4);
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = C64::new(v[r] * v[c], 0.0);
            }
        }
        m
    };
    let plus = proj(1.0);
    let minus = proj(-1.0);
    let rest = &(&Matrix::identity(4) - &plus) - &minus;
    vec![
        MeasurementOperator {
            label: PovmLabel::Zero,
            matrix: plus,
        },
        MeasurementOperator {
            label: PovmLabel::One,
            matrix: minus,
        },
        MeasurementOperator {
            label: PovmLabel::Inconclusive,
            matrix: rest,
        },
    ]
}

/// A point on the Bloch sphere, used as a local projective measurement axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochAxis {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochAxis {
    pub const X: BlochAxis = BlochAxis {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: BlochAxis = BlochAxis {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };

    /// Axis from polar angle `theta` (from +z) and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            x: theta.sin() * phi.cos(),
            y: theta.sin() * phi.sin(),
            z: theta.cos(),
        }
    }

    /// Projector onto the +1 eigenstate of `n·σ`.
    pub fn plus_projector(&self) -> Matrix {
        let sigma = &(&pauli_x().scale(self.x) + &pauli_y().scale(self.y)) + &pauli_z().scale(self.z);
        (&Matrix::identity(2) + &sigma).scale(0.5)
    }
}

/// A qubit prepared by a verifier. Its classical labels are private: holders
/// can only interact with it through Born-rule measurements.
#[derive(Clone, Debug)]
pub struct PreparedQubit {
    label: BasisBit,
}

impl PreparedQubit {
    pub fn prepare(label: BasisBit) -> Self {
        Self { label }
    }

    pub fn state(&self) -> DensityMatrix {
        bb84_state(self.label.basis, self.label.bit)
    }

    /// Probability that a projective measurement along `axis` yields +1
    /// (reported as bit 0).
    pub fn plus_probability(&self, axis: BlochAxis) -> f64 {
        self.state()
            .matrix()
            .trace_product(&axis.plus_projector())
            .clamp(0.0, 1.0)
    }

    /// Local projective measurement; returns `false` for the +1 outcome.
    pub fn measure<R: Rng + ?Sized>(&self, axis: BlochAxis, rng: &mut R) -> bool {
        rng.gen::<f64>() >= self.plus_probability(axis)
    }

    /// Outcome distribution of a joint two-qubit POVM on `first ⊗ second`.
    pub fn joint_distribution(
        first: &PreparedQubit,
        second: &PreparedQubit,
        povm: &[MeasurementOperator],
    ) -> Vec<(PovmLabel, f64)> {
        let rho = first.state().tensor(&second.state());
        povm.iter()
            .map(|op| (op.label, rho.matrix().trace_product(&op.matrix).max(0.0)))
            .collect()
    }

    /// Samples a joint two-qubit POVM on `first ⊗ second`.
    pub fn measure_joint<R: Rng + ?Sized>(
        first: &PreparedQubit,
        second: &PreparedQubit,
        povm: &[MeasurementOperator],
        rng: &mut R,
    ) -> PovmLabel {
        let dist = Self::joint_distribution(first, second, povm);
        let mut u = rng.gen::<f64>();
        for (label, p) in &dist {
            if u < *p {
                return *label;
            }
            u -= p;
        }
        dist.last().map(|(l, _)| *l).unwrap_or(PovmLabel::Inconclusive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        let d = (a - b).max_abs();
        assert!(d <= tol, "matrices differ by {d:e}\n{a:?}\n{b:?}");
    }

    #[test]
    fn bb84_table_entries() {
        let w00 = bb84_state(Basis::X, false);
        assert_close(
            w00.matrix(),
            &Matrix::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]),
            1e-15,
        );
        let w11 = bb84_state(Basis::Y, true);
        let expected = Matrix::from_rows(&[vec![c(0.5, 0.0), c(0.0, 0.5)], vec![c(0.0, -0.5), c(0.5, 0.0)]]);
        assert_close(w11.matrix(), &expected, 1e-15);
    }

    #[test]
    fn bb84_states_are_pure_projectors_with_expected_overlaps() {
        let labels: Vec<BasisBit> = [Basis::X, Basis::Y]
            .into_iter()
            .flat_map(|b| [false, true].map(|bit| BasisBit::new(b, bit)))
            .collect();
        for a in &labels {
            let wa = bb84_state(a.basis, a.bit);
            assert!((wa.matrix().trace().re - 1.0).abs() < 1e-15);
            assert_close(&(wa.matrix() * wa.matrix()), wa.matrix(), 1e-15);
            for b in &labels {
                let wb = bb84_state(b.basis, b.bit);
                let overlap = wa.matrix().trace_product(wb.matrix());
                let expected = if a == b {
                    1.0
                } else if a.basis == b.basis {
                    0.0
                } else {
                    0.5
                };
                assert!((overlap - expected).abs() < 1e-15, "{a:?} {b:?} {overlap}");
            }
        }
    }

    #[test]
    fn parity_mixture_difference_matches_pauli_expansion() {
        let (r0, r1) = parity_mixtures();
        let diff = r0.matrix() - r1.matrix();
        let oracle = (&pauli_x().kron(&pauli_x()) + &pauli_y().kron(&pauli_y())).scale(0.25);
        assert_close(&diff, &oracle, 1e-15);
        for r in [&r0, &r1] {
            assert!((r.matrix().trace().re - 1.0).abs() < 1e-15);
            assert!(is_psd(r.matrix(), 0.0).unwrap().1 >= -1e-15);
        }
    }

    #[test]
    fn psd_examples() {
        assert_eq!(is_psd(&Matrix::identity(4), tol::PSD).unwrap(), (true, 1.0));
        let (flag, min) = is_psd(&Matrix::diag(&[1.0, -0.5]), tol::PSD).unwrap();
        assert!(!flag);
        assert!((min + 0.5).abs() < 1e-15);
        let (r0, r1) = parity_mixtures();
        let (flag, min) = is_psd(&(r0.matrix() - r1.matrix()), tol::PSD).unwrap();
        assert!(!flag);
        assert!((min + 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_inputs_are_rejected() {
        let m = Matrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(is_psd(&m, tol::PSD), Err(Error::NotHermitian(_))));
        assert!(matches!(trace_norm(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn trace_norm_examples() {
        let (r0, r1) = parity_mixtures();
        let norm = trace_norm(&(r0.matrix() - r1.matrix())).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(trace_norm(&Matrix::zeros(4)).unwrap(), 0.0);
        assert!((trace_norm(r0.matrix()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_rejects_wrong_dimension() {
        assert!(matches!(
            partial_transpose(&Matrix::identity(2)),
            Err(Error::Dimension { expected: 4, found: 2 })
        ));
        assert_eq!(partial_transpose(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn partial_transpose_acts_on_second_factor() {
        // T_B(A ⊗ B) = A ⊗ Bᵀ
        let a = pauli_y();
        let b = Matrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 1.0)], vec![c(-3.0, 0.5), c(0.0, 4.0)]]);
        let mut bt = Matrix::zeros(2);
        for r in 0..2 {
            for col in 0..2 {
                bt[(col, r)] = b[(r, col)];
            }
        }
        assert_close(&partial_transpose(&a.kron(&b)).unwrap(), &a.kron(&bt), 1e-15);
    }

    #[test]
    fn ppt_primal_element_spectrum_at_full_efficiency() {
        // Π̃_0 at η = 1
        let pi0 = Matrix::from_real_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .scale(0.5);
        let eig = hermitian_eigen(&partial_transpose(&pi0).unwrap()).unwrap();
        let expected = [0.0, 0.5, 0.5, 1.0];
        for (v, e) in eig.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-14, "{:?}", eig.values);
        }
    }

    #[test]
    fn linear_optics_povm_is_complete_and_positive() {
        let povm = linear_optics_bsm_povm();
        assert!(completeness_residual(&povm).unwrap() < tol::COMPLETENESS);
        for op in &povm {
            MeasurementOperator::new(op.label, op.matrix.clone()).unwrap();
        }
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(Matrix::identity(2)).is_err());
        assert!(DensityMatrix::new(Matrix::diag(&[1.5, -0.5])).is_err());
        let rho = DensityMatrix::new(Matrix::identity(2).scale(0.5)).unwrap();
        assert!((rho.purity() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn local_measurement_probabilities() {
        let q = PreparedQubit::prepare(BasisBit::new(Basis::X, true));
        assert!(q.plus_probability(BlochAxis::X) < 1e-15);
        assert!((q.plus_probability(BlochAxis::Y) - 0.5).abs() < 1e-15);
    }

    fn hermitian_strategy() -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-1.0f64..1.0, 32).prop_map(|v| {
            let mut m = Matrix::zeros(4);
            for r in 0..4 {
                for col in 0..4 {
                    m[(r, col)] = c(v[2 * (4 * r + col)], v[2 * (4 * r + col) + 1]);
                }
            }
            (&m + &m.dagger()).scale(0.5)
        })
    }

    proptest! {
        #[test]
        fn partial_transpose_is_involutive_and_preserves_trace(m in hermitian_strategy()) {
            let once = partial_transpose(&m).unwrap();
            prop_assert!((once.trace() - m.trace()).norm() < 1e-14);
            prop_assert!(once.is_hermitian(1e-14));
            prop_assert_eq!(partial_transpose(&once).unwrap(), m);
        }

        #[test]
        fn eigen_decomposition_round_trips(m in hermitian_strategy()) {
            let eig = hermitian_eigen(&m).unwrap();
            prop_assert!((&eig.reconstruct() - &m).max_abs() < 1e-10);
            let vv = &eig.vectors.dagger() * &eig.vectors;
            prop_assert!((&vv - &Matrix::identity(4)).max_abs() < 1e-10);
            prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
