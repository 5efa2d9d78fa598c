//! Pauli-operator algebra and dense Gibbs states over a small qubit register.
//!
//! Conventions used everywhere in this crate:
//!
//! * qubit 0 is the leftmost Kronecker factor, i.e. the most significant bit
//!   of a computational-basis index;
//! * a measurement outcome bit `0` corresponds to Pauli eigenvalue `+1` and
//!   spin `+1`, bit `1` to eigenvalue `-1` and spin `-1`.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const IMAG_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    X,
    Y,
    Z,
}

impl PauliOp {
    pub const ALL: [PauliOp; 3] = [PauliOp::X, PauliOp::Y, PauliOp::Z];

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(PauliOp::X),
            'Y' => Some(PauliOp::Y),
            'Z' => Some(PauliOp::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        }
    }

    /// Columns are the `+1` and `-1` eigenvectors, in that order.
    pub fn eigenbasis(self) -> Matrix2<Complex64> {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            PauliOp::Z => Matrix2::new(ONE, ZERO, ZERO, ONE),
            PauliOp::X => Matrix2::new(s, s, s, -s),
            PauliOp::Y => Matrix2::new(s, s, s * I, -s * I),
        }
    }

    /// Action on a computational basis bit: `P|b> = phase * |b ^ flip>`.
    #[inline]
    fn act(self, bit: usize) -> (bool, Complex64) {
        match self {
            PauliOp::X => (true, ONE),
            PauliOp::Y => (true, if bit == 0 { I } else { -I }),
            PauliOp::Z => (false, if bit == 0 { ONE } else { -ONE }),
        }
    }
}

/// The standard 2x2 Pauli matrix.
pub fn pauli_matrix(op: PauliOp) -> Matrix2<Complex64> {
    match op {
        PauliOp::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
        PauliOp::Y => Matrix2::new(ZERO, -I, I, ZERO),
        PauliOp::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
    }
}

/// A weighted product of one or two single-qubit Pauli operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTerm", into = "RawTerm")]
pub struct PauliTerm {
    coefficient: f64,
    factors: Vec<(usize, PauliOp)>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, mut factors: Vec<(usize, PauliOp)>) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(Error::InvalidTerm(format!("coefficient {coefficient} is not finite")));
        }
        if factors.is_empty() || factors.len() > 2 {
            return Err(Error::InvalidTerm(format!(
                "expected 1 or 2 factors, got {}",
                factors.len()
            )));
        }
        factors.sort_by_key(|f| f.0);
        if factors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidTerm("repeated qubit index".into()));
        }
        Ok(Self { coefficient, factors })
    }

    pub fn single(coefficient: f64, qubit: usize, op: PauliOp) -> Result<Self> {
        Self::new(coefficient, vec![(qubit, op)])
    }

    pub fn pair(coefficient: f64, a: (usize, PauliOp), b: (usize, PauliOp)) -> Result<Self> {
        Self::new(coefficient, vec![a, b])
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn set_coefficient(&mut self, value: f64) {
        self.coefficient = value;
    }

    pub fn factors(&self) -> &[(usize, PauliOp)] {
        &self.factors
    }

    pub fn max_qubit(&self) -> usize {
        self.factors.iter().map(|f| f.0).max().unwrap_or(0)
    }

    /// True when every factor is `basis`, so the term is diagonal in the
    /// product eigenbasis of `basis`.
    pub fn is_diagonal_in(&self, basis: PauliOp) -> bool {
        self.factors.iter().all(|&(_, op)| op == basis)
    }

    /// Unit-coefficient action on basis index `y` of an `m`-qubit register.
    #[inline]
    fn act(&self, y: usize, m: usize) -> (usize, Complex64) {
        act_product(&self.factors, y, m)
    }
}

#[inline]
fn act_product(factors: &[(usize, PauliOp)], y: usize, m: usize) -> (usize, Complex64) {
    let mut out = y;
    let mut phase = ONE;
    for &(q, op) in factors {
        let shift = m - 1 - q;
        let (flip, p) = op.act((y >> shift) & 1);
        if flip {
            out ^= 1 << shift;
        }
        phase *= p;
    }
    (out, phase)
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    coefficient: f64,
    qubits: Vec<usize>,
    paulis: String,
}

impl TryFrom<RawTerm> for PauliTerm {
    type Error = Error;

    fn try_from(raw: RawTerm) -> Result<Self> {
        let ops: Vec<PauliOp> = raw
            .paulis
            .chars()
            .map(|c| PauliOp::from_char(c).ok_or_else(|| Error::InvalidTerm(format!("unknown Pauli '{c}'"))))
            .collect::<Result<_>>()?;
        if ops.len() != raw.qubits.len() {
            return Err(Error::InvalidTerm("qubits and paulis differ in length".into()));
        }
        PauliTerm::new(raw.coefficient, raw.qubits.into_iter().zip(ops).collect())
    }
}

impl From<PauliTerm> for RawTerm {
    fn from(t: PauliTerm) -> Self {
        RawTerm {
            coefficient: t.coefficient,
            qubits: t.factors.iter().map(|f| f.0).collect(),
            paulis: t.factors.iter().map(|f| f.1.as_char()).collect(),
        }
    }
}

/// Sparse description of a Hamiltonian as a sum of Pauli terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliHamiltonianSpec {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliHamiltonianSpec {
    pub fn new(num_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        for t in &terms {
            if t.max_qubit() >= num_qubits {
                return Err(Error::QubitOutOfRange { index: t.max_qubit(), num_qubits });
            }
        }
        Ok(Self { num_qubits, terms })
    }

    pub fn empty(num_qubits: usize) -> Self {
        Self { num_qubits, terms: Vec::new() }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn set_coefficients(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.terms.len() {
            return Err(Error::DimensionMismatch { expected: self.terms.len(), got: values.len() });
        }
        for (t, &v) in self.terms.iter_mut().zip(values) {
            t.coefficient = v;
        }
        Ok(())
    }

    /// Spec with qubits relabelled: qubit `q` becomes `perm[q]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| PauliTerm::new(t.coefficient, t.factors.iter().map(|&(q, op)| (perm[q], op)).collect()))
            .collect::<Result<_>>()?;
        Self::new(self.num_qubits, terms)
    }
}

/// Dense Hermitian matrix over a register of `log2(dim)` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Validates shape (square, power-of-two) and Hermiticity within a
    /// relative Frobenius tolerance of 1e-12.
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if !m.nrows().is_power_of_two() {
            return Err(Error::InvalidArgument(format!("dimension {} is not a power of two", m.nrows())));
        }
        let deviation = hermitian_deviation(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self(m))
    }

    pub fn zeros(num_qubits: usize) -> Self {
        let d = 1 << num_qubits;
        Self(DMatrix::zeros(d, d))
    }

    pub fn identity(num_qubits: usize) -> Self {
        let d = 1 << num_qubits;
        Self(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Self(&self.0 + &other.0))
    }

    /// Adds `s * I`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += s;
        }
        Self(m)
    }

    /// Adds `coefficient * term` in place using the sparse Pauli action.
    pub fn add_term(&mut self, coefficient: f64, term: &PauliTerm) -> Result<()> {
        let m = self.num_qubits();
        if term.max_qubit() >= m {
            return Err(Error::QubitOutOfRange { index: term.max_qubit(), num_qubits: m });
        }
        let c = Complex64::new(coefficient, 0.0);
        for y in 0..self.dim() {
            let (row, phase) = term.act(y, m);
            self.0[(row, y)] += c * phase;
        }
        Ok(())
    }
}

fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let norm = m.norm();
    let diff = (m - m.adjoint()).norm();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// `op` on `qubit`, identity on every other qubit of an `m`-qubit register.
pub fn embed_operator(op: PauliOp, qubit: usize, m: usize) -> Result<HermitianMatrix> {
    if qubit >= m {
        return Err(Error::QubitOutOfRange { index: qubit, num_qubits: m });
    }
    let id = DMatrix::<Complex64>::identity(2, 2);
    let p = pauli_matrix(op);
    let p = DMatrix::from_iterator(2, 2, p.iter().copied());
    let mut acc = DMatrix::<Complex64>::identity(1, 1);
    for q in 0..m {
        acc = acc.kronecker(if q == qubit { &p } else { &id });
    }
    Ok(HermitianMatrix(acc))
}

/// Dense matrix of a term with unit coefficient.
pub fn term_matrix(term: &PauliTerm, m: usize) -> Result<HermitianMatrix> {
    let mut h = HermitianMatrix::zeros(m);
    h.add_term(1.0, term)?;
    Ok(h)
}

pub fn assemble_hamiltonian(spec: &PauliHamiltonianSpec) -> HermitianMatrix {
    let mut h = HermitianMatrix::zeros(spec.num_qubits);
    for t in &spec.terms {
        // indices validated at spec construction
        h.add_term(t.coefficient, t).expect("validated term");
    }
    h
}

/// Thermal state `exp(-beta H) / tr exp(-beta H)` with its spectral data.
#[derive(Debug, Clone)]
pub struct GibbsState {
    rho: DMatrix<Complex64>,
    beta: f64,
    log_partition: f64,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<Complex64>,
    weights: Vec<f64>,
}

impl GibbsState {
    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `log tr exp(-beta H)`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `-log_partition / beta`.
    pub fn free_energy(&self) -> f64 {
        -self.log_partition / self.beta
    }

    /// Eigenvalues of the Hamiltonian.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &DMatrix<Complex64> {
        &self.eigvecs
    }

    /// Boltzmann weight of each eigenvector; equals the spectrum of `rho`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// `tr[rho P]` for the unit-coefficient Pauli product of `term`, in O(dim).
    pub fn pauli_expectation(&self, term: &PauliTerm) -> f64 {
        let m = self.num_qubits();
        let mut acc = ZERO;
        for y in 0..self.dim() {
            let (col, phase) = term.act(y, m);
            acc += phase * self.rho[(y, col)];
        }
        acc.re
    }

    /// Mean energy `tr[rho H]` from the spectrum.
    pub fn mean_energy(&self) -> f64 {
        self.eigvals.iter().zip(&self.weights).map(|(e, w)| e * w).sum()
    }

    /// Von Neumann entropy of `rho`.
    pub fn entropy(&self) -> f64 {
        -self.weights.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }
}

pub fn gibbs_state(h: &HermitianMatrix, beta: f64) -> Result<GibbsState> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidBeta(beta));
    }
    let eig = h
        .0
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("no convergence".into()))?;
    let eigvals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if eigvals.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let exponents: Vec<f64> = eigvals.iter().map(|e| -beta * e).collect();
    let shift = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = exponents.iter().map(|a| (a - shift).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let log_partition = shift + total.ln();
    let weights: Vec<f64> = unnorm.iter().map(|w| w / total).collect();

    let u = eig.eigenvectors;
    let d = u.nrows();
    let mut scaled = u.clone();
    for (k, w) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*w);
    }
    let mut rho = &scaled * u.adjoint();
    // symmetrize away rounding asymmetry
    for i in 0..d {
        rho[(i, i)].im = 0.0;
        for j in 0..i {
            let avg = (rho[(i, j)] + rho[(j, i)].conj()) * 0.5;
            rho[(i, j)] = avg;
            rho[(j, i)] = avg.conj();
        }
    }
    Ok(GibbsState { rho, beta, log_partition, eigvals, eigvecs: u, weights })
}

/// `tr[rho O]`. The imaginary residue must stay below 1e-10 and is dropped.
pub fn expectation(state: &GibbsState, observable: &HermitianMatrix) -> Result<f64> {
    if observable.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: observable.dim() });
    }
    let o = observable.matrix();
    let mut acc = ZERO;
    for i in 0..state.dim() {
        for j in 0..state.dim() {
            acc += state.rho[(i, j)] * o[(j, i)];
        }
    }
    if acc.im.abs() >= IMAG_TOL {
        return Err(Error::NonFinite(format!("imaginary expectation residue {:.3e}", acc.im)));
    }
    Ok(acc.re)
}

/// Applies the 2x2 matrix `u` to `qubit` of a state vector in place.
fn apply_local(state: &mut [Complex64], u: &Matrix2<Complex64>, qubit: usize, m: usize) {
    let stride = 1 << (m - 1 - qubit);
    let dim = state.len();
    let mut base = 0;
    while base < dim {
        for off in base..base + stride {
            let a = state[off];
            let b = state[off + stride];
            state[off] = u[(0, 0)] * a + u[(0, 1)] * b;
            state[off + stride] = u[(1, 0)] * a + u[(1, 1)] * b;
        }
        base += 2 * stride;
    }
}

/// Outcome probabilities when every qubit is measured in `basis`. Index `b`
/// is the outcome bit string, qubit 0 most significant.
pub fn measurement_distribution(state: &GibbsState, basis: PauliOp) -> Vec<f64> {
    let d = state.dim();
    let mut probs = if basis == PauliOp::Z {
        (0..d).map(|i| state.rho[(i, i)].re).collect::<Vec<_>>()
    } else {
        let m = state.num_qubits();
        let v_adj = basis.eigenbasis().adjoint();
        let mut probs = vec![0.0; d];
        let mut buf = vec![ZERO; d];
        for (k, &w) in state.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            buf.copy_from_slice(state.eigvecs.column(k).as_slice());
            for q in 0..m {
                apply_local(&mut buf, &v_adj, q, m);
            }
            for (p, a) in probs.iter_mut().zip(&buf) {
                *p += w * a.norm_sqr();
            }
        }
        probs
    };
    for p in probs.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// Spin of qubit `q` in outcome `index`: bit 0 maps to +1.
pub fn spins_from_index(index: usize, m: usize) -> Vec<f64> {
    (0..m)
        .map(|q| if (index >> (m - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 })
        .collect()
}

pub fn index_from_spins(spins: &[f64]) -> usize {
    let m = spins.len();
    spins
        .iter()
        .enumerate()
        .fold(0, |acc, (q, &s)| if s < 0.0 { acc | (1 << (m - 1 - q)) } else { acc })
}

/// Draws one measurement outcome as a spin vector.
pub fn sample_hidden<R: Rng + ?Sized>(state: &GibbsState, basis: PauliOp, rng: &mut R) -> Vec<f64> {
    let probs = measurement_distribution(state, basis);
    sample_spins_from(&probs, state.num_qubits(), rng)
}

pub(crate) fn sample_spins_from<R: Rng + ?Sized>(probs: &[f64], m: usize, rng: &mut R) -> Vec<f64> {
    let dist = WeightedIndex::new(probs).expect("normalized distribution");
    spins_from_index(dist.sample(rng), m)
}
