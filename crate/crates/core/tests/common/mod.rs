//! Dense, independent oracles for integration tests: Hamiltonians built by
//! explicit Kronecker products and partition functions by eigendecomposition.
#![allow(dead_code)]

use csqbm_core::model::ModelOptions;
use csqbm_core::{CouplingMatrix, CsqbmModel, ExpFamilyPrior, PauliHamiltonianSpec, PauliOp, PauliTerm};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli(op: PauliOp) -> CMat {
    match op {
        PauliOp::X => CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        PauliOp::Y => CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        PauliOp::Z => CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    }
}

/// `op_0 (x) op_1 (x) ... (x) op_{k-1}`, qubit 0 leftmost.
pub fn kron_chain(ops: &[CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for op in ops {
        out = out.kronecker(op);
    }
    out
}

pub fn term_dense(t: &PauliTerm, num_qubits: usize) -> CMat {
    let ops: Vec<CMat> = (0..num_qubits)
        .map(|q| match t.factors().iter().find(|f| f.0 == q) {
            Some(&(_, op)) => pauli(op),
            None => CMat::identity(2, 2),
        })
        .collect();
    kron_chain(&ops) * c(t.coefficient(), 0.0)
}

pub fn spec_dense(spec: &PauliHamiltonianSpec) -> CMat {
    let d = 1usize << spec.num_qubits();
    spec.terms().iter().fold(CMat::zeros(d, d), |acc, t| acc + term_dense(t, spec.num_qubits()))
}

/// Gaussian sufficient statistics `(v_i, v_i^2)` per unit.
pub fn gaussian_stats(v: &[f64]) -> Vec<f64> {
    v.iter().flat_map(|&x| [x, x * x]).collect()
}

pub fn c_of(model: &CsqbmModel, v: &[f64]) -> f64 {
    let theta = model.prior().theta().values();
    gaussian_stats(v).iter().zip(theta).map(|(s, t)| s * t).sum::<f64>() + model.prior().log_base_shift()
}

/// Hidden fields `f_j = sum_i s_i(v) W_ij`.
pub fn fields(model: &CsqbmModel, v: &[f64]) -> Vec<f64> {
    let s = gaussian_stats(v);
    let w = model.coupling();
    (0..w.cols()).map(|j| (0..w.rows()).map(|i| s[i] * w.get(i, j)).sum()).collect()
}

/// Full `H(v) = -c(v) I - sum_j f_j P_j + H_hidden`, densely.
pub fn full_hamiltonian(model: &CsqbmModel, v: &[f64]) -> CMat {
    let m = model.m();
    let d = 1usize << m;
    let mut h = spec_dense(model.hidden()) - CMat::identity(d, d) * c(c_of(model, v), 0.0);
    for (j, f) in fields(model, v).iter().enumerate() {
        let t = PauliTerm::single(1.0, j, model.coupling_basis()).unwrap();
        h -= term_dense(&t, m) * c(*f, 0.0);
    }
    h
}

/// `log tr exp(-beta H)` and `exp(-beta H) / tr` for Hermitian `H`.
pub fn log_trace_exp(h: &CMat, beta: f64) -> (f64, CMat) {
    let eig = h.clone().symmetric_eigen();
    let shift = eig.eigenvalues.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    let d = h.nrows();
    let mut rho = CMat::zeros(d, d);
    let mut z = 0.0;
    for k in 0..d {
        let w = (-beta * eig.eigenvalues[k] - shift).exp();
        z += w;
        let col = eig.eigenvectors.column(k);
        rho += col * col.adjoint() * c(w, 0.0);
    }
    (z.ln() + shift, rho / c(z, 0.0))
}

/// `F(v) = -(1/beta) log tr exp(-beta H(v))` from the dense Hamiltonian.
pub fn dense_free_energy(model: &CsqbmModel, v: &[f64]) -> f64 {
    -log_trace_exp(&full_hamiltonian(model, v), model.beta()).0 / model.beta()
}

/// Eigenvector of `op` with eigenvalue `spin`.
fn eigvec(op: PauliOp, spin: f64) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = match (op, spin > 0.0) {
        (PauliOp::Z, true) => (c(1., 0.), c(0., 0.)),
        (PauliOp::Z, false) => (c(0., 0.), c(1., 0.)),
        (PauliOp::X, true) => (c(s, 0.), c(s, 0.)),
        (PauliOp::X, false) => (c(s, 0.), c(-s, 0.)),
        (PauliOp::Y, true) => (c(s, 0.), c(0., s)),
        (PauliOp::Y, false) => (c(s, 0.), c(0., -s)),
    };
    CMat::from_column_slice(2, 1, &[a, b])
}

/// Product state `|h>` in the given basis.
pub fn basis_state(op: PauliOp, spins: &[f64]) -> CMat {
    let vecs: Vec<CMat> = spins.iter().map(|&s| eigvec(op, s)).collect();
    kron_chain(&vecs)
}

/// `<h| H(v) |h>`: the joint energy of a measured hidden configuration.
pub fn joint_energy(model: &CsqbmModel, v: &[f64], spins: &[f64]) -> f64 {
    let psi = basis_state(model.coupling_basis(), spins);
    (psi.adjoint() * full_hamiltonian(model, v) * psi)[(0, 0)].re
}

/// All `2^m` spin configurations, qubit 0 most significant, bit 0 = +1.
pub fn all_spins(m: usize) -> Vec<Vec<f64>> {
    (0..1usize << m)
        .map(|idx| (0..m).map(|q| if (idx >> (m - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 }).collect())
        .collect()
}

pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

pub fn trapezoid(ys: &[f64], h: f64) -> f64 {
    h * (ys.iter().sum::<f64>() - 0.5 * (ys[0] + ys[ys.len() - 1]))
}

/// Grid-normalized density from log values.
pub fn normalize_log(log_values: &[f64], h: f64) -> Vec<f64> {
    let top = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let un: Vec<f64> = log_values.iter().map(|l| (l - top).exp()).collect();
    let z = trapezoid(&un, h);
    un.iter().map(|u| u / z).collect()
}

pub struct RandomModel {
    pub n: usize,
    pub m: usize,
    pub basis: PauliOp,
    pub beta: f64,
    pub strict: bool,
    pub quadratic: bool,
    pub train_theta: bool,
    /// Weights are drawn from `U[-scale, scale]`.
    pub scale: f64,
}

impl RandomModel {
    pub fn build<R: Rng>(&self, rng: &mut R) -> CsqbmModel {
        let mu: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma: Vec<f64> = (0..self.n).map(|_| rng.random_range(0.5..1.5)).collect();
        let prior = ExpFamilyPrior::gaussian(&mu, &sigma).unwrap().with_log_base_shift(rng.random_range(-1.0..1.0));
        let mut w = CouplingMatrix::zeros(2 * self.n, self.m);
        for i in 0..2 * self.n {
            let quadratic_row = i % 2 == 1;
            if quadratic_row && !self.quadratic {
                continue;
            }
            // keep tilted quadratic parameters negative
            let s = if quadratic_row { 0.1 / (self.m as f64) } else { self.scale };
            for j in 0..self.m {
                w.set(i, j, rng.random_range(-s..s));
            }
        }
        let ops = |rng: &mut R| if self.strict { self.basis } else { PauliOp::ALL[rng.random_range(0..3)] };
        let mut terms = Vec::new();
        for q in 0..self.m {
            let o = ops(rng);
            terms.push(PauliTerm::single(rng.random_range(-self.scale..self.scale), q, o).unwrap());
        }
        for a in 0..self.m {
            for b in a + 1..self.m {
                if rng.random_bool(0.6) {
                    let (oa, ob) = (ops(rng), ops(rng));
                    terms.push(PauliTerm::pair(rng.random_range(-self.scale..self.scale), (a, oa), (b, ob)).unwrap());
                }
            }
        }
        let options = ModelOptions { strict_sampler: self.strict, quadratic_coupling: self.quadratic, train_theta: self.train_theta };
        CsqbmModel::new(prior, w, PauliHamiltonianSpec::new(self.m, terms).unwrap(), self.basis, self.beta, options).unwrap()
    }
}
