//! The CSQBM: free energy, analytic gradients, both sampler conditionals and
//! the alternating Gibbs sampler.
//!
//! For visible `v` the model Hamiltonian is
//! `H(v) = -c(v) I + H'(v)` with
//! `H'(v) = -sum_ij W_ij s_i(v) P_j + H_hidden`, where `P` is the single
//! coupling basis. The free energy splits as `F(v) = -c(v) + F_{H'}(v)`.
//!
//! Flat parameter layout, stable across checkpoints: `W` row-major, then the
//! hidden term coefficients in spec order, then `theta` when it is trainable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::exp_family::{sufficient_stats_derivative, ExpFamilyPrior, NaturalParams};
use crate::quantum::{
    assemble_hamiltonian, gibbs_state, measurement_distribution, sample_spins_from, GibbsState,
    HermitianMatrix, PauliHamiltonianSpec, PauliOp, PauliTerm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Restrict the hidden Hamiltonian to terms diagonal in the coupling
    /// basis, the regime where the conditional sampler is exact.
    pub strict_sampler: bool,
    /// Allow non-zero coupling rows for quadratic statistics.
    pub quadratic_coupling: bool,
    /// Include the prior's natural parameters among the trainable weights.
    pub train_theta: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { strict_sampler: true, quadratic_coupling: false, train_theta: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsqbmModel {
    prior: ExpFamilyPrior,
    coupling: CouplingMatrix,
    hidden: PauliHamiltonianSpec,
    coupling_basis: PauliOp,
    beta: f64,
    options: ModelOptions,
}

#[derive(Debug, Clone)]
pub struct FreeEnergyReport {
    /// `F_H(v)`.
    pub f: f64,
    /// `F_{H'}(v)`.
    pub f_prime: f64,
    pub c: f64,
    /// Gibbs state of `H'(v)`.
    pub gibbs: GibbsState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    Weights,
    Visible,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// `F(v)` at the evaluation point.
    pub free_energy: f64,
    /// `dF/dw` in the flat parameter layout; empty unless requested.
    pub d_weights: Vec<f64>,
    /// `dF/dv`; empty unless requested.
    pub d_visible: Vec<f64>,
}

/// Visible coordinates held fixed during sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Clamp {
    values: Vec<Option<f64>>,
}

impl Clamp {
    /// Clamps the first `state.len()` of `n` coordinates.
    pub fn leading(state: &[f64], n: usize) -> Result<Self> {
        if state.len() > n {
            return Err(Error::DimensionMismatch { expected: n, got: state.len() });
        }
        let mut values = vec![None; n];
        for (slot, &x) in values.iter_mut().zip(state) {
            *slot = Some(x);
        }
        Ok(Self { values })
    }

    pub fn from_options(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CsqbmModel {
    pub fn new(
        prior: ExpFamilyPrior,
        coupling: CouplingMatrix,
        hidden: PauliHamiltonianSpec,
        coupling_basis: PauliOp,
        beta: f64,
        options: ModelOptions,
    ) -> Result<Self> {
        let model = Self { prior, coupling, hidden, coupling_basis, beta, options };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidBeta(self.beta));
        }
        if self.coupling.rows() != self.prior.stat_dim() {
            return Err(Error::DimensionMismatch { expected: self.prior.stat_dim(), got: self.coupling.rows() });
        }
        if self.coupling.cols() != self.hidden.num_qubits() {
            return Err(Error::DimensionMismatch { expected: self.hidden.num_qubits(), got: self.coupling.cols() });
        }
        if self.coupling.as_slice().iter().any(|w| !w.is_finite())
            || self.hidden.terms().iter().any(|t| !t.coefficient().is_finite())
        {
            return Err(Error::NonFinite("model weight".into()));
        }
        if !self.options.quadratic_coupling {
            for row in self.quadratic_rows() {
                if (0..self.m()).any(|j| self.coupling.get(row, j) != 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "coupling row {row} multiplies a quadratic statistic but quadratic coupling is disabled"
                    )));
                }
            }
        }
        if self.options.strict_sampler {
            if let Some(index) = self.hidden.terms().iter().position(|t| !t.is_diagonal_in(self.coupling_basis)) {
                return Err(Error::NonDiagonalHidden { index, basis: self.coupling_basis });
            }
        }
        self.prior.theta().check_normalizable()
    }

    fn quadratic_rows(&self) -> Vec<usize> {
        let k = self.prior.family().stats_per_unit();
        match self.prior.family().quadratic_slot() {
            Some(slot) => (0..self.n()).map(|i| i * k + slot).collect(),
            None => Vec::new(),
        }
    }

    pub fn prior(&self) -> &ExpFamilyPrior {
        &self.prior
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn hidden(&self) -> &PauliHamiltonianSpec {
        &self.hidden
    }

    pub fn coupling_basis(&self) -> PauliOp {
        self.coupling_basis
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    /// Visible unit count.
    pub fn n(&self) -> usize {
        self.prior.n()
    }

    /// Hidden qubit count.
    pub fn m(&self) -> usize {
        self.hidden.num_qubits()
    }

    pub fn stat_dim(&self) -> usize {
        self.prior.stat_dim()
    }

    /// Same weights at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.beta = beta;
        out.validate()?;
        Ok(out)
    }

    pub fn with_prior(&self, prior: ExpFamilyPrior) -> Result<Self> {
        let mut out = self.clone();
        out.prior = prior;
        out.validate()?;
        Ok(out)
    }

    fn check_visible(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: v.len() });
        }
        Ok(())
    }

    /// `s(v)^T W`: the field on each hidden qubit.
    fn hidden_fields(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.coupling.project(&self.prior.stats(v)?)
    }

    /// `H'(v) = H^{vh}(v) + H_hidden`.
    pub fn assemble_h_prime(&self, v: &[f64]) -> Result<HermitianMatrix> {
        self.check_visible(v)?;
        let fields = self.hidden_fields(v)?;
        let mut h = assemble_hamiltonian(&self.hidden);
        for (j, &f) in fields.iter().enumerate() {
            if f != 0.0 {
                h.add_term(-f, &PauliTerm::single(1.0, j, self.coupling_basis)?)?;
            }
        }
        Ok(h)
    }

    pub fn free_energy(&self, v: &[f64]) -> Result<FreeEnergyReport> {
        let c = self.prior.c_value(v)?;
        let gibbs = gibbs_state(&self.assemble_h_prime(v)?, self.beta)?;
        let f_prime = gibbs.free_energy();
        Ok(FreeEnergyReport { f: -c + f_prime, f_prime, c, gibbs })
    }

    pub fn num_parameters(&self) -> usize {
        self.coupling.as_slice().len()
            + self.hidden.terms().len()
            + if self.options.train_theta { self.stat_dim() } else { 0 }
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.coupling.as_slice().to_vec();
        p.extend(self.hidden.coefficients());
        if self.options.train_theta {
            p.extend_from_slice(self.prior.theta().values());
        }
        p
    }

    /// Replaces every trainable weight; the result is validated.
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch { expected: self.num_parameters(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        let nw = self.coupling.as_slice().len();
        let nh = self.hidden.terms().len();
        let mut next = self.clone();
        next.coupling.as_mut_slice().copy_from_slice(&params[..nw]);
        next.hidden.set_coefficients(&params[nw..nw + nh])?;
        if self.options.train_theta {
            next.prior.set_theta(&params[nw + nh..])?;
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// 1.0 for parameters that training may move, 0.0 otherwise.
    pub fn trainable_mask(&self) -> Vec<f64> {
        let mut mask = vec![1.0; self.num_parameters()];
        if !self.options.quadratic_coupling {
            for row in self.quadratic_rows() {
                for j in 0..self.m() {
                    mask[row * self.m() + j] = 0.0;
                }
            }
        }
        mask
    }

    /// Analytic `dF/dx`: `-dc/dx + tr[rho'_v dH'/dx]`.
    pub fn grad_free_energy(&self, v: &[f64], wrt: Wrt) -> Result<GradientReport> {
        let report = self.free_energy(v)?;
        let gibbs = &report.gibbs;
        let m = self.m();
        // <P_j> under rho'_v
        let pauli_means: Vec<f64> = (0..m)
            .map(|j| PauliTerm::single(1.0, j, self.coupling_basis).map(|t| gibbs.pauli_expectation(&t)))
            .collect::<Result<_>>()?;
        let s = self.prior.stats(v)?;

        let mut d_weights = Vec::new();
        if matches!(wrt, Wrt::Weights | Wrt::Both) {
            d_weights.reserve(self.num_parameters());
            for si in &s {
                for e in &pauli_means {
                    d_weights.push(-si * e);
                }
            }
            for t in self.hidden.terms() {
                d_weights.push(gibbs.pauli_expectation(t));
            }
            if self.options.train_theta {
                d_weights.extend(s.iter().map(|si| -si));
            }
        }

        let mut d_visible = Vec::new();
        if matches!(wrt, Wrt::Visible | Wrt::Both) {
            let dc = self.prior.grad_c_v(v)?;
            let ds = sufficient_stats_derivative(self.prior.family(), v);
            let k = self.prior.family().stats_per_unit();
            for (unit, dck) in dc.iter().enumerate() {
                let mut trace_term = 0.0;
                for r in unit * k..(unit + 1) * k {
                    for (j, e) in pauli_means.iter().enumerate() {
                        trace_term -= self.coupling.get(r, j) * ds[r] * e;
                    }
                }
                d_visible.push(-dck + trace_term);
            }
        }
        Ok(GradientReport { free_energy: report.f, d_weights, d_visible })
    }

    /// Hidden measurement outcome distribution given `v`, in the coupling basis.
    pub fn hidden_distribution(&self, v: &[f64]) -> Result<Vec<f64>> {
        let gibbs = gibbs_state(&self.assemble_h_prime(v)?, self.beta)?;
        Ok(measurement_distribution(&gibbs, self.coupling_basis))
    }

    /// Draws `h ~ p(h | v)` by measuring `rho'_v` in the coupling basis.
    pub fn conditional_hidden<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let probs = self.hidden_distribution(v)?;
        Ok(sample_spins_from(&probs, self.m(), rng))
    }

    /// Natural parameters of `p(v | h)`: `beta (theta + W h)`.
    pub fn conditional_visible_params(&self, h: &[f64]) -> Result<NaturalParams> {
        if let Some(&bad) = h.iter().find(|&&x| x != 1.0 && x != -1.0) {
            return Err(Error::InvalidSpin(bad));
        }
        self.prior.theta().tilt(&self.coupling, h, self.beta)
    }

    /// Alternating Gibbs chain over `(h, free visible coordinates)` with the
    /// clamped coordinates fixed; returns the free coordinates after
    /// `sweeps` sweeps.
    pub fn gibbs_sample_action<R: Rng + ?Sized>(&self, clamp: &Clamp, sweeps: usize, rng: &mut R) -> Result<Vec<f64>> {
        if sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
        }
        if clamp.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: clamp.len() });
        }
        let free = clamp.free_indices();
        let init = self.prior.theta().sample_units(&free, rng)?;
        let mut v: Vec<f64> = clamp.values.iter().map(|x| x.unwrap_or(0.0)).collect();
        for (&i, x) in free.iter().zip(init) {
            v[i] = x;
        }
        for _ in 0..sweeps {
            let h = self.conditional_hidden(&v, rng)?;
            let theta = self.conditional_visible_params(&h)?;
            let draw = theta.sample_units(&free, rng)?;
            for (&i, x) in free.iter().zip(draw) {
                v[i] = x;
            }
        }
        Ok(free.iter().map(|&i| v[i]).collect())
    }

    /// `Q(s, a) = -F(concat(s, a))`.
    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(-self.free_energy(&concat(s, a))?.f)
    }

    /// Hidden qubit `q` becomes `perm[q]`, with coupling columns moved along.
    pub fn relabel_hidden(&self, perm: &[usize]) -> Result<Self> {
        let m = self.m();
        let mut w = CouplingMatrix::zeros(self.coupling.rows(), m);
        for i in 0..self.coupling.rows() {
            for j in 0..m {
                w.set(i, perm[j], self.coupling.get(i, j));
            }
        }
        Self::new(
            self.prior.clone(),
            w,
            self.hidden.relabeled(perm)?,
            self.coupling_basis,
            self.beta,
            self.options,
        )
    }
}

pub fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.len() + a.len());
    v.extend_from_slice(s);
    v.extend_from_slice(a);
    v
}
