//! Discrete-visible semi-quantum Boltzmann machine.
//!
//! The Hamiltonian lives on `n + m` qubits: visible qubits `0..n` followed by
//! hidden qubits. Every factor acting on a visible qubit must be Pauli-Z, so
//! the Hamiltonian commutes with the visible projector and the projected
//! trace reduces to a full trace over the hidden register once each visible
//! `Z_i` is replaced by its spin `v_i` (clamping).

use crate::error::{Error, Result};
use crate::quantum::{assemble_hamiltonian, gibbs_state, PauliHamiltonianSpec, PauliOp, PauliTerm};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSqbmModel {
    n: usize,
    spec: PauliHamiltonianSpec,
    beta: f64,
}

/// A term after clamping: scalar factor times an optional hidden operator.
struct ClampedTerm {
    scale: f64,
    hidden: Option<PauliTerm>,
}

impl DiscreteSqbmModel {
    pub fn new(n: usize, spec: PauliHamiltonianSpec, beta: f64) -> Result<Self> {
        if n > spec.num_qubits() {
            return Err(Error::InvalidArgument(format!(
                "{n} visible units exceed {} qubits",
                spec.num_qubits()
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidBeta(beta));
        }
        for t in spec.terms() {
            if let Some(&(qubit, _)) = t.factors().iter().find(|&&(q, op)| q < n && op != PauliOp::Z) {
                return Err(Error::NonZVisibleTerm { qubit });
            }
        }
        Ok(Self { n, spec, beta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.spec.num_qubits() - self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spec(&self) -> &PauliHamiltonianSpec {
        &self.spec
    }

    fn check_spins(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        match v.iter().find(|&&x| x != 1.0 && x != -1.0) {
            Some(&bad) => Err(Error::InvalidSpin(bad)),
            None => Ok(()),
        }
    }

    fn clamp_terms(&self, v: &[f64]) -> Result<Vec<ClampedTerm>> {
        self.spec
            .terms()
            .iter()
            .map(|t| {
                let mut scale = 1.0;
                let mut hidden = Vec::new();
                for &(q, op) in t.factors() {
                    if q < self.n {
                        scale *= v[q];
                    } else {
                        hidden.push((q - self.n, op));
                    }
                }
                let hidden = if hidden.is_empty() { None } else { Some(PauliTerm::new(1.0, hidden)?) };
                Ok(ClampedTerm { scale, hidden })
            })
            .collect()
    }

    /// `-(1/beta) log tr[exp(-beta H) Delta_v]`, computed by clamping.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        Ok(self.clamped(v)?.0)
    }

    /// `dF/dw` for every term coefficient, in spec order.
    pub fn grad_free_energy(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.clamped(v)?.1)
    }

    fn clamped(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_spins(v)?;
        let clamped = self.clamp_terms(v)?;
        let mut offset = 0.0;
        let mut hidden_terms = Vec::new();
        for (t, c) in self.spec.terms().iter().zip(&clamped) {
            match &c.hidden {
                None => offset += t.coefficient() * c.scale,
                Some(h) => hidden_terms.push(PauliTerm::new(t.coefficient() * c.scale, h.factors().to_vec())?),
            }
        }
        let hidden_spec = PauliHamiltonianSpec::new(self.m(), hidden_terms)?;
        let gibbs = gibbs_state(&assemble_hamiltonian(&hidden_spec), self.beta)?;
        let f = offset + gibbs.free_energy();
        let grad = clamped
            .iter()
            .map(|c| match &c.hidden {
                None => c.scale,
                Some(h) => c.scale * gibbs.pauli_expectation(h),
            })
            .collect();
        Ok((f, grad))
    }
}
