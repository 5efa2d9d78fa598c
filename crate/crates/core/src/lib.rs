//! Continuous semi-quantum Boltzmann machines.
//!
//! A CSQBM couples an exponential-family prior over continuous visible units
//! to a register of hidden qubits. The hidden register is simulated densely,
//! so free energies, their gradients and both sampler conditionals are exact.
//! On top of the model sit a free-energy Q-learning agent, two toy
//! environments and the configuration, checkpoint and metrics formats used
//! by the `csqbm` command-line tool.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod coupling;
pub mod discrete;
pub mod envs;
pub mod error;
pub mod exec;
pub mod exp_family;
pub mod metrics;
pub mod model;
pub mod quantum;
pub mod stats;

pub use coupling::CouplingMatrix;
pub use error::{Error, Result};
pub use exec::{Execution, SimRng};
pub use exp_family::{ExpFamilyPrior, Family, NaturalParams};
pub use model::{CsqbmModel, FreeEnergyReport, GradientReport, Wrt};
pub use quantum::{GibbsState, HermitianMatrix, PauliHamiltonianSpec, PauliOp, PauliTerm};
