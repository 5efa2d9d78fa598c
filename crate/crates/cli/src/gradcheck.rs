//! Analytic vs central-difference gradients on random models shaped like the
//! configured one.

use csqbm_core::config::ModelConfig;
use csqbm_core::exec::child_rng;
use csqbm_core::model::ModelOptions;
use csqbm_core::{CouplingMatrix, CsqbmModel, ExpFamilyPrior, PauliHamiltonianSpec, PauliOp, PauliTerm, Wrt};
use rand::Rng;

use crate::commands::load_config;
use crate::{CmdResult, Failure, GlobalArgs, EXIT_TOLERANCE};

const STEP: f64 = 1e-5;

/// Parameter groups reported separately.
const GROUPS: [&str; 4] = ["W", "hidden", "theta", "v"];

#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    error: f64,
    trial: usize,
    index: usize,
}

/// `|a - b| / max(1, |a|, |b|)`: relative for large gradients, absolute
/// near zero.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn random_model<R: Rng>(shape: &ModelConfig, rng: &mut R) -> csqbm_core::Result<CsqbmModel> {
    let (n, m) = (shape.n, shape.m);
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let prior = ExpFamilyPrior::gaussian(&mu, &sigma)?;
    let rows = prior.stat_dim();
    let mut w = CouplingMatrix::zeros(rows, m);
    for i in 0..rows {
        if i % 2 == 1 && !shape.quadratic_coupling {
            continue;
        }
        // quadratic couplings stay small so the tilted prior remains normalizable
        let scale = if i % 2 == 1 { 0.05 } else { 1.0 };
        for j in 0..m {
            w.set(i, j, scale * rng.random_range(-1.0..1.0));
        }
    }
    let basis = shape.coupling_basis;
    let op = |rng: &mut R| if shape.strict_sampler { basis } else { PauliOp::ALL[rng.random_range(0..3)] };
    let mut terms = Vec::new();
    for q in 0..m {
        let o = op(rng);
        terms.push(PauliTerm::single(rng.random_range(-1.0..1.0), q, o)?);
    }
    for q in 1..m {
        let (a, b) = (op(rng), op(rng));
        terms.push(PauliTerm::pair(rng.random_range(-1.0..1.0), (q - 1, a), (q, b))?);
    }
    let options = ModelOptions {
        strict_sampler: shape.strict_sampler,
        quadratic_coupling: shape.quadratic_coupling,
        train_theta: shape.train_theta,
    };
    CsqbmModel::new(prior, w, PauliHamiltonianSpec::new(m, terms)?, basis, rng.random_range(0.3..3.0), options)
}

fn group_of(model: &CsqbmModel, k: usize) -> usize {
    let w = model.coupling().as_slice().len();
    let h = model.hidden().terms().len();
    if k < w {
        0
    } else if k < w + h {
        1
    } else {
        2
    }
}

pub fn run(g: &GlobalArgs, trials: usize, tolerance: f64) -> CmdResult {
    if trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    if !(tolerance >= 0.0) {
        return Err(Failure::usage("--tolerance must be non-negative"));
    }
    let cfg = load_config(g, &[])?;
    let mut worst = [Worst::default(); 4];
    let mut rng = child_rng(cfg.run.seed, 7);
    for trial in 0..trials {
        let model = random_model(&cfg.model, &mut rng)?;
        let v: Vec<f64> = (0..model.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = model.grad_free_energy(&v, Wrt::Both)?;
        let params = model.parameters();
        let mask = model.trainable_mask();
        let mut record = |group: usize, index: usize, analytic: f64, fd: f64| {
            let e = rel_error(analytic, fd);
            if !(e <= worst[group].error) {
                worst[group] = Worst { error: e, trial, index };
            }
        };
        for k in (0..params.len()).filter(|&k| mask[k] != 0.0) {
            let eval = |delta: f64| -> csqbm_core::Result<f64> {
                let mut p = params.clone();
                p[k] += delta;
                let mut shifted = model.clone();
                shifted.set_parameters(&p)?;
                Ok(shifted.free_energy(&v)?.f)
            };
            let fd = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
            record(group_of(&model, k), k, grad.d_weights[k], fd);
        }
        for k in 0..v.len() {
            let eval = |delta: f64| -> csqbm_core::Result<f64> {
                let mut x = v.clone();
                x[k] += delta;
                Ok(model.free_energy(&x)?.f)
            };
            let fd = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
            record(3, k, grad.d_visible[k], fd);
        }
    }
    let mut failed = Vec::new();
    for (name, w) in GROUPS.iter().zip(&worst) {
        if !g.quiet {
            println!("{name:<7} worst relative error {:.3e} (trial {}, index {})", w.error, w.trial, w.index);
        }
        if w.error > tolerance {
            failed.push(format!("{name}[{}] in trial {} ({:.3e})", w.index, w.trial, w.error));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_TOLERANCE, format!("gradient check above tolerance {tolerance:e}: {}", failed.join(", "))))
    }
}
