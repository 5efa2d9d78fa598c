//! Acceptance suite: eight criteria, one PASS/FAIL line each. Runs without
//! the libtest harness so the report is always printed; exits non-zero if
//! any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use csqbm_core::agent::{env_seed, evaluate, streams, train, GreedyPolicy, TrainOutcome, TrainSettings};
use csqbm_core::checkpoint::{hash_text, Checkpoint};
use csqbm_core::config::ExperimentConfig;
use csqbm_core::discrete::DiscreteSqbmModel;
use csqbm_core::exec::{child_rng, rng_from_seed, Execution};
use csqbm_core::metrics;
use csqbm_core::model::{Clamp, ModelOptions};
use csqbm_core::{CouplingMatrix, CsqbmModel, ExpFamilyPrior, PauliHamiltonianSpec, PauliOp, PauliTerm, Wrt};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

type Outcome = Result<String, String>;

fn within(limit_s: u64, started: Instant, detail: String) -> Outcome {
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(limit_s) {
        Err(format!("{detail}; runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64()))
    } else {
        Ok(format!("{detail}; {:.1}s", elapsed.as_secs_f64()))
    }
}

// 1. F = -c + F' against the dense full-Hamiltonian free energy.
fn free_energy_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_from_seed(1001);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(1..=4);
        let beta = [0.5, 1.0, 2.0][trial % 3];
        let spec = RandomModel {
            n,
            m,
            basis: PauliOp::ALL[trial % 3],
            beta,
            strict: trial % 2 == 0,
            quadratic: trial % 5 == 0,
            train_theta: false,
            scale: 1.0,
        };
        let model = spec.build(&mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let report = model.free_energy(&v).map_err(|e| e.to_string())?;
        worst = worst.max((report.f - dense_free_energy(&model, &v)).abs());
    }
    let detail = format!("200 models, max |F - F_dense| = {worst:.2e} (tol 1e-10)");
    if worst <= 1e-10 {
        within(10, t, detail)
    } else {
        Err(detail)
    }
}

// 2. Analytic weight and visible gradients against central differences.
fn analytic_gradients() -> Outcome {
    let t = Instant::now();
    let h = 1e-5;
    let mut rng = rng_from_seed(1002);
    let mut worst = (0.0f64, String::new());
    let mut checked = 0usize;
    for trial in 0..100 {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(1..=4);
        let spec = RandomModel {
            n,
            m,
            basis: PauliOp::ALL[trial % 3],
            beta: [0.5, 1.0, 2.0][trial % 3],
            strict: trial % 2 == 0,
            quadratic: trial % 4 == 0,
            train_theta: trial % 3 == 0,
            scale: 1.0,
        };
        let model = spec.build(&mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = model.grad_free_energy(&v, Wrt::Both).map_err(|e| e.to_string())?;
        let mut check = |what: String, analytic: f64, fd: f64| {
            checked += 1;
            let err = (analytic - fd).abs();
            let allowed = (1e-6 * analytic.abs().max(fd.abs())).max(1e-8);
            let ratio = err / allowed;
            if ratio > worst.0 {
                worst = (ratio, format!("{what}: analytic {analytic:.12e} vs fd {fd:.12e}"));
            }
        };
        let params = model.parameters();
        let mask = model.trainable_mask();
        for k in (0..params.len()).filter(|&k| mask[k] != 0.0) {
            let f_at = |delta: f64| {
                let mut p = params.clone();
                p[k] += delta;
                let mut shifted = model.clone();
                shifted.set_parameters(&p).unwrap();
                shifted.free_energy(&v).unwrap().f
            };
            check(format!("trial {trial} weight {k}"), g.d_weights[k], (f_at(h) - f_at(-h)) / (2.0 * h));
        }
        for k in 0..n {
            let f_at = |delta: f64| {
                let mut x = v.clone();
                x[k] += delta;
                model.free_energy(&x).unwrap().f
            };
            check(format!("trial {trial} visible {k}"), g.d_visible[k], (f_at(h) - f_at(-h)) / (2.0 * h));
        }
    }
    let detail = format!(
        "100 models, {checked} components, worst error/allowed = {:.3} (rel 1e-6, abs floor 1e-8)",
        worst.0
    );
    if worst.0 <= 1.0 {
        within(30, t, detail)
    } else {
        Err(format!("{detail}; {}", worst.1))
    }
}

// 3. Clamped discrete SQBM against the full projection trace.
fn discrete_projection() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_from_seed(1003);
    let (mut worst_f, mut worst_g) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let total = rng.random_range(2..=6usize);
        let n = rng.random_range(1..total);
        let op = |rng: &mut rand_chacha::ChaCha8Rng, q: usize| {
            if q < n {
                PauliOp::Z
            } else {
                PauliOp::ALL[rng.random_range(0..3)]
            }
        };
        let mut terms = Vec::new();
        for q in 0..total {
            let o = op(&mut rng, q);
            terms.push(PauliTerm::single(rng.random_range(-1.0..1.0), q, o).unwrap());
        }
        for a in 0..total {
            for b in a + 1..total {
                if rng.random_bool(0.5) {
                    let (oa, ob) = (op(&mut rng, a), op(&mut rng, b));
                    terms.push(PauliTerm::pair(rng.random_range(-1.0..1.0), (a, oa), (b, ob)).unwrap());
                }
            }
        }
        let spec = PauliHamiltonianSpec::new(total, terms).unwrap();
        let beta = rng.random_range(0.3..2.0);
        let model = DiscreteSqbmModel::new(n, spec.clone(), beta).map_err(|e| e.to_string())?;
        let v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();

        // projector onto visible basis states matching v
        let d = 1usize << total;
        let m = total - n;
        let mut proj = DMatrix::<Complex64>::zeros(d, d);
        for idx in 0..d {
            let ok = (0..n).all(|i| ((idx >> (m + n - 1 - i)) & 1 == 0) == (v[i] > 0.0));
            if ok {
                proj[(idx, idx)] = Complex64::new(1.0, 0.0);
            }
        }
        let (log_z_full, rho) = log_trace_exp(&spec_dense(&spec), beta);
        let weighted = &rho * &proj;
        let p = weighted.trace().re;
        let f_oracle = -(p.ln() + log_z_full) / beta;
        let f = model.free_energy(&v).map_err(|e| e.to_string())?;
        worst_f = worst_f.max((f - f_oracle).abs());
        let grad = model.grad_free_energy(&v).map_err(|e| e.to_string())?;
        for (k, term) in spec.terms().iter().enumerate() {
            let mut unit = term.clone();
            unit.set_coefficient(1.0);
            let oracle = (&weighted * term_dense(&unit, total)).trace().re / p;
            worst_g = worst_g.max((grad[k] - oracle).abs());
        }
    }
    let detail = format!("50 specs, max |dF| = {worst_f:.2e}, max |dgrad| = {worst_g:.2e} (tol 1e-10)");
    if worst_f <= 1e-10 && worst_g <= 1e-10 {
        within(10, t, detail)
    } else {
        Err(detail)
    }
}

/// 4001-point grid over mean +/- 10 sd of the density `exp(log_density)`,
/// located by a coarse pass over [-200, 200].
fn oracle_window(log_density: impl Fn(f64) -> f64) -> Vec<f64> {
    let coarse = grid(-200.0, 200.0, 2001);
    let h = coarse[1] - coarse[0];
    let p = normalize_log(&coarse.iter().map(|&x| log_density(x)).collect::<Vec<_>>(), h);
    let mean = trapezoid(&coarse.iter().zip(&p).map(|(x, q)| x * q).collect::<Vec<_>>(), h);
    let var = trapezoid(&coarse.iter().zip(&p).map(|(x, q)| (x - mean).powi(2) * q).collect::<Vec<_>>(), h);
    let sd = var.sqrt();
    grid(mean - 10.0 * sd, mean + 10.0 * sd, 4001)
}

// 4. Closed-form Gaussian conditional and mixture marginal against
//    grid-normalized Boltzmann weights of the dense Hamiltonian.
fn exponential_family_marginal() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_from_seed(1004);
    let (mut worst_cond, mut worst_marg) = (0.0f64, 0.0f64);
    for trial in 0..30 {
        let m = 1 + trial % 3;
        let basis = [PauliOp::Z, PauliOp::X, PauliOp::Y][trial % 3];
        let beta = [0.5, 1.0, 2.0][(trial / 3) % 3];
        let model = RandomModel { n: 1, m, basis, beta, strict: true, quadratic: trial % 4 == 1, train_theta: false, scale: 1.0 }
            .build(&mut rng);

        // p(h | v) p(v) = p(v | h) p(h): each conditional on its own window
        let configs = all_spins(m);
        let mut log_weights = Vec::new();
        let mut thetas = Vec::new();
        for spins in &configs {
            let theta = model.conditional_visible_params(spins).map_err(|e| e.to_string())?;
            let log_joint = |x: f64| -beta * joint_energy(&model, &[x], spins);
            let xs = oracle_window(log_joint);
            let h = xs[1] - xs[0];
            let oracle = normalize_log(&xs.iter().map(|&x| log_joint(x)).collect::<Vec<_>>(), h);
            for (&x, o) in xs.iter().zip(&oracle) {
                let closed = theta.log_density(&[x]).map_err(|e| e.to_string())?.exp();
                worst_cond = worst_cond.max((closed - o).abs());
            }
            // weight exp(-beta E_hidden(h)) Z(theta'(h)); E_hidden is the joint energy with the v-dependent part removed
            let e0 = joint_energy(&model, &[0.0], spins) + c_of(&model, &[0.0]);
            log_weights.push(-beta * e0 + theta.log_partition().map_err(|e| e.to_string())?);
            thetas.push(theta);
        }
        let top = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_weights.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = weights.iter().sum();

        let log_marginal = |x: f64| -beta * dense_free_energy(&model, &[x]);
        let xs = oracle_window(log_marginal);
        let h = xs[1] - xs[0];
        let oracle = normalize_log(&xs.iter().map(|&x| log_marginal(x)).collect::<Vec<_>>(), h);
        for (&x, o) in xs.iter().zip(&oracle) {
            let mut mix = 0.0;
            for (w, theta) in weights.iter().zip(&thetas) {
                mix += w * theta.log_density(&[x]).map_err(|e| e.to_string())?.exp();
            }
            worst_marg = worst_marg.max((mix / total - o).abs());
        }
    }
    let detail = format!(
        "30 models (n = 1, m <= 3, X/Y/Z bases), 4001-point grids: max conditional error {worst_cond:.2e}, max marginal error {worst_marg:.2e} (tol 1e-8)"
    );
    if worst_cond <= 1e-8 && worst_marg <= 1e-8 {
        within(20, t, detail)
    } else {
        Err(detail)
    }
}

/// n = 2 (state, action), m = 2, Z coupling, diagonal hidden terms.
fn reference_model(beta: f64) -> CsqbmModel {
    CsqbmModel::new(
        ExpFamilyPrior::gaussian(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        CouplingMatrix::from_row_major(4, 2, vec![0.8, -0.5, 0.0, 0.0, 0.6, 0.9, 0.0, 0.0]).unwrap(),
        PauliHamiltonianSpec::new(
            2,
            vec![
                PauliTerm::single(0.2, 0, PauliOp::Z).unwrap(),
                PauliTerm::single(-0.3, 1, PauliOp::Z).unwrap(),
                PauliTerm::pair(0.4, (0, PauliOp::Z), (1, PauliOp::Z)).unwrap(),
            ],
        )
        .unwrap(),
        PauliOp::Z,
        beta,
        ModelOptions::default(),
    )
    .unwrap()
}

const REFERENCE_STATE: f64 = 0.4;

// 5. Gibbs sampler marginal against quadrature.
fn gibbs_convergence() -> Outcome {
    let t = Instant::now();
    let model = reference_model(1.0);
    let s = REFERENCE_STATE;
    let xs = grid(-15.0, 15.0, 6001);
    let h = xs[1] - xs[0];
    let log_p: Vec<f64> = xs.iter().map(|&a| -model.beta() * dense_free_energy(&model, &[s, a])).collect();
    let density = normalize_log(&log_p, h);
    let mean = trapezoid(&xs.iter().zip(&density).map(|(x, p)| x * p).collect::<Vec<_>>(), h);
    let var = trapezoid(&xs.iter().zip(&density).map(|(x, p)| (x - mean).powi(2) * p).collect::<Vec<_>>(), h);
    let (lo, hi) = (mean - 6.0 * var.sqrt(), mean + 6.0 * var.sqrt());
    let bins = 64;
    let width = (hi - lo) / bins as f64;

    // exact bin probabilities by Simpson on a fine sub-grid of each bin
    let exact: Vec<f64> = (0..bins)
        .map(|b| {
            let a0 = lo + b as f64 * width;
            let pts = grid(a0, a0 + width, 65);
            let ys: Vec<f64> = pts.iter().map(|&a| -model.beta() * dense_free_energy(&model, &[s, a])).collect();
            let top = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = trapezoid(&log_p.iter().map(|l| (l - top).exp()).collect::<Vec<_>>(), h);
            let vals: Vec<f64> = ys.iter().map(|l| (l - top).exp() / z).collect();
            let dx = width / 64.0;
            (0..64).step_by(2).map(|k| dx / 3.0 * (vals[k] + 4.0 * vals[k + 1] + vals[k + 2])).sum()
        })
        .collect();

    let clamp = Clamp::leading(&[s], 2).unwrap();
    let count = 50_000;
    let mut hist = vec![0usize; bins];
    for i in 0..count {
        let a = model.gibbs_sample_action(&clamp, 20, &mut child_rng(5005, i)).map_err(|e| e.to_string())?[0];
        let k = ((a - lo) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            hist[k as usize] += 1;
        }
    }
    let empirical: Vec<f64> = hist.iter().map(|&c| c as f64 / count as f64).collect();
    let outside_emp = 1.0 - empirical.iter().sum::<f64>();
    let outside_exact = (1.0 - exact.iter().sum::<f64>()).max(0.0);
    let tv = 0.5 * (empirical.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() + (outside_emp - outside_exact).abs());
    let detail = format!("50k samples, 20 sweeps, 64 bins on mean +/- 6 sd: TV = {tv:.4} (tol 0.05)");
    if tv <= 0.05 {
        within(60, t, detail)
    } else {
        Err(detail)
    }
}

// 6. Posterior mean of a fixed Q rises with the sampling inverse temperature.
fn beta_sharpening() -> Outcome {
    let t = Instant::now();
    let reference = reference_model(1.0);
    let s = [REFERENCE_STATE];
    let clamp = Clamp::leading(&s, 2).unwrap();
    let betas = [0.5, 1.0, 2.0, 5.0];
    let count = 20_000;
    let mut q = Vec::new();
    for &beta in &betas {
        let sampler = reference.with_beta(beta).map_err(|e| e.to_string())?;
        let mut col = Vec::with_capacity(count);
        for i in 0..count {
            // common random numbers across beta for the paired test
            let a = sampler.gibbs_sample_action(&clamp, 20, &mut child_rng(6006, i as u64)).map_err(|e| e.to_string())?;
            col.push(reference.q_value(&s, &a).map_err(|e| e.to_string())?);
        }
        q.push(col);
    }
    let means: Vec<f64> = q.iter().map(|c| c.iter().sum::<f64>() / count as f64).collect();
    // one-sided paired z-test per consecutive pair; reject "non-decreasing" at 0.01
    let critical = -2.326;
    let mut zs = Vec::new();
    for k in 0..betas.len() - 1 {
        let d: Vec<f64> = q[k + 1].iter().zip(&q[k]).map(|(b, a)| b - a).collect();
        let mean = d.iter().sum::<f64>() / count as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        zs.push(mean / (var / count as f64).sqrt());
    }
    let detail = format!(
        "mean Q at beta {betas:?} = [{}], paired z = [{}] (reject below {critical})",
        means.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
        zs.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", ")
    );
    if zs.iter().all(|&z| z > critical) {
        within(60, t, detail)
    } else {
        Err(detail)
    }
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_config(cfg: &ExperimentConfig, exec: Option<Execution>) -> Result<TrainOutcome, String> {
    let mut agent = cfg.agent.clone();
    if let Some(e) = exec {
        agent.execution = e;
    }
    let mut env = cfg.env.build(env_seed(cfg.run.seed)).map_err(|e| e.to_string())?;
    let settings = TrainSettings { episodes: cfg.run.episodes, seed: cfg.run.seed, hash_interval: 100, record_wall_time: false };
    train(env.as_mut(), cfg.build_model().map_err(|e| e.to_string())?, &agent, &settings, |_, _| {})
        .map_err(|e| e.to_string())
}

fn load(name: &str, seed: u64) -> Result<ExperimentConfig, String> {
    ExperimentConfig::load(&config_path(name), &[format!("run.seed={seed}")]).map_err(|e| e.to_string())
}

// 7. Learning on both environments with the shipped configs.
fn end_to_end_learning() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let cfg = load("bandit.toml", seed)?;
        if cfg.run.episodes != 2000 {
            return Err(format!("bandit config runs {} episodes, expected 2000", cfg.run.episodes));
        }
        let out = run_config(&cfg, None)?;
        let tail = &out.metrics[out.metrics.len() - 100..];
        let mean = tail.iter().map(|m| m.ret).sum::<f64>() / 100.0;
        ok &= mean >= -0.05;
        lines.push(format!("bandit seed {seed}: last-100 mean {mean:.4}"));
    }
    for seed in 0..3 {
        let cfg = load("steer.toml", seed)?;
        let out = run_config(&cfg, None)?;
        let episodes = cfg.run.eval_episodes;
        let eval = |policy: &dyn csqbm_core::agent::Policy| -> Result<f64, String> {
            let mut env = cfg.env.build(env_seed(seed)).map_err(|e| e.to_string())?;
            let summary = evaluate(policy, env.as_mut(), episodes, &mut child_rng(seed, streams::EVAL));
            Ok(summary.map_err(|e| e.to_string())?.mean_return)
        };
        let learned = eval(&GreedyPolicy { model: &out.model, config: &cfg.agent })?;
        let zero = eval(&|_: &[f64]| vec![0.0])?;
        let oracle_env = match &cfg.env {
            csqbm_core::config::EnvConfig::SteerLine(p) => csqbm_core::envs::SteerLine::new(*p, 0).map_err(|e| e.to_string())?,
            _ => return Err("steer config does not use the steering line".into()),
        };
        let exact = eval(&move |s: &[f64]| oracle_env.exact_correction(s))?;
        let fraction = (learned - zero) / (exact - zero);
        ok &= fraction >= 0.5;
        lines.push(format!(
            "steer seed {seed}: learned {learned:.4}, zero {zero:.4}, exact {exact:.4}, gap closed {:.0}%",
            100.0 * fraction
        ));
    }
    let detail = lines.join("; ");
    if ok {
        within(600, t, detail)
    } else {
        Err(detail)
    }
}

// 8. Identical config and seed give identical metrics bytes and hashes.
fn determinism() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    for (name, episodes) in [("bandit.toml", 400), ("steer.toml", 150)] {
        let mut cfg = load(name, 17)?;
        cfg.run.episodes = episodes;
        let runs: Vec<TrainOutcome> = [None, None, Some(Execution::Sequential)]
            .into_iter()
            .map(|e| run_config(&cfg, e))
            .collect::<Result<_, _>>()?;
        let bytes: Vec<Vec<u8>> = runs
            .iter()
            .map(|r| {
                let mut buf = Vec::new();
                metrics::write_all(&mut buf, &r.metrics).unwrap();
                buf
            })
            .collect();
        let finals: Vec<String> = runs
            .iter()
            .map(|r| hash_text(&Checkpoint::from_model(&r.model, None).to_json().unwrap()))
            .collect();
        if bytes[0] != bytes[1] || runs[0].checkpoint_hashes != runs[1].checkpoint_hashes || finals[0] != finals[1] {
            return Err(format!("{name}: repeated run differs"));
        }
        if bytes[0] != bytes[2] || runs[0].checkpoint_hashes != runs[2].checkpoint_hashes {
            return Err(format!("{name}: sequential and parallel execution differ"));
        }
        lines.push(format!(
            "{name}: {} metrics bytes, {} step hashes identical across 2 repeats and both execution modes",
            bytes[0].len(),
            runs[0].checkpoint_hashes.len()
        ));
    }
    within(600, t, lines.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 free-energy decomposition", free_energy_identity),
        ("2 analytic gradients", analytic_gradients),
        ("3 discrete clamping vs projection", discrete_projection),
        ("4 exponential-family conditional", exponential_family_marginal),
        ("5 Gibbs sampler convergence", gibbs_convergence),
        ("6 beta sharpening", beta_sharpening),
        ("7 end-to-end learning", end_to_end_learning),
        ("8 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
