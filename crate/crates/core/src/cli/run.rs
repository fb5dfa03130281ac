use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use super::config::*;
use crate::bayes::{
    self, rwm_chain, ChainOutput, FitzHughNagumoModel, LinearInitialValueModel, ObservationSet, OdeSimulator, PosteriorSpec,
    Prior, SolverMode,
};
use crate::calibration::{self, CalibrationOptions};
use crate::convergence::{self, Observable};
use crate::error::Result;
use crate::fem1d::{self, CoefficientField, EllipticProblem, FemCalibrationTarget, FemSimulator, Mesh1D, RandomBasisSpec};
use crate::io::{write_json, CsvTable};
use crate::ode::{self, OdeProblem, OneStepMethod};
use crate::perturbation::PerturbationSpec;
use crate::rng::{derive_path, derive_seed, substream};

const DATA_STREAM: u64 = 1;
const CHAIN_STREAM: u64 = 2;
const CALIBRATION_STREAM: u64 = 3;
const PRIOR_STREAM: u64 = 4;

/// Files written by one run, relative to the output directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(&mut self, name: String, table: &CsvTable) -> Result<()> {
        table.write(&self.dir.join(&name))?;
        self.files.push(name);
        Ok(())
    }

    fn json(&mut self, name: String, value: &Value) -> Result<()> {
        write_json(&self.dir.join(&name), value)?;
        self.files.push(name);
        Ok(())
    }
}

/// Runs `config`, writing results and `manifest.json` into `out_dir`.
/// Returns the manifest.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Value> {
    config.validate()?;
    let mut out = Outputs::new(out_dir)?;
    let seed = config.seed;
    let results = match &config.experiment {
        Experiment::ForwardEnsemble(p) => forward_ensemble(p, seed, &mut out)?,
        Experiment::Calibrate(p) => calibrate(p, seed, &mut out)?,
        Experiment::OdePosterior(p) => ode_posterior(p, seed, &mut out)?,
        Experiment::LinearConjugate(p) => linear_conjugate(p, seed, &mut out)?,
        Experiment::StrongOrder(p) => strong_order(p, seed, &mut out)?,
        Experiment::WeakOrderLinear(p) => weak_order(p, &mut out)?,
        Experiment::FemRates(p) => fem_rates(p, seed, &mut out)?,
        Experiment::EllipticInverse(p) => elliptic_inverse(p, seed, &mut out)?,
    };
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "library_version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "experiment": config.experiment.kind(),
        "config": config,
        "outputs": out.files,
        "results": results,
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn forward_ensemble(p: &ForwardEnsemble, seed: u64, out: &mut Outputs) -> Result<Value> {
    let field = p.problem.field();
    let problem = OdeProblem::new(field.as_ref(), p.problem.u0(), p.problem.t_final())?;
    let spec = PerturbationSpec::new(p.p, p.sigma, problem.dim())?;
    let n = problem.dim();
    let header = ["draw", "t"].into_iter().map(String::from).chain((1..=n).map(|i| format!("u_{i}")));
    let mut rows = Vec::new();
    for (i, &h) in p.h_values.iter().enumerate() {
        let stride = p.output_every.map_or(1, |dt| (dt / h).round() as usize);
        let mut ensemble = CsvTable::new(header.clone());
        for d in 0..p.draws {
            let traj = ode::solve_mesh(&problem, &p.method, &spec, h, derive_path(seed, &[i as u64, d as u64]))?;
            for (t, u) in traj.times().iter().zip(traj.states()).step_by(stride) {
                let mut row = vec![d as f64, *t];
                row.extend_from_slice(u);
                ensemble.push_floats(&row);
            }
        }
        out.csv(format!("ensemble_h{i}.csv"), &ensemble)?;
        let det = ode::solve_deterministic(&problem, &p.method, h)?;
        let mut table = CsvTable::new(std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("u_{i}"))));
        for (t, u) in det.times().iter().zip(det.states()).step_by(stride) {
            let mut row = vec![*t];
            row.extend_from_slice(u);
            table.push_floats(&row);
        }
        out.csv(format!("deterministic_h{i}.csv"), &table)?;
        rows.push(json!({ "h": h, "ensemble": format!("ensemble_h{i}.csv"), "deterministic": format!("deterministic_h{i}.csv") }));
    }
    Ok(json!({ "step_sizes": rows }))
}

fn calibrate(p: &CalibrateOde, seed: u64, out: &mut Outputs) -> Result<Value> {
    let field = p.problem.field();
    let problem = OdeProblem::new(field.as_ref(), p.problem.u0(), p.problem.t_final())?;
    let grid = p.grid.values();
    let mut rows = Vec::new();
    for (i, &h) in p.h_values.iter().enumerate() {
        let indicator = calibration::error_indicator_step_halving(&problem, &p.method, h)?;
        let res = calibration::calibrate_ode(&problem, &p.method, h, p.p, &indicator, p.n_mc, derive_seed(seed, i as u64), &grid)?;
        out.csv(format!("profile_h{i}.csv"), &res.to_csv())?;
        rows.push(json!({ "h": h, "sigma_star": res.sigma_star, "profile": format!("profile_h{i}.csv") }));
    }
    Ok(json!({ "step_sizes": rows }))
}

fn chain_summary(chain: &ChainOutput) -> Value {
    let d = chain.samples.first().map_or(0, Vec::len);
    let params: Vec<Value> = (0..d)
        .map(|i| {
            let var = chain.variance(i);
            let sd = var.sqrt();
            json!({
                "mean": chain.mean(i),
                "mean_mcse": chain.mean_mcse(i),
                "variance": var,
                "variance_mcse": chain.variance_mcse(i),
                "sd": sd,
                "sd_mcse": chain.variance_mcse(i) / (2.0 * sd),
            })
        })
        .collect();
    json!({ "acceptance_rate": chain.acceptance_rate, "burn_in": chain.burn_in, "parameters": params })
}

fn write_chain(out: &mut Outputs, stem: &str, chain: &ChainOutput, h: f64, solver: &SolverMode, n_steps: usize) -> Result<Value> {
    out.csv(format!("{stem}.csv"), &chain.to_csv())?;
    let manifest = json!({
        "seed": chain.seed,
        "h": h,
        "sigma": solver.sigma(),
        "R": solver.draws(),
        "n_steps": n_steps,
        "acceptance_rate": chain.acceptance_rate,
    });
    out.json(format!("{stem}.json"), &manifest)?;
    Ok(chain_summary(chain))
}

fn ode_posterior(p: &OdePosterior, seed: u64, out: &mut Outputs) -> Result<Value> {
    let t_final = p.t_final();
    let model = FitzHughNagumoModel { u0: p.initial_state.clone(), t_final };
    let data_sim = OdeSimulator::new(model.clone(), OneStepMethod::Rk4, p.data_h);
    let clean = bayes::Simulator::predict(&data_sim, &p.truth, &SolverMode::Deterministic, &p.obs_times, 0)?;
    let mut rng = substream(derive_seed(seed, DATA_STREAM), 0);
    let sd = p.noise_var.sqrt();
    let values: Vec<Vec<f64>> = clean
        .iter()
        .map(|u| u.iter().map(|x| x + sd * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = CsvTable::new(["t", "d_1", "d_2"].map(String::from));
    for (t, v) in p.obs_times.iter().zip(&values) {
        data.push_floats(&[*t, v[0], v[1]]);
    }
    out.csv("data.csv".into(), &data)?;
    let obs = ObservationSet::new(p.obs_times.clone(), values, vec![p.noise_var])?;
    let sim = OdeSimulator::new(model, p.method.clone(), p.h);
    let spec = PosteriorSpec { priors: p.priors.clone(), solver: p.solver };
    let chain = rwm_chain(&sim, &spec, &obs, &p.chain, derive_seed(seed, CHAIN_STREAM))?;
    let summary = write_chain(out, "chain", &chain, p.h, &p.solver, p.chain.n_steps)?;
    Ok(json!({ "chain": summary }))
}

fn linear_conjugate(p: &LinearConjugate, seed: u64, out: &mut Outputs) -> Result<Value> {
    let t_obs = p.obs_step as f64 * p.h;
    let mut rng = substream(derive_seed(seed, DATA_STREAM), 0);
    let datum = (p.rate * t_obs).exp() * p.true_initial + p.noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let obs = ObservationSet::new(vec![t_obs], vec![vec![datum]], vec![p.noise_var])?;
    let solver = SolverMode::Randomized { sigma: p.sigma, p: p.p, draws: p.draws };
    let spec = PosteriorSpec { priors: vec![Prior::Normal { mean: p.prior_mean, sd: p.prior_var.sqrt() }], solver };
    let sim = OdeSimulator::new(LinearInitialValueModel { rate: p.rate, t_final: t_obs }, OneStepMethod::Euler, p.h);
    let chain = rwm_chain(&sim, &spec, &obs, &p.chain, derive_seed(seed, CHAIN_STREAM))?;
    let summary = write_chain(out, "chain", &chain, p.h, &solver, p.chain.n_steps)?;
    let (m, v) = bayes::linear_conjugate_posterior(
        p.rate, p.h, p.obs_step, p.noise_var, p.sigma, p.p, p.prior_mean, p.prior_var, datum,
    )?;
    let (m0, v0) = bayes::linear_conjugate_posterior(
        p.rate, p.h, p.obs_step, p.noise_var, 0.0, p.p, p.prior_mean, p.prior_var, datum,
    )?;
    Ok(json!({
        "datum": datum,
        "effective_obs_variance": bayes::effective_obs_variance(p.rate, p.h, p.obs_step, p.noise_var, p.sigma, p.p),
        "closed_form": { "mean": m, "variance": v },
        "closed_form_deterministic": { "mean": m0, "variance": v0 },
        "asymptotic_variance": bayes::asymptotic_posterior_variance(p.rate, p.h, p.sigma, p.prior_var),
        "chain": summary,
    }))
}

fn strong_order(p: &StrongOrder, seed: u64, out: &mut Outputs) -> Result<Value> {
    let field = p.problem.field();
    let problem = OdeProblem::new(field.as_ref(), p.problem.u0(), p.problem.t_final())?;
    let spec = PerturbationSpec::new(p.p, p.sigma, problem.dim())?;
    let fit = convergence::estimate_strong_order(&problem, &p.method, &spec, &p.h_values, p.samples, seed)?;
    out.csv("errors.csv".into(), &fit.to_csv())?;
    Ok(json!({ "fit": fit.summary() }))
}

fn weak_order(p: &WeakOrderLinear, out: &mut Outputs) -> Result<Value> {
    let spec = PerturbationSpec::new(p.p, p.sigma, 1)?;
    let mut res = serde_json::Map::new();
    for name in &p.observables {
        let obs = Observable::from_name(name)?;
        let (vs_mod, vs_orig, rows) = convergence::weak_order_linear(p.rate, p.u0, p.t_final, &spec, &p.h_values, obs)?;
        let mut table = CsvTable::new(
            ["h", "numerical", "modified_sde", "original_ode", "error_modified", "error_original"].map(String::from),
        );
        for (h, r) in p.h_values.iter().zip(&rows) {
            table.push_floats(&[*h, r.numerical, r.modified_sde, r.original_ode, r.vs_modified(), r.vs_original()]);
        }
        out.csv(format!("weak_{name}.csv"), &table)?;
        res.insert(name.clone(), json!({ "vs_modified": vs_mod.summary(), "vs_original": vs_orig.summary() }));
    }
    Ok(Value::Object(res))
}

fn fem_rates(p: &FemRatesParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let problem = EllipticProblem::standard(CoefficientField::from_free(&p.kappa_free)?);
    let spec = RandomBasisSpec::new(p.p, p.sigma, p.n_kl)?;
    let rates = fem1d::estimate_fem_rates(&problem, &spec, &p.n_elements, p.samples, p.reference_elements, derive_seed(seed, 0))?;
    let energy = fem1d::estimate_energy_scaling(&problem, &spec, &p.n_elements, p.energy_samples, derive_seed(seed, 1))?;
    out.csv("energy_error.csv".into(), &rates.energy.to_csv())?;
    out.csv("l2_error.csv".into(), &rates.l2.to_csv())?;
    out.csv("basis_energy.csv".into(), &energy.to_csv())?;
    Ok(json!({
        "energy_error": rates.energy.summary(),
        "l2_error": rates.l2.summary(),
        "basis_energy": energy.summary(),
    }))
}

fn elliptic_inverse(p: &EllipticInverse, seed: u64, out: &mut Outputs) -> Result<Value> {
    let truth = EllipticProblem::standard(CoefficientField::from_free(&p.true_kappa_free)?);
    let fine = fem1d::solve_quadratic(&Mesh1D::new(p.data_elements)?, &truth)?;
    let mut rng = substream(derive_seed(seed, DATA_STREAM), 0);
    let sd = p.noise_var.sqrt();
    let values: Vec<Vec<f64>> = p
        .locations
        .iter()
        .map(|&x| vec![fine.eval(x) + sd * rng.sample::<f64, _>(StandardNormal)])
        .collect();
    let mut data = CsvTable::new(["x", "d"].map(String::from));
    for (x, v) in p.locations.iter().zip(&values) {
        data.push_floats(&[*x, v[0]]);
    }
    out.csv("data.csv".into(), &data)?;
    let obs = ObservationSet::new(p.locations.clone(), values, vec![p.noise_var])?;

    let prior_kappas: Vec<Vec<f64>> = match &p.calibration {
        Some(c) => {
            let mut rng = substream(derive_seed(seed, PRIOR_STREAM), 0);
            (0..c.prior_draws)
                .map(|_| {
                    p.priors
                        .iter()
                        .map(|pr| match pr {
                            Prior::LogNormal { log_mean, log_sd } => (log_mean + log_sd * rng.sample::<f64, _>(StandardNormal)).exp(),
                            Prior::Normal { mean, sd } => (mean + sd * rng.sample::<f64, _>(StandardNormal)).abs().max(1e-6),
                        })
                        .collect()
                })
                .collect()
        }
        None => Vec::new(),
    };

    let mut meshes = Vec::new();
    for (i, &n) in p.n_elements.iter().enumerate() {
        let sigma_star = match &p.calibration {
            Some(c) => {
                let basis_p = p
                    .solvers
                    .iter()
                    .find_map(|s| match s {
                        SolverMode::Randomized { p, .. } => Some(*p),
                        SolverMode::Deterministic => None,
                    })
                    .unwrap_or(1);
                let targets = prior_kappas
                    .iter()
                    .map(|k| {
                        FemCalibrationTarget::new(
                            EllipticProblem::standard(CoefficientField::from_free(k)?),
                            n,
                            basis_p,
                            p.n_kl,
                            c.locations.clone(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let opts = CalibrationOptions {
                    n_mc: c.n_mc,
                    seed: derive_path(seed, &[CALIBRATION_STREAM, i as u64]),
                    ..CalibrationOptions::default()
                };
                let res = calibration::calibrate(&targets, &c.grid.values(), &opts)?;
                out.csv(format!("calibration_n{n}.csv"), &res.to_csv())?;
                Some(res.sigma_star)
            }
            None => None,
        };
        let sim = FemSimulator::standard(n, p.n_kl)?;
        let mut chains = Vec::new();
        for (k, solver) in p.solvers.iter().enumerate() {
            let solver = match (solver, sigma_star) {
                (SolverMode::Randomized { p, draws, .. }, Some(s)) => SolverMode::Randomized { sigma: s, p: *p, draws: *draws },
                (s, _) => *s,
            };
            let spec = PosteriorSpec { priors: p.priors.clone(), solver };
            let chain = rwm_chain(&sim, &spec, &obs, &p.chain, derive_path(seed, &[CHAIN_STREAM, i as u64, k as u64]))?;
            let stem = format!("chain_n{n}_s{k}");
            let summary = write_chain(out, &stem, &chain, 1.0 / n as f64, &solver, p.chain.n_steps)?;
            chains.push(json!({ "file": format!("{stem}.csv"), "sigma": solver.sigma(), "summary": summary }));
        }
        meshes.push(json!({ "n_elements": n, "sigma_star": sigma_star, "chains": chains }));
    }
    Ok(json!({ "meshes": meshes }))
}
