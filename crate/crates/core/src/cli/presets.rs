//! Named experiment configurations.

use std::path::PathBuf;

use super::config::*;
use crate::bayes::{ChainConfig, Prior, Refresh, SolverMode};
use crate::ode::OneStepMethod;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> Experiment,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 20160101,
            output_dir: Some(PathBuf::from("out").join(self.name)),
            experiment: (self.build)(),
        }
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fn-forward",
        description: "FitzHugh-Nagumo ensembles of 100 randomized Euler paths, sigma 0.1, h from 0.005 to 0.1",
        build: fn_forward,
    },
    Preset {
        name: "fn-calibrate",
        description: "FitzHugh-Nagumo noise-scale calibration for randomized Euler at h = 0.1, 0.05, 0.025",
        build: fn_calibrate,
    },
    Preset {
        name: "fn-posterior-det",
        description: "FitzHugh-Nagumo (a, b, c) posterior with deterministic Euler, h = 0.1, 100000 steps",
        build: fn_posterior_det,
    },
    Preset {
        name: "fn-posterior-rand",
        description: "FitzHugh-Nagumo (a, b, c) posterior with randomized Euler, h = 0.1, sigma 0.2, 100000 steps",
        build: fn_posterior_rand,
    },
    Preset {
        name: "linear-conjugate",
        description: "Initial value of du/dt = u from one observation; chain against the closed-form posterior",
        build: linear_conjugate,
    },
    Preset {
        name: "strong-order",
        description: "Strong order of randomized Euler on du/dt = u, 200 paths per step size",
        build: strong_order,
    },
    Preset {
        name: "weak-order-linear",
        description: "Closed-form weak errors of randomized Euler against the modified SDE and the ODE",
        build: weak_order_linear,
    },
    Preset {
        name: "fem-rates",
        description: "Energy and L2 rates of randomized linear elements, p = 1, 100 draws per mesh",
        build: fem_rates,
    },
    Preset {
        name: "elliptic-inverse",
        description: "Piecewise-constant conductivity from nine point observations, deterministic and randomized elements",
        build: elliptic_inverse,
    },
];

const _: () = assert!(!PRESETS.is_empty());

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

fn fhn(t_final: f64) -> OdeSpec {
    OdeSpec::FitzhughNagumo { a: 0.2, b: 0.2, c: 3.0, v0: -1.0, r0: 1.0, t_final }
}

fn fn_forward() -> Experiment {
    Experiment::ForwardEnsemble(ForwardEnsemble {
        problem: fhn(20.0),
        method: OneStepMethod::Euler,
        h_values: vec![0.005, 0.01, 0.02, 0.05, 0.1],
        p: 1,
        sigma: 0.1,
        draws: 100,
        output_every: Some(0.1),
    })
}

fn fn_calibrate() -> Experiment {
    Experiment::Calibrate(CalibrateOde {
        problem: fhn(20.0),
        method: OneStepMethod::Euler,
        h_values: vec![0.1, 0.05, 0.025],
        p: 1,
        grid: GridSpec { lo: 1e-3, hi: 10.0, n: 25 },
        n_mc: 200,
    })
}

fn fn_posterior(solver: SolverMode) -> OdePosterior {
    let truth = vec![0.2, 0.2, 3.0];
    OdePosterior {
        priors: truth.iter().map(|t| Prior::LogNormal { log_mean: f64::ln(*t), log_sd: 1.0 }).collect(),
        chain: ChainConfig::new(100_000, truth.clone(), 0.05),
        truth,
        initial_state: vec![-1.0, 1.0],
        obs_times: (1..=40).map(f64::from).collect(),
        noise_var: 0.001,
        data_h: 0.001,
        method: OneStepMethod::Euler,
        h: 0.1,
        solver,
    }
}

fn fn_posterior_det() -> Experiment {
    Experiment::OdePosterior(fn_posterior(SolverMode::Deterministic))
}

fn fn_posterior_rand() -> Experiment {
    Experiment::OdePosterior(fn_posterior(SolverMode::Randomized { sigma: 0.2, p: 1, draws: 10 }))
}

fn linear_conjugate() -> Experiment {
    let mut chain = ChainConfig::new(55_000, vec![1.0], 0.1);
    chain.refresh = Refresh::Standard;
    Experiment::LinearConjugate(LinearConjugate {
        rate: 1.0,
        h: 0.1,
        obs_step: 10,
        noise_var: 0.01,
        sigma: 0.2,
        p: 1,
        draws: 10,
        prior_mean: 0.0,
        prior_var: 1.0,
        true_initial: 1.0,
        chain,
    })
}

fn strong_order() -> Experiment {
    Experiment::StrongOrder(StrongOrder {
        problem: OdeSpec::Linear { rate: 1.0, u0: 1.0, t_final: 1.0 },
        method: OneStepMethod::Euler,
        p: 1,
        sigma: 1.0,
        h_values: vec![0.1, 0.05, 0.025, 0.0125],
        samples: 200,
    })
}

fn weak_order_linear() -> Experiment {
    Experiment::WeakOrderLinear(WeakOrderLinear {
        rate: 1.0,
        u0: 1.0,
        t_final: 1.0,
        p: 1,
        sigma: 1.0,
        h_values: vec![0.1, 0.05, 0.025, 0.0125],
        observables: vec!["identity".into(), "square".into()],
    })
}

fn fem_rates() -> Experiment {
    Experiment::FemRates(FemRatesParams {
        kappa_free: vec![1.0; 9],
        p: 1,
        sigma: 1.0,
        n_kl: 20,
        n_elements: vec![10, 20, 40, 80],
        samples: 100,
        reference_elements: 1280,
        energy_samples: 1000,
    })
}

fn elliptic_inverse() -> Experiment {
    let truth = vec![1.6, 0.7, 1.3, 2.2, 0.9, 0.5, 1.1, 1.8, 0.8];
    Experiment::EllipticInverse(EllipticInverse {
        chain: ChainConfig::new(100_000, vec![1.0; 9], 0.05),
        true_kappa_free: truth,
        locations: (1..=9).map(|i| i as f64 / 10.0).collect(),
        noise_var: 1e-5,
        data_elements: 1280,
        n_elements: vec![10, 20, 40],
        n_kl: 20,
        priors: vec![Prior::LogNormal { log_mean: 0.0, log_sd: 1.0 }; 9],
        solvers: vec![SolverMode::Deterministic, SolverMode::Randomized { sigma: 1.0, p: 1, draws: 10 }],
        calibration: Some(FemCalibration {
            grid: GridSpec { lo: 1e-2, hi: 1e2, n: 17 },
            n_mc: 100,
            prior_draws: 10,
            locations: (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique() {
        let names: HashSet<_> = PRESETS.iter().map(|p| p.name).collect();
        assert_eq!(names.len(), PRESETS.len());
    }

    #[test]
    fn catalogue_contents() {
        for n in [
            "fn-forward",
            "fn-calibrate",
            "fn-posterior-det",
            "fn-posterior-rand",
            "linear-conjugate",
            "strong-order",
            "weak-order-linear",
            "fem-rates",
            "elliptic-inverse",
        ] {
            assert!(find(n).is_some(), "{n}");
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for p in PRESETS {
            let cfg = p.config();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
