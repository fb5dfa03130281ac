use probode::bayes::SolverMode;
use probode::cli::config::Experiment;
use probode::cli::ExperimentConfig;

/// Small versions of the presets so every experiment runs in test time.
pub fn shrink(mut cfg: ExperimentConfig) -> ExperimentConfig {
    match &mut cfg.experiment {
        Experiment::ForwardEnsemble(p) => {
            p.h_values = vec![0.05, 0.1];
            p.draws = 3;
        }
        Experiment::Calibrate(p) => {
            p.h_values = vec![0.1];
            p.n_mc = 10;
            p.grid.n = 5;
        }
        Experiment::OdePosterior(p) => {
            p.obs_times = (1..=5).map(f64::from).collect();
            p.data_h = 0.01;
            p.chain.n_steps = 30;
            if let SolverMode::Randomized { draws, .. } = &mut p.solver {
                *draws = 2;
            }
        }
        Experiment::LinearConjugate(p) => p.chain.n_steps = 200,
        Experiment::StrongOrder(p) => p.samples = 50,
        Experiment::WeakOrderLinear(_) => {}
        Experiment::FemRates(p) => {
            p.n_elements = vec![10, 20];
            p.samples = 3;
            p.reference_elements = 80;
            p.energy_samples = 5;
            p.n_kl = 4;
        }
        Experiment::EllipticInverse(p) => {
            p.n_elements = vec![10];
            p.data_elements = 80;
            p.n_kl = 3;
            p.chain.n_steps = 20;
            for s in &mut p.solvers {
                if let SolverMode::Randomized { draws, .. } = s {
                    *draws = 2;
                }
            }
            if let Some(c) = &mut p.calibration {
                c.n_mc = 5;
                c.prior_draws = 2;
                c.grid.n = 3;
            }
        }
    }
    cfg
}
