//! Fit the response from simulated registrations, build the POVM from it and recover a state.
use cwmeter::dynamics::{response_fit, SolverConfig};
use cwmeter::model::{ApparatusParams, BlochState};
use cwmeter::povm::{estimate_bloch, outcome_probabilities, sample_outcomes, MeasurementModel};

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(21, 0.0, 1.0, 0.4, 0.01, 5.0)?;
    let cfg = SolverConfig { dt_factor: 0.25, ..SolverConfig::until(30.0) };
    let states = [
        BlochState::new(0.0, 0.0, 1.0)?,
        BlochState::new(0.0, 0.0, -1.0)?,
        BlochState::new(1.0, 0.0, 0.0)?,
        BlochState::new(-1.0, 0.0, 0.0)?,
    ];
    let fit = response_fit(&a, &a, &cfg, &states)?;
    println!("lambda = {:.4}, lambda' = {:.4}, max residual {:.2e}", fit.lambda, fit.lambda_prime, fit.max_residual);

    let m = MeasurementModel::from_efficiencies(&a, &a, fit.lambda, fit.lambda_prime)?;
    let truth = BlochState::new(0.6, 0.0, 0.8)?;
    let counts = sample_outcomes(&outcome_probabilities(&truth, &m)?, 200_000, 11)?;
    let est = estimate_bloch(&counts, fit.lambda, fit.lambda_prime)?;
    println!("recovered r_x = {:.3} +- {:.3}, r_z = {:.3} +- {:.3}", est.rx, est.se_rx, est.rz, est.se_rz);
    Ok(())
}
