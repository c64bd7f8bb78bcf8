//! Four-outcome measurement model, sampled counts and linear inversion.
use cwmeter::model::{ApparatusParams, BlochState};
use cwmeter::povm::{
    estimate_bloch, outcome_probabilities, post_measurement_state, sample_outcomes, MeasurementModel, Outcome,
};

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(161, 0.0, 1.0, 0.4, 0.01, 5.0)?;
    let m = MeasurementModel::from_efficiencies(&a, &a, 0.6, 0.6)?;
    for e in &m.effects {
        println!("effect {:?}", e.as_array());
    }
    let s = BlochState::new(0.6, 0.0, 0.8)?;
    let p = outcome_probabilities(&s, &m)?;
    println!("probabilities {:?}", p.as_array());
    for o in Outcome::ALL {
        let post = post_measurement_state(o, &m, &s)?;
        println!("after {o:?}: ({:+.3}, {:+.3}, {:+.3})", post.rx, post.ry, post.rz);
    }
    let counts = sample_outcomes(&p, 100_000, 7)?;
    let est = estimate_bloch(&counts, m.lambda(), m.lambda_prime())?;
    println!("counts {counts:?}");
    println!("r_x = {:.4} +- {:.4}, r_z = {:.4} +- {:.4}", est.rx, est.se_rx, est.rz, est.se_rz);
    Ok(())
}
