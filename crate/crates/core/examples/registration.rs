//! Joint registration of a spin along z: corner weights and central mass over time.
use cwmeter::dynamics::{evolve, SolverConfig};
use cwmeter::model::{init_joint_field, ApparatusParams, BlochState};

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(41, 0.0, 1.0, 0.4, 0.01, 5.0)?;
    let s = BlochState::new(0.6, 0.0, 0.8)?;
    let cfg = SolverConfig {
        dt_factor: 0.25,
        snapshot_times: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0],
        ..SolverConfig::until(30.0)
    };
    let tr = evolve(&init_joint_field(&s, &a, &a)?, &a, &a, &cfg)?;
    println!("tau = {}, {} steps of {:.3e} tau", tr.tau, tr.steps, tr.dt);
    println!("t/tau  ++      +-      -+      --      central");
    for snap in &tr.snapshots {
        let w = snap.diagnostics.weights;
        println!(
            "{:<5}  {:.4}  {:.4}  {:.4}  {:.4}  {:.2e}",
            snap.t, w.pp, w.pm, w.mp, w.mm, snap.diagnostics.central_mass
        );
    }
    Ok(())
}
