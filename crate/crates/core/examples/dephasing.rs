//! Transverse Bloch components under one and two coupled magnets.
use cwmeter::dynamics::{dephasing_joint_asymptote, dephasing_joint_numeric, dephasing_single, dephasing_time};
use cwmeter::model::{ApparatusParams, BlochState};

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(161, 0.0, 1.0, 0.1, 0.01, 5.0)?;
    let s = BlochState::new(0.6, 0.0, 0.8)?;
    let td = dephasing_time(&a);
    println!("tau_d = {td:.4e}");
    println!("t/tau_d  single_x   joint_x    joint_z");
    for k in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let one = dephasing_single(k * td, &s, &a);
        let two = dephasing_joint_numeric(k * td, &s, &a, &a)?;
        println!("{k:<7}  {:+.5}  {:+.5}  {:+.5}", one.rx, two.rx, two.rz);
    }
    let lim = dephasing_joint_asymptote(&s, &a, &a);
    println!("long-time limit ({:+.4}, {:+.4})", lim.rx, lim.rz);
    Ok(())
}
