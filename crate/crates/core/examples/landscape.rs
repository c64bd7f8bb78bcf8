//! Up-branch free energy of one magnet and the minima of the joint landscape.
use cwmeter::landscape::{locate_minima, Branch, Landscape1D, Landscape2D};
use cwmeter::model::ApparatusParams;

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(161, 0.0, 1.0, 0.1, 0.01, 5.0)?;
    let l = Landscape1D::new(&a, Branch::Up)?;
    println!("m        F_up");
    for (m, f) in l.grid.values().iter().zip(&l.f).step_by(16) {
        println!("{m:+.3}  {f:+.4}");
    }

    let joint = Landscape2D::new(&a, &a, Branch::Up)?;
    for p in locate_minima(&joint) {
        println!("minimum at ({:+.3}, {:+.3})  F = {:+.4}  {:?}/{:?}", p.m, p.mp, p.f, p.phase_m, p.phase_mp);
    }
    Ok(())
}
