//! Critical couplings and the regime predicted for a few coupling strengths.
use cwmeter::landscape::{classify_regime, critical_coupling_single};
use cwmeter::model::ApparatusParams;

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(161, 0.0, 1.0, 0.0, 0.01, 5.0)?;
    let hc = critical_coupling_single(&a)?;
    println!("h_c closed form {:?}, barrier scan {:?}", hc.closed_form, hc.scan);
    for g in [0.01, 0.06, 0.1, 0.3, 0.4, 0.6] {
        let a = a.clone().with_coupling(g);
        let r = classify_regime(g, g, &a, &a)?;
        println!("g = {g:<5} regime {:?}{}  (h_d = {})", r.regime, if r.boundary { " [boundary]" } else { "" }, r.h_d);
    }
    Ok(())
}
