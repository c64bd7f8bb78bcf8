//! Ohmic bath noise kernel and the flip rates it produces along the grid.
use cwmeter::bath::{branch_frequencies, noise_kernel, rate_coefficients, KernelParams};
use cwmeter::model::ApparatusParams;

fn main() -> cwmeter::Result<()> {
    let a = ApparatusParams::new(161, 0.0, 1.0, 0.4, 0.01, 5.0)?;
    let kp = KernelParams::from_apparatus(&a)?;
    println!("omega   K(omega)     K(-omega)/K(omega)  exp(beta omega)");
    for w in [0.01, 0.1, 0.5, 1.0, 2.0] {
        let (p, n) = (noise_kernel(w, &kp), noise_kernel(-w, &kp));
        println!("{w:<6}  {p:.5e}  {:<18.6}  {:.6}", n / p, (a.beta * w).exp());
    }
    println!("\nm       alpha+      alpha-      beta+       beta-");
    for m in [-0.8, -0.2, 0.0, 0.2, 0.8] {
        let (wp, wm) = branch_frequencies(m, 1.0, &a);
        let r = rate_coefficients(m, wp, wm, &kp);
        println!("{m:+.1}    {:.4e}  {:.4e}  {:.4e}  {:.4e}", r.alpha_plus, r.alpha_minus, r.beta_plus, r.beta_minus);
    }
    Ok(())
}
