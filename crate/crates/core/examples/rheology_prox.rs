//! Proximal map, Moreau envelope and Fenchel-Young gap for the three
//! potential families at a single strain rate.

use rheoflow::rheology::Alpha;
use rheoflow::{ConvexPotential, SymMat3};

fn main() -> rheoflow::Result<()> {
    let d = SymMat3::new(0.3, -0.1, -0.2, 0.25, 0.0, -0.05);
    let potentials = [
        ("power_law(0.5, 3)", ConvexPotential::power_law(0.5, 3.0)?),
        ("power_law(0.5, 1.5)", ConvexPotential::power_law(0.5, 1.5)?),
        ("bingham(0.5, 0.2)", ConvexPotential::bingham(0.5, 0.2)?),
        ("newtonian(0.1)", ConvexPotential::newtonian(0.1)?),
    ];
    println!("|D| = {:.4}", d.norm());
    for (name, pot) in &potentials {
        println!("{name}: F(D) = {:.6}", pot.eval_potential(&d));
        for a in [1.0, 0.1, 1e-3] {
            let alpha = Alpha::new(a)?;
            let s = pot.moreau_stress(&d, alpha)?;
            println!(
                "  alpha = {a:<6} F_a(D) = {:.6}  |S| = {:.6}  regularized gap = {:.2e}  F-Y gap = {:.2e}",
                pot.moreau_envelope(&d, alpha)?,
                s.norm(),
                pot.regularized_gap(&s, &d, alpha)?,
                pot.fenchel_gap(&s, &d)
            );
        }
    }
    Ok(())
}
