//! Build the kmax = 1 basis, evaluate a random field and check that it is
//! divergence free and orthonormal on the quadrature grid.

use std::sync::Arc;

use rheoflow::basis::{eval_symgrad, eval_velocity};
use rheoflow::{Basis, QuadratureGrid, VelocityField};

fn main() -> rheoflow::Result<()> {
    let basis = Arc::new(Basis::build(1)?);
    println!("kmax = 1 gives {} modes", basis.len());
    for m in basis.modes().iter().take(4) {
        println!(
            "  k = {:?}, polarization {}, {:?}, e = {:?}",
            m.k, m.polarization, m.parity, m.e
        );
    }

    let coeffs: Vec<f64> = (0..basis.len())
        .map(|i| ((i * 37) % 17) as f64 / 17.0 - 0.5)
        .collect();
    let field = VelocityField::new(basis.clone(), coeffs, 0.0)?;
    let x = [0.2, 0.7, 0.45];
    let u = eval_velocity(&field, x)?;
    let du = eval_symgrad(&field, x)?;
    println!("u(x) = {u:?}");
    println!("trace Du(x) = {:.3e}", du.trace());

    let grid = QuadratureGrid::new(16, 1, 2)?;
    let mut worst: f64 = 0.0;
    for (i, a) in basis.modes().iter().enumerate() {
        for b in &basis.modes()[i..] {
            let g = grid.integrate(|y| {
                let (ua, ub) = (a.eval(y), b.eval(y));
                ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2]
            })?;
            let target = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    println!("max Gram matrix deviation from identity: {worst:.3e}");
    Ok(())
}
