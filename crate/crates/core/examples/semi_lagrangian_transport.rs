//! Advect a density bump through a random divergence-free flow and report
//! the range, mass and gamma-moment drift.

use std::f64::consts::PI;

use rheoflow::harness::verify::random_velocity;
use rheoflow::transport::{advect_density, gamma_moment};
use rheoflow::DensityField;

fn main() -> rheoflow::Result<()> {
    let vel = random_velocity(3, 0.2)?;
    let mut rho = DensityField::from_fn(32, 0.5, 2.0, |x| {
        1.0 + 0.6 * ((2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()).max(0.0)
    })?;
    let (lo, hi, m0, g0) = (rho.min(), rho.max(), rho.mass(), gamma_moment(&rho, 2.0)?);
    let dt = 0.01;
    for step in 0..50 {
        rho = advect_density(&rho, &vel, step as f64 * dt, dt)?;
        if (step + 1) % 10 == 0 {
            println!(
                "t = {:.2}: range [{:.4}, {:.4}] (initial [{lo:.4}, {hi:.4}]), mass drift {:.2e}, gamma drift {:.2e}",
                (step + 1) as f64 * dt,
                rho.min(),
                rho.max(),
                rho.mass() - m0,
                gamma_moment(&rho, 2.0)? - g0
            );
        }
    }
    Ok(())
}
