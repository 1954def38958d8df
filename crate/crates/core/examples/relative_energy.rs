//! Compare a perturbed Galerkin run with the exact decaying shear mode and
//! watch the relative energy stay under its Gronwall envelope.

use rheoflow::harness::commands::cmd_relative_energy;
use rheoflow::harness::parse_str;

const CONFIG: &str = "\
kmax = 1
M = 16
dt = 2e-3
T = 0.1
alpha = 1e-4
gamma = 2
potential = newtonian
nu = 0.1
rho_min = 0.5
rho_max = 2
u0 = mode
u0_k = 1 0 0
u0_w = 0 1 0
u0_perturb = 0.01
";

fn main() -> rheoflow::Result<()> {
    let cfg = parse_str(CONFIG)?;
    let dir = std::env::temp_dir().join("rheoflow-relative-energy-example");
    let (manifest, outcome) = cmd_relative_energy(&cfg, &dir, false)?;
    let e0 = outcome.series[0].1;
    for &(t, e) in outcome.series.iter().step_by(10) {
        println!(
            "t = {t:.3}: E_rel = {e:.6e}, envelope = {:.6e}",
            e0 * (outcome.c_max * t).exp()
        );
    }
    for c in &manifest.checks {
        println!("{}", c.line());
    }
    println!("outputs in {}", dir.display());
    Ok(())
}
