//! Componentwise and aggregate bounds for a random positive semidefinite
//! matrix measure, and its Hahn split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rheoflow::measure::{hahn_split, lemma_check, psd_test_default, total_variation, trace_total};
use rheoflow::{MatrixMeasure, SymMat3};

fn main() -> rheoflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let atoms = (0..27)
        .map(|_| {
            (0..rng.random_range(1..=4)).fold(SymMat3::ZERO, |m, _| {
                let w: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                m + SymMat3::outer(w)
            })
        })
        .collect();
    let mu = MatrixMeasure::new(3, atoms)?;
    println!("PSD test passes: {}", psd_test_default(&mu, 1)?.pass);
    println!(
        "|mu|(T3) = {:.4}, trace mu(T3) = {:.4}",
        total_variation(&mu),
        trace_total(&mu)
    );
    let report = lemma_check(&mu, 5.0)?;
    println!(
        "TV/trace = {:.4}, holds with constant 5: {}",
        report.ratio, report.pass
    );
    let xy = hahn_split(&mu.component(0, 1));
    println!(
        "mu_xy: positive part {:.4}, negative part {:.4}, bounded by mu_xx + mu_yy = {:.4}",
        xy.positive_total(),
        xy.negative_total(),
        mu.total().get(0, 0) + mu.total().get(1, 1)
    );
    Ok(())
}
