//! Oscillating velocities u_n = sqrt(2) sin(2 pi n x) w converge weakly to 0
//! while their energy does not; the defect measure tends to w (x) w.

use rheoflow::harness::commands::defect_rows;

fn main() -> rheoflow::Result<()> {
    let w = [0.0, 0.6, 0.8];
    println!(
        "{:>4} {:>14} {:>14} {:>10} {:>8}",
        "n", "|m - w(x)w|", "max cell err", "D", "lemma"
    );
    for r in defect_rows(&[2, 4, 8, 16], w, 4, false)? {
        println!(
            "{:>4} {:>14.3e} {:>14.3e} {:>10.6} {:>8}",
            r.n, r.frobenius_error, r.max_cell_error, r.defect, r.lemma_pass
        );
    }
    Ok(())
}
