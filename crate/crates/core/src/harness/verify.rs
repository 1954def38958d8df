//! Seeded property suites behind `rheoflow verify <suite>`.
//!
//! Every check reports a margin: the slack between the observed worst case
//! and its threshold, so positive margins mean the property held.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::{eval_symgrad, eval_velocity, Basis, VelocityField};
use crate::error::{Error, Result};
use crate::measure::{hahn_split, lemma_check, MatrixMeasure, DEFAULT_LEMMA_CONSTANT};
use crate::quadrature::QuadratureGrid;
use crate::rheology::{random_unit_symmat, Alpha, ConvexPotential};
use crate::tensor::SymMat3;
use crate::transport::{advect_density, gamma_moment, DensityField, UniformVelocity};

pub const SUITES: &[&str] = &["rheology", "measure", "transport", "basis"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Threshold minus worst observed value.
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn upper(name: &str, worst: f64, limit: f64, detail: String) -> Check {
        Check {
            name: name.to_string(),
            pass: worst <= limit,
            margin: limit - worst,
            detail,
        }
    }

    fn lower(name: &str, worst: f64, limit: f64, detail: String) -> Check {
        Check {
            name: name.to_string(),
            pass: worst >= limit,
            margin: worst - limit,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: margin {:.3e} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.margin,
            self.detail
        )
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    match name {
        "rheology" => rheology_suite(seed),
        "measure" => measure_suite(seed),
        "transport" => transport_suite(seed),
        "basis" => basis_suite(seed),
        other => Err(Error::Usage(format!(
            "unknown suite `{other}`; valid suites: {}",
            SUITES.join(", ")
        ))),
    }
}

/// Random members of the three potential families with moderate parameters.
pub fn random_potential<R: Rng>(rng: &mut R, family: usize) -> ConvexPotential {
    match family % 3 {
        0 => ConvexPotential::power_law(rng.random_range(0.1..2.0), rng.random_range(1.2..4.0)),
        1 => ConvexPotential::bingham(rng.random_range(0.0..2.0), rng.random_range(0.1..2.0)),
        _ => ConvexPotential::newtonian(rng.random_range(0.05..1.0)),
    }
    .expect("parameters drawn inside the valid range")
}

fn random_tensor<R: Rng>(rng: &mut R, max_radius: f64) -> SymMat3 {
    random_unit_symmat(rng).scale(rng.random_range(0.0..max_radius))
}

const FAMILIES: [&str; 3] = ["power_law", "bingham", "newtonian"];

/// Fenchel–Young on random pairs and the regularized equality at the
/// regularized stress, `pairs` samples per family.
pub fn fenchel_young_checks(seed: u64, pairs: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (f, fam) in FAMILIES.iter().enumerate() {
        let mut worst_gap = f64::INFINITY;
        let mut worst_reg = f64::NEG_INFINITY;
        for _ in 0..pairs {
            let pot = random_potential(&mut rng, f);
            let s = random_tensor(&mut rng, 3.0);
            let d = random_tensor(&mut rng, 3.0);
            worst_gap = worst_gap.min(pot.fenchel_gap(&s, &d));
            let alpha = Alpha::new(10f64.powf(rng.random_range(-3.0..0.0)))?;
            let sa = pot.moreau_stress(&d, alpha)?;
            worst_reg = worst_reg.max(pot.regularized_gap(&sa, &d, alpha)?);
        }
        out.push(Check::lower(
            &format!("fenchel_young_{fam}"),
            worst_gap,
            -1e-12,
            format!("min F(D)+F*(S)-S:D = {worst_gap:.3e} over {pairs} pairs"),
        ));
        out.push(Check::upper(
            &format!("regularized_equality_{fam}"),
            worst_reg,
            1e-10,
            format!("max gap at S = F'_a(D) = {worst_reg:.3e}"),
        ));
    }
    Ok(out)
}

/// Monotone upward convergence of the envelope as `α ↓ 0`.
pub fn moreau_ladder_checks(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let alphas = [1.0, 0.1, 0.01, 0.001].map(|a| Alpha::new(a).expect("positive"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_mono = f64::NEG_INFINITY;
    let mut worst_above = f64::NEG_INFINITY;
    for i in 0..samples {
        let pot = random_potential(&mut rng, i);
        let d = random_tensor(&mut rng, 3.0);
        let f = pot.eval_potential(&d);
        let tol = 1e-12 * (1.0 + f);
        let mut prev = f64::NEG_INFINITY;
        for &a in &alphas {
            let fa = pot.moreau_envelope(&d, a)?;
            worst_mono = worst_mono.max(prev - fa - tol);
            worst_above = worst_above.max(fa - f - tol);
            prev = fa;
        }
    }
    let reference = ConvexPotential::power_law(1.0, 2.0)?;
    let mut worst_close: f64 = 0.0;
    for _ in 0..samples {
        let d = random_tensor(&mut rng, 3.0);
        let f = reference.eval_potential(&d);
        let fa = reference.moreau_envelope(&d, alphas[3])?;
        worst_close = worst_close.max((fa - f).abs() / (1.0 + f.abs()));
    }
    Ok(vec![
        Check::upper(
            "moreau_monotone",
            worst_mono,
            0.0,
            format!("largest decrease of F_a as a falls: {worst_mono:.3e}"),
        ),
        Check::upper(
            "moreau_below_potential",
            worst_above,
            0.0,
            format!("largest F_a - F: {worst_above:.3e}"),
        ),
        Check::upper(
            "moreau_close_at_1e-3",
            worst_close,
            0.05,
            format!("max |F_0.001 - F|/(1+|F|) for power_law(1,2): {worst_close:.3e}"),
        ),
    ])
}

/// `|F'_α(D₁) − F'_α(D₂)| ≤ |D₁ − D₂|/α + 1e-12`, `pairs` per α, half of
/// them nearby pairs.
pub fn prox_lipschitz_check(seed: u64, pairs: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    for a in [1.0, 0.1, 0.01, 0.001] {
        let alpha = Alpha::new(a)?;
        for i in 0..pairs {
            let pot = random_potential(&mut rng, i);
            let d1 = random_tensor(&mut rng, 3.0);
            let d2 = if i % 2 == 0 {
                random_tensor(&mut rng, 3.0)
            } else {
                d1 + random_tensor(&mut rng, 1e-3)
            };
            let lhs = (pot.moreau_stress(&d1, alpha)? - pot.moreau_stress(&d2, alpha)?).norm();
            let rhs = (d1 - d2).norm() / a;
            worst = worst.max(lhs - rhs - 1e-12);
            if rhs > 0.0 {
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
        }
    }
    Ok(Check::upper(
        "prox_lipschitz",
        worst,
        0.0,
        format!(
            "largest |dS| - |dD|/a - 1e-12 = {worst:.3e}; max |dS|/(|dD|/a) = {worst_ratio:.6}"
        ),
    ))
}

fn rheology_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = fenchel_young_checks(seed, 10_000)?;
    out.extend(moreau_ladder_checks(seed.wrapping_add(1), 100)?);
    out.push(prox_lipschitz_check(seed.wrapping_add(2), 1000)?);
    Ok(out)
}

/// Outcome of the random PSD measure experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaSweep {
    pub measures: usize,
    pub componentwise_failures: usize,
    pub max_ratio: f64,
}

/// Random PSD measures on `cells³` cells, each atom a sum of 1 to
/// `max_terms` random rank-one tensors.
pub fn lemma_sweep(
    seed: u64,
    measures: usize,
    cells: usize,
    max_terms: usize,
) -> Result<LemmaSweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = LemmaSweep {
        measures,
        componentwise_failures: 0,
        max_ratio: 0.0,
    };
    for _ in 0..measures {
        let atoms: Vec<SymMat3> = (0..cells.pow(3))
            .map(|_| {
                let terms = rng.random_range(1..=max_terms);
                let mut m = SymMat3::ZERO;
                for _ in 0..terms {
                    let w: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                    m += SymMat3::outer(w);
                }
                m
            })
            .collect();
        let mu = MatrixMeasure::new(cells, atoms)?;
        let r = lemma_check(&mu, DEFAULT_LEMMA_CONSTANT)?;
        sweep.componentwise_failures += r.off_diagonal.iter().filter(|b| !b.holds()).count();
        sweep.max_ratio = sweep.max_ratio.max(r.ratio);
    }
    Ok(sweep)
}

pub fn lemma_checks(seed: u64, measures: usize) -> Result<Vec<Check>> {
    let s = lemma_sweep(seed, measures, 4, 8)?;
    Ok(vec![
        Check::upper(
            "lemma_componentwise",
            s.componentwise_failures as f64,
            0.0,
            format!(
                "{} violations of |mu_ij| <= mu_ii + mu_jj over {} measures",
                s.componentwise_failures, s.measures
            ),
        ),
        Check::upper(
            "lemma_aggregate",
            s.max_ratio,
            DEFAULT_LEMMA_CONSTANT,
            format!(
                "max TV/trace = {:.6} (constant {DEFAULT_LEMMA_CONSTANT}; stated bound 4)",
                s.max_ratio
            ),
        ),
    ])
}

fn measure_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = lemma_checks(seed, 10_000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        if hahn_split(&v).reconstruct() != v {
            mismatches += 1;
        }
    }
    out.push(Check::upper(
        "hahn_reconstruction",
        mismatches as f64,
        0.0,
        format!("{mismatches} inexact reconstructions of 1000"),
    ));
    let rows = super::commands::defect_rows(&[4, 8, 16, 32], [0.0, 1.0, 0.0], 4, false)?;
    let last = rows.last().expect("nonempty ladder");
    out.push(Check::upper(
        "defect_limit",
        last.frobenius_error,
        0.05,
        format!("|m(T3) - w(x)w| at n=32: {:.3e}", last.frobenius_error),
    ));
    let worst_domination = rows
        .iter()
        .map(|r| r.total_variation - 2.0 * DEFAULT_LEMMA_CONSTANT * r.defect)
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::upper(
        "trace_domination",
        worst_domination,
        0.0,
        format!("max |m| - 2 C D = {worst_domination:.3e}"),
    ));
    let psd = rows.iter().all(|r| r.psd);
    out.push(Check {
        name: "defect_psd".into(),
        pass: psd,
        margin: if psd { 0.0 } else { -1.0 },
        detail: "oscillation defect measures pass the PSD test".into(),
    });
    Ok(out)
}

/// Smooth periodic profile used by the translation test.
pub fn translation_profile(x: [f64; 3]) -> f64 {
    1.0 + 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.2 * (2.0 * PI * x[2]).cos()
}

/// Max-norm error of a single translation step by `1/48` per axis at each
/// resolution, and the observed orders between successive resolutions.
pub fn translation_errors(resolutions: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let shift = 1.0 / 48.0;
    let dt = 0.1;
    let vel = UniformVelocity([shift / dt; 3]);
    let mut errs = Vec::new();
    for &m in resolutions {
        let rho = DensityField::from_fn(m, 0.4, 1.6, translation_profile)?;
        let moved = advect_density(&rho, &vel, 0.0, dt)?;
        let err = (0..m * m * m)
            .map(|q| {
                let x = moved.node(q);
                (moved.samples()[q] - translation_profile(x.map(|c| c - shift))).abs()
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let orders = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok((errs, orders))
}

/// Random divergence-free velocity over the `kmax = 1` basis.
pub fn random_velocity(seed: u64, scale: f64) -> Result<VelocityField> {
    let basis = Arc::new(Basis::build(1)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..basis.len())
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    VelocityField::new(basis, a, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub mass_drift: f64,
    pub gamma_drift: f64,
    pub range_violation: bool,
}

/// Advect a smooth density by a random divergence-free field for `steps`
/// steps and record the drift of mass and of `∫ρ^γ`.
pub fn transport_drift(
    seed: u64,
    m: usize,
    dt: f64,
    steps: usize,
    gamma: f64,
) -> Result<DriftReport> {
    let vel = random_velocity(seed, 0.05)?;
    let mut rho = DensityField::from_fn(m, 0.5, 2.0, |x| {
        1.0 + 0.2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
    })?;
    let (lo, hi) = (rho.min(), rho.max());
    let (m0, g0) = (rho.mass(), gamma_moment(&rho, gamma)?);
    let mut rep = DriftReport {
        mass_drift: 0.0,
        gamma_drift: 0.0,
        range_violation: false,
    };
    for s in 0..steps {
        rho = advect_density(&rho, &vel, s as f64 * dt, dt)?;
        rep.mass_drift = rep.mass_drift.max((rho.mass() - m0).abs());
        rep.gamma_drift = rep.gamma_drift.max((gamma_moment(&rho, gamma)? - g0).abs());
        rep.range_violation |= rho.min() < lo || rho.max() > hi;
    }
    Ok(rep)
}

/// Rough random density pushed around by a strong field; the range of the
/// samples may never widen.
pub fn max_principle_violation(seed: u64, m: usize, steps: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * m * m).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut rho = DensityField::new(m, data, 0.5, 2.0)?;
    let (lo, hi) = (rho.min(), rho.max());
    let vel = random_velocity(seed.wrapping_add(1), 1.0)?;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..steps {
        rho = advect_density(&rho, &vel, s as f64 * 0.01, 0.01)?;
        worst = worst.max(lo - rho.min()).max(rho.max() - hi);
    }
    Ok(worst)
}

fn transport_suite(seed: u64) -> Result<Vec<Check>> {
    let (errs, orders) = translation_errors(&[16, 32, 64])?;
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let drift = transport_drift(seed, 32, 1e-3, 100, 2.0)?;
    Ok(vec![
        Check::lower(
            "translation_order",
            min_order,
            1.8,
            format!(
                "errors {}, orders {orders:.3?}",
                errs.iter()
                    .map(|e| format!("{e:.3e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        ),
        Check::upper(
            "max_principle",
            max_principle_violation(seed, 16, 30)?,
            0.0,
            "largest excursion outside the initial range".into(),
        ),
        Check::upper(
            "mass_drift",
            drift.mass_drift,
            1e-3,
            format!("max |mass - mass0| over t = 0.1: {:.3e}", drift.mass_drift),
        ),
        Check::upper(
            "gamma_moment_drift",
            drift.gamma_drift,
            1e-3,
            format!(
                "max |int rho^2 - initial| over t = 0.1: {:.3e}",
                drift.gamma_drift
            ),
        ),
    ])
}

fn basis_suite(seed: u64) -> Result<Vec<Check>> {
    let basis = Arc::new(Basis::build(2)?);
    let grid = QuadratureGrid::new(9, 2, 2)?;
    let nodes: Vec<[f64; 3]> = grid.nodes().collect();
    let vals: Vec<Vec<[f64; 3]>> = basis
        .modes()
        .iter()
        .map(|m| nodes.iter().map(|&x| m.eval(x)).collect())
        .collect();
    let mut worst_ortho: f64 = 0.0;
    for i in 0..vals.len() {
        for j in i..vals.len() {
            let g: Vec<f64> = vals[i]
                .iter()
                .zip(&vals[j])
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
                .collect();
            let ip = grid.integrate_samples(&g);
            let target = if i == j { 1.0 } else { 0.0 };
            worst_ortho = worst_ortho.max((ip - target).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..basis.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let field = VelocityField::new(basis.clone(), a, 0.0)?;
    let h = 1e-5;
    let mut worst_fd: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_div: f64 = 0.0;
    let mut worst_period: f64 = 0.0;
    for _ in 0..200 {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let d = eval_symgrad(&field, x)?;
        worst_trace = worst_trace.max(d.trace().abs());
        let mut grad = [[0.0; 3]; 3];
        for b in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let (up, um) = (eval_velocity(&field, xp)?, eval_velocity(&field, xm)?);
            for a in 0..3 {
                grad[a][b] = (up[a] - um[a]) / (2.0 * h);
            }
        }
        let scale = 1.0 + d.norm();
        worst_fd = worst_fd.max((SymMat3::sym_part(&grad) - d).norm() / scale);
        worst_div = worst_div.max((grad[0][0] + grad[1][1] + grad[2][2]).abs() / scale);
        let shifted = eval_velocity(&field, [x[0] + 1.0, x[1] - 1.0, x[2] + 2.0])?;
        let here = eval_velocity(&field, x)?;
        worst_period = worst_period.max(
            (0..3)
                .map(|c| (shifted[c] - here[c]).abs())
                .fold(0.0, f64::max),
        );
    }
    Ok(vec![
        Check::upper(
            "orthonormality",
            worst_ortho,
            1e-12,
            format!("max |<w_r,w_s> - delta_rs| over {} modes", basis.len()),
        ),
        Check::upper(
            "symgrad_trace",
            worst_trace,
            1e-12,
            "max |tr Du| at random points".into(),
        ),
        Check::upper(
            "symgrad_finite_difference",
            worst_fd,
            1e-6,
            "relative gap between Du and central differences, h = 1e-5".into(),
        ),
        Check::upper(
            "divergence_finite_difference",
            worst_div,
            1e-6,
            "relative |div u| by central differences".into(),
        ),
        Check::upper(
            "periodicity",
            worst_period,
            1e-12,
            "max |u(x + n) - u(x)|".into(),
        ),
    ])
}

/// Whole-torus defect measure of the oscillating sequence, used by tests
/// that need a ready-made PSD measure.
pub fn oscillation_measure(n: usize, w: [f64; 3], cells: usize) -> Result<MatrixMeasure> {
    let rows = super::commands::defect_measures(&[n], w, cells, false)?;
    Ok(rows.into_iter().next().expect("one row").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{dissipation_defect, psd_test_default, total_variation};

    #[test]
    fn unknown_suite_is_usage_error() {
        let e = run_suite("foo", 42).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e
            .to_string()
            .contains("rheology, measure, transport, basis"));
    }

    #[test]
    fn small_rheology_checks_pass() {
        for c in fenchel_young_checks(7, 500).unwrap() {
            assert!(c.pass, "{}", c.line());
        }
        for c in moreau_ladder_checks(7, 50).unwrap() {
            assert!(c.pass, "{}", c.line());
        }
        assert!(prox_lipschitz_check(7, 100).unwrap().pass);
    }

    #[test]
    fn translation_is_second_order() {
        let (_, orders) = translation_errors(&[16, 32]).unwrap();
        assert!(orders[0] > 1.8, "{orders:?}");
    }

    #[test]
    fn lemma_sweep_small() {
        let s = lemma_sweep(1, 200, 2, 8).unwrap();
        assert_eq!(s.componentwise_failures, 0);
        assert!(s.max_ratio <= DEFAULT_LEMMA_CONSTANT);
    }

    #[test]
    fn oscillation_measure_has_half_defect() {
        let mu = oscillation_measure(8, [0.0, 1.0, 0.0], 2).unwrap();
        assert!((dissipation_defect(&mu) - 0.5).abs() < 1e-12);
        assert!(psd_test_default(&mu, 0).unwrap().pass);
        assert!(total_variation(&mu) <= 2.0 * DEFAULT_LEMMA_CONSTANT * dissipation_defect(&mu));
    }

    #[test]
    fn basis_suite_passes() {
        for c in basis_suite(42).unwrap() {
            assert!(c.pass, "{}", c.line());
        }
    }
}
