//! Energy ledgers, the relative-energy functional against a strong
//! solution, and the Grönwall envelope monitor.

use std::f64::consts::{PI, SQRT_2};

use crate::basis::{eval_velocity, VelocityField};
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, SolverState};
use crate::quadrature::{pairwise_sum, QuadratureGrid};
use crate::tensor::{dot3, SymMat3};
use crate::transport::{gamma_moment, DensityField};

/// One ledger row; `total = kinetic + gamma_term + defect + dissipation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    /// `½∫ρ|u|²`.
    pub kinetic: f64,
    /// `(1/γ)∫ρ^γ`.
    pub gamma_term: f64,
    /// Cumulative `∫₀ᵗ∫ F_α(Du) + (F_α)*(S_α)`.
    pub dissipation: f64,
    pub defect: f64,
    pub total: f64,
    /// `total − total(0)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    /// Append a row, filling in its residual against the first row.
    pub fn push(&mut self, mut row: LedgerRow) {
        let e0 = self.rows.first().map_or(row.total, |r| r.total);
        row.residual = row.total - e0;
        self.rows.push(row);
    }

    /// Energy-equality residual without the pressure-like term:
    /// `½∫ρ|u|²(t) + dissipation(t) − ½∫ρ₀|u₀|²`, per row.
    pub fn kinetic_residuals(&self) -> Vec<f64> {
        let k0 = self.rows.first().map_or(0.0, |r| r.kinetic);
        self.rows
            .iter()
            .map(|r| r.kinetic + r.dissipation - k0)
            .collect()
    }
}

/// Ledger row for a Galerkin state. At finite dimension there is no
/// concentration, so callers pass `defect = 0`.
pub fn energy_row(
    state: &SolverState,
    sys: &GalerkinSystem,
    gamma: f64,
    cumulative: f64,
    defect: f64,
) -> Result<LedgerRow> {
    let kinetic = sys.kinetic_energy(&state.rho, &state.coeffs);
    let gamma_term = gamma_moment(&state.rho, gamma)? / gamma;
    let total = kinetic + gamma_term + defect + cumulative;
    if ![kinetic, gamma_term, cumulative, defect]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::numerical(format!(
            "non-finite ledger entry at t={}",
            state.time
        )));
    }
    Ok(LedgerRow {
        t: state.time,
        kinetic,
        gamma_term,
        dissipation: cumulative,
        defect,
        total,
        residual: 0.0,
    })
}

/// Largest `E(t) − E(0)` over the ledger; positive values are violations of
/// the energy inequality.
pub fn energy_inequality_check(ledger: &EnergyLedger) -> Result<f64> {
    let first = ledger
        .rows
        .first()
        .ok_or_else(|| Error::invalid("energy ledger is empty"))?;
    Ok(ledger
        .rows
        .iter()
        .map(|r| r.total - first.total)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `(1/γ)ρ^γ − P^{γ−1}ρ + ((γ−1)/γ)P^γ`: the Bregman divergence of
/// `x ↦ x^γ/γ`, nonnegative for positive arguments.
pub fn bregman_pressure_term(rho: f64, p: f64, gamma: f64) -> f64 {
    rho.powf(gamma) / gamma - p.powf(gamma - 1.0) * rho + (gamma - 1.0) / gamma * p.powf(gamma)
}

/// Largest observed `(ρ − P)² / bregman(ρ, P)` on a `samples × samples`
/// lattice of `[lo, hi]²`, diagonal excluded.
pub fn bregman_comparability(lo: f64, hi: f64, gamma: f64, samples: usize) -> f64 {
    let pt = |i: usize| lo + (hi - lo) * i as f64 / (samples - 1) as f64;
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        for j in 0..samples {
            if i == j {
                continue;
            }
            let (r, p) = (pt(i), pt(j));
            let b = bregman_pressure_term(r, p, gamma);
            worst = worst.max((r - p).powi(2) / b);
        }
    }
    worst
}

/// Single-mode Newtonian decay, an exact smooth solution for
/// `F(D) = ν|D|²` with constant density and pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongSolution {
    pub k: [i32; 3],
    pub w: [f64; 3],
    pub nu: f64,
}

impl StrongSolution {
    fn kf(&self) -> [f64; 3] {
        self.k.map(|c| c as f64)
    }

    /// `4π²ν|k|²`.
    pub fn decay_rate(&self) -> f64 {
        let k = self.kf();
        4.0 * PI * PI * self.nu * dot3(k, k)
    }

    fn phase(&self, x: [f64; 3]) -> f64 {
        2.0 * PI * dot3(self.kf(), x)
    }

    pub fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let amp = (-self.decay_rate() * t).exp() * SQRT_2 * self.phase(x).cos();
        self.w.map(|c| c * amp)
    }

    /// `∂_b U_a`.
    pub fn grad(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
        let amp = -(-self.decay_rate() * t).exp() * SQRT_2 * 2.0 * PI * self.phase(x).sin();
        let k = self.kf();
        std::array::from_fn(|a| std::array::from_fn(|b| amp * self.w[a] * k[b]))
    }

    pub fn density(&self, _t: f64, _x: [f64; 3]) -> f64 {
        1.0
    }

    /// `Ŝ = 2ν DU`.
    pub fn stress(&self, t: f64, x: [f64; 3]) -> SymMat3 {
        SymMat3::sym_part(&self.grad(t, x)).scale(2.0 * self.nu)
    }

    /// `div Ŝ = νΔU = −4π²ν|k|² U`.
    pub fn div_stress(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let r = self.decay_rate();
        self.velocity(t, x).map(|c| -r * c)
    }

    /// `½∫|U|² = ½|w|² e^{−8π²ν|k|²t}`.
    pub fn kinetic_energy(&self, t: f64) -> f64 {
        0.5 * dot3(self.w, self.w) * (-2.0 * self.decay_rate() * t).exp()
    }

    /// Coefficient of the matching basis mode at time `t` when `w` is a unit
    /// polarization vector.
    pub fn amplitude(&self, t: f64) -> f64 {
        dot3(self.w, self.w).sqrt() * (-self.decay_rate() * t).exp()
    }

    /// `‖∇U(t)‖_∞ = √2 · 2π |w| |k| e^{−4π²ν|k|²t}`, operator-norm sup.
    pub fn grad_sup(&self, t: f64) -> f64 {
        let k = self.kf();
        SQRT_2
            * 2.0
            * PI
            * dot3(self.w, self.w).sqrt()
            * dot3(k, k).sqrt()
            * (-self.decay_rate() * t).exp()
    }
}

/// Exact strong solution for `F(D) = ν|D|²`: the convection term vanishes
/// because `U · k = 0`.
pub fn manufactured_solution(k: [i32; 3], w: [f64; 3], nu: f64) -> Result<StrongSolution> {
    if k == [0, 0, 0] {
        return Err(Error::invalid("manufactured wavevector must be nonzero"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid("manufactured viscosity must be positive"));
    }
    let kf = k.map(|c| c as f64);
    if dot3(kf, w).abs() > 1e-12 * (1.0 + dot3(w, w).sqrt()) {
        return Err(Error::invalid(
            "manufactured amplitude w must be orthogonal to k",
        ));
    }
    Ok(StrongSolution { k, w, nu })
}

/// `E_rel = ½∫ρ|u−U|² + ∫ bregman(ρ, P) + D` by quadrature on `grid`.
pub fn relative_energy(
    rho: &DensityField,
    u: &VelocityField,
    defect: f64,
    strong: &StrongSolution,
    t: f64,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::invalid(format!("gamma must exceed 1, got {gamma}")));
    }
    let (lo, hi) = rho.bounds();
    let mut vals = Vec::with_capacity(grid.num_nodes());
    for x in grid.nodes() {
        let p = strong.density(t, x);
        if p < lo || p > hi {
            return Err(Error::invalid(format!(
                "strong density {p} outside [{lo}, {hi}]"
            )));
        }
        let r = rho.interpolate(x);
        let uv = eval_velocity(u, x)?;
        let uu = strong.velocity(t, x);
        let diff = [uv[0] - uu[0], uv[1] - uu[1], uv[2] - uu[2]];
        vals.push(0.5 * r * dot3(diff, diff) + bregman_pressure_term(r, p, gamma));
    }
    Ok(pairwise_sum(&vals) * grid.weight() + defect)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallConfig {
    /// Values at or below the floor count as zero.
    pub floor: f64,
    /// Largest admissible exponential growth rate.
    pub c_max: f64,
    /// Fit only over the last `window` points; `None` uses all.
    pub window: Option<usize>,
}

impl Default for GronwallConfig {
    fn default() -> Self {
        GronwallConfig {
            floor: 1e-12,
            c_max: 10.0,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallReport {
    /// Least-squares slope of `log E_rel` against `t`; 0 when the series
    /// starts at or below the floor.
    pub rate: f64,
    pub c_max: f64,
    pub pass: bool,
    /// Largest ratio of the series to its admissible envelope.
    pub worst_ratio: f64,
}

/// Check that `E_rel(t)` stays inside `E_rel(0)·e^{C_max t}` (or
/// `floor·e^{C_max t}` when it starts at the floor) and fit its growth rate.
pub fn gronwall_monitor(series: &[(f64, f64)], cfg: &GronwallConfig) -> Result<GronwallReport> {
    if series.len() < 3 {
        return Err(Error::invalid("gronwall monitor needs at least 3 samples"));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid(
            "gronwall series must be strictly increasing in t",
        ));
    }
    if let Some(&(t, v)) = series
        .iter()
        .find(|(_, v)| !(v.is_finite() && *v >= -cfg.floor))
    {
        return Err(Error::invalid(format!(
            "gronwall series has invalid value {v} at t={t}"
        )));
    }
    let (t0, e0) = series[0];
    let base = if e0 > cfg.floor { e0 } else { cfg.floor };
    let worst_ratio = series
        .iter()
        .map(|&(t, v)| v / (base * (cfg.c_max * (t - t0)).exp()))
        .fold(0.0, f64::max);
    let pass = worst_ratio <= 1.0 + 1e-9;

    let rate = if e0 > cfg.floor {
        let pts = match cfg.window {
            Some(w) if w < series.len() => &series[series.len() - w..],
            _ => series,
        };
        let logs: Vec<(f64, f64)> = pts
            .iter()
            .filter(|(_, v)| *v > cfg.floor)
            .map(|&(t, v)| (t, v.ln()))
            .collect();
        if logs.len() >= 2 {
            let n = logs.len() as f64;
            let mt = logs.iter().map(|p| p.0).sum::<f64>() / n;
            let ml = logs.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = logs.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
            let sxx: f64 = logs.iter().map(|p| (p.0 - mt).powi(2)).sum();
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(GronwallReport {
        rate,
        c_max: cfg.c_max,
        pass,
        worst_ratio,
    })
}
