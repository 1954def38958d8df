//! Coupled density–velocity Galerkin stepper.
//!
//! The velocity is `u = Σ a_r ω^r` and the coefficients obey
//! `B(ρ) · da/dt = h(t, a)` with the density-weighted mass matrix
//! `B_ij = ∫ρ ω^i·ω^j` and
//! `h_j = −∫ρ (ū·∇u)·ω^j − ∫ F'_α(Du) : Dω^j`.
//! The density is carried by the transporting velocity `ū`, which couples
//! the two equations; one step resolves the coupling by Picard iteration on
//! the end-of-step coefficients.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::{Basis, Parity, VelocityField};
use crate::diagnostics::{energy_row, EnergyLedger};
use crate::error::{Error, Result};
use crate::quadrature::{pairwise_sum, CompensatedSum, QuadratureGrid};
use crate::rheology::{Alpha, ConvexPotential};
use crate::tensor::SymMat3;
use crate::transport::{advect_density, gamma_moment, DensityField, LinearCoefficientPath};

const TWO_PI: f64 = 2.0 * PI;

/// Initial velocity descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialVelocity {
    Zero,
    /// `u₀ = √2 · w · cos(2π k·x)` with `w · k = 0`.
    Mode {
        k: [i32; 3],
        w: [f64; 3],
    },
    /// Independent normal coefficients of standard deviation `scale`.
    Random {
        seed: u64,
        scale: f64,
    },
}

/// Initial density descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    Uniform(f64),
    /// `mean + amp · sin(2π x₁) · cos(2π x₂)`.
    Wave {
        mean: f64,
        amp: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub kmax: u32,
    /// Density grid resolution per axis.
    pub density_m: usize,
    /// Quadrature grid resolution per axis.
    pub quad_m: usize,
    pub dt: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub potential: ConvexPotential,
    pub rho_min: f64,
    pub rho_max: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub u0: InitialVelocity,
    /// Added to the dominant coefficient of the projected initial velocity.
    pub u0_perturb: f64,
    pub rho0: InitialDensity,
    /// Write a density snapshot every this many steps; 0 disables.
    pub snapshot_every: usize,
}

impl SimConfig {
    /// Quadrature resolution used when none is configured: the smallest
    /// even resolution exact for triple products, but at least 16.
    pub fn default_quad_m(kmax: u32) -> usize {
        let min = QuadratureGrid::minimal(kmax, 3).resolution();
        (min + min % 2).max(16)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        if self.kmax < 1 {
            return Err(Error::invalid("kmax must be at least 1"));
        }
        if self.density_m < 2 {
            return Err(Error::invalid("density grid resolution must be at least 2"));
        }
        QuadratureGrid::new(self.quad_m, self.kmax, 3)?;
        pos("dt", self.dt)?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::invalid("final time must be nonnegative"));
        }
        pos("alpha", self.alpha)?;
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::invalid(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        pos("rho_min", self.rho_min)?;
        pos("rho_max", self.rho_max)?;
        if self.rho_min > self.rho_max {
            return Err(Error::invalid("rho_min exceeds rho_max"));
        }
        pos("picard_tol", self.picard_tol)?;
        if self.picard_max == 0 {
            return Err(Error::invalid("picard_max must be positive"));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "final time {} is not an integer multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        if let InitialVelocity::Mode { k, w } = &self.u0 {
            if k.iter().any(|c| c.unsigned_abs() > self.kmax) || *k == [0, 0, 0] {
                return Err(Error::invalid(format!(
                    "initial mode {k:?} not in basis of cutoff {}",
                    self.kmax
                )));
            }
            let kw = k[0] as f64 * w[0] + k[1] as f64 * w[1] + k[2] as f64 * w[2];
            if kw.abs() > 1e-12 {
                return Err(Error::invalid(
                    "initial mode amplitude w must be orthogonal to k",
                ));
            }
        }
        let (lo, hi) = match self.rho0 {
            InitialDensity::Uniform(v) => (v, v),
            InitialDensity::Wave { mean, amp } => (mean - amp.abs(), mean + amp.abs()),
        };
        if lo < self.rho_min || hi > self.rho_max {
            return Err(Error::invalid(format!(
                "initial density range [{lo}, {hi}] outside bounds [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn alpha(&self) -> Result<Alpha> {
        Alpha::new(self.alpha)
    }

    pub fn initial_density(&self) -> Result<DensityField> {
        match self.rho0 {
            InitialDensity::Uniform(v) => {
                DensityField::constant(self.density_m, v, self.rho_min, self.rho_max)
            }
            InitialDensity::Wave { mean, amp } => {
                DensityField::from_fn(self.density_m, self.rho_min, self.rho_max, |x| {
                    mean + amp * (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).cos()
                })
            }
        }
    }
}

/// Instantaneous solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub time: f64,
    pub coeffs: Vec<f64>,
    pub rho: DensityField,
    /// `F'_α(Du)` at the quadrature nodes.
    pub stress: Vec<SymMat3>,
}

/// Quadrature of the dissipation terms at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationSample {
    /// `∫F_α(Du) + (F_α)*(S_α) dx`.
    pub rate: f64,
    /// `∫S_α : Du dx`.
    pub work: f64,
    /// Quadrature of the regularized Fenchel–Young gap.
    pub gap: f64,
}

/// Precomputed basis samples on the quadrature grid together with the
/// rheology; everything the right-hand side and mass matrix need.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    basis: Arc<Basis>,
    grid: QuadratureGrid,
    potential: ConvexPotential,
    alpha: Alpha,
    /// Mode profiles, node-major: `prof[q * n + r]`.
    prof: Vec<f64>,
    dprof: Vec<f64>,
    /// `√2 · 2π · sym(e_r ⊗ k_r)`.
    sym_factor: Vec<SymMat3>,
}

impl GalerkinSystem {
    pub fn new(
        basis: Arc<Basis>,
        grid: QuadratureGrid,
        potential: ConvexPotential,
        alpha: Alpha,
    ) -> Self {
        let n = basis.len();
        let nq = grid.num_nodes();
        let mut prof = Vec::with_capacity(n * nq);
        let mut dprof = Vec::with_capacity(n * nq);
        let mut buf = Vec::with_capacity(n);
        for x in grid.nodes() {
            basis.profiles_into(x, &mut buf);
            prof.extend(buf.iter().map(|p| p.0));
            dprof.extend(buf.iter().map(|p| p.1));
        }
        let sym_factor = basis.modes().iter().map(|m| m.symgrad_factor()).collect();
        GalerkinSystem {
            basis,
            grid,
            potential,
            alpha,
            prof,
            dprof,
            sym_factor,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = Arc::new(Basis::build(cfg.kmax)?);
        let grid = QuadratureGrid::new(cfg.quad_m, cfg.kmax, 3)?;
        Ok(Self::new(basis, grid, cfg.potential, cfg.alpha()?))
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn potential(&self) -> ConvexPotential {
        self.potential
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    fn n(&self) -> usize {
        self.basis.len()
    }

    /// `L²` projection of a velocity field onto the basis by quadrature.
    pub fn project<F: Fn([f64; 3]) -> [f64; 3]>(&self, u: F) -> Vec<f64> {
        let n = self.n();
        let w = self.grid.weight();
        let mut acc = vec![Vec::with_capacity(self.grid.num_nodes()); n];
        for (q, x) in self.grid.nodes().enumerate() {
            let v = u(x);
            for (r, mode) in self.basis.modes().iter().enumerate() {
                let t = self.prof[q * n + r];
                acc[r].push(SQRT_2 * t * (mode.e[0] * v[0] + mode.e[1] * v[1] + mode.e[2] * v[2]));
            }
        }
        acc.iter().map(|vals| pairwise_sum(vals) * w).collect()
    }

    /// Velocity at quadrature node `q`.
    fn velocity_at(&self, q: usize, a: &[f64]) -> [f64; 3] {
        let n = self.n();
        let row = &self.prof[q * n..(q + 1) * n];
        let mut u = [0.0; 3];
        for ((mode, &ar), &t) in self.basis.modes().iter().zip(a).zip(row) {
            if ar != 0.0 {
                let s = SQRT_2 * ar * t;
                u[0] += s * mode.e[0];
                u[1] += s * mode.e[1];
                u[2] += s * mode.e[2];
            }
        }
        u
    }

    /// Symmetric gradient at quadrature node `q`.
    fn symgrad_at(&self, q: usize, a: &[f64]) -> SymMat3 {
        let n = self.n();
        let row = &self.dprof[q * n..(q + 1) * n];
        let mut d = SymMat3::ZERO;
        for ((f, &ar), &dt) in self.sym_factor.iter().zip(a).zip(row) {
            if ar != 0.0 {
                d += f.scale(ar * dt);
            }
        }
        d
    }

    /// Density sampled at the quadrature nodes.
    pub fn density_samples(&self, rho: &DensityField) -> Vec<f64> {
        rho.resample(self.grid.resolution())
    }

    /// `B_ij = ∫ρ ω^i·ω^j dx`.
    ///
    /// Products of two modes reduce to single trigonometric functions at
    /// wavevectors `k_i ± k_j`, so the matrix is built from the discrete
    /// Fourier moments of the sampled density. This is the same grid rule as
    /// summing `ρ ω^i·ω^j` over the nodes directly.
    pub fn assemble_mass_matrix(&self, rho: &DensityField) -> DMatrix<f64> {
        let samples = self.density_samples(rho);
        let moments = FourierMoments::new(
            &samples,
            self.grid.resolution(),
            2 * self.basis.kmax() as i32,
        );
        let modes = self.basis.modes();
        let n = modes.len();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let (mi, mj) = (&modes[i], &modes[j]);
                let ee = mi.e[0] * mj.e[0] + mi.e[1] * mj.e[1] + mi.e[2] * mj.e[2];
                if ee == 0.0 {
                    continue;
                }
                let sum = [mi.k[0] + mj.k[0], mi.k[1] + mj.k[1], mi.k[2] + mj.k[2]];
                let diff = [mi.k[0] - mj.k[0], mi.k[1] - mj.k[1], mi.k[2] - mj.k[2]];
                let (cs, ss) = moments.get(sum);
                let (cd, sd) = moments.get(diff);
                let v = match (mi.parity, mj.parity) {
                    (Parity::Cos, Parity::Cos) => cd + cs,
                    (Parity::Sin, Parity::Sin) => cd - cs,
                    (Parity::Sin, Parity::Cos) => ss + sd,
                    (Parity::Cos, Parity::Sin) => ss - sd,
                };
                b[(i, j)] = ee * v;
                b[(j, i)] = ee * v;
            }
        }
        b
    }

    /// Right-hand side `h(ρ, ū, a)`, with the stress at the nodes and the
    /// dissipation rate at `a` as by-products.
    pub fn assemble_rhs(&self, rho_samples: &[f64], ubar: &[f64], a: &[f64]) -> Result<Rhs> {
        let n = self.n();
        if ubar.len() != n || a.len() != n {
            return Err(Error::invalid(
                "coefficient vectors do not match basis size",
            ));
        }
        let nq = self.grid.num_nodes();
        let mut acc = vec![CompensatedSum::default(); n];
        let mut rate = CompensatedSum::default();
        let mut stress = Vec::with_capacity(nq);
        let modes = self.basis.modes();
        let zero_a = a.iter().all(|&v| v == 0.0);
        let zero_ubar = ubar.iter().all(|&v| v == 0.0);
        for q in 0..nq {
            let drow = &self.dprof[q * n..(q + 1) * n];
            let row = &self.prof[q * n..(q + 1) * n];
            // (ū·∇)u = Σ_r a_r √2 2π T'_r (k_r·ū) e_r
            let mut conv = [0.0; 3];
            if !zero_a && !zero_ubar {
                let ub = self.velocity_at(q, ubar);
                for ((mode, &ar), &dt) in modes.iter().zip(a).zip(drow) {
                    if ar == 0.0 {
                        continue;
                    }
                    let kf = mode.k_f64();
                    let s =
                        SQRT_2 * TWO_PI * ar * dt * (kf[0] * ub[0] + kf[1] * ub[1] + kf[2] * ub[2]);
                    conv[0] += s * mode.e[0];
                    conv[1] += s * mode.e[1];
                    conv[2] += s * mode.e[2];
                }
                let r = rho_samples[q];
                conv = conv.map(|c| c * r);
            }
            let s = if zero_a {
                SymMat3::ZERO
            } else {
                let (s, env) = self
                    .potential
                    .moreau_parts(&self.symgrad_at(q, a), self.alpha)?;
                rate.add(env + self.potential.envelope_conjugate(&s, self.alpha));
                s
            };
            for ((((sum, mode), f), &t), &dt) in acc
                .iter_mut()
                .zip(modes)
                .zip(&self.sym_factor)
                .zip(row)
                .zip(drow)
            {
                let c =
                    SQRT_2 * t * (conv[0] * mode.e[0] + conv[1] * mode.e[1] + conv[2] * mode.e[2]);
                sum.add(-(c + dt * s.ddot(f)));
            }
            stress.push(s);
        }
        let w = self.grid.weight();
        Ok(Rhs {
            h: acc.iter().map(|v| v.total() * w).collect(),
            stress,
            dissipation_rate: rate.total() * w,
        })
    }

    /// Dissipation terms at coefficient vector `a`.
    pub fn dissipation(&self, a: &[f64]) -> Result<DissipationSample> {
        let nq = self.grid.num_nodes();
        let (mut rate, mut work, mut gap) = (
            Vec::with_capacity(nq),
            Vec::with_capacity(nq),
            Vec::with_capacity(nq),
        );
        for q in 0..nq {
            let d = self.symgrad_at(q, a);
            let s = self.potential.moreau_stress(&d, self.alpha)?;
            let env = self.potential.moreau_envelope(&d, self.alpha)?;
            let conj = self.potential.envelope_conjugate(&s, self.alpha);
            let sd = s.ddot(&d);
            rate.push(env + conj);
            work.push(sd);
            gap.push(env + conj - sd);
        }
        Ok(DissipationSample {
            rate: self.grid.integrate_samples(&rate),
            work: self.grid.integrate_samples(&work),
            gap: self.grid.integrate_samples(&gap),
        })
    }

    /// Stress samples `F'_α(Du)` at the nodes.
    pub fn stress_samples(&self, a: &[f64]) -> Result<Vec<SymMat3>> {
        (0..self.grid.num_nodes())
            .map(|q| {
                self.potential
                    .moreau_stress(&self.symgrad_at(q, a), self.alpha)
            })
            .collect()
    }

    /// `½ aᵀ B(ρ) a = ½∫ρ|u|² dx`.
    pub fn kinetic_energy(&self, rho: &DensityField, a: &[f64]) -> f64 {
        let b = self.assemble_mass_matrix(rho);
        let av = DVector::from_column_slice(a);
        0.5 * av.dot(&(&b * &av))
    }

    pub fn velocity_field(&self, a: &[f64], time: f64) -> Result<VelocityField> {
        VelocityField::new(self.basis.clone(), a.to_vec(), time)
    }
}

/// Discrete Fourier moments `∫ρ cos(2π q·x)`, `∫ρ sin(2π q·x)` for all
/// `q ∈ [−K, K]³`, computed axis by axis.
struct FourierMoments {
    k: i32,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl FourierMoments {
    fn new(samples: &[f64], m: usize, k: i32) -> Self {
        let width = (2 * k + 1) as usize;
        // phase[i][j] = e^{2πi (j−K) i/M}
        let phase: Vec<Vec<(f64, f64)>> = (0..m)
            .map(|i| {
                (0..width)
                    .map(|j| {
                        let (s, c) =
                            (TWO_PI * (j as f64 - k as f64) * i as f64 / m as f64).sin_cos();
                        (c, s)
                    })
                    .collect()
            })
            .collect();
        // stage 1: transform along x for every (y, z) line
        let mut s1 = vec![(0.0, 0.0); width * m * m];
        for z in 0..m {
            for y in 0..m {
                let line = &samples[m * (y + m * z)..m * (y + m * z) + m];
                for j in 0..width {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (x, &v) in line.iter().enumerate() {
                        re += v * phase[x][j].0;
                        im += v * phase[x][j].1;
                    }
                    s1[j + width * (y + m * z)] = (re, im);
                }
            }
        }
        // stage 2: along y
        let mut s2 = vec![(0.0, 0.0); width * width * m];
        for z in 0..m {
            for jy in 0..width {
                for jx in 0..width {
                    let (mut re, mut im) = (0.0, 0.0);
                    for y in 0..m {
                        let (a, b) = s1[jx + width * (y + m * z)];
                        let (c, s) = phase[y][jy];
                        re += a * c - b * s;
                        im += a * s + b * c;
                    }
                    s2[jx + width * (jy + width * z)] = (re, im);
                }
            }
        }
        // stage 3: along z
        let w = 1.0 / (m * m * m) as f64;
        let mut re = vec![0.0; width * width * width];
        let mut im = vec![0.0; width * width * width];
        for jz in 0..width {
            for jy in 0..width {
                for jx in 0..width {
                    let (mut r, mut i) = (0.0, 0.0);
                    for z in 0..m {
                        let (a, b) = s2[jx + width * (jy + width * z)];
                        let (c, s) = phase[z][jz];
                        r += a * c - b * s;
                        i += a * s + b * c;
                    }
                    let idx = jx + width * (jy + width * jz);
                    re[idx] = r * w;
                    im[idx] = i * w;
                }
            }
        }
        FourierMoments { k, re, im }
    }

    fn get(&self, q: [i32; 3]) -> (f64, f64) {
        let width = (2 * self.k + 1) as usize;
        let idx = (q[0] + self.k) as usize
            + width * ((q[1] + self.k) as usize + width * (q[2] + self.k) as usize);
        (self.re[idx], self.im[idx])
    }
}

/// Cache of factorized mass matrices keyed by the density samples.
struct MassCache {
    entries: Vec<(Vec<f64>, Cholesky<f64, Dyn>)>,
}

impl MassCache {
    const CAPACITY: usize = 4;

    fn new() -> Self {
        MassCache {
            entries: Vec::new(),
        }
    }

    fn factor(&mut self, sys: &GalerkinSystem, rho: &DensityField) -> Result<Cholesky<f64, Dyn>> {
        if let Some((_, c)) = self
            .entries
            .iter()
            .find(|(s, _)| s.as_slice() == rho.samples())
        {
            return Ok(c.clone());
        }
        let b = sys.assemble_mass_matrix(rho);
        let chol = Cholesky::new(b).ok_or_else(|| {
            Error::numerical(
                "mass matrix is not positive definite; check the quadrature resolution",
            )
        })?;
        if self.entries.len() == Self::CAPACITY {
            self.entries.remove(0);
        }
        self.entries.push((rho.samples().to_vec(), chol.clone()));
        Ok(chol)
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub picard_iterations: usize,
    pub picard_residual: f64,
    /// The step was redone as two half steps after a Picard failure.
    pub halved: bool,
    /// `∫ dissipation rate dt` over the step, by the RK4 weights applied to
    /// the stage rates.
    pub dissipated: f64,
}

/// Output of [`GalerkinSystem::assemble_rhs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub h: Vec<f64>,
    pub stress: Vec<SymMat3>,
    /// `∫ F_α(Du) + (F_α)*(S) dx` at the given coefficients.
    pub dissipation_rate: f64,
}

struct Sweep {
    coeffs: Vec<f64>,
    rho: DensityField,
    stress: Vec<SymMat3>,
    dissipated: f64,
}

/// Owns the precomputed system and mass-matrix cache for one run.
pub struct Stepper {
    sys: GalerkinSystem,
    cache: MassCache,
    picard_tol: f64,
    picard_max: usize,
    /// Picard residual history of the last step.
    pub last_residuals: Vec<f64>,
}

impl Stepper {
    pub fn new(sys: GalerkinSystem, picard_tol: f64, picard_max: usize) -> Self {
        Stepper {
            sys,
            cache: MassCache::new(),
            picard_tol,
            picard_max,
            last_residuals: Vec::new(),
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Ok(Self::new(
            GalerkinSystem::from_config(cfg)?,
            cfg.picard_tol,
            cfg.picard_max,
        ))
    }

    pub fn system(&self) -> &GalerkinSystem {
        &self.sys
    }

    /// Initial state from the descriptors in `cfg`.
    pub fn initial_state(&self, cfg: &SimConfig) -> Result<SolverState> {
        let n = self.sys.n();
        let mut a = match &cfg.u0 {
            InitialVelocity::Zero => vec![0.0; n],
            InitialVelocity::Mode { k, w } => {
                let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
                let w = *w;
                self.sys.project(move |x| {
                    let c = SQRT_2 * (TWO_PI * (kf[0] * x[0] + kf[1] * x[1] + kf[2] * x[2])).cos();
                    w.map(|wi| wi * c)
                })
            }
            InitialVelocity::Random { seed, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        if cfg.u0_perturb != 0.0 {
            let dominant = (0..n)
                .max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()).then(j.cmp(&i)))
                .unwrap_or(0);
            a[dominant] += cfg.u0_perturb;
        }
        let rho = cfg.initial_density()?;
        let stress = self.sys.stress_samples(&a)?;
        Ok(SolverState {
            time: 0.0,
            coeffs: a,
            rho,
            stress,
        })
    }

    fn solve(&mut self, rho: &DensityField, h: Vec<f64>) -> Result<DVector<f64>> {
        let chol = self.cache.factor(&self.sys, rho)?;
        Ok(chol.solve(&DVector::from_vec(h)))
    }

    /// One Picard sweep: transport with the linear coefficient path ending
    /// at `abar`, then RK4 for the coefficients.
    fn sweep(&mut self, state: &SolverState, abar: &[f64], dt: f64) -> Result<Sweep> {
        let t = state.time;
        let path = LinearCoefficientPath::new(
            self.sys.basis.clone(),
            t,
            state.coeffs.clone(),
            t + dt,
            abar.to_vec(),
        )?;
        let rho0 = &state.rho;
        let rho_half = advect_density(rho0, &path, t, 0.5 * dt)?;
        let rho_full = advect_density(rho0, &path, t, dt)?;
        let s0 = self.sys.density_samples(rho0);
        let sh = self.sys.density_samples(&rho_half);
        let s1 = self.sys.density_samples(&rho_full);
        let u0 = path.coeffs_at(t);
        let uh = path.coeffs_at(t + 0.5 * dt);
        let u1 = path.coeffs_at(t + dt);
        let a0 = DVector::from_column_slice(&state.coeffs);

        let r1 = self.sys.assemble_rhs(&s0, &u0, a0.as_slice())?;
        let k1 = self.solve(rho0, r1.h)?;
        let a2 = &a0 + &k1 * (0.5 * dt);
        let r2 = self.sys.assemble_rhs(&sh, &uh, a2.as_slice())?;
        let k2 = self.solve(&rho_half, r2.h)?;
        let a3 = &a0 + &k2 * (0.5 * dt);
        let r3 = self.sys.assemble_rhs(&sh, &uh, a3.as_slice())?;
        let k3 = self.solve(&rho_half, r3.h)?;
        let a4 = &a0 + &k3 * dt;
        let r4 = self.sys.assemble_rhs(&s1, &u1, a4.as_slice())?;
        let k4 = self.solve(&rho_full, r4.h)?;
        let a1 = &a0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if a1.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite coefficients at t={t}"
            )));
        }
        let rates = [
            r1.dissipation_rate,
            r2.dissipation_rate,
            r3.dissipation_rate,
            r4.dissipation_rate,
        ];
        let stress = self.sys.stress_samples(a1.as_slice())?;
        Ok(Sweep {
            coeffs: a1.as_slice().to_vec(),
            rho: rho_full,
            stress,
            dissipated: dt / 6.0 * (rates[0] + 2.0 * rates[1] + 2.0 * rates[2] + rates[3]),
        })
    }

    /// Advance by `dt` with Picard coupling between transport and momentum.
    pub fn step(&mut self, state: &SolverState, dt: f64) -> Result<(SolverState, StepStats)> {
        if !(dt > 0.0) {
            return Err(Error::invalid("step dt must be positive"));
        }
        let mut abar = state.coeffs.clone();
        self.last_residuals.clear();
        let mut residual = f64::INFINITY;
        for it in 1..=self.picard_max {
            let sw = self.sweep(state, &abar, dt)?;
            residual = sw
                .coeffs
                .iter()
                .zip(&abar)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            self.last_residuals.push(residual);
            abar = sw.coeffs;
            if residual < self.picard_tol {
                return Ok((
                    SolverState {
                        time: state.time + dt,
                        coeffs: abar,
                        rho: sw.rho,
                        stress: sw.stress,
                    },
                    StepStats {
                        picard_iterations: it,
                        picard_residual: residual,
                        halved: false,
                        dissipated: sw.dissipated,
                    },
                ));
            }
        }
        Err(Error::StepFailure {
            time: state.time,
            residual,
            iterations: self.picard_max,
        })
    }

    /// `step`, retried once as two half steps on Picard failure.
    pub fn step_with_retry(
        &mut self,
        state: &SolverState,
        dt: f64,
    ) -> Result<(SolverState, StepStats)> {
        match self.step(state, dt) {
            Err(Error::StepFailure { .. }) => {
                let (mid, s1) = self.step(state, 0.5 * dt)?;
                let (mut end, s2) = self.step(&mid, 0.5 * dt)?;
                end.time = state.time + dt;
                Ok((
                    end,
                    StepStats {
                        picard_iterations: s1.picard_iterations + s2.picard_iterations,
                        picard_residual: s1.picard_residual.max(s2.picard_residual),
                        halved: true,
                        dissipated: s1.dissipated + s2.dissipated,
                    },
                ))
            }
            other => other,
        }
    }
}

/// Aggregate statistics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub halvings: usize,
    pub max_picard_iterations: usize,
    pub total_picard_iterations: usize,
    /// Smallest and largest density sample seen along the run.
    pub rho_range: (f64, f64),
    pub mass_initial: f64,
    pub max_mass_drift: f64,
    pub gamma_moment_initial: f64,
    pub max_gamma_drift: f64,
    /// Largest magnitude of the quadrature regularized Fenchel gap.
    pub max_dissipation_gap: f64,
}

impl RunStats {
    pub fn density_bounds_hold(&self, rho_min: f64, rho_max: f64) -> bool {
        self.rho_range.0 >= rho_min && self.rho_range.1 <= rho_max
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Vec<SolverState>,
    pub ledger: EnergyLedger,
    pub stats: RunStats,
}

/// Integrate from 0 to `T`, recording an energy ledger row per step.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    run_with(cfg, |_, _| Ok(()))
}

/// `run` with a per-step callback receiving every accepted state and its
/// step index.
pub fn run_with<F>(cfg: &SimConfig, mut on_state: F) -> Result<RunOutput>
where
    F: FnMut(usize, &SolverState) -> Result<()>,
{
    let mut stepper = Stepper::from_config(cfg)?;
    let state0 = stepper.initial_state(cfg)?;
    let mass0 = state0.rho.mass();
    let gm0 = gamma_moment(&state0.rho, cfg.gamma)?;
    let mut stats = RunStats {
        steps: 0,
        halvings: 0,
        max_picard_iterations: 0,
        total_picard_iterations: 0,
        rho_range: (state0.rho.min(), state0.rho.max()),
        mass_initial: mass0,
        max_mass_drift: 0.0,
        gamma_moment_initial: gm0,
        max_gamma_drift: 0.0,
        max_dissipation_gap: 0.0,
    };
    let mut ledger = EnergyLedger::default();
    stats.max_dissipation_gap = stepper.system().dissipation(&state0.coeffs)?.gap.abs();
    let mut cumulative = 0.0;
    ledger.push(energy_row(
        &state0,
        stepper.system(),
        cfg.gamma,
        cumulative,
        0.0,
    )?);
    on_state(0, &state0)?;
    let mut trajectory = vec![state0];
    for step in 1..=cfg.num_steps() {
        let prev = trajectory.last().expect("nonempty trajectory");
        let (mut next, st) = stepper.step_with_retry(prev, cfg.dt)?;
        next.time = step as f64 * cfg.dt;
        let d1 = stepper.system().dissipation(&next.coeffs)?;
        cumulative += st.dissipated;
        stats.steps += 1;
        stats.halvings += st.halved as usize;
        stats.max_picard_iterations = stats.max_picard_iterations.max(st.picard_iterations);
        stats.total_picard_iterations += st.picard_iterations;
        stats.rho_range = (
            stats.rho_range.0.min(next.rho.min()),
            stats.rho_range.1.max(next.rho.max()),
        );
        stats.max_mass_drift = stats.max_mass_drift.max((next.rho.mass() - mass0).abs());
        stats.max_gamma_drift = stats
            .max_gamma_drift
            .max((gamma_moment(&next.rho, cfg.gamma)? - gm0).abs());
        stats.max_dissipation_gap = stats.max_dissipation_gap.max(d1.gap.abs());
        let row = energy_row(&next, stepper.system(), cfg.gamma, cumulative, 0.0)?;
        ledger.push(row);
        on_state(step, &next)?;
        trajectory.push(next);
    }
    Ok(RunOutput {
        trajectory,
        ledger,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(kmax: u32, qm: usize, pot: ConvexPotential, alpha: f64) -> GalerkinSystem {
        GalerkinSystem::new(
            Arc::new(Basis::build(kmax).unwrap()),
            QuadratureGrid::new(qm, kmax, 3).unwrap(),
            pot,
            Alpha::new(alpha).unwrap(),
        )
    }

    fn wavy(m: usize) -> DensityField {
        DensityField::from_fn(m, 0.5, 2.0, |x| {
            1.0 + 0.3 * (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).cos()
                + 0.15 * (TWO_PI * 2.0 * x[2]).sin()
        })
        .unwrap()
    }

    /// Direct nodal quadrature of ρ ω^i·ω^j, independent of the Fourier route.
    fn mass_matrix_oracle(sys: &GalerkinSystem, rho: &DensityField) -> DMatrix<f64> {
        let samples = sys.density_samples(rho);
        let n = sys.basis.len();
        let mut b = DMatrix::zeros(n, n);
        for (q, x) in sys.grid.nodes().enumerate() {
            let vals: Vec<[f64; 3]> = sys.basis.modes().iter().map(|m| m.eval(x)).collect();
            for i in 0..n {
                for j in 0..n {
                    let d =
                        vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1] + vals[i][2] * vals[j][2];
                    b[(i, j)] += samples[q] * d * sys.grid.weight();
                }
            }
        }
        b
    }

    #[test]
    fn uniform_density_gives_scaled_identity() {
        let sys = system(1, 16, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let rho = DensityField::constant(8, 1.7, 0.5, 2.0).unwrap();
        let b = sys.assemble_mass_matrix(&rho);
        let diff = &b - DMatrix::<f64>::identity(52, 52) * 1.7;
        assert!(diff.amax() < 1e-13, "{}", diff.amax());
    }

    #[test]
    fn mass_matrix_matches_nodal_quadrature() {
        let sys = system(1, 8, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let rho = wavy(12);
        let b = sys.assemble_mass_matrix(&rho);
        let oracle = mass_matrix_oracle(&sys, &rho);
        assert!((&b - &oracle).amax() < 1e-12, "{}", (&b - &oracle).amax());
        assert!((&b - b.transpose()).amax() < 1e-12);
    }

    #[test]
    fn mass_matrix_spectrum_within_density_bounds() {
        let sys = system(1, 16, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let rho = wavy(16);
        let b = sys.assemble_mass_matrix(&rho);
        let eig = b.symmetric_eigenvalues();
        let samples = sys.density_samples(&rho);
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(0.0, f64::max);
        assert!(eig.min() >= lo - 1e-10, "{} < {lo}", eig.min());
        assert!(eig.max() <= hi + 1e-10, "{} > {hi}", eig.max());
    }

    #[test]
    fn mass_matrix_is_linear_in_density() {
        let sys = system(1, 8, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let r1 = wavy(8);
        let r2 = DensityField::from_fn(8, 0.1, 2.0, |x| 0.5 + 0.2 * (TWO_PI * x[2]).cos()).unwrap();
        let sum = r1.add(&r2).unwrap();
        let lhs = sys.assemble_mass_matrix(&sum);
        let rhs = sys.assemble_mass_matrix(&r1) + sys.assemble_mass_matrix(&r2);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn rhs_vanishes_at_rest() {
        let sys = system(1, 16, ConvexPotential::bingham(1.0, 1.0).unwrap(), 1e-2);
        let rho = wavy(8);
        let z = vec![0.0; 52];
        let r = sys
            .assemble_rhs(&sys.density_samples(&rho), &z, &z)
            .unwrap();
        assert!(r.h.iter().all(|&v| v == 0.0));
        assert!(r.stress.iter().all(|t| *t == SymMat3::ZERO));
        assert_eq!(r.dissipation_rate, 0.0);
    }

    #[test]
    fn single_mode_rhs_is_pure_stress() {
        // u = a ω with k=(1,0,0), e=(0,1,0): (u·∇)u = 0, so h = −(ν'/(1+αν')) 4π² a along that mode
        let nu = 0.1;
        let alpha = 1e-4;
        let sys = system(1, 16, ConvexPotential::newtonian(nu).unwrap(), alpha);
        let idx = sys.basis.find([1, 0, 0], 1, Parity::Cos).unwrap();
        let mut a = vec![0.0; 52];
        a[idx] = 0.7;
        let ones = vec![1.0; sys.grid.num_nodes()];
        let h = sys.assemble_rhs(&ones, &a, &a).unwrap().h;
        let nu_p = 2.0 * nu;
        let expected = -nu_p / (1.0 + alpha * nu_p) * 0.5 * 4.0 * PI * PI * 0.7;
        for (j, &hj) in h.iter().enumerate() {
            if j == idx {
                assert!((hj - expected).abs() < 1e-12, "{hj} vs {expected}");
            } else {
                assert!(hj.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_rate_matches_dissipation() {
        let sys = system(1, 16, ConvexPotential::bingham(0.4, 0.3).unwrap(), 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..52)
            .map(|_| 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rho = wavy(8);
        let r = sys
            .assemble_rhs(&sys.density_samples(&rho), &a, &a)
            .unwrap();
        let d = sys.dissipation(&a).unwrap();
        assert!(
            (r.dissipation_rate - d.rate).abs() <= 1e-13 * d.rate,
            "{} vs {}",
            r.dissipation_rate,
            d.rate
        );
        assert_eq!(r.stress, sys.stress_samples(&a).unwrap());
    }

    #[test]
    fn rhs_energy_sign_for_newtonian() {
        // h·a = −2ν∫|Du|² up to the α bias; convection drops out for ρ ≡ 1
        let nu = 0.3;
        let sys = system(1, 16, ConvexPotential::newtonian(nu).unwrap(), 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..52)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ones = vec![1.0; sys.grid.num_nodes()];
        let h = sys.assemble_rhs(&ones, &a, &a).unwrap().h;
        let ha: f64 = h.iter().zip(&a).map(|(x, y)| x * y).sum();
        let du2 = sys.grid.integrate_samples(
            &(0..sys.grid.num_nodes())
                .map(|q| sys.symgrad_at(q, &a).norm_sq())
                .collect::<Vec<_>>(),
        );
        let expected = -2.0 * nu * du2;
        assert!(ha < 0.0);
        assert!(
            (ha - expected).abs() < 1e-6 * expected.abs(),
            "{ha} vs {expected}"
        );
    }

    #[test]
    fn symgrad_matches_field_evaluation() {
        let sys = system(1, 8, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let a: Vec<f64> = (0..52)
            .map(|i| ((i * 37) % 17) as f64 / 17.0 - 0.5)
            .collect();
        let field = sys.velocity_field(&a, 0.0).unwrap();
        for q in [0, 77, 300, 511] {
            let x = sys.grid.node(q);
            let d0 = sys.symgrad_at(q, &a);
            let d1 = crate::basis::eval_symgrad(&field, x).unwrap();
            assert!((d0 - d1).norm() < 1e-11);
            let u0 = sys.velocity_at(q, &a);
            let u1 = crate::basis::eval_velocity(&field, x).unwrap();
            for d in 0..3 {
                assert!((u0[d] - u1[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_recovers_coefficients() {
        let sys = system(1, 16, ConvexPotential::newtonian(1.0).unwrap(), 1e-3);
        let a: Vec<f64> = (0..52).map(|i| (i as f64 * 0.37).sin()).collect();
        let field = sys.velocity_field(&a, 0.0).unwrap();
        let p = sys.project(|x| crate::basis::eval_velocity(&field, x).unwrap());
        for (x, y) in a.iter().zip(&p) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
