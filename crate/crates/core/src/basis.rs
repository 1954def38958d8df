//! Divergence-free trigonometric basis of L²(T³; R³) on the unit torus and
//! velocity fields expanded in it.
//!
//! Each mode is `√2 · e · cos(2π k·x)` or `√2 · e · sin(2π k·x)` with
//! `e · k = 0`, `|e| = 1`. Wavevectors are identified up to sign; the
//! canonical representative has its first nonzero component positive.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{cross3, dot3, norm3, SymMat3};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivFreeMode {
    pub k: [i32; 3],
    /// 1 or 2.
    pub polarization: u8,
    pub parity: Parity,
    /// Unit polarization vector, orthogonal to `k`.
    pub e: [f64; 3],
}

impl DivFreeMode {
    pub fn k_f64(&self) -> [f64; 3] {
        [self.k[0] as f64, self.k[1] as f64, self.k[2] as f64]
    }

    pub fn k_norm_sq(&self) -> i32 {
        self.k.iter().map(|c| c * c).sum()
    }

    /// Scalar profile `trig(2π k·x)` and its derivative with respect to the
    /// phase argument.
    fn profile(&self, x: [f64; 3]) -> (f64, f64) {
        let theta = TWO_PI * dot3(self.k_f64(), x);
        let (s, c) = theta.sin_cos();
        match self.parity {
            Parity::Cos => (c, -s),
            Parity::Sin => (s, c),
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let (t, _) = self.profile(x);
        self.e.map(|ei| SQRT_2 * ei * t)
    }

    /// Full gradient `∂_b ω_a` (row `a`, column `b`).
    pub fn grad(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        let (_, dt) = self.profile(x);
        let k = self.k_f64();
        let mut g = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                g[a][b] = SQRT_2 * TWO_PI * self.e[a] * k[b] * dt;
            }
        }
        g
    }

    /// Analytic divergence; identically zero because `e · k = 0`.
    pub fn divergence(&self, x: [f64; 3]) -> f64 {
        let g = self.grad(x);
        g[0][0] + g[1][1] + g[2][2]
    }

    /// The constant tensor `√2 · 2π · sym(e ⊗ k)`; the symmetric gradient of
    /// the mode is this times the profile derivative.
    pub fn symgrad_factor(&self) -> SymMat3 {
        SymMat3::sym_outer(self.e, self.k_f64()).scale(SQRT_2 * TWO_PI)
    }
}

/// Canonical sign representative: first nonzero component positive.
fn is_canonical(k: [i32; 3]) -> bool {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) => c > 0,
        None => false,
    }
}

/// Orthonormal polarization pair for `k`.
fn polarizations(k: [i32; 3]) -> ([f64; 3], [f64; 3]) {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let kn = norm3(kf);
    let khat = kf.map(|c| c / kn);
    // axis least aligned with k, ties to the lowest index
    let mut axis = 0;
    for d in 1..3 {
        if k[d].abs() < k[axis].abs() {
            axis = d;
        }
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let proj = dot3(a, khat);
    let v = [
        a[0] - proj * khat[0],
        a[1] - proj * khat[1],
        a[2] - proj * khat[2],
    ];
    let vn = norm3(v);
    let e1 = v.map(|c| c / vn);
    let e2 = cross3(khat, e1);
    let e2n = norm3(e2);
    (e1, e2.map(|c| c / e2n))
}

/// An ordered divergence-free basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    kmax: u32,
    modes: Vec<DivFreeMode>,
}

impl Basis {
    /// All modes with wavevector max-norm ≤ `kmax`, ordered by
    /// `(|k|², k, polarization, parity)`.
    pub fn build(kmax: u32) -> Result<Basis> {
        Ok(Basis {
            kmax,
            modes: build_divfree_basis(kmax)?,
        })
    }

    pub fn kmax(&self) -> u32 {
        self.kmax
    }

    pub fn modes(&self) -> &[DivFreeMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Index of the mode with the given wavevector, polarization and parity.
    /// The wavevector may be given with either sign; for `sin` parity a sign
    /// flip negates the mode, which callers must account for themselves.
    pub fn find(&self, k: [i32; 3], polarization: u8, parity: Parity) -> Option<usize> {
        let kc = if is_canonical(k) { k } else { k.map(|c| -c) };
        self.modes
            .iter()
            .position(|m| m.k == kc && m.polarization == polarization && m.parity == parity)
    }

    /// Per-mode profile `(trig, dtrig)` at `x`, written into `out`.
    ///
    /// Uses per-axis complex phase tables so that only 3·(kmax+1) sin/cos
    /// evaluations are needed per point regardless of the basis size.
    pub fn profiles_into(&self, x: [f64; 3], out: &mut Vec<(f64, f64)>) {
        let tab = PhaseTable::new(x, self.kmax);
        out.clear();
        out.extend(self.modes.iter().map(|mode| {
            let (c, s) = tab.phase(mode.k);
            match mode.parity {
                Parity::Cos => (c, -s),
                Parity::Sin => (s, c),
            }
        }));
    }

    /// Collapse a coefficient vector onto its distinct wavevectors.
    pub fn amplitudes(&self, coeffs: &[f64]) -> Result<SpectralAmplitudes> {
        if coeffs.len() != self.modes.len() {
            return Err(Error::invalid(
                "coefficient vector does not match basis size",
            ));
        }
        let mut amp = SpectralAmplitudes {
            kmax: self.kmax,
            ks: Vec::new(),
            cos: Vec::new(),
            sin: Vec::new(),
        };
        for (mode, &a) in self.modes.iter().zip(coeffs) {
            let slot = match amp.ks.iter().rposition(|k| *k == mode.k) {
                Some(i) => i,
                None => {
                    amp.ks.push(mode.k);
                    amp.cos.push([0.0; 3]);
                    amp.sin.push([0.0; 3]);
                    amp.ks.len() - 1
                }
            };
            let target = match mode.parity {
                Parity::Cos => &mut amp.cos[slot],
                Parity::Sin => &mut amp.sin[slot],
            };
            for d in 0..3 {
                target[d] += SQRT_2 * a * mode.e[d];
            }
        }
        Ok(amp)
    }
}

/// `e^{2πi m x_d}` for `|m| ≤ kmax` on each axis.
struct PhaseTable {
    km: i32,
    tab: [[(f64, f64); 15]; 3],
}

impl PhaseTable {
    fn new(x: [f64; 3], kmax: u32) -> Self {
        let km = kmax as i32;
        let mut tab = [[(0.0, 0.0); 15]; 3];
        for d in 0..3 {
            let xd = x[d] - x[d].floor();
            for m in 0..=km {
                let (s, c) = (TWO_PI * m as f64 * xd).sin_cos();
                tab[d][(km + m) as usize] = (c, s);
                tab[d][(km - m) as usize] = (c, -s);
            }
        }
        PhaseTable { km, tab }
    }

    /// `(cos, sin)` of `2π k·x`.
    fn phase(&self, k: [i32; 3]) -> (f64, f64) {
        let km = self.km;
        let (c0, s0) = self.tab[0][(km + k[0]) as usize];
        let (c1, s1) = self.tab[1][(km + k[1]) as usize];
        let (c2, s2) = self.tab[2][(km + k[2]) as usize];
        let (c01, s01) = (c0 * c1 - s0 * s1, c0 * s1 + s0 * c1);
        (c01 * c2 - s01 * s2, c01 * s2 + s01 * c2)
    }
}

/// A Galerkin velocity regrouped by wavevector:
/// `u(x) = Σ_k C_k cos(2πk·x) + S_k sin(2πk·x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitudes {
    kmax: u32,
    ks: Vec<[i32; 3]>,
    cos: Vec<[f64; 3]>,
    sin: Vec<[f64; 3]>,
}

impl SpectralAmplitudes {
    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        self.eval_blend(None, 0.0, x)
    }

    /// `(1 − θ)·self + θ·other` evaluated at `x`; both must come from the
    /// same basis.
    pub fn eval_blend(
        &self,
        other: Option<&SpectralAmplitudes>,
        theta: f64,
        x: [f64; 3],
    ) -> [f64; 3] {
        let tab = PhaseTable::new(x, self.kmax);
        let mut u = [0.0; 3];
        for (i, &k) in self.ks.iter().enumerate() {
            let (c, s) = tab.phase(k);
            let (mut ca, mut sa) = (self.cos[i], self.sin[i]);
            if let Some(o) = other {
                for d in 0..3 {
                    ca[d] += theta * (o.cos[i][d] - ca[d]);
                    sa[d] += theta * (o.sin[i][d] - sa[d]);
                }
            }
            for d in 0..3 {
                u[d] += ca[d] * c + sa[d] * s;
            }
        }
        u
    }
}

/// Enumerate the divergence-free modes with `max |k_i| ≤ kmax`.
pub fn build_divfree_basis(kmax: u32) -> Result<Vec<DivFreeMode>> {
    if kmax < 1 {
        return Err(Error::invalid("kmax must be at least 1"));
    }
    if kmax > 7 {
        return Err(Error::invalid("kmax above 7 is not supported"));
    }
    let km = kmax as i32;
    let mut ks = Vec::new();
    for a in -km..=km {
        for b in -km..=km {
            for c in -km..=km {
                let k = [a, b, c];
                if is_canonical(k) {
                    ks.push(k);
                }
            }
        }
    }
    ks.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1] + k[2] * k[2], *k));
    let mut modes = Vec::with_capacity(ks.len() * 4);
    for k in ks {
        let (e1, e2) = polarizations(k);
        for (pol, e) in [(1u8, e1), (2u8, e2)] {
            for parity in [Parity::Cos, Parity::Sin] {
                modes.push(DivFreeMode {
                    k,
                    polarization: pol,
                    parity,
                    e,
                });
            }
        }
    }
    Ok(modes)
}

/// `u(x) = Σ_r a_r ω^r(x)` at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub basis: Arc<Basis>,
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl VelocityField {
    pub fn new(basis: Arc<Basis>, coeffs: Vec<f64>, time: f64) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "coefficient count {} does not match basis size {}",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(VelocityField {
            basis,
            coeffs,
            time,
        })
    }

    pub fn zero(basis: Arc<Basis>, time: f64) -> Self {
        let n = basis.len();
        VelocityField {
            basis,
            coeffs: vec![0.0; n],
            time,
        }
    }

    fn check(&self) -> Result<()> {
        if self.coeffs.len() != self.basis.len() {
            return Err(Error::invalid(format!(
                "coefficient count {} does not match basis size {}",
                self.coeffs.len(),
                self.basis.len()
            )));
        }
        Ok(())
    }

    /// Euclidean norm of the coefficients, equal to the L² norm of the field.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Evaluate `Σ_r a_r ω^r(x)`.
pub fn eval_velocity(field: &VelocityField, x: [f64; 3]) -> Result<[f64; 3]> {
    field.check()?;
    let mut prof = Vec::with_capacity(field.basis.len());
    field.basis.profiles_into(x, &mut prof);
    let mut u = [0.0; 3];
    for ((mode, &a), &(t, _)) in field.basis.modes.iter().zip(&field.coeffs).zip(&prof) {
        if a == 0.0 {
            continue;
        }
        let s = SQRT_2 * a * t;
        for d in 0..3 {
            u[d] += s * mode.e[d];
        }
    }
    Ok(u)
}

/// Full velocity gradient `∂_b u_a` at `x`.
pub fn eval_grad(field: &VelocityField, x: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    field.check()?;
    let mut prof = Vec::with_capacity(field.basis.len());
    field.basis.profiles_into(x, &mut prof);
    let mut g = [[0.0; 3]; 3];
    for ((mode, &a), &(_, dt)) in field.basis.modes.iter().zip(&field.coeffs).zip(&prof) {
        if a == 0.0 {
            continue;
        }
        let s = SQRT_2 * TWO_PI * a * dt;
        let k = mode.k_f64();
        for (ra, row) in g.iter_mut().enumerate() {
            for (cb, entry) in row.iter_mut().enumerate() {
                *entry += s * mode.e[ra] * k[cb];
            }
        }
    }
    Ok(g)
}

/// Symmetric gradient `Du = ½(∇u + ∇uᵀ)` at `x`, computed analytically.
pub fn eval_symgrad(field: &VelocityField, x: [f64; 3]) -> Result<SymMat3> {
    Ok(SymMat3::sym_part(&eval_grad(field, x)?))
}
