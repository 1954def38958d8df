//! Convex dissipation potentials, their Fenchel conjugates and Moreau–Yosida
//! regularization.
//!
//! Both model families depend on the strain rate only through its Frobenius
//! norm, so the proximal point shares the direction of its argument and the
//! prox reduces to a scalar equation in the radius.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::SymMat3;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// A convex potential `F` on symmetric tensors with `F(0) = 0`, full domain
/// and superlinear growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexPotential {
    /// `F(D) = (ν/p)|D|^p`.
    PowerLaw { nu: f64, p: f64 },
    /// `F(D) = τ₀|D| + (μ/2)|D|²`.
    Bingham { tau0: f64, mu: f64 },
}

/// Moreau–Yosida parameter `α > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Alpha(alpha))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Result of the radial prox solve: proximal radius and stress magnitude.
#[derive(Debug, Clone, Copy)]
struct Radial {
    prox: f64,
    stress: f64,
}

impl ConvexPotential {
    pub fn power_law(nu: f64, p: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!(
                "power-law nu must be positive, got {nu}"
            )));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::invalid(format!(
                "power-law exponent must exceed 1, got {p}"
            )));
        }
        Ok(ConvexPotential::PowerLaw { nu, p })
    }

    /// `μ > 0` is what makes the Bingham potential superlinear.
    pub fn bingham(tau0: f64, mu: f64) -> Result<Self> {
        if !(tau0.is_finite() && tau0 >= 0.0) {
            return Err(Error::invalid(format!(
                "bingham tau0 must be nonnegative, got {tau0}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(format!(
                "bingham mu must be positive, got {mu}"
            )));
        }
        Ok(ConvexPotential::Bingham { tau0, mu })
    }

    /// Newtonian fluid `F(D) = ν|D|²`, so that the stress is `2νD`.
    pub fn newtonian(nu: f64) -> Result<Self> {
        Self::power_law(2.0 * nu, 2.0)
    }

    /// Viscosity `ν` when the potential is `ν|D|²`.
    pub fn newtonian_viscosity(&self) -> Option<f64> {
        match *self {
            ConvexPotential::PowerLaw { nu, p: 2.0 } => Some(0.5 * nu),
            _ => None,
        }
    }

    fn radial_potential(&self, r: f64) -> f64 {
        match *self {
            ConvexPotential::PowerLaw { nu, p } => {
                if r == 0.0 {
                    0.0
                } else {
                    nu / p * rpow(r, p)
                }
            }
            ConvexPotential::Bingham { tau0, mu } => tau0 * r + 0.5 * mu * r * r,
        }
    }

    fn radial_conjugate(&self, r: f64) -> f64 {
        match *self {
            ConvexPotential::PowerLaw { nu, p } => {
                if r == 0.0 {
                    return 0.0;
                }
                let q = p / (p - 1.0);
                nu.powf(1.0 - q) / q * rpow(r, q)
            }
            ConvexPotential::Bingham { tau0, mu } => {
                let excess = (r - tau0).max(0.0);
                excess * excess / (2.0 * mu)
            }
        }
    }

    /// `F(D)`.
    pub fn eval_potential(&self, d: &SymMat3) -> f64 {
        self.radial_potential(d.norm())
    }

    /// `F*(S) = sup_D (S:D − F(D))` in closed form.
    pub fn eval_conjugate(&self, s: &SymMat3) -> f64 {
        self.radial_conjugate(s.norm())
    }

    /// Minimizer of `(1/(2α))(s − d)² + F(s)` over `s ≥ 0` with the
    /// corresponding stress magnitude `(d − s)/α`, computed without
    /// cancellation.
    fn radial_prox(&self, d: f64, alpha: Alpha) -> Result<Radial> {
        let a = alpha.get();
        if d == 0.0 {
            return Ok(Radial {
                prox: 0.0,
                stress: 0.0,
            });
        }
        match *self {
            ConvexPotential::PowerLaw { nu, p: 2.0 } => {
                let s = d / (1.0 + a * nu);
                Ok(Radial {
                    prox: s,
                    stress: nu * s,
                })
            }
            ConvexPotential::PowerLaw { nu, p } => {
                let s = solve_power_radius(d, a * nu, p)?;
                Ok(Radial {
                    prox: s,
                    stress: nu * rpow(s, p - 1.0),
                })
            }
            ConvexPotential::Bingham { tau0, mu } => {
                if d <= a * tau0 {
                    Ok(Radial {
                        prox: 0.0,
                        stress: d / a,
                    })
                } else {
                    let s = (d - a * tau0) / (1.0 + a * mu);
                    Ok(Radial {
                        prox: s,
                        stress: (tau0 + mu * d) / (1.0 + a * mu),
                    })
                }
            }
        }
    }

    /// Proximal point `argmin_S (1/(2α))|S − D|² + F(S)`.
    pub fn prox(&self, d: &SymMat3, alpha: Alpha) -> Result<SymMat3> {
        let dn = d.norm();
        let r = self.radial_prox(dn, alpha)?;
        Ok(if dn == 0.0 {
            SymMat3::ZERO
        } else {
            d.scale(r.prox / dn)
        })
    }

    /// Moreau envelope `F_α(D) = (1/(2α))|prox − D|² + F(prox)`.
    pub fn moreau_envelope(&self, d: &SymMat3, alpha: Alpha) -> Result<f64> {
        let dn = d.norm();
        let r = self.radial_prox(dn, alpha)?;
        let gap = dn - r.prox;
        Ok(gap * gap / (2.0 * alpha.get()) + self.radial_potential(r.prox))
    }

    /// Regularized stress `F'_α(D) = (D − prox(D))/α`.
    pub fn moreau_stress(&self, d: &SymMat3, alpha: Alpha) -> Result<SymMat3> {
        let dn = d.norm();
        if dn == 0.0 {
            return Ok(SymMat3::ZERO);
        }
        let r = self.radial_prox(dn, alpha)?;
        Ok(d.scale(r.stress / dn))
    }

    /// Regularized stress and envelope from a single prox evaluation.
    pub fn moreau_parts(&self, d: &SymMat3, alpha: Alpha) -> Result<(SymMat3, f64)> {
        let dn = d.norm();
        let r = self.radial_prox(dn, alpha)?;
        let gap = dn - r.prox;
        let env = gap * gap / (2.0 * alpha.get()) + self.radial_potential(r.prox);
        let stress = if dn == 0.0 {
            SymMat3::ZERO
        } else {
            d.scale(r.stress / dn)
        };
        Ok((stress, env))
    }

    /// `(F_α)*(S) = F*(S) + (α/2)|S|²`.
    pub fn envelope_conjugate(&self, s: &SymMat3, alpha: Alpha) -> f64 {
        self.eval_conjugate(s) + 0.5 * alpha.get() * s.norm_sq()
    }

    /// Fenchel–Young gap `F(D) + F*(S) − S:D`; nonnegative, zero exactly on
    /// the graph of the subdifferential.
    pub fn fenchel_gap(&self, s: &SymMat3, d: &SymMat3) -> f64 {
        self.eval_potential(d) + self.eval_conjugate(s) - s.ddot(d)
    }

    /// Fenchel–Young gap for the pair `(F_α, (F_α)*)` at a given stress.
    pub fn regularized_gap(&self, s: &SymMat3, d: &SymMat3, alpha: Alpha) -> Result<f64> {
        Ok(self.moreau_envelope(d, alpha)? + self.envelope_conjugate(s, alpha) - s.ddot(d))
    }
}

/// `x^e` for `x ≥ 0`, exact-arithmetic shortcuts for integer and
/// half-integer exponents.
fn rpow(x: f64, e: f64) -> f64 {
    let twice = 2.0 * e;
    if twice == twice.round() && twice.abs() <= 16.0 {
        let n = twice as i32;
        if n % 2 == 0 {
            x.powi(n / 2)
        } else {
            x.sqrt().powi(n)
        }
    } else {
        x.powf(e)
    }
}

/// Solve `s − d + c·s^{p−1} = 0` for `s ∈ [0, d]` by bracketed Newton.
fn solve_power_radius(d: f64, c: f64, p: f64) -> Result<f64> {
    let g = |s: f64| s - d + c * rpow(s, p - 1.0);
    let (mut lo, mut hi) = (0.0_f64, d);
    let mut s = d / (1.0 + c * rpow(d, p - 2.0));
    if !(s > lo && s < hi) {
        s = 0.5 * d;
    }
    for _ in 0..NEWTON_MAX_ITER {
        let t = rpow(s, p - 2.0);
        let gs = s - d + c * t * s;
        if gs == 0.0 {
            return Ok(s);
        }
        if gs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let dg = 1.0 + c * (p - 1.0) * t;
        let mut next = s - gs / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 4.0 * f64::EPSILON * next {
            return Ok(next);
        }
        s = next;
    }
    let residual = g(s).abs();
    if residual <= NEWTON_TOL * d {
        Ok(s)
    } else {
        Err(Error::numerical(format!(
            "prox radial newton did not converge: residual {residual:e}"
        )))
    }
}

/// Uniformly random direction in the six-dimensional space of symmetric
/// tensors with the Frobenius inner product.
pub fn random_unit_symmat<R: Rng>(rng: &mut R) -> SymMat3 {
    loop {
        let c: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        // off-diagonal entries appear twice in the Frobenius norm
        let m = SymMat3::new(
            c[0],
            c[1],
            c[2],
            c[3] / std::f64::consts::SQRT_2,
            c[4] / std::f64::consts::SQRT_2,
            c[5] / std::f64::consts::SQRT_2,
        );
        let n = m.norm();
        if n > 1e-12 {
            return m.scale(1.0 / n);
        }
    }
}

/// Brute-force lower bound for `sup_{|D| ≤ radius} (S:D − f(D))`.
///
/// The sample is a radial lattice (`radius·i/R`, endpoints included) along a
/// set of directions: the direction of `S` plus random unit directions. The
/// lattice contains `radius·S/|S|`, so the result is at least
/// `radius·|S| − max f over the sample`.
pub fn conjugate_oracle<F>(f: F, s: &SymMat3, radius: f64, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&SymMat3) -> Result<f64>,
{
    if !(radius > 0.0) {
        return Err(Error::invalid("oracle radius must be positive"));
    }
    if samples < 1000 {
        return Err(Error::invalid("oracle needs at least 1000 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radial = (samples as f64).sqrt().ceil() as usize;
    let ndirs = samples.div_ceil(radial);
    let sn = s.norm();
    let mut best = -f(&SymMat3::ZERO)?;
    for j in 0..ndirs {
        let dir = if j == 0 && sn > 0.0 {
            s.scale(1.0 / sn)
        } else {
            random_unit_symmat(&mut rng)
        };
        for i in 1..=radial {
            let d = dir.scale(radius * i as f64 / radial as f64);
            let v = s.ddot(&d) - f(&d)?;
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}
