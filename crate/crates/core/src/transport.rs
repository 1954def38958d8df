//! Density transport `∂ₜρ + u·∇ρ = 0` by backward characteristics.
//!
//! Every new sample is a trilinear interpolant of old samples, i.e. a
//! convex combination, so the range of the initial density is preserved
//! exactly. Mass and higher moments are conserved only up to interpolation
//! error and are monitored rather than enforced.

use std::sync::Arc;

use crate::basis::{Basis, SpectralAmplitudes, VelocityField};
use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

/// Grid samples of the density on `M³` nodes of `[0,1)³`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    m: usize,
    data: Vec<f64>,
    rho_min: f64,
    rho_max: f64,
}

impl DensityField {
    pub fn new(m: usize, data: Vec<f64>, rho_min: f64, rho_max: f64) -> Result<Self> {
        if m == 0 || data.len() != m * m * m {
            return Err(Error::invalid(format!(
                "density grid of resolution {m} needs {} samples, got {}",
                m * m * m,
                data.len()
            )));
        }
        if !(rho_min > 0.0 && rho_min <= rho_max && rho_max.is_finite()) {
            return Err(Error::invalid(format!(
                "density bounds must satisfy 0 < rho_min <= rho_max < inf, got [{rho_min}, {rho_max}]"
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !(v.is_finite() && **v >= rho_min && **v <= rho_max))
        {
            return Err(Error::invalid(format!(
                "density sample {v} outside bounds [{rho_min}, {rho_max}]"
            )));
        }
        Ok(DensityField {
            m,
            data,
            rho_min,
            rho_max,
        })
    }

    pub fn constant(m: usize, value: f64, rho_min: f64, rho_max: f64) -> Result<Self> {
        Self::new(m, vec![value; m * m * m], rho_min, rho_max)
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(
        m: usize,
        rho_min: f64,
        rho_max: f64,
        f: F,
    ) -> Result<Self> {
        let h = 1.0 / m as f64;
        let data = (0..m * m * m)
            .map(|q| {
                f([
                    (q % m) as f64 * h,
                    ((q / m) % m) as f64 * h,
                    (q / (m * m)) as f64 * h,
                ])
            })
            .collect();
        Self::new(m, data, rho_min, rho_max)
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    pub fn node(&self, q: usize) -> [f64; 3] {
        let m = self.m;
        let h = 1.0 / m as f64;
        [
            (q % m) as f64 * h,
            ((q / m) % m) as f64 * h,
            (q / (m * m)) as f64 * h,
        ]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.data.iter().all(|&v| v == self.data[0])
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[i + self.m * (j + self.m * k)]
    }

    /// Periodic trilinear interpolation. The result always lies between the
    /// smallest and largest of the eight surrounding samples.
    pub fn interpolate(&self, x: [f64; 3]) -> f64 {
        let m = self.m;
        let mut idx = [[0usize; 2]; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = x[d].rem_euclid(1.0) * m as f64;
            let i0 = (s.floor() as usize).min(m - 1);
            frac[d] = (s - i0 as f64).clamp(0.0, 1.0);
            idx[d] = [i0, (i0 + 1) % m];
        }
        let [ix, iy, iz] = idx;
        let c00 = lerp(
            self.at(ix[0], iy[0], iz[0]),
            self.at(ix[1], iy[0], iz[0]),
            frac[0],
        );
        let c10 = lerp(
            self.at(ix[0], iy[1], iz[0]),
            self.at(ix[1], iy[1], iz[0]),
            frac[0],
        );
        let c01 = lerp(
            self.at(ix[0], iy[0], iz[1]),
            self.at(ix[1], iy[0], iz[1]),
            frac[0],
        );
        let c11 = lerp(
            self.at(ix[0], iy[1], iz[1]),
            self.at(ix[1], iy[1], iz[1]),
            frac[0],
        );
        let c0 = lerp(c00, c10, frac[1]);
        let c1 = lerp(c01, c11, frac[1]);
        lerp(c0, c1, frac[2])
    }

    /// Samples interpolated onto another uniform grid of resolution `m`.
    pub fn resample(&self, m: usize) -> Vec<f64> {
        if m == self.m {
            return self.data.clone();
        }
        let h = 1.0 / m as f64;
        (0..m * m * m)
            .map(|q| {
                self.interpolate([
                    (q % m) as f64 * h,
                    ((q / m) % m) as f64 * h,
                    (q / (m * m)) as f64 * h,
                ])
            })
            .collect()
    }

    /// `∫ρ dx` by the grid rule.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// Pointwise sum; bounds are added as well.
    pub fn add(&self, other: &DensityField) -> Result<DensityField> {
        if self.m != other.m {
            return Err(Error::invalid("density grids differ in resolution"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        DensityField::new(
            self.m,
            data,
            self.rho_min + other.rho_min,
            self.rho_max + other.rho_max,
        )
    }
}

/// `a + t(b − a)`, clamped into `[min(a,b), max(a,b)]` so rounding can
/// never leave the interval; exact when `a == b`.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if a == b {
        return a;
    }
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

/// A velocity field that may depend on time.
pub trait VelocitySource {
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3];
}

/// Spatially uniform, steady velocity `u ≡ w`.
#[derive(Debug, Clone, Copy)]
pub struct UniformVelocity(pub [f64; 3]);

impl VelocitySource for UniformVelocity {
    fn velocity(&self, _t: f64, _x: [f64; 3]) -> [f64; 3] {
        self.0
    }
}

/// Steady Galerkin field.
impl VelocitySource for VelocityField {
    fn velocity(&self, _t: f64, x: [f64; 3]) -> [f64; 3] {
        crate::basis::eval_velocity(self, x).expect("velocity field with consistent size")
    }
}

impl<F: Fn(f64, [f64; 3]) -> [f64; 3]> VelocitySource for F {
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self(t, x)
    }
}

/// Galerkin velocity whose coefficients vary linearly in time between two
/// stored levels `(t0, a0)` and `(t1, a1)`.
#[derive(Debug, Clone)]
pub struct LinearCoefficientPath {
    t0: f64,
    t1: f64,
    a0: Vec<f64>,
    a1: Vec<f64>,
    amp0: SpectralAmplitudes,
    amp1: SpectralAmplitudes,
}

impl LinearCoefficientPath {
    pub fn new(basis: Arc<Basis>, t0: f64, a0: Vec<f64>, t1: f64, a1: Vec<f64>) -> Result<Self> {
        if a0.len() != basis.len() || a1.len() != basis.len() {
            return Err(Error::invalid("coefficient path does not match basis size"));
        }
        if !(t1 > t0) {
            return Err(Error::invalid("coefficient path needs t1 > t0"));
        }
        let amp0 = basis.amplitudes(&a0)?;
        let amp1 = basis.amplitudes(&a1)?;
        Ok(LinearCoefficientPath {
            t0,
            t1,
            a0,
            a1,
            amp0,
            amp1,
        })
    }

    pub fn coeffs_at(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / (self.t1 - self.t0);
        self.a0
            .iter()
            .zip(&self.a1)
            .map(|(a, b)| (1.0 - th) * a + th * b)
            .collect()
    }
}

impl VelocitySource for LinearCoefficientPath {
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let th = (t - self.t0) / (self.t1 - self.t0);
        self.amp0.eval_blend(Some(&self.amp1), th, x)
    }
}

fn wrap(x: [f64; 3]) -> [f64; 3] {
    x.map(|c| {
        let w = c.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        if w >= 1.0 {
            0.0
        } else {
            w
        }
    })
}

fn finite3(v: [f64; 3]) -> Result<[f64; 3]> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::numerical(format!("non-finite velocity {v:?}")))
    }
}

/// Foot `X(t − dt)` of the characteristic through `(t, x)`, by classical
/// RK4 integrated backward, wrapped into `[0,1)³`.
pub fn trace_characteristic<V: VelocitySource + ?Sized>(
    x: [f64; 3],
    velocity: &V,
    t: f64,
    dt: f64,
) -> Result<[f64; 3]> {
    if !(dt > 0.0) {
        return Err(Error::invalid("characteristic step dt must be positive"));
    }
    let shift = |base: [f64; 3], k: [f64; 3], h: f64| {
        [base[0] - h * k[0], base[1] - h * k[1], base[2] - h * k[2]]
    };
    let k1 = finite3(velocity.velocity(t, x))?;
    let k2 = finite3(velocity.velocity(t - 0.5 * dt, shift(x, k1, 0.5 * dt)))?;
    let k3 = finite3(velocity.velocity(t - 0.5 * dt, shift(x, k2, 0.5 * dt)))?;
    let k4 = finite3(velocity.velocity(t - dt, shift(x, k3, dt)))?;
    let y: [f64; 3] =
        std::array::from_fn(|d| x[d] - dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]));
    Ok(wrap(y))
}

/// Advance the density from time `t` to `t + dt`.
pub fn advect_density<V: VelocitySource + ?Sized>(
    rho: &DensityField,
    velocity: &V,
    t: f64,
    dt: f64,
) -> Result<DensityField> {
    if !(dt > 0.0) {
        return Err(Error::invalid("advection step dt must be positive"));
    }
    if rho.is_constant() {
        return Ok(rho.clone());
    }
    let n = rho.data.len();
    let mut data = Vec::with_capacity(n);
    for q in 0..n {
        let foot = trace_characteristic(rho.node(q), velocity, t + dt, dt)?;
        data.push(rho.interpolate(foot));
    }
    Ok(DensityField {
        m: rho.m,
        data,
        rho_min: rho.rho_min,
        rho_max: rho.rho_max,
    })
}

/// `∫ρ^γ dx` by the grid rule.
pub fn gamma_moment(rho: &DensityField, gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::invalid(format!("gamma must exceed 1, got {gamma}")));
    }
    let vals: Vec<f64> = rho.data.iter().map(|r| r.powf(gamma)).collect();
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn smooth(m: usize) -> DensityField {
        DensityField::from_fn(m, 0.5, 2.0, |x| {
            1.0 + 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
                + 0.1 * (2.0 * PI * x[2]).cos()
        })
        .unwrap()
    }

    #[test]
    fn bounds_enforced_at_construction() {
        assert!(DensityField::constant(4, 3.0, 0.5, 2.0).is_err());
        assert!(DensityField::constant(4, 1.0, 0.0, 2.0).is_err());
        assert!(DensityField::new(4, vec![1.0; 10], 0.5, 2.0).is_err());
    }

    #[test]
    fn zero_velocity_foot_is_identity() {
        let x = [0.3, 0.7, 0.1];
        let y = trace_characteristic(x, &UniformVelocity([0.0; 3]), 1.0, 0.1).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn uniform_velocity_foot_is_exact() {
        let w = [0.3, -0.2, 1.7];
        let x = [0.1, 0.05, 0.9];
        let dt = 0.25;
        let y = trace_characteristic(x, &UniformVelocity(w), 0.0, dt).unwrap();
        for d in 0..3 {
            let expected = (x[d] - w[d] * dt).rem_euclid(1.0);
            assert!((y[d] - expected).abs() < 1e-15, "{y:?}");
        }
    }

    #[test]
    fn non_finite_velocity_is_numerical_failure() {
        let v = |_t: f64, _x: [f64; 3]| [f64::NAN, 0.0, 0.0];
        assert!(matches!(
            trace_characteristic([0.0; 3], &v, 0.0, 0.1),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn constant_density_stays_exactly_constant() {
        let rho = DensityField::constant(8, 1.3, 0.5, 2.0).unwrap();
        let v = |_t: f64, x: [f64; 3]| [(2.0 * PI * x[1]).sin(), 0.0, 0.0];
        let out = advect_density(&rho, &v, 0.0, 0.05).unwrap();
        assert_eq!(out, rho);
        // the interpolant of a constant is exact without the shortcut too
        assert_eq!(rho.interpolate([0.123, 0.456, 0.789]), 1.3);
    }

    #[test]
    fn zero_velocity_preserves_samples() {
        let rho = smooth(8);
        let out = advect_density(&rho, &UniformVelocity([0.0; 3]), 0.0, 0.1).unwrap();
        assert_eq!(out.samples(), rho.samples());
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let rho = smooth(8);
        for q in [0, 17, 200, 511] {
            assert_eq!(rho.interpolate(rho.node(q)), rho.samples()[q]);
        }
    }

    #[test]
    fn gamma_moment_values() {
        let one = DensityField::constant(4, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(gamma_moment(&one, 1.7).unwrap(), 1.0);
        let two = DensityField::constant(4, 2.0, 0.5, 2.0).unwrap();
        assert_eq!(gamma_moment(&two, 2.0).unwrap(), 4.0);
        assert!(gamma_moment(&two, 1.0).is_err());
    }

    #[test]
    fn max_principle_under_shear() {
        let rho = smooth(16);
        let (lo, hi) = (rho.min(), rho.max());
        let v = |_t: f64, x: [f64; 3]| {
            [
                0.0,
                0.8 * (2.0 * PI * x[0]).cos(),
                0.3 * (2.0 * PI * x[1]).sin(),
            ]
        };
        let mut cur = rho;
        for s in 0..10 {
            cur = advect_density(&cur, &v, s as f64 * 0.01, 0.01).unwrap();
            assert!(cur.min() >= lo && cur.max() <= hi);
        }
    }

    #[test]
    fn reversibility_probe() {
        let m = 32;
        let rho = smooth(m);
        let w = [0.37, -0.21, 0.13];
        let dt = 0.01;
        let fwd = advect_density(&rho, &UniformVelocity(w), 0.0, dt).unwrap();
        let back = advect_density(&fwd, &UniformVelocity(w.map(|c| -c)), dt, dt).unwrap();
        let exact = |x: [f64; 3]| {
            1.0 + 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
                + 0.1 * (2.0 * PI * x[2]).cos()
        };
        let one_step: f64 = (0..fwd.samples().len())
            .map(|q| {
                let x = fwd.node(q);
                (fwd.samples()[q] - exact([x[0] - w[0] * dt, x[1] - w[1] * dt, x[2] - w[2] * dt]))
                    .abs()
            })
            .fold(0.0, f64::max);
        let round_trip = back
            .samples()
            .iter()
            .zip(rho.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(round_trip <= 2.0 * one_step, "{round_trip} vs {one_step}");
    }

    #[test]
    fn rk4_foot_converges_at_fifth_order_per_step() {
        // steady shear: exact foot is known only numerically, compare with
        // a 100-substep reference
        let basis = Arc::new(Basis::build(1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..basis.len())
            .map(|_| rng.random_range(-0.3..0.3))
            .collect();
        let field = VelocityField::new(basis, a, 0.0).unwrap();
        let x = [0.21, 0.63, 0.44];
        let reference = |dt: f64| {
            let mut y = x;
            let h = dt / 100.0;
            for i in 0..100 {
                y = trace_characteristic(y, &field, -(i as f64) * h, h).unwrap();
            }
            y
        };
        let err = |dt: f64| {
            let y = trace_characteristic(x, &field, 0.0, dt).unwrap();
            let r = reference(dt);
            (0..3)
                .map(|d| {
                    let diff = (y[d] - r[d]).rem_euclid(1.0);
                    diff.min(1.0 - diff)
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.1), err(0.05));
        let order = (e1 / e2).log2();
        assert!(order > 4.5, "local order {order} ({e1:e}, {e2:e})");
    }
}
