//! Uniform-grid quadrature on the unit torus.
//!
//! The rectangle rule on `M³` equispaced nodes integrates every
//! trigonometric polynomial whose frequencies stay below `M` exactly. A grid
//! is built for a declared basis cutoff and factor count and refuses
//! resolutions that would alias those products.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    m: usize,
}

impl QuadratureGrid {
    /// Grid with `m` nodes per axis, valid for products of `factors` basis
    /// functions with cutoff `kmax`: requires `m > 2 · kmax · factors`.
    pub fn new(m: usize, kmax: u32, factors: u32) -> Result<Self> {
        let bound = 2 * kmax as usize * factors as usize;
        if m <= bound {
            return Err(Error::invalid(format!(
                "quadrature resolution {m} must exceed 2*kmax*factors = {bound}"
            )));
        }
        Ok(QuadratureGrid { m })
    }

    /// Smallest admissible resolution for the given cutoff and factor count.
    pub fn minimal(kmax: u32, factors: u32) -> Self {
        QuadratureGrid {
            m: 2 * kmax as usize * factors as usize + 1,
        }
    }

    /// Grid with no exactness declaration, for integrands that are not
    /// trigonometric polynomials.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("quadrature resolution must be positive"));
        }
        Ok(QuadratureGrid { m })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn num_nodes(&self) -> usize {
        self.m * self.m * self.m
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.num_nodes() as f64
    }

    /// Node coordinates for flat index `q`, x fastest.
    pub fn node(&self, q: usize) -> [f64; 3] {
        let m = self.m;
        let h = 1.0 / m as f64;
        [
            (q % m) as f64 * h,
            ((q / m) % m) as f64 * h,
            (q / (m * m)) as f64 * h,
        ]
    }

    pub fn nodes(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.num_nodes()).map(|q| self.node(q))
    }

    /// `∫_{T³} f dx ≈ (1/M³) Σ f(x_q)`.
    pub fn integrate<F: Fn([f64; 3]) -> f64>(&self, integrand: F) -> Result<f64> {
        let vals: Vec<f64> = self.nodes().map(&integrand).collect();
        if let Some(q) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite integrand value at node {:?}",
                self.node(q)
            )));
        }
        Ok(pairwise_sum(&vals) * self.weight())
    }

    /// Weighted sum of precomputed node values.
    pub fn integrate_samples(&self, vals: &[f64]) -> f64 {
        debug_assert_eq!(vals.len(), self.num_nodes());
        pairwise_sum(vals) * self.weight()
    }
}

/// Pairwise summation with a fixed split order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Running sum with Neumaier compensation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let mut acc = CompensatedSum::default();
        for v in [1.0, 1e100, 1.0, -1e100] {
            acc.add(v);
        }
        assert_eq!(acc.total(), 2.0);
    }

    #[test]
    fn constant_integrates_to_one() {
        let g = QuadratureGrid::new(8, 1, 2).unwrap();
        assert_eq!(g.integrate(|_| 1.0).unwrap(), 1.0);
    }

    #[test]
    fn mean_zero_mode() {
        let g = QuadratureGrid::new(8, 1, 2).unwrap();
        assert!(g.integrate(|x| (2.0 * PI * x[0]).cos()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn squared_cosine_averages_to_one() {
        let g = QuadratureGrid::new(9, 2, 2).unwrap();
        for k in [[1.0, 0.0, 0.0], [1.0, -2.0, 1.0], [2.0, 2.0, 2.0]] {
            let v = g
                .integrate(|x| {
                    2.0 * (2.0 * PI * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]))
                        .cos()
                        .powi(2)
                })
                .unwrap();
            assert!((v - 1.0).abs() < 1e-14, "k={k:?} v={v}");
        }
    }

    #[test]
    fn aliasing_resolution_rejected() {
        assert!(QuadratureGrid::new(6, 1, 3).is_err());
        assert!(QuadratureGrid::new(7, 1, 3).is_ok());
        assert_eq!(QuadratureGrid::minimal(2, 3).resolution(), 13);
    }

    #[test]
    fn non_finite_integrand_is_error() {
        let g = QuadratureGrid::uniform(4).unwrap();
        assert!(g
            .integrate(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 })
            .is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
