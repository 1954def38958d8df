//! Atomic symmetric-matrix-valued measures on a cell partition of the torus.
//!
//! Total variation uses the entrywise ℓ¹ convention: `|μ|(T³) = Σ_ij |μ_ij|(T³)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::tensor::{norm3, SymMat3};
use crate::transport::{DensityField, VelocitySource};

/// Default constant in `|μ|(T³) ≤ C · trace μ(T³)`.
pub const DEFAULT_LEMMA_CONSTANT: f64 = 5.0;
/// Default relative tolerance of [`psd_test`].
pub const DEFAULT_PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMeasure {
    cells: usize,
    atoms: Vec<SymMat3>,
}

impl MatrixMeasure {
    /// `atoms` are indexed with the x cell fastest.
    pub fn new(cells: usize, atoms: Vec<SymMat3>) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("measure needs at least one cell per axis"));
        }
        if atoms.len() != cells.pow(3) {
            return Err(Error::invalid(format!(
                "expected {} atoms for {cells}³ cells, got {}",
                cells.pow(3),
                atoms.len()
            )));
        }
        if let Some(i) = atoms.iter().position(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("atom {i} is not finite")));
        }
        Ok(MatrixMeasure { cells, atoms })
    }

    pub fn zero(cells: usize) -> Result<Self> {
        Self::new(cells, vec![SymMat3::ZERO; cells.pow(3)])
    }

    /// A measure with one nonzero atom.
    pub fn single_atom(cells: usize, cell: usize, weight: SymMat3) -> Result<Self> {
        let mut mu = Self::zero(cells)?;
        if cell >= mu.atoms.len() {
            return Err(Error::invalid(format!("cell {cell} out of range")));
        }
        if !weight.is_finite() {
            return Err(Error::invalid("atom is not finite"));
        }
        mu.atoms[cell] = weight;
        Ok(mu)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn atoms(&self) -> &[SymMat3] {
        &self.atoms
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells * (j + self.cells * k)
    }

    /// Measure of the whole torus.
    pub fn total(&self) -> SymMat3 {
        let mut comps = [
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        ];
        for a in &self.atoms {
            for (c, v) in comps.iter_mut().zip(a.to_array()) {
                c.push(v);
            }
        }
        SymMat3::from_array(comps.map(|c| pairwise_sum(&c)))
    }

    /// Scalar component measure `μ_ij`, one value per cell.
    pub fn component(&self, i: usize, j: usize) -> Vec<f64> {
        self.atoms.iter().map(|a| a.get(i, j)).collect()
    }

    /// Keep only the cells where `mask` is true.
    pub fn restrict(&self, mask: &[bool]) -> Result<MatrixMeasure> {
        if mask.len() != self.atoms.len() {
            return Err(Error::invalid("mask length does not match the cell count"));
        }
        let atoms = self
            .atoms
            .iter()
            .zip(mask)
            .map(|(a, &keep)| if keep { *a } else { SymMat3::ZERO })
            .collect();
        Ok(MatrixMeasure {
            cells: self.cells,
            atoms,
        })
    }

    /// Largest Frobenius norm among the atoms.
    pub fn max_atom_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

pub fn total_variation(mu: &MatrixMeasure) -> f64 {
    mu.atoms.iter().map(|a| a.entry_l1()).sum()
}

pub fn trace_total(mu: &MatrixMeasure) -> f64 {
    mu.atoms.iter().map(|a| a.trace()).sum()
}

/// `½ trace μ(T³)`.
pub fn dissipation_defect(mu: &MatrixMeasure) -> f64 {
    0.5 * trace_total(mu)
}

/// Jordan decomposition of an atomic scalar measure into two mutually
/// singular nonnegative parts.
#[derive(Debug, Clone, PartialEq)]
pub struct HahnParts {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl HahnParts {
    pub fn positive_total(&self) -> f64 {
        self.positive.iter().sum()
    }

    pub fn negative_total(&self) -> f64 {
        self.negative.iter().sum()
    }

    pub fn variation(&self) -> f64 {
        self.positive_total() + self.negative_total()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.positive
            .iter()
            .zip(&self.negative)
            .map(|(p, n)| p - n)
            .collect()
    }
}

pub fn hahn_split(component: &[f64]) -> HahnParts {
    HahnParts {
        positive: component
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect(),
        negative: component
            .iter()
            .map(|&v| if v < 0.0 { -v } else { 0.0 })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub pass: bool,
    /// Largest `−Σ φ ξᵀWξ` seen; zero or negative means no violation.
    pub worst_violation: f64,
    pub worst_direction: [f64; 3],
    pub worst_weight: usize,
}

/// 26 lattice directions `{−1,0,1}³ \ {0}` normalized, plus `random`
/// Gaussian directions normalized.
pub fn default_directions(random: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut dirs = Vec::with_capacity(26 + random);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    let v = [i as f64, j as f64, k as f64];
                    let n = norm3(v);
                    dirs.push(v.map(|c| c / n));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while dirs.len() < 26 + random {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = norm3(v);
        if n > 1e-8 {
            dirs.push(v.map(|c| c / n));
        }
    }
    dirs
}

/// The constant weight followed by one indicator per cell.
pub fn default_weights(cells: usize) -> Vec<Vec<f64>> {
    let n = cells.pow(3);
    let mut w = vec![vec![1.0; n]];
    for c in 0..n {
        let mut ind = vec![0.0; n];
        ind[c] = 1.0;
        w.push(ind);
    }
    w
}

/// Test `Σ_cells φ ξᵀWξ ≥ −tol·(max atom norm)·Σφ` for every supplied pair.
pub fn psd_test(
    mu: &MatrixMeasure,
    directions: &[[f64; 3]],
    weights: &[Vec<f64>],
    tol: f64,
) -> Result<PsdReport> {
    if directions.is_empty() {
        return Err(Error::invalid("psd_test needs at least one direction"));
    }
    let n = mu.atoms.len();
    if let Some(w) = weights
        .iter()
        .find(|w| w.len() != n || w.iter().any(|&v| !(v >= 0.0)))
    {
        return Err(Error::invalid(format!(
            "trial weights must be {n} nonnegative values, got {} entries",
            w.len()
        )));
    }
    let scale = mu.max_atom_norm();
    let mut report = PsdReport {
        pass: true,
        worst_violation: f64::NEG_INFINITY,
        worst_direction: directions[0],
        worst_weight: 0,
    };
    for &xi in directions {
        let q: Vec<f64> = mu.atoms.iter().map(|a| a.quad_form(xi)).collect();
        for (wi, phi) in weights.iter().enumerate() {
            let val: f64 = phi.iter().zip(&q).map(|(p, v)| p * v).sum();
            let mass: f64 = phi.iter().sum();
            let violation = -val;
            if violation > report.worst_violation {
                report.worst_violation = violation;
                report.worst_direction = xi;
                report.worst_weight = wi;
            }
            if violation > tol * scale * mass {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

/// Default trial set: lattice plus 100 random directions and the constant
/// plus per-cell indicator weights.
pub fn psd_test_default(mu: &MatrixMeasure, seed: u64) -> Result<PsdReport> {
    psd_test(
        mu,
        &default_directions(100, seed),
        &default_weights(mu.cells),
        DEFAULT_PSD_TOL,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalBound {
    pub i: usize,
    pub j: usize,
    /// `|μ_ij|(T³)`.
    pub variation: f64,
    /// `μ_ii(T³) + μ_jj(T³)`.
    pub bound: f64,
}

impl OffDiagonalBound {
    pub fn holds(&self) -> bool {
        self.variation <= self.bound * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub off_diagonal: Vec<OffDiagonalBound>,
    pub total_variation: f64,
    pub trace: f64,
    /// `total_variation / trace`, zero for the zero measure.
    pub ratio: f64,
    pub constant: f64,
    pub pass: bool,
}

/// Verify the componentwise inequalities `|μ_ij| ≤ μ_ii + μ_jj` and the
/// aggregate bound `|μ|(T³) ≤ C · trace μ(T³)` for a PSD measure.
pub fn lemma_check(mu: &MatrixMeasure, constant: f64) -> Result<LemmaReport> {
    let scale = mu.max_atom_norm();
    if let Some(i) = mu
        .atoms
        .iter()
        .position(|a| a.min_eigenvalue() < -DEFAULT_PSD_TOL * scale)
    {
        return Err(Error::invalid(format!(
            "atom {i} is not positive semidefinite"
        )));
    }
    let diag: Vec<f64> = (0..3).map(|i| mu.component(i, i).iter().sum()).collect();
    let off_diagonal: Vec<OffDiagonalBound> = [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .map(|(i, j)| OffDiagonalBound {
            i,
            j,
            variation: hahn_split(&mu.component(i, j)).variation(),
            bound: diag[i] + diag[j],
        })
        .collect();
    let tv = total_variation(mu);
    let trace = trace_total(mu);
    let ratio = if trace > 0.0 { tv / trace } else { 0.0 };
    let pass = off_diagonal.iter().all(|b| b.holds()) && ratio <= constant;
    Ok(LemmaReport {
        off_diagonal,
        total_variation: tv,
        trace,
        ratio,
        constant,
        pass,
    })
}

/// Cell atoms of `ρ (u_n⊗u_n − u⊗u)` by midpoint sampling on a
/// `sub³` lattice inside each of the `cells³` cells.
pub fn concentration_defect<A, B>(
    rho: &DensityField,
    u_n: &A,
    u_limit: &B,
    t: f64,
    cells: usize,
    sub: usize,
) -> Result<MatrixMeasure>
where
    A: VelocitySource + ?Sized,
    B: VelocitySource + ?Sized,
{
    if cells == 0 || sub == 0 {
        return Err(Error::invalid("cells and subsampling must be positive"));
    }
    let n = cells * sub;
    let h = 1.0 / n as f64;
    let per_cell = (sub * sub * sub) as f64;
    let vol = 1.0 / (cells * cells * cells) as f64;
    let mut atoms = vec![SymMat3::ZERO; cells.pow(3)];
    for cz in 0..cells {
        for cy in 0..cells {
            for cx in 0..cells {
                let mut comps: [Vec<f64>; 6] =
                    std::array::from_fn(|_| Vec::with_capacity(sub.pow(3)));
                for sz in 0..sub {
                    for sy in 0..sub {
                        for sx in 0..sub {
                            let x = [
                                ((cx * sub + sx) as f64 + 0.5) * h,
                                ((cy * sub + sy) as f64 + 0.5) * h,
                                ((cz * sub + sz) as f64 + 0.5) * h,
                            ];
                            let r = rho.interpolate(x);
                            let un = u_n.velocity(t, x);
                            let ul = u_limit.velocity(t, x);
                            let v = (SymMat3::outer(un) - SymMat3::outer(ul)).scale(r);
                            for (c, x) in comps.iter_mut().zip(v.to_array()) {
                                c.push(x);
                            }
                        }
                    }
                }
                let atom =
                    SymMat3::from_array(comps.map(|c| pairwise_sum(&c))).scale(vol / per_cell);
                if !atom.is_finite() {
                    return Err(Error::numerical(format!(
                        "non-finite defect atom in cell ({cx},{cy},{cz})"
                    )));
                }
                atoms[cx + cells * (cy + cells * cz)] = atom;
            }
        }
    }
    MatrixMeasure::new(cells, atoms)
}
