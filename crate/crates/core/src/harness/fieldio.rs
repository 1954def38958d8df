//! Binary field files.
//!
//! Layout: the 8-byte magic `TRHEOFLD`, three little-endian `u32` grid
//! dimensions, a little-endian `u32` component count, then the values as
//! little-endian `f64`. Components are stored one after another, each as a
//! full grid with x varying fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::MatrixMeasure;
use crate::tensor::SymMat3;
use crate::transport::DensityField;

pub const MAGIC: &[u8; 8] = b"TRHEOFLD";
const HEADER_LEN: usize = 8 + 4 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub dims: [u32; 3],
    pub components: u32,
    pub values: Vec<f64>,
}

impl FieldData {
    pub fn new(dims: [u32; 3], components: u32, values: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().map(|&d| d as usize).product::<usize>() * components as usize;
        if values.len() != expected {
            return Err(Error::Format(format!(
                "field with dims {dims:?} and {components} components needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(FieldData {
            dims,
            components,
            values,
        })
    }

    fn cube(&self) -> Result<usize> {
        let [a, b, c] = self.dims;
        if a != b || b != c {
            return Err(Error::Format(format!(
                "expected a cubic grid, got {:?}",
                self.dims
            )));
        }
        Ok(a as usize)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.components.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "file too short for header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let word = |i: usize| {
            u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes"))
        };
        let dims = [word(0), word(1), word(2)];
        let components = word(3);
        let count = dims
            .iter()
            .try_fold(components as u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != count * 8 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header declares {} values",
                payload.len(),
                count
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(FieldData {
            dims,
            components,
            values,
        })
    }
}

pub fn write_field(path: &Path, field: &FieldData) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&field.to_bytes())?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldData> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    FieldData::from_bytes(&bytes)
}

impl From<&DensityField> for FieldData {
    fn from(rho: &DensityField) -> Self {
        let m = rho.resolution() as u32;
        FieldData {
            dims: [m; 3],
            components: 1,
            values: rho.samples().to_vec(),
        }
    }
}

impl From<&MatrixMeasure> for FieldData {
    fn from(mu: &MatrixMeasure) -> Self {
        let c = mu.cells() as u32;
        let n = mu.atoms().len();
        let mut values = vec![0.0; 6 * n];
        for (i, a) in mu.atoms().iter().enumerate() {
            for (k, v) in a.to_array().into_iter().enumerate() {
                values[k * n + i] = v;
            }
        }
        FieldData {
            dims: [c; 3],
            components: 6,
            values,
        }
    }
}

impl FieldData {
    pub fn into_density(self, rho_min: f64, rho_max: f64) -> Result<DensityField> {
        if self.components != 1 {
            return Err(Error::Format(format!(
                "density needs 1 component, got {}",
                self.components
            )));
        }
        let m = self.cube()?;
        DensityField::new(m, self.values, rho_min, rho_max)
    }

    pub fn into_measure(self) -> Result<MatrixMeasure> {
        if self.components != 6 {
            return Err(Error::Format(format!(
                "measure needs 6 components, got {}",
                self.components
            )));
        }
        let c = self.cube()?;
        let n = c * c * c;
        let atoms = (0..n)
            .map(|i| SymMat3::from_array(std::array::from_fn(|k| self.values[k * n + i])))
            .collect();
        MatrixMeasure::new(c, atoms)
    }
}
