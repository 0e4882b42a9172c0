//! Core data types: observations, endmembers, abundances and surface models.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridDims;

/// Feasibility tolerance for constrained abundances.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Reflectance of the flat shadow endmember.
pub const SHADOW_REFLECTANCE: f64 = 0.01;

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} contains non-finite values")))
    }
}

/// Observed reflectances `Y` (`L x N`), one column per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    dims: GridDims,
    data: DMatrix<f64>,
}

impl SpectralCube {
    pub fn new(dims: GridDims, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::validation("cube must have at least one band"));
        }
        if data.ncols() != dims.len() {
            return Err(Error::validation(format!(
                "cube has {} pixel columns, grid has {}",
                data.ncols(),
                dims.len()
            )));
        }
        check_finite(&data, "cube")?;
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }
}

/// Endmember signatures `E` (`L x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberLibrary {
    data: DMatrix<f64>,
    names: Vec<String>,
}

impl EndmemberLibrary {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let names = (0..data.ncols()).map(|m| format!("em{m}")).collect();
        Self::with_names(data, names)
    }

    pub fn with_names(data: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::validation("endmember matrix must be non-empty"));
        }
        if names.len() != data.ncols() {
            return Err(Error::validation(format!(
                "{} names for {} endmembers",
                names.len(),
                data.ncols()
            )));
        }
        check_finite(&data, "endmember matrix")?;
        if let Some(m) = (0..data.ncols()).find(|&m| data.column(m).iter().all(|&v| v == 0.0)) {
            return Err(Error::validation(format!("endmember {m} is all zeros")));
        }
        Ok(Self { data, names })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Flat spectrum used as a shadow endmember.
pub fn shadow_spectrum(bands: usize) -> Vec<f64> {
    vec![SHADOW_REFLECTANCE; bands]
}

/// Abundances `A` (`M x N`).
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceImage {
    dims: GridDims,
    data: DMatrix<f64>,
    constrained: bool,
}

impl AbundanceImage {
    /// Wraps abundances that must satisfy nonnegativity and sum-to-one within
    /// [`FEASIBILITY_TOL`].
    pub fn constrained(dims: GridDims, data: DMatrix<f64>) -> Result<Self> {
        let image = Self::unconstrained(dims, data)?;
        if let Some(violation) = feasibility_violation(&image.data) {
            return Err(Error::validation(format!(
                "abundances violate the simplex constraints: {violation}"
            )));
        }
        Ok(Self {
            constrained: true,
            ..image
        })
    }

    pub fn unconstrained(dims: GridDims, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != dims.len() || data.nrows() == 0 {
            return Err(Error::validation(format!(
                "abundance matrix is {}x{}, expected M x {}",
                data.nrows(),
                data.ncols(),
                dims.len()
            )));
        }
        check_finite(&data, "abundances")?;
        Ok(Self {
            dims,
            data,
            constrained: false,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    /// Abundance plane of endmember `m` in row-major pixel order.
    pub fn plane(&self, m: usize) -> Vec<f64> {
        self.data.row(m).iter().copied().collect()
    }
}

/// Describes the first simplex violation larger than [`FEASIBILITY_TOL`].
pub fn feasibility_violation(a: &DMatrix<f64>) -> Option<String> {
    for (i, col) in a.column_iter().enumerate() {
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -FEASIBILITY_TOL {
            return Some(format!("pixel {i} has entry {min}"));
        }
        let sum: f64 = col.iter().sum();
        if (sum - 1.0).abs() > FEASIBILITY_TOL {
            return Some(format!("pixel {i} sums to {sum}"));
        }
    }
    None
}

/// Digital surface model heights on the pixel grid, shifted so the minimum is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceModel {
    dims: GridDims,
    heights: Vec<f64>,
}

impl SurfaceModel {
    /// Subtracts the minimum height, so every stored height is `>= 0`.
    pub fn from_heights(dims: GridDims, mut heights: Vec<f64>) -> Result<Self> {
        if heights.len() != dims.len() {
            return Err(Error::validation(format!(
                "{} heights for {} pixels",
                heights.len(),
                dims.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::validation("DSM contains non-finite heights"));
        }
        let min = heights.iter().copied().fold(f64::INFINITY, f64::min);
        for h in &mut heights {
            *h -= min;
        }
        Ok(Self { dims, heights })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_shape_checked() {
        let dims = GridDims::new(2, 2).unwrap();
        assert!(SpectralCube::new(dims, DMatrix::zeros(3, 4)).is_ok());
        assert!(SpectralCube::new(dims, DMatrix::zeros(3, 5)).is_err());
        let mut bad = DMatrix::zeros(3, 4);
        bad[(1, 1)] = f64::NAN;
        assert!(SpectralCube::new(dims, bad).is_err());
    }

    #[test]
    fn zero_endmember_rejected() {
        let e = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.2, 0.0]);
        assert!(EndmemberLibrary::new(e).is_err());
    }

    #[test]
    fn constrained_abundances_checked() {
        let dims = GridDims::new(1, 2).unwrap();
        let ok = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.7, 0.0]);
        assert!(AbundanceImage::constrained(dims, ok).unwrap().is_constrained());
        let neg = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, 1.1, 0.0]);
        assert!(AbundanceImage::constrained(dims, neg.clone()).is_err());
        assert!(!AbundanceImage::unconstrained(dims, neg).unwrap().is_constrained());
        let off = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.6, 0.0]);
        assert!(AbundanceImage::constrained(dims, off).is_err());
    }

    #[test]
    fn dsm_shifted_to_zero() {
        let dims = GridDims::new(1, 3).unwrap();
        let dsm = SurfaceModel::from_heights(dims, vec![-2.0, 3.0, 1.0]).unwrap();
        assert_eq!(dsm.heights(), &[0.0, 5.0, 3.0]);
    }
}
