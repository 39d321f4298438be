//! Backscatter far-field measurement matrices.
//!
//! An experiment illuminates the medium from every direction of a
//! [`WaveConfig`](crate::waves::WaveConfig) and records the far-field pattern
//! back along each direction: entry `(i, j)` is the pattern at observation
//! `x̂ = −θ_i` for incidence `θ_j`. Three kinds of matrix occur — the
//! background medium alone, the medium plus one probe ball, and the medium
//! plus a probe pair.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::geom::Vec3;

/// Which measurement a [`FarFieldMatrix`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Background medium only.
    Background,
    /// Background plus a single probe ball.
    SingleInclusion,
    /// Background plus a probe pair.
    DoubleInclusion,
}

impl std::fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            MatrixKind::Background => "background",
            MatrixKind::SingleInclusion => "single_inclusion",
            MatrixKind::DoubleInclusion => "double_inclusion",
        };
        f.write_str(name)
    }
}

/// An `N₀ × N₀` complex backscatter matrix with its direction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldMatrix {
    pub kind: MatrixKind,
    pub kappa: f64,
    pub directions: Vec<Vec3>,
    /// Row-major entries; `values[i * n + j]` observes along `−θ_i` under
    /// incidence `θ_j`.
    pub values: Vec<Complex64>,
}

impl FarFieldMatrix {
    /// Validate dimensions and assemble.
    pub fn new(
        kind: MatrixKind,
        kappa: f64,
        directions: Vec<Vec3>,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        let n = directions.len();
        if values.len() != n * n {
            return Err(ScatError::InvalidConfig(format!(
                "far-field matrix needs {}×{} = {} entries, got {}",
                n,
                n,
                n * n,
                values.len()
            )));
        }
        Ok(FarFieldMatrix { kind, kappa, directions, values })
    }

    /// All-zero matrix of the given kind over `directions`.
    pub fn zeros(kind: MatrixKind, kappa: f64, directions: Vec<Vec3>) -> Self {
        let n = directions.len();
        FarFieldMatrix {
            kind,
            kappa,
            directions,
            values: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.directions.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let n = self.directions.len();
        self.values[i * n + j] = v;
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Entrywise difference `self − other`; both matrices must share the
    /// direction set.
    pub fn sub(&self, other: &FarFieldMatrix) -> Result<Vec<Complex64>> {
        if self.directions != other.directions {
            return Err(ScatError::InvalidConfig(
                "cannot subtract far-field matrices over different direction sets".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn directions() -> Vec<Vec3> {
        vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)]
    }

    #[test]
    fn test_indexing_is_row_major() {
        let mut m = FarFieldMatrix::zeros(MatrixKind::Background, 1.0, directions());
        m.set(0, 1, Complex64::new(2.0, -1.0));
        assert_eq!(m.values[1], Complex64::new(2.0, -1.0));
        assert_eq!(m.get(0, 1), Complex64::new(2.0, -1.0));
        assert_eq!(m.get(1, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn test_dimension_mismatch_rejected() {
        let err = FarFieldMatrix::new(
            MatrixKind::Background,
            1.0,
            directions(),
            vec![Complex64::new(0.0, 0.0); 3],
        )
        .unwrap_err();
        assert!(matches!(err, ScatError::InvalidConfig(_)));
    }

    #[test]
    fn test_subtraction_requires_matching_directions() {
        let a = FarFieldMatrix::zeros(MatrixKind::Background, 1.0, directions());
        let mut other_dirs = directions();
        other_dirs.reverse();
        let b = FarFieldMatrix::zeros(MatrixKind::Background, 1.0, other_dirs);
        assert!(a.sub(&b).is_err());
        let c = FarFieldMatrix::zeros(MatrixKind::SingleInclusion, 1.0, directions());
        assert_eq!(a.sub(&c).unwrap(), vec![Complex64::new(0.0, 0.0); 4]);
    }
}
