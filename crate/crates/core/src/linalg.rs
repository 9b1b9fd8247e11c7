//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Builds a matrix from row-major nested rows.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn vector(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

/// Matrix exponential (scaling and squaring with a Padé approximant).
pub fn expm(m: &Mat) -> Mat {
    m.clone().exp()
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Distance from 1 of the closest eigenvalue of `m`.
pub fn distance_to_unit_eigenvalue(m: &Mat) -> (f64, f64) {
    m.complex_eigenvalues()
        .iter()
        .map(|z| ((z - nalgebra::Complex::new(1.0, 0.0)).norm(), z.re))
        .fold((f64::INFINITY, f64::NAN), |acc, v| if v.0 < acc.0 { v } else { acc })
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn quad_form(m: &Mat, v: &Vector) -> f64 {
    v.dot(&(m * v))
}

/// Running Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(self, x: f64) -> Self {
        let t = self.sum + x;
        let comp = if self.sum.abs() >= x.abs() {
            self.comp + ((self.sum - t) + x)
        } else {
            self.comp + ((x - t) + self.sum)
        };
        CompensatedSum { sum: t, comp }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.sum + self.comp
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

/// Serde adapter storing a matrix as row-major nested arrays.
pub mod serde_mat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        mat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        mat_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod serde_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod serde_vec_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vector], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.as_slice().to_vec())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?
            .into_iter()
            .map(Vector::from_vec)
            .collect())
    }
}

pub mod serde_mat_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(mat_to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        Vec::<Vec<Vec<f64>>>::deserialize(d)?
            .iter()
            .map(|rows| mat_from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = [1e16, 1.0, -1e16]
            .iter()
            .fold(CompensatedSum::default(), |acc, &x| acc.add(x));
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn lcm_values() {
        assert_eq!(lcm(3, 4), 12);
        assert_eq!(lcm(6, 10), 30);
        assert_eq!(lcm(1, 7), 7);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let r = Mat::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&r) - 0.9).abs() < 1e-12);
    }
}
