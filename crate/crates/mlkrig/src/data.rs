//! Observation locations and responses.

use crate::error::{Error, Result};

/// A set of `n` points in `R^dim`, stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    coords: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ParamDomain("point dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("coordinate count divisible by dim={dim}"),
                got: format!("{}", coords.len()),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamDomain("non-finite coordinate".into()));
        }
        let n = coords.len() / dim;
        Ok(Self { coords, n, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("row of length {dim}"),
                    got: format!("{}", r.len()),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(coords, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean distance between stored points `i` and `j`.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        dist(self.point(i), self.point(j))
    }

    /// Subset of the points, in the given index order.
    pub fn select(&self, idx: &[usize]) -> Points {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Points {
            coords,
            n: idx.len(),
            dim: self.dim,
        }
    }
}

/// Euclidean distance between two coordinate slices.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// N locations plus N responses: the raw data of a scattered regression.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub locations: Points,
    pub responses: Vec<f64>,
}

impl ObservationSet {
    pub fn new(locations: Points, responses: Vec<f64>) -> Result<Self> {
        if locations.len() != responses.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} responses", locations.len()),
                got: format!("{}", responses.len()),
            });
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamDomain("non-finite response".into()));
        }
        Ok(Self { locations, responses })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}
