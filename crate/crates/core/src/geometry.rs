//! Point-set primitives: barycentre, energy, range.
//!
//! Points are stored row-major in one flat buffer. The energy of `n` points is
//! `G_n = sum_i |x_i - mu|^2`, the squared spread around the barycentre `mu`.
//! It equals `(1/n) sum_{i<j} |x_i - x_j|^2` and `inf_y sum_i |x_i - y|^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered list of `n` points in `R^d` with cached first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PointConfiguration {
    coords: Vec<f64>,
    dim: usize,
    moment_sum: Vec<f64>,
    moment_sq: f64,
}

impl PointConfiguration {
    /// Builds a configuration from a flat row-major buffer.
    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(Error::EmptyConfiguration);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                index: coords.len() / dim,
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: pos / dim });
        }
        let mut moment_sum = vec![0.0; dim];
        let mut moment_sq = 0.0;
        for p in coords.chunks_exact(dim) {
            for (s, &c) in moment_sum.iter_mut().zip(p) {
                *s += c;
            }
            moment_sq += norm_sq(p);
        }
        Ok(Self {
            coords,
            dim,
            moment_sum,
            moment_sq,
        })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyConfiguration)?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(Error::EmptyConfiguration);
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (index, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(coords, dim)
    }

    /// One-dimensional configuration from scalar values.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// `sum_i x_i`.
    pub fn moment_sum(&self) -> &[f64] {
        &self.moment_sum
    }

    /// `sum_i |x_i|^2`.
    pub fn moment_sq(&self) -> f64 {
        self.moment_sq
    }

    /// The points at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self::from_flat(coords, self.dim)
    }

    pub fn to_points(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PointConfiguration {
    type Error = Error;

    fn try_from(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_points(&points)
    }
}

impl From<PointConfiguration> for Vec<Vec<f64>> {
    fn from(cfg: PointConfiguration) -> Self {
        cfg.to_points()
    }
}

#[inline]
pub(crate) fn norm_sq(p: &[f64]) -> f64 {
    p.iter().map(|c| c * c).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Barycentre `mu_n = (1/n) sum_i x_i`.
pub fn barycenter(cfg: &PointConfiguration) -> Vec<f64> {
    let n = cfg.len() as f64;
    cfg.moment_sum().iter().map(|s| s / n).collect()
}

/// `G_n = sum_i |x_i - mu|^2`.
///
/// Evaluated as a two-pass sum on coordinates shifted by the first point, so
/// identical points give exactly zero and clustered points far from the
/// origin do not lose precision.
pub fn energy(cfg: &PointConfiguration) -> f64 {
    let dim = cfg.dim();
    let origin = cfg.point(0);
    let n = cfg.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in cfg.points() {
        for ((m, &c), &o) in mean.iter_mut().zip(p).zip(origin) {
            *m += c - o;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    cfg.points()
        .map(|p| {
            p.iter()
                .zip(origin)
                .zip(&mean)
                .map(|((&c, &o), &m)| {
                    let y = (c - o) - m;
                    y * y
                })
                .sum::<f64>()
        })
        .sum()
}

/// Pairwise form `(1/n) sum_i sum_{j<i} |x_i - x_j|^2`. O(n^2 d); used as a
/// cross-check on [`energy`].
pub fn energy_pairwise(cfg: &PointConfiguration) -> f64 {
    let n = cfg.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..i {
            total += dist_sq(cfg.point(i), cfg.point(j));
        }
    }
    total / n as f64
}

/// Energy from the cached moments, `moment_sq - |moment_sum|^2 / n`.
/// Suffers cancellation far from the origin; kept for cross-checks.
pub fn energy_from_moments(cfg: &PointConfiguration) -> f64 {
    cfg.moment_sq() - norm_sq(cfg.moment_sum()) / cfg.len() as f64
}

/// Range `D_n = max_{i,j} |x_i - x_j|`.
pub fn range(cfg: &PointConfiguration) -> f64 {
    let n = cfg.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            best = best.max(dist_sq(cfg.point(i), cfg.point(j)));
        }
    }
    best.sqrt()
}

/// `min_i |x_i|`, the distance of the set from the origin.
pub fn distance_from_origin(cfg: &PointConfiguration) -> f64 {
    cfg.points()
        .map(norm_sq)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}
