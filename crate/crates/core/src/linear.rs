//! Incremental ridge regression shared by the contextual policies.
//!
//! The state keeps the Gram matrix `M = I + Σ x xᵀ`, the moment vector
//! `b = Σ r x`, and a cached inverse and estimate maintained by
//! Sherman-Morrison rank-one updates. Every [`REFRESH_INTERVAL`] updates the
//! cache is rebuilt from a Cholesky factorization of `M` so rounding error
//! cannot accumulate without bound.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const REFRESH_INTERVAL: u32 = 256;

/// Row-major set of context vectors with a per-row index of nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMatrix {
    dim: usize,
    data: Vec<f64>,
    nonzeros: Vec<Vec<u32>>,
}

impl ContextMatrix {
    pub fn new(dim: usize) -> Self {
        ContextMatrix {
            dim,
            data: Vec::new(),
            nonzeros: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut m = ContextMatrix::new(dim);
        for row in rows {
            m.push(row.as_ref())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::input(format!(
                "context has dimension {} but {} was expected",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("context has a non-finite entry"));
        }
        self.data.extend_from_slice(row);
        self.nonzeros.push(
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i as u32)
                .collect(),
        );
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nonzeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzeros.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nonzeros(&self, i: usize) -> &[u32] {
        &self.nonzeros[i]
    }

    /// `row(i) · v`, touching only the row's nonzero entries.
    pub fn dot(&self, i: usize, v: &[f64]) -> f64 {
        let row = self.row(i);
        self.nonzeros[i]
            .iter()
            .map(|&j| row[j as usize] * v[j as usize])
            .sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }
}

/// What an update did to the cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub enum RidgeDelta {
    /// `M⁻¹ ← M⁻¹ − u uᵀ / denom`, with `u` stored sparsely.
    RankOne {
        indices: Vec<u32>,
        values: Vec<f64>,
        denom: f64,
    },
    /// The inverse was rebuilt from scratch; cached quadratic forms must be
    /// recomputed.
    Refreshed,
}

/// Ridge regression state `(M, b)` with cached `M⁻¹` and `θ̂ = M⁻¹ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    dim: usize,
    gram: Vec<f64>,
    moment: Vec<f64>,
    inverse: Vec<f64>,
    theta: Vec<f64>,
    count: u64,
    since_refresh: u32,
}

impl RidgeState {
    /// `M = I`, `b = 0`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("ridge dimension must be at least 1"));
        }
        let mut identity = vec![0.0; dim * dim];
        for i in 0..dim {
            identity[i * dim + i] = 1.0;
        }
        Ok(RidgeState {
            dim,
            gram: identity.clone(),
            moment: vec![0.0; dim],
            inverse: identity,
            theta: vec![0.0; dim],
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observation_count(&self) -> u64 {
        self.count
    }

    /// Row-major `M`.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    /// Current point estimate `θ̂` solving `M θ̂ = b`.
    pub fn estimate(&self) -> &[f64] {
        &self.theta
    }

    /// Applies `M += x xᵀ`, `b += r x`.
    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<RidgeDelta> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::input("ridge update with non-finite input"));
        }
        let d = self.dim;
        let nz: Vec<usize> = (0..d).filter(|&i| x[i] != 0.0).collect();

        for &i in &nz {
            for &j in &nz {
                self.gram[i * d + j] += x[i] * x[j];
            }
            self.moment[i] += reward * x[i];
        }
        self.count += 1;
        self.since_refresh += 1;

        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh();
            return Ok(RidgeDelta::Refreshed);
        }

        // u = M⁻¹ x using the symmetry of M⁻¹ so rows are read contiguously
        let mut u = vec![0.0; d];
        for &j in &nz {
            let row = &self.inverse[j * d..(j + 1) * d];
            let xj = x[j];
            for (ui, aij) in u.iter_mut().zip(row) {
                *ui += aij * xj;
            }
        }
        let quad: f64 = nz.iter().map(|&j| x[j] * u[j]).sum();
        let denom = 1.0 + quad;
        let residual = reward - nz.iter().map(|&j| x[j] * self.theta[j]).sum::<f64>();

        let indices: Vec<u32> = (0..d).filter(|&i| u[i] != 0.0).map(|i| i as u32).collect();
        for &i in &indices {
            let ui = u[i as usize] / denom;
            let row = &mut self.inverse[i as usize * d..(i as usize + 1) * d];
            for &j in &indices {
                row[j as usize] -= ui * u[j as usize];
            }
            self.theta[i as usize] += ui * residual;
        }
        let values = indices.iter().map(|&i| u[i as usize]).collect();
        Ok(RidgeDelta::RankOne {
            indices,
            values,
            denom,
        })
    }

    /// Rebuilds `M⁻¹` and `θ̂` from a Cholesky factorization of `M`.
    pub fn refresh(&mut self) {
        let d = self.dim;
        let gram = DMatrix::from_row_slice(d, d, &self.gram);
        let chol = gram
            .cholesky()
            .expect("ridge Gram matrix is positive definite by construction");
        let inverse = chol.inverse();
        let theta = chol.solve(&DVector::from_column_slice(&self.moment));
        for i in 0..d {
            for j in 0..d {
                // symmetrize so row reads and column reads agree exactly
                self.inverse[i * d + j] = 0.5 * (inverse[(i, j)] + inverse[(j, i)]);
            }
        }
        self.theta.copy_from_slice(theta.as_slice());
        self.since_refresh = 0;
    }

    /// `xᵀ M⁻¹ x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let nz: Vec<usize> = (0..self.dim).filter(|&i| x[i] != 0.0).collect();
        Ok(self.quad_form_sparse(x, &nz))
    }

    fn quad_form_sparse(&self, x: &[f64], nz: &[usize]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for &i in nz {
            let row = &self.inverse[i * d..(i + 1) * d];
            let inner: f64 = nz.iter().map(|&j| row[j] * x[j]).sum();
            total += x[i] * inner;
        }
        total.max(0.0)
    }

    /// `α ‖x‖_{M⁻¹}`.
    pub fn ucb_radius(&self, x: &[f64], alpha: f64) -> Result<f64> {
        Ok(alpha * self.quad_form(x)?.sqrt())
    }

    /// `xᵀ θ̂`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(x.iter().zip(&self.theta).map(|(a, b)| a * b).sum())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "vector has dimension {} but the ridge state has dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Cached `xᵀ M⁻¹ x` for every row of a [`ContextMatrix`], kept in sync with
/// a ridge state through the deltas its updates return.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormCache {
    values: Vec<f64>,
}

impl QuadFormCache {
    pub fn new(ridge: &RidgeState, contexts: &ContextMatrix) -> Self {
        let mut cache = QuadFormCache { values: Vec::new() };
        cache.recompute(ridge, contexts);
        cache
    }

    pub fn recompute(&mut self, ridge: &RidgeState, contexts: &ContextMatrix) {
        self.values = (0..contexts.len())
            .map(|i| {
                let nz: Vec<usize> = contexts.nonzeros(i).iter().map(|&j| j as usize).collect();
                ridge.quad_form_sparse(contexts.row(i), &nz)
            })
            .collect();
    }

    pub fn apply(&mut self, delta: &RidgeDelta, ridge: &RidgeState, contexts: &ContextMatrix) {
        match delta {
            RidgeDelta::Refreshed => self.recompute(ridge, contexts),
            RidgeDelta::RankOne {
                indices,
                values,
                denom,
            } => {
                for (i, q) in self.values.iter_mut().enumerate() {
                    let row = contexts.row(i);
                    let proj: f64 = indices
                        .iter()
                        .zip(values)
                        .map(|(&j, &u)| row[j as usize] * u)
                        .sum();
                    if proj != 0.0 {
                        *q = (*q - proj * proj / denom).max(0.0);
                    }
                }
            }
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn radius(&self, i: usize, alpha: f64) -> f64 {
        alpha * self.values[i].sqrt()
    }
}
