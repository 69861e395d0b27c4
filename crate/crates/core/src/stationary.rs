//! Stationary Gaussian law of the controlled model (`gamma > 0`).
//!
//! The covariance of `(Q, p - u)` has blocks `[[V1, V2], [V2^T, V3]]` with
//!
//! ```text
//! V3 = circ(v),  v_j = sigma^2 / (2N) sum_k cos(2 pi j k / N) / (gamma + 4 beta sin^2(pi k / N))
//! V2 = 0
//! V1 = alpha^-2 (V3 - sigma^2 / (2 gamma N) * ones)
//! ```
//!
//! The constant shift in `V1` makes `1^T V1 1 = 0`, since the total headway is conserved.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_matrices, Parameters};
use crate::spectral::DENSE_LIMIT;

fn require_controlled(params: &Parameters) -> Result<Parameters> {
    let params = params.validate()?;
    if params.gamma <= 0.0 {
        return Err(Error::NoStationaryDistribution {
            gamma: params.gamma,
        });
    }
    Ok(params)
}

/// First column of the stationary velocity covariance, `O(N^2)`.
pub fn stationary_v(params: &Parameters) -> Result<Vec<f64>> {
    let params = require_controlled(params)?;
    let n = params.n_agents;
    let nf = n as f64;
    let weights: Vec<f64> = (0..n)
        .map(|k| {
            let s = (PI * k as f64 / nf).sin();
            1.0 / (params.gamma + 4.0 * params.beta * s * s)
        })
        .collect();
    // cos(2 pi m / N) for m = 0..N, indexed by (j k) mod N to keep the argument small.
    let cosines: Vec<f64> = (0..n).map(|m| (2.0 * PI * m as f64 / nf).cos()).collect();
    let scale = params.sigma * params.sigma / (2.0 * nf);
    let mut v: Vec<f64> = (0..=n / 2)
        .map(|j| {
            let sum: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, w)| cosines[(j * k) % n] * w)
                .sum();
            scale * sum
        })
        .collect();
    // v_j = v_{N-j} exactly, so that Sigma is exactly symmetric.
    for j in n / 2 + 1..n {
        v.push(v[n - j]);
    }
    Ok(v)
}

/// Circulant matrix with first column `c`: entry `(r, s)` is `c[(r - s) mod N]`.
pub fn circulant(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |r, s| c[(r + n - s) % n])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance {
    pub v: Vec<f64>,
    /// Velocity block.
    pub v3: DMatrix<f64>,
    /// Headway block.
    pub v1: DMatrix<f64>,
    /// Cross block, identically zero.
    pub v2: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// `(L/N 1, 0)`, the mean of `(Q, p - u)`.
    pub mean: DVector<f64>,
}

/// Closed-form stationary covariance and mean. Dense, `O(N^2)` memory.
pub fn stationary_covariance(params: &Parameters) -> Result<StationaryCovariance> {
    let params = require_controlled(params)?;
    let n = params.n_agents;
    let v = stationary_v(&params)?;
    let v3 = circulant(&v);
    let shift = params.sigma * params.sigma / (2.0 * params.gamma * n as f64);
    let inv_alpha2 = 1.0 / (params.alpha * params.alpha);
    let v1 = v3.map(|x| (x - shift) * inv_alpha2);
    let v2 = DMatrix::zeros(n, n);

    let mut sigma = DMatrix::zeros(2 * n, 2 * n);
    sigma.view_mut((0, 0), (n, n)).copy_from(&v1);
    sigma.view_mut((n, n), (n, n)).copy_from(&v3);

    let spacing = params.spacing();
    let mean = DVector::from_fn(2 * n, |i, _| if i < n { spacing } else { 0.0 });
    Ok(StationaryCovariance {
        v,
        v3,
        v1,
        v2,
        sigma,
        mean,
    })
}

/// Max-abs entry of `B Sigma + Sigma B^T + G G^T`.
pub fn lyapunov_residual(sigma: &DMatrix<f64>, params: &Parameters) -> Result<f64> {
    let params = params.validate()?;
    let dim = 2 * params.n_agents;
    if sigma.nrows() != dim || sigma.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: if sigma.nrows() != dim { sigma.nrows() } else { sigma.ncols() },
        });
    }
    let m = build_matrices(&params);
    let residual = &m.b * sigma + sigma * m.b.transpose() + &m.g * m.g.transpose();
    Ok(residual.amax())
}

/// Smallest eigenvalue of a symmetric matrix; used as a semi-definiteness check.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() > 2 * DENSE_LIMIT {
        return Err(Error::param(
            "n_agents",
            format!("dense eigenvalues limited to N <= {DENSE_LIMIT}"),
        ));
    }
    let eig = SymmetricEigen::new(m.clone());
    Ok(eig.eigenvalues.min())
}

/// Limit of `v_j` as `N -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCovariance {
    /// `sqrt(gamma^2 + 4 beta gamma)`.
    pub f: f64,
    /// Geometric decay ratio in `(0, 1)`.
    pub a: f64,
    pub sigma: f64,
}

impl LimitCovariance {
    pub fn new(params: &Parameters) -> Result<Self> {
        let params = require_controlled(params)?;
        if params.beta <= 0.0 {
            return Err(Error::LimitUndefined { beta: params.beta });
        }
        let (beta, gamma) = (params.beta, params.gamma);
        let f = (gamma * gamma + 4.0 * beta * gamma).sqrt();
        // a = 1 + gamma/(2 beta) - F/(2 beta) = 1 / b with b = 1 + gamma/(2 beta) + F/(2 beta);
        // the reciprocal form avoids cancellation when gamma << beta.
        let b = 1.0 + gamma / (2.0 * beta) + f / (2.0 * beta);
        Ok(Self {
            f,
            a: 1.0 / b,
            sigma: params.sigma,
        })
    }

    pub fn value(&self, j: usize) -> f64 {
        self.sigma * self.sigma * self.a.powi(j as i32) / (2.0 * self.f)
    }
}

pub fn limit_covariance(params: &Parameters, j: usize) -> Result<f64> {
    Ok(LimitCovariance::new(params)?.value(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, alpha: f64, beta: f64, gamma: f64, sigma: f64) -> Parameters {
        Parameters {
            n_agents: n,
            ring_length: n as f64,
            alpha,
            beta,
            gamma,
            sigma,
            u: 0.0,
        }
    }

    #[test]
    fn v_for_three_agents() {
        let v = stationary_v(&params(3, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let expected = [0.25, 0.125, 0.125];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{v:?}");
        }
    }

    #[test]
    fn v_zero_without_noise() {
        let v = stationary_v(&params(6, 1.0, 1.0, 1.0, 0.0)).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        let c = stationary_covariance(&params(6, 1.0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(c.sigma.amax(), 0.0);
    }

    #[test]
    fn gamma_zero_rejected() {
        let p = params(5, 1.0, 1.0, 0.0, 1.0);
        assert!(matches!(stationary_v(&p), Err(Error::NoStationaryDistribution { .. })));
        assert!(stationary_covariance(&p).is_err());
        assert!(limit_covariance(&p, 0).is_err());
    }

    #[test]
    fn covariance_blocks_for_three_agents() {
        let c = stationary_covariance(&params(3, 1.0, 1.0, 1.0, 1.0)).unwrap();
        for i in 0..3 {
            assert!((c.v3[(i, i)] - 0.25).abs() < 1e-14);
            assert!((c.v1[(i, i)] - (0.25 - 1.0 / 6.0)).abs() < 1e-14);
        }
        assert_eq!(c.v2, DMatrix::zeros(3, 3));
        assert_eq!(c.mean.as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn circulant_layout() {
        let m = circulant(&[1.0, 2.0, 3.0]);
        assert_eq!(m, DMatrix::from_row_slice(3, 3, &[1., 3., 2., 2., 1., 3., 3., 2., 1.]));
    }

    #[test]
    fn headway_block_annihilates_constants() {
        let c = stationary_covariance(&params(7, 1.3, 0.6, 0.4, 0.9)).unwrap();
        let ones = DVector::from_element(7, 1.0);
        assert!((&c.v1 * ones).amax() < 1e-14);
    }

    #[test]
    fn residual_small_for_closed_form() {
        let p = params(5, 1.0, 1.0, 1.0, 1.0);
        let c = stationary_covariance(&p).unwrap();
        assert!(lyapunov_residual(&c.sigma, &p).unwrap() < 1e-10);
    }

    #[test]
    fn residual_zero_for_homogeneous() {
        let p = params(4, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(lyapunov_residual(&DMatrix::zeros(8, 8), &p).unwrap(), 0.0);
    }

    #[test]
    fn residual_detects_wrong_sigma() {
        let p = params(3, 1.0, 1.0, 1.0, 1.0);
        assert!(lyapunov_residual(&DMatrix::identity(6, 6), &p).unwrap() > 0.1);
        assert!(lyapunov_residual(&DMatrix::identity(5, 5), &p).is_err());
    }

    #[test]
    fn limit_values() {
        let p = params(10, 1.0, 1.0, 1.0, 1.0);
        let v0 = limit_covariance(&p, 0).unwrap();
        assert!((v0 - 1.0 / (2.0 * 5f64.sqrt())).abs() < 1e-15);
        let lim = LimitCovariance::new(&p).unwrap();
        assert!((lim.a - (1.5 - 5f64.sqrt() / 2.0)).abs() < 1e-15);
        assert!((limit_covariance(&p, 1).unwrap() - 0.0854101966249685).abs() < 1e-12);
        assert!(lim.a > 0.0 && lim.a < 1.0);
        assert!(limit_covariance(&Parameters { beta: 0.0, ..p }, 0).is_err());
    }

    #[test]
    fn sigma_is_positive_semidefinite() {
        let c = stationary_covariance(&params(8, 0.7, 2.0, 0.3, 1.4)).unwrap();
        assert!(min_symmetric_eigenvalue(&c.sigma).unwrap() >= -1e-10);
    }
}
