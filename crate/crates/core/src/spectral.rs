//! Spectrum of the drift matrix of the shifted process.
//!
//! Every block of the drift matrix is circulant, so the characteristic
//! polynomial splits over the Fourier modes `j = 0..N` into quadratics
//!
//! ```text
//! lambda^2 + lambda (beta mu_j + gamma) + alpha^2 mu_j = 0,   mu_j = 2 - 2 cos(2 pi j / N).
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_matrices, Parameters};

/// Largest `N` for which dense matrices are materialised.
pub const DENSE_LIMIT: usize = 512;

/// `mu_j = 2 - 2 cos(2 pi j / N)` for `j = 0..N`.
pub fn mode_factors(n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::param("n_agents", format!("need at least 3 agents, got {n}")));
    }
    Ok((0..n).map(|j| mode_factor(j, n)).collect())
}

fn mode_factor(j: usize, n: usize) -> f64 {
    // 4 sin^2(pi j / N) avoids the cancellation in 2 - 2 cos near j = 0.
    let s = (PI * j as f64 / n as f64).sin();
    4.0 * s * s
}

/// One eigenvalue `lambda_{j,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEigenvalue {
    pub j: usize,
    /// Branch, 1 or 2.
    pub k: u8,
    pub mu: f64,
    pub re: f64,
    pub im: f64,
}

impl ModeEigenvalue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub mode_factors: Vec<f64>,
    /// Ordered by `j`, then `k`.
    pub eigenvalues: Vec<ModeEigenvalue>,
}

impl SpectralDecomposition {
    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(ModeEigenvalue::value).collect()
    }

    pub fn get(&self, j: usize, k: u8) -> Option<&ModeEigenvalue> {
        self.eigenvalues.iter().find(|e| e.j == j && e.k == k)
    }
}

/// Roots of `lambda^2 + b lambda + c` as (k = 1, k = 2), k = 1 taking the minus sign.
fn quadratic_roots(b: f64, c: f64) -> (Complex64, Complex64) {
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(re, -im), Complex64::new(re, im))
    } else {
        let large = -0.5 * (b + disc.sqrt());
        let small = if large == 0.0 { 0.0 } else { c / large };
        (Complex64::new(large, 0.0), Complex64::new(small, 0.0))
    }
}

/// Closed-form eigenvalues of the drift matrix, `2N` of them.
pub fn eigenvalues(params: &Parameters) -> Result<SpectralDecomposition> {
    let params = params.validate()?;
    let n = params.n_agents;
    let mu = mode_factors(n)?;
    let alpha2 = params.alpha * params.alpha;
    let mut out = Vec::with_capacity(2 * n);
    for (j, &m) in mu.iter().enumerate() {
        let (l1, l2) = if j == 0 {
            (Complex64::new(0.0, 0.0), Complex64::new(-params.gamma, 0.0))
        } else {
            quadratic_roots(params.beta * m + params.gamma, alpha2 * m)
        };
        for (k, l) in [(1u8, l1), (2u8, l2)] {
            out.push(ModeEigenvalue {
                j,
                k,
                mu: m,
                re: l.re,
                im: l.im,
            });
        }
    }
    Ok(SpectralDecomposition {
        mode_factors: mu,
        eigenvalues: out,
    })
}

/// Agreement one can expect from a backward-stable dense eigensolver on `B`.
///
/// Each mode `j >= 1` is a non-diagonal 2x2 block, so when its two roots nearly coincide
/// the block is close to a Jordan block and its eigenvalues move by about
/// `eps |B|^2 / gap` (at most `sqrt(eps) |B|`) under roundoff. Returns `base` unless
/// that bound exceeds it.
pub fn oracle_tolerance(params: &Parameters, spec: &SpectralDecomposition, base: f64) -> f64 {
    let norm = 2.0 + 2.0 * params.alpha * params.alpha + 4.0 * params.beta + params.gamma;
    let min_gap = spec
        .eigenvalues
        .chunks(2)
        .filter(|pair| pair[0].j > 0)
        .map(|pair| (pair[0].value() - pair[1].value()).norm())
        .fold(f64::INFINITY, f64::min);
    let sensitivity = (10.0 * f64::EPSILON * norm * norm / min_gap).min(10.0 * f64::EPSILON.sqrt() * norm);
    base.max(sensitivity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Largest real part over all modes except the conserved `(0, 1)` mode.
    pub max_real_part: f64,
    pub witness_j: usize,
    pub witness_k: u8,
}

/// Asymptotic stability of the uniform equilibrium modulo the conserved total headway.
pub fn is_asymptotically_stable(params: &Parameters) -> Result<StabilityVerdict> {
    let spec = eigenvalues(params)?;
    let witness = spec
        .eigenvalues
        .iter()
        .filter(|e| !(e.j == 0 && e.k == 1))
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .expect("at least 3 modes");
    Ok(StabilityVerdict {
        stable: witness.re < 0.0,
        max_real_part: witness.re,
        witness_j: witness.j,
        witness_k: witness.k,
    })
}

/// Eigenvalues of the dense drift matrix from a general (nonsymmetric) dense eigensolver.
pub fn dense_spectrum_oracle(params: &Parameters) -> Result<Vec<Complex64>> {
    let params = params.validate()?;
    if params.n_agents > DENSE_LIMIT {
        return Err(Error::param(
            "n_agents",
            format!("dense spectrum limited to N <= {DENSE_LIMIT}, got {}", params.n_agents),
        ));
    }
    let b = build_matrices(&params).b;
    let dense = faer::Mat::<f64>::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, c)]);
    let values = dense
        .eigenvalues()
        .map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    Ok(values.iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Bottleneck distance between two multisets, using greedy nearest-neighbour matching.
///
/// Each element of `a` (in order) is paired with the closest unused element of `b`;
/// the result is the largest paired distance.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (idx, dist) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("same length");
        used[idx] = true;
        worst = worst.max(dist);
    }
    Ok(worst)
}
