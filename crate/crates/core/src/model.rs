//! Model parameters, state, potential, system matrices and Hamiltonian diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the ring model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Number of agents `N`.
    pub n_agents: usize,
    /// Ring length `L`.
    pub ring_length: f64,
    /// Potential stiffness.
    pub alpha: f64,
    /// Dissipation rate.
    pub beta: f64,
    /// Relaxation rate towards the desired velocity.
    pub gamma: f64,
    /// Noise volatility.
    pub sigma: f64,
    /// Desired velocity.
    pub u: f64,
}

impl Parameters {
    /// Checks the domain restrictions and returns the parameters unchanged.
    pub fn validate(self) -> Result<Self> {
        if self.n_agents < 3 {
            return Err(Error::param(
                "n_agents",
                format!("need at least 3 agents, got {}", self.n_agents),
            ));
        }
        let positive = [("ring_length", self.ring_length), ("alpha", self.alpha)];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {value}")));
            }
        }
        let nonneg = [("beta", self.beta), ("gamma", self.gamma), ("sigma", self.sigma)];
        for (name, value) in nonneg {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be nonnegative and finite, got {value}")));
            }
        }
        if !self.u.is_finite() {
            return Err(Error::param("u", format!("must be finite, got {}", self.u)));
        }
        Ok(self)
    }

    /// Equilibrium headway `L/N`.
    pub fn spacing(&self) -> f64 {
        self.ring_length / self.n_agents as f64
    }
}

/// Free-function form of [`Parameters::validate`].
pub fn validate_parameters(raw: Parameters) -> Result<Parameters> {
    raw.validate()
}

/// Headways and velocities of all agents at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// `Q_n`, distance from agent `n` to its right neighbour.
    pub distances: Vec<f64>,
    /// `p_n`, velocity of agent `n`.
    pub velocities: Vec<f64>,
}

impl State {
    pub fn new(distances: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if distances.len() != velocities.len() {
            return Err(Error::DimensionMismatch {
                expected: distances.len(),
                actual: velocities.len(),
            });
        }
        Ok(Self {
            distances,
            velocities,
        })
    }

    /// Uniform spacing `L/N` with every agent moving at `velocity`.
    pub fn uniform(params: &Parameters, velocity: f64) -> Self {
        let n = params.n_agents;
        Self {
            distances: vec![params.spacing(); n],
            velocities: vec![velocity; n],
        }
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn mean_velocity(&self) -> f64 {
        self.velocities.iter().sum::<f64>() / self.velocities.len() as f64
    }

    pub fn total_distance(&self) -> f64 {
        self.distances.iter().sum()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        for len in [self.distances.len(), self.velocities.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

/// Time derivative of a [`State`] (drift part only).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub distances: Vec<f64>,
    pub velocities: Vec<f64>,
}

/// Headways `Q_n = q_{n+1} - q_n`, closing the ring with `Q_N = L + q_1 - q_N`.
pub fn distances_from_positions(positions: &[f64], ring_length: f64) -> Result<Vec<f64>> {
    let n = positions.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    for w in positions.windows(2) {
        out.push(w[1] - w[0]);
    }
    out.push(ring_length + positions[0] - positions[n - 1]);
    if let Some((index, &value)) = out.iter().enumerate().find(|(_, d)| **d < 0.0) {
        return Err(Error::UnorderedPositions { index, value });
    }
    Ok(out)
}

/// Absolute positions from the position of agent 1 and the headways.
pub fn positions_from_distances(q1: f64, distances: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(distances.len());
    let mut q = q1;
    for d in distances {
        out.push(q);
        q += d;
    }
    out
}

/// Quadratic interaction potential `U(x) = (alpha x)^2 / 2`.
pub fn potential(x: f64, alpha: f64) -> f64 {
    let ax = alpha * x;
    0.5 * ax * ax
}

/// `U'(x) = alpha^2 x`.
pub fn potential_derivative(x: f64, alpha: f64) -> f64 {
    alpha * alpha * x
}

// Matrix-free operators. Indices wrap around the ring.

/// `out = A x`, i.e. `out_n = x_{n+1} - x_n`.
pub fn apply_a(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let next = if i + 1 == n { 0 } else { i + 1 };
        out[i] = x[next] - x[i];
    }
}

/// `out = A^T x`, i.e. `out_n = x_{n-1} - x_n`.
pub fn apply_at(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        out[i] = x[prev] - x[i];
    }
}

/// `out = A^T A x`, the periodic second difference with stencil (-1, 2, -1).
pub fn apply_ata(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        let next = if i + 1 == n { 0 } else { i + 1 };
        out[i] = 2.0 * x[i] - x[prev] - x[next];
    }
}

/// Dense matrices of the port-Hamiltonian form and of the shifted linear system.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// Circulant difference matrix.
    pub a: DMatrix<f64>,
    pub ata: DMatrix<f64>,
    /// Structure matrix, skew-symmetric.
    pub j: DMatrix<f64>,
    /// Dissipation matrix, symmetric positive semi-definite.
    pub r: DMatrix<f64>,
    /// Drift matrix of the process `(Q, p - u)`.
    pub b: DMatrix<f64>,
    /// Input vector `(0, gamma 1)`.
    pub s: DVector<f64>,
    /// Noise matrix `(0, sigma I)`.
    pub g: DMatrix<f64>,
}

/// The circulant difference matrix with `-1` on the diagonal and `1` to the right.
pub fn difference_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            -1.0
        } else if c == (r + 1) % n {
            1.0
        } else {
            0.0
        }
    })
}

/// Assembles all dense system matrices. Memory is `O(N^2)`; intended for moderate `N`.
pub fn build_matrices(params: &Parameters) -> SystemMatrices {
    let n = params.n_agents;
    let a = difference_matrix(n);
    let ata = a.transpose() * &a;
    let at = a.transpose();
    let alpha2 = params.alpha * params.alpha;

    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&a);
    j.view_mut((n, 0), (n, n)).copy_from(&(-&at));

    let damping = &ata * params.beta + DMatrix::identity(n, n) * params.gamma;
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    r.view_mut((n, n), (n, n)).copy_from(&damping);

    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, n), (n, n)).copy_from(&a);
    b.view_mut((n, 0), (n, n)).copy_from(&(&at * -alpha2));
    b.view_mut((n, n), (n, n)).copy_from(&(-damping));

    let s = DVector::from_fn(2 * n, |i, _| if i < n { 0.0 } else { params.gamma });

    let mut g = DMatrix::zeros(2 * n, n);
    g.view_mut((n, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * params.sigma));

    SystemMatrices {
        a,
        ata,
        j,
        r,
        b,
        s,
        g,
    }
}

impl SystemMatrices {
    /// Drift `(J - R) grad H(Z) + S u` evaluated with dense matrices.
    pub fn port_hamiltonian_drift(&self, state: &State, params: &Parameters) -> DVector<f64> {
        let n = params.n_agents;
        let grad = DVector::from_fn(2 * n, |i, _| {
            if i < n {
                potential_derivative(state.distances[i], params.alpha)
            } else {
                state.velocities[i - n]
            }
        });
        (&self.j - &self.r) * grad + &self.s * params.u
    }
}

/// Componentwise drift of the extended model, `O(N)`.
pub fn drift(state: &State, params: &Parameters) -> Result<StateDerivative> {
    state.check_dim(params.n_agents)?;
    let n = params.n_agents;
    let mut out = StateDerivative {
        distances: vec![0.0; n],
        velocities: vec![0.0; n],
    };
    drift_into(state, params, &mut out.distances, &mut out.velocities);
    Ok(out)
}

/// Writes the drift into preallocated buffers. Dimensions are not checked.
pub(crate) fn drift_into(state: &State, params: &Parameters, dq: &mut [f64], dp: &mut [f64]) {
    let q = &state.distances;
    let p = &state.velocities;
    let n = q.len();
    let alpha2 = params.alpha * params.alpha;
    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        let next = if i + 1 == n { 0 } else { i + 1 };
        dq[i] = p[next] - p[i];
        dp[i] = alpha2 * (q[i] - q[prev])
            + params.beta * (p[next] - 2.0 * p[i] + p[prev])
            + params.gamma * (params.u - p[i]);
    }
}

/// Total energy `|p|^2 / 2 + sum_n U(Q_n)`.
pub fn hamiltonian(state: &State, params: &Parameters) -> f64 {
    let kinetic: f64 = state.velocities.iter().map(|v| v * v).sum::<f64>() * 0.5;
    let potential_energy: f64 = state
        .distances
        .iter()
        .map(|&x| potential(x, params.alpha))
        .sum();
    kinetic + potential_energy
}

fn norm_sq_a(x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let d = x[(i + 1) % n] - x[i];
            d * d
        })
        .sum()
}

/// Deterministic energy rate `-beta |A p~|^2 - gamma |p~|^2` with `p~ = p - u`. Never positive.
pub fn hamiltonian_dissipation_rate(state: &State, params: &Parameters) -> f64 {
    let shifted: Vec<f64> = state.velocities.iter().map(|v| v - params.u).collect();
    let norm_sq: f64 = shifted.iter().map(|v| v * v).sum();
    -params.beta * norm_sq_a(&shifted) - params.gamma * norm_sq
}

/// The `dt` coefficient of `dH` under Ito dynamics:
/// `-beta |A p|^2 + gamma <p, u 1 - p> + N sigma^2 / 2`.
pub fn hamiltonian_expected_drift(state: &State, params: &Parameters) -> f64 {
    let p = &state.velocities;
    let relax: f64 = p.iter().map(|v| v * (params.u - v)).sum();
    -params.beta * norm_sq_a(p)
        + params.gamma * relax
        + 0.5 * p.len() as f64 * params.sigma * params.sigma
}
