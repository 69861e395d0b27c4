//! Stochastic port-Hamiltonian single-file model on a ring.
//!
//! `N` agents move on a ring of length `L`. The state is the vector of
//! headways `Q` (distance to the right neighbour) and velocities `p`:
//!
//! ```text
//! dQ_n = (p_{n+1} - p_n) dt
//! dp_n = (U'(Q_n) - U'(Q_{n-1})) dt + beta (p_{n+1} - 2 p_n + p_{n-1}) dt
//!        + gamma (u - p_n) dt + sigma dW_n
//! ```
//!
//! with the quadratic potential `U(x) = (alpha x)^2 / 2`. The crate provides
//! Euler-Maruyama integration ([`integrator`]), the closed-form spectrum of the
//! linearised drift ([`spectral`]), the closed-form stationary covariance
//! ([`stationary`]) and Monte-Carlo checks of both ([`ensemble`]).

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{Parameters, State, SystemMatrices};
