//! Euler-Maruyama time stepping and trajectory recording.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Parameters, State};

/// Largest mode factor of the periodic second difference.
const MODE_FACTOR_MAX: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `Q = L/N`, `p = 0`.
    UniformRest,
    /// `Q = L/N`, `p = u`.
    UniformSpeed,
    Explicit(State),
}

impl InitialCondition {
    pub fn state(&self, params: &Parameters) -> Result<State> {
        let state = match self {
            InitialCondition::UniformRest => State::uniform(params, 0.0),
            InitialCondition::UniformSpeed => State::uniform(params, params.u),
            InitialCondition::Explicit(s) => s.clone(),
        };
        for len in [state.distances.len(), state.velocities.len()] {
            if len != params.n_agents {
                return Err(Error::DimensionMismatch {
                    expected: params.n_agents,
                    actual: len,
                });
            }
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Record one sample every `record_every` steps.
    pub record_every: usize,
    pub initial_condition: InitialCondition,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::config(
                "t_end",
                format!("must be finite and at least dt = {}, got {}", self.dt, self.t_end),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of Euler-Maruyama steps covering `[0, t_end]`.
    pub fn total_steps(&self) -> u64 {
        // t_end/dt is usually meant to be an integer; absorb the rounding of the division.
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            ratio.floor() as u64
        }
    }

    /// Number of recorded samples including the initial one.
    pub fn sample_count(&self) -> usize {
        (self.total_steps() / self.record_every as u64) as usize + 1
    }
}

/// `dt (4 beta + gamma)`; explicit Euler is at risk of instability once it exceeds 1.
pub fn stiffness_number(params: &Parameters, dt: f64) -> f64 {
    dt * (params.beta * MODE_FACTOR_MAX + params.gamma)
}

/// One Euler-Maruyama step with caller-supplied standard-normal increments.
pub fn em_step(state: &State, params: &Parameters, dt: f64, noise: &[f64]) -> Result<State> {
    let n = params.n_agents;
    for len in [state.distances.len(), state.velocities.len(), noise.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let mut next = state.clone();
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    step_in_place(&mut next, params, dt, noise, &mut dq, &mut dp);
    Ok(next)
}

fn step_in_place(
    state: &mut State,
    params: &Parameters,
    dt: f64,
    noise: &[f64],
    dq: &mut [f64],
    dp: &mut [f64],
) {
    model::drift_into(state, params, dq, dp);
    let diffusion = params.sigma * dt.sqrt();
    for (q, d) in state.distances.iter_mut().zip(dq.iter()) {
        *q += d * dt;
    }
    for ((p, d), z) in state.velocities.iter_mut().zip(dp.iter()).zip(noise) {
        *p += d * dt + diffusion * z;
    }
}

/// Stateful stepper owning its RNG stream.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: Parameters,
    dt: f64,
    state: State,
    q1: f64,
    steps: u64,
    ordering_violations: u64,
    rng: ChaCha8Rng,
    noise: Vec<f64>,
    dq: Vec<f64>,
    dp: Vec<f64>,
}

impl Integrator {
    pub fn new(params: &Parameters, config: &SimConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let state = config.initial_condition.state(params)?;
        let stiffness = stiffness_number(params, config.dt);
        if stiffness > 1.0 {
            log::warn!(
                "dt = {} is large for beta = {}, gamma = {}: dt (4 beta + gamma) = {stiffness:.3} > 1",
                config.dt,
                params.beta,
                params.gamma
            );
        }
        let n = params.n_agents;
        Ok(Self {
            params: *params,
            dt: config.dt,
            state,
            q1: 0.0,
            steps: 0,
            ordering_violations: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            noise: vec![0.0; n],
            dq: vec![0.0; n],
            dp: vec![0.0; n],
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Unwrapped position of agent 1.
    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Steps after which at least one headway was negative.
    pub fn ordering_violations(&self) -> u64 {
        self.ordering_violations
    }

    pub fn advance(&mut self) {
        for z in self.noise.iter_mut() {
            *z = StandardNormal.sample(&mut self.rng);
        }
        self.q1 += self.state.velocities[0] * self.dt;
        step_in_place(
            &mut self.state,
            &self.params,
            self.dt,
            &self.noise,
            &mut self.dq,
            &mut self.dp,
        );
        self.steps += 1;
        if self.state.distances.iter().any(|&d| d < 0.0) {
            self.ordering_violations += 1;
        }
    }

    pub fn advance_by(&mut self, steps: usize) {
        for _ in 0..steps {
            self.advance();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ring_length: f64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Unwrapped position of agent 1.
    pub q1_track: Vec<f64>,
    pub hamiltonian_track: Vec<f64>,
    pub mean_velocity_track: Vec<f64>,
    pub ordering_violations: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, integrator: &Integrator, params: &Parameters) {
        let state = integrator.state();
        self.times.push(integrator.time());
        self.q1_track.push(integrator.q1());
        self.hamiltonian_track.push(model::hamiltonian(state, params));
        self.mean_velocity_track.push(state.mean_velocity());
        self.states.push(state.clone());
    }

    /// Absolute positions of sample `k`, wrapped into `[0, L)`.
    pub fn wrapped_positions(&self, k: usize) -> Vec<f64> {
        model::positions_from_distances(self.q1_track[k], &self.states[k].distances)
            .into_iter()
            .map(|q| wrap(q, self.ring_length))
            .collect()
    }
}

fn wrap(q: f64, ring_length: f64) -> f64 {
    let w = q.rem_euclid(ring_length);
    // rem_euclid can round up to exactly L for tiny negative inputs.
    if w >= ring_length {
        0.0
    } else {
        w
    }
}

/// Runs one simulation and records every `record_every`-th state.
pub fn simulate(params: &Parameters, config: &SimConfig) -> Result<Trajectory> {
    let mut integrator = Integrator::new(params, config)?;
    let samples = config.sample_count();
    let mut traj = Trajectory {
        ring_length: params.ring_length,
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        q1_track: Vec::with_capacity(samples),
        hamiltonian_track: Vec::with_capacity(samples),
        mean_velocity_track: Vec::with_capacity(samples),
        ordering_violations: 0,
    };
    traj.push(&integrator, params);
    for _ in 1..samples {
        integrator.advance_by(config.record_every);
        traj.push(&integrator, params);
    }
    traj.ordering_violations = integrator.ordering_violations();
    Ok(traj)
}

/// Cross-replica variance of the mean velocity at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVelocityStatistics {
    pub times: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn mean_velocity_statistics(ensemble: &[Trajectory]) -> Result<MeanVelocityStatistics> {
    if ensemble.len() < 2 {
        return Err(Error::Statistics(format!(
            "need at least 2 replicas, got {}",
            ensemble.len()
        )));
    }
    let times = ensemble[0].times.clone();
    if ensemble.iter().any(|t| t.times != times) {
        return Err(Error::Statistics("replicas have mismatched time grids".into()));
    }
    let r = ensemble.len() as f64;
    let variance = (0..times.len())
        .map(|k| {
            let mean = ensemble.iter().map(|t| t.mean_velocity_track[k]).sum::<f64>() / r;
            ensemble
                .iter()
                .map(|t| {
                    let d = t.mean_velocity_track[k] - mean;
                    d * d
                })
                .sum::<f64>()
                / (r - 1.0)
        })
        .collect();
    Ok(MeanVelocityStatistics { times, variance })
}
