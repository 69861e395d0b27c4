//! Replica ensembles: empirical moments against the stationary law, the
//! mean-velocity divergence probe for the free model, and an energy-balance check.
//!
//! Replica `i` draws its noise from the stream seeded with `base_seed ^ i`.
//! Replicas run in parallel but are always reduced in index order, so every
//! report is independent of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, Integrator, SimConfig, Trajectory};
use crate::model::{self, Parameters, State};
use crate::stationary;

/// Batches used for standard errors when there is a single replica.
const SINGLE_REPLICA_BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub replicas: usize,
    /// Simulated time discarded before sampling.
    pub burn_in: f64,
    /// Use every `sample_stride`-th recorded sample after burn-in.
    pub sample_stride: usize,
    pub base_seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self, sim: &SimConfig) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("replicas", "must be at least 1"));
        }
        if self.sample_stride == 0 {
            return Err(Error::config("sample_stride", "must be at least 1"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < sim.t_end) {
            return Err(Error::config(
                "burn_in",
                format!("must lie in [0, t_end = {}), got {}", sim.t_end, self.burn_in),
            ));
        }
        Ok(())
    }

    /// Default burn-in of ten relaxation times `1/gamma`; zero for the free model.
    pub fn default_burn_in(gamma: f64) -> f64 {
        if gamma > 0.0 {
            10.0 / gamma
        } else {
            0.0
        }
    }
}

pub fn replica_seed(base_seed: u64, replica: usize) -> u64 {
    base_seed ^ replica as u64
}

fn replica_config(sim: &SimConfig, ens: &EnsembleConfig, replica: usize) -> SimConfig {
    SimConfig {
        seed: replica_seed(ens.base_seed, replica),
        ..sim.clone()
    }
}

/// Indices (into the recorded-sample grid) used for moment estimation.
fn sample_indices(sim: &SimConfig, ens: &EnsembleConfig) -> Vec<usize> {
    let interval = sim.dt * sim.record_every as f64;
    // Tolerate rounding in burn_in / interval.
    let first = ((ens.burn_in / interval) - 1e-9).ceil().max(0.0) as usize;
    (first..sim.sample_count()).step_by(ens.sample_stride).collect()
}

/// Sums of one batch of samples.
#[derive(Debug, Clone, PartialEq)]
struct BatchSums {
    count: usize,
    q: Vec<f64>,
    p: Vec<f64>,
    q_sq: Vec<f64>,
    p_sq: Vec<f64>,
    /// `sum_n (p_n - u)(p_{n+j} - u)` accumulated per lag `j`.
    lag: Vec<f64>,
}

impl BatchSums {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            q: vec![0.0; n],
            p: vec![0.0; n],
            q_sq: vec![0.0; n],
            p_sq: vec![0.0; n],
            lag: vec![0.0; n],
        }
    }

    fn observe(&mut self, state: &State, spacing: f64, u: f64) {
        let n = self.q.len();
        self.count += 1;
        for i in 0..n {
            let q = state.distances[i];
            let p = state.velocities[i];
            self.q[i] += q;
            self.p[i] += p;
            self.q_sq[i] += (q - spacing) * (q - spacing);
            self.p_sq[i] += (p - u) * (p - u);
        }
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += (state.velocities[i] - u) * (state.velocities[(i + j) % n] - u);
            }
            self.lag[j] += s;
        }
    }

    fn means(&self) -> BlockMeans {
        let c = self.count as f64;
        let n = self.q.len() as f64;
        let scale = |v: &[f64], d: f64| v.iter().map(|x| x / d).collect::<Vec<_>>();
        BlockMeans {
            count: self.count,
            q: scale(&self.q, c),
            p: scale(&self.p, c),
            q_sq: scale(&self.q_sq, c),
            p_sq: scale(&self.p_sq, c),
            lag: scale(&self.lag, c * n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockMeans {
    count: usize,
    q: Vec<f64>,
    p: Vec<f64>,
    q_sq: Vec<f64>,
    p_sq: Vec<f64>,
    lag: Vec<f64>,
}

/// Moment sums of one replica, split into batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaMoments {
    pub replica: usize,
    batches: Vec<BatchSums>,
}

/// Streams the post-burn-in samples of one state sequence into batch sums.
struct MomentCollector<'a> {
    params: &'a Parameters,
    wanted: Vec<usize>,
    cursor: usize,
    batches: Vec<BatchSums>,
}

impl<'a> MomentCollector<'a> {
    fn new(params: &'a Parameters, wanted: Vec<usize>, batch_count: usize) -> Self {
        let batch_count = batch_count.min(wanted.len()).max(1);
        Self {
            params,
            wanted,
            cursor: 0,
            batches: vec![BatchSums::new(params.n_agents); batch_count],
        }
    }

    fn offer(&mut self, sample: usize, state: &State) {
        if self.cursor < self.wanted.len() && self.wanted[self.cursor] == sample {
            let batch = self.cursor * self.batches.len() / self.wanted.len();
            self.batches[batch].observe(state, self.params.spacing(), self.params.u);
            self.cursor += 1;
        }
    }

    fn finish(self, replica: usize) -> ReplicaMoments {
        ReplicaMoments {
            replica,
            batches: self.batches,
        }
    }
}

fn batches_per_replica(replicas: usize) -> usize {
    if replicas >= 2 {
        1
    } else {
        SINGLE_REPLICA_BATCHES
    }
}

/// Simulates replica `replica` and accumulates its moment sums.
pub fn replica_moments(
    params: &Parameters,
    sim: &SimConfig,
    ens: &EnsembleConfig,
    replica: usize,
) -> Result<ReplicaMoments> {
    let wanted = sample_indices(sim, ens);
    let cfg = replica_config(sim, ens, replica);
    let mut integrator = Integrator::new(params, &cfg)?;
    let mut collector = MomentCollector::new(params, wanted, batches_per_replica(ens.replicas));
    let samples = cfg.sample_count();
    collector.offer(0, integrator.state());
    for k in 1..samples {
        integrator.advance_by(cfg.record_every);
        collector.offer(k, integrator.state());
    }
    Ok(collector.finish(replica))
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub index: usize,
    pub empirical: f64,
    pub target: f64,
    pub standard_error: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub mean_q: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub var_q: Vec<f64>,
    pub var_p: Vec<f64>,
    pub cov_lag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub replicas: usize,
    pub samples_per_replica: usize,
    /// Number of blocks behind the standard errors (replicas, or batches of a single replica).
    pub blocks: usize,
    pub empirical_mean_q: Vec<f64>,
    pub empirical_mean_p: Vec<f64>,
    /// Second moments about the stationary means `L/N` and `u`.
    pub empirical_var_q: Vec<f64>,
    pub empirical_var_p: Vec<f64>,
    /// Circulant-averaged velocity covariance at index lag `j`.
    pub empirical_cov_lag: Vec<f64>,
    pub standard_errors: StandardErrors,
    /// Filled when `gamma > 0`.
    pub comparison: Option<Vec<Comparison>>,
    pub fraction_within_3_sigma: Option<f64>,
}

impl MomentReport {
    pub fn comparison_for(&self, quantity: &str, index: usize) -> Option<&Comparison> {
        self.comparison
            .as_ref()?
            .iter()
            .find(|c| c.quantity == quantity && c.index == index)
    }
}

/// Mean and standard error of block means; zero error for a single block.
fn pooled(blocks: &[BlockMeans], field: impl Fn(&BlockMeans) -> &Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = field(&blocks[0]).len();
    let total: usize = blocks.iter().map(|b| b.count).sum();
    let k = blocks.len() as f64;
    let mut mean = vec![0.0; n];
    let mut se = vec![0.0; n];
    for i in 0..n {
        mean[i] = blocks
            .iter()
            .map(|b| field(b)[i] * b.count as f64)
            .sum::<f64>()
            / total as f64;
        if blocks.len() > 1 {
            let avg = blocks.iter().map(|b| field(b)[i]).sum::<f64>() / k;
            let var = blocks
                .iter()
                .map(|b| (field(b)[i] - avg).powi(2))
                .sum::<f64>()
                / (k - 1.0);
            se[i] = (var / k).sqrt();
        }
    }
    (mean, se)
}

fn z_score(empirical: f64, target: f64, se: f64) -> f64 {
    let diff = empirical - target;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Combines replica sums (in replica-index order) into a report.
pub fn aggregate_moments(params: &Parameters, mut replicas: Vec<ReplicaMoments>) -> Result<MomentReport> {
    let params = params.validate()?;
    replicas.sort_by_key(|r| r.replica);
    let samples_per_replica = replicas
        .first()
        .map(|r| r.batches.iter().map(|b| b.count).sum())
        .unwrap_or(0);
    let blocks: Vec<BlockMeans> = replicas
        .iter()
        .flat_map(|r| r.batches.iter())
        .filter(|b| b.count > 0)
        .map(BatchSums::means)
        .collect();
    if blocks.is_empty() {
        return Err(Error::Statistics("no samples after burn-in".into()));
    }

    let (mean_q, se_mean_q) = pooled(&blocks, |b| &b.q);
    let (mean_p, se_mean_p) = pooled(&blocks, |b| &b.p);
    let (var_q, se_var_q) = pooled(&blocks, |b| &b.q_sq);
    let (var_p, se_var_p) = pooled(&blocks, |b| &b.p_sq);
    let (cov_lag, se_cov_lag) = pooled(&blocks, |b| &b.lag);

    let (comparison, fraction) = if params.gamma > 0.0 {
        let v = stationary::stationary_v(&params)?;
        let n = params.n_agents;
        let shift = params.sigma * params.sigma / (2.0 * params.gamma * n as f64);
        let var_q_target = (v[0] - shift) / (params.alpha * params.alpha);
        let mut rows = Vec::with_capacity(5 * n);
        let mut push = |quantity: &str, index: usize, emp: f64, target: f64, se: f64| {
            rows.push(Comparison {
                quantity: quantity.to_string(),
                index,
                empirical: emp,
                target,
                standard_error: se,
                z_score: z_score(emp, target, se),
            });
        };
        for i in 0..n {
            push("mean_q", i, mean_q[i], params.spacing(), se_mean_q[i]);
            push("mean_p", i, mean_p[i], params.u, se_mean_p[i]);
            push("var_q", i, var_q[i], var_q_target, se_var_q[i]);
            push("var_p", i, var_p[i], v[0], se_var_p[i]);
            push("cov_lag", i, cov_lag[i], v[i], se_cov_lag[i]);
        }
        let within = rows.iter().filter(|c| c.z_score.abs() <= 3.0).count();
        let fraction = within as f64 / rows.len() as f64;
        (Some(rows), Some(fraction))
    } else {
        (None, None)
    };

    Ok(MomentReport {
        replicas: replicas.len(),
        samples_per_replica,
        blocks: blocks.len(),
        empirical_mean_q: mean_q,
        empirical_mean_p: mean_p,
        empirical_var_q: var_q,
        empirical_var_p: var_p,
        empirical_cov_lag: cov_lag,
        standard_errors: StandardErrors {
            mean_q: se_mean_q,
            mean_p: se_mean_p,
            var_q: se_var_q,
            var_p: se_var_p,
            cov_lag: se_cov_lag,
        },
        comparison,
        fraction_within_3_sigma: fraction,
    })
}

/// Runs all replicas in parallel and estimates stationary moments.
pub fn run_ensemble(params: &Parameters, sim: &SimConfig, ens: &EnsembleConfig) -> Result<MomentReport> {
    let params = params.validate()?;
    sim.validate()?;
    ens.validate(sim)?;
    if sample_indices(sim, ens).is_empty() {
        return Err(Error::Statistics("no recorded samples after burn-in".into()));
    }
    let replicas = (0..ens.replicas)
        .into_par_iter()
        .map(|r| replica_moments(&params, sim, ens, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate_moments(&params, replicas)
}

/// Moment estimates from already-recorded trajectories sharing one time grid.
pub fn moments_from_trajectories(
    params: &Parameters,
    trajectories: &[Trajectory],
    sim: &SimConfig,
    ens: &EnsembleConfig,
) -> Result<MomentReport> {
    let wanted = sample_indices(sim, ens);
    let mut out = Vec::with_capacity(trajectories.len());
    for (r, traj) in trajectories.iter().enumerate() {
        let mut collector =
            MomentCollector::new(params, wanted.clone(), batches_per_replica(trajectories.len()));
        for (k, state) in traj.states.iter().enumerate() {
            collector.offer(k, state);
        }
        out.push(collector.finish(r));
    }
    aggregate_moments(params, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub times: Vec<f64>,
    /// Cross-replica variance of the mean velocity.
    pub variance: Vec<f64>,
    /// Least-squares slope of `variance` against `times`, through the origin.
    pub slope: f64,
    /// `sigma^2 / N`.
    pub expected_slope: f64,
}

/// Growth rate of the cross-replica variance of the mean velocity in the free model.
///
/// The mean velocity starts from a deterministic value, so its variance vanishes at
/// `t = 0` and the fit has no intercept.
pub fn divergence_probe(params: &Parameters, sim: &SimConfig, ens: &EnsembleConfig) -> Result<DivergenceReport> {
    let params = params.validate()?;
    if params.gamma != 0.0 {
        return Err(Error::param(
            "gamma",
            format!("divergence probe applies to the free model gamma = 0, got {}", params.gamma),
        ));
    }
    sim.validate()?;
    if ens.replicas < 2 {
        return Err(Error::config("replicas", "divergence probe needs at least 2 replicas"));
    }
    let trajectories = (0..ens.replicas)
        .into_par_iter()
        .map(|r| integrator::simulate(&params, &replica_config(sim, ens, r)))
        .collect::<Result<Vec<_>>>()?;
    let stats = integrator::mean_velocity_statistics(&trajectories)?;
    let (num, den) = stats
        .times
        .iter()
        .zip(&stats.variance)
        .fold((0.0, 0.0), |(n, d), (t, v)| (n + t * v, d + t * t));
    Ok(DivergenceReport {
        slope: if den > 0.0 { num / den } else { 0.0 },
        expected_slope: params.sigma * params.sigma / params.n_agents as f64,
        times: stats.times,
        variance: stats.variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDriftReport {
    /// Time-averaged `(H(t + h) - H(t)) / h` over the post-burn-in window, averaged over blocks.
    pub observed_mean: f64,
    /// Time average of the Ito drift coefficient at the left end of each interval.
    pub predicted_mean: f64,
    pub difference: f64,
    /// Standard error of `difference` across blocks; zero with a single block.
    pub standard_error: f64,
    /// First post-burn-in interval of replica 0.
    pub first_interval_observed: f64,
    pub first_interval_predicted: f64,
    /// Sampling interval `h`.
    pub interval: f64,
}

struct DriftSums {
    observed: Vec<f64>,
    predicted: Vec<f64>,
    counts: Vec<usize>,
    first: Option<(f64, f64)>,
}

/// Compares the observed energy increments with the Ito drift of the Hamiltonian.
pub fn hamiltonian_drift_check(
    params: &Parameters,
    sim: &SimConfig,
    ens: &EnsembleConfig,
) -> Result<HamiltonianDriftReport> {
    let params = params.validate()?;
    sim.validate()?;
    ens.validate(sim)?;
    let wanted = sample_indices(sim, ens);
    // Each interval starts at a wanted sample and spans one recording interval.
    let starts: Vec<usize> = wanted
        .into_iter()
        .filter(|&k| k + 1 < sim.sample_count())
        .collect();
    if starts.is_empty() {
        return Err(Error::Statistics("no complete intervals after burn-in".into()));
    }
    let interval = sim.dt * sim.record_every as f64;
    let batches = batches_per_replica(ens.replicas).min(starts.len());

    let per_replica = (0..ens.replicas)
        .into_par_iter()
        .map(|r| -> Result<DriftSums> {
            let cfg = replica_config(sim, ens, r);
            let mut integrator = Integrator::new(&params, &cfg)?;
            let mut sums = DriftSums {
                observed: vec![0.0; batches],
                predicted: vec![0.0; batches],
                counts: vec![0; batches],
                first: None,
            };
            let mut cursor = 0;
            let mut k = 0;
            while cursor < starts.len() {
                if k == starts[cursor] {
                    let h0 = model::hamiltonian(integrator.state(), &params);
                    let predicted = model::hamiltonian_expected_drift(integrator.state(), &params);
                    integrator.advance_by(cfg.record_every);
                    k += 1;
                    let observed = (model::hamiltonian(integrator.state(), &params) - h0) / interval;
                    let b = cursor * batches / starts.len();
                    sums.observed[b] += observed;
                    sums.predicted[b] += predicted;
                    sums.counts[b] += 1;
                    sums.first.get_or_insert((observed, predicted));
                    cursor += 1;
                } else {
                    integrator.advance_by(cfg.record_every);
                    k += 1;
                }
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut obs_blocks = Vec::new();
    let mut pred_blocks = Vec::new();
    for sums in &per_replica {
        for b in 0..sums.counts.len() {
            if sums.counts[b] > 0 {
                let c = sums.counts[b] as f64;
                obs_blocks.push(sums.observed[b] / c);
                pred_blocks.push(sums.predicted[b] / c);
            }
        }
    }
    let k = obs_blocks.len() as f64;
    let observed_mean = obs_blocks.iter().sum::<f64>() / k;
    let predicted_mean = pred_blocks.iter().sum::<f64>() / k;
    let difference = observed_mean - predicted_mean;
    let standard_error = if obs_blocks.len() > 1 {
        let var = obs_blocks
            .iter()
            .zip(&pred_blocks)
            .map(|(o, p)| (o - p - difference).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let (first_obs, first_pred) = per_replica[0].first.expect("at least one interval");
    Ok(HamiltonianDriftReport {
        observed_mean,
        predicted_mean,
        difference,
        standard_error,
        first_interval_observed: first_obs,
        first_interval_predicted: first_pred,
        interval,
    })
}
