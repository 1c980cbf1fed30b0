//! Comparison strategies: per-slot optimal single-BS offloading and a
//! simplified binary Gibbs-sampling cache search over the cluster.

use rand::Rng;

use crate::admm::{service_headroom, solve_column, LocalSolution, ScalarProblem};
use crate::error::{Error, Result};
use crate::lyapunov::SlotObjective;
use crate::phy::{single_bs_sinr, uplink_rate, BsProfile, ChannelState, Topology};
use crate::service::{column_usage, fits, prefetch_cost, CacheState, CachingDecision, ServiceCatalog, ServiceGrid, Task};

/// Index of the largest rate, ties to the lowest index.
pub fn best_rate_bs(rates: &[f64]) -> usize {
    let mut best = 0;
    for (m, r) in rates.iter().enumerate() {
        if *r > rates[best] {
            best = m;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleBsOutcome {
    pub bs: usize,
    pub rate: f64,
    pub decision: CachingDecision,
    pub column: LocalSolution,
    /// Prefetch cost on the chosen BS.
    pub cost: f64,
    /// Weighted objective `Cost_m + V D^pro` at the chosen decision.
    pub objective: f64,
}

/// Scalar problem of the single-BS weighted objective: hinge cost on the
/// requested service minus the delay reward `V (D^BKB - D^edge)`.
pub fn single_bs_problem(
    h: f64,
    price: f64,
    penalty_weight: f64,
    edge_delay: f64,
    backbone_delay: f64,
    upper: f64,
) -> ScalarProblem {
    ScalarProblem {
        hinge: price,
        anchor: h,
        curvature: 0.0,
        target: 0.0,
        reward: penalty_weight * (backbone_delay - edge_delay),
        upper,
    }
}

/// Serves the user from the BS with the best matched-filter rate and picks the
/// caching column there that minimizes prefetch cost plus `V` times the
/// expected processing delay. Ignores the virtual queue.
#[allow(clippy::too_many_arguments)]
pub fn single_bs_step(
    topology: &Topology,
    channels: &ChannelState,
    user: usize,
    h: &CacheState,
    task: &Task,
    penalty_weight: f64,
    catalog: &ServiceCatalog,
    edge_delay: f64,
    backbone_delay: f64,
) -> Result<SingleBsOutcome> {
    let rates: Vec<f64> = (0..topology.bs_count())
        .map(|m| uplink_rate(single_bs_sinr(topology, channels, m, user)))
        .collect();
    let bs = best_rate_bs(&rates);
    let profile = &topology.bs_profiles[bs];
    let k = task.service;
    let col = h.column(bs);
    let problem = single_bs_problem(
        col[k],
        catalog.prefetch_price(k),
        penalty_weight,
        edge_delay,
        backbone_delay,
        service_headroom(k, catalog, profile),
    );
    let column = solve_column(&col, k, problem, catalog, profile, bs)?;
    let mut decision = ServiceGrid::zeros(h.services(), h.bs_count());
    decision.set_column(bs, &column.x);
    let cost = prefetch_cost(&column.x, &col, catalog);
    let y = column.coupling;
    let objective = cost + penalty_weight * (y * edge_delay + (1.0 - y) * backbone_delay);
    Ok(SingleBsOutcome {
        bs,
        rate: rates[bs],
        decision,
        column,
        cost,
        objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub initial_temperature: f64,
    /// Multiplicative temperature decay per sweep.
    pub decay: f64,
    pub sweeps: usize,
    /// Share of the task processed at the edge when the service is cached.
    pub edge_fraction: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            initial_temperature: 1.0,
            decay: 0.95,
            sweeps: 30,
            edge_fraction: 1.0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temperature > 0.0) {
            return Err(Error::config("gibbs.initial_temperature", "must be > 0"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("gibbs.decay", "must lie in (0, 1]"));
        }
        if self.sweeps == 0 {
            return Err(Error::config("gibbs.sweeps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.edge_fraction) {
            return Err(Error::config("gibbs.edge_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Acceptance probability of a move with energy change `delta` at `temperature`.
pub fn acceptance(delta: f64, temperature: f64) -> f64 {
    let s = delta / temperature;
    if s > 700.0 {
        0.0
    } else if s < -700.0 {
        1.0
    } else {
        1.0 / (1.0 + s.exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOutcome {
    /// Binary cache contents after the decision, cluster columns only are meaningful.
    pub state: Vec<Vec<bool>>,
    /// `+1` to cache, `-1` to drop, `0` outside the cluster.
    pub decision: CachingDecision,
    pub energy: f64,
    pub sweeps: usize,
    pub accepted: usize,
}

/// Decision realizing a binary target: cache with certainty or drop with certainty.
pub fn binary_decision(state: &[Vec<bool>], cluster: &[usize], services: usize, bs_count: usize) -> CachingDecision {
    let mut x = ServiceGrid::zeros(services, bs_count);
    for (col, &m) in state.iter().zip(cluster) {
        for (k, &cached) in col.iter().enumerate() {
            x.set(k, m, if cached { 1.0 } else { -1.0 });
        }
    }
    x
}

fn state_fits(col: &[bool], catalog: &ServiceCatalog, profile: &BsProfile) -> bool {
    let y: Vec<f64> = col.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let (s, c) = column_usage(&y, catalog);
    fits(s, c, profile)
}

/// Energy of a binary cluster state: the slot objective at the decision that
/// realizes it.
pub fn gibbs_energy(objective: &SlotObjective, state: &[Vec<bool>]) -> f64 {
    let x = binary_decision(
        state,
        &objective.cluster,
        objective.current.services(),
        objective.bs_count(),
    );
    objective.total(&x)
}

/// Single-site Gibbs sweeps over feasible binary cache states of the cluster,
/// starting from the current (rounded) state. `objective` should already carry
/// the effective edge delay implied by the configured edge fraction.
pub fn gibbs_step(
    objective: &SlotObjective,
    catalog: &ServiceCatalog,
    profiles: &[BsProfile],
    config: &GibbsConfig,
    rng: &mut impl Rng,
) -> GibbsOutcome {
    let services = objective.current.services();
    let cluster = &objective.cluster;
    let mut state: Vec<Vec<bool>> = cluster
        .iter()
        .map(|&m| (0..services).map(|k| objective.current.get(k, m) >= 0.5).collect())
        .collect();
    for (col, &m) in state.iter_mut().zip(cluster) {
        if !state_fits(col, catalog, &profiles[m]) {
            col.iter_mut().for_each(|b| *b = false);
        }
    }
    let mut energy = gibbs_energy(objective, &state);
    let mut temperature = config.initial_temperature;
    let mut accepted = 0;
    for _ in 0..config.sweeps {
        for i in 0..cluster.len() {
            for k in 0..services {
                state[i][k] = !state[i][k];
                if !state_fits(&state[i], catalog, &profiles[cluster[i]]) {
                    state[i][k] = !state[i][k];
                    continue;
                }
                let proposed = gibbs_energy(objective, &state);
                if rng.random::<f64>() < acceptance(proposed - energy, temperature) {
                    energy = proposed;
                    accepted += 1;
                } else {
                    state[i][k] = !state[i][k];
                }
            }
        }
        temperature *= config.decay;
    }
    let decision = binary_decision(&state, cluster, services, objective.bs_count());
    GibbsOutcome {
        state,
        decision,
        energy,
        sweeps: config.sweeps,
        accepted,
    }
}
