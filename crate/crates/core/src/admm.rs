//! Consensus-sharing ADMM for the per-slot caching problem.
//!
//! Each cluster BS owns its caching column `x_m` and a consensus copy `z_m` of
//! its coupling value (the next-state probability of the requested service).
//! One round is: parallel local updates, an exact shared `z` update over the
//! `max` penalty, then scaled dual ascent.
//!
//! The local problem is nonconvex in `x` but convex after the change of
//! variables `y = [x]^+ + h - |x| h` (the next-state probability): the
//! prefetch cost becomes a hinge `[y - h]^+`, the resource constraints become
//! linear and the coupling becomes `y_k`. Because the request is one-hot, only
//! the requested component appears in the proximal term, so the update reduces
//! to a one-dimensional piecewise-quadratic minimization plus a feasibility
//! repair on the other components.

use crate::error::{Error, Result};
use crate::lyapunov::SlotObjective;
use crate::phy::BsProfile;
use crate::service::{column_usage, fits, reparam_to_x, CachingDecision, ServiceCatalog, ServiceGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            tolerance: 1e-4,
            max_iterations: 50,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::config("admm.rho", "must be > 0"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("admm.tolerance", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("admm.max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// `hinge [y - anchor]^+ + (curvature / 2)(y - target)^2 - reward * y` on `[0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProblem {
    pub hinge: f64,
    pub anchor: f64,
    pub curvature: f64,
    pub target: f64,
    pub reward: f64,
    pub upper: f64,
}

impl ScalarProblem {
    pub fn value(&self, y: f64) -> f64 {
        self.hinge * (y - self.anchor).max(0.0) + 0.5 * self.curvature * (y - self.target).powi(2)
            - self.reward * y
    }

    /// Exact minimizer. Flat stretches resolve to the anchor (no action).
    pub fn argmin(&self) -> f64 {
        let h = self.anchor;
        let y = if self.curvature > 0.0 {
            let t = self.target + self.reward / self.curvature;
            let shifted = t - self.hinge / self.curvature;
            if t <= h {
                t
            } else if shifted >= h {
                shifted
            } else {
                h
            }
        } else if self.reward < 0.0 {
            0.0
        } else if self.reward > self.hinge {
            self.upper
        } else {
            h
        };
        y.clamp(0.0, self.upper)
    }
}

/// Largest feasible next-state probability of `service` on a BS once every
/// other service is evicted.
pub fn service_headroom(service: usize, catalog: &ServiceCatalog, profile: &BsProfile) -> f64 {
    (profile.storage / catalog.sizes[service])
        .min(profile.compute / catalog.compute[service])
        .min(1.0)
}

/// Lowers non-requested components, largest index first, until the column
/// meets both resource limits.
fn repair_column(
    y: &mut [f64],
    keep: usize,
    catalog: &ServiceCatalog,
    profile: &BsProfile,
    bs: usize,
) -> Result<()> {
    let (mut storage, mut compute) = column_usage(y, catalog);
    for k in (0..y.len()).rev() {
        if k == keep {
            continue;
        }
        let over_s = storage - profile.storage;
        let over_c = compute - profile.compute;
        if over_s <= 0.0 && over_c <= 0.0 {
            break;
        }
        let need = (over_s / catalog.sizes[k]).max(over_c / catalog.compute[k]).max(0.0);
        let cut = need.min(y[k]);
        y[k] -= cut;
        storage -= cut * catalog.sizes[k];
        compute -= cut * catalog.compute[k];
    }
    let (storage, compute) = column_usage(y, catalog);
    if fits(storage, compute, profile) {
        Ok(())
    } else {
        Err(Error::InfeasibleState { bs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    /// Caching decision for the BS, one entry per service.
    pub x: Vec<f64>,
    /// Next-state probabilities the decision produces.
    pub y: Vec<f64>,
    /// Next-state probability of the requested service.
    pub coupling: f64,
}

/// Solves the single-BS caching column for a scalar problem on the requested
/// component, then repairs feasibility on the rest. Shared by the ADMM local
/// step and the single-BS baseline.
pub fn solve_column(
    h: &[f64],
    service: usize,
    problem: ScalarProblem,
    catalog: &ServiceCatalog,
    profile: &BsProfile,
    bs: usize,
) -> Result<LocalSolution> {
    if !(profile.storage >= 0.0 && profile.compute >= 0.0) {
        return Err(Error::InfeasibleState { bs });
    }
    let mut y = h.to_vec();
    y[service] = problem.argmin();
    repair_column(&mut y, service, catalog, profile, bs)?;
    let x = y.iter().zip(h).map(|(&y, &h)| reparam_to_x(y, h)).collect();
    Ok(LocalSolution {
        x,
        coupling: y[service],
        y,
    })
}

/// Scalar problem of the local update at BS `bs` with proximal centre
/// `z - u`.
pub fn local_problem(
    objective: &SlotObjective,
    bs: usize,
    catalog: &ServiceCatalog,
    profile: &BsProfile,
    z: f64,
    u: f64,
    rho: f64,
) -> ScalarProblem {
    let k = objective.service;
    ScalarProblem {
        hinge: objective.backlog * objective.membership[bs] * objective.prices[k],
        anchor: objective.current.get(k, bs),
        curvature: rho,
        target: z - u,
        reward: 0.0,
        upper: service_headroom(k, catalog, profile),
    }
}

/// Minimizes `f_m(x) + (rho / 2)(L_m(x) - z + u)^2` under the BS's resource limits.
pub fn local_x_update(
    objective: &SlotObjective,
    bs: usize,
    catalog: &ServiceCatalog,
    profile: &BsProfile,
    z: f64,
    u: f64,
    rho: f64,
) -> Result<LocalSolution> {
    let problem = local_problem(objective, bs, catalog, profile, z, u, rho);
    let h = objective.current.column(bs);
    solve_column(&h, objective.service, problem, catalog, profile, bs)
}

/// Value of the local augmented objective in `y` space, without the shared
/// constant. Used by tests and diagnostics.
pub fn local_value(objective: &SlotObjective, bs: usize, y: &[f64], z: f64, u: f64, rho: f64) -> f64 {
    let h = objective.current.column(bs);
    let cost: f64 = y
        .iter()
        .zip(&h)
        .zip(&objective.prices)
        .map(|((y, h), p)| p * (y - h).max(0.0))
        .sum();
    let l = objective.membership[bs] * y[objective.service];
    objective.backlog * objective.membership[bs] * cost + 0.5 * rho * (l - z + u).powi(2)
}

/// `(rho / 2) sum (z - v)^2 - gamma max z`.
pub fn z_objective(z: &[f64], v: &[f64], gamma: f64, rho: f64) -> f64 {
    let quad: f64 = z.iter().zip(v).map(|(z, v)| (z - v).powi(2)).sum();
    let best = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    0.5 * rho * quad - gamma * best
}

/// Minimizer of the z objective over the box restricted to the region where
/// `z_j` is the maximum. For a fixed maximum `t` every other entry sits at
/// `min(clamp(v_i, 0, upper_i), t)`, which leaves a convex problem in `t`
/// solved by water-filling over the clamped values.
fn z_region(v: &[f64], upper: &[f64], j: usize, gamma: f64, rho: f64) -> Vec<f64> {
    let caps: Vec<f64> = v.iter().zip(upper).map(|(v, u)| v.clamp(0.0, *u)).collect();
    let mut others: Vec<usize> = (0..v.len()).filter(|&i| i != j).collect();
    others.sort_by(|&a, &b| caps[b].total_cmp(&caps[a]));
    let mut sum = v[j] + gamma / rho;
    let mut count = 1.0;
    let mut level = sum;
    for &i in &others {
        if caps[i] <= level {
            break;
        }
        sum += v[i];
        count += 1.0;
        level = sum / count;
        if level >= caps[i] {
            // `v_i` lies above its cap, so the root sits on the kink.
            level = caps[i];
            break;
        }
    }
    let t = level.clamp(0.0, upper[j]);
    (0..v.len())
        .map(|i| if i == j { t } else { caps[i].min(t) })
        .collect()
}

/// Exact global minimizer of [`z_objective`] over `0 <= z_i <= upper_i`, by
/// enumerating which index holds the maximum. Ties go to the lowest index.
/// Valid for either sign of `gamma`.
pub fn z_update(v: &[f64], upper: &[f64], gamma: f64, rho: f64) -> Vec<f64> {
    let order: Vec<usize> = (0..v.len()).collect();
    z_update_ranked(v, upper, gamma, rho, &order)
}

/// [`z_update`] with an explicit tie-break: regions are tried in `order` and a
/// later one only wins if it is better by more than rounding noise.
pub fn z_update_ranked(v: &[f64], upper: &[f64], gamma: f64, rho: f64, order: &[usize]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &j in order {
        let cand = z_region(v, upper, j, gamma, rho);
        let value = z_objective(&cand, v, gamma, rho);
        if best.as_ref().is_none_or(|(b, _)| value < *b - 1e-12 * (1.0 + b.abs())) {
            best = Some((value, cand));
        }
    }
    best.map(|(_, z)| z).unwrap_or_default()
}

/// Share of the tighter resource still free in a cache column.
pub fn free_share(column: &[f64], catalog: &ServiceCatalog, profile: &BsProfile) -> f64 {
    let (s, c) = column_usage(column, catalog);
    ((profile.storage - s) / profile.storage).min((profile.compute - c) / profile.compute)
}

pub fn dual_update(u: f64, coupling: f64, z: f64) -> f64 {
    u + coupling - z
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    /// Best feasible decision seen, non-cluster columns zero.
    pub decision: CachingDecision,
    pub objective: f64,
    /// Rounds executed.
    pub iterations: usize,
    /// `sum_m (L_m - z_m)^2` after the last round.
    pub residual: f64,
    /// `rho^2 sum_m (z_m - z_m_prev)^2` after the last round.
    pub dual_residual: f64,
    pub converged: bool,
    /// 0 for the initial `x = 0` point, otherwise the round that produced
    /// `decision` (the last round when `polished`).
    pub best_iteration: usize,
    pub residual_history: Vec<f64>,
    /// Edge processing is slower than the backbone, so the shared term is convex.
    pub inverted_penalty: bool,
    /// The returned decision came from the unilateral polish, not an iterate.
    pub polished: bool,
}

fn column_feasible(decision: &CachingDecision, objective: &SlotObjective, catalog: &ServiceCatalog, profiles: &[BsProfile]) -> bool {
    objective.cluster.iter().all(|&m| {
        let y: Vec<f64> = decision
            .column(m)
            .iter()
            .zip(objective.current.column(m))
            .map(|(x, h)| crate::service::next_probability(h, *x))
            .collect();
        let (s, c) = column_usage(&y, catalog);
        fits(s, c, &profiles[m])
    })
}

/// Runs consensus-sharing ADMM from `u = 0`, `z_m = L_m(0)`.
///
/// Stops once both the primal residual and the dual residual (the change in
/// `z`, scaled by `rho`) fall to the tolerance, or after `max_iterations`
/// rounds. Returns the best feasible iterate by the slot objective, with the
/// starting point `x = 0` as a candidate.
///
/// The max term makes the slot problem nonconvex, so the iterates can settle
/// on the wrong BS or cycle between BSs. Every BS that held the consensus
/// maximum at some round is therefore also tried alone at its best
/// unilateral response, and that candidate competes with the iterates.
pub fn run_admm(
    objective: &SlotObjective,
    catalog: &ServiceCatalog,
    profiles: &[BsProfile],
    config: &AdmmConfig,
) -> Result<AdmmOutcome> {
    let services = objective.current.services();
    let bs_count = objective.bs_count();
    let agents = &objective.cluster;
    let gamma = objective.gamma();
    let rho = config.rho;

    let zero = ServiceGrid::zeros(services, bs_count);
    let mut best: Option<(f64, CachingDecision, usize)> = None;
    if column_feasible(&zero, objective, catalog, profiles) {
        best = Some((objective.total(&zero), zero.clone(), 0));
    }

    let mut z: Vec<f64> = agents.iter().map(|&m| objective.coupling(m, &vec![0.0; services])).collect();
    let mut u = vec![0.0; agents.len()];
    // Each copy is confined to the range its coupling can reach, which keeps
    // the consensus point and stops the concave max term from cycling.
    let upper: Vec<f64> = agents
        .iter()
        .map(|&m| objective.membership[m] * service_headroom(objective.service, catalog, &profiles[m]))
        .collect();
    // Copies that are otherwise interchangeable go to the BS with the most
    // room, so caching there does not evict anything.
    let mut order: Vec<usize> = (0..agents.len()).collect();
    let room: Vec<f64> = agents
        .iter()
        .map(|&m| free_share(&objective.current.column(m), catalog, &profiles[m]))
        .collect();
    order.sort_by(|&a, &b| room[b].total_cmp(&room[a]).then(a.cmp(&b)));
    let mut residual = 0.0;
    let mut dual_residual = 0.0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut leaders = vec![false; agents.len()];

    while iterations < config.max_iterations {
        iterations += 1;
        let locals = agents
            .iter()
            .enumerate()
            .map(|(i, &m)| local_x_update(objective, m, catalog, &profiles[m], z[i], u[i], rho))
            .collect::<Result<Vec<_>>>()?;

        let v: Vec<f64> = locals.iter().zip(&u).map(|(l, u)| l.coupling + u).collect();
        let z_next = z_update_ranked(&v, &upper, gamma, rho, &order);
        for i in 0..agents.len() {
            u[i] = dual_update(u[i], locals[i].coupling, z_next[i]);
        }
        residual = locals.iter().zip(&z_next).map(|(l, z)| (l.coupling - z).powi(2)).sum();
        dual_residual = rho * rho * z_next.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        history.push(residual);
        if let Some(lead) = order.iter().copied().reduce(|a, b| if z_next[b] > z_next[a] { b } else { a }) {
            leaders[lead] = true;
        }
        z = z_next;

        let mut decision = zero.clone();
        for (l, &m) in locals.iter().zip(agents) {
            decision.set_column(m, &l.x);
        }
        let value = objective.total(&decision);
        if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, decision, iterations));
        }

        if residual <= config.tolerance && dual_residual <= config.tolerance {
            converged = true;
            break;
        }
    }

    let mut polished = false;
    if gamma > 0.0 {
        for (i, &m) in agents.iter().enumerate().filter(|(i, _)| leaders[*i]) {
            let col = objective.current.column(m);
            let k = objective.service;
            let problem = ScalarProblem {
                hinge: objective.backlog * objective.membership[m] * objective.prices[k],
                anchor: col[k],
                curvature: 0.0,
                target: 0.0,
                reward: gamma,
                upper: upper[i],
            };
            let alone = solve_column(&col, k, problem, catalog, &profiles[m], m)?;
            let mut decision = zero.clone();
            decision.set_column(m, &alone.x);
            let value = objective.total(&decision);
            if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
                best = Some((value, decision, iterations));
                polished = true;
            }
        }
    }

    // Local updates always emit feasible columns, so `best` is set after one round.
    let (objective_value, decision, best_iteration) = best.expect("at least one feasible iterate");
    Ok(AdmmOutcome {
        decision,
        objective: objective_value,
        iterations,
        residual,
        dual_residual,
        converged,
        best_iteration,
        residual_history: history,
        inverted_penalty: gamma < 0.0,
        polished,
    })
}
