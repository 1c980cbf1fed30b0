//! Slot-by-slot simulation of one typical user: channels and clusters, uplink
//! rate, virtual queue, request, caching decision, cache evolution, metrics.

use std::fmt;
use std::str::FromStr;

use crate::admm::{run_admm, AdmmConfig};
use crate::baselines::{gibbs_step, single_bs_step, GibbsConfig};
use crate::error::{Error, Result};
use crate::lyapunov::{DriftConfig, SlotObjective, VirtualQueue};
use crate::phy::{
    form_clusters, generate_channels, large_scale_clusters, rate_report, ClusterAssignment, ClusterPolicy, Topology,
};
use crate::rng::{stream_rng, Stream};
use crate::service::{
    backbone_delay, cluster_cost, delays_with_edge_fraction, dispatch, edge_delay, evolve_cache, generate_task,
    resource_usage, CacheState, RequestModel, ServiceCatalog, ServiceGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    OnConShad,
    SingleBs,
    Gibbs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::OnConShad, Algorithm::SingleBs, Algorithm::Gibbs];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OnConShad => "onconshad",
            Algorithm::SingleBs => "single",
            Algorithm::Gibbs => "gibbs",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onconshad" => Ok(Algorithm::OnConShad),
            "single" => Ok(Algorithm::SingleBs),
            "gibbs" => Ok(Algorithm::Gibbs),
            other => Err(Error::config(
                "algorithm",
                format!("unknown value `{other}` (expected onconshad, single or gibbs)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    Dynamic,
    Fixed,
}

impl ClusterMode {
    pub fn name(self) -> &'static str {
        match self {
            ClusterMode::Dynamic => "dynamic",
            ClusterMode::Fixed => "fixed",
        }
    }
}

impl FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(ClusterMode::Dynamic),
            "fixed" => Ok(ClusterMode::Fixed),
            other => Err(Error::config(
                "clustering.policy",
                format!("unknown value `{other}` (expected dynamic or fixed)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub catalog: ServiceCatalog,
    pub requests: RequestModel,
    pub cluster_size: usize,
    pub cluster_mode: ClusterMode,
    /// Static division used by the fixed mode. When absent, clusters are chosen
    /// from large-scale gains (or from the first slot's channels without path loss).
    pub fixed_assignment: Option<Vec<Vec<usize>>>,
    pub horizon: usize,
    pub drift: DriftConfig,
    pub admm: AdmmConfig,
    pub gibbs: GibbsConfig,
    pub algorithm: Algorithm,
    pub backbone_rate: f64,
    pub seed: u64,
    pub typical_user: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.catalog.validate()?;
        self.drift.validate()?;
        self.admm.validate()?;
        self.gibbs.validate()?;
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        let m = self.topology.bs_count();
        if self.cluster_size == 0 || self.cluster_size > m {
            return Err(Error::config("clustering.size", format!("must lie in 1..={m}")));
        }
        if self.typical_user >= self.topology.user_count() {
            return Err(Error::config("typical_user", "must index an existing user"));
        }
        if !(self.backbone_rate > 0.0) {
            return Err(Error::config("backbone_rate", "must be > 0"));
        }
        let k = self.catalog.len();
        if self.requests.popularity.len() != k {
            return Err(Error::config("requests.popularity", format!("needs {k} entries")));
        }
        if self.requests.popularity.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::config("requests.popularity", "entries must be >= 0"));
        }
        let total: f64 = self.requests.popularity.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("requests.popularity", "must sum to 1"));
        }
        for (key, (lo, hi)) in [
            ("requests.data_size", self.requests.data_size),
            ("requests.workload", self.requests.workload),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::config(key, "needs 0 < min <= max"));
            }
        }
        if let Some(fixed) = &self.fixed_assignment {
            if fixed.len() != self.topology.user_count() {
                return Err(Error::config(
                    "clustering.fixed_assignment",
                    "needs one cluster per user",
                ));
            }
            if fixed.iter().any(|c| c.len() != self.cluster_size) {
                return Err(Error::config(
                    "clustering.fixed_assignment",
                    "every cluster must have `clustering.size` BSs",
                ));
            }
            ClusterAssignment::new(m, fixed.clone())?;
        }
        Ok(())
    }

    fn cluster_policy(&self) -> Result<ClusterPolicy> {
        match self.cluster_mode {
            ClusterMode::Dynamic => Ok(ClusterPolicy::Dynamic),
            ClusterMode::Fixed => {
                let fixed = match &self.fixed_assignment {
                    Some(members) => ClusterAssignment::new(self.topology.bs_count(), members.clone())?,
                    None if self.topology.path_loss.is_some() => {
                        large_scale_clusters(&self.topology, self.cluster_size)?
                    }
                    None => {
                        let first = generate_channels(&self.topology, self.seed, 1);
                        form_clusters(&first, self.cluster_size, &ClusterPolicy::Dynamic)?
                    }
                };
                Ok(ClusterPolicy::Fixed(fixed))
            }
        }
    }
}

/// One row of the per-slot trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub slot: usize,
    pub service: usize,
    pub data_size: f64,
    pub uplink_rate: f64,
    pub uplink_delay: f64,
    pub edge_delay: f64,
    pub backbone_delay: f64,
    /// Expected processing delay, backbone term included.
    pub processing_delay: f64,
    pub total_delay: f64,
    /// Slot objective with the shared term in `max h (D^edge - D^BKB)` form.
    pub objective: f64,
    /// The same objective with `V D^BKB` added back.
    pub objective_with_backbone: f64,
    pub caching_cost: f64,
    pub queue_before: f64,
    pub queue_after: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub dispatched_bs: usize,
    pub dispatched_probability: f64,
    pub cluster: Vec<usize>,
    pub storage_usage: Vec<f64>,
    pub compute_usage: Vec<f64>,
    pub feasible: bool,
    pub avg_total_delay: f64,
    pub avg_caching_cost: f64,
    pub degenerate_beam: bool,
    pub inverted_penalty: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub cluster_size: usize,
    pub cluster_mode: ClusterMode,
    pub seed: u64,
    pub horizon: usize,
    pub penalty_weight: f64,
    pub cost_threshold: f64,
    pub avg_total_delay: f64,
    pub avg_uplink_delay: f64,
    pub avg_processing_delay: f64,
    pub avg_caching_cost: f64,
    pub final_queue: f64,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub nonconverged_slots: usize,
    pub degenerate_slots: usize,
    pub failed_slots: usize,
    pub accounting_holds: bool,
    pub all_feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

struct Decision {
    x: ServiceGrid,
    objective_h: CacheState,
    objective: f64,
    objective_with_backbone: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    inverted: bool,
    /// BSs the dispatch may choose from, and whose costs enter `a(t)`.
    serving: Vec<usize>,
    rate: f64,
    degenerate: bool,
    edge_fraction: f64,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Simulates `scenario.horizon` slots from an empty cache and queue.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let topology = &scenario.topology;
    let catalog = &scenario.catalog;
    let user = scenario.typical_user;
    let policy = scenario.cluster_policy()?;

    let mut h = ServiceGrid::zeros(catalog.len(), topology.bs_count());
    let mut queue = VirtualQueue::new();
    let mut records: Vec<TraceRecord> = Vec::with_capacity(scenario.horizon);
    let mut delay_sum = 0.0;
    let mut cost_sum = 0.0;

    for slot in 1..=scenario.horizon {
        let mut step = || -> Result<TraceRecord> {
            let channels = generate_channels(topology, scenario.seed, slot);
            let clusters = form_clusters(&channels, scenario.cluster_size, &policy)?;
            let backlog = queue.backlog();
            let task = generate_task(&scenario.requests, scenario.seed, slot, user);
            let d_edge = edge_delay(&task, catalog);
            let d_bkb = backbone_delay(&task, scenario.backbone_rate);

            let decision = match scenario.algorithm {
                Algorithm::OnConShad => {
                    let report = rate_report(topology, &channels, &clusters, user);
                    let cluster = clusters.cluster(user).to_vec();
                    let objective =
                        SlotObjective::assemble(backlog, &h, task.service, catalog, &cluster, scenario.drift, d_edge, d_bkb);
                    let out = run_admm(&objective, catalog, &topology.bs_profiles, &scenario.admm)?;
                    Decision {
                        objective_with_backbone: objective.total_with_backbone(&out.decision),
                        x: out.decision,
                        objective_h: h.clone(),
                        objective: out.objective,
                        iterations: out.iterations,
                        residual: out.residual,
                        converged: out.converged,
                        inverted: out.inverted_penalty,
                        serving: cluster,
                        rate: report.rate,
                        degenerate: report.degenerate,
                        edge_fraction: 1.0,
                    }
                }
                Algorithm::Gibbs => {
                    let report = rate_report(topology, &channels, &clusters, user);
                    let cluster = clusters.cluster(user).to_vec();
                    let phi = scenario.gibbs.edge_fraction;
                    let effective_edge = phi * d_edge + (1.0 - phi) * d_bkb;
                    let objective = SlotObjective::assemble(
                        backlog,
                        &h,
                        task.service,
                        catalog,
                        &cluster,
                        scenario.drift,
                        effective_edge,
                        d_bkb,
                    );
                    let mut rng = stream_rng(scenario.seed, Stream::Gibbs, slot as u64, user as u64);
                    let out = gibbs_step(&objective, catalog, &topology.bs_profiles, &scenario.gibbs, &mut rng);
                    Decision {
                        objective_with_backbone: objective.total_with_backbone(&out.decision),
                        x: out.decision,
                        objective_h: h.clone(),
                        objective: out.energy,
                        iterations: out.sweeps,
                        residual: 0.0,
                        converged: true,
                        inverted: objective.gamma() < 0.0,
                        serving: cluster,
                        rate: report.rate,
                        degenerate: report.degenerate,
                        edge_fraction: phi,
                    }
                }
                Algorithm::SingleBs => {
                    let out = single_bs_step(
                        topology,
                        &channels,
                        user,
                        &h,
                        &task,
                        scenario.drift.penalty_weight,
                        catalog,
                        d_edge,
                        d_bkb,
                    )?;
                    let v = scenario.drift.penalty_weight;
                    Decision {
                        objective_with_backbone: out.objective,
                        objective: out.objective - v * d_bkb,
                        x: out.decision,
                        objective_h: h.clone(),
                        iterations: 0,
                        residual: 0.0,
                        converged: true,
                        inverted: d_edge > d_bkb,
                        serving: vec![out.bs],
                        rate: out.rate,
                        degenerate: false,
                        edge_fraction: 1.0,
                    }
                }
            };

            let next = evolve_cache(&decision.objective_h, &decision.x)?;
            let usage = resource_usage(&next, catalog, &topology.bs_profiles);
            if !usage.feasible {
                return Err(Error::Contract("post-decision cache state violates resource limits".into()));
            }
            let mut membership = vec![0.0; topology.bs_count()];
            for &m in &decision.serving {
                membership[m] = 1.0;
            }
            let cost = cluster_cost(&decision.x, &decision.objective_h, catalog, &membership);
            let bs = dispatch(&decision.serving, &next, task.service);
            let cached = next.get(task.service, bs);
            let delay = delays_with_edge_fraction(&task, decision.rate, cached, catalog, scenario.backbone_rate, decision.edge_fraction);
            let queue_after = crate::lyapunov::update_queue(backlog, cost, scenario.drift.cost_threshold);

            h = next;
            Ok(TraceRecord {
                slot,
                service: task.service,
                data_size: task.data_size,
                uplink_rate: decision.rate,
                uplink_delay: delay.uplink,
                edge_delay: delay.edge,
                backbone_delay: delay.backbone,
                processing_delay: delay.processing,
                total_delay: delay.total,
                objective: decision.objective,
                objective_with_backbone: decision.objective_with_backbone,
                caching_cost: cost,
                queue_before: backlog,
                queue_after,
                iterations: decision.iterations,
                residual: decision.residual,
                converged: decision.converged,
                dispatched_bs: bs,
                dispatched_probability: cached,
                cluster: decision.serving,
                storage_usage: usage.storage,
                compute_usage: usage.compute,
                feasible: usage.feasible,
                avg_total_delay: 0.0,
                avg_caching_cost: 0.0,
                degenerate_beam: decision.degenerate,
                inverted_penalty: decision.inverted,
                failed: !delay.uplink.is_finite(),
            })
        };
        let mut record = step().map_err(|e| e.at_slot(slot))?;
        queue.push(record.caching_cost, scenario.drift.cost_threshold);
        delay_sum += record.total_delay;
        cost_sum += record.caching_cost;
        record.avg_total_delay = delay_sum / slot as f64;
        record.avg_caching_cost = cost_sum / slot as f64;
        records.push(record);
    }

    let n = records.len();
    let avg_cost = mean(records.iter().map(|r| r.caching_cost), n);
    let final_queue = queue.backlog();
    let accounting_holds =
        avg_cost <= scenario.drift.cost_threshold + final_queue / n as f64 + 1e-9 * (1.0 + avg_cost);
    if !accounting_holds {
        return Err(Error::Contract(format!(
            "queue accounting violated: average cost {avg_cost} exceeds threshold plus backlog share"
        )));
    }
    let summary = RunSummary {
        algorithm: scenario.algorithm,
        cluster_size: scenario.cluster_size,
        cluster_mode: scenario.cluster_mode,
        seed: scenario.seed,
        horizon: scenario.horizon,
        penalty_weight: scenario.drift.penalty_weight,
        cost_threshold: scenario.drift.cost_threshold,
        avg_total_delay: mean(records.iter().map(|r| r.total_delay), n),
        avg_uplink_delay: mean(records.iter().map(|r| r.uplink_delay), n),
        avg_processing_delay: mean(records.iter().map(|r| r.processing_delay), n),
        avg_caching_cost: avg_cost,
        final_queue,
        mean_iterations: mean(records.iter().map(|r| r.iterations as f64), n),
        max_iterations: records.iter().map(|r| r.iterations).max().unwrap_or(0),
        nonconverged_slots: records.iter().filter(|r| !r.converged).count(),
        degenerate_slots: records.iter().filter(|r| r.degenerate_beam).count(),
        failed_slots: records.iter().filter(|r| r.failed).count(),
        accounting_holds,
        all_feasible: records.iter().all(|r| r.feasible),
    };
    Ok(RunOutput { records, summary })
}

/// A sweep parameter and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis {
    ClusterSize(Vec<usize>),
    Algorithm(Vec<Algorithm>),
    ClusterMode(Vec<ClusterMode>),
    Seed(Vec<u64>),
    PenaltyWeight(Vec<f64>),
    CostThreshold(Vec<f64>),
    Horizon(Vec<usize>),
}

impl GridAxis {
    fn len(&self) -> usize {
        match self {
            GridAxis::ClusterSize(v) => v.len(),
            GridAxis::Algorithm(v) => v.len(),
            GridAxis::ClusterMode(v) => v.len(),
            GridAxis::Seed(v) => v.len(),
            GridAxis::PenaltyWeight(v) => v.len(),
            GridAxis::CostThreshold(v) => v.len(),
            GridAxis::Horizon(v) => v.len(),
        }
    }

    fn apply(&self, index: usize, scenario: &mut Scenario) {
        match self {
            GridAxis::ClusterSize(v) => scenario.cluster_size = v[index],
            GridAxis::Algorithm(v) => scenario.algorithm = v[index],
            GridAxis::ClusterMode(v) => scenario.cluster_mode = v[index],
            GridAxis::Seed(v) => scenario.seed = v[index],
            GridAxis::PenaltyWeight(v) => scenario.drift.penalty_weight = v[index],
            GridAxis::CostThreshold(v) => scenario.drift.cost_threshold = v[index],
            GridAxis::Horizon(v) => scenario.horizon = v[index],
        }
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::config(format!("grid.{key}"), format!("cannot parse `{s}`")))
        })
        .collect()
}

fn parse_range_or_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| Error::config(format!("grid.{key}"), "bad range start"))?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| Error::config(format!("grid.{key}"), "bad range end"))?;
        return Ok((lo..=hi).collect());
    }
    parse_list(key, raw)
}

/// Parses `key=v1,v2;key2=lo..hi` into axes. Integer axes accept inclusive
/// ranges `lo..hi`.
pub fn parse_grid(text: &str) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Error::config("grid", format!("`{part}` is not key=values")))?;
        let key = key.trim();
        let axis = match key {
            "cluster_size" => GridAxis::ClusterSize(parse_range_or_list(key, values)?),
            "algorithm" => GridAxis::Algorithm(
                values
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>>>()?,
            ),
            "cluster_policy" => GridAxis::ClusterMode(
                values
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>>>()?,
            ),
            "seed" => GridAxis::Seed(
                parse_range_or_list(key, values)?
                    .into_iter()
                    .map(|s| s as u64)
                    .collect(),
            ),
            "penalty_weight" => GridAxis::PenaltyWeight(parse_list(key, values)?),
            "cost_threshold" => GridAxis::CostThreshold(parse_list(key, values)?),
            "horizon" => GridAxis::Horizon(parse_range_or_list(key, values)?),
            other => return Err(Error::config("grid", format!("unknown axis `{other}`"))),
        };
        if axis.len() == 0 {
            return Err(Error::config(format!("grid.{key}"), "needs at least one value"));
        }
        axes.push(axis);
    }
    if axes.is_empty() {
        return Err(Error::config("grid", "needs at least one axis"));
    }
    Ok(axes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    pub scenario: Scenario,
    pub outcome: std::result::Result<RunSummary, String>,
}

/// Every grid point in row-major order (last axis fastest).
pub fn grid_points(template: &Scenario, axes: &[GridAxis]) -> Vec<Scenario> {
    let total: usize = axes.iter().map(GridAxis::len).product();
    (0..total)
        .map(|mut idx| {
            let mut scenario = template.clone();
            for axis in axes.iter().rev() {
                axis.apply(idx % axis.len(), &mut scenario);
                idx /= axis.len();
            }
            scenario
        })
        .collect()
}

/// Runs every grid point; a failing point is recorded and the sweep continues.
pub fn sweep(template: &Scenario, axes: &[GridAxis]) -> Vec<SweepRow> {
    grid_points(template, axes)
        .into_iter()
        .enumerate()
        .map(|(point, scenario)| {
            let outcome = run_scenario(&scenario).map(|o| o.summary).map_err(|e| e.to_string());
            SweepRow {
                point,
                scenario,
                outcome,
            }
        })
        .collect()
}
