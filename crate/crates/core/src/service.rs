//! Service catalog, task requests and the probabilistic caching state machine.
//!
//! Cache entries are probabilities `h[k][m]` that service `k` sits on BS `m`.
//! A decision `x[k][m]` in `[-1, 1]` caches (`x > 0`) or removes (`x < 0`)
//! with probability `|x|`, and the next state is the expectation of the
//! resulting Bernoulli outcome.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::BsProfile;
use crate::rng::{stream_rng, Stream};

/// Slack allowed when checking resource constraints against accumulated
/// floating-point sums.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCatalog {
    /// `s_k`, storage units.
    pub sizes: Vec<f64>,
    /// `f_k`, compute reserved while cached and the processing speed at the edge.
    pub compute: Vec<f64>,
    /// `xi_k`, money per storage unit prefetched.
    pub cost_coefficients: Vec<f64>,
}

impl ServiceCatalog {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Prefetch cost of a full copy of service `k`, `xi_k * s_k`.
    pub fn prefetch_price(&self, k: usize) -> f64 {
        self.cost_coefficients[k] * self.sizes[k]
    }

    pub fn prefetch_prices(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.prefetch_price(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::config("services.sizes", "needs at least one service"));
        }
        let k = self.sizes.len();
        if self.compute.len() != k {
            return Err(Error::config("services.compute", format!("needs {k} entries")));
        }
        if self.cost_coefficients.len() != k {
            return Err(Error::config(
                "services.cost_coefficients",
                format!("needs {k} entries"),
            ));
        }
        for (key, values) in [
            ("services.sizes", &self.sizes),
            ("services.compute", &self.compute),
            ("services.cost_coefficients", &self.cost_coefficients),
        ] {
            if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::config(key, "entries must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub data_size: f64,
    pub workload: f64,
    /// Index of the single requested service.
    pub service: usize,
}

impl Task {
    /// One-hot request indicator over `k` services.
    pub fn indicator(&self, k: usize) -> Vec<f64> {
        (0..k).map(|i| if i == self.service { 1.0 } else { 0.0 }).collect()
    }
}

/// A `K x M` matrix of per-service, per-BS entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceGrid {
    services: usize,
    bs_count: usize,
    values: Vec<f64>,
}

impl ServiceGrid {
    pub fn zeros(services: usize, bs_count: usize) -> Self {
        ServiceGrid {
            services,
            bs_count,
            values: vec![0.0; services * bs_count],
        }
    }

    pub fn from_fn(services: usize, bs_count: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(services * bs_count);
        for k in 0..services {
            for m in 0..bs_count {
                values.push(f(k, m));
            }
        }
        ServiceGrid {
            services,
            bs_count,
            values,
        }
    }

    pub fn services(&self) -> usize {
        self.services
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.values[k * self.bs_count + m]
    }

    pub fn set(&mut self, k: usize, m: usize, value: f64) {
        self.values[k * self.bs_count + m] = value;
    }

    /// Column `m`: one entry per service.
    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.services).map(|k| self.get(k, m)).collect()
    }

    pub fn set_column(&mut self, m: usize, column: &[f64]) {
        for (k, v) in column.iter().enumerate() {
            self.set(k, m, *v);
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Cache probabilities `h`, entries in `[0, 1]`.
pub type CacheState = ServiceGrid;
/// Caching decision `x`, entries in `[-1, 1]`.
pub type CachingDecision = ServiceGrid;

/// Next-state cache probability `[x]^+ + h - |x| h`.
pub fn next_probability(h: f64, x: f64) -> f64 {
    x.max(0.0) + h - x.abs() * h
}

pub fn evolve_cache(h: &CacheState, x: &CachingDecision) -> Result<CacheState> {
    if h.services != x.services || h.bs_count != x.bs_count {
        return Err(Error::Contract("cache state and decision shapes differ".into()));
    }
    if let Some(v) = h.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("cache probability {v} outside [0, 1]")));
    }
    if let Some(v) = x.values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("caching decision {v} outside [-1, 1]")));
    }
    let values = h
        .values
        .iter()
        .zip(&x.values)
        .map(|(&h, &x)| next_probability(h, x).clamp(0.0, 1.0))
        .collect();
    Ok(ServiceGrid {
        services: h.services,
        bs_count: h.bs_count,
        values,
    })
}

/// Maps a decision to the next-state probability it produces.
pub fn reparam_to_y(x: f64, h: f64) -> f64 {
    next_probability(h, x)
}

/// Inverse of [`reparam_to_y`] for a fixed current state `h`. When `h` is 0 or
/// 1 and the target equals it, the minimal action `x = 0` is returned.
pub fn reparam_to_x(y: f64, h: f64) -> f64 {
    let x = if y >= h {
        if h < 1.0 {
            (y - h) / (1.0 - h)
        } else {
            0.0
        }
    } else if h > 0.0 {
        y / h - 1.0
    } else {
        0.0
    };
    x.clamp(-1.0, 1.0)
}

/// Expected prefetch cost of one BS: `sum_k xi_k s_k [x_k]^+ (1 - h_k)`.
pub fn prefetch_cost(x: &[f64], h: &[f64], catalog: &ServiceCatalog) -> f64 {
    x.iter()
        .zip(h)
        .enumerate()
        .map(|(k, (&x, &h))| catalog.prefetch_price(k) * x.max(0.0) * (1.0 - h))
        .sum()
}

/// Cluster cost `a(t)`: per-BS costs weighted by the membership row.
pub fn cluster_cost(
    x: &CachingDecision,
    h: &CacheState,
    catalog: &ServiceCatalog,
    membership: &[f64],
) -> f64 {
    membership
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| c * prefetch_cost(&x.column(m), &h.column(m), catalog))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceUsage {
    pub storage: Vec<f64>,
    pub compute: Vec<f64>,
    pub feasible: bool,
}

pub fn column_usage(column: &[f64], catalog: &ServiceCatalog) -> (f64, f64) {
    let storage = column.iter().zip(&catalog.sizes).map(|(h, s)| h * s).sum();
    let compute = column.iter().zip(&catalog.compute).map(|(h, f)| h * f).sum();
    (storage, compute)
}

pub fn fits(storage: f64, compute: f64, profile: &BsProfile) -> bool {
    storage <= profile.storage * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL
        && compute <= profile.compute * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL
}

pub fn resource_usage(h: &CacheState, catalog: &ServiceCatalog, profiles: &[BsProfile]) -> ResourceUsage {
    let mut storage = Vec::with_capacity(h.bs_count);
    let mut compute = Vec::with_capacity(h.bs_count);
    let mut feasible = true;
    for (m, profile) in profiles.iter().enumerate().take(h.bs_count) {
        let (s, c) = column_usage(&h.column(m), catalog);
        feasible &= fits(s, c, profile);
        storage.push(s);
        compute.push(c);
    }
    ResourceUsage {
        storage,
        compute,
        feasible,
    }
}

/// Cluster BS with the highest next-state probability of the requested
/// service, ties to the lowest index.
pub fn dispatch(cluster: &[usize], next: &CacheState, service: usize) -> usize {
    let mut best = cluster[0];
    for &m in &cluster[1..] {
        if next.get(service, m) > next.get(service, best) {
            best = m;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBreakdown {
    pub uplink: f64,
    pub edge: f64,
    pub backbone: f64,
    /// Expected processing delay given the dispatched cache probability.
    pub processing: f64,
    pub total: f64,
}

pub fn edge_delay(task: &Task, catalog: &ServiceCatalog) -> f64 {
    task.data_size * task.workload / catalog.compute[task.service]
}

pub fn backbone_delay(task: &Task, backbone_rate: f64) -> f64 {
    task.data_size / backbone_rate
}

pub fn delays(
    task: &Task,
    rate: f64,
    cached: f64,
    catalog: &ServiceCatalog,
    backbone_rate: f64,
) -> DelayBreakdown {
    delays_with_edge_fraction(task, rate, cached, catalog, backbone_rate, 1.0)
}

/// As [`delays`], but when the service is cached only `edge_fraction` of the
/// data is processed at the edge and the rest goes over the backbone.
pub fn delays_with_edge_fraction(
    task: &Task,
    rate: f64,
    cached: f64,
    catalog: &ServiceCatalog,
    backbone_rate: f64,
    edge_fraction: f64,
) -> DelayBreakdown {
    let uplink = crate::phy::uplink_delay(task.data_size, rate);
    let edge = edge_delay(task, catalog);
    let backbone = backbone_delay(task, backbone_rate);
    let served_at_edge = edge_fraction * edge + (1.0 - edge_fraction) * backbone;
    let processing = cached * served_at_edge + (1.0 - cached) * backbone;
    DelayBreakdown {
        uplink,
        edge,
        backbone,
        processing,
        total: uplink + processing,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestModel {
    /// Categorical request distribution over services, sums to 1.
    pub popularity: Vec<f64>,
    pub data_size: (f64, f64),
    pub workload: (f64, f64),
}

/// Zipf popularity `k^-exponent / H`, ranks starting at 1.
pub fn zipf(services: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=services).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn uniform_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Deterministic in `(seed, slot, user)`.
pub fn generate_task(model: &RequestModel, seed: u64, slot: usize, user: usize) -> Task {
    let mut rng = stream_rng(seed, Stream::Task, slot as u64, user as u64);
    let pick = WeightedIndex::new(&model.popularity).expect("validated popularity");
    let service = pick.sample(&mut rng);
    let data_size = uniform_in(&mut rng, model.data_size);
    let workload = uniform_in(&mut rng, model.workload);
    Task {
        data_size,
        workload,
        service,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(sizes: &[f64]) -> ServiceCatalog {
        ServiceCatalog {
            sizes: sizes.to_vec(),
            compute: vec![1.0; sizes.len()],
            cost_coefficients: vec![1.0; sizes.len()],
        }
    }

    #[test]
    fn evolve_examples() {
        assert_eq!(next_probability(0.3, 1.0), 1.0);
        assert_eq!(next_probability(0.5, 0.0), 0.5);
        assert!((next_probability(0.4, -0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn evolve_rejects_out_of_range() {
        let h = ServiceGrid::from_fn(1, 1, |_, _| 0.5);
        let x = ServiceGrid::from_fn(1, 1, |_, _| 1.5);
        assert!(matches!(evolve_cache(&h, &x), Err(Error::Contract(_))));
        let h = ServiceGrid::from_fn(1, 1, |_, _| -0.1);
        let x = ServiceGrid::zeros(1, 1);
        assert!(evolve_cache(&h, &x).is_err());
    }

    #[test]
    fn reparam_examples() {
        assert!((reparam_to_y(0.5, 0.4) - 0.7).abs() < 1e-15);
        assert!((reparam_to_x(0.2, 0.4) + 0.5).abs() < 1e-15);
        let x = reparam_to_x(0.7, 0.4);
        assert!((x - 0.5).abs() < 1e-15);
        assert!((reparam_to_y(x, 0.4) - 0.7).abs() < 1e-15);
        assert_eq!(reparam_to_x(0.0, 0.0), 0.0);
        assert_eq!(reparam_to_x(1.0, 1.0), 0.0);
        assert_eq!(reparam_to_x(0.6, 0.0), 0.6);
        assert_eq!(reparam_to_x(0.0, 1.0), -1.0);
    }

    #[test]
    fn prefetch_examples() {
        let one = ServiceCatalog {
            sizes: vec![10.0],
            compute: vec![1.0],
            cost_coefficients: vec![2.0],
        };
        assert!((prefetch_cost(&[0.5], &[0.2], &one) - 8.0).abs() < 1e-12);
        assert_eq!(prefetch_cost(&[-0.5], &[0.2], &one), 0.0);
        let two = ServiceCatalog {
            sizes: vec![10.0, 3.0],
            compute: vec![1.0, 1.0],
            cost_coefficients: vec![2.0, 1.0],
        };
        assert!((prefetch_cost(&[0.5, 1.0], &[0.2, 0.0], &two) - 11.0).abs() < 1e-12);
        assert_eq!(prefetch_cost(&[1.0, 1.0], &[1.0, 1.0], &two), 0.0);
    }

    #[test]
    fn cluster_cost_weights_membership() {
        let cat = catalog(&[2.0]);
        let x = ServiceGrid::from_fn(1, 3, |_, _| 1.0);
        let h = ServiceGrid::zeros(1, 3);
        assert_eq!(cluster_cost(&x, &h, &cat, &[1.0, 0.0, 1.0]), 4.0);
    }

    #[test]
    fn resource_examples() {
        let cat = catalog(&[4.0, 6.0]);
        let profile = |s| BsProfile { storage: s, compute: 100.0 };
        let zero = ServiceGrid::zeros(2, 1);
        let usage = resource_usage(&zero, &cat, &[profile(10.0)]);
        assert_eq!((usage.storage[0], usage.compute[0], usage.feasible), (0.0, 0.0, true));
        let full = ServiceGrid::from_fn(2, 1, |_, _| 1.0);
        let usage = resource_usage(&full, &cat, &[profile(10.0)]);
        assert_eq!(usage.storage[0], 10.0);
        assert!(usage.feasible);
        assert!(!resource_usage(&full, &cat, &[profile(9.0)]).feasible);
    }

    #[test]
    fn dispatch_rules() {
        let next = ServiceGrid::from_fn(1, 3, |_, m| [1.0, 0.3, 0.9][m]);
        assert_eq!(dispatch(&[1, 2], &next, 0), 2);
        let tie = ServiceGrid::from_fn(1, 3, |_, m| [0.0, 0.5, 0.5][m]);
        assert_eq!(dispatch(&[1, 2], &tie, 0), 1);
        // BS 0 holds the service with certainty but is outside the cluster.
        assert_ne!(dispatch(&[1, 2], &next, 0), 0);
    }

    #[test]
    fn delay_examples() {
        let cat = ServiceCatalog {
            sizes: vec![1.0],
            compute: vec![6.0],
            cost_coefficients: vec![1.0],
        };
        let task = Task {
            data_size: 10.0,
            workload: 3.0,
            service: 0,
        };
        let d = delays(&task, 2.0, 0.8, &cat, 1.0);
        assert_eq!((d.uplink, d.edge, d.backbone), (5.0, 5.0, 10.0));
        assert!((d.total - 11.0).abs() < 1e-12);
        assert!((delays(&task, 2.0, 1.0, &cat, 1.0).total - 10.0).abs() < 1e-12);
        assert!((delays(&task, 2.0, 0.0, &cat, 1.0).total - 15.0).abs() < 1e-12);
        assert!(delays(&task, 0.0, 0.5, &cat, 1.0).total.is_infinite());
        let partial = delays_with_edge_fraction(&task, 2.0, 1.0, &cat, 1.0, 0.5);
        assert!((partial.processing - 7.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_popularity_always_first() {
        let model = RequestModel {
            popularity: vec![1.0, 0.0, 0.0],
            data_size: (1.0, 2.0),
            workload: (1.0, 1.0),
        };
        for slot in 0..200 {
            let t = generate_task(&model, 3, slot, 0);
            assert_eq!(t.service, 0);
            assert!((1.0..2.0).contains(&t.data_size));
            assert_eq!(t.workload, 1.0);
        }
    }

    #[test]
    fn flat_zipf_frequencies() {
        let model = RequestModel {
            popularity: zipf(4, 0.0),
            data_size: (1.0, 1.0),
            workload: (1.0, 1.0),
        };
        let mut counts = [0usize; 4];
        let n = 100_000;
        for slot in 0..n {
            counts[generate_task(&model, 17, slot, 0).service] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn tasks_are_deterministic() {
        let model = RequestModel {
            popularity: zipf(6, 0.8),
            data_size: (4.0, 8.0),
            workload: (0.5, 1.5),
        };
        assert_eq!(generate_task(&model, 1, 9, 0), generate_task(&model, 1, 9, 0));
        assert_ne!(generate_task(&model, 1, 9, 0), generate_task(&model, 1, 10, 0));
    }

    proptest! {
        #[test]
        fn evolve_stays_in_range_and_is_monotone(h in 0.0f64..=1.0, x in -1.0f64..=1.0, dx in 0.0f64..=1.0) {
            let y = next_probability(h, x);
            prop_assert!((0.0..=1.0).contains(&y));
            let x2 = (x + dx).min(1.0);
            prop_assert!(next_probability(h, x2) >= y - 1e-15);
            prop_assert_eq!(next_probability(h, 0.0), h);
            prop_assert!((next_probability(h, 1.0) - 1.0).abs() <= f64::EPSILON);
            prop_assert_eq!(next_probability(h, -1.0), 0.0);
        }

        #[test]
        fn reparam_round_trip(h in 1e-6f64..(1.0 - 1e-6), x in -1.0f64..=1.0) {
            let back = reparam_to_x(reparam_to_y(x, h), h);
            prop_assert!((back - x).abs() <= 1e-12 * (1.0 / h).max(1.0 / (1.0 - h)).max(1.0));
        }

        #[test]
        fn prefetch_cost_nonnegative(x in -1.0f64..=1.0, h in 0.0f64..=1.0) {
            let cat = catalog(&[3.0]);
            let c = prefetch_cost(&[x], &[h], &cat);
            prop_assert!(c >= 0.0);
            prop_assert_eq!(c == 0.0, x <= 0.0 || h == 1.0);
        }

        #[test]
        fn processing_is_convex_combination(h in 0.0f64..=1.0, d in 0.1f64..10.0, w in 0.1f64..5.0) {
            let cat = ServiceCatalog { sizes: vec![1.0], compute: vec![2.0], cost_coefficients: vec![1.0] };
            let t = Task { data_size: d, workload: w, service: 0 };
            let b = delays(&t, 1.0, h, &cat, 0.7);
            let lo = b.edge.min(b.backbone);
            let hi = b.edge.max(b.backbone);
            prop_assert!(b.processing >= lo - 1e-12 && b.processing <= hi + 1e-12);
        }
    }
}
