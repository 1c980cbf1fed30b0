//! Virtual caching-cost queue and the per-slot drift-plus-penalty objective.
//!
//! The long-run budget on cluster prefetch cost becomes a queue `C(t)` whose
//! backlog prices caching in each slot. The per-slot objective is split into
//! one term per BS plus a shared term over the next-state probabilities of the
//! requested service, which is the form the consensus-sharing solver consumes.

use crate::error::{Error, Result};
use crate::service::{next_probability, CacheState, CachingDecision, ServiceCatalog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    /// Time-averaged cost budget `Cost^th`, also the per-slot service `b(t)`.
    pub cost_threshold: f64,
    /// Penalty weight `V` on the processing delay.
    pub penalty_weight: f64,
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost_threshold > 0.0) {
            return Err(Error::config("lyapunov.cost_threshold", "must be > 0"));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::config("lyapunov.penalty_weight", "must be >= 0"));
        }
        Ok(())
    }
}

/// `max(C + a - b, 0)`.
pub fn update_queue(backlog: f64, arrival: f64, service: f64) -> f64 {
    (backlog + arrival - service).max(0.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VirtualQueue {
    backlog: f64,
}

impl VirtualQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn backlog(&self) -> f64 {
        self.backlog
    }

    pub fn push(&mut self, arrival: f64, service: f64) -> f64 {
        self.backlog = update_queue(self.backlog, arrival, service);
        self.backlog
    }
}

/// Upper bound on `(a - b)^2 / 2`: half the squared worst-case cluster
/// prefetch cost plus half the squared threshold.
pub fn drift_upper_bound(
    h: &CacheState,
    catalog: &ServiceCatalog,
    membership: &[f64],
    cost_threshold: f64,
) -> f64 {
    let worst: f64 = membership
        .iter()
        .enumerate()
        .map(|(m, c)| {
            c * (0..catalog.len())
                .map(|k| catalog.prefetch_price(k) * (1.0 - h.get(k, m)))
                .sum::<f64>()
        })
        .sum();
    0.5 * (worst * worst + cost_threshold * cost_threshold)
}

/// Per-slot objective for one typical user, decomposed per BS.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotObjective {
    pub backlog: f64,
    pub drift: DriftConfig,
    pub membership: Vec<f64>,
    pub cluster: Vec<usize>,
    pub current: CacheState,
    pub prices: Vec<f64>,
    pub service: usize,
    pub edge_delay: f64,
    pub backbone_delay: f64,
    pub drift_bound: f64,
}

impl SlotObjective {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        backlog: f64,
        current: &CacheState,
        service: usize,
        catalog: &ServiceCatalog,
        cluster: &[usize],
        drift: DriftConfig,
        edge_delay: f64,
        backbone_delay: f64,
    ) -> Self {
        let bs_count = current.bs_count();
        let mut membership = vec![0.0; bs_count];
        for &m in cluster {
            membership[m] = 1.0;
        }
        let drift_bound = drift_upper_bound(current, catalog, &membership, drift.cost_threshold);
        SlotObjective {
            backlog,
            drift,
            membership,
            cluster: cluster.to_vec(),
            current: current.clone(),
            prices: catalog.prefetch_prices(),
            service,
            edge_delay,
            backbone_delay,
            drift_bound,
        }
    }

    pub fn bs_count(&self) -> usize {
        self.membership.len()
    }

    /// `(Q - C Cost^th) / M`, the constant each BS term carries.
    pub fn shared_constant(&self) -> f64 {
        (self.drift_bound - self.backlog * self.drift.cost_threshold) / self.bs_count() as f64
    }

    /// Slope `V (D^BKB - D^edge)` of the delay reward for raising the best
    /// cached probability.
    pub fn gamma(&self) -> f64 {
        self.drift.penalty_weight * (self.backbone_delay - self.edge_delay)
    }

    pub fn local_cost(&self, m: usize, x: &[f64]) -> f64 {
        let h = self.current.column(m);
        let cost: f64 = x
            .iter()
            .zip(&h)
            .zip(&self.prices)
            .map(|((x, h), p)| p * x.max(0.0) * (1.0 - h))
            .sum();
        self.backlog * self.membership[m] * cost + self.shared_constant()
    }

    /// `c_m` times the next-state probability of the requested service at `m`.
    pub fn coupling(&self, m: usize, x: &[f64]) -> f64 {
        self.membership[m] * next_probability(self.current.get(self.service, m), x[self.service])
    }

    /// `V max_m z_m (D^edge - D^BKB)`; zero for an empty argument.
    pub fn shared_penalty(&self, z: &[f64]) -> f64 {
        if z.is_empty() {
            return 0.0;
        }
        let best = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        -self.gamma() * best
    }

    pub fn total(&self, x: &CachingDecision) -> f64 {
        let mut sum = 0.0;
        let mut coupling = Vec::with_capacity(self.bs_count());
        for m in 0..self.bs_count() {
            let col = x.column(m);
            sum += self.local_cost(m, &col);
            coupling.push(self.coupling(m, &col));
        }
        sum + self.shared_penalty(&coupling)
    }

    /// [`total`](Self::total) plus the constant `V D^BKB` dropped from the
    /// shared term, i.e. with the full expected processing delay.
    pub fn total_with_backbone(&self, x: &CachingDecision) -> f64 {
        self.total(x) + self.drift.penalty_weight * self.backbone_delay
    }
}
