//! TOML configuration. Every key is optional; missing keys take the defaults
//! below. Unknown keys are rejected.
//!
//! ```toml
//! horizon = 100            # slots T
//! seed = 1                 # master seed
//! algorithm = "onconshad"  # onconshad | single | gibbs
//! typical_user = 0
//! backbone_rate = 1.0      # data units per time unit over the backbone
//!
//! [network]
//! bs_count = 10
//! antennas = 2
//! user_count = 5           # the typical user plus four interferers
//! user_power = 1.0          # scalar or one entry per user
//! noise_variance = 0.005
//! storage_capacity = 6.0    # scalar or one entry per BS
//! compute_capacity = 12.0   # scalar or one entry per BS
//! path_loss_exponent = 3.0  # 0 disables large-scale attenuation
//! reference_distance = 0.25
//! # bs_positions = [[x, y], ...]    default: two rows, unit spacing
//! # user_positions = [[x, y], ...]  default: spread along the rows
//!
//! [services]
//! sizes = [2, 3, 4, 2, 3, 5]             # storage units s_k
//! compute = [3, 4, 5, 3, 4, 5]           # compute units f_k
//! cost_coefficients = [0.2, 0.15, 0.125, 0.25, 0.175, 0.1]  # price per unit prefetched
//!
//! [requests]
//! zipf_exponent = 0.8
//! # popularity = [...]    explicit distribution, overrides zipf_exponent
//! data_size = [4.0, 8.0]  # uniform range
//! workload = [0.5, 1.5]   # uniform range, compute per data unit
//!
//! [clustering]
//! size = 3
//! policy = "dynamic"      # dynamic | fixed
//! # fixed_assignment = [[0, 1, 5], ...]  one BS list per user
//!
//! [lyapunov]
//! cost_threshold = 0.25
//! penalty_weight = 0.5
//!
//! [admm]
//! rho = 1.0
//! tolerance = 1e-4
//! max_iterations = 50
//!
//! [gibbs]
//! initial_temperature = 1.0
//! decay = 0.95
//! sweeps = 30
//! edge_fraction = 1.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::baselines::GibbsConfig;
use crate::error::{Error, Result};
use crate::lyapunov::DriftConfig;
use crate::phy::{BsProfile, PathLoss, Topology};
use crate::service::{zipf, RequestModel, ServiceCatalog};
use crate::sim::Scenario;

/// A value given once for everything or once per entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerEntity {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerEntity {
    fn expand(&self, key: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            PerEntity::Uniform(v) => Ok(vec![*v; n]),
            PerEntity::Each(v) if v.len() == n => Ok(v.clone()),
            PerEntity::Each(v) => Err(Error::config(key, format!("has {} entries, expected {n}", v.len()))),
        }
    }

    fn compact(values: &[f64]) -> Self {
        match values.first() {
            Some(&first) if values.iter().all(|v| *v == first) => PerEntity::Uniform(first),
            _ => PerEntity::Each(values.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub bs_count: usize,
    pub antennas: usize,
    pub user_count: usize,
    pub user_power: PerEntity,
    pub noise_variance: f64,
    pub storage_capacity: PerEntity,
    pub compute_capacity: PerEntity,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_positions: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_positions: Option<Vec<[f64; 2]>>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            bs_count: 10,
            antennas: 2,
            user_count: 5,
            user_power: PerEntity::Uniform(1.0),
            noise_variance: 0.005,
            storage_capacity: PerEntity::Uniform(6.0),
            compute_capacity: PerEntity::Uniform(12.0),
            path_loss_exponent: 3.0,
            reference_distance: 0.25,
            bs_positions: None,
            user_positions: None,
        }
    }
}

fn grid_columns(bs_count: usize) -> usize {
    bs_count.div_ceil(2).max(1)
}

/// BSs on two rows with unit spacing.
pub fn default_bs_positions(bs_count: usize) -> Vec<[f64; 2]> {
    let cols = grid_columns(bs_count);
    (0..bs_count)
        .map(|m| [(m % cols) as f64, (m / cols) as f64])
        .collect()
}

/// Users spread evenly along the BS rows, alternating between them.
pub fn default_user_positions(bs_count: usize, user_count: usize) -> Vec<[f64; 2]> {
    let span = (grid_columns(bs_count) as f64 - 1.0).max(1.0);
    (0..user_count)
        .map(|u| {
            let x = span * (u as f64 + 0.5) / user_count as f64;
            let y = if u % 2 == 0 { 0.25 } else { 0.75 };
            [x, y]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServicesConfig {
    pub sizes: Vec<f64>,
    pub compute: Vec<f64>,
    pub cost_coefficients: Vec<f64>,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        ServicesConfig {
            sizes: vec![2.0, 3.0, 4.0, 2.0, 3.0, 5.0],
            compute: vec![3.0, 4.0, 5.0, 3.0, 4.0, 5.0],
            cost_coefficients: vec![0.2, 0.15, 0.125, 0.25, 0.175, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestsConfig {
    pub zipf_exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popularity: Option<Vec<f64>>,
    pub data_size: [f64; 2],
    pub workload: [f64; 2],
}

impl Default for RequestsConfig {
    fn default() -> Self {
        RequestsConfig {
            zipf_exponent: 0.8,
            popularity: None,
            data_size: [4.0, 8.0],
            workload: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub size: usize,
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_assignment: Option<Vec<Vec<usize>>>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            size: 3,
            policy: "dynamic".into(),
            fixed_assignment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub cost_threshold: f64,
    pub penalty_weight: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            cost_threshold: 0.25,
            penalty_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmSection {
    pub rho: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AdmmSection {
    fn default() -> Self {
        let d = AdmmConfig::default();
        AdmmSection {
            rho: d.rho,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSection {
    pub initial_temperature: f64,
    pub decay: f64,
    pub sweeps: usize,
    pub edge_fraction: f64,
}

impl Default for GibbsSection {
    fn default() -> Self {
        let d = GibbsConfig::default();
        GibbsSection {
            initial_temperature: d.initial_temperature,
            decay: d.decay,
            sweeps: d.sweeps,
            edge_fraction: d.edge_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub horizon: usize,
    pub seed: u64,
    pub algorithm: String,
    pub typical_user: usize,
    pub backbone_rate: f64,
    pub network: NetworkConfig,
    pub services: ServicesConfig,
    pub requests: RequestsConfig,
    pub clustering: ClusteringConfig,
    pub lyapunov: LyapunovConfig,
    pub admm: AdmmSection,
    pub gibbs: GibbsSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            horizon: 100,
            seed: 1,
            algorithm: "onconshad".into(),
            typical_user: 0,
            backbone_rate: 1.0,
            network: NetworkConfig::default(),
            services: ServicesConfig::default(),
            requests: RequestsConfig::default(),
            clustering: ClusteringConfig::default(),
            lyapunov: LyapunovConfig::default(),
            admm: AdmmSection::default(),
            gibbs: GibbsSection::default(),
        }
    }
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        let net = &self.network;
        let storage = net.storage_capacity.expand("network.storage_capacity", net.bs_count)?;
        let compute = net.compute_capacity.expand("network.compute_capacity", net.bs_count)?;
        let user_powers = net.user_power.expand("network.user_power", net.user_count)?;
        let path_loss = if net.path_loss_exponent == 0.0 {
            None
        } else {
            Some(PathLoss {
                exponent: net.path_loss_exponent,
                reference_distance: net.reference_distance,
                bs_positions: net
                    .bs_positions
                    .clone()
                    .unwrap_or_else(|| default_bs_positions(net.bs_count)),
                user_positions: net
                    .user_positions
                    .clone()
                    .unwrap_or_else(|| default_user_positions(net.bs_count, net.user_count)),
            })
        };
        let topology = Topology {
            antennas: net.antennas,
            bs_profiles: storage
                .into_iter()
                .zip(compute)
                .map(|(storage, compute)| BsProfile { storage, compute })
                .collect(),
            user_powers,
            noise_variance: net.noise_variance,
            path_loss,
        };
        let catalog = ServiceCatalog {
            sizes: self.services.sizes.clone(),
            compute: self.services.compute.clone(),
            cost_coefficients: self.services.cost_coefficients.clone(),
        };
        let req = &self.requests;
        let popularity = match &req.popularity {
            Some(p) => p.clone(),
            None => {
                if !(req.zipf_exponent >= 0.0) {
                    return Err(Error::config("requests.zipf_exponent", "must be >= 0"));
                }
                zipf(catalog.len(), req.zipf_exponent)
            }
        };
        let scenario = Scenario {
            topology,
            catalog,
            requests: RequestModel {
                popularity,
                data_size: (req.data_size[0], req.data_size[1]),
                workload: (req.workload[0], req.workload[1]),
            },
            cluster_size: self.clustering.size,
            cluster_mode: self.clustering.policy.parse()?,
            fixed_assignment: self.clustering.fixed_assignment.clone(),
            horizon: self.horizon,
            drift: DriftConfig {
                cost_threshold: self.lyapunov.cost_threshold,
                penalty_weight: self.lyapunov.penalty_weight,
            },
            admm: AdmmConfig {
                rho: self.admm.rho,
                tolerance: self.admm.tolerance,
                max_iterations: self.admm.max_iterations,
            },
            gibbs: GibbsConfig {
                initial_temperature: self.gibbs.initial_temperature,
                decay: self.gibbs.decay,
                sweeps: self.gibbs.sweeps,
                edge_fraction: self.gibbs.edge_fraction,
            },
            algorithm: self.algorithm.parse()?,
            backbone_rate: self.backbone_rate,
            seed: self.seed,
            typical_user: self.typical_user,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Fully explicit configuration describing `scenario`.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let t = &scenario.topology;
        let storage: Vec<f64> = t.bs_profiles.iter().map(|p| p.storage).collect();
        let compute: Vec<f64> = t.bs_profiles.iter().map(|p| p.compute).collect();
        let defaults = NetworkConfig::default();
        let (exponent, reference_distance, bs_positions, user_positions) = match &t.path_loss {
            Some(pl) => (
                pl.exponent,
                pl.reference_distance,
                Some(pl.bs_positions.clone()),
                Some(pl.user_positions.clone()),
            ),
            None => (0.0, defaults.reference_distance, None, None),
        };
        ConfigFile {
            horizon: scenario.horizon,
            seed: scenario.seed,
            algorithm: scenario.algorithm.name().into(),
            typical_user: scenario.typical_user,
            backbone_rate: scenario.backbone_rate,
            network: NetworkConfig {
                bs_count: t.bs_count(),
                antennas: t.antennas,
                user_count: t.user_count(),
                user_power: PerEntity::compact(&t.user_powers),
                noise_variance: t.noise_variance,
                storage_capacity: PerEntity::compact(&storage),
                compute_capacity: PerEntity::compact(&compute),
                path_loss_exponent: exponent,
                reference_distance,
                bs_positions,
                user_positions,
            },
            services: ServicesConfig {
                sizes: scenario.catalog.sizes.clone(),
                compute: scenario.catalog.compute.clone(),
                cost_coefficients: scenario.catalog.cost_coefficients.clone(),
            },
            requests: RequestsConfig {
                zipf_exponent: RequestsConfig::default().zipf_exponent,
                popularity: Some(scenario.requests.popularity.clone()),
                data_size: [scenario.requests.data_size.0, scenario.requests.data_size.1],
                workload: [scenario.requests.workload.0, scenario.requests.workload.1],
            },
            clustering: ClusteringConfig {
                size: scenario.cluster_size,
                policy: scenario.cluster_mode.name().into(),
                fixed_assignment: scenario.fixed_assignment.clone(),
            },
            lyapunov: LyapunovConfig {
                cost_threshold: scenario.drift.cost_threshold,
                penalty_weight: scenario.drift.penalty_weight,
            },
            admm: AdmmSection {
                rho: scenario.admm.rho,
                tolerance: scenario.admm.tolerance,
                max_iterations: scenario.admm.max_iterations,
            },
            gibbs: GibbsSection {
                initial_temperature: scenario.gibbs.initial_temperature,
                decay: scenario.gibbs.decay,
                sweeps: scenario.gibbs.sweeps,
                edge_fraction: scenario.gibbs.edge_fraction,
            },
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<Scenario> {
    ConfigFile::from_toml(text)?.into_scenario()
}

pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn default_scenario() -> Scenario {
    ConfigFile::default()
        .into_scenario()
        .expect("built-in defaults are valid")
}

pub fn serialize_scenario(scenario: &Scenario) -> Result<String> {
    ConfigFile::from_scenario(scenario).to_toml()
}
