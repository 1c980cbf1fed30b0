//! Uplink physical layer: block-fading channels, user-centric BS clusters,
//! projection zero-forcing receivers and the resulting SINR and rate.
//!
//! SINR is evaluated analytically from the channel matrices; no symbols are
//! transmitted. Bandwidth is normalized to one, so a rate is a spectral
//! efficiency in bits per channel use.

use nalgebra::{Complex, DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub type C64 = Complex<f64>;

/// Projected beam norms below this are treated as lying in the interferers' span.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Relative singular-value cutoff used when building the interferer subspace.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsProfile {
    pub storage: f64,
    pub compute: f64,
}

/// Log-distance large-scale attenuation `(max(d, d_ref) / d_ref)^-exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLoss {
    pub exponent: f64,
    pub reference_distance: f64,
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
}

impl PathLoss {
    pub fn gain(&self, bs: usize, user: usize) -> f64 {
        let [bx, by] = self.bs_positions[bs];
        let [ux, uy] = self.user_positions[user];
        let d = ((bx - ux).powi(2) + (by - uy).powi(2)).sqrt();
        (d.max(self.reference_distance) / self.reference_distance).powf(-self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub antennas: usize,
    pub bs_profiles: Vec<BsProfile>,
    pub user_powers: Vec<f64>,
    pub noise_variance: f64,
    pub path_loss: Option<PathLoss>,
}

impl Topology {
    pub fn bs_count(&self) -> usize {
        self.bs_profiles.len()
    }

    pub fn user_count(&self) -> usize {
        self.user_powers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bs_profiles.is_empty() {
            return Err(Error::config("network.bs_count", "must be at least 1"));
        }
        if self.antennas == 0 {
            return Err(Error::config("network.antennas", "must be at least 1"));
        }
        if self.user_powers.is_empty() {
            return Err(Error::config("network.user_count", "must be at least 1"));
        }
        for p in &self.bs_profiles {
            if !(p.storage > 0.0) {
                return Err(Error::config("network.storage_capacity", "must be > 0"));
            }
            if !(p.compute > 0.0) {
                return Err(Error::config("network.compute_capacity", "must be > 0"));
            }
        }
        if self.user_powers.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::config("network.user_power", "must be > 0"));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::config("network.noise_variance", "must be > 0"));
        }
        if let Some(pl) = &self.path_loss {
            if pl.bs_positions.len() != self.bs_count() {
                return Err(Error::config(
                    "network.bs_positions",
                    format!("needs {} entries", self.bs_count()),
                ));
            }
            if pl.user_positions.len() != self.user_count() {
                return Err(Error::config(
                    "network.user_positions",
                    format!("needs {} entries", self.user_count()),
                ));
            }
            if !(pl.reference_distance > 0.0) {
                return Err(Error::config("network.reference_distance", "must be > 0"));
            }
            if !(pl.exponent >= 0.0) {
                return Err(Error::config("network.path_loss_exponent", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn large_scale_gain(&self, bs: usize, user: usize) -> f64 {
        self.path_loss.as_ref().map_or(1.0, |pl| pl.gain(bs, user))
    }
}

/// Channel coefficients for one slot, laid out `[bs][user][antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub slot: usize,
    bs_count: usize,
    user_count: usize,
    antennas: usize,
    coeffs: Vec<C64>,
}

impl ChannelState {
    pub fn from_fn(
        slot: usize,
        bs_count: usize,
        user_count: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut coeffs = Vec::with_capacity(bs_count * user_count * antennas);
        for m in 0..bs_count {
            for u in 0..user_count {
                for a in 0..antennas {
                    coeffs.push(f(m, u, a));
                }
            }
        }
        ChannelState {
            slot,
            bs_count,
            user_count,
            antennas,
            coeffs,
        }
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Channel vector between BS `bs` and user `user`.
    pub fn vector(&self, bs: usize, user: usize) -> &[C64] {
        let start = (bs * self.user_count + user) * self.antennas;
        &self.coeffs[start..start + self.antennas]
    }

    pub fn gain(&self, bs: usize, user: usize) -> f64 {
        self.vector(bs, user).iter().map(|c| c.norm_sqr()).sum()
    }

    /// Channel of `user` stacked over the BSs in `bss`, in the given order.
    pub fn stacked(&self, bss: &[usize], user: usize) -> DVector<C64> {
        DVector::from_iterator(
            bss.len() * self.antennas,
            bss.iter().flat_map(|&m| self.vector(m, user).iter().copied()),
        )
    }
}

/// Draws i.i.d. CN(0, 1) coefficients scaled by the large-scale gain.
/// Deterministic in `(seed, slot)`.
pub fn generate_channels(topology: &Topology, seed: u64, slot: usize) -> ChannelState {
    let mut rng = stream_rng(seed, Stream::Channel, slot as u64, 0);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    ChannelState::from_fn(
        slot,
        topology.bs_count(),
        topology.user_count(),
        topology.antennas,
        |m, u, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let scale = topology.large_scale_gain(m, u).sqrt() * half;
            C64::new(re * scale, im * scale)
        },
    )
}

/// Binary user-to-BS membership `c[u][m]`, stored as sorted BS lists per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    bs_count: usize,
    members: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn new(bs_count: usize, members: Vec<Vec<usize>>) -> Result<Self> {
        let mut members = members;
        for (u, set) in members.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::config(
                    "clustering.fixed_assignment",
                    format!("user {u} has an empty cluster"),
                ));
            }
            if let Some(&bad) = set.iter().find(|&&m| m >= bs_count) {
                return Err(Error::config(
                    "clustering.fixed_assignment",
                    format!("BS index {bad} out of range for {bs_count} BSs"),
                ));
            }
        }
        Ok(ClusterAssignment { bs_count, members })
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn user_count(&self) -> usize {
        self.members.len()
    }

    /// Φ_u, ascending BS indices.
    pub fn cluster(&self, user: usize) -> &[usize] {
        &self.members[user]
    }

    pub fn contains(&self, user: usize, bs: usize) -> bool {
        self.members[user].binary_search(&bs).is_ok()
    }

    /// Membership row `c_{u,·}` as 0/1 weights.
    pub fn membership_row(&self, user: usize) -> Vec<f64> {
        (0..self.bs_count)
            .map(|m| if self.contains(user, m) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Ω_u: every user whose cluster shares at least one BS with Φ_u (u included).
    pub fn served_users(&self, user: usize) -> Vec<usize> {
        let own = &self.members[user];
        (0..self.members.len())
            .filter(|&v| v == user || self.members[v].iter().any(|m| own.binary_search(m).is_ok()))
            .collect()
    }

    /// Ω_u without u itself.
    pub fn intra_cluster_users(&self, user: usize) -> Vec<usize> {
        self.served_users(user)
            .into_iter()
            .filter(|&v| v != user)
            .collect()
    }

    pub fn inter_cluster_users(&self, user: usize) -> Vec<usize> {
        let served = self.served_users(user);
        (0..self.members.len())
            .filter(|v| served.binary_search(v).is_err())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterPolicy {
    Dynamic,
    Fixed(ClusterAssignment),
}

/// Indices of the `n` largest gains, ties to the lower index, returned ascending.
pub fn top_n_by_gain(gains: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    order
}

pub fn form_clusters(
    channels: &ChannelState,
    cluster_size: usize,
    policy: &ClusterPolicy,
) -> Result<ClusterAssignment> {
    let bs_count = channels.bs_count();
    if cluster_size == 0 || cluster_size > bs_count {
        return Err(Error::config(
            "clustering.size",
            format!("must lie in 1..={bs_count}, got {cluster_size}"),
        ));
    }
    match policy {
        ClusterPolicy::Fixed(assignment) => Ok(assignment.clone()),
        ClusterPolicy::Dynamic => {
            let members = (0..channels.user_count())
                .map(|u| {
                    let gains: Vec<f64> = (0..bs_count).map(|m| channels.gain(m, u)).collect();
                    top_n_by_gain(&gains, cluster_size)
                })
                .collect();
            ClusterAssignment::new(bs_count, members)
        }
    }
}

/// Clusters chosen from the large-scale gains alone; used as the static
/// division when no explicit fixed assignment is configured.
pub fn large_scale_clusters(topology: &Topology, cluster_size: usize) -> Result<ClusterAssignment> {
    let bs_count = topology.bs_count();
    if cluster_size == 0 || cluster_size > bs_count {
        return Err(Error::config(
            "clustering.size",
            format!("must lie in 1..={bs_count}, got {cluster_size}"),
        ));
    }
    let members = (0..topology.user_count())
        .map(|u| {
            let gains: Vec<f64> = (0..bs_count).map(|m| topology.large_scale_gain(m, u)).collect();
            top_n_by_gain(&gains, cluster_size)
        })
        .collect();
    ClusterAssignment::new(bs_count, members)
}

/// Orthonormal basis (as columns) of the span of `stack`'s columns.
fn column_space(stack: &DMatrix<C64>) -> DMatrix<C64> {
    let n = stack.nrows();
    if stack.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = SVD::new(stack.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > SINGULAR_CUTOFF * largest.max(f64::MIN_POSITIVE))
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// `(I - G G^+) g`: the component of `g` orthogonal to the columns of `interferers`.
pub fn project_out(g: &DVector<C64>, interferers: &DMatrix<C64>) -> DVector<C64> {
    let basis = column_space(interferers);
    if basis.ncols() == 0 {
        return g.clone();
    }
    g - &basis * (basis.adjoint() * g)
}

pub fn matched_filter(channels: &ChannelState, clusters: &ClusterAssignment, user: usize) -> DVector<C64> {
    let g = channels.stacked(clusters.cluster(user), user);
    let norm = g.norm();
    g / C64::from(norm)
}

/// Projection zero-forcing combiner for `user` over its own cluster, unit norm.
pub fn zf_beamformer(
    channels: &ChannelState,
    clusters: &ClusterAssignment,
    user: usize,
) -> Result<DVector<C64>> {
    let bss = clusters.cluster(user);
    let g = channels.stacked(bss, user);
    let intra = clusters.intra_cluster_users(user);
    let stack = DMatrix::from_fn(g.len(), intra.len(), |r, c| {
        let v = intra[c];
        let (m, a) = (bss[r / channels.antennas()], r % channels.antennas());
        channels.vector(m, v)[a]
    });
    let w = project_out(&g, &stack);
    let norm = w.norm();
    if norm < DEGENERATE_NORM {
        return Err(Error::DegenerateBeam { user, norm });
    }
    Ok(w / C64::from(norm))
}

/// SINR of `user` under combiner `w` with the given interferer set.
fn sinr_with(
    topology: &Topology,
    channels: &ChannelState,
    bss: &[usize],
    w: &DVector<C64>,
    user: usize,
    interferers: &[usize],
) -> f64 {
    let response = |v: usize| w.dotc(&channels.stacked(bss, v)).norm_sqr();
    let signal = topology.user_powers[user] * response(user);
    let interference: f64 = interferers
        .iter()
        .map(|&v| topology.user_powers[v] * response(v))
        .sum();
    signal / (interference + w.norm_squared() * topology.noise_variance)
}

/// Uplink SINR with intra-cluster users treated as nulled.
pub fn uplink_sinr(
    topology: &Topology,
    channels: &ChannelState,
    clusters: &ClusterAssignment,
    w: &DVector<C64>,
    user: usize,
) -> f64 {
    let inter = clusters.inter_cluster_users(user);
    sinr_with(topology, channels, clusters.cluster(user), w, user, &inter)
}

pub fn uplink_rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// `d / rate`; a zero rate yields `f64::INFINITY`, the failed-slot sentinel.
pub fn uplink_delay(data_size: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        data_size / rate
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub user: usize,
    pub weights: DVector<C64>,
    pub sinr: f64,
    pub rate: f64,
    /// The ZF projection collapsed and a matched filter was used instead.
    pub degenerate: bool,
}

/// ZF receiver, SINR and rate for `user`. If the projection degenerates the
/// matched filter is used and, since nothing is nulled, every other user counts
/// as interference.
pub fn rate_report(
    topology: &Topology,
    channels: &ChannelState,
    clusters: &ClusterAssignment,
    user: usize,
) -> RateReport {
    let (weights, sinr, degenerate) = match zf_beamformer(channels, clusters, user) {
        Ok(w) => {
            let sinr = uplink_sinr(topology, channels, clusters, &w, user);
            (w, sinr, false)
        }
        Err(_) => {
            let w = matched_filter(channels, clusters, user);
            let others: Vec<usize> = (0..channels.user_count()).filter(|&v| v != user).collect();
            let sinr = sinr_with(topology, channels, clusters.cluster(user), &w, user, &others);
            (w, sinr, true)
        }
    };
    RateReport {
        user,
        weights,
        sinr,
        rate: uplink_rate(sinr),
        degenerate,
    }
}

/// Matched-filter SINR when `user` is served by BS `bs` alone and every other
/// user interferes.
pub fn single_bs_sinr(topology: &Topology, channels: &ChannelState, bs: usize, user: usize) -> f64 {
    let g = channels.stacked(&[bs], user);
    let w = &g / C64::from(g.norm());
    let others: Vec<usize> = (0..channels.user_count()).filter(|&v| v != user).collect();
    sinr_with(topology, channels, &[bs], &w, user, &others)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn flat_topology(bs: usize, users: usize, antennas: usize) -> Topology {
        Topology {
            antennas,
            bs_profiles: vec![BsProfile { storage: 1.0, compute: 1.0 }; bs],
            user_powers: vec![1.0; users],
            noise_variance: 1.0,
            path_loss: None,
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn channels_are_deterministic_and_shaped() {
        let topo = flat_topology(2, 1, 2);
        let a = generate_channels(&topo, 11, 3);
        let b = generate_channels(&topo, 11, 3);
        assert_eq!(a, b);
        // two BSs, one user, two antennas
        assert_eq!(a.coeffs().len(), 4);
        assert_eq!(a.vector(1, 0).len(), 2);
        assert_ne!(a, generate_channels(&topo, 11, 4));
    }

    #[test]
    fn unit_variance_without_path_loss() {
        let topo = flat_topology(10, 10, 10);
        let mut total = 0.0;
        let mut n = 0usize;
        for slot in 0..100 {
            let ch = generate_channels(&topo, 5, slot);
            for z in ch.coeffs() {
                total += z.norm_sqr();
                n += 1;
            }
        }
        let var = total / n as f64;
        assert!(n >= 100_000);
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn top_n_selection() {
        assert_eq!(top_n_by_gain(&[5.0, 1.0, 3.0], 2), vec![0, 2]);
        assert_eq!(top_n_by_gain(&[2.0, 2.0, 2.0], 2), vec![0, 1]);
        assert_eq!(top_n_by_gain(&[1.0, 4.0, 4.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn dynamic_clusters_match_sort_oracle() {
        let topo = flat_topology(6, 4, 2);
        for slot in 0..20 {
            let ch = generate_channels(&topo, 1, slot);
            let cl = form_clusters(&ch, 3, &ClusterPolicy::Dynamic).unwrap();
            for u in 0..4 {
                let mut pairs: Vec<(f64, usize)> = (0..6).map(|m| (ch.gain(m, u), m)).collect();
                pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let mut want: Vec<usize> = pairs[..3].iter().map(|p| p.1).collect();
                want.sort();
                assert_eq!(cl.cluster(u), &want[..]);
            }
        }
    }

    #[test]
    fn full_cluster_and_size_errors() {
        let topo = flat_topology(4, 2, 1);
        let ch = generate_channels(&topo, 0, 0);
        let cl = form_clusters(&ch, 4, &ClusterPolicy::Dynamic).unwrap();
        assert_eq!(cl.cluster(0), &[0, 1, 2, 3]);
        assert!(form_clusters(&ch, 5, &ClusterPolicy::Dynamic).is_err());
        assert!(form_clusters(&ch, 0, &ClusterPolicy::Dynamic).is_err());
    }

    #[test]
    fn fixed_policy_is_passthrough() {
        let topo = flat_topology(4, 2, 1);
        let fixed = ClusterAssignment::new(4, vec![vec![3, 1], vec![0, 2]]).unwrap();
        for slot in 0..3 {
            let ch = generate_channels(&topo, 0, slot);
            let cl = form_clusters(&ch, 2, &ClusterPolicy::Fixed(fixed.clone())).unwrap();
            assert_eq!(cl, fixed);
        }
        assert_eq!(fixed.cluster(0), &[1, 3]);
    }

    #[test]
    fn omega_views() {
        let cl = ClusterAssignment::new(5, vec![vec![0, 1], vec![1, 2], vec![3, 4]]).unwrap();
        assert_eq!(cl.served_users(0), vec![0, 1]);
        assert_eq!(cl.intra_cluster_users(0), vec![1]);
        assert_eq!(cl.inter_cluster_users(0), vec![2]);
        assert_eq!(cl.served_users(2), vec![2]);
        assert_eq!(cl.membership_row(1), vec![0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn matched_filter_without_interferers() {
        let ch = ChannelState::from_fn(0, 1, 1, 2, |_, _, a| if a == 0 { c(3.0, 0.0) } else { c(0.0, 4.0) });
        let cl = ClusterAssignment::new(1, vec![vec![0]]).unwrap();
        let w = zf_beamformer(&ch, &cl, 0).unwrap();
        assert!((w[0] - c(0.6, 0.0)).norm() < 1e-12);
        assert!((w[1] - c(0.0, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_interferer_leaves_beam_unchanged() {
        // A = 1, two BSs, user 0 channel (1, 1), user 1 channel (1, -1).
        let ch = ChannelState::from_fn(0, 2, 2, 1, |m, u, _| match (m, u) {
            (1, 1) => c(-1.0, 0.0),
            _ => c(1.0, 0.0),
        });
        let cl = ClusterAssignment::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        let w = zf_beamformer(&ch, &cl, 0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w[0] - c(s, 0.0)).norm() < 1e-12);
        assert!((w[1] - c(s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_beam_is_reported() {
        // Interferer channel parallel to the user's: projection vanishes.
        let ch = ChannelState::from_fn(0, 1, 2, 2, |_, u, a| c((a + 1) as f64 * (u + 1) as f64, 0.0));
        let cl = ClusterAssignment::new(1, vec![vec![0], vec![0]]).unwrap();
        assert!(matches!(zf_beamformer(&ch, &cl, 0), Err(Error::DegenerateBeam { .. })));
        let topo = flat_topology(1, 2, 2);
        let report = rate_report(&topo, &ch, &cl, 0);
        assert!(report.degenerate);
        assert!((report.weights.norm() - 1.0).abs() < 1e-12);
        // matched filter gain 5, interferer response |w^H g_1|^2 = 20
        assert!((report.sinr - 5.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_matched_filter_gain() {
        let ch = ChannelState::from_fn(0, 1, 1, 2, |_, _, _| c(2.0_f64.sqrt(), 0.0));
        let cl = ClusterAssignment::new(1, vec![vec![0]]).unwrap();
        let topo = flat_topology(1, 1, 2);
        let w = zf_beamformer(&ch, &cl, 0).unwrap();
        assert!((uplink_sinr(&topo, &ch, &cl, &w, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_inter_cluster_user_adds_nothing() {
        // BS 0 serves user 0; user 1 is attached to BS 1 but leaks into BS 0
        // along the direction orthogonal to user 0's channel.
        let ch = ChannelState::from_fn(0, 2, 2, 2, |m, u, a| match (m, u, a) {
            (0, 0, 0) => c(2.0, 0.0),
            (0, 0, 1) => c(0.0, 0.0),
            (0, 1, 0) => c(0.0, 0.0),
            (0, 1, 1) => c(3.0, 0.0),
            _ => c(1.0, 0.0),
        });
        let cl = ClusterAssignment::new(2, vec![vec![0], vec![1]]).unwrap();
        let topo = flat_topology(2, 2, 2);
        let w = zf_beamformer(&ch, &cl, 0).unwrap();
        assert!((uplink_sinr(&topo, &ch, &cl, &w, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rate_and_delay() {
        assert!((uplink_rate(3.0) - 2.0).abs() < 1e-15);
        assert_eq!(uplink_rate(0.0), 0.0);
        assert!(uplink_delay(10.0, 0.0).is_infinite());
        assert!((uplink_delay(10.0, 2.0) - 5.0).abs() < 1e-15);
    }

    /// Classical Gram-Schmidt projection, independent of the SVD path.
    fn gram_schmidt_project(g: &DVector<C64>, cols: &[DVector<C64>]) -> DVector<C64> {
        let mut basis: Vec<DVector<C64>> = Vec::new();
        for col in cols {
            let mut v = col.clone();
            for _ in 0..2 {
                for q in &basis {
                    let coef = q.dotc(&v);
                    v -= q * coef;
                }
            }
            let n = v.norm();
            if n > 1e-9 {
                basis.push(v / C64::from(n));
            }
        }
        let mut out = g.clone();
        for q in &basis {
            let coef = q.dotc(&out);
            out -= q * coef;
        }
        out
    }

    #[test]
    fn projection_matches_gram_schmidt() {
        let mut rng = stream_rng(99, Stream::Channel, 0, 0);
        for _ in 0..50 {
            let n = 6;
            let k = rng.random_range(0..6);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                DVector::from_fn(n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            };
            let g = draw(&mut rng);
            let cols: Vec<DVector<C64>> = (0..k).map(|_| draw(&mut rng)).collect();
            let stack = DMatrix::from_fn(n, k, |r, c| cols[c][r]);
            let ours = project_out(&g, &stack);
            let oracle = gram_schmidt_project(&g, &cols);
            assert!((ours - oracle).norm() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_interferers_are_handled() {
        let n = 4;
        let col = DVector::from_fn(n, |i, _| c(i as f64 + 1.0, 0.5));
        let stack = DMatrix::from_fn(n, 2, |r, _| col[r]);
        let g = DVector::from_fn(n, |i, _| c(1.0, i as f64));
        let ours = project_out(&g, &stack);
        let oracle = gram_schmidt_project(&g, std::slice::from_ref(&col));
        assert!((&ours - &oracle).norm() < 1e-9);
        assert!(ours.dotc(&col).norm() < 1e-9);
    }
}
