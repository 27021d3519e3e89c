//! Pilot assignment, uplink training, and MMSE channel estimation.
//!
//! With `tau_p` orthogonal pilots shared round-robin among `K` users, the
//! pilot projection at a node is `psi = sqrt(p_u) tau_p sum_{k' in P} h_k' +
//! Z omega*`, whose noise term has covariance `tau_p sigma_z^2 I`. The pilot
//! matrix itself is never materialized; the projection is sampled directly,
//! which is statistically exact. Per link,
//!
//! ```text
//! Gamma = p_u tau_p sum_{k' in P_k} R_k' + sigma_z^2 I      (shared per pilot)
//! h_hat = sqrt(p_u) R Gamma^{-1} psi
//! Theta = R - p_u tau_p R Gamma^{-1} R                      (error covariance)
//! ```
//!
//! Estimation statistics (`Gamma`, `Theta`, draw factors) are computed once
//! per placement epoch in [`TrainingModel`]; each small-scale draw then only
//! costs vector work.

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;
use rand::Rng;

use crate::channel::{draw_channel, CorrelationMatrix, NetworkRealization};
use crate::error::NumericsError;
use crate::linalg::{self, C64, CMatrix, CVector};
use crate::scenario::ScenarioConfig;

/// Deterministic round-robin mapping of users onto pilot sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pilot_of: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl PilotAssignment {
    /// Pilot index of a user (0-based).
    pub fn pilot_of(&self, user: usize) -> usize {
        self.pilot_of[user]
    }

    /// The set `P_k` of users sharing user `k`'s pilot, including `k`.
    pub fn coset(&self, user: usize) -> &[usize] {
        &self.groups[self.pilot_of[user]]
    }

    /// Users of each pilot group, indexed by pilot.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_pilots(&self) -> usize {
        self.groups.len()
    }

    pub fn num_users(&self) -> usize {
        self.pilot_of.len()
    }

    /// True when users `a` and `b` share a pilot.
    pub fn shares_pilot(&self, a: usize, b: usize) -> bool {
        self.pilot_of[a] == self.pilot_of[b]
    }
}

/// Round-robin pilot assignment: user `k` (0-based) gets pilot `k mod tau_p`.
pub fn assign_pilots(users: usize, tau_p: usize) -> Result<PilotAssignment, NumericsError> {
    if tau_p < 1 {
        return Err(NumericsError::Domain(format!(
            "tau_p must be at least 1, got {tau_p}"
        )));
    }
    let pilot_of: Vec<usize> = (0..users).map(|k| k % tau_p).collect();
    let mut groups = vec![Vec::new(); tau_p];
    for (user, &pilot) in pilot_of.iter().enumerate() {
        groups[pilot].push(user);
    }
    Ok(PilotAssignment { pilot_of, groups })
}

/// Pilot-projection covariance at one node for one pilot group:
/// `Gamma = p_u tau_p sum R + sigma_z^2 I`.
pub fn gamma_matrix(
    correlations: &[&CorrelationMatrix],
    p_u: f64,
    tau_p: usize,
    sigma2: f64,
) -> Result<CMatrix, NumericsError> {
    let n = correlations
        .first()
        .map(|r| r.dim())
        .ok_or_else(|| NumericsError::Domain("gamma_matrix needs at least one link".into()))?;
    let mut gamma = CMatrix::identity(n, n) * C64::new(sigma2, 0.0);
    for r in correlations {
        if r.dim() != n {
            return Err(NumericsError::Domain(format!(
                "correlation dimension mismatch: {} vs {}",
                r.dim(),
                n
            )));
        }
        gamma += r.matrix() * C64::new(p_u * tau_p as f64, 0.0);
    }
    Ok(gamma)
}

/// MMSE estimation-error covariance `Theta = R - p_u tau_p R Gamma^{-1} R`.
pub fn estimation_error_cov(
    r: &CMatrix,
    gamma: &CMatrix,
    p_u: f64,
    tau_p: usize,
) -> Result<CMatrix, NumericsError> {
    let chol = Cholesky::new(gamma.clone()).ok_or_else(|| {
        NumericsError::Domain("gamma matrix is not positive definite".into())
    })?;
    let m = chol.solve(r);
    Ok(r - r * m * C64::new(p_u * tau_p as f64, 0.0))
}

struct PilotGroupStats {
    gamma: CMatrix,
    chol: Cholesky<C64, Dyn>,
}

/// Per-epoch training statistics for every node and user.
pub struct TrainingModel<'n> {
    network: &'n NetworkRealization,
    assignment: PilotAssignment,
    p_u: f64,
    tau_p: usize,
    sigma2: f64,
    /// `[node][pilot]`; `None` for unused pilot indices.
    group_stats: Vec<Vec<Option<PilotGroupStats>>>,
    /// `[node][user]` dense error covariance.
    thetas: Vec<Vec<CMatrix>>,
    /// `[node][user]` thin factor for channel draws.
    factors: Vec<Vec<CMatrix>>,
    /// `[node][user]` mean estimate energy `E||h_hat||^2 = p_u tau_p tr(R Gamma^{-1} R)`.
    est_energy: Vec<Vec<f64>>,
}

impl<'n> TrainingModel<'n> {
    pub fn new(
        network: &'n NetworkRealization,
        assignment: PilotAssignment,
        config: &ScenarioConfig,
    ) -> Result<Self, NumericsError> {
        let p_u = config.ue_power_w;
        let tau_p = config.tau_p;
        let sigma2 = network.sigma2_w;
        let users = network.users;

        let mut group_stats = Vec::with_capacity(network.node_count());
        let mut thetas = Vec::with_capacity(network.node_count());
        let mut factors = Vec::with_capacity(network.node_count());
        let mut est_energy = Vec::with_capacity(network.node_count());

        for node in 0..network.node_count() {
            let mut node_groups: Vec<Option<PilotGroupStats>> =
                Vec::with_capacity(assignment.num_pilots());
            for group in assignment.groups() {
                if group.is_empty() {
                    node_groups.push(None);
                    continue;
                }
                let rs: Vec<&CorrelationMatrix> =
                    group.iter().map(|&k| network.link(node, k)).collect();
                let gamma = gamma_matrix(&rs, p_u, tau_p, sigma2)?;
                let chol = Cholesky::new(gamma.clone()).ok_or_else(|| {
                    NumericsError::Numerical("gamma matrix lost positive definiteness".into())
                })?;
                node_groups.push(Some(PilotGroupStats { gamma, chol }));
            }

            let mut node_thetas = Vec::with_capacity(users);
            let mut node_factors = Vec::with_capacity(users);
            let mut node_energy = Vec::with_capacity(users);
            for user in 0..users {
                let r = network.link(node, user);
                let stats = node_groups[assignment.pilot_of(user)]
                    .as_ref()
                    .expect("user belongs to a populated pilot group");
                let m = stats.chol.solve(r.matrix());
                let scale = p_u * tau_p as f64;
                let theta = r.matrix() - r.matrix() * &m * C64::new(scale, 0.0);
                // E||h_hat||^2 = tr(R) - tr(Theta)
                let energy = r.matrix().trace().re - theta.trace().re;
                node_thetas.push(theta);
                node_factors.push(r.factor());
                node_energy.push(energy.max(0.0));
            }
            group_stats.push(node_groups);
            thetas.push(node_thetas);
            factors.push(node_factors);
            est_energy.push(node_energy);
        }

        Ok(TrainingModel {
            network,
            assignment,
            p_u,
            tau_p,
            sigma2,
            group_stats,
            thetas,
            factors,
            est_energy,
        })
    }

    pub fn network(&self) -> &NetworkRealization {
        self.network
    }

    pub fn assignment(&self) -> &PilotAssignment {
        &self.assignment
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn p_u(&self) -> f64 {
        self.p_u
    }

    pub fn gamma(&self, node: usize, pilot: usize) -> Option<&CMatrix> {
        self.group_stats[node][pilot].as_ref().map(|g| &g.gamma)
    }

    pub fn theta(&self, node: usize, user: usize) -> &CMatrix {
        &self.thetas[node][user]
    }

    /// All error covariances, indexed `[node][user]`.
    pub fn thetas(&self) -> &[Vec<CMatrix>] {
        &self.thetas
    }

    /// Estimate covariance `p_u tau_p R Gamma^{-1} R = R - Theta`.
    pub fn est_cov(&self, node: usize, user: usize) -> CMatrix {
        self.network.link(node, user).matrix() - &self.thetas[node][user]
    }

    /// Mean squared estimate norm `E||h_hat||^2`.
    pub fn est_energy(&self, node: usize, user: usize) -> f64 {
        self.est_energy[node][user]
    }

    /// Draws one small-scale realization of every link.
    pub fn draw_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelDraw {
        let h = self
            .factors
            .iter()
            .map(|row| row.iter().map(|f| draw_channel(f, rng)).collect())
            .collect();
        ChannelDraw { h }
    }
}

/// One small-scale realization of every node-user channel.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// `[node][user]`
    pub h: Vec<Vec<CVector>>,
}

/// MMSE channel estimates for one training phase, together with the
/// per-epoch statistics they were built from.
pub struct EstimationSet<'m, 'n> {
    model: &'m TrainingModel<'n>,
    /// `[node][user]`
    pub h_hat: Vec<Vec<CVector>>,
}

impl<'m, 'n> EstimationSet<'m, 'n> {
    pub fn model(&self) -> &'m TrainingModel<'n> {
        self.model
    }

    pub fn h_hat(&self, node: usize, user: usize) -> &CVector {
        &self.h_hat[node][user]
    }
}

/// Simulates one uplink training phase: forms the pilot projections (signal
/// plus direct-sampled projection noise) and the per-link MMSE estimates.
pub fn simulate_training<'m, 'n, R: Rng + ?Sized>(
    channels: &ChannelDraw,
    model: &'m TrainingModel<'n>,
    rng: &mut R,
) -> EstimationSet<'m, 'n> {
    let network = model.network;
    let sqrt_pu = model.p_u.sqrt();
    let tau_p = model.tau_p as f64;
    let mut h_hat = Vec::with_capacity(network.node_count());

    for node in 0..network.node_count() {
        let n = network.nodes[node].antennas;
        let mut estimates: Vec<Option<CVector>> = vec![None; network.users];
        for (pilot, group) in model.assignment.groups().iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            // psi = sqrt(p_u) tau_p sum_{k in group} h_k + noise, with the
            // projected noise Z omega* ~ CN(0, tau_p sigma^2 I).
            let mut psi = linalg::complex_gaussian_vector(n, tau_p * model.sigma2, rng);
            for &user in group {
                psi += &channels.h[node][user] * C64::new(sqrt_pu * tau_p, 0.0);
            }
            let stats = model.group_stats[node][pilot].as_ref().unwrap();
            let y = stats.chol.solve(&psi);
            for &user in group {
                let estimate =
                    network.link(node, user).matrix() * &y * C64::new(sqrt_pu, 0.0);
                estimates[user] = Some(estimate);
            }
        }
        h_hat.push(
            estimates
                .into_iter()
                .map(|e| e.expect("every user trained"))
                .collect(),
        );
    }

    EstimationSet { model, h_hat }
}
