//! Instantaneous uplink SINR and spectral efficiency under matched-filter
//! combining.
//!
//! For each draw of channel estimates, the per-user SINR is a ratio of terms
//! that are affine in the user power coefficients `eta`:
//!
//! ```text
//! gamma_k(eta) = eta_k S_k / (sum_k' eta_k' I[k][k'] + N_k)
//! ```
//!
//! with `S_k` the squared total estimate energy, `I[k][k']` the estimation
//! error term (plus, for `k' != k`, the coherent cross term), and `N_k` the
//! filtered noise. The same coefficient structure covers hierarchical,
//! cell-free, and cellular deployments; the architectures differ only in the
//! node list the estimates are summed over. The coefficients are computed
//! once per draw and reused by both the full-power evaluation and max-min
//! power control.

use crate::error::NumericsError;
use crate::linalg::{CMatrix, CVector};
use crate::pilot::EstimationSet;

/// Per-draw SINR coefficients:
/// `gamma_k(eta) = eta_k signal[k] / (sum_k' eta_k' interference[k][k'] + noise[k])`.
#[derive(Debug, Clone)]
pub struct UplinkCoefficients {
    pub signal: Vec<f64>,
    /// `interference[k][k']`, including the estimation-error self term at
    /// `k' = k`.
    pub interference: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
}

impl UplinkCoefficients {
    pub fn users(&self) -> usize {
        self.signal.len()
    }
}

/// Builds the SINR coefficients from raw per-link estimates and error
/// covariances (`h_hat[node][user]`, `theta[node][user]`).
pub fn ul_coefficients_from_parts(
    h_hat: &[Vec<CVector>],
    thetas: &[Vec<CMatrix>],
    sigma2: f64,
    p_u: f64,
) -> UplinkCoefficients {
    let users = h_hat.first().map_or(0, |row| row.len());
    let mut totals = vec![0.0f64; users];
    let mut cross = vec![vec![crate::linalg::C64::new(0.0, 0.0); users]; users];
    let mut quad = vec![vec![0.0f64; users]; users];

    for (node_estimates, node_thetas) in h_hat.iter().zip(thetas) {
        for k in 0..users {
            totals[k] += node_estimates[k].norm_squared();
            for kp in 0..users {
                if kp > k {
                    let dot = node_estimates[k].dotc(&node_estimates[kp]);
                    cross[k][kp] += dot;
                    cross[kp][k] += dot.conj();
                }
                // h_hat_k^H Theta_k' h_hat_k
                let y = &node_thetas[kp] * &node_estimates[k];
                quad[k][kp] += node_estimates[k].dotc(&y).re;
            }
        }
    }

    let signal: Vec<f64> = totals.iter().map(|t| t * t).collect();
    let noise: Vec<f64> = totals.iter().map(|t| sigma2 / p_u * t).collect();
    let mut interference = vec![vec![0.0f64; users]; users];
    for k in 0..users {
        for kp in 0..users {
            let mut term = quad[k][kp].max(0.0);
            if kp != k {
                term += cross[k][kp].norm_sqr();
            }
            interference[k][kp] = term;
        }
    }

    UplinkCoefficients {
        signal,
        interference,
        noise,
    }
}

/// SINR coefficients for a hierarchical deployment (central array plus
/// eAPs). The estimate set must cover every node of the realization.
pub fn ul_coeffs_hcf(est: &EstimationSet<'_, '_>) -> UplinkCoefficients {
    let model = est.model();
    ul_coefficients_from_parts(
        &est.h_hat,
        thetas_of(est),
        model.sigma2(),
        model.p_u(),
    )
}

/// SINR coefficients for a cell-free deployment (distributed APs only).
pub fn ul_coeffs_cf(est: &EstimationSet<'_, '_>) -> UplinkCoefficients {
    debug_assert!(
        est.model().network().nodes.iter().all(|n| !n.is_central),
        "cell-free coefficients expect no central array"
    );
    ul_coeffs_hcf(est)
}

/// SINR coefficients for a cellular deployment (one co-located array).
pub fn ul_coeffs_cellular(est: &EstimationSet<'_, '_>) -> UplinkCoefficients {
    debug_assert!(
        est.model().network().node_count() == 1 && est.model().network().nodes[0].is_central,
        "cellular coefficients expect exactly one central array"
    );
    ul_coeffs_hcf(est)
}

fn thetas_of<'m>(est: &EstimationSet<'m, '_>) -> &'m [Vec<CMatrix>] {
    est.model().thetas()
}

/// Evaluates the per-user SINR at the given power coefficients.
pub fn ul_sinr(co: &UplinkCoefficients, eta: &[f64]) -> Vec<f64> {
    assert_eq!(eta.len(), co.users(), "eta length");
    (0..co.users())
        .map(|k| {
            if co.signal[k] == 0.0 {
                return 0.0;
            }
            let denom: f64 = co.interference[k]
                .iter()
                .zip(eta)
                .map(|(i, e)| i * e)
                .sum::<f64>()
                + co.noise[k];
            eta[k] * co.signal[k] / denom
        })
        .collect()
}

/// Uplink spectral efficiency `(1 - tau_p / tau_u) * log2(1 + gamma)`.
pub fn ul_se(gamma: f64, tau_p: usize, tau_u: usize) -> Result<f64, NumericsError> {
    if tau_p >= tau_u {
        return Err(NumericsError::Domain(format!(
            "pilot overhead tau_p = {tau_p} must be below tau_u = {tau_u}"
        )));
    }
    Ok((1.0 - tau_p as f64 / tau_u as f64) * (1.0 + gamma).log2())
}
