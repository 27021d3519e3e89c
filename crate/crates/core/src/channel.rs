//! Large-scale fading, spatial correlation, and correlated Rayleigh draws.
//!
//! Each node-user link carries a spatial correlation matrix `R` built from a
//! half-wavelength uniform linear array under the Gaussian local scattering
//! model: entry `(s, t)` equals
//!
//! ```text
//! beta * exp(j*pi*(s-t)*sin(phi)) * exp(-(sigma_phi^2 / 2) * (pi*(s-t)*cos(phi))^2)
//! ```
//!
//! with `phi` the nominal bearing of the user from the array and `sigma_phi`
//! the angular standard deviation. The large-scale coefficient `beta`
//! combines distance-dependent path loss with a log-normal shadowing draw,
//! so `trace(R) = N * beta` holds by construction. Channel realizations are
//! `h = S h'` where `S Sᴴ = R` and `h'` is white circularly-symmetric
//! Gaussian.

use nalgebra::SymmetricEigen;
use rand::Rng;

use crate::error::NumericsError;
use crate::linalg::{self, C64, CMatrix, CVector};
use crate::scenario::{CostHataParams, PathLossModel, Placement, ScenarioConfig};

/// Relative eigenvalue clamp: eigenvalues of a correlation matrix below
/// `-EIG_CLAMP_REL * trace` are treated as broken input; small negatives
/// above that are clamped to zero.
pub const EIG_CLAMP_REL: f64 = 1e-10;

/// Rank-truncation tolerance for the thin PSD factor used to draw channels.
const FACTOR_REL_TOL: f64 = 1e-12;

/// Spatial correlation matrix of one link together with its large-scale
/// coefficient `beta = trace(R) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    matrix: CMatrix,
    beta: f64,
}

impl CorrelationMatrix {
    /// Wraps a Hermitian PSD matrix, deriving `beta` from its trace.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self, NumericsError> {
        if !matrix.is_square() {
            return Err(NumericsError::Domain(
                "correlation matrix must be square".into(),
            ));
        }
        let n = matrix.nrows();
        let trace: f64 = (0..n).map(|i| matrix[(i, i)].re).sum();
        let scale = trace.abs().max(f64::MIN_POSITIVE) / n.max(1) as f64;
        if linalg::hermitian_defect(&matrix) > 1e-9 * scale {
            return Err(NumericsError::Domain(
                "correlation matrix must be Hermitian".into(),
            ));
        }
        let beta = if n == 0 { 0.0 } else { trace / n as f64 };
        Ok(CorrelationMatrix { matrix, beta })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Thin factor `V` with `V Vᴴ = R` (up to the rank-truncation tolerance),
    /// suitable for [`draw_channel`].
    pub fn factor(&self) -> CMatrix {
        linalg::psd_factor(&self.matrix, FACTOR_REL_TOL)
    }
}

/// 3GPP urban-microcell path loss in dB at distance `d` meters.
pub fn path_loss_umi_db(d_m: f64) -> Result<f64, NumericsError> {
    if !(d_m > 0.0) {
        return Err(NumericsError::Domain(format!(
            "umi path loss requires d > 0, got {d_m}"
        )));
    }
    Ok(-30.5 - 36.7 * d_m.log10())
}

/// Three-slope COST-Hata path loss in dB at distance `d` kilometers.
pub fn path_loss_cost_hata_db(d_km: f64, params: &CostHataParams) -> Result<f64, NumericsError> {
    if !(d_km > 0.0) {
        return Err(NumericsError::Domain(format!(
            "cost-hata path loss requires d > 0, got {d_km}"
        )));
    }
    let l0 = params.l0_db();
    let d0 = params.d0_km;
    let d1 = params.d1_km;
    let loss = if d_km > d1 {
        -l0 - 35.0 * d_km.log10()
    } else if d_km > d0 {
        -l0 - 10.0 * (d1.powf(1.5) * d_km.powi(2)).log10()
    } else {
        -l0 - 10.0 * (d1.powf(1.5) * d0.powi(2)).log10()
    };
    Ok(loss)
}

/// Bessel functions of the first kind `J_0(x) .. J_nmax(x)` by Miller's
/// backward recurrence, normalized with `J_0 + 2 sum J_2k = 1`.
fn bessel_j_sequence(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0f64; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let x = x.abs();
    // Start safely above both the requested order and the turning point.
    let start = (nmax + 20).max(x.ceil() as usize + (4.0 * x.cbrt()) as usize + 20);
    let mut j_next = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0f64;
    for n in (0..=start).rev() {
        if n <= nmax {
            out[n] = j;
        }
        if n % 2 == 0 {
            norm += if n == 0 { j } else { 2.0 * j };
        }
        if n > 0 {
            let j_prev = (2.0 * n as f64 / x) * j - j_next;
            j_next = j;
            j = j_prev;
            if j.abs() > 1e250 {
                j *= 1e-250;
                j_next *= 1e-250;
                norm *= 1e-250;
                for v in out.iter_mut() {
                    *v *= 1e-250;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// One lag of the exact Gaussian local-scattering correlation,
/// `E[exp(j pi d sin(phi + delta))]` with `delta ~ N(0, asd^2)`, through the
/// Bessel series `sum_n J_n(pi d) exp(-n^2 asd^2 / 2) exp(j n phi)`.
fn scattering_lag(d: usize, phi: f64, asd: f64, order: usize) -> C64 {
    let x = std::f64::consts::PI * d as f64;
    let j = bessel_j_sequence(order, x);
    let mut acc = C64::new(j[0], 0.0);
    for (n, &jn) in j.iter().enumerate().skip(1) {
        let damp = (-(n as f64 * asd).powi(2) / 2.0).exp();
        let (s, c) = (n as f64 * phi).sin_cos();
        // J_{-n} = (-1)^n J_n folds the negative orders into 2cos / 2jsin.
        let term = if n % 2 == 0 {
            C64::new(2.0 * c, 0.0)
        } else {
            C64::new(0.0, 2.0 * s)
        };
        acc += term * jn * damp;
    }
    acc
}

/// Correlation matrix of a half-wavelength ULA under the Gaussian local
/// scattering model with nominal angle `phi` and angular deviation `asd`
/// (radians), computed exactly via the Bessel-series expansion of
/// `E[exp(j pi (s - t) sin(phi + delta))]`.
pub fn local_scattering_correlation(
    n: usize,
    phi: f64,
    asd: f64,
    beta: f64,
) -> CorrelationMatrix {
    assert!(n >= 1, "array must have at least one antenna");
    assert!(asd > 0.0, "angular deviation must be positive");
    assert!(beta > 0.0, "large-scale coefficient must be positive");
    // exp(-n^2 asd^2 / 2) below 1e-16 truncates the series.
    let order = ((8.7 / asd).ceil() as usize + 4).min(4000);
    let lags: Vec<C64> = (0..n)
        .map(|d| scattering_lag(d, phi, asd, order) * beta)
        .collect();
    let matrix = CMatrix::from_fn(n, n, |s, t| {
        if s >= t {
            lags[s - t]
        } else {
            lags[t - s].conj()
        }
    });
    CorrelationMatrix { matrix, beta }
}

/// Small-angular-deviation closed form of the same correlation: entry
/// `(s, t)` is `beta exp(j pi (s-t) sin phi) exp(-(asd^2/2)(pi (s-t) cos phi)^2)`.
/// Accurate for deviations up to a few degrees; the exact kernel above is
/// used for link statistics.
pub fn local_scattering_correlation_small_asd(
    n: usize,
    phi: f64,
    asd: f64,
    beta: f64,
) -> CorrelationMatrix {
    assert!(n >= 1, "array must have at least one antenna");
    assert!(asd > 0.0, "angular deviation must be positive");
    assert!(beta > 0.0, "large-scale coefficient must be positive");
    let sin_phi = phi.sin();
    let cos_phi = phi.cos();
    // Toeplitz: value depends only on the antenna index lag.
    let lags: Vec<C64> = (0..n)
        .map(|d| {
            let d = d as f64;
            let phase = std::f64::consts::PI * d * sin_phi;
            let spread = std::f64::consts::PI * d * cos_phi;
            let magnitude = beta * (-(asd * asd / 2.0) * spread * spread).exp();
            C64::new(magnitude * phase.cos(), magnitude * phase.sin())
        })
        .collect();
    let matrix = CMatrix::from_fn(n, n, |s, t| {
        if s >= t {
            lags[s - t]
        } else {
            lags[t - s].conj()
        }
    });
    CorrelationMatrix { matrix, beta }
}

/// Hermitian square root `S = U sqrt(L) Uᴴ` of a PSD matrix, with negative
/// eigenvalues above the clamp tolerance treated as zero.
pub fn hermitian_sqrt(r: &CMatrix) -> Result<CMatrix, NumericsError> {
    if !r.is_square() {
        return Err(NumericsError::Domain("square matrix required".into()));
    }
    let n = r.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let trace: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    let scale = trace.abs().max(f64::MIN_POSITIVE) / n as f64;
    if linalg::hermitian_defect(r) > 1e-9 * scale {
        return Err(NumericsError::Domain("matrix is not Hermitian".into()));
    }
    let eig = SymmetricEigen::new(r.clone());
    let clamp = -EIG_CLAMP_REL * trace.abs();
    let mut roots = Vec::with_capacity(n);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < clamp {
            return Err(NumericsError::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda})"
            )));
        }
        roots.push(C64::new(lambda.max(0.0).sqrt(), 0.0));
    }
    let d = CMatrix::from_diagonal(&CVector::from_vec(roots));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Draws one correlated Rayleigh realization `h = S h'` with `h'` white
/// circularly-symmetric complex Gaussian of unit variance per entry.
pub fn draw_channel<R: Rng + ?Sized>(factor: &CMatrix, rng: &mut R) -> CVector {
    let white = linalg::complex_gaussian_vector(factor.ncols(), 1.0, rng);
    factor * white
}

/// One transmitting node of the realized network.
#[derive(Debug, Clone)]
pub struct NodeRealization {
    pub antennas: usize,
    /// Downlink power budget in watts (antennas times the per-antenna cap).
    pub power_w: f64,
    /// True for the central array (cBS or cellular BS).
    pub is_central: bool,
    pub position: [f64; 2],
    pub orientation: f64,
}

/// Sampled geometry plus every per-link spatial correlation matrix.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    pub nodes: Vec<NodeRealization>,
    /// Correlation matrices indexed `[node][user]`.
    pub links: Vec<Vec<CorrelationMatrix>>,
    pub users: usize,
    /// Receiver noise power in watts.
    pub sigma2_w: f64,
}

impl NetworkRealization {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link(&self, node: usize, user: usize) -> &CorrelationMatrix {
        &self.links[node][user]
    }
}

fn link_beta(
    config: &ScenarioConfig,
    node_position: [f64; 2],
    ue_position: [f64; 2],
    shadow_db: f64,
) -> Result<f64, NumericsError> {
    let d_m = ((node_position[0] - ue_position[0]).powi(2)
        + (node_position[1] - ue_position[1]).powi(2))
    .sqrt();
    let pl_db = match config.path_loss {
        PathLossModel::Umi => path_loss_umi_db(d_m)?,
        PathLossModel::CostHata => path_loss_cost_hata_db(d_m / 1000.0, &config.cost_hata)?,
    };
    Ok(10f64.powf((pl_db + shadow_db) / 10.0))
}

/// Builds the per-link correlation matrices for a sampled placement:
/// `beta` from path loss and shadowing, nominal angle from geometry, and
/// the local scattering model for the spatial structure.
pub fn build_link_correlations(
    config: &ScenarioConfig,
    placement: &Placement,
) -> Result<NetworkRealization, NumericsError> {
    let asd = config.asd_deg.to_radians();
    let mut nodes = Vec::with_capacity(config.node_count());
    if config.has_cbs() {
        nodes.push(NodeRealization {
            antennas: config.cbs_antennas,
            power_w: config.cbs_power_w(),
            is_central: true,
            position: placement.cbs_position,
            orientation: placement.cbs_orientation,
        });
    }
    for (position, orientation) in placement
        .eap_positions
        .iter()
        .zip(&placement.eap_orientations)
    {
        nodes.push(NodeRealization {
            antennas: config.eap_antennas,
            power_w: config.eap_power_w(),
            is_central: false,
            position: *position,
            orientation: *orientation,
        });
    }

    let mut links = Vec::with_capacity(nodes.len());
    for (node_index, node) in nodes.iter().enumerate() {
        let mut row = Vec::with_capacity(config.users);
        for (user, ue_position) in placement.ue_positions.iter().enumerate() {
            let shadow = placement.shadow_db[node_index][user];
            let beta = link_beta(config, node.position, *ue_position, shadow)?;
            let bearing = (ue_position[1] - node.position[1])
                .atan2(ue_position[0] - node.position[0]);
            let phi = bearing - node.orientation;
            row.push(local_scattering_correlation(node.antennas, phi, asd, beta));
        }
        links.push(row);
    }

    Ok(NetworkRealization {
        nodes,
        links,
        users: config.users,
        sigma2_w: config.noise_power_w(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, sample_placement, Architecture, ScenarioOverrides, ScenarioScale};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn umi_reference_points() {
        assert!((path_loss_umi_db(1.0).unwrap() + 30.5).abs() < 1e-12);
        assert!((path_loss_umi_db(100.0).unwrap() + 103.9).abs() < 1e-9);
        assert!((path_loss_umi_db(500.0).unwrap() + 129.552).abs() < 1e-3);
        assert!(path_loss_umi_db(0.0).is_err());
    }

    #[test]
    fn cost_hata_three_slopes() {
        let params = CostHataParams::default();
        let l0 = params.l0_db();

        // Far branch at 1 km: exactly -L0.
        let far = path_loss_cost_hata_db(1.0, &params).unwrap();
        assert!((far + l0).abs() < 1e-9);

        // Below d0 the loss is constant.
        let near = path_loss_cost_hata_db(0.005, &params).unwrap();
        let at_d0 = path_loss_cost_hata_db(params.d0_km, &params).unwrap();
        assert!((near - at_d0).abs() < 1e-12);
        let expected_near = -l0 - 10.0 * (0.05f64.powf(1.5) * 0.01f64.powi(2)).log10();
        assert!((near - expected_near).abs() < 1e-9);
        assert!((near + 81.20).abs() < 0.05, "constant branch {near}");

        // Continuity at d1 and monotone decay beyond it.
        let below = path_loss_cost_hata_db(params.d1_km * (1.0 - 1e-9), &params).unwrap();
        let above = path_loss_cost_hata_db(params.d1_km * (1.0 + 1e-9), &params).unwrap();
        assert!((below - above).abs() < 1e-5);
        assert!(
            path_loss_cost_hata_db(2.0, &params).unwrap()
                < path_loss_cost_hata_db(1.0, &params).unwrap()
        );
    }

    #[test]
    fn local_scattering_diagonal_and_trace() {
        let beta = 3.5e-9;
        let r = local_scattering_correlation(6, 0.7, 0.2, beta);
        for i in 0..6 {
            assert!((r.matrix()[(i, i)].re - beta).abs() < 1e-24);
            assert!(r.matrix()[(i, i)].im.abs() < 1e-24);
        }
        let trace: f64 = (0..6).map(|i| r.matrix()[(i, i)].re).sum();
        assert!((trace - 6.0 * beta).abs() <= 1e-9 * trace);
        assert!((r.beta() - beta).abs() <= 1e-9 * beta);
    }

    #[test]
    fn small_asd_closed_form_reference_entry() {
        // N=2, phi=0, asd=10 degrees, beta=1: off-diagonal entry is real
        // exp(-(asd^2/2) * pi^2).
        let asd = 10f64.to_radians();
        let r = local_scattering_correlation_small_asd(2, 0.0, asd, 1.0);
        let entry = r.matrix()[(1, 0)];
        assert!((entry.re - 0.8604).abs() < 1e-4, "entry {entry}");
        assert!(entry.im.abs() < 1e-12);
    }

    /// Brute-force quadrature of `E[exp(j pi d sin(phi + delta))]`.
    fn quadrature_lag(d: usize, phi: f64, asd: f64) -> C64 {
        let steps = 200_000usize;
        let half = 8.0 * asd;
        let mut acc = C64::new(0.0, 0.0);
        let mut weight = 0.0;
        for i in 0..=steps {
            let delta = -half + 2.0 * half * i as f64 / steps as f64;
            let w = (-delta * delta / (2.0 * asd * asd)).exp();
            let arg = std::f64::consts::PI * d as f64 * (phi + delta).sin();
            acc += C64::new(w * arg.cos(), w * arg.sin());
            weight += w;
        }
        acc / weight
    }

    #[test]
    fn bessel_series_matches_quadrature() {
        for (phi, asd) in [(0.0, 0.5236), (0.8, 0.5236), (-1.9, 0.1745), (2.4, 0.35)] {
            let r = local_scattering_correlation(6, phi, asd, 1.0);
            for d in [1usize, 3, 5] {
                let exact = r.matrix()[(d, 0)];
                let reference = quadrature_lag(d, phi, asd);
                assert!(
                    (exact - reference).norm() < 1e-6,
                    "phi={phi} asd={asd} d={d}: {exact} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn exact_kernel_agrees_with_closed_form_at_small_asd() {
        let asd = 1f64.to_radians();
        let exact = local_scattering_correlation(5, 0.6, asd, 2.0);
        let approx = local_scattering_correlation_small_asd(5, 0.6, asd, 2.0);
        let err = (exact.matrix() - approx.matrix()).norm() / approx.matrix().norm();
        assert!(err < 1e-3, "small-deviation mismatch {err}");
    }

    #[test]
    fn local_scattering_small_asd_is_rank_one() {
        let r = local_scattering_correlation(8, 0.4, 1e-6, 2.0);
        let ev = linalg::hermitian_eigenvalues(r.matrix());
        let max = ev.last().copied().unwrap();
        for &lambda in &ev[..ev.len() - 1] {
            assert!(lambda.abs() < 1e-8 * max, "secondary eigenvalue {lambda}");
        }
    }

    #[test]
    fn hermitian_sqrt_reference_cases() {
        let id = CMatrix::identity(3, 3);
        let s = hermitian_sqrt(&id).unwrap();
        assert!((&s - &id).norm() < 1e-12);

        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::new(4.0, 0.0),
            C64::new(1.0, 0.0),
        ]));
        let s = hermitian_sqrt(&d).unwrap();
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((s[(1, 1)].re - 1.0).abs() < 1e-12);
        assert!(s[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn hermitian_sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = CMatrix::from_fn(9, 9, |_, _| {
            C64::new(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            )
        });
        let r = &g * g.adjoint();
        let s = hermitian_sqrt(&r).unwrap();
        let err = (&s * s.adjoint() - &r).norm() / r.norm();
        assert!(err <= 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn hermitian_sqrt_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(hermitian_sqrt(&m).is_err());
    }

    #[test]
    fn draw_channel_zero_factor() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let h = draw_channel(&CMatrix::zeros(4, 0), &mut rng);
        assert_eq!(h.len(), 4);
        assert!(h.norm() == 0.0);
    }

    #[test]
    fn draw_channel_identity_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let id = CMatrix::identity(4, 4);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += draw_channel(&id, &mut rng).norm_squared();
        }
        let per_entry = acc / (4 * draws) as f64;
        assert!((per_entry - 1.0).abs() < 0.03, "variance {per_entry}");
    }

    #[test]
    fn draw_channel_sample_covariance_converges() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let r = local_scattering_correlation(4, 0.9, 0.3, 2.0);
        let factor = r.factor();
        let draws = 100_000;
        let mut cov = CMatrix::zeros(4, 4);
        for _ in 0..draws {
            let h = draw_channel(&factor, &mut rng);
            cov += &h * h.adjoint();
        }
        cov /= C64::new(draws as f64, 0.0);
        let err = (&cov - r.matrix()).norm() / r.matrix().norm();
        assert!(err < 0.05, "covariance error {err}");
    }

    #[test]
    fn factor_matches_hermitian_sqrt_gram() {
        let r = local_scattering_correlation(5, -0.3, 0.25, 0.7);
        let v = r.factor();
        let err = (&v * v.adjoint() - r.matrix()).norm() / r.matrix().norm();
        assert!(err < 1e-8, "factor reconstruction {err}");
    }

    #[test]
    fn link_betas_compose_path_loss_and_shadowing() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let mut placement = sample_placement(&config, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        for row in &mut placement.shadow_db {
            row.iter_mut().for_each(|s| *s = 0.0);
        }
        // Pin one user 100 m east of the cBS.
        placement.ue_positions[0] = [100.0, 0.0];
        let network = build_link_correlations(&config, &placement).unwrap();
        let beta = network.link(0, 0).beta();
        let expected = 10f64.powf(-10.39); // UMi at 100 m
        assert!(
            (beta - expected).abs() <= 1e-9 * expected,
            "beta {beta} vs {expected}"
        );
        let n = network.nodes[0].antennas as f64;
        let trace: f64 = (0..network.nodes[0].antennas)
            .map(|i| network.link(0, 0).matrix()[(i, i)].re)
            .sum();
        assert!((trace - n * beta).abs() <= 1e-9 * trace);
    }

    #[test]
    fn shadowing_scales_correlation_without_changing_structure() {
        let config = build_scenario(
            ScenarioScale::Micro,
            Architecture::Hcf,
            &ScenarioOverrides::default(),
        )
        .unwrap();
        let placement = sample_placement(&config, &mut ChaCha12Rng::seed_from_u64(10)).unwrap();
        let mut shifted = placement.clone();
        for row in &mut shifted.shadow_db {
            row.iter_mut().for_each(|s| *s += 6.0);
        }
        let a = build_link_correlations(&config, &placement).unwrap();
        let b = build_link_correlations(&config, &shifted).unwrap();
        for node in 0..a.node_count() {
            for user in 0..a.users {
                let ra = a.link(node, user);
                let rb = b.link(node, user);
                let scale = rb.beta() / ra.beta();
                assert!((scale - 10f64.powf(0.6)).abs() < 1e-9);
                let rescaled = ra.matrix() * C64::new(scale, 0.0);
                assert!((&rescaled - rb.matrix()).norm() <= 1e-9 * rb.matrix().norm());
            }
        }
    }
}
