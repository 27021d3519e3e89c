//! Max-min fairness power control for both link directions.
//!
//! Both solvers bisect over a SINR target and answer each candidate target
//! with a convex feasibility subproblem:
//!
//! * **Uplink.** `gamma_k(eta) >= t` is linear in `eta`, so feasibility
//!   reduces to the interference fixed point `eta = t (F eta + b)` with
//!   `F[k][k'] = I[k][k'] / (S_k - t I[k][k])` for `k' != k` and
//!   `b_k = N_k / (S_k - t I[k][k])`. The minimal fixed point exists iff the
//!   spectral radius of the iteration matrix is below one, which is detected
//!   exactly by solving the linear system and checking positivity; the
//!   target is feasible iff that minimal solution also satisfies
//!   `eta <= 1`.
//! * **Downlink.** The per-user constraint is a second-order cone:
//!   `sum_j nu[k][j] A[k][j] >= sqrt(t) ||f_k(nu)||` under per-node power
//!   balls. Feasibility is decided by projected subgradient descent on the
//!   worst constraint violation, with a diminishing step (Polyak step toward
//!   the certification level, clipped by a `1/sqrt(t)` schedule). A point
//!   certifying margin `delta * sigma_z` proves feasibility; anything short
//!   of that after the iteration cap is treated as infeasible, so bisection
//!   errs on the conservative side.
//!
//! Bisection starts from a witnessed lower bound (the full-power or
//! equal-split allocation), which guarantees the returned allocation never
//! does worse than the baseline on the same instance.

use nalgebra::DMatrix;

use crate::downlink::{dl_sinr_hcf, equal_power_nu, DownlinkCoefficients};
use crate::error::{NumericsError, SolverError};
use crate::uplink::{ul_sinr, UplinkCoefficients};

/// Iteration cap of one downlink SOC feasibility check.
const SOC_ITER_CAP: usize = 5000;

/// Tolerances of the bisection solvers.
#[derive(Debug, Clone, Copy)]
pub struct BisectionSettings {
    /// Width of the final SINR-target bracket (linear scale).
    pub epsilon: f64,
    /// Safety cap on bisection iterations.
    pub max_iters: usize,
    /// Constraint-violation tolerance `delta` (dimensionless; scaled by the
    /// noise level in the downlink SOC check).
    pub feasibility_tolerance: f64,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        BisectionSettings {
            epsilon: 1e-3,
            max_iters: 200,
            feasibility_tolerance: 1e-4,
        }
    }
}

impl BisectionSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0) {
            return Err(SolverError::Invariant("epsilon must be positive".into()));
        }
        if !(self.feasibility_tolerance > 0.0)
            || self.feasibility_tolerance > self.epsilon / 10.0
        {
            return Err(SolverError::Invariant(
                "feasibility tolerance must be positive and at most epsilon / 10".into(),
            ));
        }
        Ok(())
    }
}

/// Result of uplink max-min power control.
#[derive(Debug, Clone)]
pub struct UplinkPowerAllocation {
    /// Per-user power coefficients in `[0, 1]`.
    pub eta: Vec<f64>,
    /// Largest SINR target proven feasible.
    pub achieved_target: f64,
    /// Final bisection bracket `(feasible, infeasible)`.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Result of downlink max-min power control.
#[derive(Debug, Clone)]
pub struct DownlinkPowerAllocation {
    /// Power amplitudes (`users x nodes`), squared coefficients summing to
    /// at most one per node.
    pub nu: DMatrix<f64>,
    pub achieved_target: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Decides feasibility of the uplink SINR target `gamma_t` and returns the
/// componentwise-minimal power vector achieving it, if one exists within the
/// unit box.
pub fn ul_feasibility(
    gamma_t: f64,
    co: &UplinkCoefficients,
    tolerance: f64,
) -> Option<Vec<f64>> {
    let users = co.users();
    if gamma_t <= 0.0 {
        return Some(vec![0.0; users]);
    }

    // eta_k (S_k - t I[k][k]) >= t (sum_{k' != k} eta_k' I[k][k'] + N_k)
    let mut denom = vec![0.0f64; users];
    for k in 0..users {
        let d = co.signal[k] - gamma_t * co.interference[k][k];
        if d <= 0.0 {
            return None;
        }
        denom[k] = d;
    }

    let mut system = DMatrix::<f64>::identity(users, users);
    for k in 0..users {
        for kp in 0..users {
            if kp != k {
                system[(k, kp)] = -gamma_t * co.interference[k][kp] / denom[k];
            }
        }
    }
    let rhs = nalgebra::DVector::from_fn(users, |k, _| gamma_t * co.noise[k] / denom[k]);

    let eta = system.lu().solve(&rhs)?;
    // Positivity of the solution certifies a spectral radius below one; the
    // fixed point is then the componentwise-minimal feasible power vector.
    if eta.iter().any(|&e| e < 0.0 || !e.is_finite()) {
        return None;
    }
    if eta.iter().any(|&e| e > 1.0 + tolerance) {
        return None;
    }
    Some(eta.iter().map(|&e| e.clamp(0.0, 1.0)).collect())
}

/// Maximizes the minimum uplink SINR by bisection over the target, starting
/// from the full-power lower bound.
pub fn maxmin_uplink(
    co: &UplinkCoefficients,
    settings: &BisectionSettings,
) -> Result<UplinkPowerAllocation, SolverError> {
    settings.validate()?;
    let users = co.users();
    let full = vec![1.0; users];
    let gamma_full = ul_sinr(co, &full);
    let mut low = gamma_full.iter().cloned().fold(f64::INFINITY, f64::min);
    if !low.is_finite() {
        low = 0.0;
    }
    let mut witness = full;

    // Noise-only upper bound: gamma_k can never exceed S_k / N_k.
    let mut high = low;
    for k in 0..users {
        if co.noise[k] > 0.0 {
            high = high.max(co.signal[k] / co.noise[k]);
        }
    }

    let mut iterations = 0usize;
    while high - low > settings.epsilon {
        if iterations >= settings.max_iters {
            return Err(SolverError::IterationLimit {
                max_iters: settings.max_iters,
                low,
                high,
            });
        }
        let mid = 0.5 * (low + high);
        match ul_feasibility(mid, co, settings.feasibility_tolerance) {
            Some(eta) => {
                low = mid;
                witness = eta;
            }
            None => high = mid,
        }
        iterations += 1;
    }

    Ok(UplinkPowerAllocation {
        eta: witness,
        achieved_target: low,
        bracket: (low, high),
        iterations,
    })
}

/// Flattened second-order cone feasibility problem in noise-normalized
/// units.
struct SocProblem {
    users: usize,
    nodes: usize,
    /// `weights[k]` over flattened `(k', j)`: squared non-coherent (C)
    /// amplitudes divided by the noise power.
    weights: Vec<Vec<f64>>,
    /// Coherent contamination couplings per user `k`: for each pilot
    /// sharer `k'`, the per-node complex amplitudes `B / sigma_z`. Their
    /// weighted sum over nodes enters the cone norm as one complex entry.
    coherent: Vec<Vec<(usize, Vec<crate::linalg::C64>)>>,
    /// Normalized signal amplitudes, flattened `(k, j)`.
    a: Vec<f64>,
    /// Certification margin (`delta`, noise units).
    band: f64,
    step_scale: f64,
}

impl SocProblem {
    fn new(co: &DownlinkCoefficients, settings: &BisectionSettings) -> Self {
        let users = co.users();
        let nodes = co.nodes();
        let sigma2 = co.sigma_z * co.sigma_z;
        let mut weights = Vec::with_capacity(users);
        let mut coherent = Vec::with_capacity(users);
        for k in 0..users {
            let mut row = vec![0.0f64; users * nodes];
            let mut pairs = Vec::new();
            for kp in 0..users {
                for j in 0..nodes {
                    let c = co.c[j][(k, kp)];
                    row[kp * nodes + j] = c * c / sigma2;
                }
                if kp != k && co.assignment().shares_pilot(k, kp) {
                    let amps: Vec<crate::linalg::C64> = (0..nodes)
                        .map(|j| co.b[j][(k, kp)] / co.sigma_z)
                        .collect();
                    pairs.push((kp, amps));
                }
            }
            weights.push(row);
            coherent.push(pairs);
        }
        let mut a = vec![0.0f64; users * nodes];
        for k in 0..users {
            for j in 0..nodes {
                a[k * nodes + j] = co.a[(k, j)] / co.sigma_z;
            }
        }
        SocProblem {
            users,
            nodes,
            weights,
            coherent,
            a,
            band: settings.feasibility_tolerance,
            step_scale: 0.5 * (nodes as f64).sqrt(),
        }
    }

    /// Weighted coherent sum `sum_j B[k -> k'][j] x[k'][j]`.
    fn coherent_sum(&self, amps: &[crate::linalg::C64], kp: usize, x: &[f64]) -> crate::linalg::C64 {
        let mut acc = crate::linalg::C64::new(0.0, 0.0);
        for (j, amp) in amps.iter().enumerate() {
            acc += amp * x[kp * self.nodes + j];
        }
        acc
    }

    /// Squared cone norm of user `k` at `x` (noise-normalized).
    fn f_squared(&self, k: usize, x: &[f64]) -> f64 {
        let mut f2 = 1.0; // normalized noise term
        for (w, xv) in self.weights[k].iter().zip(x) {
            f2 += w * xv * xv;
        }
        for (kp, amps) in &self.coherent[k] {
            f2 += self.coherent_sum(amps, *kp, x).norm_sqr();
        }
        f2
    }

    /// Normalized cone margins: `sqrt(xi_t) ||f_k|| - s_k` per user; positive
    /// means violated.
    fn margins(&self, sqrt_xi: f64, x: &[f64]) -> (f64, usize, f64) {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_k = 0;
        let mut worst_f = 1.0;
        for k in 0..self.users {
            let f = self.f_squared(k, x).sqrt();
            let mut s = 0.0;
            for j in 0..self.nodes {
                s += self.a[k * self.nodes + j] * x[k * self.nodes + j];
            }
            let v = sqrt_xi * f - s;
            if v > worst {
                worst = v;
                worst_k = k;
                worst_f = f;
            }
        }
        (worst, worst_k, worst_f)
    }

    fn project(&self, x: &mut [f64]) {
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        for j in 0..self.nodes {
            let mut energy = 0.0;
            for k in 0..self.users {
                energy += x[k * self.nodes + j] * x[k * self.nodes + j];
            }
            if energy > 1.0 {
                let scale = energy.sqrt().recip();
                for k in 0..self.users {
                    x[k * self.nodes + j] *= scale;
                }
            }
        }
    }

    /// Projected subgradient descent on the worst cone violation. Returns a
    /// certifying point when one is found with margin at least `band`.
    fn solve(&self, xi_t: f64, warm: &[f64]) -> Option<Vec<f64>> {
        let sqrt_xi = xi_t.sqrt();
        let dim = self.users * self.nodes;
        let mut x = warm.to_vec();
        self.project(&mut x);
        let mut gradient = vec![0.0f64; dim];

        for t in 1..=SOC_ITER_CAP {
            let (objective, active, f_active) = self.margins(sqrt_xi, &x);
            if objective <= -self.band {
                return Some(x);
            }

            // Subgradient of the active constraint.
            let row = &self.weights[active];
            let scale = sqrt_xi / f_active;
            for idx in 0..dim {
                gradient[idx] = scale * row[idx] * x[idx];
            }
            for (kp, amps) in &self.coherent[active] {
                let coupled = self.coherent_sum(amps, *kp, &x);
                for (j, amp) in amps.iter().enumerate() {
                    gradient[kp * self.nodes + j] += scale * (coupled.conj() * amp).re;
                }
            }
            for j in 0..self.nodes {
                gradient[active * self.nodes + j] -= self.a[active * self.nodes + j];
            }
            let gnorm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm <= f64::MIN_POSITIVE {
                break;
            }

            // Polyak step aimed one band past the certification level (so
            // the iterate crosses it in finite time), clipped by a
            // diminishing schedule.
            let polyak = (objective + 2.0 * self.band) / gnorm;
            let step = polyak.min(self.step_scale / (t as f64).sqrt());
            for idx in 0..dim {
                x[idx] -= step * gradient[idx] / gnorm;
            }
            self.project(&mut x);
        }
        None
    }
}

/// Decides feasibility of the downlink SINR target `xi_t`, returning power
/// amplitudes that certify it when feasible.
pub fn dl_soc_feasibility(
    xi_t: f64,
    co: &DownlinkCoefficients,
    settings: &BisectionSettings,
    warm: Option<&DMatrix<f64>>,
) -> Option<DMatrix<f64>> {
    let problem = SocProblem::new(co, settings);
    let start = warm
        .map(|m| m.as_slice().to_vec())
        .unwrap_or_else(|| equal_power_nu(co.users(), co.nodes()).as_slice().to_vec());
    if xi_t <= 0.0 {
        return Some(unflatten(&start, co.users(), co.nodes()));
    }
    problem
        .solve(xi_t, &start)
        .map(|x| unflatten(&x, co.users(), co.nodes()))
}

fn unflatten(x: &[f64], users: usize, nodes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(users, nodes, |k, j| x[k * nodes + j])
}

fn flatten(nu: &DMatrix<f64>) -> Vec<f64> {
    let (users, nodes) = nu.shape();
    let mut x = vec![0.0f64; users * nodes];
    for k in 0..users {
        for j in 0..nodes {
            x[k * nodes + j] = nu[(k, j)];
        }
    }
    x
}

/// Maximizes the minimum downlink SINR by bisection over the target,
/// starting from the witnessed equal-power lower bound. Each feasibility
/// check warm-starts from the last certified allocation.
pub fn maxmin_downlink(
    co: &DownlinkCoefficients,
    settings: &BisectionSettings,
) -> Result<DownlinkPowerAllocation, SolverError> {
    settings.validate()?;
    let users = co.users();
    let nodes = co.nodes();
    let problem = SocProblem::new(co, settings);

    let nu_eq = equal_power_nu(users, nodes);
    let xi_eq = dl_sinr_hcf(co, &nu_eq)
        .map_err(|e| SolverError::Invariant(format!("equal-power evaluation failed: {e}")))?;
    let mut low = xi_eq.iter().cloned().fold(f64::INFINITY, f64::min);
    if !low.is_finite() {
        low = 0.0;
    }
    let mut witness = flatten(&nu_eq);

    let sigma2 = co.sigma_z * co.sigma_z;
    let mut high = low;
    for k in 0..users {
        let total: f64 = (0..nodes).map(|j| co.a[(k, j)]).sum();
        high = high.max(total * total / sigma2);
    }

    let mut iterations = 0usize;
    while high - low > settings.epsilon {
        if iterations >= settings.max_iters {
            return Err(SolverError::IterationLimit {
                max_iters: settings.max_iters,
                low,
                high,
            });
        }
        let mid = 0.5 * (low + high);
        match problem.solve(mid, &witness) {
            Some(x) => {
                low = mid;
                witness = x;
            }
            None => high = mid,
        }
        iterations += 1;
    }

    Ok(DownlinkPowerAllocation {
        nu: unflatten(&witness, users, nodes),
        achieved_target: low,
        bracket: (low, high),
        iterations,
    })
}

/// Uplink power saving of an allocation against a baseline, in percent:
/// `100 (1 - mean(eta) / mean(eta_baseline))`.
pub fn power_saving_uplink(eta: &[f64], eta_baseline: &[f64]) -> Result<f64, NumericsError> {
    if eta.len() != eta_baseline.len() || eta.is_empty() {
        return Err(NumericsError::Domain(
            "allocations must be non-empty and the same length".into(),
        ));
    }
    let mean = eta.iter().sum::<f64>() / eta.len() as f64;
    let base = eta_baseline.iter().sum::<f64>() / eta_baseline.len() as f64;
    if base <= 0.0 {
        return Err(NumericsError::Domain("baseline power is zero".into()));
    }
    Ok(100.0 * (1.0 - mean / base))
}

/// Downlink power saving per node class, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkPowerSaving {
    /// Saving at the central array, when one exists.
    pub cbs_pct: Option<f64>,
    /// Mean saving across eAPs, when any exist.
    pub eap_mean_pct: Option<f64>,
}

/// Compares per-node transmitted energy `sum_k nu[k][j]^2` against a
/// baseline allocation, reporting the central array separately from the
/// eAP average.
pub fn power_saving_downlink(
    nu: &DMatrix<f64>,
    nu_baseline: &DMatrix<f64>,
    is_central: &[bool],
) -> Result<DownlinkPowerSaving, NumericsError> {
    if nu.shape() != nu_baseline.shape() || nu.ncols() != is_central.len() {
        return Err(NumericsError::Domain(
            "allocation shapes and node classes must agree".into(),
        ));
    }
    let energy = |m: &DMatrix<f64>, j: usize| -> f64 {
        (0..m.nrows()).map(|k| m[(k, j)] * m[(k, j)]).sum()
    };
    let mut cbs = None;
    let mut eap_acc = 0.0;
    let mut eap_count = 0usize;
    for j in 0..nu.ncols() {
        let base = energy(nu_baseline, j);
        if base <= 0.0 {
            return Err(NumericsError::Domain(format!(
                "baseline power at node {j} is zero"
            )));
        }
        let saving = 100.0 * (1.0 - energy(nu, j) / base);
        if is_central[j] {
            cbs = Some(saving);
        } else {
            eap_acc += saving;
            eap_count += 1;
        }
    }
    Ok(DownlinkPowerSaving {
        cbs_pct: cbs,
        eap_mean_pct: (eap_count > 0).then(|| eap_acc / eap_count as f64),
    })
}
