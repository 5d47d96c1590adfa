//! Drift estimation under the objective measure: Riccati MSE curves for both
//! investor classes, the deterministic bias gap induced by a contaminated
//! signal, and the nonlinear two-state filter.
//!
//! The MSE curves and the bias gap are deterministic, computed once per grid
//! and shared read-only across workers. The linear filter SDE makes the
//! biased estimate an exact deterministic offset of the unbiased one, which
//! the Monte Carlo engine exploits for common-random-number sweeps over the
//! bias.

use crate::error::{Result, SimError};
use crate::model::{ModelParams, SimGrid, TwoStateParams};

/// Positive root of -2 kappa g + sigma_mu^2 - h_total_sq g^2 = 0, written in
/// the cancellation-free form sigma^2 / (kappa + sqrt(kappa^2 + sigma^2 h^2)).
pub fn stationary_gamma_root(kappa: f64, sigma_mu: f64, h_total_sq: f64) -> f64 {
    let s2 = sigma_mu * sigma_mu;
    s2 / (kappa + (kappa * kappa + s2 * h_total_sq).sqrt())
}

/// Stationary filter MSE for an observation precision h_total_sq, which is
/// h_D^2 for Class-R and h_D^2 + h_e^2 for Class-I.
pub fn stationary_gamma(params: &ModelParams, h_total_sq: f64) -> Result<f64> {
    params.validate()?;
    if h_total_sq <= 0.0 {
        return Err(SimError::InvalidParameter(
            "h_total_sq must be > 0".into(),
        ));
    }
    Ok(stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq))
}

#[inline]
fn riccati_rhs(kappa: f64, sigma_mu: f64, h_total_sq: f64, g: f64) -> f64 {
    -2.0 * kappa * g + sigma_mu * sigma_mu - h_total_sq * g * g
}

/// Filter MSE at time t by explicit Euler integration on the grid step.
/// The Euler fixed point coincides with the exact stationary root.
pub fn riccati_gamma(
    params: &ModelParams,
    h_total_sq: f64,
    gamma0: f64,
    t: f64,
    dt: f64,
) -> Result<f64> {
    params.validate()?;
    if gamma0 < 0.0 || t < 0.0 || dt <= 0.0 {
        return Err(SimError::InvalidParameter(
            "riccati_gamma needs gamma0 >= 0, t >= 0, dt > 0".into(),
        ));
    }
    let mut g = gamma0;
    let mut elapsed = 0.0;
    while elapsed + dt <= t + 1e-12 {
        g += riccati_rhs(params.kappa, params.sigma_mu, h_total_sq, g) * dt;
        elapsed += dt;
    }
    let rem = t - elapsed;
    if rem > 1e-12 {
        g += riccati_rhs(params.kappa, params.sigma_mu, h_total_sq, g) * rem;
    }
    Ok(g.max(0.0))
}

/// Deterministic offset of the Class-I estimate caused by signal bias zeta,
/// together with its stationary value.
#[derive(Debug, Clone)]
pub struct BiasGapCurve {
    pub zeta: f64,
    /// Delta(t_k) on the grid, length n_steps + 1.
    pub delta: Vec<f64>,
    /// Fixed point gamma_I^* h_e zeta / (kappa + gamma_I^* (h_D^2 + h_e^2)).
    pub delta_stationary: f64,
}

impl BiasGapCurve {
    pub fn value_at(&self, k: usize) -> f64 {
        self.delta[k]
    }
}

/// Integrates d Delta = (-(kappa + gamma_I (h_D^2+h_e^2)) Delta
/// + gamma_I h_e forcing(t)) dt on the grid. Constant bias passes
/// forcing = |t| -> zeta; the hook keeps time-varying contamination
/// schedules representable.
pub fn bias_gap_with_forcing<F: Fn(f64) -> f64>(
    params: &ModelParams,
    grid: &SimGrid,
    forcing: F,
) -> Result<BiasGapCurve> {
    params.validate()?;
    grid.validate()?;
    let n = grid.n_steps();
    let dt = grid.dt;
    let h_total_sq = params.h_total_sq();
    let h_e = params.h_e();
    let zeta0 = forcing(0.0);
    let gamma_i_star = stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq);
    let delta_star = gamma_i_star * h_e * zeta0 / (params.kappa + gamma_i_star * h_total_sq);

    let mut delta = Vec::with_capacity(n + 1);
    let mut d = match params.init {
        crate::model::InitMode::Stationary => delta_star,
        crate::model::InitMode::Point => 0.0,
    };
    let mut g = initial_gamma_i(params);
    delta.push(d);
    for k in 0..n {
        let t = k as f64 * dt;
        d += (-(params.kappa + g * h_total_sq) * d + g * h_e * forcing(t)) * dt;
        g += riccati_rhs(params.kappa, params.sigma_mu, h_total_sq, g) * dt;
        delta.push(d);
    }
    Ok(BiasGapCurve {
        zeta: zeta0,
        delta,
        delta_stationary: delta_star,
    })
}

/// Bias gap for a constant contamination zeta.
pub fn bias_gap(params: &ModelParams, grid: &SimGrid, zeta: f64) -> Result<BiasGapCurve> {
    bias_gap_with_forcing(params, grid, |_| zeta)
}

fn initial_gamma_i(params: &ModelParams) -> f64 {
    match params.init {
        crate::model::InitMode::Stationary => {
            stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq())
        }
        crate::model::InitMode::Point => params.gamma_i0,
    }
}

/// One-step discrete Kalman quantities for one class: posterior variance
/// after the step's updates and the affine coefficients of the mean map.
#[derive(Debug, Clone, Copy)]
struct KalmanStep {
    keep: f64,
    gain_y: f64,
    gain_e: f64,
    next_p: f64,
}

/// Class-R step: one dividend observation, then the chain predict.
fn kalman_step_r(p: f64, dt: f64, a: f64, q2: f64, sd_sq: f64) -> KalmanStep {
    let k1 = p / (p * dt + sd_sq);
    let keep1 = 1.0 - k1 * dt;
    KalmanStep {
        keep: a * keep1,
        gain_y: a * k1,
        gain_e: 0.0,
        next_p: a * a * keep1 * p + q2,
    }
}

/// Class-I step: dividend then signal observation, then predict. The agent
/// applies the unbiased signal model; a bias shifts the observation and
/// therefore the estimate by a deterministic, affine amount.
fn kalman_step_i(p: f64, dt: f64, a: f64, q2: f64, sd_sq: f64, se_sq: f64) -> KalmanStep {
    let k1 = p / (p * dt + sd_sq);
    let keep1 = 1.0 - k1 * dt;
    let p1 = keep1 * p;
    let k2 = p1 / (p1 * dt + se_sq);
    let keep2 = 1.0 - k2 * dt;
    KalmanStep {
        keep: a * keep1 * keep2,
        gain_y: a * k1 * keep2,
        gain_e: a * k2,
        next_p: a * a * keep2 * p1 + q2,
    }
}

/// Stationary values of the discrete recursions at step dt. They converge
/// to the continuous Riccati roots as dt -> 0.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteStationary {
    /// Stationary variance of the discretized drift chain.
    pub var_mu: f64,
    /// Stationary Class-R filter MSE.
    pub p_r: f64,
    /// Stationary Class-I filter MSE.
    pub p_i: f64,
    /// Stationary unit bias gap.
    pub delta_unit: f64,
}

/// Fixed points of the discrete filter recursions, found by iteration from
/// the continuous roots.
pub fn discrete_stationary(params: &ModelParams, dt: f64) -> DiscreteStationary {
    let a = 1.0 - params.kappa * dt;
    let q2 = params.sigma_mu * params.sigma_mu * dt;
    let sd_sq = params.sigma_d * params.sigma_d;
    let se_sq = params.sigma_e * params.sigma_e;
    let h_d_sq = params.h_d() * params.h_d();
    let mut p_r = stationary_gamma_root(params.kappa, params.sigma_mu, h_d_sq);
    let mut p_i = stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq());
    for _ in 0..200_000 {
        let next_r = kalman_step_r(p_r, dt, a, q2, sd_sq).next_p;
        let next_i = kalman_step_i(p_i, dt, a, q2, sd_sq, se_sq).next_p;
        let done = (next_r - p_r).abs() <= 1e-22 + 1e-16 * p_r
            && (next_i - p_i).abs() <= 1e-22 + 1e-16 * p_i;
        p_r = next_r;
        p_i = next_i;
        if done {
            break;
        }
    }
    let step_i = kalman_step_i(p_i, dt, a, q2, sd_sq, se_sq);
    let delta_unit = step_i.gain_e * params.sigma_e * dt / (1.0 - step_i.keep);
    let var_mu = if params.sigma_mu == 0.0 {
        0.0
    } else {
        q2 / (1.0 - a * a)
    };
    DiscreteStationary {
        var_mu,
        p_r,
        p_i,
        delta_unit,
    }
}

/// Deterministic per-grid data shared by every path worker: the exact
/// discrete-filter MSE curves and mean-update coefficients, the unit bias
/// gap, discount weights, and stationary values.
///
/// The filter is the exact Kalman recursion of the discretized system, so
/// the simulated estimates are conditional expectations in the simulated
/// world and the projection identities the welfare analysis rests on hold
/// at any step size. The curves converge to the continuous Riccati and gap
/// ODE solutions as dt -> 0.
#[derive(Debug, Clone)]
pub struct Curves {
    pub dt: f64,
    pub n_steps: usize,
    /// E[(mu_R - mu)^2] at t_k (discrete filter MSE), length n + 1.
    pub gamma_r: Vec<f64>,
    /// E[(mu_I(0) - mu)^2] at t_k, length n + 1.
    pub gamma_i: Vec<f64>,
    /// Delta(t_k; zeta = 1); Delta(t; zeta) = zeta * delta_unit(t).
    pub delta_unit: Vec<f64>,
    /// exp(-rho t_k), length n + 1.
    pub discount: Vec<f64>,
    /// Mean-update coefficients, length n: the Class-R estimate advances as
    /// m' = r_keep m + r_gain dy + drift_const with dy the compensated
    /// log-dividend increment.
    pub r_keep: Vec<f64>,
    pub r_gain: Vec<f64>,
    /// Class-I: m' = i_keep m + i_gain_y dy + i_gain_e de + drift_const.
    pub i_keep: Vec<f64>,
    pub i_gain_y: Vec<f64>,
    pub i_gain_e: Vec<f64>,
    pub drift_const: f64,
    /// Continuous stationary roots (closed form).
    pub gamma_r_star: f64,
    pub gamma_i_star: f64,
    pub delta_unit_star: f64,
    /// Discrete stationary values at this dt.
    pub stationary: DiscreteStationary,
}

impl Curves {
    pub fn build(params: &ModelParams, grid: &SimGrid) -> Result<Curves> {
        params.validate()?;
        grid.validate()?;
        let n = grid.n_steps();
        let dt = grid.dt;
        let a = 1.0 - params.kappa * dt;
        let q2 = params.sigma_mu * params.sigma_mu * dt;
        let sd_sq = params.sigma_d * params.sigma_d;
        let se_sq = params.sigma_e * params.sigma_e;
        let h_d_sq = params.h_d() * params.h_d();
        let h_total_sq = params.h_total_sq();
        let stationary = discrete_stationary(params, dt);

        let (mut p_r, mut p_i, mut d) = match params.init {
            crate::model::InitMode::Point => (params.gamma_r0, params.gamma_i0, 0.0),
            crate::model::InitMode::Stationary => {
                (stationary.p_r, stationary.p_i, stationary.delta_unit)
            }
        };

        let mut gamma_r = Vec::with_capacity(n + 1);
        let mut gamma_i = Vec::with_capacity(n + 1);
        let mut delta_unit = Vec::with_capacity(n + 1);
        let mut r_keep = Vec::with_capacity(n);
        let mut r_gain = Vec::with_capacity(n);
        let mut i_keep = Vec::with_capacity(n);
        let mut i_gain_y = Vec::with_capacity(n);
        let mut i_gain_e = Vec::with_capacity(n);
        gamma_r.push(p_r);
        gamma_i.push(p_i);
        delta_unit.push(d);
        for _ in 0..n {
            let step_r = kalman_step_r(p_r, dt, a, q2, sd_sq);
            let step_i = kalman_step_i(p_i, dt, a, q2, sd_sq, se_sq);
            r_keep.push(step_r.keep);
            r_gain.push(step_r.gain_y);
            i_keep.push(step_i.keep);
            i_gain_y.push(step_i.gain_y);
            i_gain_e.push(step_i.gain_e);
            d = step_i.keep * d + step_i.gain_e * params.sigma_e * dt;
            p_r = step_r.next_p;
            p_i = step_i.next_p;
            gamma_r.push(p_r);
            gamma_i.push(p_i);
            delta_unit.push(d);
        }
        let discount = (0..=n).map(|k| (-params.rho * k as f64 * dt).exp()).collect();
        Ok(Curves {
            dt,
            n_steps: n,
            gamma_r,
            gamma_i,
            delta_unit,
            discount,
            r_keep,
            r_gain,
            i_keep,
            i_gain_y,
            i_gain_e,
            drift_const: params.kappa * params.mu_bar * dt,
            gamma_r_star: stationary_gamma_root(params.kappa, params.sigma_mu, h_d_sq),
            gamma_i_star: stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq),
            delta_unit_star: {
                let gi = stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq);
                gi * params.h_e() / (params.kappa + gi * h_total_sq)
            },
            stationary,
        })
    }
}

/// Both classes' estimates and MSEs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FilterState {
    pub mu_r: f64,
    pub mu_i: f64,
    pub gamma_r: f64,
    pub gamma_i: f64,
    pub t: f64,
}

/// One Euler step of both filter means under the objective measure, with the
/// bias drift gamma_I h_e zeta entering the Class-I estimate, followed by a
/// Riccati step of both MSEs. dW and dB must be the same increments that
/// drive the truth path.
pub fn step_filters_objective(
    state: &FilterState,
    mu_true: f64,
    dw: f64,
    db: f64,
    dt: f64,
    params: &ModelParams,
) -> FilterState {
    let h_d = params.h_d();
    let h_e = params.h_e();
    let h_d_sq = h_d * h_d;
    let h_total_sq = h_d_sq + h_e * h_e;
    let mu_r = state.mu_r
        + (params.kappa * (params.mu_bar - state.mu_r)
            + state.gamma_r * h_d_sq * (mu_true - state.mu_r))
            * dt
        + state.gamma_r * h_d * dw;
    let mu_i = state.mu_i
        + (params.kappa * (params.mu_bar - state.mu_i)
            + state.gamma_i * h_total_sq * (mu_true - state.mu_i)
            + state.gamma_i * h_e * params.zeta)
            * dt
        + state.gamma_i * (h_d * dw + h_e * db);
    FilterState {
        mu_r,
        mu_i,
        gamma_r: state.gamma_r + riccati_rhs(params.kappa, params.sigma_mu, h_d_sq, state.gamma_r) * dt,
        gamma_i: state.gamma_i
            + riccati_rhs(params.kappa, params.sigma_mu, h_total_sq, state.gamma_i) * dt,
        t: state.t + dt,
    }
}

/// Attaches filter series (the exact discrete Kalman recursion, biased by
/// params.zeta) to a simulated truth path. `path_index` must be the index
/// the truth was simulated with so initial draws line up.
pub fn attach_filters(
    params: &ModelParams,
    grid: &SimGrid,
    path_index: usize,
    bundle: &mut crate::model::PathBundle,
) {
    let n = grid.n_steps();
    let dt = grid.dt;
    let curves = Curves::build(params, grid).expect("validated by simulate_truth");
    let stream = crate::rng::PathStream::new(grid.seed, path_index as u64);
    let init = crate::model::draw_initial_state(params, dt, &stream);
    let mut mu_r = init.mu_r0;
    // Unbiased twin plus the deterministic gap.
    let mut mu_i0 = init.mu_i0;
    bundle.mu_r = Vec::with_capacity(n + 1);
    bundle.mu_i = Vec::with_capacity(n + 1);
    bundle.mu_r.push(mu_r);
    bundle.mu_i.push(mu_i0 + params.zeta * curves.delta_unit[0]);
    for k in 0..n {
        // Compensated observation increments: dy = mu dt + sigma_D dW,
        // de = mu dt + sigma_e dB (unbiased; the bias rides on delta_unit).
        let dy = bundle.mu[k] * dt + params.sigma_d * bundle.dw[k];
        let de = bundle.mu[k] * dt + params.sigma_e * bundle.db[k];
        mu_r = curves.r_keep[k] * mu_r + curves.r_gain[k] * dy + curves.drift_const;
        mu_i0 = curves.i_keep[k] * mu_i0
            + curves.i_gain_y[k] * dy
            + curves.i_gain_e[k] * de
            + curves.drift_const;
        bundle.mu_r.push(mu_r);
        bundle.mu_i.push(mu_i0 + params.zeta * curves.delta_unit[k + 1]);
    }
}

/// One Euler step of the two-state nonlinear filter for one class, where the
/// innovation gain is nu(x) = (mu_h - x)(x - mu_l). `signal_precision_sq` is
/// h_D^2 for Class-R (with `db_term` zero) and h_D^2 + h_e^2 for Class-I.
/// Returns the clamped estimate and whether clamping fired.
#[allow(clippy::too_many_arguments)]
pub fn wonham_step(
    estimate: f64,
    mu_true: f64,
    dw: f64,
    db: f64,
    dt: f64,
    params: &TwoStateParams,
    class_i: bool,
) -> (f64, bool) {
    let h_d = params.h_d();
    let h_e = params.h_e();
    let nu = (params.mu_h - estimate) * (estimate - params.mu_l);
    let total_rate = params.lambda_hl + params.psi_lh;
    let mut next = estimate + total_rate * (params.mu_infinity() - estimate) * dt;
    if class_i {
        let h_total_sq = h_d * h_d + h_e * h_e;
        next += h_total_sq * nu * (mu_true - estimate) * dt
            + nu * h_e * params.zeta * dt
            + nu * (h_d * dw + h_e * db);
    } else {
        next += h_d * h_d * nu * (mu_true - estimate) * dt + nu * h_d * dw;
    }
    let eps = 1e-12 * (params.mu_h - params.mu_l);
    let lo = params.mu_l + eps;
    let hi = params.mu_h - eps;
    if next < lo {
        (lo, true)
    } else if next > hi {
        (hi, true)
    } else {
        (next, false)
    }
}

/// Deterministic estimation-error curves for the mean-reverting model:
/// E[(mu_R - mu)^2](t) = gamma_R(t) and
/// E[(mu_I(zeta) - mu)^2](t) = gamma_I(t) + Delta(t; zeta)^2.
/// Only valid when the filters are exact conditional expectations.
pub fn mse_curves(params: &ModelParams, grid: &SimGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    if !params.has_conditional_expectation_init() {
        return Err(SimError::Unsupported(
            "mse_curves requires the conditional-expectation initialization \
             (equal point estimates with zero spread, or stationary); \
             use Monte Carlo estimates otherwise"
                .into(),
        ));
    }
    let curves = Curves::build(params, grid)?;
    let mse_r = curves.gamma_r.clone();
    let mse_i = curves
        .gamma_i
        .iter()
        .zip(curves.delta_unit.iter())
        .map(|(&g, &du)| {
            let d = params.zeta * du;
            g + d * d
        })
        .collect();
    Ok((mse_r, mse_i))
}
