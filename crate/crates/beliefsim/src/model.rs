//! Economy primitives: parameter sets, the simulation grid, and the
//! exogenous truth processes (mean-reverting drift, dividend, signal).
//!
//! Everything here is a pure function of (params, grid, path_index); paths
//! can be generated from any number of workers in any order.

use crate::error::{Result, SimError};
use crate::filters::stationary_gamma_root;
use crate::rng::{Channel, PathStream};

/// How filters and the hidden drift are initialized at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Deterministic point initialization from the explicit fields
    /// (mu0, mu_r0, mu_i0, gamma_r0, gamma_i0).
    #[default]
    Point,
    /// Truth and estimates drawn from the joint stationary law, with filter
    /// error variances pinned at the stationary Riccati roots. Represents
    /// investors with an unbounded learning history.
    Stationary,
}

/// All economy and belief constants. Rates are annualized; the dividend is
/// normalized to D_0 = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Long-term mean of the drift.
    pub mu_bar: f64,
    /// Mean-reversion speed of the drift.
    pub kappa: f64,
    /// Drift volatility.
    pub sigma_mu: f64,
    /// Dividend volatility.
    pub sigma_d: f64,
    /// External signal volatility.
    pub sigma_e: f64,
    /// Time-preference rate. Zero is allowed only for time-averaged
    /// survival analysis; welfare operations reject it.
    pub rho: f64,
    /// Signal bias: a constant drift contamination per unit signal
    /// volatility, unknown to the investors.
    pub zeta: f64,
    /// Initial share of aggregate wealth held by Class-R investors.
    pub e_r: f64,
    /// Initial true drift.
    pub mu0: f64,
    /// Initial Class-R estimate.
    pub mu_r0: f64,
    /// Initial Class-I estimate.
    pub mu_i0: f64,
    /// Initial Class-R filter MSE.
    pub gamma_r0: f64,
    /// Initial Class-I filter MSE.
    pub gamma_i0: f64,
    pub init: InitMode,
}

impl ModelParams {
    /// Baseline parameter set used by most experiments.
    pub fn baseline() -> Self {
        ModelParams {
            mu_bar: 0.04,
            kappa: 0.2,
            sigma_mu: 0.01,
            sigma_d: 0.2,
            sigma_e: 0.05,
            rho: 0.02,
            zeta: 0.0,
            e_r: 0.5,
            mu0: 0.04,
            mu_r0: 0.04,
            mu_i0: 0.04,
            gamma_r0: 0.0,
            gamma_i0: 0.0,
            init: InitMode::Point,
        }
    }

    /// Dividend precision 1/sigma_D.
    #[inline]
    pub fn h_d(&self) -> f64 {
        1.0 / self.sigma_d
    }

    /// Signal precision 1/sigma_e.
    #[inline]
    pub fn h_e(&self) -> f64 {
        1.0 / self.sigma_e
    }

    /// h_D^2 + h_e^2, the Class-I total observation precision.
    #[inline]
    pub fn h_total_sq(&self) -> f64 {
        self.h_d() * self.h_d() + self.h_e() * self.h_e()
    }

    pub fn e_i(&self) -> f64 {
        1.0 - self.e_r
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_bar,
            self.kappa,
            self.sigma_mu,
            self.sigma_d,
            self.sigma_e,
            self.rho,
            self.zeta,
            self.e_r,
            self.mu0,
            self.mu_r0,
            self.mu_i0,
            self.gamma_r0,
            self.gamma_i0,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidParameter(
                "non-finite model parameter".into(),
            ));
        }
        if self.sigma_d <= 0.0 {
            return Err(SimError::InvalidParameter("sigma_d must be > 0".into()));
        }
        if self.sigma_e <= 0.0 {
            return Err(SimError::InvalidParameter("sigma_e must be > 0".into()));
        }
        if self.kappa <= 0.0 {
            return Err(SimError::InvalidParameter("kappa must be > 0".into()));
        }
        if self.sigma_mu < 0.0 {
            return Err(SimError::InvalidParameter("sigma_mu must be >= 0".into()));
        }
        if self.rho < 0.0 {
            return Err(SimError::InvalidParameter("rho must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.e_r) {
            return Err(SimError::InvalidParameter("e_r must lie in [0, 1]".into()));
        }
        if self.gamma_r0 < 0.0 || self.gamma_i0 < 0.0 {
            return Err(SimError::InvalidParameter(
                "initial filter MSEs must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// True when the filters coincide with exact conditional expectations,
    /// which the deterministic MSE identities require: either the point
    /// initialization with zero spread and equal means, or the stationary
    /// initialization.
    pub fn has_conditional_expectation_init(&self) -> bool {
        match self.init {
            InitMode::Stationary => true,
            InitMode::Point => {
                self.gamma_r0 == 0.0
                    && self.gamma_i0 == 0.0
                    && self.mu_r0 == self.mu0
                    && self.mu_i0 == self.mu0
            }
        }
    }

    /// Stationary variance of the drift itself.
    pub fn drift_stationary_var(&self) -> f64 {
        self.sigma_mu * self.sigma_mu / (2.0 * self.kappa)
    }
}

/// Discretization and ensemble size. Governs every discretized integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    /// Step size.
    pub dt: f64,
    /// Horizon.
    pub t_horizon: f64,
    /// Number of Monte Carlo paths.
    pub n_paths: usize,
    /// Master seed for the counter-based generator.
    pub seed: u64,
}

impl SimGrid {
    pub fn new(dt: f64, t_horizon: f64, n_paths: usize, seed: u64) -> Self {
        SimGrid {
            dt,
            t_horizon,
            n_paths,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(SimError::InvalidGrid("dt must be > 0".into()));
        }
        if !self.t_horizon.is_finite() || self.t_horizon < self.dt {
            return Err(SimError::InvalidGrid("horizon must be >= dt".into()));
        }
        if self.n_paths == 0 {
            return Err(SimError::InvalidGrid("n_paths must be positive".into()));
        }
        let ratio = self.t_horizon / self.dt;
        if (ratio - ratio.round()).abs() >= 0.5 - 1e-9 {
            return Err(SimError::InvalidGrid(
                "horizon is ambiguous: t/dt falls on a rounding tie".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps; the grid has n_steps + 1 state points.
    pub fn n_steps(&self) -> usize {
        (self.t_horizon / self.dt).round() as usize
    }
}

/// Explicit-scheme stiffness guard shared by every simulator: the fastest
/// filter relaxation rate times dt must stay below 1/2.
pub fn stability_check(params: &ModelParams, grid: &SimGrid) -> Result<()> {
    params.validate()?;
    grid.validate()?;
    let h_total_sq = params.h_total_sq();
    let gamma_max = [
        params.gamma_r0,
        params.gamma_i0,
        stationary_gamma_root(params.kappa, params.sigma_mu, params.h_d() * params.h_d()),
        stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let rate = params.kappa + h_total_sq * gamma_max;
    if grid.dt * rate > 0.5 {
        return Err(SimError::Unstable(format!(
            "dt * (kappa + (h_D^2+h_e^2) * gamma_max) = {:.3} exceeds 0.5; reduce dt",
            grid.dt * rate
        )));
    }
    Ok(())
}

/// Per-path time series. Truth fields are filled by `simulate_truth`;
/// filter and equilibrium fields are attached by the downstream modules.
/// State series have n_steps + 1 points, increment series n_steps.
#[derive(Debug, Clone, Default)]
pub struct PathBundle {
    pub mu: Vec<f64>,
    pub log_d: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dw_mu: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub mu_i: Vec<f64>,
    pub log_eta_r: Vec<f64>,
    pub log_eta_i: Vec<f64>,
    pub log_xi: Vec<f64>,
}

/// Initial (truth, estimates) triple for one path. In `Point` mode it echoes
/// the parameter fields; in `Stationary` mode it is drawn so that the joint
/// law of (mu, mu_R, mu_I) matches its stationary distribution, with the
/// Class-I estimate still excluding the bias offset (the bias enters through
/// the deterministic gap curve).
#[derive(Debug, Clone, Copy)]
pub struct InitDraw {
    pub mu0: f64,
    pub mu_r0: f64,
    pub mu_i0: f64,
}

pub fn draw_initial_state(params: &ModelParams, dt: f64, stream: &PathStream) -> InitDraw {
    match params.init {
        InitMode::Point => InitDraw {
            mu0: params.mu0,
            mu_r0: params.mu_r0,
            mu_i0: params.mu_i0,
        },
        InitMode::Stationary => {
            // Stationary law of the discretized system, so the filter error
            // variances sit exactly at the discrete fixed points.
            let stat = crate::filters::discrete_stationary(params, dt);
            // mu_R = mean + est_dev; mu_I = mu_R + spread; mu = mu_I - err.
            // Orthogonality of estimates and errors fixes the three variances.
            let err = stat.p_i.sqrt() * stream.normal(0, Channel::InitTruth);
            let est_dev =
                (stat.var_mu - stat.p_r).max(0.0).sqrt() * stream.normal(0, Channel::InitEstimate);
            let spread =
                (stat.p_r - stat.p_i).max(0.0).sqrt() * stream.normal(0, Channel::InitSpread);
            let mu_r0 = params.mu_bar + est_dev;
            let mu_i0 = mu_r0 + spread;
            InitDraw {
                mu0: mu_i0 - err,
                mu_r0,
                mu_i0,
            }
        }
    }
}

/// Euler-Maruyama simulation of the truth under the objective measure:
/// the mean-reverting drift and the dividend in log space (D_0 = 1).
/// Signal shocks are drawn alongside so the same stream drives the filters.
pub fn simulate_truth(params: &ModelParams, grid: &SimGrid, path_index: usize) -> Result<PathBundle> {
    stability_check(params, grid)?;
    let n = grid.n_steps();
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let stream = PathStream::new(grid.seed, path_index as u64);
    let init = draw_initial_state(params, grid.dt, &stream);

    let mut bundle = PathBundle {
        mu: Vec::with_capacity(n + 1),
        log_d: Vec::with_capacity(n + 1),
        dw: Vec::with_capacity(n),
        db: Vec::with_capacity(n),
        dw_mu: Vec::with_capacity(n),
        ..PathBundle::default()
    };

    let mut mu = init.mu0;
    let mut log_d = 0.0;
    bundle.mu.push(mu);
    bundle.log_d.push(log_d);
    for k in 0..n {
        let step = k as u64;
        let dw = sqrt_dt * stream.normal(step, Channel::DividendShock);
        let db = sqrt_dt * stream.normal(step, Channel::SignalShock);
        let dwm = sqrt_dt * stream.normal(step, Channel::DriftShock);
        log_d += (mu - 0.5 * params.sigma_d * params.sigma_d) * dt + params.sigma_d * dw;
        mu += params.kappa * (params.mu_bar - mu) * dt + params.sigma_mu * dwm;
        bundle.dw.push(dw);
        bundle.db.push(db);
        bundle.dw_mu.push(dwm);
        bundle.mu.push(mu);
        bundle.log_d.push(log_d);
    }
    Ok(bundle)
}

/// Closed-form mean and variance of the mean-reverting drift at time t,
/// started from the point mu0. The analytic oracle for `simulate_truth`.
pub fn ou_moments(params: &ModelParams, t: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(SimError::InvalidParameter("t must be >= 0".into()));
    }
    let decay = (-params.kappa * t).exp();
    let mean = params.mu_bar + (params.mu0 - params.mu_bar) * decay;
    let var = params.sigma_mu * params.sigma_mu * (1.0 - decay * decay) / (2.0 * params.kappa);
    Ok((mean, var))
}

/// Two-state continuous Markov chain economy. Shares the observation
/// parameters with the mean-reverting model.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateParams {
    /// High-state drift.
    pub mu_h: f64,
    /// Low-state drift.
    pub mu_l: f64,
    /// Intensity of moving from the high to the low state.
    pub lambda_hl: f64,
    /// Intensity of moving from the low to the high state.
    pub psi_lh: f64,
    pub sigma_d: f64,
    pub sigma_e: f64,
    pub rho: f64,
    pub zeta: f64,
    pub e_r: f64,
    /// Initial true state value; must equal mu_h or mu_l.
    pub mu0: f64,
    pub mu_r0: f64,
    pub mu_i0: f64,
}

impl TwoStateParams {
    /// Two nearly indistinguishable states under aggressive discounting;
    /// the configuration that flips the sign of the participation slope.
    pub fn near_degenerate() -> Self {
        TwoStateParams {
            mu_h: 0.1,
            mu_l: 0.099,
            lambda_hl: 0.2,
            psi_lh: 0.2,
            sigma_d: 0.2,
            sigma_e: 0.05,
            rho: 100.0,
            zeta: -0.01,
            e_r: 0.5,
            mu0: 0.099,
            mu_r0: 0.099,
            mu_i0: 0.099,
        }
    }

    /// Separated states at ordinary discounting.
    pub fn realistic() -> Self {
        TwoStateParams {
            mu_h: 0.1,
            mu_l: -0.2,
            lambda_hl: 0.2,
            psi_lh: 0.2,
            sigma_d: 0.2,
            sigma_e: 0.05,
            rho: 0.02,
            zeta: 0.0,
            e_r: 0.5,
            mu0: -0.2,
            mu_r0: -0.05,
            mu_i0: -0.05,
        }
    }

    #[inline]
    pub fn h_d(&self) -> f64 {
        1.0 / self.sigma_d
    }

    #[inline]
    pub fn h_e(&self) -> f64 {
        1.0 / self.sigma_e
    }

    /// Stationary mean of the chain; the only value that keeps the filter
    /// unbiased in the long run.
    #[inline]
    pub fn mu_infinity(&self) -> f64 {
        (self.psi_lh * self.mu_h + self.lambda_hl * self.mu_l) / (self.lambda_hl + self.psi_lh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_h <= self.mu_l {
            return Err(SimError::InvalidParameter("mu_h must exceed mu_l".into()));
        }
        if self.lambda_hl <= 0.0 || self.psi_lh <= 0.0 {
            return Err(SimError::InvalidParameter(
                "transition intensities must be > 0".into(),
            ));
        }
        if self.sigma_d <= 0.0 || self.sigma_e <= 0.0 {
            return Err(SimError::InvalidParameter(
                "volatilities must be > 0".into(),
            ));
        }
        if self.rho < 0.0 {
            return Err(SimError::InvalidParameter("rho must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.e_r) {
            return Err(SimError::InvalidParameter("e_r must lie in [0, 1]".into()));
        }
        if self.mu0 != self.mu_h && self.mu0 != self.mu_l {
            return Err(SimError::InvalidParameter(
                "mu0 must equal mu_h or mu_l".into(),
            ));
        }
        if self.mu_r0 < self.mu_l
            || self.mu_r0 > self.mu_h
            || self.mu_i0 < self.mu_l
            || self.mu_i0 > self.mu_h
        {
            return Err(SimError::InvalidParameter(
                "initial estimates must lie in [mu_l, mu_h]".into(),
            ));
        }
        Ok(())
    }

    pub fn stability_check(&self, grid: &SimGrid) -> Result<()> {
        self.validate()?;
        grid.validate()?;
        let span = self.mu_h - self.mu_l;
        let nu_max = 0.25 * span * span;
        let h_total_sq = self.h_d() * self.h_d() + self.h_e() * self.h_e();
        let rate = self.lambda_hl + self.psi_lh + h_total_sq * nu_max;
        if grid.dt * rate > 0.5 {
            return Err(SimError::Unstable(format!(
                "dt * ((lambda+psi) + (h_D^2+h_e^2) * nu_max) = {:.3} exceeds 0.5; reduce dt",
                grid.dt * rate
            )));
        }
        Ok(())
    }
}

/// Truth path of the two-state chain economy.
#[derive(Debug, Clone)]
pub struct TwoStatePath {
    pub mu: Vec<f64>,
    pub log_d: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

/// Simulates the chain by per-step exponential flip probabilities and the
/// dividend exactly as in the mean-reverting model.
pub fn simulate_two_state(
    params: &TwoStateParams,
    grid: &SimGrid,
    path_index: usize,
) -> Result<TwoStatePath> {
    params.stability_check(grid)?;
    let n = grid.n_steps();
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let p_hl = 1.0 - (-params.lambda_hl * dt).exp();
    let p_lh = 1.0 - (-params.psi_lh * dt).exp();
    let stream = PathStream::new(grid.seed, path_index as u64);

    let mut path = TwoStatePath {
        mu: Vec::with_capacity(n + 1),
        log_d: Vec::with_capacity(n + 1),
        dw: Vec::with_capacity(n),
        db: Vec::with_capacity(n),
    };
    let mut high = params.mu0 == params.mu_h;
    let mut log_d = 0.0;
    path.mu.push(if high { params.mu_h } else { params.mu_l });
    path.log_d.push(0.0);
    for k in 0..n {
        let step = k as u64;
        let dw = sqrt_dt * stream.normal(step, Channel::DividendShock);
        let db = sqrt_dt * stream.normal(step, Channel::SignalShock);
        let mu = if high { params.mu_h } else { params.mu_l };
        log_d += (mu - 0.5 * params.sigma_d * params.sigma_d) * dt + params.sigma_d * dw;
        let u = stream.uniform(step, Channel::DriftShock);
        if high {
            if u < p_hl {
                high = false;
            }
        } else if u < p_lh {
            high = true;
        }
        path.dw.push(dw);
        path.db.push(db);
        path.mu.push(if high { params.mu_h } else { params.mu_l });
        path.log_d.push(log_d);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{mean_se, variance_se};

    fn grid(dt: f64, t: f64, n_paths: usize, seed: u64) -> SimGrid {
        SimGrid::new(dt, t, n_paths, seed)
    }

    #[test]
    fn degenerate_ou_stays_at_mean() {
        let mut p = ModelParams::baseline();
        p.sigma_mu = 0.0;
        let g = grid(0.01, 5.0, 1, 1);
        let b = simulate_truth(&p, &g, 0).unwrap();
        for &m in &b.mu {
            assert_eq!(m, 0.04);
        }
    }

    #[test]
    fn ou_moments_match_formula() {
        let p = ModelParams::baseline();
        let (m0, v0) = ou_moments(&p, 0.0).unwrap();
        assert_eq!(m0, p.mu0);
        assert_eq!(v0, 0.0);
        let (m_inf, v_inf) = ou_moments(&p, 1e9).unwrap();
        assert!((m_inf - p.mu_bar).abs() < 1e-12);
        assert!((v_inf - p.drift_stationary_var()).abs() < 1e-12);
        // t = 5 evaluation
        let (_, v5) = ou_moments(&p, 5.0).unwrap();
        let expected = 0.01f64.powi(2) / 0.4 * (1.0 - (-2.0f64).exp());
        assert!((v5 - expected).abs() < 1e-15);
    }

    #[test]
    fn simulated_ou_matches_moments_oracle() {
        let mut p = ModelParams::baseline();
        p.mu0 = 0.01; // away from the mean so both moments are informative
        p.mu_r0 = 0.01;
        p.mu_i0 = 0.01;
        let g = grid(0.01, 5.0, 20_000, 77);
        let terminal: Vec<f64> = (0..g.n_paths)
            .map(|i| *simulate_truth(&p, &g, i).unwrap().mu.last().unwrap())
            .collect();
        let (om, ov) = ou_moments(&p, 5.0).unwrap();
        let (m, se_m) = mean_se(&terminal);
        assert!(
            (m - om).abs() < 4.0 * se_m,
            "mean {m} vs {om} (se {se_m})"
        );
        let (v, se_v) = variance_se(&terminal);
        // Euler introduces an O(dt) variance bias; allow it alongside the MC band.
        assert!(
            (v - ov).abs() < 4.0 * se_v + 2.0 * p.kappa * g.dt * ov,
            "var {v} vs {ov} (se {se_v})"
        );
    }

    #[test]
    fn paths_are_bitwise_reproducible() {
        let p = ModelParams::baseline();
        let g = grid(0.01, 2.0, 1, 99);
        let a = simulate_truth(&p, &g, 3).unwrap();
        let b = simulate_truth(&p, &g, 3).unwrap();
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.log_d, b.log_d);
        assert_eq!(a.dw, b.dw);
    }

    #[test]
    fn discounted_dividend_is_martingale_like() {
        // sigma_mu = 0: E[D_t] = exp(mu_bar t) holds exactly in the scheme.
        let mut p = ModelParams::baseline();
        p.sigma_mu = 0.0;
        let g = grid(0.01, 10.0, 20_000, 5);
        let d_t: Vec<f64> = (0..g.n_paths)
            .map(|i| simulate_truth(&p, &g, i).unwrap().log_d.last().unwrap().exp())
            .collect();
        let (m, se) = mean_se(&d_t);
        let target = (0.04f64 * 10.0).exp();
        assert!((m - target).abs() < 4.0 * se, "{m} vs {target} se {se}");
    }

    #[test]
    fn stability_guard_rejects_coarse_steps() {
        let p = ModelParams::baseline();
        // h_total_sq = 425, gamma* ~ 2e-4 -> rate ~ 0.29; dt = 2 trips the guard.
        let g = grid(2.0, 10.0, 1, 1);
        assert!(matches!(
            stability_check(&p, &g),
            Err(SimError::Unstable(_))
        ));
    }

    #[test]
    fn rejects_nonfinite_parameters() {
        let mut p = ModelParams::baseline();
        p.kappa = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn two_state_symmetric_chain_splits_time_evenly() {
        let p = TwoStateParams {
            mu_h: 0.1,
            mu_l: -0.2,
            lambda_hl: 0.2,
            psi_lh: 0.2,
            ..TwoStateParams::realistic()
        };
        let g = grid(0.01, 200.0, 2_000, 11);
        // Skip the burn-in from the deterministic low start.
        let skip = (25.0 / g.dt) as usize;
        let fractions: Vec<f64> = (0..g.n_paths)
            .map(|i| {
                let path = simulate_two_state(&p, &g, i).unwrap();
                let tail = &path.mu[skip..];
                let high = tail.iter().filter(|&&m| m == p.mu_h).count();
                high as f64 / tail.len() as f64
            })
            .collect();
        let (m, se) = mean_se(&fractions);
        assert!((m - 0.5).abs() < 4.0 * se, "high fraction {m} se {se}");
    }

    #[test]
    fn two_state_stationary_mean_matches_chain() {
        let p = TwoStateParams {
            mu_h: 0.1,
            mu_l: -0.2,
            lambda_hl: 0.2,
            psi_lh: 0.2,
            ..TwoStateParams::realistic()
        };
        // (psi mu_h + lambda mu_l)/(lambda + psi) = -0.05
        assert!((p.mu_infinity() + 0.05).abs() < 1e-15);
        let g = grid(0.01, 200.0, 1_000, 21);
        let skip = (25.0 / g.dt) as usize;
        let means: Vec<f64> = (0..g.n_paths)
            .map(|i| {
                let path = simulate_two_state(&p, &g, i).unwrap();
                let tail = &path.mu[skip..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect();
        let (m, se) = mean_se(&means);
        assert!((m + 0.05).abs() < 4.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn two_state_rejects_inverted_states() {
        let mut p = TwoStateParams::realistic();
        p.mu_h = -0.3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn near_degenerate_configuration_is_accepted() {
        let p = TwoStateParams::near_degenerate();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn stationary_init_draws_consistent_joint_law() {
        let mut p = ModelParams::baseline();
        p.init = InitMode::Stationary;
        let n = 40_000;
        let mut mu0s = Vec::with_capacity(n);
        let mut err_r = Vec::with_capacity(n);
        let mut err_i = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        for i in 0..n {
            let d = draw_initial_state(&p, 0.01, &PathStream::new(31, i as u64));
            mu0s.push(d.mu0);
            err_r.push((d.mu_r0 - d.mu0) * (d.mu_r0 - d.mu0));
            err_i.push((d.mu_i0 - d.mu0) * (d.mu_i0 - d.mu0));
            cross.push((d.mu_r0 - d.mu_i0) * (d.mu_i0 - d.mu0));
        }
        let (v, se_v) = variance_se(&mu0s);
        assert!((v - p.drift_stationary_var()).abs() < 4.0 * se_v);
        let gamma_r = stationary_gamma_root(p.kappa, p.sigma_mu, p.h_d() * p.h_d());
        let gamma_i = stationary_gamma_root(p.kappa, p.sigma_mu, p.h_total_sq());
        let (mr, se_r) = mean_se(&err_r);
        let (mi, se_i) = mean_se(&err_i);
        let (mc, se_c) = mean_se(&cross);
        assert!((mr - gamma_r).abs() < 4.0 * se_r);
        assert!((mi - gamma_i).abs() < 4.0 * se_i);
        assert!(mc.abs() < 4.0 * se_c, "projection identity at t=0");
    }
}
