//! Objective-measure welfare: both classes' utilities, the passive
//! benchmark, total welfare, critical biases, participation slopes, and the
//! double-loss scan.
//!
//! Every comparison is made on common random numbers; the standard error of
//! a difference is always computed from per-path differences, never from
//! independent runs. Where the difference estimator would otherwise drown a
//! small effect, an exponential-martingale control variate with exactly
//! unit mean is attached; it is switched off at large biases where its own
//! quadratic variation would fatten the tails.

use crate::engine::{run_pass, run_two_state_pass, ComboSpec, PassOutput, PassPlan};
use crate::error::{Result, SimError};
use crate::filters::stationary_gamma_root;
use crate::model::{InitMode, ModelParams, SimGrid, TwoStateParams};
use crate::numeric::{excess_kurtosis, mean_se};

/// Point estimates, standard errors, and common-random-number gap
/// estimators for one (zeta, e_R) configuration.
#[derive(Debug, Clone)]
pub struct WelfareReport {
    pub zeta: f64,
    pub e_r: f64,
    pub u_r: f64,
    pub se_r: f64,
    pub u_i: f64,
    pub se_i: f64,
    /// Benchmark utility through the likelihood-ratio mixture.
    pub u_bench: f64,
    pub se_bench: f64,
    /// Benchmark utility through the dividend directly; independent of both
    /// zeta and e_R by construction.
    pub u_bench_d: f64,
    pub se_bench_d: f64,
    pub u_total: f64,
    pub se_total: f64,
    pub u_total_autarky: f64,
    pub se_total_autarky: f64,
    /// U_I - U_R from per-path differences.
    pub gap_ir: f64,
    pub se_gap: f64,
    /// U_I - U_bench from per-path differences (control-variated when
    /// enabled).
    pub diff_i_bench: f64,
    pub se_diff_i_bench: f64,
    /// U_R - U_bench from per-path differences.
    pub diff_r_bench: f64,
    pub se_diff_r_bench: f64,
    /// Equilibrium minus autarky total welfare from per-path differences.
    pub diff_total: f64,
    pub se_diff_total: f64,
    pub n_paths: usize,
    pub t_horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Analytic bound on the discarded (T, infinity) tail of the utility
    /// integrals, assuming linear growth of the integrand mean.
    pub tail_bound: f64,
    pub tail_warning: bool,
}

/// Whether the unit-mean martingale control variate helps at this bias: its
/// log quadratic variation over the horizon must stay moderate or the
/// variate itself becomes heavy-tailed.
pub fn cv_recommended(params: &ModelParams, zeta: f64, t_horizon: f64) -> bool {
    let h_d_sq = params.h_d() * params.h_d();
    let gamma_r = stationary_gamma_root(params.kappa, params.sigma_mu, h_d_sq);
    let gamma_i = stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq());
    let delta_star =
        gamma_i * params.h_e() * zeta / (params.kappa + gamma_i * params.h_total_sq());
    let qvar = h_d_sq * ((gamma_r - gamma_i).max(0.0) + delta_star * delta_star) * t_horizon;
    qvar < 4.0
}

/// Conservative bound on |integral over (T, inf) of e^{-rho t} E[integrand]|
/// for the utility integrands, using linear-growth envelopes for
/// E[log eta^m - log xi].
pub fn tail_bound(params: &ModelParams, t_horizon: f64) -> f64 {
    let rho = params.rho;
    if rho <= 0.0 {
        return f64::INFINITY;
    }
    let h_d_sq = params.h_d() * params.h_d();
    let gamma_r = stationary_gamma_root(params.kappa, params.sigma_mu, h_d_sq)
        .max(params.gamma_r0);
    let gamma_i = stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq())
        .max(params.gamma_i0);
    let delta_star = params.zeta.abs() * stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq())
        * params.h_e()
        / (params.kappa + stationary_gamma_root(params.kappa, params.sigma_mu, params.h_total_sq()) * params.h_total_sq());
    let err_sq = gamma_r + gamma_i + delta_star * delta_star;
    let mu_dev = params.mu_bar.abs() + (params.mu0 - params.mu_bar).abs() + delta_star
        + 3.0 * params.drift_stationary_var().sqrt();
    let sd = params.sigma_d;
    let phi_sq = 2.0 * sd * sd + 2.0 * h_d_sq * 4.0 * err_sq;
    // |d/dt E[log eta]| + |E r| + E[phi^2]/2 + rho t term
    let b = 0.5 * h_d_sq * err_sq + (rho + mu_dev + sd * sd) + 0.5 * phi_sq + rho;
    let a = rho.ln().abs();
    (-rho * t_horizon).exp() * ((a + b * t_horizon) / rho + b / (rho * rho))
}

pub fn build_report(
    params: &ModelParams,
    grid: &SimGrid,
    out: &PassOutput,
    zeta: f64,
    e_r: f64,
    zi: usize,
    ci: usize,
) -> WelfareReport {
    let l = &out.layout;
    let (u_r, se_r) = out.mean_se(l.u_r(ci));
    let (u_i, se_i) = out.mean_se(l.u_i(ci));
    let (u_bench, se_bench) = out.mean_se(l.u_bench_eta(ci));
    let (u_bench_d, se_bench_d) = out.mean_se(l.u_bench_d());
    let (u_total, se_total) = out.mean_se(l.u_total_eq(ci));
    let (u_total_aut, se_total_aut) = out.mean_se(l.u_total_autarky());
    let (gap, se_gap) = out.mean_se(l.gap(zi));
    let (diff_i, se_diff_i) = out.mean_se(l.diff_i_bench(ci));
    let (diff_r, se_diff_r) = out.mean_se(l.diff_r_bench(ci));
    let (diff_total, se_diff_total) = out.diff_mean_se(l.u_total_eq(ci), l.u_total_autarky());
    let mut p = params.clone();
    p.zeta = zeta;
    let tail = tail_bound(&p, grid.t_horizon);
    let min_se = se_r.min(se_i).min(se_bench);
    WelfareReport {
        zeta,
        e_r,
        u_r,
        se_r,
        u_i,
        se_i,
        u_bench,
        se_bench,
        u_bench_d,
        se_bench_d,
        u_total,
        se_total,
        u_total_autarky: u_total_aut,
        se_total_autarky: se_total_aut,
        gap_ir: gap,
        se_gap,
        diff_i_bench: diff_i,
        se_diff_i_bench: se_diff_i,
        diff_r_bench: diff_r,
        se_diff_r_bench: se_diff_r,
        diff_total,
        se_diff_total,
        n_paths: grid.n_paths,
        t_horizon: grid.t_horizon,
        dt: grid.dt,
        seed: grid.seed,
        tail_bound: tail,
        tail_warning: tail > 0.1 * min_se,
    }
}

/// Monte Carlo welfare estimates at the parameter set's own (zeta, e_R).
pub fn welfare_report(params: &ModelParams, grid: &SimGrid) -> Result<WelfareReport> {
    if params.rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "welfare requires rho > 0".into(),
        ));
    }
    let plan = PassPlan {
        zetas: vec![params.zeta],
        combos: vec![ComboSpec {
            zeta_idx: 0,
            e_r: params.e_r,
            bench: true,
            total: true,
            diffs: true,
            diff_cv: cv_recommended(params, params.zeta, grid.t_horizon),
            deriv: false,
        }],
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_pass(params, grid, &plan)?;
    Ok(build_report(params, grid, &out, params.zeta, params.e_r, 0, 0))
}

/// Deterministic U_I - U_R through the discounted integral of the
/// mean-squared-error gap: (h_D^2/2) int_0^inf (e^{-rho s}/rho)
/// (gamma_R(s) - gamma_I(s) - Delta(s; zeta)^2) ds, integrated on a fine
/// grid with an analytic stationary tail.
pub fn welfare_gap_ode(params: &ModelParams, zeta: f64) -> Result<f64> {
    if params.rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "welfare_gap_ode requires rho > 0".into(),
        ));
    }
    if !params.has_conditional_expectation_init() {
        return Err(SimError::Unsupported(
            "welfare_gap_ode needs the conditional-expectation initialization; \
             use the Monte Carlo gap otherwise"
                .into(),
        ));
    }
    let h_total_sq = params.h_total_sq();
    let gamma_max = [
        params.gamma_r0,
        params.gamma_i0,
        stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq),
        stationary_gamma_root(params.kappa, params.sigma_mu, params.h_d() * params.h_d()),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let rate = params.kappa + h_total_sq * gamma_max;
    let dt = (0.25 / rate).min(0.01);
    // Long enough for the Riccati and gap transients to die out; the tail
    // beyond uses exact stationary values. This oracle integrates the
    // continuous-time ODEs directly and shares nothing with the Monte Carlo
    // filter recursion.
    let mut t_ode = (12.0 / params.kappa).max(200.0);
    t_ode = (t_ode / dt).round() * dt;
    let n = (t_ode / dt).round() as usize;
    let h_d_sq = params.h_d() * params.h_d();
    let h_e = params.h_e();
    let rho = params.rho;
    let kappa = params.kappa;
    let s2 = params.sigma_mu * params.sigma_mu;
    let gamma_r_star = stationary_gamma_root(kappa, params.sigma_mu, h_d_sq);
    let gamma_i_star = stationary_gamma_root(kappa, params.sigma_mu, h_total_sq);
    let delta_star = zeta * gamma_i_star * h_e / (kappa + gamma_i_star * h_total_sq);

    let (mut g_r, mut g_i, mut delta) = match params.init {
        InitMode::Point => (params.gamma_r0, params.gamma_i0, 0.0),
        InitMode::Stationary => (gamma_r_star, gamma_i_star, delta_star),
    };
    let mut acc = crate::numeric::Kahan::default();
    for k in 0..n {
        let t = k as f64 * dt;
        acc.add((-rho * t).exp() / rho * (g_r - g_i - delta * delta) * dt);
        delta += (-(kappa + g_i * h_total_sq) * delta + g_i * h_e * zeta) * dt;
        g_r += (-2.0 * kappa * g_r + s2 - h_d_sq * g_r * g_r) * dt;
        g_i += (-2.0 * kappa * g_i + s2 - h_total_sq * g_i * g_i) * dt;
    }
    let g_star = gamma_r_star - gamma_i_star - delta_star * delta_star;
    let tail = (-rho * t_ode).exp() / (rho * rho) * g_star;
    Ok(0.5 * h_d_sq * (acc.value() + tail))
}

/// Critical biases (zeta_1, zeta_2) where the deterministic welfare gap
/// changes sign: bracket by doubling, then bisect to 1e-10. The gap is even
/// in zeta, so zeta_1 = -zeta_2.
pub fn critical_zeta_welfare(params: &ModelParams) -> Result<(f64, f64)> {
    let gap0 = welfare_gap_ode(params, 0.0)?;
    if gap0 <= 0.0 {
        return Err(SimError::RootFinding(format!(
            "gap at zeta = 0 must be positive (got {gap0}); \
             the information advantage is degenerate"
        )));
    }
    let mut hi = 1.0;
    while welfare_gap_ode(params, hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(SimError::RootFinding(
                "no sign change for zeta in (0, 1e3]; h_e is likely ~ 0".into(),
            ));
        }
    }
    let gap = |z: f64| welfare_gap_ode(params, z).expect("validated params");
    let zeta2 = crate::numeric::bisect(gap, 0.0, hi, 1e-10)
        .ok_or_else(|| SimError::RootFinding("bisection bracket lost the sign change".into()))?;
    Ok((-zeta2, zeta2))
}

/// Monte Carlo estimates of the participation slopes
/// d(U^I - U^bench)/de^R at e_R = 0 and e_R = 1 through the
/// likelihood-ratio estimators, with per-path standard errors.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub slope_at_zero: f64,
    pub se_at_zero: f64,
    pub slope_at_one: f64,
    pub se_at_one: f64,
    pub kurtosis_at_zero: f64,
    pub kurtosis_at_one: f64,
    pub heavy_tails: bool,
    pub cv_used: bool,
}

pub fn endpoint_slopes(params: &ModelParams, grid: &SimGrid) -> Result<SlopeReport> {
    if params.rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "endpoint slopes require rho > 0".into(),
        ));
    }
    let cv = cv_recommended(params, params.zeta, grid.t_horizon);
    let plan = PassPlan {
        zetas: vec![params.zeta],
        combos: vec![],
        slopes: true,
        slope_cv: cv,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_pass(params, grid, &plan)?;
    slope_report_from(&out, 0, cv)
}

pub fn slope_report_from(out: &PassOutput, zi: usize, cv: bool) -> Result<SlopeReport> {
    let s0 = out.column(out.layout.slope0(zi));
    let s1 = out.column(out.layout.slope1(zi));
    let (m0, se0) = mean_se(&s0);
    let (m1, se1) = mean_se(&s1);
    let k0 = excess_kurtosis(&s0);
    let k1 = excess_kurtosis(&s1);
    Ok(SlopeReport {
        slope_at_zero: m0,
        se_at_zero: se0,
        slope_at_one: m1,
        se_at_one: se1,
        kurtosis_at_zero: k0,
        kurtosis_at_one: k1,
        heavy_tails: k0 > 20.0 || k1 > 20.0,
        cv_used: cv,
    })
}

/// One axis of a common-random-number sweep with per-point reports and
/// double-loss flags. Keeps the per-path U_I values so curvature checks can
/// propagate errors pathwise.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: String,
    pub values: Vec<f64>,
    pub reports: Vec<WelfareReport>,
    pub double_loss: Vec<bool>,
    /// Row-major (n_paths x n_points) per-path U_I samples.
    pub u_i_paths: Vec<f64>,
    pub n_paths: usize,
}

/// Welfare across an e_R grid at fixed zeta on one shared path ensemble;
/// flags double loss where both classes sit more than three difference
/// standard errors below the benchmark.
pub fn double_loss_scan(
    params: &ModelParams,
    zeta: f64,
    e_r_grid: &[f64],
    grid: &SimGrid,
) -> Result<SweepResult> {
    if e_r_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(SimError::InvalidParameter(
            "e_R grid must lie in [0, 1]".into(),
        ));
    }
    let cv = cv_recommended(params, zeta, grid.t_horizon);
    let plan = PassPlan {
        zetas: vec![zeta],
        combos: e_r_grid
            .iter()
            .map(|&e_r| ComboSpec {
                zeta_idx: 0,
                e_r,
                bench: true,
                total: true,
                diffs: true,
                diff_cv: cv,
                deriv: false,
            })
            .collect(),
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_pass(params, grid, &plan)?;
    let mut reports = Vec::with_capacity(e_r_grid.len());
    let mut flags = Vec::with_capacity(e_r_grid.len());
    for (ci, &e_r) in e_r_grid.iter().enumerate() {
        let rep = build_report(params, grid, &out, zeta, e_r, 0, ci);
        let flag = rep.diff_i_bench < -3.0 * rep.se_diff_i_bench
            && rep.diff_r_bench < -3.0 * rep.se_diff_r_bench;
        flags.push(flag);
        reports.push(rep);
    }
    let mut u_i_paths = Vec::with_capacity(out.n_paths * e_r_grid.len());
    for p in 0..out.n_paths {
        let row = p * out.layout.n_cols;
        for ci in 0..e_r_grid.len() {
            u_i_paths.push(out.data[row + out.layout.u_i(ci)]);
        }
    }
    Ok(SweepResult {
        axis: "e_r".into(),
        values: e_r_grid.to_vec(),
        reports,
        double_loss: flags,
        u_i_paths,
        n_paths: out.n_paths,
    })
}

/// Convexity and constancy diagnostics over an e_R sweep.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// Interior second differences of U_I with per-path standard errors.
    pub second_diffs: Vec<(f64, f64)>,
    pub convex_ok: bool,
    /// Largest deviation of the U_I - U_R gap across the grid.
    pub gap_max_dev: f64,
    pub gap_constant_ok: bool,
    /// Equilibrium total welfare never exceeds autarky beyond noise.
    pub negative_sum_ok: bool,
}

pub fn convexity_check(sweep: &SweepResult) -> ConvexityReport {
    let n_points = sweep.values.len();
    let n_paths = sweep.n_paths;
    let mut second_diffs = Vec::new();
    let mut convex_ok = true;
    for j in 1..n_points.saturating_sub(1) {
        let d2: Vec<f64> = (0..n_paths)
            .map(|p| {
                let row = p * n_points;
                sweep.u_i_paths[row + j + 1] - 2.0 * sweep.u_i_paths[row + j]
                    + sweep.u_i_paths[row + j - 1]
            })
            .collect();
        let (m, se) = mean_se(&d2);
        if m < -3.0 * se {
            convex_ok = false;
        }
        second_diffs.push((m, se));
    }
    let gap0 = sweep.reports[0].gap_ir;
    let gap_max_dev = sweep
        .reports
        .iter()
        .map(|r| (r.gap_ir - gap0).abs())
        .fold(0.0, f64::max);
    let gap_constant_ok = gap_max_dev <= 1e-12;
    let negative_sum_ok = sweep.reports.iter().all(|r| {
        let interior = r.e_r > 0.0 && r.e_r < 1.0;
        if interior {
            r.diff_total < 3.0 * r.se_diff_total
        } else {
            r.diff_total.abs() <= 1e-10
        }
    });
    ConvexityReport {
        second_diffs,
        convex_ok,
        gap_max_dev,
        gap_constant_ok,
        negative_sum_ok,
    }
}

/// Full welfare matrix over zetas x e_R points on one shared ensemble.
/// Every report of the same zeta shares its gap estimator; every report of
/// the matrix shares the dividend-based benchmark.
pub fn welfare_matrix(
    params: &ModelParams,
    grid: &SimGrid,
    zetas: &[f64],
    e_r_grid: &[f64],
) -> Result<Vec<Vec<WelfareReport>>> {
    let mut combos = Vec::with_capacity(zetas.len() * e_r_grid.len());
    for zi in 0..zetas.len() {
        for &e_r in e_r_grid {
            combos.push(ComboSpec {
                zeta_idx: zi,
                e_r,
                bench: true,
                total: true,
                diffs: true,
                diff_cv: cv_recommended(params, zetas[zi], grid.t_horizon),
                deriv: false,
            });
        }
    }
    let plan = PassPlan {
        zetas: zetas.to_vec(),
        combos,
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_pass(params, grid, &plan)?;
    let mut rows = Vec::with_capacity(zetas.len());
    let mut ci = 0;
    for (zi, &zeta) in zetas.iter().enumerate() {
        let mut row = Vec::with_capacity(e_r_grid.len());
        for &e_r in e_r_grid {
            row.push(build_report(params, grid, &out, zeta, e_r, zi, ci));
            ci += 1;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Sign estimate of the participation slope at e_R = 0 in the two-state
/// economy, the configuration where the nonlinear filter overturns the
/// mean-reverting conclusion.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub slope_at_zero: f64,
    pub se_at_zero: f64,
    /// |estimate| >= 2 SE.
    pub conclusive: bool,
}

pub fn two_state_counterexample(
    params: &TwoStateParams,
    grid: &SimGrid,
) -> Result<CounterexampleReport> {
    if params.rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "the counterexample slope requires rho > 0".into(),
        ));
    }
    let plan = PassPlan {
        zetas: vec![params.zeta],
        combos: vec![],
        slopes: true,
        slope_cv: true,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_two_state_pass(params, grid, &plan)?;
    let s0 = out.column(out.layout.slope0(0));
    let (m, se) = mean_se(&s0);
    Ok(CounterexampleReport {
        slope_at_zero: m,
        se_at_zero: se,
        conclusive: m.abs() >= 2.0 * se,
    })
}
