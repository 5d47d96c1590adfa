//! Streaming path-ensemble kernels.
//!
//! One pass over each path simulates the truth once and derives every
//! requested (zeta, e_R) evaluation point from it in lockstep, so an entire
//! sweep shares identical Brownian increments. For the mean-reverting model
//! the biased Class-I estimate is an exact deterministic offset of the
//! unbiased one, which makes zeta sweeps per-path twins rather than
//! re-simulations.
//!
//! Workers fill disjoint per-path rows of a preallocated matrix; every
//! reduction afterwards runs in fixed path order, so results are identical
//! for any thread count.
//!
//! Per-path integrals use compensated accumulators: several acceptance
//! checks compare differently accumulated series at the 1e-10 level over
//! 50k+ steps, which naive summation does not survive.

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::filters::Curves;
use crate::model::{draw_initial_state, ModelParams, SimGrid, TwoStateParams};
use crate::numeric::{logsumexp2, mean_se, sigmoid, Kahan};
use crate::rng::{Channel, PathStream};

/// How the consumption share is computed for one evaluation point.
/// The endowment endpoints short-circuit exactly.
#[derive(Debug, Clone, Copy)]
enum ShareMode {
    AllR,
    AllI,
    Interior { log_k: f64, log_er: f64, log_ei: f64 },
}

impl ShareMode {
    fn new(e_r: f64) -> Self {
        if e_r <= 0.0 {
            ShareMode::AllI
        } else if e_r >= 1.0 {
            ShareMode::AllR
        } else {
            ShareMode::Interior {
                log_k: (e_r / (1.0 - e_r)).ln(),
                log_er: e_r.ln(),
                log_ei: (1.0 - e_r).ln(),
            }
        }
    }

    /// (lambda, log eta^bench) from the two log likelihood ratios.
    #[inline(always)]
    fn resolve(&self, ler: f64, lei: f64) -> (f64, f64) {
        match *self {
            ShareMode::AllR => (1.0, ler),
            ShareMode::AllI => (0.0, lei),
            ShareMode::Interior {
                log_k,
                log_er,
                log_ei,
            } => (
                sigmoid(log_k + ler - lei),
                logsumexp2(log_er + ler, log_ei + lei),
            ),
        }
    }
}

/// One (zeta, e_R) evaluation point of a pass.
#[derive(Debug, Clone, Copy)]
pub struct ComboSpec {
    /// Index into the pass's zeta list.
    pub zeta_idx: usize,
    pub e_r: f64,
    /// Accumulate the benchmark utility (log-sum-exp mixture).
    pub bench: bool,
    /// Accumulate total welfare in its equilibrium form.
    pub total: bool,
    /// Accumulate per-path differences U_I - U_bench and U_R - U_bench.
    pub diffs: bool,
    /// Attach the unit-mean martingale control variate to U_I - U_bench.
    pub diff_cv: bool,
    /// Accumulate the pathwise derivative d(U_I - U_bench)/de_R
    /// (control-variated likelihood-ratio estimator).
    pub deriv: bool,
}

impl ComboSpec {
    pub fn basic(zeta_idx: usize, e_r: f64) -> Self {
        ComboSpec {
            zeta_idx,
            e_r,
            bench: true,
            total: true,
            diffs: true,
            diff_cv: false,
            deriv: false,
        }
    }
}

/// Work order for an ensemble pass.
#[derive(Debug, Clone, Default)]
pub struct PassPlan {
    pub zetas: Vec<f64>,
    pub combos: Vec<ComboSpec>,
    /// Accumulate the participation-slope ratio statistics for every zeta.
    pub slopes: bool,
    /// Control-variate the slope statistics with the unit-mean martingale.
    pub slope_cv: bool,
    /// Times at which squared-error combinations of the filters are captured.
    pub capture_times: Vec<f64>,
    /// Times at which log eta = log eta^R - log eta^I is captured per zeta.
    pub series_times: Vec<f64>,
}

/// Column layout of the per-path output matrix.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n_zetas: usize,
    pub n_combos: usize,
    pub n_captures: usize,
    pub n_series: usize,
    pub slopes: bool,
    zeta_stride: usize,
    combo_base: usize,
    pub n_cols: usize,
}

const SHARED_FIXED: usize = 4;
const COMBO_STRIDE: usize = 8;

impl Layout {
    fn new(plan: &PassPlan) -> Layout {
        let n_zetas = plan.zetas.len();
        let n_combos = plan.combos.len();
        let n_captures = plan.capture_times.len();
        let n_series = plan.series_times.len();
        let zeta_stride = 2 + if plan.slopes { 2 } else { 0 } + 2 * n_captures + n_series;
        let combo_base = SHARED_FIXED + n_captures + n_zetas * zeta_stride;
        Layout {
            n_zetas,
            n_combos,
            n_captures,
            n_series,
            slopes: plan.slopes,
            zeta_stride,
            combo_base,
            n_cols: combo_base + n_combos * COMBO_STRIDE,
        }
    }

    pub fn u_bench_d(&self) -> usize {
        0
    }
    pub fn u_total_autarky(&self) -> usize {
        1
    }
    /// Terminal log eta^R.
    pub fn log_eta_r_term(&self) -> usize {
        2
    }
    /// Clamp events (two-state filter only; zero otherwise).
    pub fn clamp_count(&self) -> usize {
        3
    }
    /// (mu_R - mu)^2 at capture time ci.
    pub fn sq_err_r(&self, ci: usize) -> usize {
        SHARED_FIXED + ci
    }
    fn zeta_base(&self, zi: usize) -> usize {
        SHARED_FIXED + self.n_captures + zi * self.zeta_stride
    }
    /// Discounted integral of (log eta^I - log eta^R): the welfare gap.
    pub fn gap(&self, zi: usize) -> usize {
        self.zeta_base(zi)
    }
    /// Terminal log eta^I(zeta).
    pub fn log_eta_i_term(&self, zi: usize) -> usize {
        self.zeta_base(zi) + 1
    }
    /// Participation slope statistic at e_R = 0.
    pub fn slope0(&self, zi: usize) -> usize {
        debug_assert!(self.slopes);
        self.zeta_base(zi) + 2
    }
    /// Participation slope statistic at e_R = 1.
    pub fn slope1(&self, zi: usize) -> usize {
        debug_assert!(self.slopes);
        self.zeta_base(zi) + 3
    }
    /// (mu_R - mu_I)^2 + (mu_I - mu)^2 - (mu_R - mu)^2 at capture ci.
    pub fn sq_combo(&self, zi: usize, ci: usize) -> usize {
        self.zeta_base(zi) + 2 + if self.slopes { 2 } else { 0 } + ci
    }
    /// (mu_I - mu)^2 at capture ci.
    pub fn sq_err_i(&self, zi: usize, ci: usize) -> usize {
        self.zeta_base(zi) + 2 + if self.slopes { 2 } else { 0 } + self.n_captures + ci
    }
    /// log eta at series time si.
    pub fn series_log_eta(&self, zi: usize, si: usize) -> usize {
        self.zeta_base(zi) + 2 + if self.slopes { 2 } else { 0 } + 2 * self.n_captures + si
    }
    fn combo(&self, ci: usize) -> usize {
        self.combo_base + ci * COMBO_STRIDE
    }
    pub fn u_r(&self, ci: usize) -> usize {
        self.combo(ci)
    }
    pub fn u_i(&self, ci: usize) -> usize {
        self.combo(ci) + 1
    }
    pub fn u_bench_eta(&self, ci: usize) -> usize {
        self.combo(ci) + 2
    }
    pub fn u_total_eq(&self, ci: usize) -> usize {
        self.combo(ci) + 3
    }
    pub fn diff_i_bench(&self, ci: usize) -> usize {
        self.combo(ci) + 4
    }
    pub fn diff_r_bench(&self, ci: usize) -> usize {
        self.combo(ci) + 5
    }
    /// d(U_I - U_bench)/de_R at this combo's e_R.
    pub fn deriv_i_bench(&self, ci: usize) -> usize {
        self.combo(ci) + 6
    }
    /// Terminal log eta^bench at the combo's e_R.
    pub fn log_eta_bench_term(&self, ci: usize) -> usize {
        self.combo(ci) + 7
    }
}

/// Row-major per-path statistics matrix with deterministic reductions.
#[derive(Debug)]
pub struct PassOutput {
    pub layout: Layout,
    pub n_paths: usize,
    pub data: Vec<f64>,
}

impl PassOutput {
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| self.data[p * self.layout.n_cols + col])
            .collect()
    }

    pub fn mean_se(&self, col: usize) -> (f64, f64) {
        mean_se(&self.column(col))
    }

    /// Mean and standard error of the per-path difference of two columns.
    pub fn diff_mean_se(&self, col_a: usize, col_b: usize) -> (f64, f64) {
        let diffs: Vec<f64> = (0..self.n_paths)
            .map(|p| {
                let row = p * self.layout.n_cols;
                self.data[row + col_a] - self.data[row + col_b]
            })
            .collect();
        mean_se(&diffs)
    }
}

fn times_to_steps(times: &[f64], grid: &SimGrid) -> Result<Vec<usize>> {
    let n = grid.n_steps();
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        if t < 0.0 || t > grid.t_horizon + 0.5 * grid.dt {
            return Err(SimError::InvalidGrid(format!(
                "capture time {t} outside [0, {}]",
                grid.t_horizon
            )));
        }
        steps.push(((t / grid.dt).round() as usize).min(n));
    }
    if steps.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::InvalidGrid("capture times must be sorted".into()));
    }
    Ok(steps)
}

fn validate_plan(plan: &PassPlan, rho: f64) -> Result<()> {
    if !plan.combos.is_empty() && rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "welfare accumulation requires rho > 0".into(),
        ));
    }
    for combo in &plan.combos {
        if combo.zeta_idx >= plan.zetas.len() {
            return Err(SimError::InvalidGrid(
                "combo references an unknown zeta index".into(),
            ));
        }
        if !(0.0..=1.0).contains(&combo.e_r) {
            return Err(SimError::InvalidParameter(
                "combo e_r outside [0, 1]".into(),
            ));
        }
    }
    Ok(())
}

struct ZetaState {
    log_eta_i: Kahan,
    gap: Kahan,
    log_m: Kahan,
    qvar: Kahan,
    /// h_D^2 int [(mu_I - mu)(mu_I - mu_R) - Delta^2] ds: exactly mean-zero
    /// under the conditional-expectation filter; the leading noise of the
    /// ratio estimators.
    y_ctrl: Kahan,
    slope0: Kahan,
    slope1: Kahan,
}

impl ZetaState {
    fn new() -> Self {
        ZetaState {
            log_eta_i: Kahan::default(),
            gap: Kahan::default(),
            log_m: Kahan::default(),
            qvar: Kahan::default(),
            y_ctrl: Kahan::default(),
            slope0: Kahan::default(),
            slope1: Kahan::default(),
        }
    }
}

struct ComboState {
    log_xi: Kahan,
    u_r: Kahan,
    u_i: Kahan,
    u_bench: Kahan,
    u_total: Kahan,
    diff_i: Kahan,
    diff_r: Kahan,
    deriv: Kahan,
}

impl ComboState {
    fn new() -> Self {
        ComboState {
            log_xi: Kahan::default(),
            u_r: Kahan::default(),
            u_i: Kahan::default(),
            u_bench: Kahan::default(),
            u_total: Kahan::default(),
            diff_i: Kahan::default(),
            diff_r: Kahan::default(),
            deriv: Kahan::default(),
        }
    }
}

/// Everything constant across paths for the combo accumulation step.
struct ComboCtx<'a> {
    specs: &'a [ComboSpec],
    modes: &'a [ShareMode],
    rho: f64,
    sigma_d: f64,
    h_d: f64,
    log_rho: f64,
}

/// Advances one combo over [t_k, t_{k+1}] given the time-k state. Shared by
/// the mean-reverting and two-state kernels.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn accumulate_combo(
    ctx: &ComboCtx,
    ci: usize,
    state: &mut ComboState,
    w: f64,
    rho_t: f64,
    ler: f64,
    lei: f64,
    m_value: f64,
    y_value: f64,
    mu: f64,
    mu_r: f64,
    mu_i: f64,
    dw: f64,
    dt: f64,
) {
    let combo = &ctx.specs[ci];
    let (lambda, l_bench) = ctx.modes[ci].resolve(ler, lei);
    let lxi = state.log_xi.value();
    let base_k = ctx.log_rho + rho_t;
    state.u_r.add(w * (base_k + ler - lxi));
    state.u_i.add(w * (base_k + lei - lxi));
    if combo.bench {
        state.u_bench.add(w * (base_k + l_bench - lxi));
    }
    if combo.total {
        state
            .u_total
            .add(w * (rho_t - lxi + combo.e_r * ler + (1.0 - combo.e_r) * lei));
    }
    if combo.diffs {
        if combo.diff_cv {
            state
                .diff_i
                .add(w * (lei - l_bench + combo.e_r * (m_value - 1.0 + y_value)));
        } else {
            state.diff_i.add(w * (lei - l_bench));
        }
        state.diff_r.add(w * (ler - l_bench));
    }
    if combo.deriv {
        // d(U_I - U_bench)/de_R = -E int w (eta^R - eta^I)/eta^bench dt,
        // with the unit-mean martingale as control variate.
        let ratio = (ler - l_bench).exp() - (lei - l_bench).exp();
        state.deriv.add(-w * (ratio - (m_value - 1.0) - y_value));
    }
    // SPD advance with time-k coefficients.
    let r = ctx.rho + lambda * mu_r + (1.0 - lambda) * mu_i - ctx.sigma_d * ctx.sigma_d;
    let phi = ctx.sigma_d + ctx.h_d * (lambda * (mu - mu_r) + (1.0 - lambda) * (mu - mu_i));
    state.log_xi.add(-(r + 0.5 * phi * phi) * dt - phi * dw);
}

fn write_row(
    layout: &Layout,
    row: &mut [f64],
    plan: &PassPlan,
    modes: &[ShareMode],
    log_eta_r: f64,
    u_bench_d: f64,
    u_total_aut: f64,
    clamps: f64,
    zstates: &[ZetaState],
    cstates: &[ComboState],
) {
    row[layout.u_bench_d()] = u_bench_d;
    row[layout.u_total_autarky()] = u_total_aut;
    row[layout.log_eta_r_term()] = log_eta_r;
    row[layout.clamp_count()] = clamps;
    for (zi, z) in zstates.iter().enumerate() {
        row[layout.gap(zi)] = z.gap.value();
        row[layout.log_eta_i_term(zi)] = z.log_eta_i.value();
        if plan.slopes {
            row[layout.slope0(zi)] = z.slope0.value();
            row[layout.slope1(zi)] = z.slope1.value();
        }
    }
    for (ci, c) in cstates.iter().enumerate() {
        row[layout.u_r(ci)] = c.u_r.value();
        row[layout.u_i(ci)] = c.u_i.value();
        row[layout.u_bench_eta(ci)] = c.u_bench.value();
        row[layout.u_total_eq(ci)] = c.u_total.value();
        row[layout.diff_i_bench(ci)] = c.diff_i.value();
        row[layout.diff_r_bench(ci)] = c.diff_r.value();
        row[layout.deriv_i_bench(ci)] = c.deriv.value();
        let lei_term = zstates[plan.combos[ci].zeta_idx].log_eta_i.value();
        let (_, l_bench) = modes[ci].resolve(log_eta_r, lei_term);
        row[layout.log_eta_bench_term(ci)] = l_bench;
    }
}

/// Mean-reverting ensemble pass: simulates each path once and accumulates
/// every statistic the plan requests.
pub fn run_pass(params: &ModelParams, grid: &SimGrid, plan: &PassPlan) -> Result<PassOutput> {
    crate::model::stability_check(params, grid)?;
    validate_plan(plan, params.rho)?;
    let layout = Layout::new(plan);
    let n = grid.n_steps();
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let curves = Curves::build(params, grid)?;
    let capture_steps = times_to_steps(&plan.capture_times, grid)?;
    let series_steps = times_to_steps(&plan.series_times, grid)?;

    let wdt: Vec<f64> = curves.discount.iter().map(|d| d * dt).collect();
    let log_rho = if params.rho > 0.0 { params.rho.ln() } else { 0.0 };
    let modes: Vec<ShareMode> = plan.combos.iter().map(|c| ShareMode::new(c.e_r)).collect();
    let need_m: Vec<bool> = (0..plan.zetas.len())
        .map(|zi| {
            (plan.slopes && plan.slope_cv)
                || plan
                    .combos
                    .iter()
                    .any(|c| c.zeta_idx == zi && ((c.diffs && c.diff_cv) || c.deriv))
        })
        .collect();
    let ctx = ComboCtx {
        specs: &plan.combos,
        modes: &modes,
        rho: params.rho,
        sigma_d: params.sigma_d,
        h_d: params.h_d(),
        log_rho,
    };

    let h_d = params.h_d();
    let kappa = params.kappa;
    let mu_bar = params.mu_bar;
    let sigma_mu = params.sigma_mu;
    let sigma_d = params.sigma_d;
    let sigma_e = params.sigma_e;
    let sd_sq_half = 0.5 * sigma_d * sigma_d;
    let rho = params.rho;
    let has_combos = !plan.combos.is_empty();

    let mut data = vec![0.0; grid.n_paths * layout.n_cols];
    data.par_chunks_mut(layout.n_cols)
        .enumerate()
        .for_each(|(p, row)| {
            let stream = PathStream::new(grid.seed, p as u64);
            let init = draw_initial_state(params, grid.dt, &stream);
            let mut mu = init.mu0;
            let mut mu_r = init.mu_r0;
            // Unbiased Class-I twin; the bias enters through delta_unit.
            let mut mu_i0 = init.mu_i0;
            let mut log_d = Kahan::default();
            let mut log_eta_r = Kahan::default();
            let mut u_bench_d = Kahan::default();
            let mut u_total_aut = Kahan::default();
            let mut zstates: Vec<ZetaState> = plan.zetas.iter().map(|_| ZetaState::new()).collect();
            let mut cstates: Vec<ComboState> =
                plan.combos.iter().map(|_| ComboState::new()).collect();
            // Time-k values of log eta^I(zeta) and the control-variate
            // martingale, refreshed each step.
            let mut lei_k: Vec<f64> = vec![0.0; plan.zetas.len()];
            let mut m_k: Vec<f64> = vec![1.0; plan.zetas.len()];
            let mut cap_cursor = 0usize;
            let mut ser_cursor = 0usize;

            for k in 0..=n {
                let ler = log_eta_r.value();
                for (zi, z) in zstates.iter().enumerate() {
                    lei_k[zi] = z.log_eta_i.value();
                }
                while cap_cursor < capture_steps.len() && capture_steps[cap_cursor] == k {
                    let err_r = mu_r - mu;
                    row[layout.sq_err_r(cap_cursor)] = err_r * err_r;
                    for (zi, &zeta) in plan.zetas.iter().enumerate() {
                        let mu_i = mu_i0 + zeta * curves.delta_unit[k];
                        let err_i = mu_i - mu;
                        let spread = mu_r - mu_i;
                        row[layout.sq_combo(zi, cap_cursor)] =
                            spread * spread + err_i * err_i - err_r * err_r;
                        row[layout.sq_err_i(zi, cap_cursor)] = err_i * err_i;
                    }
                    cap_cursor += 1;
                }
                while ser_cursor < series_steps.len() && series_steps[ser_cursor] == k {
                    for (zi, lei) in lei_k.iter().enumerate() {
                        row[layout.series_log_eta(zi, ser_cursor)] = ler - lei;
                    }
                    ser_cursor += 1;
                }
                if k == n {
                    break;
                }

                let step = k as u64;
                let dw = sqrt_dt * stream.normal(step, Channel::DividendShock);
                let db = sqrt_dt * stream.normal(step, Channel::SignalShock);
                let dwm = sqrt_dt * stream.normal(step, Channel::DriftShock);
                let w = wdt[k];
                let rho_t = -rho * k as f64 * dt;

                if has_combos {
                    u_bench_d.add(w * (log_rho + log_d.value()));
                    u_total_aut.add(w * log_d.value());
                }

                // Per-zeta statistics at t_k: gap, slopes, control variate.
                for (zi, z) in zstates.iter_mut().enumerate() {
                    let lei = lei_k[zi];
                    z.gap.add(w * (lei - ler));
                    if need_m[zi] {
                        m_k[zi] = z.log_m.value().exp();
                    }
                    if plan.slopes {
                        let log_eta = ler - lei;
                        if plan.slope_cv {
                            let lm = z.log_m.value();
                            z.slope0
                                .add(-w * (m_k[zi] * (log_eta - lm).exp_m1() - z.y_ctrl.value()));
                            let lm_inv = -lm - z.qvar.value();
                            z.slope1
                                .add(w * lm_inv.exp() * (-log_eta - lm_inv).exp_m1());
                        } else {
                            z.slope0.add(-w * log_eta.exp_m1());
                            z.slope1.add(w * (-log_eta).exp_m1());
                        }
                    }
                }

                // Per-combo welfare accumulation and SPD advance at t_k.
                for ci in 0..plan.combos.len() {
                    let zi = plan.combos[ci].zeta_idx;
                    let mu_i = mu_i0 + plan.zetas[zi] * curves.delta_unit[k];
                    accumulate_combo(
                        &ctx,
                        ci,
                        &mut cstates[ci],
                        w,
                        rho_t,
                        ler,
                        lei_k[zi],
                        m_k[zi],
                        zstates[zi].y_ctrl.value(),
                        mu,
                        mu_r,
                        mu_i,
                        dw,
                        dt,
                    );
                }

                // Advance per-zeta processes over [t_k, t_{k+1}].
                for (zi, z) in zstates.iter_mut().enumerate() {
                    let delta = plan.zetas[zi] * curves.delta_unit[k];
                    let mu_i = mu_i0 + delta;
                    let e_i_err = (mu_i - mu) * h_d;
                    z.log_eta_i
                        .add(-0.5 * e_i_err * e_i_err * dt + e_i_err * dw);
                    if need_m[zi] {
                        let a = (mu_r - mu_i) * h_d;
                        z.log_m.add(a * dw - 0.5 * a * a * dt);
                        z.qvar.add(a * a * dt);
                        z.y_ctrl.add(
                            h_d * h_d * ((mu_i - mu) * (mu_i - mu_r) - delta * delta) * dt,
                        );
                    }
                }

                // Advance the shared processes. The filter means follow the
                // exact discrete Kalman maps on the compensated observation
                // increments; the unbiased signal drives the Class-I twin.
                let e_r_err = (mu_r - mu) * h_d;
                log_eta_r.add(-0.5 * e_r_err * e_r_err * dt + e_r_err * dw);
                log_d.add((mu - sd_sq_half) * dt + sigma_d * dw);
                let dy = mu * dt + sigma_d * dw;
                let de = mu * dt + sigma_e * db;
                mu_r = curves.r_keep[k] * mu_r + curves.r_gain[k] * dy + curves.drift_const;
                mu_i0 = curves.i_keep[k] * mu_i0
                    + curves.i_gain_y[k] * dy
                    + curves.i_gain_e[k] * de
                    + curves.drift_const;
                mu += kappa * (mu_bar - mu) * dt + sigma_mu * dwm;
            }

            write_row(
                &layout,
                row,
                plan,
                &modes,
                log_eta_r.value(),
                u_bench_d.value(),
                u_total_aut.value(),
                0.0,
                &zstates,
                &cstates,
            );
        });

    Ok(PassOutput {
        layout,
        n_paths: grid.n_paths,
        data,
    })
}

/// Two-state chain ensemble pass. The nonlinear filter admits no
/// deterministic bias offset, so each zeta carries its own Class-I filter
/// state stepped through the same noise.
pub fn run_two_state_pass(
    params: &TwoStateParams,
    grid: &SimGrid,
    plan: &PassPlan,
) -> Result<PassOutput> {
    params.stability_check(grid)?;
    validate_plan(plan, params.rho)?;
    let layout = Layout::new(plan);
    let n = grid.n_steps();
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let capture_steps = times_to_steps(&plan.capture_times, grid)?;
    let series_steps = times_to_steps(&plan.series_times, grid)?;

    let rho = params.rho;
    let log_rho = if rho > 0.0 { rho.ln() } else { 0.0 };
    let wdt: Vec<f64> = (0..=n)
        .map(|k| (-rho * k as f64 * dt).exp() * dt)
        .collect();
    let modes: Vec<ShareMode> = plan.combos.iter().map(|c| ShareMode::new(c.e_r)).collect();
    let need_m: Vec<bool> = (0..plan.zetas.len())
        .map(|zi| {
            (plan.slopes && plan.slope_cv)
                || plan
                    .combos
                    .iter()
                    .any(|c| c.zeta_idx == zi && ((c.diffs && c.diff_cv) || c.deriv))
        })
        .collect();
    let ctx = ComboCtx {
        specs: &plan.combos,
        modes: &modes,
        rho,
        sigma_d: params.sigma_d,
        h_d: params.h_d(),
        log_rho,
    };

    let h_d = params.h_d();
    let h_e = params.h_e();
    let h_d_sq = h_d * h_d;
    let h_total_sq = h_d_sq + h_e * h_e;
    let sigma_d = params.sigma_d;
    let sd_sq_half = 0.5 * sigma_d * sigma_d;
    let mu_inf = params.mu_infinity();
    let total_rate = params.lambda_hl + params.psi_lh;
    let p_hl = 1.0 - (-params.lambda_hl * dt).exp();
    let p_lh = 1.0 - (-params.psi_lh * dt).exp();
    let eps = 1e-12 * (params.mu_h - params.mu_l);
    let (clamp_lo, clamp_hi) = (params.mu_l + eps, params.mu_h - eps);
    let has_combos = !plan.combos.is_empty();

    let mut data = vec![0.0; grid.n_paths * layout.n_cols];
    data.par_chunks_mut(layout.n_cols)
        .enumerate()
        .for_each(|(p, row)| {
            let stream = PathStream::new(grid.seed, p as u64);
            let mut high = params.mu0 == params.mu_h;
            let mut mu_r = params.mu_r0.clamp(clamp_lo, clamp_hi);
            let mut mu_i: Vec<f64> = plan
                .zetas
                .iter()
                .map(|_| params.mu_i0.clamp(clamp_lo, clamp_hi))
                .collect();
            let mut log_d = Kahan::default();
            let mut log_eta_r = Kahan::default();
            let mut u_bench_d = Kahan::default();
            let mut u_total_aut = Kahan::default();
            let mut clamps = 0.0f64;
            let mut zstates: Vec<ZetaState> = plan.zetas.iter().map(|_| ZetaState::new()).collect();
            let mut cstates: Vec<ComboState> =
                plan.combos.iter().map(|_| ComboState::new()).collect();
            let mut lei_k: Vec<f64> = vec![0.0; plan.zetas.len()];
            let mut m_k: Vec<f64> = vec![1.0; plan.zetas.len()];
            let mut cap_cursor = 0usize;
            let mut ser_cursor = 0usize;

            for k in 0..=n {
                let mu = if high { params.mu_h } else { params.mu_l };
                let ler = log_eta_r.value();
                for (zi, z) in zstates.iter().enumerate() {
                    lei_k[zi] = z.log_eta_i.value();
                }
                while cap_cursor < capture_steps.len() && capture_steps[cap_cursor] == k {
                    let err_r = mu_r - mu;
                    row[layout.sq_err_r(cap_cursor)] = err_r * err_r;
                    for (zi, est) in mu_i.iter().enumerate() {
                        let err_i = est - mu;
                        let spread = mu_r - est;
                        row[layout.sq_combo(zi, cap_cursor)] =
                            spread * spread + err_i * err_i - err_r * err_r;
                        row[layout.sq_err_i(zi, cap_cursor)] = err_i * err_i;
                    }
                    cap_cursor += 1;
                }
                while ser_cursor < series_steps.len() && series_steps[ser_cursor] == k {
                    for (zi, lei) in lei_k.iter().enumerate() {
                        row[layout.series_log_eta(zi, ser_cursor)] = ler - lei;
                    }
                    ser_cursor += 1;
                }
                if k == n {
                    break;
                }

                let step = k as u64;
                let dw = sqrt_dt * stream.normal(step, Channel::DividendShock);
                let db = sqrt_dt * stream.normal(step, Channel::SignalShock);
                let w = wdt[k];
                let rho_t = -rho * k as f64 * dt;

                if has_combos {
                    u_bench_d.add(w * (log_rho + log_d.value()));
                    u_total_aut.add(w * log_d.value());
                }

                for (zi, z) in zstates.iter_mut().enumerate() {
                    let lei = lei_k[zi];
                    z.gap.add(w * (lei - ler));
                    if need_m[zi] {
                        m_k[zi] = z.log_m.value().exp();
                    }
                    if plan.slopes {
                        let log_eta = ler - lei;
                        if plan.slope_cv {
                            let lm = z.log_m.value();
                            z.slope0.add(-w * m_k[zi] * (log_eta - lm).exp_m1());
                            let lm_inv = -lm - z.qvar.value();
                            z.slope1
                                .add(w * lm_inv.exp() * (-log_eta - lm_inv).exp_m1());
                        } else {
                            z.slope0.add(-w * log_eta.exp_m1());
                            z.slope1.add(w * (-log_eta).exp_m1());
                        }
                    }
                }

                for ci in 0..plan.combos.len() {
                    let zi = plan.combos[ci].zeta_idx;
                    // No mean-zero Y control here: the Euler Wonham filter
                    // is not an exact conditional expectation, so that
                    // combination carries signal.
                    accumulate_combo(
                        &ctx,
                        ci,
                        &mut cstates[ci],
                        w,
                        rho_t,
                        ler,
                        lei_k[zi],
                        m_k[zi],
                        0.0,
                        mu,
                        mu_r,
                        mu_i[zi],
                        dw,
                        dt,
                    );
                }

                // Advance per-zeta filters and likelihood ratios.
                for (zi, z) in zstates.iter_mut().enumerate() {
                    let est = mu_i[zi];
                    let e_i_err = (est - mu) * h_d;
                    z.log_eta_i
                        .add(-0.5 * e_i_err * e_i_err * dt + e_i_err * dw);
                    if need_m[zi] {
                        let a = (mu_r - est) * h_d;
                        z.log_m.add(a * dw - 0.5 * a * a * dt);
                        z.qvar.add(a * a * dt);
                    }
                    let nu = (params.mu_h - est) * (est - params.mu_l);
                    let mut next = est
                        + total_rate * (mu_inf - est) * dt
                        + h_total_sq * nu * (mu - est) * dt
                        + nu * h_e * plan.zetas[zi] * dt
                        + nu * (h_d * dw + h_e * db);
                    if next < clamp_lo {
                        next = clamp_lo;
                        clamps += 1.0;
                    } else if next > clamp_hi {
                        next = clamp_hi;
                        clamps += 1.0;
                    }
                    mu_i[zi] = next;
                }

                let e_r_err = (mu_r - mu) * h_d;
                log_eta_r.add(-0.5 * e_r_err * e_r_err * dt + e_r_err * dw);
                log_d.add((mu - sd_sq_half) * dt + sigma_d * dw);
                let nu_r = (params.mu_h - mu_r) * (mu_r - params.mu_l);
                let mut next_r = mu_r
                    + total_rate * (mu_inf - mu_r) * dt
                    + h_d_sq * nu_r * (mu - mu_r) * dt
                    + nu_r * h_d * dw;
                if next_r < clamp_lo {
                    next_r = clamp_lo;
                    clamps += 1.0;
                } else if next_r > clamp_hi {
                    next_r = clamp_hi;
                    clamps += 1.0;
                }
                mu_r = next_r;

                let u = stream.uniform(step, Channel::DriftShock);
                if high {
                    if u < p_hl {
                        high = false;
                    }
                } else if u < p_lh {
                    high = true;
                }
            }

            write_row(
                &layout,
                row,
                plan,
                &modes,
                log_eta_r.value(),
                u_bench_d.value(),
                u_total_aut.value(),
                clamps,
                &zstates,
                &cstates,
            );
        });

    Ok(PassOutput {
        layout,
        n_paths: grid.n_paths,
        data,
    })
}
