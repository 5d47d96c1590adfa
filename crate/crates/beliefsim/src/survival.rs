//! Long-horizon fate of the two classes: stationary thresholds for the
//! sign of the disagreement drift, consumption-ratio trajectories, and the
//! small-rho equivalence between the welfare and survival critical biases.
//!
//! Convention: eta = eta^R / eta^I, so c^I/c^R = (e^I/e^R) / eta and a
//! negative drift of E[log eta] means Class-I's consumption share takes
//! over. Almost-sure statements are probed at finite horizon through the
//! ensemble drift plus a per-path terminal census.

use crate::engine::{run_pass, PassPlan};
use crate::error::{Result, SimError};
use crate::filters::stationary_gamma_root;
use crate::model::{ModelParams, SimGrid};
use crate::numeric::{bisect, mean_se, ols_slope, quantile, sigmoid};
use crate::welfare::critical_zeta_welfare;

/// Stationary Riccati roots, the bias fixed point, the asymptotic drift of
/// log eta, and the survival thresholds.
#[derive(Debug, Clone)]
pub struct StationaryStats {
    pub gamma_r_star: f64,
    pub gamma_i_star: f64,
    /// Stationary bias gap at the parameter set's zeta.
    pub delta_star: f64,
    /// lim d/dt E[log eta] = (h_D^2/2)(gamma_I^* + Delta^*^2 - gamma_R^*).
    pub drift_log_eta: f64,
    pub zeta3: f64,
    pub zeta4: f64,
}

/// Closed-form stationary quantities. The threshold solves
/// gamma_R^* - gamma_I^* = Delta^*(zeta)^2 for zeta > 0.
pub fn stationary_stats(params: &ModelParams) -> Result<StationaryStats> {
    params.validate()?;
    if params.h_e() <= 0.0 || !params.h_e().is_finite() {
        return Err(SimError::InvalidParameter(
            "survival thresholds need a real signal (h_e > 0)".into(),
        ));
    }
    if params.sigma_e.is_infinite() {
        return Err(SimError::InvalidParameter(
            "no signal: the classes are identical and thresholds are undefined".into(),
        ));
    }
    let h_d_sq = params.h_d() * params.h_d();
    let h_total_sq = params.h_total_sq();
    let gamma_r = stationary_gamma_root(params.kappa, params.sigma_mu, h_d_sq);
    let gamma_i = stationary_gamma_root(params.kappa, params.sigma_mu, h_total_sq);
    let delta_unit = gamma_i * params.h_e() / (params.kappa + gamma_i * h_total_sq);
    let delta_star = params.zeta * delta_unit;
    let drift = 0.5 * h_d_sq * (gamma_i + delta_star * delta_star - gamma_r);
    let zeta4 = if gamma_r - gamma_i <= 0.0 || delta_unit <= 0.0 {
        0.0
    } else {
        (gamma_r - gamma_i).sqrt() / delta_unit
    };
    Ok(StationaryStats {
        gamma_r_star: gamma_r,
        gamma_i_star: gamma_i,
        delta_star,
        drift_log_eta: drift,
        zeta3: -zeta4,
        zeta4,
    })
}

/// Independent root for the threshold: bisection on the stationary MSE gap
/// gamma_R^* - gamma_I^* - Delta^*(zeta)^2.
pub fn zeta4_by_bisection(params: &ModelParams) -> Result<f64> {
    let stats = stationary_stats(params)?;
    if stats.zeta4 == 0.0 {
        return Ok(0.0);
    }
    let h_total_sq = params.h_total_sq();
    let gamma_i = stats.gamma_i_star;
    let delta_unit = gamma_i * params.h_e() / (params.kappa + gamma_i * h_total_sq);
    let g = |z: f64| stats.gamma_r_star - stats.gamma_i_star - (z * delta_unit).powi(2);
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(SimError::RootFinding("threshold bracket exploded".into()));
        }
    }
    bisect(g, 0.0, hi, 1e-10).ok_or_else(|| SimError::RootFinding("no sign change".into()))
}

/// Which class takes over the market in the long run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalVerdict {
    ClassIDominates,
    ClassRDominates,
    Inconclusive,
}

/// Ensemble trajectory statistics of the disagreement process and the
/// Class-I consumption share.
#[derive(Debug, Clone)]
pub struct ConsumptionRatioStats {
    pub times: Vec<f64>,
    pub mean_log_eta: Vec<f64>,
    pub se_log_eta: Vec<f64>,
    /// Quantiles (0.1, 0.25, 0.5, 0.75, 0.9) of the Class-I share
    /// c^I/(c^I + c^R) at each stored time.
    pub share_i_quantiles: Vec<[f64; 5]>,
    /// Mean per-path OLS slope of log eta over the late window.
    pub late_slope: f64,
    pub late_slope_se: f64,
    /// Closed-form stationary drift the slope is expected to match.
    pub predicted_drift: f64,
    pub verdict: SurvivalVerdict,
    /// Fraction of paths with terminal log eta below zero (Class-I ahead).
    pub census_class_i_ahead: f64,
    /// Stored points where |log k + log eta| exceeded the sigmoid's exact
    /// range; the share saturates to 0 or 1 there.
    pub saturation_events: usize,
}

/// Long-horizon simulation of the consumption ratio and the ensemble drift
/// of log eta. The late window for slope fitting is the second half of the
/// horizon.
pub fn simulate_consumption_ratio(
    params: &ModelParams,
    grid: &SimGrid,
) -> Result<ConsumptionRatioStats> {
    let mut batch = consumption_ratio_batch(params, grid, &[params.zeta])?;
    Ok(batch.remove(0))
}

/// Same analysis for several biases on one shared path ensemble.
pub fn consumption_ratio_batch(
    params: &ModelParams,
    grid: &SimGrid,
    zetas: &[f64],
) -> Result<Vec<ConsumptionRatioStats>> {
    if params.e_r <= 0.0 || params.e_r >= 1.0 {
        return Err(SimError::InvalidParameter(
            "consumption ratio needs both classes present (0 < e_R < 1)".into(),
        ));
    }
    // Store roughly yearly, always including 0 and T.
    let stride = (1.0 / grid.dt).round().max(1.0) * grid.dt;
    let mut times = Vec::new();
    let mut t = 0.0;
    while t < grid.t_horizon - 1e-9 {
        times.push(t);
        t += stride;
    }
    times.push(grid.t_horizon);
    let plan = PassPlan {
        zetas: zetas.to_vec(),
        combos: vec![],
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: times.clone(),
    };
    let out = run_pass(params, grid, &plan)?;

    let n_times = times.len();
    let log_k = (params.e_r / (1.0 - params.e_r)).ln();
    let late_start = times
        .iter()
        .position(|&t| t >= 0.5 * grid.t_horizon)
        .unwrap_or(0);
    let late_times: Vec<f64> = times[late_start..].to_vec();

    let mut results = Vec::with_capacity(zetas.len());
    for (zi, &zeta) in zetas.iter().enumerate() {
        let mut p_z = params.clone();
        p_z.zeta = zeta;
        let stats = stationary_stats(&p_z)?;
        let mut mean_log_eta = Vec::with_capacity(n_times);
        let mut se_log_eta = Vec::with_capacity(n_times);
        let mut share_q = Vec::with_capacity(n_times);
        let mut saturation = 0usize;
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n_times);
        for si in 0..n_times {
            let col = out.column(out.layout.series_log_eta(zi, si));
            let (m, se) = mean_se(&col);
            mean_log_eta.push(m);
            se_log_eta.push(se);
            let shares: Vec<f64> = col
                .iter()
                .map(|&le| {
                    if (log_k + le).abs() > 700.0 {
                        saturation += 1;
                    }
                    sigmoid(-(log_k + le))
                })
                .collect();
            share_q.push([
                quantile(&shares, 0.10),
                quantile(&shares, 0.25),
                quantile(&shares, 0.50),
                quantile(&shares, 0.75),
                quantile(&shares, 0.90),
            ]);
            columns.push(col);
        }

        // Per-path OLS slopes over the late window; the ensemble mean equals
        // the OLS slope of the mean curve and carries an honest SE.
        let slopes: Vec<f64> = (0..out.n_paths)
            .map(|p| {
                let ys: Vec<f64> = (late_start..n_times).map(|si| columns[si][p]).collect();
                ols_slope(&late_times, &ys)
            })
            .collect();
        let (late_slope, late_slope_se) = mean_se(&slopes);
        let verdict = if late_slope < -3.0 * late_slope_se {
            SurvivalVerdict::ClassIDominates
        } else if late_slope > 3.0 * late_slope_se {
            SurvivalVerdict::ClassRDominates
        } else {
            SurvivalVerdict::Inconclusive
        };
        let terminal = &columns[n_times - 1];
        let ahead = terminal.iter().filter(|&&le| le < 0.0).count() as f64 / out.n_paths as f64;

        results.push(ConsumptionRatioStats {
            times: times.clone(),
            mean_log_eta,
            se_log_eta,
            share_i_quantiles: share_q,
            late_slope,
            late_slope_se,
            predicted_drift: stats.drift_log_eta,
            verdict,
            census_class_i_ahead: ahead,
            saturation_events: saturation,
        });
    }
    Ok(results)
}

/// One row of the welfare-versus-survival threshold comparison.
#[derive(Debug, Clone)]
pub struct RhoEquivalenceRow {
    pub rho: f64,
    pub zeta2: f64,
    pub zeta4: f64,
    pub abs_diff: f64,
}

/// Critical welfare bias as a function of rho against the rho-free survival
/// threshold. With stationary initialization the two coincide at every rho;
/// with the default initialization they converge as rho shrinks.
pub fn rho_zero_equivalence(params: &ModelParams, rho_list: &[f64]) -> Result<Vec<RhoEquivalenceRow>> {
    if rho_list.iter().any(|&r| r <= 0.0) {
        return Err(SimError::InvalidParameter(
            "rho list must be strictly positive".into(),
        ));
    }
    let zeta4 = stationary_stats(params)?.zeta4;
    let mut rows = Vec::with_capacity(rho_list.len());
    for &rho in rho_list {
        let mut p = params.clone();
        p.rho = rho;
        let (_, zeta2) = critical_zeta_welfare(&p)?;
        rows.push(RhoEquivalenceRow {
            rho,
            zeta2,
            zeta4,
            abs_diff: (zeta2 - zeta4).abs(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitMode;

    #[test]
    fn thresholds_match_quadratic_pipeline() {
        let p = ModelParams::baseline();
        let s = stationary_stats(&p).unwrap();
        assert!(s.gamma_r_star > s.gamma_i_star);
        assert!((s.zeta4 - 0.448).abs() < 1e-3, "zeta4 = {}", s.zeta4);
        assert_eq!(s.zeta3, -s.zeta4);
        // drift sign pattern: negative at zeta = 0, positive at zeta = 1
        assert!(s.drift_log_eta < 0.0);
        let mut p1 = p.clone();
        p1.zeta = 1.0;
        let s1 = stationary_stats(&p1).unwrap();
        assert!(s1.drift_log_eta > 0.0);
    }

    #[test]
    fn threshold_is_exact_root_of_drift() {
        let p = ModelParams::baseline();
        let s = stationary_stats(&p).unwrap();
        let mut at_root = p.clone();
        at_root.zeta = s.zeta4;
        let s_root = stationary_stats(&at_root).unwrap();
        assert!(
            s_root.drift_log_eta.abs() < 1e-12,
            "drift at threshold {}",
            s_root.drift_log_eta
        );
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        let p = ModelParams::baseline();
        let s = stationary_stats(&p).unwrap();
        let z = zeta4_by_bisection(&p).unwrap();
        assert!((z - s.zeta4).abs() < 1e-10, "{z} vs {}", s.zeta4);
    }

    #[test]
    fn degenerate_noise_kills_threshold() {
        let mut p = ModelParams::baseline();
        p.sigma_mu = 0.0;
        let s = stationary_stats(&p).unwrap();
        assert_eq!(s.zeta4, 0.0);
        assert_eq!(s.gamma_r_star, 0.0);
    }

    #[test]
    fn consumption_ratio_rejects_degenerate_economy() {
        let mut p = ModelParams::baseline();
        p.e_r = 1.0;
        let g = SimGrid::new(0.01, 10.0, 10, 1);
        assert!(simulate_consumption_ratio(&p, &g).is_err());
    }

    #[test]
    fn ensemble_drift_matches_prediction_at_modest_scale() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 120.0, 3_000, 13);
        let stats = simulate_consumption_ratio(&p, &g).unwrap();
        assert_eq!(stats.verdict, SurvivalVerdict::ClassIDominates);
        // 20% band at this scale; the acceptance suite tightens it.
        let rel = (stats.late_slope - stats.predicted_drift).abs() / stats.predicted_drift.abs();
        assert!(rel < 0.2, "slope {} vs {}", stats.late_slope, stats.predicted_drift);
        assert_eq!(stats.saturation_events, 0);
    }

    #[test]
    fn stationary_initialization_aligns_thresholds() {
        let mut p = ModelParams::baseline();
        p.init = InitMode::Stationary;
        let rows = rho_zero_equivalence(&p, &[0.02]).unwrap();
        assert!(rows[0].abs_diff < 1e-8, "diff {}", rows[0].abs_diff);
    }

    #[test]
    fn default_initialization_converges_from_above() {
        let p = ModelParams::baseline();
        let rows = rho_zero_equivalence(&p, &[0.1, 0.02, 0.004]).unwrap();
        assert!(rows[0].abs_diff > rows[1].abs_diff);
        assert!(rows[1].abs_diff > rows[2].abs_diff);
    }

    #[test]
    fn aggressive_discounting_departs_from_threshold() {
        let p = ModelParams::baseline();
        let rows = rho_zero_equivalence(&p, &[100.0, 0.004]).unwrap();
        assert!(rows[0].abs_diff > 10.0 * rows[1].abs_diff);
    }
}
