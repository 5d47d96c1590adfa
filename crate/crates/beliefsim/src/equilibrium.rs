//! Maps simulated beliefs into equilibrium objects: likelihood-ratio
//! processes, the consumption share, the interest rate and market prices of
//! risk, the objective state-price density, and the asset price.
//!
//! Likelihood ratios span hundreds of orders of magnitude over long
//! horizons, so every ratio is carried in log space; the only
//! exponentiation happens inside the bounded share map, computed as a
//! stable sigmoid. All stochastic integrals use left-point (Ito)
//! quadrature.

use crate::error::{Result, SimError};
use crate::model::{ModelParams, PathBundle, SimGrid};
use crate::numeric::{logsumexp2, sigmoid};

/// Per-path equilibrium series derived from a completed PathBundle.
#[derive(Debug, Clone)]
pub struct EquilibriumPath {
    pub lambda: Vec<f64>,
    pub r: Vec<f64>,
    pub phi_r: Vec<f64>,
    pub phi_i: Vec<f64>,
    pub phi: Vec<f64>,
    pub c_r: Vec<f64>,
    pub c_i: Vec<f64>,
}

/// Left-point accumulation of both log likelihood ratios along a path:
/// d log eta^m = -(1/2)(mu^m - mu)^2 h_D^2 dt + (mu^m - mu) h_D dW.
pub fn accumulate_log_eta(
    bundle: &PathBundle,
    params: &ModelParams,
    dt: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = bundle.dw.len();
    assert_eq!(bundle.mu.len(), n + 1);
    assert_eq!(bundle.mu_r.len(), n + 1);
    let h_d = params.h_d();
    let mut log_eta_r = Vec::with_capacity(n + 1);
    let mut log_eta_i = Vec::with_capacity(n + 1);
    let mut lr = 0.0;
    let mut li = 0.0;
    log_eta_r.push(0.0);
    log_eta_i.push(0.0);
    for k in 0..n {
        let er = (bundle.mu_r[k] - bundle.mu[k]) * h_d;
        let ei = (bundle.mu_i[k] - bundle.mu[k]) * h_d;
        lr += -0.5 * er * er * dt + er * bundle.dw[k];
        li += -0.5 * ei * ei * dt + ei * bundle.dw[k];
        log_eta_r.push(lr);
        log_eta_i.push(li);
    }
    (log_eta_r, log_eta_i)
}

/// Class-R consumption share lambda = k eta / (1 + k eta) with
/// k = e_R / e_I and eta = eta^R / eta^I, computed in log space.
/// The endpoints e_R in {0, 1} short-circuit exactly.
pub fn consumption_share(e_r: f64, log_eta_r: &[f64], log_eta_i: &[f64]) -> Vec<f64> {
    assert_eq!(log_eta_r.len(), log_eta_i.len());
    if e_r <= 0.0 {
        return vec![0.0; log_eta_r.len()];
    }
    if e_r >= 1.0 {
        return vec![1.0; log_eta_r.len()];
    }
    let log_k = (e_r / (1.0 - e_r)).ln();
    log_eta_r
        .iter()
        .zip(log_eta_i.iter())
        .map(|(&lr, &li)| sigmoid(log_k + lr - li))
        .collect()
}

/// Interest rate and the three market prices of risk at one instant.
#[inline]
pub fn rates_and_prices_of_risk(
    lambda: f64,
    mu_r: f64,
    mu_i: f64,
    mu: f64,
    params: &ModelParams,
) -> (f64, f64, f64, f64) {
    let h_d = params.h_d();
    let sd = params.sigma_d;
    let r = params.rho + lambda * mu_r + (1.0 - lambda) * mu_i - sd * sd;
    let phi_r = sd + h_d * (1.0 - lambda) * (mu_r - mu_i);
    let phi_i = sd - h_d * lambda * (mu_r - mu_i);
    let phi = sd + h_d * (lambda * (mu - mu_r) + (1.0 - lambda) * (mu - mu_i));
    (r, phi_r, phi_i, phi)
}

/// Objective log state-price density from the interest-rate and
/// price-of-risk series: d log xi = -(r + phi^2/2) dt - phi dW.
pub fn accumulate_log_xi(r: &[f64], phi: &[f64], dw: &[f64], dt: f64) -> Vec<f64> {
    let n = dw.len();
    let mut out = Vec::with_capacity(n + 1);
    let mut lx = 0.0;
    out.push(0.0);
    for k in 0..n {
        lx += -(r[k] + 0.5 * phi[k] * phi[k]) * dt - phi[k] * dw[k];
        out.push(lx);
    }
    out
}

/// log eta^bench = log(e_R eta^R + e_I eta^I), stable in log space, with the
/// endpoints degenerating exactly to the surviving class.
pub fn benchmark_log_eta(e_r: f64, log_eta_r: &[f64], log_eta_i: &[f64]) -> Vec<f64> {
    assert_eq!(log_eta_r.len(), log_eta_i.len());
    if e_r <= 0.0 {
        return log_eta_i.to_vec();
    }
    if e_r >= 1.0 {
        return log_eta_r.to_vec();
    }
    let log_er = e_r.ln();
    let log_ei = (1.0 - e_r).ln();
    log_eta_r
        .iter()
        .zip(log_eta_i.iter())
        .map(|(&lr, &li)| logsumexp2(log_er + lr, log_ei + li))
        .collect()
}

/// Equilibrium price of the dividend claim: the price-dividend ratio is the
/// constant 1/rho under log preferences.
pub fn price(d_t: f64, params: &ModelParams) -> Result<f64> {
    if params.rho <= 0.0 {
        return Err(SimError::InvalidParameter(
            "price is undefined at rho = 0 (survival-only mode)".into(),
        ));
    }
    Ok(d_t / params.rho)
}

/// Completes a PathBundle (truth + filters already attached) with
/// likelihood ratios and the objective SPD, returning the per-step
/// equilibrium series.
pub fn attach_equilibrium(
    params: &ModelParams,
    grid: &SimGrid,
    bundle: &mut PathBundle,
) -> EquilibriumPath {
    let dt = grid.dt;
    let (log_eta_r, log_eta_i) = accumulate_log_eta(bundle, params, dt);
    let lambda = consumption_share(params.e_r, &log_eta_r, &log_eta_i);
    let n = bundle.dw.len();
    let mut r = Vec::with_capacity(n + 1);
    let mut phi_r = Vec::with_capacity(n + 1);
    let mut phi_i = Vec::with_capacity(n + 1);
    let mut phi = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (rk, pr, pi, p) =
            rates_and_prices_of_risk(lambda[k], bundle.mu_r[k], bundle.mu_i[k], bundle.mu[k], params);
        r.push(rk);
        phi_r.push(pr);
        phi_i.push(pi);
        phi.push(p);
    }
    let log_xi = accumulate_log_xi(&r, &phi, &bundle.dw, dt);
    // c^R = lambda D; c^I takes the remainder so the market clears exactly.
    let c_r: Vec<f64> = lambda
        .iter()
        .zip(bundle.log_d.iter())
        .map(|(&l, &ld)| l * ld.exp())
        .collect();
    let c_i: Vec<f64> = c_r
        .iter()
        .zip(bundle.log_d.iter())
        .map(|(&cr, &ld)| ld.exp() - cr)
        .collect();
    bundle.log_eta_r = log_eta_r;
    bundle.log_eta_i = log_eta_i;
    bundle.log_xi = log_xi;
    EquilibriumPath {
        lambda,
        r,
        phi_r,
        phi_i,
        phi,
        c_r,
        c_i,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::attach_filters;
    use crate::model::simulate_truth;
    use crate::numeric::mean_se;

    fn make_path(params: &ModelParams, grid: &SimGrid, idx: usize) -> PathBundle {
        let mut b = simulate_truth(params, grid, idx).unwrap();
        attach_filters(params, grid, idx, &mut b);
        b
    }

    #[test]
    fn perfect_filter_gives_unit_likelihood_ratio() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 1.0, 1, 1);
        let mut b = make_path(&p, &g, 0);
        b.mu_r = b.mu.clone();
        b.mu_i = b.mu.clone();
        let (lr, li) = accumulate_log_eta(&b, &p, g.dt);
        assert!(lr.iter().all(|&v| v == 0.0));
        assert!(li.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn likelihood_ratios_are_martingales() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 20.0, 4_000, 42);
        let finals: Vec<(f64, f64)> = (0..g.n_paths)
            .map(|i| {
                let b = make_path(&p, &g, i);
                let (lr, li) = accumulate_log_eta(&b, &p, g.dt);
                (lr.last().unwrap().exp(), li.last().unwrap().exp())
            })
            .collect();
        let etas_r: Vec<f64> = finals.iter().map(|x| x.0).collect();
        let etas_i: Vec<f64> = finals.iter().map(|x| x.1).collect();
        let (mr, ser) = mean_se(&etas_r);
        let (mi, sei) = mean_se(&etas_i);
        assert!((mr - 1.0).abs() < 4.0 * ser, "eta^R mean {mr} se {ser}");
        assert!((mi - 1.0).abs() < 4.0 * sei, "eta^I mean {mi} se {sei}");
    }

    #[test]
    fn share_starts_at_endowment_and_stays_inside() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 10.0, 8, 7);
        for i in 0..8 {
            let mut b = make_path(&p, &g, i);
            let eq = attach_equilibrium(&p, &g, &mut b);
            assert!((eq.lambda[0] - p.e_r).abs() < 1e-14);
            assert!(eq.lambda.iter().all(|&l| l > 0.0 && l < 1.0));
        }
    }

    #[test]
    fn share_endpoints_short_circuit() {
        let lr = vec![0.0, 1.0, -2.0];
        let li = vec![0.0, -1.0, 4.0];
        assert_eq!(consumption_share(0.0, &lr, &li), vec![0.0, 0.0, 0.0]);
        assert_eq!(consumption_share(1.0, &lr, &li), vec![1.0, 1.0, 1.0]);
        let mid = consumption_share(0.5, &vec![0.0], &vec![0.0]);
        assert!((mid[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn share_vanishes_when_class_i_estimates_better() {
        // log eta -> -inf means Class-R extinction.
        let lam = consumption_share(0.5, &vec![-800.0], &vec![0.0]);
        assert!(lam[0] < 1e-300);
        assert!(lam[0] >= 0.0);
    }

    #[test]
    fn homogeneous_beliefs_collapse_prices_of_risk() {
        let p = ModelParams::baseline();
        let (r, pr, pi, phi) = rates_and_prices_of_risk(0.3, 0.04, 0.04, 0.04, &p);
        assert!((r - (p.rho + 0.04 - p.sigma_d * p.sigma_d)).abs() < 1e-15);
        assert_eq!(pr, p.sigma_d);
        assert_eq!(pi, p.sigma_d);
        assert_eq!(phi, p.sigma_d);
        // lambda = 1 pure Class-R economy
        let (r1, ..) = rates_and_prices_of_risk(1.0, 0.05, 0.01, 0.02, &p);
        assert!((r1 - (p.rho + 0.05 - p.sigma_d * p.sigma_d)).abs() < 1e-15);
    }

    #[test]
    fn spd_consistency_identities_hold_pointwise() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 5.0, 4, 13);
        for i in 0..4 {
            let mut b = make_path(&p, &g, i);
            let eq = attach_equilibrium(&p, &g, &mut b);
            for k in 0..=g.n_steps() {
                let lhs_r = eq.phi[k] - eq.phi_r[k];
                let rhs_r = p.h_d() * (b.mu[k] - b.mu_r[k]);
                assert!((lhs_r - rhs_r).abs() < 1e-12 * (1.0 + rhs_r.abs()));
                let lhs_i = eq.phi[k] - eq.phi_i[k];
                let rhs_i = p.h_d() * (b.mu[k] - b.mu_i[k]);
                assert!((lhs_i - rhs_i).abs() < 1e-12 * (1.0 + rhs_i.abs()));
            }
        }
    }

    #[test]
    fn market_clears_exactly() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 5.0, 3, 29);
        for i in 0..3 {
            let mut b = make_path(&p, &g, i);
            let eq = attach_equilibrium(&p, &g, &mut b);
            for k in 0..=g.n_steps() {
                let d = b.log_d[k].exp();
                assert!((eq.c_r[k] + eq.c_i[k] - d).abs() <= 4e-16 * d);
                assert!(eq.c_r[k] >= 0.0 && eq.c_i[k] >= 0.0);
            }
        }
    }

    #[test]
    fn deterministic_spd_reduces_to_discounting() {
        // phi = 0 and r = rho gives xi_t = exp(-rho t).
        let n = 100;
        let dt = 0.01f64;
        let r = vec![0.02; n + 1];
        let phi = vec![0.0; n + 1];
        let dw = vec![0.3 * dt.sqrt(); n];
        let lx = accumulate_log_xi(&r, &phi, &dw, dt);
        for (k, &v) in lx.iter().enumerate() {
            assert!((v + 0.02 * k as f64 * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficient_spd_matches_closed_form() {
        // Homogeneous beliefs with sigma_mu = 0: log xi has constant drift and
        // volatility, matching the closed form pointwise.
        let mut p = ModelParams::baseline();
        p.sigma_mu = 0.0;
        let g = SimGrid::new(0.01, 5.0, 2, 31);
        for i in 0..2 {
            let mut b = make_path(&p, &g, i);
            let eq = attach_equilibrium(&p, &g, &mut b);
            let r_const = p.rho + p.mu_bar - p.sigma_d * p.sigma_d;
            let mut w = 0.0;
            for k in 0..=g.n_steps() {
                let t = k as f64 * g.dt;
                let closed = -(r_const + 0.5 * p.sigma_d * p.sigma_d) * t - p.sigma_d * w;
                assert!(
                    (b.log_xi[k] - closed).abs() < 1e-10 * (1.0 + closed.abs()),
                    "k={k}"
                );
                if k < g.n_steps() {
                    w += b.dw[k];
                    let _ = &eq;
                }
            }
        }
    }

    #[test]
    fn benchmark_degenerates_at_endpoints() {
        let lr = vec![0.0, 0.5, -3.0];
        let li = vec![0.0, -0.25, 7.0];
        assert_eq!(benchmark_log_eta(1.0, &lr, &li), lr);
        assert_eq!(benchmark_log_eta(0.0, &lr, &li), li);
        // equal ratios: the convex combination is the common value
        let same = benchmark_log_eta(0.5, &vec![0.3], &vec![0.3]);
        assert!((same[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn benchmark_is_martingale() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 20.0, 4_000, 57);
        let finals: Vec<f64> = (0..g.n_paths)
            .map(|i| {
                let b = make_path(&p, &g, i);
                let (lr, li) = accumulate_log_eta(&b, &p, g.dt);
                benchmark_log_eta(0.5, &lr, &li).last().unwrap().exp()
            })
            .collect();
        let (m, se) = mean_se(&finals);
        assert!((m - 1.0).abs() < 4.0 * se, "eta^bench mean {m} se {se}");
    }

    #[test]
    fn price_is_dividend_over_rho() {
        let p = ModelParams::baseline();
        assert!((price(1.0, &p).unwrap() - 50.0).abs() < 1e-12);
        let mut p0 = p.clone();
        p0.rho = 0.0;
        assert!(price(1.0, &p0).is_err());
    }

    #[test]
    fn discounted_dividend_prices_the_claim() {
        // E[int_0^tau xi_s D_s ds] + E[xi_tau D_tau]/rho = 1/rho, the
        // discounted-dividend oracle for P_0 = D_0/rho.
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 5.0, 4_000, 91);
        let stats: Vec<(f64, f64)> = (0..g.n_paths)
            .map(|i| {
                let mut b = make_path(&p, &g, i);
                let _ = attach_equilibrium(&p, &g, &mut b);
                let mut integral = 0.0;
                for k in 0..g.n_steps() {
                    integral += (b.log_xi[k] + b.log_d[k]).exp() * g.dt;
                }
                let n = g.n_steps();
                (integral, (b.log_xi[n] + b.log_d[n]).exp())
            })
            .collect();
        let totals: Vec<f64> = stats.iter().map(|(i, tail)| i + tail / p.rho).collect();
        let (m, se) = mean_se(&totals);
        let p0 = 1.0 / p.rho;
        assert!((m - p0).abs() < 3.0 * se, "price {m} vs {p0} se {se}");
    }
}
