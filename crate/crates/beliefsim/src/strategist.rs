//! The all-knowing investor: an infinitesimal agent who observes the true
//! state and the bias, chooses which class to delegate to (or stays
//! passive), and may release a biased version of the signal to shift the
//! population split between the classes.

use crate::engine::{run_pass, ComboSpec, PassOutput, PassPlan};
use crate::error::{Result, SimError};
use crate::model::{ModelParams, SimGrid};
use crate::welfare::{build_report, cv_recommended, WelfareReport};

/// Participation response e^R(zeta) = 1 - a exp(-b zeta^2): `a` is the
/// Class-I share at an unbiased signal, `b` the decay rate at which
/// Class-I investors stop trusting it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticipationCurve {
    pub a: f64,
    pub b: f64,
}

impl ParticipationCurve {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(SimError::InvalidParameter(
                "participation a must lie in (0, 1]".into(),
            ));
        }
        if !(b > 0.0) {
            return Err(SimError::InvalidParameter(
                "participation decay b must be > 0".into(),
            ));
        }
        Ok(ParticipationCurve { a, b })
    }

    /// Class-R share induced by bias zeta.
    pub fn e_r(&self, zeta: f64) -> f64 {
        1.0 - self.a * (-self.b * zeta * zeta).exp()
    }

    /// The six presets the participation figures use.
    pub fn presets() -> Vec<ParticipationCurve> {
        [
            (0.3, 0.1),
            (0.7, 0.1),
            (0.5, 0.1),
            (0.5, 0.2),
            (0.5, 0.07),
            (0.5, 0.05),
        ]
        .into_iter()
        .map(|(a, b)| ParticipationCurve { a, b })
        .collect()
    }
}

/// The strategist's menu at one bias level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    ClassR,
    ClassI,
    Bench,
}

impl Role {
    pub fn label(&self) -> &'static str {
        match self {
            Role::ClassR => "R",
            Role::ClassI => "I",
            Role::Bench => "bench",
        }
    }
}

/// Utility surface point: the three role utilities in the economy the
/// manipulated signal induces.
#[derive(Debug, Clone)]
pub struct RolePoint {
    pub zeta: f64,
    pub e_r: f64,
    pub report: WelfareReport,
}

/// Outcome of the exhaustive grid search over (role, zeta).
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub best_role: Role,
    pub best_zeta: f64,
    pub best_utility: f64,
    pub best_se: f64,
    pub surface: Vec<RolePoint>,
}

/// Default manipulation grid: 41 symmetric points on [-5, 5].
pub fn default_zeta_grid() -> Vec<f64> {
    (0..41).map(|i| -5.0 + 0.25 * i as f64).collect()
}

/// Utilities of the three roles at one (zeta, e^R(zeta)) configuration. The
/// strategist is measure zero: the equilibrium only sees the induced split.
pub fn evaluate_roles(
    params: &ModelParams,
    curve: &ParticipationCurve,
    zeta: f64,
    grid: &SimGrid,
) -> Result<RolePoint> {
    ParticipationCurve::new(curve.a, curve.b)?;
    let out = surface_pass(params, grid, &[zeta], curve)?;
    let report = build_report(params, grid, &out, zeta, curve.e_r(zeta), 0, 0);
    Ok(RolePoint {
        zeta,
        e_r: curve.e_r(zeta),
        report,
    })
}

fn surface_pass(
    params: &ModelParams,
    grid: &SimGrid,
    zetas: &[f64],
    curve: &ParticipationCurve,
) -> Result<PassOutput> {
    let plan = PassPlan {
        zetas: zetas.to_vec(),
        combos: zetas
            .iter()
            .enumerate()
            .map(|(zi, &z)| ComboSpec {
                zeta_idx: zi,
                e_r: curve.e_r(z),
                bench: true,
                total: false,
                diffs: true,
                diff_cv: cv_recommended(params, z, grid.t_horizon),
                deriv: false,
            })
            .collect(),
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: vec![],
    };
    run_pass(params, grid, &plan)
}

/// Exhaustive common-random-number search over role x zeta. Ties within
/// three standard errors of the best point resolve toward zeta = 0 first
/// and the passive role second.
pub fn best_manipulation(
    params: &ModelParams,
    curve: &ParticipationCurve,
    zeta_grid: &[f64],
    grid: &SimGrid,
) -> Result<StrategyOutcome> {
    ParticipationCurve::new(curve.a, curve.b)?;
    if zeta_grid.is_empty() {
        return Err(SimError::InvalidParameter("empty zeta grid".into()));
    }
    let out = surface_pass(params, grid, zeta_grid, curve)?;
    let surface: Vec<RolePoint> = zeta_grid
        .iter()
        .enumerate()
        .map(|(zi, &z)| RolePoint {
            zeta: z,
            e_r: curve.e_r(z),
            report: build_report(params, grid, &out, z, curve.e_r(z), zi, zi),
        })
        .collect();

    let utility_col = |role: Role, ci: usize| -> usize {
        match role {
            Role::ClassR => out.layout.u_r(ci),
            Role::ClassI => out.layout.u_i(ci),
            Role::Bench => out.layout.u_bench_eta(ci),
        }
    };
    let point_utility = |role: Role, point: &RolePoint| -> f64 {
        match role {
            Role::ClassR => point.report.u_r,
            Role::ClassI => point.report.u_i,
            Role::Bench => point.report.u_bench,
        }
    };
    let roles = [Role::Bench, Role::ClassR, Role::ClassI];

    // Point-estimate argmax first.
    let mut best: (Role, usize, f64) = (Role::Bench, 0, f64::NEG_INFINITY);
    for (ci, point) in surface.iter().enumerate() {
        for role in roles {
            let u = point_utility(role, point);
            if u > best.2 {
                best = (role, ci, u);
            }
        }
    }
    // Candidates within 3 SE of the best on per-path differences; among
    // them prefer small |zeta|, then the least-action role order.
    let least_action = |r: Role| -> usize {
        match r {
            Role::Bench => 0,
            Role::ClassR => 1,
            Role::ClassI => 2,
        }
    };
    let mut chosen = best;
    for (ci, point) in surface.iter().enumerate() {
        for role in roles {
            if (role, ci) == (best.0, best.1) {
                continue;
            }
            let (d, se) = out.diff_mean_se(utility_col(best.0, best.1), utility_col(role, ci));
            if d <= 3.0 * se {
                let better_zeta = point.zeta.abs() < surface[chosen.1].zeta.abs() - 1e-12;
                let same_zeta = (point.zeta.abs() - surface[chosen.1].zeta.abs()).abs() <= 1e-12;
                if better_zeta || (same_zeta && least_action(role) < least_action(chosen.0)) {
                    chosen = (role, ci, point_utility(role, point));
                }
            }
        }
    }
    let (role, ci, utility) = chosen;
    let se = match role {
        Role::ClassR => surface[ci].report.se_r,
        Role::ClassI => surface[ci].report.se_i,
        Role::Bench => surface[ci].report.se_bench,
    };
    Ok(StrategyOutcome {
        best_role: role,
        best_zeta: surface[ci].zeta,
        best_utility: utility,
        best_se: se,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn participation_curve_shape() {
        let c = ParticipationCurve::new(0.3, 0.1).unwrap();
        assert!((c.e_r(0.0) - 0.7).abs() < 1e-15);
        assert!(c.e_r(2.0) > c.e_r(1.0));
        assert!((c.e_r(3.0) - c.e_r(-3.0)).abs() < 1e-15);
        assert!(c.e_r(100.0) > 1.0 - 1e-12);
        assert!(ParticipationCurve::new(0.0, 0.1).is_err());
        assert!(ParticipationCurve::new(0.5, 0.0).is_err());
    }

    #[test]
    fn six_presets_exist() {
        let presets = ParticipationCurve::presets();
        assert_eq!(presets.len(), 6);
        assert!(presets.iter().all(|c| c.a > 0.0 && c.b > 0.0));
    }

    #[test]
    fn surface_is_deterministic() {
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 20.0, 200, 5);
        let curve = ParticipationCurve::new(0.5, 0.1).unwrap();
        let zg = [-1.0, 0.0, 1.0];
        let a = best_manipulation(&p, &curve, &zg, &g).unwrap();
        let b = best_manipulation(&p, &curve, &zg, &g).unwrap();
        assert_eq!(a.best_role, b.best_role);
        assert_eq!(a.best_zeta, b.best_zeta);
        assert_eq!(a.best_utility.to_bits(), b.best_utility.to_bits());
    }

    #[test]
    fn optimum_not_below_benchmark() {
        // The passive role is on the menu, so the chosen optimum can never
        // sit materially below it.
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 30.0, 400, 5);
        let curve = ParticipationCurve::new(0.5, 0.1).unwrap();
        let outc = best_manipulation(&p, &curve, &[-0.5, 0.0, 0.5], &g).unwrap();
        for point in &outc.surface {
            assert!(
                outc.best_utility >= point.report.u_bench - 3.0 * point.report.se_bench,
                "optimum below a benchmark point"
            );
        }
    }

    #[test]
    fn vanishing_audience_makes_all_biases_equal() {
        // a -> 0: e_R ~ 1 regardless of zeta; utilities tie across the grid.
        let p = ModelParams::baseline();
        let g = SimGrid::new(0.01, 20.0, 400, 5);
        let curve = ParticipationCurve::new(1e-9, 0.1).unwrap();
        let outc = best_manipulation(&p, &curve, &[-2.0, 0.0, 2.0], &g).unwrap();
        let u0 = outc.surface[1].report.u_r;
        for point in &outc.surface {
            assert!((point.report.u_r - u0).abs() < 4.0 * point.report.se_r + 1e-6);
        }
        // Tie-breaking lands on zeta = 0.
        assert_eq!(outc.best_zeta, 0.0);
    }
}
