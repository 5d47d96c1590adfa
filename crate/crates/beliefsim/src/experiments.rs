//! Experiment orchestration: maps a configuration onto library runs and
//! emits plot-ready CSVs (optionally SVG charts) plus a reproduction
//! manifest. All file writes happen after the deterministic reductions, so
//! output bytes are independent of worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::engine::{run_two_state_pass, ComboSpec, PassPlan};

use crate::error::{Result, SimError};
use crate::filters;
use crate::manifest::{fnv1a64, OutputRecord, RunManifest};
use crate::model::{simulate_truth, simulate_two_state};
use crate::output::{fmt_f64, line_chart, CsvTable};
use crate::strategist::{best_manipulation, ParticipationCurve, Role};
use crate::survival::{consumption_ratio_batch, stationary_stats, zeta4_by_bisection, SurvivalVerdict};
use crate::welfare::{
    critical_zeta_welfare, double_loss_scan, two_state_counterexample, welfare_matrix,
};

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub outputs: Vec<OutputRecord>,
    pub runtime_secs: f64,
    pub summary: Vec<String>,
}

struct Emitter {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let bytes = table.write(&self.dir.join(name))?;
        self.outputs.push(OutputRecord {
            name: name.to_string(),
            checksum: fnv1a64(&bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn svg(&mut self, name: &str, body: String) -> Result<()> {
        let bytes = body.into_bytes();
        fs::write(self.dir.join(name), &bytes)?;
        self.outputs.push(OutputRecord {
            name: name.to_string(),
            checksum: fnv1a64(&bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }
}

/// Runs the configured experiment, writes its outputs and manifest, and
/// returns the summary.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let dir = PathBuf::from(&config.out_dir);
    let mut emitter = Emitter::new(&dir)?;
    let mut summary = Vec::new();

    match config.experiment {
        ExperimentKind::Paths => run_paths(config, &mut emitter, &mut summary)?,
        ExperimentKind::WelfareSweep => run_welfare_sweep(config, &mut emitter, &mut summary)?,
        ExperimentKind::DoubleLoss => run_double_loss(config, &mut emitter, &mut summary)?,
        ExperimentKind::Strategist => run_strategist(config, &mut emitter, &mut summary)?,
        ExperimentKind::Survival => run_survival(config, &mut emitter, &mut summary)?,
        ExperimentKind::TwoState => run_two_state(config, &mut emitter, &mut summary)?,
        ExperimentKind::CriticalZeta => run_critical_zeta(config, &mut emitter, &mut summary)?,
    }

    let runtime = started.elapsed().as_secs_f64();
    let manifest = RunManifest::new(config, runtime, emitter.outputs.clone());
    manifest.write(&dir.join("run_manifest.txt"))?;
    Ok(RunOutcome {
        out_dir: dir,
        outputs: emitter.outputs,
        runtime_secs: runtime,
        summary,
    })
}

fn run_paths(config: &ExperimentConfig, em: &mut Emitter, summary: &mut Vec<String>) -> Result<()> {
    let params = &config.model;
    let grid = &config.grid;
    let mut bundle = simulate_truth(params, grid, 0)?;
    let mut unbiased = params.clone();
    unbiased.zeta = 0.0;
    filters::attach_filters(&unbiased, grid, 0, &mut bundle);
    let delta = filters::bias_gap(params, grid, 1.0)?;
    let n = grid.n_steps();
    let stride = (n / 2000).max(1);

    let mut table = CsvTable::new(&[
        "t",
        "mu",
        "log_d",
        "mu_r",
        "mu_i_zeta0",
        "mu_i_zeta_pos1",
        "mu_i_zeta_neg1",
    ]);
    let mut chart: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("mu".into(), vec![]),
        ("mu_R".into(), vec![]),
        ("mu_I (zeta=0)".into(), vec![]),
        ("mu_I (zeta=1)".into(), vec![]),
        ("mu_I (zeta=-1)".into(), vec![]),
    ];
    for k in (0..=n).step_by(stride) {
        let t = k as f64 * grid.dt;
        let mu_i0 = bundle.mu_i[k];
        let d = delta.delta[k];
        table.push(vec![
            fmt_f64(t),
            fmt_f64(bundle.mu[k]),
            fmt_f64(bundle.log_d[k]),
            fmt_f64(bundle.mu_r[k]),
            fmt_f64(mu_i0),
            fmt_f64(mu_i0 + d),
            fmt_f64(mu_i0 - d),
        ]);
        chart[0].1.push((t, bundle.mu[k]));
        chart[1].1.push((t, bundle.mu_r[k]));
        chart[2].1.push((t, mu_i0));
        chart[3].1.push((t, mu_i0 + d));
        chart[4].1.push((t, mu_i0 - d));
    }
    em.csv("paths_mean_reverting.csv", &table)?;
    if config.svg {
        em.svg(
            "paths_mean_reverting.svg",
            line_chart("drift and filter trajectories", "t", "drift", &chart),
        )?;
    }
    summary.push(format!(
        "paths: one trajectory, {} sampled points, biased filters are exact twin offsets",
        table.rows.len()
    ));
    Ok(())
}

fn welfare_header() -> Vec<&'static str> {
    vec![
        "zeta",
        "e_r",
        "u_r",
        "se_r",
        "u_i",
        "se_i",
        "u_bench",
        "se_bench",
        "u_bench_d",
        "se_bench_d",
        "u_total",
        "se_total",
        "u_total_autarky",
        "se_total_autarky",
        "gap_ir",
        "se_gap",
        "diff_i_bench",
        "se_diff_i_bench",
        "diff_r_bench",
        "se_diff_r_bench",
        "diff_total",
        "se_diff_total",
        "double_loss",
    ]
}

fn welfare_row(rep: &crate::welfare::WelfareReport, flag: bool) -> Vec<String> {
    vec![
        fmt_f64(rep.zeta),
        fmt_f64(rep.e_r),
        fmt_f64(rep.u_r),
        fmt_f64(rep.se_r),
        fmt_f64(rep.u_i),
        fmt_f64(rep.se_i),
        fmt_f64(rep.u_bench),
        fmt_f64(rep.se_bench),
        fmt_f64(rep.u_bench_d),
        fmt_f64(rep.se_bench_d),
        fmt_f64(rep.u_total),
        fmt_f64(rep.se_total),
        fmt_f64(rep.u_total_autarky),
        fmt_f64(rep.se_total_autarky),
        fmt_f64(rep.gap_ir),
        fmt_f64(rep.se_gap),
        fmt_f64(rep.diff_i_bench),
        fmt_f64(rep.se_diff_i_bench),
        fmt_f64(rep.diff_r_bench),
        fmt_f64(rep.se_diff_r_bench),
        fmt_f64(rep.diff_total),
        fmt_f64(rep.se_diff_total),
        (if flag { "1" } else { "0" }).to_string(),
    ]
}

fn double_loss_flag(rep: &crate::welfare::WelfareReport) -> bool {
    rep.diff_i_bench < -3.0 * rep.se_diff_i_bench && rep.diff_r_bench < -3.0 * rep.se_diff_r_bench
}

fn run_welfare_sweep(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let matrix = welfare_matrix(&config.model, &config.grid, &config.sweep_zetas, &config.sweep_e_r)?;
    let mut table = CsvTable::new(&welfare_header());
    for row in &matrix {
        for rep in row {
            table.push(welfare_row(rep, double_loss_flag(rep)));
        }
    }
    em.csv("welfare_sweep.csv", &table)?;
    if config.svg {
        for (zi, row) in matrix.iter().enumerate() {
            let zeta = config.sweep_zetas[zi];
            let series = vec![
                (
                    "U_R".to_string(),
                    row.iter().map(|r| (r.e_r, r.u_r)).collect(),
                ),
                (
                    "U_I".to_string(),
                    row.iter().map(|r| (r.e_r, r.u_i)).collect(),
                ),
                (
                    "U_bench".to_string(),
                    row.iter().map(|r| (r.e_r, r.u_bench)).collect(),
                ),
            ];
            em.svg(
                &format!("welfare_sweep_z{zi}.svg"),
                line_chart(
                    &format!("welfare vs e_R at zeta = {zeta}"),
                    "e_R",
                    "utility",
                    &series,
                ),
            )?;
        }
    }
    let n_flagged: usize = matrix
        .iter()
        .flatten()
        .filter(|r| double_loss_flag(r))
        .count();
    summary.push(format!(
        "welfare-sweep: {} zetas x {} e_R points, {} double-loss flags",
        config.sweep_zetas.len(),
        config.sweep_e_r.len(),
        n_flagged
    ));
    Ok(())
}

fn run_double_loss(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let sweep = double_loss_scan(
        &config.model,
        config.model.zeta,
        &config.double_loss_e_r,
        &config.grid,
    )?;
    let mut table = CsvTable::new(&welfare_header());
    for (rep, &flag) in sweep.reports.iter().zip(sweep.double_loss.iter()) {
        table.push(welfare_row(rep, flag));
    }
    em.csv("double_loss.csv", &table)?;
    let flagged: Vec<String> = sweep
        .values
        .iter()
        .zip(sweep.double_loss.iter())
        .filter(|(_, &f)| f)
        .map(|(v, _)| format!("{v}"))
        .collect();
    summary.push(format!(
        "double-loss at zeta = {}: flagged e_R in [{}]",
        config.model.zeta,
        flagged.join(", ")
    ));
    Ok(())
}

fn run_strategist(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let grid = config.strategist_grid();
    let zeta_grid = config.strategist_zeta_grid();
    let mut summary_table = CsvTable::new(&[
        "a",
        "b",
        "best_role",
        "best_zeta",
        "best_utility",
        "best_se",
    ]);
    for (pi, &(a, b)) in config.strategist_presets.iter().enumerate() {
        let curve = ParticipationCurve::new(a, b)?;
        let outcome = best_manipulation(&config.model, &curve, &zeta_grid, &grid)?;
        let mut table = CsvTable::new(&[
            "zeta", "e_r", "u_r", "se_r", "u_i", "se_i", "u_bench", "se_bench", "best_role",
        ]);
        for point in &outcome.surface {
            let rep = &point.report;
            let role = [
                (rep.u_r, Role::ClassR),
                (rep.u_i, Role::ClassI),
                (rep.u_bench, Role::Bench),
            ]
            .into_iter()
            .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
            .unwrap()
            .1;
            table.push(vec![
                fmt_f64(point.zeta),
                fmt_f64(point.e_r),
                fmt_f64(rep.u_r),
                fmt_f64(rep.se_r),
                fmt_f64(rep.u_i),
                fmt_f64(rep.se_i),
                fmt_f64(rep.u_bench),
                fmt_f64(rep.se_bench),
                role.label().to_string(),
            ]);
        }
        em.csv(&format!("strategist_p{pi}.csv"), &table)?;
        if config.svg {
            let series = vec![
                (
                    "U_R".to_string(),
                    outcome.surface.iter().map(|p| (p.zeta, p.report.u_r)).collect(),
                ),
                (
                    "U_I".to_string(),
                    outcome.surface.iter().map(|p| (p.zeta, p.report.u_i)).collect(),
                ),
                (
                    "U_bench".to_string(),
                    outcome
                        .surface
                        .iter()
                        .map(|p| (p.zeta, p.report.u_bench))
                        .collect(),
                ),
            ];
            em.svg(
                &format!("strategist_p{pi}.svg"),
                line_chart(
                    &format!("role utilities, participation a={a} b={b}"),
                    "zeta",
                    "utility",
                    &series,
                ),
            )?;
        }
        summary.push(format!(
            "strategist a={a} b={b}: best role {} at zeta = {}, utility {:.4} (se {:.4})",
            outcome.best_role.label(),
            outcome.best_zeta,
            outcome.best_utility,
            outcome.best_se
        ));
        summary_table.push(vec![
            fmt_f64(a),
            fmt_f64(b),
            outcome.best_role.label().to_string(),
            fmt_f64(outcome.best_zeta),
            fmt_f64(outcome.best_utility),
            fmt_f64(outcome.best_se),
        ]);
    }
    em.csv("strategist_summary.csv", &summary_table)?;
    Ok(())
}

fn run_survival(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let grid = config.survival_grid();
    let stats_list = consumption_ratio_batch(&config.model, &grid, &config.survival_zetas)?;
    let mut summary_table = CsvTable::new(&[
        "zeta",
        "late_slope",
        "late_slope_se",
        "predicted_drift",
        "verdict",
        "census_class_i_ahead",
        "saturation_events",
    ]);
    for (zi, (stats, &zeta)) in stats_list
        .iter()
        .zip(config.survival_zetas.iter())
        .enumerate()
    {
        let mut table = CsvTable::new(&[
            "t",
            "mean_log_eta",
            "se_log_eta",
            "share_i_q10",
            "share_i_q25",
            "share_i_q50",
            "share_i_q75",
            "share_i_q90",
        ]);
        for (si, &t) in stats.times.iter().enumerate() {
            let q = stats.share_i_quantiles[si];
            table.push(vec![
                fmt_f64(t),
                fmt_f64(stats.mean_log_eta[si]),
                fmt_f64(stats.se_log_eta[si]),
                fmt_f64(q[0]),
                fmt_f64(q[1]),
                fmt_f64(q[2]),
                fmt_f64(q[3]),
                fmt_f64(q[4]),
            ]);
        }
        em.csv(&format!("survival_z{zi}.csv"), &table)?;
        if config.svg {
            let series = vec![(
                format!("mean log eta (zeta={zeta})"),
                stats
                    .times
                    .iter()
                    .zip(stats.mean_log_eta.iter())
                    .map(|(&t, &m)| (t, m))
                    .collect(),
            )];
            em.svg(
                &format!("survival_z{zi}.svg"),
                line_chart("disagreement drift", "t", "mean log eta", &series),
            )?;
        }
        let verdict = match stats.verdict {
            SurvivalVerdict::ClassIDominates => "class_i_dominates",
            SurvivalVerdict::ClassRDominates => "class_r_dominates",
            SurvivalVerdict::Inconclusive => "inconclusive",
        };
        summary.push(format!(
            "survival zeta={zeta}: late slope {:.3e} (se {:.1e}), predicted {:.3e}, verdict {verdict}",
            stats.late_slope, stats.late_slope_se, stats.predicted_drift
        ));
        summary_table.push(vec![
            fmt_f64(zeta),
            fmt_f64(stats.late_slope),
            fmt_f64(stats.late_slope_se),
            fmt_f64(stats.predicted_drift),
            verdict.to_string(),
            fmt_f64(stats.census_class_i_ahead),
            stats.saturation_events.to_string(),
        ]);
    }
    em.csv("survival_summary.csv", &summary_table)?;
    Ok(())
}

fn run_two_state(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let params = &config.two_state;
    let grid = config.two_state_grid();

    // Trajectory dump with both the unbiased and configured-bias filters.
    let path = simulate_two_state(params, &grid, 0)?;
    let n = grid.n_steps();
    let mut est_r = params.mu_r0;
    let mut est_i0 = params.mu_i0;
    let mut est_iz = params.mu_i0;
    let mut unbiased = params.clone();
    unbiased.zeta = 0.0;
    let mut table = CsvTable::new(&["t", "mu", "mu_r", "mu_i_zeta0", "mu_i_biased"]);
    let stride = (n / 2000).max(1);
    for k in 0..=n {
        if k % stride == 0 || k == n {
            table.push(vec![
                fmt_f64(k as f64 * grid.dt),
                fmt_f64(path.mu[k]),
                fmt_f64(est_r),
                fmt_f64(est_i0),
                fmt_f64(est_iz),
            ]);
        }
        if k < n {
            let (r_next, _) =
                filters::wonham_step(est_r, path.mu[k], path.dw[k], path.db[k], grid.dt, params, false);
            let (i0_next, _) = filters::wonham_step(
                est_i0, path.mu[k], path.dw[k], path.db[k], grid.dt, &unbiased, true,
            );
            let (iz_next, _) =
                filters::wonham_step(est_iz, path.mu[k], path.dw[k], path.db[k], grid.dt, params, true);
            est_r = r_next;
            est_i0 = i0_next;
            est_iz = iz_next;
        }
    }
    em.csv("two_state_paths.csv", &table)?;

    // Welfare across e_R at the configured bias.
    let plan = PassPlan {
        zetas: vec![params.zeta],
        combos: config
            .two_state_e_r_grid
            .iter()
            .map(|&e_r| ComboSpec::basic(0, e_r))
            .collect(),
        slopes: false,
        slope_cv: false,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_two_state_pass(params, &grid, &plan)?;
    let mut wt = CsvTable::new(&[
        "zeta",
        "e_r",
        "u_r",
        "se_r",
        "u_i",
        "se_i",
        "u_bench",
        "se_bench",
        "gap_ir",
        "se_gap",
        "diff_i_bench",
        "se_diff_i_bench",
        "diff_r_bench",
        "se_diff_r_bench",
        "double_loss",
    ]);
    let mut n_flagged = 0;
    for (ci, &e_r) in config.two_state_e_r_grid.iter().enumerate() {
        let l = &out.layout;
        let (u_r, se_r) = out.mean_se(l.u_r(ci));
        let (u_i, se_i) = out.mean_se(l.u_i(ci));
        let (u_b, se_b) = out.mean_se(l.u_bench_eta(ci));
        let (gap, se_gap) = out.mean_se(l.gap(0));
        let (di, se_di) = out.mean_se(l.diff_i_bench(ci));
        let (dr, se_dr) = out.mean_se(l.diff_r_bench(ci));
        let flag = di < -3.0 * se_di && dr < -3.0 * se_dr;
        if flag {
            n_flagged += 1;
        }
        wt.push(vec![
            fmt_f64(params.zeta),
            fmt_f64(e_r),
            fmt_f64(u_r),
            fmt_f64(se_r),
            fmt_f64(u_i),
            fmt_f64(se_i),
            fmt_f64(u_b),
            fmt_f64(se_b),
            fmt_f64(gap),
            fmt_f64(se_gap),
            fmt_f64(di),
            fmt_f64(se_di),
            fmt_f64(dr),
            fmt_f64(se_dr),
            (if flag { "1" } else { "0" }).to_string(),
        ]);
    }
    em.csv("two_state_welfare.csv", &wt)?;

    // Participation slope at e_R = 0 (the counterexample diagnostic).
    let slope = two_state_counterexample(params, &grid)?;
    let mut st = CsvTable::new(&["zeta", "slope_at_e_r_zero", "se", "conclusive"]);
    st.push(vec![
        fmt_f64(params.zeta),
        fmt_f64(slope.slope_at_zero),
        fmt_f64(slope.se_at_zero),
        (if slope.conclusive { "1" } else { "0" }).to_string(),
    ]);
    em.csv("two_state_slope.csv", &st)?;
    if !slope.conclusive {
        summary.push(format!(
            "two-state slope inconclusive: {:.3e} (se {:.3e}); increase two_state.paths",
            slope.slope_at_zero, slope.se_at_zero
        ));
    } else {
        summary.push(format!(
            "two-state slope at e_R=0: {:.3e} (se {:.3e})",
            slope.slope_at_zero, slope.se_at_zero
        ));
    }
    summary.push(format!(
        "two-state welfare scan: {} double-loss flags over {} e_R points",
        n_flagged,
        config.two_state_e_r_grid.len()
    ));
    Ok(())
}

fn run_critical_zeta(
    config: &ExperimentConfig,
    em: &mut Emitter,
    summary: &mut Vec<String>,
) -> Result<()> {
    let params = &config.model;
    if params.zeta != 0.0 {
        // The thresholds are properties of the family over zeta; the
        // configured zeta only shifts the stationary delta diagnostics.
        summary.push("note: model.zeta ignored for threshold computation".into());
    }
    let (z1, z2) = critical_zeta_welfare(params)?;
    let stats = stationary_stats(params)?;
    let z4_bis = zeta4_by_bisection(params)?;
    let mut stationary = params.clone();
    stationary.init = crate::model::InitMode::Stationary;
    let (_, z2_stat) = critical_zeta_welfare(&stationary)?;

    let mut table = CsvTable::new(&["quantity", "value"]);
    let rows = [
        ("zeta1", z1),
        ("zeta2", z2),
        ("zeta3", stats.zeta3),
        ("zeta4", stats.zeta4),
        ("zeta4_bisection", z4_bis),
        ("zeta2_stationary_init", z2_stat),
        ("abs_diff_welfare_vs_survival", (z2 - stats.zeta4).abs()),
        (
            "abs_diff_stationary_init",
            (z2_stat - stats.zeta4).abs(),
        ),
        ("gamma_r_star", stats.gamma_r_star),
        ("gamma_i_star", stats.gamma_i_star),
        ("drift_log_eta_at_config_zeta", stats.drift_log_eta),
    ];
    for (name, value) in rows {
        table.push(vec![name.to_string(), fmt_f64(value)]);
    }
    em.csv("critical_zeta.csv", &table)?;

    let rho_rows = crate::survival::rho_zero_equivalence(params, &config.rho_list)?;
    let mut rt = CsvTable::new(&["rho", "zeta2", "zeta4", "abs_diff"]);
    for row in &rho_rows {
        rt.push(vec![
            fmt_f64(row.rho),
            fmt_f64(row.zeta2),
            fmt_f64(row.zeta4),
            fmt_f64(row.abs_diff),
        ]);
    }
    em.csv("critical_zeta_rho_table.csv", &rt)?;

    summary.push(format!(
        "critical biases: zeta1 = {z1:.6}, zeta2 = {z2:.6}; survival thresholds zeta3 = {:.6}, zeta4 = {:.6}",
        stats.zeta3, stats.zeta4
    ));
    summary.push(format!(
        "agreement: |zeta2 - zeta4| = {:.3e} (default init), {:.3e} (stationary init), closed form vs bisection {:.3e}",
        (z2 - stats.zeta4).abs(),
        (z2_stat - stats.zeta4).abs(),
        (stats.zeta4 - z4_bis).abs()
    ));
    for row in &rho_rows {
        summary.push(format!(
            "rho = {}: zeta2 = {:.6}, |zeta2 - zeta4| = {:.3e}",
            row.rho, row.zeta2, row.abs_diff
        ));
    }
    Ok(())
}

/// Validates everything the configured experiment will touch, before any
/// compute starts.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    config.model.validate()?;
    config.grid.validate()?;
    match config.experiment {
        ExperimentKind::TwoState => {
            config.two_state.validate()?;
            config.two_state.stability_check(&config.two_state_grid())?;
        }
        ExperimentKind::Strategist => {
            for &(a, b) in &config.strategist_presets {
                ParticipationCurve::new(a, b)?;
            }
            crate::model::stability_check(&config.model, &config.strategist_grid())?;
        }
        ExperimentKind::Survival => {
            if config.model.e_r <= 0.0 || config.model.e_r >= 1.0 {
                return Err(SimError::InvalidParameter(
                    "survival needs 0 < e_r < 1".into(),
                ));
            }
            crate::model::stability_check(&config.model, &config.survival_grid())?;
        }
        _ => {
            crate::model::stability_check(&config.model, &config.grid)?;
        }
    }
    Ok(())
}
