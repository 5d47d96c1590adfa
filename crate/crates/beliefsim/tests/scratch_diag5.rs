use beliefsim::engine::{run_pass, PassPlan};
use beliefsim::model::{ModelParams, SimGrid};
use beliefsim::welfare::slope_report_from;

#[test]
#[ignore]
fn slope_mega_dt01() {
    let p = ModelParams::baseline();
    let g = SimGrid::new(0.1, 300.0, 8_000_000, 555);
    let plan = PassPlan {
        zetas: vec![0.0],
        combos: vec![],
        slopes: true,
        slope_cv: true,
        capture_times: vec![],
        series_times: vec![],
    };
    let out = run_pass(&p, &g, &plan).unwrap();
    let rep = slope_report_from(&out, 0, true).unwrap();
    println!(
        "MEGA dt=0.1 n=8M: slope0 = {:+.4e} (se {:.2e}, z {:+.2})",
        rep.slope_at_zero, rep.se_at_zero, rep.slope_at_zero / rep.se_at_zero
    );
}
