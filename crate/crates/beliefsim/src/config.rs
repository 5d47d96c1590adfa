//! Experiment configuration: UTF-8 text, one `key = value` per line, `#`
//! comments, dotted keys. Unknown keys are a hard error; every field has a
//! default, so the empty config is a valid all-defaults run.

use std::fmt::Write as _;

use crate::error::{Result, SimError};
use crate::model::{InitMode, ModelParams, SimGrid, TwoStateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Paths,
    WelfareSweep,
    DoubleLoss,
    Strategist,
    Survival,
    TwoState,
    CriticalZeta,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::Paths => "paths",
            ExperimentKind::WelfareSweep => "welfare-sweep",
            ExperimentKind::DoubleLoss => "double-loss",
            ExperimentKind::Strategist => "strategist",
            ExperimentKind::Survival => "survival",
            ExperimentKind::TwoState => "two-state",
            ExperimentKind::CriticalZeta => "critical-zeta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "paths" => ExperimentKind::Paths,
            "welfare-sweep" => ExperimentKind::WelfareSweep,
            "double-loss" => ExperimentKind::DoubleLoss,
            "strategist" => ExperimentKind::Strategist,
            "survival" => ExperimentKind::Survival,
            "two-state" => ExperimentKind::TwoState,
            "critical-zeta" => ExperimentKind::CriticalZeta,
            other => {
                return Err(SimError::Config(format!(
                    "unknown experiment '{other}' (expected paths, welfare-sweep, double-loss, \
                     strategist, survival, two-state, critical-zeta)"
                )))
            }
        })
    }
}

/// Full effective configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub out_dir: String,
    pub svg: bool,
    pub model: ModelParams,
    pub grid: SimGrid,
    pub sweep_zetas: Vec<f64>,
    pub sweep_e_r: Vec<f64>,
    pub double_loss_e_r: Vec<f64>,
    pub strategist_presets: Vec<(f64, f64)>,
    pub strategist_zeta_min: f64,
    pub strategist_zeta_max: f64,
    pub strategist_zeta_points: usize,
    pub strategist_paths: usize,
    pub strategist_t: f64,
    pub survival_zetas: Vec<f64>,
    pub survival_t: f64,
    pub rho_list: Vec<f64>,
    pub two_state: TwoStateParams,
    pub two_state_dt: f64,
    pub two_state_t: f64,
    pub two_state_paths: usize,
    pub two_state_e_r_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Paths,
            out_dir: "out".into(),
            svg: false,
            model: ModelParams::baseline(),
            grid: SimGrid::new(0.01, 500.0, 20_000, 20240814),
            sweep_zetas: vec![0.0, 0.5, -0.5, 1.5, -1.5, 3.0, -3.0],
            sweep_e_r: (0..=10).map(|i| i as f64 / 10.0).collect(),
            double_loss_e_r: vec![
                0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.98, 0.99,
                0.995, 0.998,
            ],
            strategist_presets: vec![
                (0.3, 0.1),
                (0.7, 0.1),
                (0.5, 0.1),
                (0.5, 0.2),
                (0.5, 0.07),
                (0.5, 0.05),
            ],
            strategist_zeta_min: -5.0,
            strategist_zeta_max: 5.0,
            strategist_zeta_points: 41,
            strategist_paths: 4_000,
            strategist_t: 300.0,
            survival_zetas: vec![0.0, 1.0, 2.0, 3.0],
            survival_t: 300.0,
            rho_list: vec![0.1, 0.02, 0.004],
            two_state: TwoStateParams::realistic(),
            two_state_dt: 0.01,
            two_state_t: 200.0,
            two_state_paths: 4_000,
            two_state_e_r_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| SimError::Config(format!("key '{key}': '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| SimError::Config(format!("key '{key}': '{v}' is not a positive integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.trim()
        .parse::<u64>()
        .map_err(|_| SimError::Config(format!("key '{key}': '{v}' is not a u64")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(SimError::Config(format!(
            "key '{key}': '{v}' is not true/false"
        ))),
    }
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(key, s))
        .collect::<Result<Vec<_>>>()
        .and_then(|xs| {
            if xs.is_empty() {
                Err(SimError::Config(format!("key '{key}': empty list")))
            } else {
                Ok(xs)
            }
        })
}

fn parse_pairs(key: &str, v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| SimError::Config(format!("key '{key}': expected a:b pairs")))?;
            Ok((parse_f64(key, a)?, parse_f64(key, b)?))
        })
        .collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_pairs(ps: &[(f64, f64)]) -> String {
    ps.iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => self.experiment = ExperimentKind::parse(v)?,
            "out" => self.out_dir = v.to_string(),
            "svg" => self.svg = parse_bool(key, v)?,

            "model.mu_bar" => self.model.mu_bar = parse_f64(key, v)?,
            "model.kappa" => self.model.kappa = parse_f64(key, v)?,
            "model.sigma_mu" => self.model.sigma_mu = parse_f64(key, v)?,
            "model.sigma_d" => {
                self.model.sigma_d = parse_f64(key, v)?;
                self.two_state.sigma_d = self.model.sigma_d;
            }
            "model.sigma_e" => {
                self.model.sigma_e = parse_f64(key, v)?;
                self.two_state.sigma_e = self.model.sigma_e;
            }
            "model.rho" => self.model.rho = parse_f64(key, v)?,
            "model.zeta" => self.model.zeta = parse_f64(key, v)?,
            "model.e_r" => self.model.e_r = parse_f64(key, v)?,
            "model.mu0" => self.model.mu0 = parse_f64(key, v)?,
            "model.mu_r0" => self.model.mu_r0 = parse_f64(key, v)?,
            "model.mu_i0" => self.model.mu_i0 = parse_f64(key, v)?,
            "model.gamma_r0" => self.model.gamma_r0 = parse_f64(key, v)?,
            "model.gamma_i0" => self.model.gamma_i0 = parse_f64(key, v)?,
            "model.init" => {
                self.model.init = match v {
                    "point" => InitMode::Point,
                    "stationary" => InitMode::Stationary,
                    _ => {
                        return Err(SimError::Config(format!(
                            "key 'model.init': '{v}' is not point/stationary"
                        )))
                    }
                }
            }

            "grid.dt" => self.grid.dt = parse_f64(key, v)?,
            "grid.t" => self.grid.t_horizon = parse_f64(key, v)?,
            "grid.paths" => self.grid.n_paths = parse_usize(key, v)?,
            "grid.seed" => self.grid.seed = parse_u64(key, v)?,

            "sweep.zetas" => self.sweep_zetas = parse_f64_list(key, v)?,
            "sweep.e_r" => self.sweep_e_r = parse_f64_list(key, v)?,
            "doubleloss.e_r" => self.double_loss_e_r = parse_f64_list(key, v)?,

            "strategist.presets" => self.strategist_presets = parse_pairs(key, v)?,
            "strategist.zeta_min" => self.strategist_zeta_min = parse_f64(key, v)?,
            "strategist.zeta_max" => self.strategist_zeta_max = parse_f64(key, v)?,
            "strategist.zeta_points" => self.strategist_zeta_points = parse_usize(key, v)?,
            "strategist.paths" => self.strategist_paths = parse_usize(key, v)?,
            "strategist.t" => self.strategist_t = parse_f64(key, v)?,

            "survival.zetas" => self.survival_zetas = parse_f64_list(key, v)?,
            "survival.t" => self.survival_t = parse_f64(key, v)?,

            "rho.list" => self.rho_list = parse_f64_list(key, v)?,

            "two_state.mu_h" => self.two_state.mu_h = parse_f64(key, v)?,
            "two_state.mu_l" => self.two_state.mu_l = parse_f64(key, v)?,
            "two_state.lambda_hl" => self.two_state.lambda_hl = parse_f64(key, v)?,
            "two_state.psi_lh" => self.two_state.psi_lh = parse_f64(key, v)?,
            "two_state.rho" => self.two_state.rho = parse_f64(key, v)?,
            "two_state.zeta" => self.two_state.zeta = parse_f64(key, v)?,
            "two_state.e_r" => self.two_state.e_r = parse_f64(key, v)?,
            "two_state.mu0" => self.two_state.mu0 = parse_f64(key, v)?,
            "two_state.mu_r0" => self.two_state.mu_r0 = parse_f64(key, v)?,
            "two_state.mu_i0" => self.two_state.mu_i0 = parse_f64(key, v)?,
            "two_state.preset" => match v {
                "realistic" => {
                    let (sd, se) = (self.two_state.sigma_d, self.two_state.sigma_e);
                    self.two_state = TwoStateParams::realistic();
                    self.two_state.sigma_d = sd;
                    self.two_state.sigma_e = se;
                }
                "near-degenerate" => {
                    let (sd, se) = (self.two_state.sigma_d, self.two_state.sigma_e);
                    self.two_state = TwoStateParams::near_degenerate();
                    self.two_state.sigma_d = sd;
                    self.two_state.sigma_e = se;
                }
                _ => {
                    return Err(SimError::Config(format!(
                        "key 'two_state.preset': '{v}' is not realistic/near-degenerate"
                    )))
                }
            },
            "two_state.dt" => self.two_state_dt = parse_f64(key, v)?,
            "two_state.t" => self.two_state_t = parse_f64(key, v)?,
            "two_state.paths" => self.two_state_paths = parse_usize(key, v)?,
            "two_state.e_r_grid" => self.two_state_e_r_grid = parse_f64_list(key, v)?,

            other => {
                return Err(SimError::Config(format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parses a config file body (not a path).
    pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            cfg.set(key.trim(), value)
                .map_err(|e| SimError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Serializes every effective field; parsing the result reproduces the
    /// configuration exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let init = match self.model.init {
            InitMode::Point => "point",
            InitMode::Stationary => "stationary",
        };
        let _ = writeln!(s, "experiment = {}", self.experiment.label());
        let _ = writeln!(s, "out = {}", self.out_dir);
        let _ = writeln!(s, "svg = {}", self.svg);
        let m = &self.model;
        let _ = writeln!(s, "model.mu_bar = {}", m.mu_bar);
        let _ = writeln!(s, "model.kappa = {}", m.kappa);
        let _ = writeln!(s, "model.sigma_mu = {}", m.sigma_mu);
        let _ = writeln!(s, "model.sigma_d = {}", m.sigma_d);
        let _ = writeln!(s, "model.sigma_e = {}", m.sigma_e);
        let _ = writeln!(s, "model.rho = {}", m.rho);
        let _ = writeln!(s, "model.zeta = {}", m.zeta);
        let _ = writeln!(s, "model.e_r = {}", m.e_r);
        let _ = writeln!(s, "model.mu0 = {}", m.mu0);
        let _ = writeln!(s, "model.mu_r0 = {}", m.mu_r0);
        let _ = writeln!(s, "model.mu_i0 = {}", m.mu_i0);
        let _ = writeln!(s, "model.gamma_r0 = {}", m.gamma_r0);
        let _ = writeln!(s, "model.gamma_i0 = {}", m.gamma_i0);
        let _ = writeln!(s, "model.init = {init}");
        let _ = writeln!(s, "grid.dt = {}", self.grid.dt);
        let _ = writeln!(s, "grid.t = {}", self.grid.t_horizon);
        let _ = writeln!(s, "grid.paths = {}", self.grid.n_paths);
        let _ = writeln!(s, "grid.seed = {}", self.grid.seed);
        let _ = writeln!(s, "sweep.zetas = {}", fmt_list(&self.sweep_zetas));
        let _ = writeln!(s, "sweep.e_r = {}", fmt_list(&self.sweep_e_r));
        let _ = writeln!(s, "doubleloss.e_r = {}", fmt_list(&self.double_loss_e_r));
        let _ = writeln!(
            s,
            "strategist.presets = {}",
            fmt_pairs(&self.strategist_presets)
        );
        let _ = writeln!(s, "strategist.zeta_min = {}", self.strategist_zeta_min);
        let _ = writeln!(s, "strategist.zeta_max = {}", self.strategist_zeta_max);
        let _ = writeln!(s, "strategist.zeta_points = {}", self.strategist_zeta_points);
        let _ = writeln!(s, "strategist.paths = {}", self.strategist_paths);
        let _ = writeln!(s, "strategist.t = {}", self.strategist_t);
        let _ = writeln!(s, "survival.zetas = {}", fmt_list(&self.survival_zetas));
        let _ = writeln!(s, "survival.t = {}", self.survival_t);
        let _ = writeln!(s, "rho.list = {}", fmt_list(&self.rho_list));
        let t = &self.two_state;
        let _ = writeln!(s, "two_state.mu_h = {}", t.mu_h);
        let _ = writeln!(s, "two_state.mu_l = {}", t.mu_l);
        let _ = writeln!(s, "two_state.lambda_hl = {}", t.lambda_hl);
        let _ = writeln!(s, "two_state.psi_lh = {}", t.psi_lh);
        let _ = writeln!(s, "two_state.rho = {}", t.rho);
        let _ = writeln!(s, "two_state.zeta = {}", t.zeta);
        let _ = writeln!(s, "two_state.e_r = {}", t.e_r);
        let _ = writeln!(s, "two_state.mu0 = {}", t.mu0);
        let _ = writeln!(s, "two_state.mu_r0 = {}", t.mu_r0);
        let _ = writeln!(s, "two_state.mu_i0 = {}", t.mu_i0);
        let _ = writeln!(s, "two_state.dt = {}", self.two_state_dt);
        let _ = writeln!(s, "two_state.t = {}", self.two_state_t);
        let _ = writeln!(s, "two_state.paths = {}", self.two_state_paths);
        let _ = writeln!(s, "two_state.e_r_grid = {}", fmt_list(&self.two_state_e_r_grid));
        s
    }

    /// Grid used by the strategist experiment (its own horizon/ensemble).
    pub fn strategist_grid(&self) -> SimGrid {
        SimGrid::new(
            self.grid.dt,
            self.strategist_t,
            self.strategist_paths,
            self.grid.seed,
        )
    }

    pub fn survival_grid(&self) -> SimGrid {
        SimGrid::new(self.grid.dt, self.survival_t, self.grid.n_paths, self.grid.seed)
    }

    pub fn two_state_grid(&self) -> SimGrid {
        SimGrid::new(
            self.two_state_dt,
            self.two_state_t,
            self.two_state_paths,
            self.grid.seed,
        )
    }

    pub fn strategist_zeta_grid(&self) -> Vec<f64> {
        let n = self.strategist_zeta_points.max(2);
        let (lo, hi) = (self.strategist_zeta_min, self.strategist_zeta_max);
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}
