//! Closed-loop simulation and experiment orchestration.

pub mod config;
pub mod experiments;
pub mod report;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::{control_step, optical_axis_angle, ControlCommand, ControllerConfig};
use crate::dynamics::{integrate_step, VehicleParams, WindField};
use crate::error::{Error, Result};
use crate::perception::{
    bbox_to_los, project_gate, CameraModel, Capture, PerceptionConfig, PerceptionPipeline, Release,
};
use crate::pn::Los;
use crate::world::{check_gate_pass, LogRow, Outcome, RunResult, Scenario};

pub use config::ExperimentConfig;
pub use experiments::{
    condition_for_record, experiment_conditions, run_baseline_comparison, run_conditions,
    run_delay_sweep, run_seed, run_table1, run_vrel_study, single_condition, Batch, Condition,
};
pub use report::{AggregateReport, ConditionSummary, RunRecord};

/// Source of the relative speed used in the PN gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeSpeed {
    /// The configured overestimate `v_rel_bar`.
    Fixed,
    /// True `|v − v_gate|`, read from the simulator every tick.
    Perfect,
}

/// Everything a single run needs besides the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    pub camera: CameraModel,
    pub perception: PerceptionConfig,
    pub vehicle: VehicleParams,
    pub wind: WindField,
    /// Integration step, s.
    pub dt: f64,
    /// Simulated time limit, s.
    pub timeout: f64,
    /// Width of the gate frame counted as a collision, m.
    pub rim_width: f64,
    /// Consecutive ticks without a detection before the run is abandoned.
    pub max_lost_ticks: u32,
    pub relative_speed: RelativeSpeed,
    /// Keep one log row per control tick.
    pub log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            camera: CameraModel::default(),
            perception: PerceptionConfig::default(),
            vehicle: VehicleParams::default(),
            wind: WindField::default(),
            dt: 1e-3,
            timeout: 15.0,
            rim_width: 0.1,
            max_lost_ticks: 5,
            relative_speed: RelativeSpeed::Fixed,
            log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.camera.validate()?;
        self.perception.validate()?;
        self.vehicle.validate()?;
        if !(self.dt > 0.0 && self.dt * self.perception.f_est <= 1.0) {
            return Err(Error::Config(
                "dt must be positive and no longer than a control tick".into(),
            ));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if !(self.rim_width >= 0.0) {
            return Err(Error::Config("rim_width must be non-negative".into()));
        }
        if !self.wind.v_wind.iter().all(|w| w.is_finite()) {
            return Err(Error::Config("wind must be finite".into()));
        }
        Ok(())
    }
}

const NOISE_STREAM: u64 = 0x006e_6f69_7365;

/// Simulate one engagement: detect and control at `f_est`, hold the command,
/// integrate at `dt`, stop on a plane crossing, a failure or the timeout.
pub fn run_scenario(scn: &Scenario, cfg: &SimConfig) -> Result<RunResult> {
    cfg.validate()?;
    let gate = &scn.gate;
    let g_world = cfg.vehicle.gravity;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::mix_seed(scn.seed, NOISE_STREAM, 0));
    let mut pipeline = PerceptionPipeline::new(&cfg.perception);

    let mut x = scn.initial_state();
    let hover = g_world.norm().min(cfg.controller.f_th_bar);
    let mut cmd = ControlCommand::hold(x.q, hover);
    let mut gamma = 0.0;
    let mut lambda_dot = 0.0;
    let mut l_prev: Option<Vector3<f64>> = None;
    let mut lost = 0u32;
    let mut top_speed = x.v.norm();
    let mut log = Vec::new();

    let steps_per_tick = 1.0 / (cfg.perception.f_est * cfg.dt);
    let n_steps = (cfg.timeout / cfg.dt).ceil() as u64;
    let mut tick = 0u64;
    let mut next_tick_step = 0u64;
    let stop = |outcome: Outcome, t: f64, d: f64, top_speed: f64, log: Vec<LogRow>| RunResult {
        success: outcome == Outcome::Success,
        outcome,
        t_gate: t,
        d_center: d,
        top_speed,
        log,
    };

    for step in 0..n_steps {
        let t = step as f64 * cfg.dt;
        if step == next_tick_step {
            let gate_p = gate.position(t);
            let capture = project_gate(
                &cfg.camera,
                &x,
                &gate_p,
                &gate.normal,
                gate.radius,
                t,
                cfg.perception.noise_px,
                &mut rng,
            )
            .map(|bbox| Capture { bbox, q_bw: x.q });
            match pipeline.step(tick, capture) {
                Release::Detection(c) => {
                    lost = 0;
                    let l = bbox_to_los(&cfg.camera, &c.bbox, &c.q_bw);
                    let los = match l_prev {
                        Some(lp) => Los::new(l, lp, cfg.perception.f_est, t),
                        None => Los::initial(l, t),
                    };
                    l_prev = Some(l);
                    let mut ctrl = cfg.controller;
                    if cfg.relative_speed == RelativeSpeed::Perfect {
                        ctrl.pn.v_rel_bar = (x.v - gate.velocity(t)).norm().max(1e-6);
                    }
                    if let Ok(c) = los.and_then(|los| {
                        lambda_dot = los.rate;
                        control_step(&los, &g_world, &ctrl).map(|c| (c, los.l))
                    }) {
                        cmd = c.0;
                        gamma = optical_axis_angle(&cmd.q_c, &c.1);
                    } else {
                        cmd.f_th = cmd.f_th.min(cfg.controller.f_th_bar);
                    }
                }
                Release::Lost => {
                    lost += 1;
                    if lost > cfg.max_lost_ticks {
                        let d = (x.p - gate_p).norm();
                        return Ok(stop(Outcome::GateLost, t, d, top_speed, log));
                    }
                }
                Release::Pending => {}
            }
            if cfg.log {
                log.push(LogRow {
                    t,
                    state: x,
                    gate: gate_p,
                    f_th: cmd.f_th,
                    q_c: cmd.q_c,
                    gamma,
                    lambda_dot,
                });
            }
            tick += 1;
            next_tick_step = (tick as f64 * steps_per_tick).round() as u64;
        }

        let next = match integrate_step(&x, &cmd, &cfg.vehicle, &cfg.wind, cfg.dt) {
            Ok(n) => n,
            Err(_) => {
                return Ok(stop(
                    Outcome::Diverged,
                    t,
                    (x.p - gate.position(t)).norm(),
                    top_speed,
                    log,
                ))
            }
        };
        let t_next = (step + 1) as f64 * cfg.dt;
        top_speed = top_speed.max(next.v.norm());
        if let Some(pass) = check_gate_pass(&x, t, &next, t_next, gate) {
            let outcome = Outcome::of_pass(&pass, gate.radius, cfg.rim_width);
            return Ok(stop(outcome, pass.t_gate, pass.d_center, top_speed, log));
        }
        x = next;
    }
    let t_end = n_steps as f64 * cfg.dt;
    Ok(stop(
        Outcome::Timeout,
        t_end,
        (x.p - gate.position(t_end)).norm(),
        top_speed,
        log,
    ))
}
