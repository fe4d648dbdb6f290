//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{RelativeSpeed, SimConfig};
use crate::control::{ControllerConfig, GRAVITY};
use crate::dynamics::{VehicleParams, WindField};
use crate::error::{Error, Result};
use crate::perception::{CameraModel, PerceptionConfig};
use crate::pn::PnConfig;
use crate::tuner::{RewardConfig, SearchSpace};
use crate::world::{InitialConditions, MotionKind, MotionParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub k_pn: f64,
    pub gamma_bar_deg: f64,
    /// m/s
    pub v_rel_bar: f64,
    /// Use the true relative speed instead of `v_rel_bar`.
    pub perfect_v_rel: bool,
    /// m/s²
    pub f_th_bar: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            k_pn: 2.10,
            gamma_bar_deg: 21.05,
            v_rel_bar: 15.0,
            perfect_v_rel: false,
            f_th_bar: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width: f64,
    pub height: f64,
    pub gamma_cam_deg: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            gamma_cam_deg: 33.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub mass: f64,
    pub tau_omega: f64,
    pub tau_att: f64,
    pub f_th_max_newtons: f64,
    pub drag_coeff: f64,
    /// World-frame wind velocity, m/s.
    pub wind: [f64; 3],
}

impl Default for VehicleSection {
    fn default() -> Self {
        let v = VehicleParams::default();
        Self {
            mass: v.mass,
            tau_omega: v.tau_omega,
            tau_att: v.tau_att,
            f_th_max_newtons: v.f_th_max_newtons,
            drag_coeff: v.drag_coeff,
            wind: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub timeout: f64,
    pub rim_width: f64,
    pub max_lost_ticks: u32,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt: s.dt,
            timeout: s.timeout,
            rim_width: s.rim_width,
            max_lost_ticks: s.max_lost_ticks,
        }
    }
}

/// Scenario template for `run` and `replay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub motion: MotionKind,
    pub radius: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            motion: MotionKind::Stationary,
            radius: 1.0,
        }
    }
}

/// One hyperparameter set evaluated by `table1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub name: String,
    pub k_pn: f64,
    pub gamma_bar_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Section {
    pub radii: Vec<f64>,
    pub configs: Vec<HyperParams>,
}

impl Default for Table1Section {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 2.0],
            configs: vec![
                HyperParams {
                    name: "R_dt".into(),
                    k_pn: 2.10,
                    gamma_bar_deg: 21.05,
                },
                HyperParams {
                    name: "R_d".into(),
                    k_pn: 1.11,
                    gamma_bar_deg: 8.91,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySweepSection {
    /// s
    pub delays: Vec<f64>,
    pub radii: Vec<f64>,
    pub motions: Vec<MotionKind>,
}

impl Default for DelaySweepSection {
    fn default() -> Self {
        Self {
            delays: vec![0.0, 0.1, 0.2, 0.3],
            radii: vec![0.5, 1.0, 2.0],
            motions: vec![
                MotionKind::Stationary,
                MotionKind::LinearFast,
                MotionKind::Planar,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrelStudySection {
    /// m/s
    pub v_rel_bars: Vec<f64>,
    pub include_perfect: bool,
    /// m
    pub distances: Vec<f64>,
    pub d_knot: f64,
    pub radius: f64,
    /// s, replaces the default timeout for the longer approaches
    pub timeout: f64,
}

impl Default for VrelStudySection {
    fn default() -> Self {
        Self {
            v_rel_bars: vec![10.0, 20.0, 30.0],
            include_perfect: true,
            distances: vec![30.0, 150.0],
            d_knot: 5.0,
            radius: 1.0,
            timeout: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub gamma_bar_deg: f64,
    pub radius: f64,
    /// Gate top speeds, m/s.
    pub gate_speeds: Vec<f64>,
    /// m/s
    pub initial_speed: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            gamma_bar_deg: 3.5,
            radius: 0.5,
            gate_speeds: vec![1.25, 2.5, 3.75, 5.0],
            initial_speed: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    DistanceTime,
    Distance,
}

impl RewardKind {
    pub fn config(&self) -> RewardConfig {
        match self {
            RewardKind::DistanceTime => RewardConfig::DISTANCE_TIME,
            RewardKind::Distance => RewardConfig::DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub reward: RewardKind,
    pub iterations: usize,
    pub runs_per_motion: usize,
    pub beta: f64,
    pub radius: f64,
    pub k_pn_min: f64,
    pub k_pn_max: f64,
    pub gamma_bar_deg_min: f64,
    pub gamma_bar_deg_max: f64,
}

impl Default for TuneSection {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self {
            reward: RewardKind::DistanceTime,
            iterations: 25,
            runs_per_motion: 2,
            beta: crate::tuner::DEFAULT_BETA,
            radius: 1.0,
            k_pn_min: s.k_pn.0,
            k_pn_max: s.k_pn.1,
            gamma_bar_deg_min: s.gamma_bar_deg.0,
            gamma_bar_deg_max: s.gamma_bar_deg.1,
        }
    }
}

impl TuneSection {
    pub fn space(&self) -> SearchSpace {
        SearchSpace {
            k_pn: (self.k_pn_min, self.k_pn_max),
            gamma_bar_deg: (self.gamma_bar_deg_min, self.gamma_bar_deg_max),
        }
    }
}

/// Complete experiment description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs_per_motion: usize,
    pub output_dir: PathBuf,
    /// Worker threads, 0 for all cores.
    pub jobs: usize,
    /// Write `traj_<seed>.csv` for every run.
    pub trajectories: bool,
    pub controller: ControllerSection,
    pub perception: PerceptionConfig,
    pub camera: CameraSection,
    pub vehicle: VehicleSection,
    pub sim: SimSection,
    pub initial: InitialConditions,
    pub motion: MotionParams,
    pub scenario: ScenarioSection,
    pub table1: Table1Section,
    pub delay_sweep: DelaySweepSection,
    pub vrel_study: VrelStudySection,
    pub baseline: BaselineSection,
    pub tune: TuneSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            runs_per_motion: 12,
            output_dir: PathBuf::from("out"),
            jobs: 0,
            trajectories: false,
            controller: ControllerSection::default(),
            perception: PerceptionConfig::default(),
            camera: CameraSection::default(),
            vehicle: VehicleSection::default(),
            sim: SimSection::default(),
            initial: InitialConditions::default(),
            motion: MotionParams::default(),
            scenario: ScenarioSection::default(),
            table1: Table1Section::default(),
            delay_sweep: DelaySweepSection::default(),
            vrel_study: VrelStudySection::default(),
            baseline: BaselineSection::default(),
            tune: TuneSection::default(),
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Check every section; all failures are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        if self.runs_per_motion == 0 {
            return Err(Error::Config("runs_per_motion must be at least 1".into()));
        }
        self.sim_config().validate().map_err(config_err)?;
        self.initial.validate().map_err(config_err)?;
        let m = &self.motion;
        let positive = [
            m.d_plan,
            m.omega_plan,
            m.d_knot,
            m.omega_knot,
            m.linear_slow_speed,
            m.linear_fast_speed,
        ];
        if !positive.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Config("motion parameters must be positive".into()));
        }
        let radius_ok = |r: f64| r > 0.0 && r.is_finite();
        let radii = self.table1.radii.iter().chain(&self.delay_sweep.radii);
        if !radii
            .copied()
            .chain([
                self.scenario.radius,
                self.vrel_study.radius,
                self.baseline.radius,
                self.tune.radius,
            ])
            .all(radius_ok)
        {
            return Err(Error::Config("gate radii must be positive".into()));
        }
        for h in &self.table1.configs {
            self.with_hyper(h.k_pn, h.gamma_bar_deg)
                .validate()
                .map_err(config_err)?;
        }
        for d in &self.delay_sweep.delays {
            let mut p = self.perception;
            p.delay = *d;
            p.validate().map_err(config_err)?;
        }
        if self.vrel_study.v_rel_bars.iter().any(|v| !(*v > 0.0)) || !(self.vrel_study.d_knot > 0.0)
        {
            return Err(Error::Config(
                "vrel study speeds and d_knot must be positive".into(),
            ));
        }
        if self.vrel_study.distances.iter().any(|d| !(*d > 0.0)) || !(self.vrel_study.timeout > 0.0)
        {
            return Err(Error::Config(
                "vrel study distances and timeout must be positive".into(),
            ));
        }
        self.with_hyper(self.controller.k_pn, self.baseline.gamma_bar_deg)
            .validate()
            .map_err(config_err)?;
        if self.baseline.gate_speeds.iter().any(|v| !(*v > 0.0))
            || !(self.baseline.initial_speed >= 0.0)
        {
            return Err(Error::Config("baseline speeds must be positive".into()));
        }
        let space = self.tune.space();
        space.validate().map_err(config_err)?;
        if space.gamma_bar_deg.1 > self.camera.gamma_cam_deg {
            return Err(Error::Config(
                "tuning range for gamma_bar exceeds the camera angle".into(),
            ));
        }
        if self.tune.iterations == 0 || self.tune.runs_per_motion == 0 || !(self.tune.beta >= 0.0) {
            return Err(Error::Config(
                "tune needs iterations ≥ 1, runs_per_motion ≥ 1 and beta ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// Simulation settings for the nominal controller.
    pub fn sim_config(&self) -> SimConfig {
        let c = &self.controller;
        let v = &self.vehicle;
        SimConfig {
            controller: ControllerConfig {
                gamma_bar: c.gamma_bar_deg.to_radians(),
                gamma_cam: self.camera.gamma_cam_deg.to_radians(),
                f_th_bar: c.f_th_bar,
                pn: PnConfig {
                    k_pn: c.k_pn,
                    v_rel_bar: c.v_rel_bar,
                },
            },
            camera: CameraModel::from_fov(
                self.camera.width,
                self.camera.height,
                self.camera.gamma_cam_deg.to_radians(),
            ),
            perception: self.perception,
            vehicle: VehicleParams {
                mass: v.mass,
                tau_omega: v.tau_omega,
                tau_att: v.tau_att,
                f_th_max_newtons: v.f_th_max_newtons,
                drag_coeff: v.drag_coeff,
                gravity: Vector3::new(0.0, 0.0, -GRAVITY),
            },
            wind: WindField {
                v_wind: Vector3::from(v.wind),
            },
            dt: self.sim.dt,
            timeout: self.sim.timeout,
            rim_width: self.sim.rim_width,
            max_lost_ticks: self.sim.max_lost_ticks,
            relative_speed: if c.perfect_v_rel {
                RelativeSpeed::Perfect
            } else {
                RelativeSpeed::Fixed
            },
            log: self.trajectories,
        }
    }

    /// Nominal settings with other guidance hyperparameters.
    pub fn with_hyper(&self, k_pn: f64, gamma_bar_deg: f64) -> SimConfig {
        let mut s = self.sim_config();
        s.controller.pn.k_pn = k_pn;
        s.controller.gamma_bar = gamma_bar_deg.to_radians();
        s
    }
}
