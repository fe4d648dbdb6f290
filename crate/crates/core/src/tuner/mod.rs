//! Bayesian optimization of the guidance hyperparameters.

pub mod campaign;
pub mod gp;

use argmin::core::CostFunction;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use campaign::{bo_campaign, Campaign};
pub use gp::{matern25, GpModel, Kernel};

/// `max(0, c_t / t_gate − c_d · d_center + c)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// s
    pub c_t: f64,
    /// 1/m
    pub c_d: f64,
    pub c: f64,
}

impl RewardConfig {
    /// Rewards fast, centered passes.
    pub const DISTANCE_TIME: RewardConfig = RewardConfig {
        c_t: 10.0,
        c_d: 3.0,
        c: 0.0,
    };
    /// Rewards centered passes only.
    pub const DISTANCE: RewardConfig = RewardConfig {
        c_t: 0.0,
        c_d: 5.0,
        c: 3.0,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.c_t, self.c_d, self.c]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "reward weights must be finite and non-negative".into(),
            ))
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::DISTANCE_TIME
    }
}

pub fn reward(cfg: &RewardConfig, t_gate: f64, d_center: f64) -> f64 {
    let time = if cfg.c_t == 0.0 {
        0.0
    } else {
        cfg.c_t / t_gate
    };
    (time - cfg.c_d * d_center + cfg.c).max(0.0)
}

/// Box over (k_pn, γ̄ in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub k_pn: (f64, f64),
    pub gamma_bar_deg: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            k_pn: (0.3, 3.0),
            gamma_bar_deg: (5.0, 30.0),
        }
    }
}

impl SearchSpace {
    pub fn point(k_pn: f64, gamma_bar_deg: f64) -> Self {
        Self {
            k_pn: (k_pn, k_pn),
            gamma_bar_deg: (gamma_bar_deg, gamma_bar_deg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.k_pn) || !ok(self.gamma_bar_deg) {
            return Err(Error::InvalidArgument(
                "search bounds must be finite with lo ≤ hi".into(),
            ));
        }
        if self.k_pn.0 <= 0.0 || self.gamma_bar_deg.0 <= 0.0 || self.gamma_bar_deg.1 >= 90.0 {
            return Err(Error::InvalidArgument(
                "k_pn must be positive and γ̄ within (0°, 90°)".into(),
            ));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.k_pn.0 == self.k_pn.1 && self.gamma_bar_deg.0 == self.gamma_bar_deg.1
    }

    /// Map a unit-square point to (k_pn, γ̄ degrees), clamping into the box.
    pub fn from_unit(&self, u: [f64; 2]) -> (f64, f64) {
        let lerp = |(lo, hi): (f64, f64), s: f64| lo + (hi - lo) * s.clamp(0.0, 1.0);
        (lerp(self.k_pn, u[0]), lerp(self.gamma_bar_deg, u[1]))
    }

    pub fn to_unit(&self, k_pn: f64, gamma_bar_deg: f64) -> [f64; 2] {
        let inv = |(lo, hi): (f64, f64), v: f64| {
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            }
        };
        [inv(self.k_pn, k_pn), inv(self.gamma_bar_deg, gamma_bar_deg)]
    }
}

/// The 2-D Sobol sequence without its leading origin point.
#[derive(Debug, Clone, Default)]
pub struct Sobol2 {
    n: u32,
    x: [u32; 2],
}

impl Sobol2 {
    pub fn new() -> Self {
        Self::default()
    }

    fn direction(dim: usize, bit: u32) -> u32 {
        match dim {
            0 => 1u32 << (31 - bit),
            _ => {
                let mut v = 1u32 << 31;
                for _ in 0..bit {
                    v ^= v >> 1;
                }
                v
            }
        }
    }
}

impl Iterator for Sobol2 {
    type Item = [f64; 2];

    fn next(&mut self) -> Option<[f64; 2]> {
        if self.n == u32::MAX {
            return None;
        }
        let c = self.n.trailing_ones();
        for d in 0..2 {
            self.x[d] ^= Self::direction(d, c);
        }
        self.n += 1;
        let scale = 1.0 / 4294967296.0;
        Some([self.x[0] as f64 * scale, self.x[1] as f64 * scale])
    }
}

pub const DEFAULT_BETA: f64 = 4.0;
pub const INIT_POINTS: usize = 4;
const GRID: usize = 200;
const REFINE_STARTS: usize = 5;

/// Upper confidence bound `mean + √β · std`.
pub fn ucb(model: Option<&GpModel>, x: [f64; 2], beta: f64) -> f64 {
    let (m, v) = gp::posterior_of(model, &x);
    m + beta.sqrt() * v.sqrt()
}

/// Maximize the UCB over the unit square: grid scan, then Nelder-Mead from
/// the best grid cells. Without observations the first Sobol point is used.
pub fn ucb_next(model: Option<&GpModel>, beta: f64) -> [f64; 2] {
    let Some(model) = model.filter(|m| !m.is_empty()) else {
        return Sobol2::new().next().unwrap_or([0.5, 0.5]);
    };
    let step = 1.0 / (GRID - 1) as f64;
    let mut scored: Vec<(f64, [f64; 2])> = Vec::with_capacity(GRID * GRID);
    for i in 0..GRID {
        for j in 0..GRID {
            let x = [i as f64 * step, j as f64 * step];
            scored.push((ucb(Some(model), x, beta), x));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored[0];
    let problem = NegUcb { model, beta };
    for &(_, start) in scored.iter().take(REFINE_STARTS) {
        let simplex = vec![
            start.to_vec(),
            vec![start[0] + step, start[1]],
            vec![start[0], start[1] + step],
        ];
        if let Ok((x, _)) = gp::nelder_mead_simplex(problem, simplex, 100) {
            let x = clamp_unit(&x);
            let val = ucb(Some(model), x, beta);
            if val > best.0 {
                best = (val, x);
            }
        }
    }
    best.1
}

fn clamp_unit(x: &[f64]) -> [f64; 2] {
    [x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)]
}

#[derive(Clone, Copy)]
struct NegUcb<'a> {
    model: &'a GpModel,
    beta: f64,
}

impl CostFunction for NegUcb<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let c = clamp_unit(x);
        let out: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(-ucb(Some(self.model), c, self.beta) + 1e3 * out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoSettings {
    /// Total evaluations, including the initial design.
    pub iterations: usize,
    pub init_points: usize,
    pub beta: f64,
    pub seed: u64,
}

impl BoSettings {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            init_points: INIT_POINTS,
            beta: DEFAULT_BETA,
            seed,
        }
    }
}

/// One evaluated point in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: [f64; 2],
    pub y: f64,
}

/// Index of the best observation.
pub fn best_index(history: &[Observation]) -> Option<usize> {
    (0..history.len()).reduce(|a, b| if history[b].y > history[a].y { b } else { a })
}

/// Sequentially maximize `f` over the unit square. `f` receives the iteration
/// index and the proposed point.
pub fn maximize<F>(mut f: F, settings: &BoSettings) -> Result<Vec<Observation>>
where
    F: FnMut(usize, [f64; 2]) -> Result<f64>,
{
    let mut history: Vec<Observation> = Vec::with_capacity(settings.iterations);
    let mut sobol = Sobol2::new();
    for it in 0..settings.iterations {
        let x = if it < settings.init_points {
            sobol.next().unwrap_or([0.5, 0.5])
        } else {
            let xs = history.iter().map(|o| o.x.to_vec()).collect();
            let ys = history.iter().map(|o| o.y).collect();
            let model = GpModel::fit(xs, ys, crate::mix_seed(settings.seed, it as u64, 0))?;
            ucb_next(Some(&model), settings.beta)
        };
        let y = f(it, x)?;
        history.push(Observation { x, y });
    }
    Ok(history)
}
